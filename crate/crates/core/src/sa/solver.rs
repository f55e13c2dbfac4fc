//! Solver for `max_{μ ∈ SA_{r+k}} Ẽ[f + h] + H̃_r(μ)`.
//!
//! For a fixed entropy set `S` the objective `Ẽ[f + h] + H(X_S) + Σ_i H(X_i|X_S)`
//! is concave in the pseudo-distribution. It is maximized by Frank-Wolfe with
//! away steps, using the LP over the polytope as the linear oracle; `S` is then
//! re-chosen as the minimizer of the pseudo-entropy at the current point and the
//! process repeats until `S` is stable. For every `S` the value at the iterate
//! plus the Frank-Wolfe gap bounds the `S`-objective over the whole polytope,
//! which in turn bounds `F` because the pseudo-entropy at any `S` dominates the
//! true entropy of a genuine distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{decode_index, encode_index};
use crate::model::Mrf;

use super::family::{pseudo_entropy_min, LocalFamily, SearchMode};
use super::moments::MomentBasis;
use super::polytope::SaPolytope;

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_MAX_ROUNDS: usize = 8;
/// Clamp used for `log p` in Frank-Wolfe gradients.
pub const GRADIENT_CLAMP: f64 = 1e-12;
/// Weight of the uniform point mixed in before certifying at a boundary iterate.
const INTERIOR_MIX: f64 = 1e-9;
const LINE_SEARCH_STEPS: usize = 60;
/// Pairwise steps between active atoms after each oracle call.
const LOCAL_STEPS: usize = 200;
/// Alternation rounds stop at this multiple of `eps`; only the best entropy
/// set is then refined to `eps`.
const COARSE_FACTOR: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaOptions {
    pub eps: f64,
    pub max_iters: usize,
    pub max_rounds: usize,
}

impl Default for SaOptions {
    fn default() -> Self {
        Self { eps: DEFAULT_EPS, max_iters: DEFAULT_MAX_ITERS, max_rounds: DEFAULT_MAX_ROUNDS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaSolveReport {
    pub family: LocalFamily,
    /// Certified `S`-objective bound: iterate value plus Frank-Wolfe gap.
    pub upper_bound: f64,
    /// `Ẽ[f + h] + H̃_r` evaluated at the returned family.
    pub family_value: f64,
    pub chosen_entropy_set: Vec<usize>,
    pub entropy_search: SearchMode,
    pub iterations: usize,
    pub lp_pivots: usize,
    pub rounds: usize,
    pub duality_gap_estimate: f64,
    pub tolerance: f64,
    pub r_entropy: usize,
    pub level: usize,
    pub converged: bool,
    /// Objective value after every Frank-Wolfe step, per round.
    #[serde(skip)]
    pub trace: Vec<Vec<f64>>,
}

/// `c·y + c0 + H(X_S) + Σ_{i∉S} H(X_i | X_S)` in moment coordinates.
///
/// Conditional terms are evaluated through the ratio `μ_{S∪i} / μ_S`, which
/// keeps values and derivatives bounded near the boundary of the polytope.
struct Objective<'a> {
    basis: &'a MomentBasis,
    c: Vec<f64>,
    c0: f64,
    s: Vec<usize>,
    /// `(S ∪ {i}, index of the S-cell for each cell of S ∪ {i})`.
    extended: Vec<(Vec<usize>, Vec<usize>)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

impl<'a> Objective<'a> {
    fn new(basis: &'a MomentBasis, c: Vec<f64>, c0: f64, s: &[usize]) -> Self {
        let q = basis.q();
        let mut extended = Vec::new();
        let mut letters = vec![0usize; s.len() + 1];
        let mut reduced = Vec::with_capacity(s.len());
        for i in (0..basis.n()).filter(|i| !s.contains(i)) {
            let mut si = s.to_vec();
            si.push(i);
            si.sort_unstable();
            let pos = si.iter().position(|&v| v == i).expect("i is in S ∪ {i}");
            let parent = (0..q.pow(si.len() as u32))
                .map(|idx| {
                    decode_index(idx, q, si.len(), &mut letters);
                    reduced.clear();
                    reduced.extend(letters.iter().enumerate().filter(|&(p, _)| p != pos).map(|(_, &a)| a));
                    encode_index(&reduced, q)
                })
                .collect();
            extended.push((si, parent));
        }
        Self { basis, c, c0, s: s.to_vec(), extended }
    }

    fn base_marginal(&self, y: &[f64]) -> Vec<f64> {
        if self.s.is_empty() {
            vec![1.0]
        } else {
            self.basis.marginal(y, &self.s)
        }
    }

    fn base_linear(&self, d: &[f64]) -> Vec<f64> {
        if self.s.is_empty() {
            vec![0.0]
        } else {
            self.basis.marginal_linear(d, &self.s)
        }
    }

    fn value(&self, y: &[f64]) -> f64 {
        let ps = self.base_marginal(y);
        let mut v = dot(&self.c, y) + self.c0 - ps.iter().map(|&p| xlogx(p)).sum::<f64>();
        for (si, parent) in &self.extended {
            let pe = self.basis.marginal(y, si);
            for (x, &p) in pe.iter().enumerate() {
                let b = ps[parent[x]];
                if p > 0.0 && b > 0.0 {
                    v -= p * (p / b).min(1.0).ln();
                }
            }
        }
        v
    }

    /// Gradient with every logarithm argument clamped below at `clamp`.
    fn gradient(&self, y: &[f64], clamp: f64) -> Vec<f64> {
        let mut g = self.c.clone();
        let ps = self.base_marginal(y);
        if !self.s.is_empty() {
            let w: Vec<f64> = ps.iter().map(|&p| -p.max(clamp).ln()).collect();
            self.basis.adjoint_into(&self.s, &w, &mut g);
        }
        for (si, parent) in &self.extended {
            let pe = self.basis.marginal(y, si);
            let w: Vec<f64> = pe
                .iter()
                .enumerate()
                .map(|(x, &p)| {
                    let b = ps[parent[x]];
                    let r = if b > 0.0 { (p / b).min(1.0) } else { 1.0 / self.basis.q() as f64 };
                    -r.max(clamp).ln()
                })
                .collect();
            self.basis.adjoint_into(si, &w, &mut g);
        }
        g
    }

    fn min_entropy_cell(&self, y: &[f64]) -> f64 {
        self.extended
            .iter()
            .flat_map(|(u, _)| self.basis.marginal(y, u))
            .fold(f64::INFINITY, f64::min)
    }

    /// Maximizes `γ ↦ value(y + γ d)` on `[0, γ_max]` by bisection on the derivative.
    fn line_search(&self, y: &[f64], d: &[f64], gamma_max: f64) -> f64 {
        let lin = dot(&self.c, d);
        let ps = self.base_marginal(y);
        let ds = self.base_linear(d);
        let tables: Vec<(Vec<f64>, Vec<f64>, &Vec<usize>)> = self
            .extended
            .iter()
            .map(|(u, parent)| (self.basis.marginal(y, u), self.basis.marginal_linear(d, u), parent))
            .collect();
        let deriv = |g: f64| {
            let base: Vec<f64> = ps.iter().zip(&ds).map(|(a, b)| a + g * b).collect();
            let mut v = lin;
            for (b, db) in base.iter().zip(&ds) {
                if *db != 0.0 {
                    v -= db * b.max(1e-300).ln();
                }
            }
            for (p, dp, parent) in &tables {
                for (x, (a, db)) in p.iter().zip(dp).enumerate() {
                    let den = base[parent[x]];
                    if *db == 0.0 || den <= 0.0 {
                        continue;
                    }
                    let r = ((a + g * db) / den).clamp(1e-300, 1.0);
                    v -= db * r.ln();
                }
            }
            v
        };
        if deriv(gamma_max) >= 0.0 {
            return gamma_max;
        }
        if deriv(0.0) <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, gamma_max);
        for _ in 0..LINE_SEARCH_STEPS {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

#[derive(Clone)]
struct Atom {
    y: Vec<f64>,
    w: f64,
}

#[derive(Clone)]
struct FwState {
    atoms: Vec<Atom>,
    y: Vec<f64>,
}

impl FwState {
    fn normalize(&mut self) {
        let total: f64 = self.atoms.iter().map(|a| a.w).sum();
        for a in self.atoms.iter_mut() {
            a.w /= total;
        }
        self.recompute();
    }

    fn recompute(&mut self) {
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for a in &self.atoms {
            for (yj, aj) in self.y.iter_mut().zip(&a.y) {
                *yj += a.w * aj;
            }
        }
    }
}

struct RoundResult {
    certificate: f64,
    gap: f64,
    iterations: usize,
    pivots: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn frank_wolfe(
    poly: &mut SaPolytope,
    obj: &Objective<'_>,
    state: &mut FwState,
    opts: &SaOptions,
) -> Result<RoundResult> {
    let mut trace = vec![obj.value(&state.y)];
    let mut iterations = 0;
    let mut converged = false;
    let mut last_gap = f64::INFINITY;
    let mut pivots = 0;
    while iterations < opts.max_iters {
        let grad = obj.gradient(&state.y, GRADIENT_CLAMP);
        let (out, s) = poly.maximize(&grad)?;
        pivots += out.pivots;
        let gy = dot(&grad, &state.y);
        let fw_gap = dot(&grad, &s) - gy;
        last_gap = fw_gap;
        if fw_gap <= opts.eps / 2.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let (away_idx, away_val) = state
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (i, dot(&grad, &a.y)))
            .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
        let away_gap = gy - away_val;
        let use_away = away_gap > fw_gap && state.atoms.len() > 1;
        if use_away {
            let alpha = state.atoms[away_idx].w;
            let gamma_max = alpha / (1.0 - alpha);
            let d: Vec<f64> = state.y.iter().zip(&state.atoms[away_idx].y).map(|(a, b)| a - b).collect();
            let gamma = obj.line_search(&state.y, &d, gamma_max);
            for a in state.atoms.iter_mut() {
                a.w *= 1.0 + gamma;
            }
            state.atoms[away_idx].w -= gamma;
            if gamma >= gamma_max || state.atoms[away_idx].w <= 1e-15 {
                state.atoms.remove(away_idx);
            }
        } else {
            let d: Vec<f64> = s.iter().zip(&state.y).map(|(a, b)| a - b).collect();
            let gamma = obj.line_search(&state.y, &d, 1.0);
            if gamma >= 1.0 {
                state.atoms = vec![Atom { y: s, w: 1.0 }];
            } else if gamma > 0.0 {
                for a in state.atoms.iter_mut() {
                    a.w *= 1.0 - gamma;
                }
                let existing = state.atoms.iter().position(|a| {
                    a.y.iter().zip(&s).all(|(x, z)| (x - z).abs() <= 1e-12)
                });
                match existing {
                    Some(i) => state.atoms[i].w += gamma,
                    None => state.atoms.push(Atom { y: s, w: gamma }),
                }
            }
        }
        state.normalize();
        trace.push(obj.value(&state.y));
        // cheap pairwise steps inside the active set before the next oracle call
        for _ in 0..LOCAL_STEPS {
            if state.atoms.len() < 2 {
                break;
            }
            let grad = obj.gradient(&state.y, GRADIENT_CLAMP);
            let scores: Vec<f64> = state.atoms.iter().map(|a| dot(&grad, &a.y)).collect();
            let hi = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).expect("nonempty");
            let lo = (0..scores.len()).min_by(|&a, &b| scores[a].total_cmp(&scores[b])).expect("nonempty");
            if scores[hi] - scores[lo] <= 0.25 * fw_gap.max(opts.eps) {
                break;
            }
            let gamma_max = state.atoms[lo].w;
            let d: Vec<f64> = state.atoms[hi].y.iter().zip(&state.atoms[lo].y).map(|(a, b)| a - b).collect();
            let gamma = obj.line_search(&state.y, &d, gamma_max);
            if gamma <= 0.0 {
                break;
            }
            state.atoms[hi].w += gamma;
            state.atoms[lo].w -= gamma;
            if gamma >= gamma_max || state.atoms[lo].w <= 1e-15 {
                state.atoms.remove(lo);
            }
            state.normalize();
            trace.push(obj.value(&state.y));
        }
    }
    // certificate: value + gap with the exact (unclamped) gradient at an interior point
    let value = obj.value(&state.y);
    let certificate = if obj.min_entropy_cell(&state.y) >= GRADIENT_CLAMP && converged {
        value + last_gap.max(0.0)
    } else {
        let u = poly.moment_basis().uniform_point();
        let yc: Vec<f64> = state
            .y
            .iter()
            .zip(&u)
            .map(|(a, b)| (1.0 - INTERIOR_MIX) * a + INTERIOR_MIX * b)
            .collect();
        let grad = obj.gradient(&yc, 0.0);
        let (out, s) = poly.maximize(&grad)?;
        pivots += out.pivots;
        let gap = dot(&grad, &s) - dot(&grad, &yc);
        last_gap = gap;
        obj.value(&yc) + gap.max(0.0)
    };
    if !certificate.is_finite() {
        return Err(Error::Internal("non-finite SA certificate".into()));
    }
    Ok(RoundResult { certificate, gap: last_gap, iterations, pivots, converged, trace })
}

/// Solves the relaxation at level `r_entropy + k` with default options.
pub fn solve_sa(model: &Mrf, r_entropy: usize, eps: f64) -> Result<SaSolveReport> {
    solve_sa_with(model, r_entropy, &SaOptions { eps, ..SaOptions::default() })
}

pub fn solve_sa_with(model: &Mrf, r_entropy: usize, opts: &SaOptions) -> Result<SaSolveReport> {
    if !(opts.eps > 0.0) || !opts.eps.is_finite() {
        return Err(Error::InvalidInput("eps must be a positive finite number".into()));
    }
    let level = r_entropy + model.k();
    if level > model.n() {
        return Err(Error::InvalidInput(format!(
            "level r_entropy + k = {level} exceeds n = {}",
            model.n()
        )));
    }
    let mut poly = SaPolytope::new(model.n(), model.q(), level)?;
    let (c, c0) = poly.energy_functional(model)?;
    let basis = poly.moment_basis().clone();
    let uniform = basis.uniform_point();
    let mut state = FwState { atoms: vec![Atom { y: uniform.clone(), w: 1.0 }], y: uniform };

    let coarse = SaOptions { eps: opts.eps * COARSE_FACTOR, ..*opts };
    let mut s: Vec<usize> = Vec::new();
    // (certificate, gap, S, state after the round, converged)
    let mut best: Option<(f64, f64, Vec<usize>, FwState, bool)> = None;
    let mut iterations = 0;
    let mut lp_pivots = 0;
    let mut rounds = 0;
    let mut trace = Vec::new();
    let mut mode = SearchMode::Exhaustive;
    let mut seen: Vec<Vec<usize>> = Vec::new();
    for _ in 0..opts.max_rounds.max(1) {
        rounds += 1;
        let obj = Objective::new(&basis, c.clone(), c0, &s);
        let res = frank_wolfe(&mut poly, &obj, &mut state, &coarse)?;
        iterations += res.iterations;
        lp_pivots += res.pivots;
        trace.push(res.trace);
        if best.as_ref().map_or(true, |b| res.certificate < b.0) {
            best = Some((res.certificate, res.gap, s.clone(), state.clone(), res.converged));
        }
        let fam = poly.family_of(&state.y)?;
        let (_, next, m) = pseudo_entropy_min(&fam, r_entropy)?;
        mode = m;
        seen.push(std::mem::replace(&mut s, next));
        if seen.contains(&s) {
            break;
        }
    }
    let (mut upper_bound, mut gap, chosen, mut fine_state, _) = best.expect("at least one round");
    rounds += 1;
    let obj = Objective::new(&basis, c.clone(), c0, &chosen);
    let res = frank_wolfe(&mut poly, &obj, &mut fine_state, opts)?;
    iterations += res.iterations;
    lp_pivots += res.pivots;
    trace.push(res.trace);
    let converged = res.converged;
    if res.certificate < upper_bound {
        upper_bound = res.certificate;
        gap = res.gap;
    }
    let y = fine_state.y;
    let family = poly.family_of(&y)?;
    let energy = super::family::pseudo_expectation_energy(&family, model)?;
    let (h_min, _, _) = pseudo_entropy_min(&family, r_entropy)?;
    Ok(SaSolveReport {
        family,
        upper_bound,
        family_value: energy + h_min,
        chosen_entropy_set: chosen,
        entropy_search: mode,
        iterations,
        lp_pivots,
        rounds,
        duality_gap_estimate: gap,
        tolerance: opts.eps,
        r_entropy,
        level,
        converged,
        trace,
    })
}
