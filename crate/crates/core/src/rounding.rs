//! Correlation rounding: choosing a pinning set, extracting conditional product
//! distributions, and the SA + rounding pipeline.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{EntropyCache, MarginalSource, ProductDistribution};
use crate::error::{invalid, Error, Result};
use crate::exact::{ExactOracle, DEFAULT_CAP};
use crate::info::entropy_of_probs;
use crate::meanfield::mf_objective;
use crate::model::{IsingModel, Mrf};
use crate::rng::rng_from_seed;
use crate::sa::{solve_sa, SaSolveReport};
use crate::util::{binomial, complement, decode_index, k_subsets, sorted_union};

/// Branches `x_S` with probability at most this are skipped.
pub const BRANCH_TOL: f64 = 1e-14;
/// Sweeps enumerate every `t`-subset when `C(n, t)` is at most this.
pub const SWEEP_EXHAUSTIVE_LIMIT: f64 = 5000.0;
pub const SWEEP_SAMPLES: usize = 2000;
/// Slack on the asserted correlation bounds.
pub const BOUND_SLACK: f64 = 1e-9;
/// Slack on the asserted free-energy sandwich.
pub const SANDWICH_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Sweep,
    Greedy,
}

impl std::str::FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sweep" => Ok(Self::Sweep),
            "greedy" => Ok(Self::Greedy),
            _ => invalid(format!("unknown selection mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub mode: SelectionMode,
    /// Seed for sampled sweeps.
    pub seed: u64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self { mode: SelectionMode::Sweep, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchWeight {
    pub assignment: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub chosen_set: Vec<usize>,
    pub t: usize,
    pub ell: usize,
    pub k: usize,
    /// `k² log q / ℓ`.
    pub bound: f64,
    pub bound_met: bool,
    /// `E_{F∼C(V−S,k)} C(X_F | X_S)` at the chosen set.
    pub avg_total_correlation: f64,
    /// Sweep only: the average of the above over all (or sampled) `t`-subsets.
    pub avg_over_sets: Option<f64>,
    /// Binary only: `E_{x_S} E_{u<v} Cov(X_u, X_v | x_S)²` over all pairs of `V`.
    pub avg_cov_sq: Option<f64>,
    pub branch_weights: Vec<BranchWeight>,
    pub mode: SelectionMode,
    pub sampled: bool,
    pub samples: Option<usize>,
}

fn avg_total_correlation<M: MarginalSource + ?Sized>(
    cache: &mut EntropyCache<'_, M>,
    n: usize,
    k: usize,
    s: &[usize],
) -> Result<f64> {
    let rest = complement(n, s);
    let mut total = 0.0;
    let mut count = 0usize;
    for f in crate::util::subsets_of(&rest, k) {
        total += cache.total_correlation(&f, s)?.max(0.0);
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

fn branch_weights<M: MarginalSource + ?Sized>(src: &M, s: &[usize]) -> Result<Vec<BranchWeight>> {
    if s.is_empty() {
        return Ok(vec![BranchWeight { assignment: Vec::new(), weight: 1.0 }]);
    }
    let table = src.marginal_of(s)?;
    let mut letters = vec![0usize; s.len()];
    Ok(table
        .probs()
        .iter()
        .enumerate()
        .map(|(idx, &p)| {
            decode_index(idx, src.alphabet(), s.len(), &mut letters);
            BranchWeight { assignment: letters.clone(), weight: p }
        })
        .collect())
}

/// Picks a pinning set `S` with `|S| ≤ ℓ` whose average conditional total
/// correlation over `k`-sets meets `k² log q / ℓ`.
///
/// The sweep scans `t = 0..ℓ` and stops at the first `t` where some `t`-set
/// meets the bound, returning the best set at that size. The greedy mode adds
/// the vertex with the largest drop until the bound is met or `|S| = ℓ`.
pub fn select_conditioning_set<M: MarginalSource + Sync + ?Sized>(
    src: &M,
    ell: usize,
    k: usize,
    opts: &SelectOptions,
) -> Result<ConditioningReport> {
    let n = src.num_vertices();
    let q = src.alphabet();
    if k == 0 {
        return invalid("k must be at least 1");
    }
    if ell + k > n {
        return invalid(format!("ℓ + k = {} exceeds n = {n}", ell + k));
    }
    if ell + k > src.max_marginal_size() {
        return Err(Error::LevelTooSmall { needed: ell + k, level: src.max_marginal_size() });
    }
    let bound = if ell == 0 { f64::INFINITY } else { (k * k) as f64 * (q as f64).ln() / ell as f64 };
    let (chosen, value, avg_over_sets, sampled, samples) = match opts.mode {
        SelectionMode::Sweep => {
            let mut rng = rng_from_seed(opts.seed);
            let mut result = None;
            let mut sampled_any = false;
            for t in 0..=ell {
                let exhaustive = binomial(n, t) <= SWEEP_EXHAUSTIVE_LIMIT;
                let sets: Vec<Vec<usize>> = if exhaustive {
                    k_subsets(n, t)
                } else {
                    sampled_any = true;
                    (0..SWEEP_SAMPLES)
                        .map(|_| {
                            let mut v = sample(&mut rng, n, t).into_vec();
                            v.sort_unstable();
                            v
                        })
                        .collect()
                };
                let values: Vec<f64> = sets
                    .par_iter()
                    .map(|s| avg_total_correlation(&mut EntropyCache::new(src), n, k, s))
                    .collect::<Result<_>>()?;
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let (best_idx, best_val) = values
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
                let last = t == ell;
                if best_val <= bound + BOUND_SLACK || last {
                    result = Some((sets[best_idx].clone(), best_val, Some(mean)));
                    break;
                }
            }
            let (s, v, m) = result.expect("the sweep always returns at t = ℓ");
            (s, v, m, sampled_any, sampled_any.then_some(SWEEP_SAMPLES))
        }
        SelectionMode::Greedy => {
            let mut cache = EntropyCache::new(src);
            let mut s: Vec<usize> = Vec::new();
            let mut value = avg_total_correlation(&mut cache, n, k, &s)?;
            while value > bound + BOUND_SLACK && s.len() < ell {
                let mut step: Option<(f64, Vec<usize>)> = None;
                for v in 0..n {
                    if s.contains(&v) {
                        continue;
                    }
                    let cand = sorted_union(&s, &[v]);
                    let val = avg_total_correlation(&mut cache, n, k, &cand)?;
                    if step.as_ref().map_or(true, |(b, _)| val < *b) {
                        step = Some((val, cand));
                    }
                }
                let (val, cand) = step.expect("ℓ + k ≤ n leaves a free vertex");
                s = cand;
                value = val;
            }
            (s, value, None, false, None)
        }
    };
    let bound_met = value <= bound + BOUND_SLACK;
    if !bound_met && opts.mode == SelectionMode::Sweep && !sampled {
        return Err(Error::Internal(format!(
            "exhaustive sweep missed the correlation bound: {value} > {bound}"
        )));
    }
    let avg_cov_sq = if q == 2 && chosen.len() + 2 <= src.max_marginal_size() {
        Some(covariance_stats(src, &chosen)?.1)
    } else {
        None
    };
    Ok(ConditioningReport {
        t: chosen.len(),
        branch_weights: branch_weights(src, &chosen)?,
        chosen_set: chosen,
        ell,
        k,
        bound,
        bound_met,
        avg_total_correlation: value,
        avg_over_sets,
        avg_cov_sq,
        mode: opts.mode,
        sampled,
        samples,
    })
}

/// Largest `n` accepted by [`conditional_covariance_stats`].
pub const COV_STATS_MAX_N: usize = 14;

fn covariance_stats<M: MarginalSource + ?Sized>(src: &M, s: &[usize]) -> Result<(f64, f64)> {
    let n = src.num_vertices();
    if src.alphabet() != 2 {
        return invalid("conditional covariances need a binary alphabet");
    }
    if n < 2 {
        return Ok((0.0, 0.0));
    }
    let rest = complement(n, s);
    let m = s.len();
    let (mut abs_acc, mut sq_acc) = (0.0, 0.0);
    for pair in crate::util::subsets_of(&rest, 2) {
        let (u, v) = (pair[0], pair[1]);
        let vars = sorted_union(s, &pair);
        let table = src.marginal_of(&vars)?;
        let pu = vars.iter().position(|&x| x == u).expect("u is in vars");
        let pv = vars.iter().position(|&x| x == v).expect("v is in vars");
        // gather the 2×2 conditional tables by x_S
        let mut blocks = vec![[0.0f64; 4]; 1 << m];
        let mut letters = vec![0usize; m + 2];
        for (idx, &p) in table.probs().iter().enumerate() {
            decode_index(idx, 2, m + 2, &mut letters);
            let mut key = 0usize;
            for (pos, &a) in letters.iter().enumerate() {
                if pos != pu && pos != pv {
                    key = key * 2 + a;
                }
            }
            blocks[key][letters[pu] * 2 + letters[pv]] += p;
        }
        for b in &blocks {
            let w: f64 = b.iter().sum();
            if w <= BRANCH_TOL {
                continue;
            }
            let c: Vec<f64> = b.iter().map(|x| x / w).collect();
            let (a0, b0) = (c[0] + c[1], c[0] + c[2]);
            let delta = c[0] - a0 * b0;
            let cov = 4.0 * delta;
            // |Cov| = 2·TV(joint, product of its marginals) for ±1 spins
            let tv = 0.5
                * [(0, a0 * b0), (1, a0 * (1.0 - b0)), (2, (1.0 - a0) * b0), (3, (1.0 - a0) * (1.0 - b0))]
                    .iter()
                    .map(|&(i, pr)| (c[i] - pr).abs())
                    .sum::<f64>();
            if (cov.abs() - 2.0 * tv).abs() > 1e-9 {
                return Err(Error::Internal(format!("covariance/TV identity failed: {cov} vs {tv}")));
            }
            abs_acc += w * cov.abs();
            sq_acc += w * cov * cov;
        }
    }
    let pairs = binomial(n, 2);
    Ok((abs_acc / pairs, sq_acc / pairs))
}

/// `(E_{x_S} E_{u<v} |Cov(X_u,X_v|x_S)|, E_{x_S} E_{u<v} Cov(X_u,X_v|x_S)²)`,
/// averaged over all unordered pairs of the vertex set (pairs touching `S`
/// contribute zero). Spins use the ±1 encoding.
pub fn conditional_covariance_stats<M: MarginalSource + ?Sized>(mu: &M, s: &[usize]) -> Result<(f64, f64)> {
    let n = mu.num_vertices();
    if n > COV_STATS_MAX_N {
        return Err(Error::SizeLimit {
            what: "conditional covariance statistics",
            needed: n as u128,
            cap: COV_STATS_MAX_N as u128,
        });
    }
    if s.iter().any(|&v| v >= n) {
        return invalid("conditioning set references a vertex outside the source");
    }
    covariance_stats(mu, s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub assignment: Vec<usize>,
    pub weight: f64,
    pub product: ProductDistribution,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundedOutput {
    pub conditioning_set: Vec<usize>,
    pub candidates: Vec<Candidate>,
    pub skipped_branches: usize,
    /// `H(X_S)` under the source.
    pub entropy_of_set: f64,
    pub best: Option<usize>,
    pub mixture_value: Option<f64>,
}

impl RoundedOutput {
    pub fn best_candidate(&self) -> Option<&Candidate> {
        self.best.map(|b| &self.candidates[b])
    }
}

/// One product per branch `x_S` of positive mass, matching the conditional
/// single-vertex marginals off `S` and pinned to `x_S` on `S`.
pub fn round_to_products<M: MarginalSource + ?Sized>(src: &M, s: &[usize]) -> Result<RoundedOutput> {
    let n = src.num_vertices();
    let q = src.alphabet();
    let mut s = s.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.iter().any(|&v| v >= n) {
        return invalid("conditioning set references a vertex outside the source");
    }
    if s.len() + 1 > src.max_marginal_size() && s.len() < n {
        return Err(Error::LevelTooSmall { needed: s.len() + 1, level: src.max_marginal_size() });
    }
    let weights = branch_weights(src, &s)?;
    let rest = complement(n, &s);
    // tables over S ∪ {i}, reshaped as [x_S][x_i]
    let mut cond = Vec::with_capacity(rest.len());
    for &i in &rest {
        let vars = sorted_union(&s, &[i]);
        let table = src.marginal_of(&vars)?;
        let pos = vars.iter().position(|&v| v == i).expect("i is in vars");
        let mut blocks = vec![vec![0.0; q]; weights.len()];
        let mut letters = vec![0usize; vars.len()];
        for (idx, &p) in table.probs().iter().enumerate() {
            decode_index(idx, q, vars.len(), &mut letters);
            let mut key = 0usize;
            for (k, &a) in letters.iter().enumerate() {
                if k != pos {
                    key = key * q + a;
                }
            }
            blocks[key][letters[pos]] += p;
        }
        cond.push(blocks);
    }
    let mut candidates = Vec::new();
    let mut skipped = 0;
    for (b, bw) in weights.iter().enumerate() {
        if bw.weight <= BRANCH_TOL {
            skipped += 1;
            continue;
        }
        let mut marg = vec![Vec::new(); n];
        for (k, &v) in s.iter().enumerate() {
            let mut m = vec![0.0; q];
            m[bw.assignment[k]] = 1.0;
            marg[v] = m;
        }
        for (r, &i) in rest.iter().enumerate() {
            let row: Vec<f64> = cond[r][b].iter().map(|p| p.max(0.0)).collect();
            let z: f64 = row.iter().sum();
            marg[i] = if z > 0.0 { row.iter().map(|p| p / z).collect() } else { vec![1.0 / q as f64; q] };
        }
        candidates.push(Candidate {
            assignment: bw.assignment.clone(),
            weight: bw.weight,
            product: ProductDistribution::new(marg)?,
            objective: None,
        });
    }
    let w: Vec<f64> = weights.iter().map(|b| b.weight.max(0.0)).collect();
    Ok(RoundedOutput {
        conditioning_set: s,
        candidates,
        skipped_branches: skipped,
        entropy_of_set: entropy_of_probs(&w),
        best: None,
        mixture_value: None,
    })
}

/// Scores every candidate with the mean-field objective, picks the best
/// (lowest index on ties) and evaluates the mixture
/// `Σ P(x_S) F_{ν_{x_S}} + H(X_S)`.
pub fn best_product(model: &Mrf, mut out: RoundedOutput) -> Result<RoundedOutput> {
    if out.candidates.is_empty() {
        return invalid("no candidates to choose from");
    }
    let scores: Vec<f64> = out
        .candidates
        .par_iter()
        .map(|c| mf_objective(model, &c.product))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    let mut mixture = out.entropy_of_set;
    for (c, &v) in out.candidates.iter_mut().zip(&scores) {
        c.objective = Some(v);
        mixture += c.weight * v;
    }
    out.best = Some(best);
    out.mixture_value = Some(mixture);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub free_energy: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
    pub upper_gap_within_bound: bool,
    pub lower_gap_within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// `F_ν` of the best rounded product.
    pub lower: f64,
    /// Certified relaxation value `F_SA`.
    pub upper: f64,
    pub gap: f64,
    pub product: ProductDistribution,
    pub conditioning: ConditioningReport,
    pub mixture_value: f64,
    pub sa: SaSolveReport,
    /// `sqrt(4 log q / r) · k n^{k/2} ‖J‖_F / sqrt(k!) + ε`, bounding `F_SA − F`.
    pub upper_gap_bound: f64,
    /// The above plus `r log q`, bounding `F − F_ν`.
    pub lower_gap_bound: f64,
    pub check: Option<SandwichCheck>,
}

/// Relaxation, pinning, rounding. When the model is small enough for exact
/// enumeration the sandwich `F_ν ≤ F ≤ F_SA` is checked and a violation is an
/// error.
pub fn sa_meanfield(model: &Mrf, r_entropy: usize, eps: f64) -> Result<PipelineReport> {
    sa_meanfield_with_cap(model, r_entropy, eps, DEFAULT_CAP)
}

pub fn sa_meanfield_with_cap(model: &Mrf, r_entropy: usize, eps: f64, cap: u128) -> Result<PipelineReport> {
    if r_entropy == 0 {
        return invalid("r_entropy must be at least 1");
    }
    let sa = solve_sa(model, r_entropy, eps)?;
    let conditioning = select_conditioning_set(&sa.family, r_entropy, model.k(), &SelectOptions::default())?;
    let rounded = best_product(model, round_to_products(&sa.family, &conditioning.chosen_set)?)?;
    let best = rounded.best_candidate().expect("best_product sets best");
    let lower = best.objective.expect("scored");
    let upper = sa.upper_bound;
    let logq = (model.q() as f64).ln();
    let upper_gap_bound = (4.0 * logq / r_entropy as f64).sqrt() * model.bound_scale() + eps;
    let lower_gap_bound = upper_gap_bound + r_entropy as f64 * logq;
    let oracle = ExactOracle::with_cap(cap);
    let check = match oracle.free_energy(model) {
        Ok(f) => {
            let c = SandwichCheck {
                free_energy: f,
                lower_holds: lower <= f + SANDWICH_SLACK,
                upper_holds: f <= upper + SANDWICH_SLACK,
                upper_gap_within_bound: upper - f <= upper_gap_bound,
                lower_gap_within_bound: f - lower <= lower_gap_bound,
            };
            if !c.lower_holds || !c.upper_holds {
                return Err(Error::Internal(format!(
                    "sandwich violated: lower {lower}, F {f}, upper {upper}"
                )));
            }
            Some(c)
        }
        Err(Error::SizeLimit { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(PipelineReport {
        lower,
        upper,
        gap: upper - lower,
        product: best.product.clone(),
        mixture_value: rounded.mixture_value.expect("scored"),
        conditioning,
        sa,
        upper_gap_bound,
        lower_gap_bound,
        check,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub product: ProductDistribution,
    pub free_energy: f64,
    /// `F_ν` of the witness.
    pub lower: f64,
    pub gap: f64,
    /// `3 n^{2/3} ‖J‖_F^{2/3}`.
    pub bound: f64,
    pub within_bound: bool,
    pub eps: Option<f64>,
    pub ell: usize,
    pub chosen_set: Vec<usize>,
    /// The point mass at a maximum-energy configuration beat the rounded product.
    pub used_fallback: bool,
}

/// Constructive mean-field witness: pin a set chosen on the exact Gibbs measure
/// with `ε = (n ‖J‖_F)^{−1/3}`, `ℓ = round(1 / (ε² log 2))` clamped to
/// `[0, n − 2]`, and take the best conditional product. The maximum-energy point
/// mass is kept as a fallback for the regime where the bound exceeds `n log 2`.
pub fn theorem1_witness(model: &IsingModel) -> Result<WitnessReport> {
    let n = model.n();
    let mrf = model.to_mrf();
    let oracle = ExactOracle::default();
    let energies = oracle.energies(&mrf)?;
    let free_energy = crate::util::log_sum_exp(&energies);
    let jf = model.frobenius_norm();
    let bound = 3.0 * (n as f64).powf(2.0 / 3.0) * jf.powf(2.0 / 3.0);
    let (eps, ell) = if jf > 0.0 && n >= 2 {
        let eps = (n as f64 * jf).powf(-1.0 / 3.0);
        let raw = (1.0 / (eps * eps * 2f64.ln())).round();
        (Some(eps), (raw.max(0.0) as usize).min(n - 2))
    } else {
        (None, 0)
    };
    let (rounded, chosen_set) = if n >= 2 {
        let gibbs = oracle.gibbs(&mrf)?;
        let cond = select_conditioning_set(&gibbs, ell, 2, &SelectOptions::default())?;
        let out = best_product(&mrf, round_to_products(&gibbs, &cond.chosen_set)?)?;
        let best = out.best_candidate().expect("scored").clone();
        (Some(best), cond.chosen_set)
    } else {
        (None, Vec::new())
    };
    let (arg, &emax) = energies
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |b, (i, e)| if e > b.1 { (i, e) } else { b });
    let mut letters = vec![0usize; n];
    decode_index(arg, 2, n, &mut letters);
    let (product, lower, used_fallback) = match rounded {
        Some(c) if c.objective.expect("scored") >= emax => (c.product, c.objective.expect("scored"), false),
        _ => (ProductDistribution::point_mass(&letters, 2), emax, true),
    };
    let gap = free_energy - lower;
    Ok(WitnessReport {
        product,
        free_energy,
        lower,
        gap,
        bound,
        within_bound: gap <= bound + BOUND_SLACK,
        eps,
        ell,
        chosen_set,
        used_fallback,
    })
}
