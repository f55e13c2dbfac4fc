//! Mean-field variational free energy: objective, fixed-point iteration,
//! coordinate ascent, and local-field diagnostics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{JointDistribution, ProductDistribution};
use crate::error::{invalid, Error, Result};
use crate::info::{binary_entropy, entropy_of_probs};
use crate::linalg::schatten4;
use crate::model::{IsingModel, Mrf};
use crate::rng::child_rng;
use crate::util::{decode_index, CompensatedSum};

pub const DEFAULT_DAMPING: f64 = 0.5;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_RESTARTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSolution {
    pub product: ProductDistribution,
    /// `F_ν = E_ν[f + h] + H(ν)`.
    pub objective: f64,
    /// Per-vertex mean-field-equation violation at the returned point.
    pub residual: Vec<f64>,
    pub restarts_used: usize,
    pub converged: bool,
}

fn check_product(model: &Mrf, nu: &ProductDistribution) -> Result<()> {
    if nu.n() != model.n() || nu.q() != model.q() {
        return Err(Error::ScopeMismatch(format!(
            "product over {} vertices (q={}) does not fit a model with n={}, q={}",
            nu.n(),
            nu.q(),
            model.n(),
            model.q()
        )));
    }
    Ok(())
}

/// `E_ν[f + h] + Σ_i H(ν_i)` under the product measure.
pub fn mf_objective(model: &Mrf, nu: &ProductDistribution) -> Result<f64> {
    check_product(model, nu)?;
    Ok(objective_unchecked(model, nu.marginals()))
}

fn objective_unchecked(model: &Mrf, marg: &[Vec<f64>]) -> f64 {
    let q = model.q();
    let mut acc = CompensatedSum::new();
    let mut letters = vec![0usize; model.k()];
    for e in model.edges() {
        for (idx, &f) in e.table.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            decode_index(idx, q, e.vertices.len(), &mut letters);
            let w: f64 = e
                .vertices
                .iter()
                .zip(&letters)
                .map(|(&v, &a)| marg[v][a])
                .product();
            acc.add(w * f);
        }
    }
    for (h, m) in model.fields().iter().zip(marg) {
        for (a, b) in h.iter().zip(m) {
            acc.add(a * b);
        }
        acc.add(entropy_of_probs(m));
    }
    acc.value()
}

/// Ising form `Σ_{i<j} J_ij x_i x_j + Σ h_i x_i + Σ H((1+x_i)/2)` on spin means.
pub fn ising_objective(model: &IsingModel, x: &[f64]) -> f64 {
    let mut e = model.energy_spins(x);
    for &xi in x {
        e += binary_entropy(((1.0 + xi) / 2.0).clamp(0.0, 1.0)).unwrap_or(0.0);
    }
    e
}

/// `|x_i − tanh(J_i·x + h_i)|` for every vertex.
pub fn mf_residual(model: &IsingModel, x: &[f64]) -> Result<Vec<f64>> {
    check_spins(model, x)?;
    Ok(model
        .local_fields(x)
        .iter()
        .zip(x)
        .map(|(l, xi)| (xi - l.tanh()).abs())
        .collect())
}

fn check_spins(model: &IsingModel, x: &[f64]) -> Result<()> {
    if x.len() != model.n() {
        return invalid(format!("spin vector has {} entries, expected {}", x.len(), model.n()));
    }
    if x.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return invalid("spin means must lie in [-1, 1]");
    }
    Ok(())
}

fn spin_solution(model: &IsingModel, x: Vec<f64>, converged: bool) -> Result<MeanFieldSolution> {
    let residual = mf_residual(model, &x)?;
    let objective = ising_objective(model, &x);
    Ok(MeanFieldSolution {
        product: ProductDistribution::from_spin_means(&x)?,
        objective,
        residual,
        restarts_used: 1,
        converged,
    })
}

/// Damped fixed-point iteration `x ← (1−d) x + d tanh(Jx + h)`.
pub fn mf_iterate(
    model: &IsingModel,
    x0: &[f64],
    damping: f64,
    max_iters: usize,
    tol: f64,
) -> Result<MeanFieldSolution> {
    check_spins(model, x0)?;
    if !(damping > 0.0 && damping <= 1.0) {
        return invalid("damping must lie in (0, 1]");
    }
    let mut x = x0.to_vec();
    let mut converged = false;
    for _ in 0..max_iters {
        let fields = model.local_fields(&x);
        let mut delta = 0.0f64;
        for (xi, l) in x.iter_mut().zip(&fields) {
            let next = (1.0 - damping) * *xi + damping * l.tanh();
            delta = delta.max((next - *xi).abs());
            *xi = next;
        }
        if delta < tol {
            converged = true;
            break;
        }
    }
    spin_solution(model, x, converged)
}

/// Expected potential at vertex `i` for each letter, other vertices drawn from `marg`.
fn local_mean_field(model: &Mrf, incidence: &[Vec<usize>], marg: &[Vec<f64>], i: usize) -> Vec<f64> {
    let q = model.q();
    let mut phi = model.fields()[i].clone();
    let mut letters = vec![0usize; model.k()];
    for &e in &incidence[i] {
        let edge = &model.edges()[e];
        let pos = edge.vertices.iter().position(|&v| v == i).expect("incident");
        for (idx, &f) in edge.table.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            decode_index(idx, q, edge.vertices.len(), &mut letters);
            let mut w = 1.0;
            for (p, (&v, &a)) in edge.vertices.iter().zip(&letters).enumerate() {
                if p != pos {
                    w *= marg[v][a];
                }
            }
            phi[letters[pos]] += w * f;
        }
    }
    phi
}

fn softmax(phi: &[f64]) -> Vec<f64> {
    let max = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = phi.iter().map(|p| (p - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Round-robin exact coordinate ascent on the product marginals. Each update
/// replaces `ν_i` by the softmax of its local mean field, the exact maximizer
/// of the objective in that block.
pub fn coordinate_ascent(
    model: &Mrf,
    start: &ProductDistribution,
    max_sweeps: usize,
    tol: f64,
) -> Result<(ProductDistribution, bool)> {
    check_product(model, start)?;
    let incidence = model.incidence();
    let mut marg = start.marginals().to_vec();
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut delta = 0.0f64;
        for i in 0..model.n() {
            let next = softmax(&local_mean_field(model, &incidence, &marg, i));
            for (a, b) in next.iter().zip(&marg[i]) {
                delta = delta.max((a - b).abs());
            }
            marg[i] = next;
        }
        if delta < tol {
            converged = true;
            break;
        }
    }
    Ok((ProductDistribution::new(marg)?, converged))
}

/// Per-vertex residual of the general-q stationarity condition `ν_i = softmax(φ_i)`.
fn general_residual(model: &Mrf, marg: &[Vec<f64>]) -> Vec<f64> {
    let incidence = model.incidence();
    (0..model.n())
        .map(|i| {
            softmax(&local_mean_field(model, &incidence, marg, i))
                .iter()
                .zip(&marg[i])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

fn random_start<R: Rng>(n: usize, q: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            // exponential weights give a uniform point on the simplex
            let w: Vec<f64> = (0..q).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect()
        })
        .collect()
}

/// Best product distribution over `restarts` starts: start 0 is the uniform
/// (all-zeros) point, start `i ≥ 1` is drawn from the child stream `(seed, i)`.
/// Binary pairwise models run the damped fixed-point iteration first, then every
/// start is polished by coordinate ascent. Ties keep the earliest start.
pub fn mf_optimize(model: &Mrf, restarts: usize, seed: u64) -> Result<MeanFieldSolution> {
    if restarts == 0 {
        return invalid("restarts must be at least 1");
    }
    let (n, q) = (model.n(), model.q());
    let ising = model.to_ising();
    let runs: Vec<Result<(f64, ProductDistribution, bool)>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                ProductDistribution::uniform(n, q)
            } else {
                let mut rng = child_rng(seed, r as u64);
                match &ising {
                    Some(_) => {
                        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
                        ProductDistribution::from_spin_means(&x)?
                    }
                    None => ProductDistribution::new(random_start(n, q, &mut rng))?,
                }
            };
            let start = match &ising {
                Some((im, _)) => {
                    let sol = mf_iterate(im, &start.spin_means(), DEFAULT_DAMPING, DEFAULT_MAX_ITERS, DEFAULT_TOL)?;
                    sol.product
                }
                None => start,
            };
            let (prod, conv) = coordinate_ascent(model, &start, DEFAULT_MAX_ITERS, DEFAULT_TOL)?;
            let obj = objective_unchecked(model, prod.marginals());
            Ok((obj, prod, conv))
        })
        .collect();
    let mut best: Option<(f64, ProductDistribution, bool)> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().map_or(true, |b| run.0 > b.0) {
            best = Some(run);
        }
    }
    let (objective, product, converged) = best.expect("restarts >= 1");
    let residual = match &ising {
        Some((im, _)) => mf_residual(im, &product.spin_means().iter().map(|v| v.clamp(-1.0, 1.0)).collect::<Vec<_>>())?,
        None => general_residual(model, product.marginals()),
    };
    Ok(MeanFieldSolution { product, objective, residual, restarts_used: restarts, converged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFieldVariance {
    /// `Var(J_i · X)` under μ.
    pub per_vertex: Vec<f64>,
    pub average: f64,
    /// `‖J‖_{s4}² sqrt(E_{j,k} Cov(X_j,X_k)²)` over all `n²` ordered pairs.
    pub bound: f64,
}

pub const LOCAL_FIELD_MAX_N: usize = 12;

/// Exact local-field variances `Var(J_i · X) = Σ_{j,k} J_ij J_ik Cov(X_j, X_k)`.
pub fn local_field_variance(model: &IsingModel, mu: &JointDistribution) -> Result<LocalFieldVariance> {
    let n = model.n();
    if mu.arity() != n || mu.q() != 2 {
        return Err(Error::ScopeMismatch("μ must be a binary table over the model's vertices".into()));
    }
    if n > LOCAL_FIELD_MAX_N {
        return Err(Error::SizeLimit {
            what: "local field variance",
            needed: n as u128,
            cap: LOCAL_FIELD_MAX_N as u128,
        });
    }
    let (_, cov) = mu.spin_covariance()?;
    let j = model.couplings();
    let per_vertex: Vec<f64> = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    acc += j.get(i, a) * j.get(i, b) * cov[a][b];
                }
            }
            acc.max(0.0)
        })
        .collect();
    let average = per_vertex.iter().sum::<f64>() / n as f64;
    let mean_sq = cov.iter().flatten().map(|c| c * c).sum::<f64>() / (n * n) as f64;
    let bound = schatten4(j).powi(2) * mean_sq.sqrt();
    Ok(LocalFieldVariance { per_vertex, average, bound })
}
