//! Free-energy estimation from random vertex subsets with median amplification.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exact::{ExactOracle, DEFAULT_CAP};
use crate::model::{HyperEdge, Mrf};
use crate::rng::child_rng;
use crate::rounding::sa_meanfield_with_cap;
use crate::util::median;

/// The `k`-MRF induced on `q_set` with interaction tables scaled by
/// `(n/s)^{k−1}`; fields are restricted without rescaling.
pub fn induce_rescaled(model: &Mrf, q_set: &[usize]) -> Result<Mrf> {
    let n = model.n();
    let mut qs = q_set.to_vec();
    qs.sort_unstable();
    qs.dedup();
    if qs.len() != q_set.len() {
        return invalid("subset contains repeated vertices");
    }
    if qs.iter().any(|&v| v >= n) {
        return invalid("subset references a vertex outside the model");
    }
    let s = qs.len();
    if s < model.k() {
        return invalid(format!("subset size {s} is below the interaction order {}", model.k()));
    }
    let scale = (n as f64 / s as f64).powi(model.k() as i32 - 1);
    let mut index = vec![usize::MAX; n];
    for (i, &v) in qs.iter().enumerate() {
        index[v] = i;
    }
    let edges = model
        .edges()
        .iter()
        .filter(|e| e.vertices.iter().all(|&v| index[v] != usize::MAX))
        .map(|e| HyperEdge {
            vertices: e.vertices.iter().map(|&v| index[v]).collect(),
            table: e.table.iter().map(|x| x * scale).collect(),
        })
        .collect();
    let fields = qs.iter().map(|&v| model.fields()[v].clone()).collect();
    Mrf::new(s, model.q(), model.k(), edges, fields)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Inner {
    Exact,
    /// Midpoint of the relaxation sandwich on each subsample.
    Pipeline { r_entropy: usize, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub s: usize,
    /// Defaults to `ceil(48 ln(1/δ))`; even counts are bumped by one.
    pub repetitions: Option<usize>,
    pub delta: f64,
    pub seed: u64,
    pub inner: Inner,
    /// Accuracy parameter used only to evaluate the reported error template.
    pub template_eps: f64,
    pub cap: u128,
}

impl SubsampleConfig {
    pub fn new(s: usize, delta: f64, seed: u64) -> Self {
        Self { s, repetitions: None, delta, seed, inner: Inner::Exact, template_eps: 0.1, cap: DEFAULT_CAP }
    }
}

/// Components of `C_q k⁴ ε (n^{k/2} ‖J‖_F + ε n^k ‖J‖_∞ + ω n/s)` with
/// `ω = k⁷ log(1/ε)/ε⁸`; the constant `C_q` is unknown and left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTemplate {
    pub eps: f64,
    pub frobenius_term: f64,
    pub sup_term: f64,
    pub omega: f64,
    pub omega_term: f64,
    /// `k⁴ ε (sum of the three terms)`, i.e. the bound divided by `C_q`.
    pub bound_over_cq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleEstimate {
    /// Median of `values`.
    pub estimate: f64,
    pub s: usize,
    pub repetitions: usize,
    /// `(n/s) F_Q` per repetition, in repetition order.
    pub values: Vec<f64>,
    pub delta: f64,
    pub template: ErrorTemplate,
}

pub fn default_repetitions(delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid("delta must lie in (0, 1)");
    }
    Ok(((48.0 * (1.0 / delta).ln()).ceil() as usize).max(1))
}

/// Median over independent uniform `s`-subsets of `(n/s) F_Q`.
pub fn subsample_estimate(model: &Mrf, cfg: &SubsampleConfig) -> Result<SubsampleEstimate> {
    let n = model.n();
    if cfg.s > n || cfg.s < model.k() || cfg.s == 0 {
        return invalid(format!("s = {} must lie in [{}, {n}]", cfg.s, model.k().max(1)));
    }
    let mut reps = match cfg.repetitions {
        Some(0) => return invalid("repetitions must be at least 1"),
        Some(r) => r,
        None => default_repetitions(cfg.delta)?,
    };
    if reps % 2 == 0 {
        reps += 1;
    }
    if !(cfg.template_eps > 0.0 && cfg.template_eps < 1.0) {
        return invalid("template_eps must lie in (0, 1)");
    }
    if cfg.inner == Inner::Exact {
        let need = crate::util::checked_pow(model.q(), cfg.s).unwrap_or(u128::MAX);
        if need > cfg.cap {
            return Err(Error::SizeLimit { what: "subsample enumeration (q^s)", needed: need, cap: cfg.cap });
        }
    }
    let ratio = n as f64 / cfg.s as f64;
    let values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = child_rng(cfg.seed, r as u64);
            let q_set = sample(&mut rng, n, cfg.s).into_vec();
            let sub = induce_rescaled(model, &q_set)?;
            let f = match cfg.inner {
                Inner::Exact => ExactOracle::with_cap(cfg.cap).free_energy(&sub)?,
                Inner::Pipeline { r_entropy, eps } => {
                    let rep = sa_meanfield_with_cap(&sub, r_entropy, eps, cfg.cap)?;
                    0.5 * (rep.lower + rep.upper)
                }
            };
            Ok(ratio * f)
        })
        .collect::<Result<_>>()?;
    let k = model.k() as f64;
    let e = cfg.template_eps;
    let omega = k.powi(7) * (1.0 / e).ln() / e.powi(8);
    let frobenius_term = (n as f64).powf(k / 2.0) * model.interaction_norm();
    let sup_term = e * (n as f64).powf(k) * model.interaction_sup_norm();
    let omega_term = omega * ratio;
    let template = ErrorTemplate {
        eps: e,
        frobenius_term,
        sup_term,
        omega,
        omega_term,
        bound_over_cq: k.powi(4) * e * (frobenius_term + sup_term + omega_term),
    };
    Ok(SubsampleEstimate {
        estimate: median(&values),
        s: cfg.s,
        repetitions: reps,
        values,
        delta: cfg.delta,
        template,
    })
}
