//! Sherrington-Kirkpatrick experiments and conditional-covariance sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exact::{ExactOracle, DEFAULT_CAP};
use crate::linalg::{spectral_norm, SPECTRAL_TOL};
use crate::meanfield::{mf_optimize, DEFAULT_RESTARTS};
use crate::model::{sk_normalized_matrix, IsingModel, Noise};
use crate::rng::{child_seed, rng_from_seed};
use crate::rounding::sa_meanfield_with_cap;
use crate::util::{decode_index, k_subsets};

/// Replica-symmetric free-energy density `log 2 + β²/4`.
pub fn rs_prediction(beta: f64) -> f64 {
    2f64.ln() + beta * beta / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkMethod {
    Exact,
    Sandwich,
}

impl std::str::FromStr for SkMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "sandwich" => Ok(Self::Sandwich),
            _ => invalid(format!("unknown method {s:?}")),
        }
    }
}

/// Exact mode accepts `n` up to this.
pub const SK_EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkConfig {
    pub n: usize,
    pub beta: f64,
    pub trials: usize,
    pub noise: Noise,
    pub seed: u64,
    pub method: SkMethod,
    /// Mean-field restarts per trial.
    pub restarts: usize,
    /// Sandwich mode only.
    pub r_entropy: usize,
    pub eps: f64,
    pub cap: u128,
}

impl SkConfig {
    pub fn new(n: usize, beta: f64, trials: usize, noise: Noise, seed: u64, method: SkMethod) -> Self {
        Self {
            n,
            beta,
            trials,
            noise,
            seed,
            method,
            restarts: DEFAULT_RESTARTS,
            r_entropy: 2,
            eps: 1e-3,
            cap: DEFAULT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkTrial {
    pub trial: usize,
    pub seed: u64,
    /// Exact `F/n`.
    pub free_energy_density: Option<f64>,
    /// Sandwich bounds on `F/n`.
    pub lower_density: Option<f64>,
    pub upper_density: Option<f64>,
    /// `F*/n` from mean-field optimization.
    pub mean_field_density: f64,
    /// Spectral norm of the normalized matrix `(√n/β) J`.
    pub spectral_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

fn summarize(v: &[f64]) -> Summary {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Summary { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkExperimentResult {
    pub config: SkConfig,
    pub trials: Vec<SkTrial>,
    /// Exact mode: `F/n`; sandwich mode: midpoint of the bounds.
    pub free_energy_density: Summary,
    pub mean_field_density: Summary,
    pub spectral_norm: Summary,
    pub rs_prediction: f64,
}

/// Runs `trials` independent SK samples; trial `i` uses `child_seed(seed, i)`.
pub fn sk_experiment(cfg: &SkConfig) -> Result<SkExperimentResult> {
    if cfg.trials == 0 {
        return invalid("trials must be at least 1");
    }
    if cfg.n < 2 {
        return invalid("SK experiments need n >= 2");
    }
    if !(cfg.beta >= 0.0) || !cfg.beta.is_finite() {
        return invalid("beta must be a finite nonnegative number");
    }
    if cfg.method == SkMethod::Exact && cfg.n > SK_EXACT_MAX_N {
        return Err(Error::SizeLimit { what: "exact SK trials (n)", needed: cfg.n as u128, cap: SK_EXACT_MAX_N as u128 });
    }
    let n = cfg.n as f64;
    let trials: Vec<SkTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = child_seed(cfg.seed, trial as u64);
            let g = sk_normalized_matrix(cfg.n, cfg.noise, &mut rng_from_seed(seed));
            let model = IsingModel::new(g.scaled(cfg.beta), vec![0.0; cfg.n])?.to_mrf();
            let mf = mf_optimize(&model, cfg.restarts, seed)?;
            let (exact, lower, upper) = match cfg.method {
                SkMethod::Exact => (Some(ExactOracle::with_cap(cfg.cap).free_energy(&model)? / n), None, None),
                SkMethod::Sandwich => {
                    let rep = sa_meanfield_with_cap(&model, cfg.r_entropy, cfg.eps, cfg.cap)?;
                    (None, Some(rep.lower / n), Some(rep.upper / n))
                }
            };
            Ok(SkTrial {
                trial,
                seed,
                free_energy_density: exact,
                lower_density: lower,
                upper_density: upper,
                mean_field_density: mf.objective / n,
                spectral_norm: spectral_norm(&g, SPECTRAL_TOL)?,
            })
        })
        .collect::<Result<_>>()?;
    let f: Vec<f64> = trials
        .iter()
        .map(|t| match t.free_energy_density {
            Some(v) => v,
            None => 0.5 * (t.lower_density.unwrap_or(f64::NAN) + t.upper_density.unwrap_or(f64::NAN)),
        })
        .collect();
    let mf: Vec<f64> = trials.iter().map(|t| t.mean_field_density).collect();
    let sn: Vec<f64> = trials.iter().map(|t| t.spectral_norm).collect();
    Ok(SkExperimentResult {
        config: *cfg,
        free_energy_density: summarize(&f),
        mean_field_density: summarize(&mf),
        spectral_norm: summarize(&sn),
        rs_prediction: rs_prediction(cfg.beta),
        trials,
    })
}

pub const KAPPA_MAX_N: usize = 14;
pub const KAPPA_MAX_T: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSweepResult {
    pub n: usize,
    pub t_values: Vec<usize>,
    /// `min_{|S| ≤ t} E_{x_S} E_{i<j} |Cov(X_i, X_j | X_S)|`.
    pub values: Vec<f64>,
    /// `√t` times the above.
    pub scaled: Vec<f64>,
    /// A minimizing set for each `t`.
    pub argmin: Vec<Vec<usize>>,
}

/// `E_{x_S} E_{i<j} |Cov(X_i, X_j | x_S)|` from spin-encoded Gibbs weights,
/// accumulating conditional first and second moments per branch in one pass.
fn avg_abs_conditional_cov(probs: &[f64], spins: &[Vec<f64>], n: usize, s: &[usize]) -> f64 {
    let buckets = 1usize << s.len();
    let mut mass = vec![0.0; buckets];
    let mut first = vec![0.0; buckets * n];
    let mut second = vec![0.0; buckets * n * n];
    for (idx, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut key = 0usize;
        for &v in s {
            key = key * 2 + ((idx >> (n - 1 - v)) & 1);
        }
        let x = &spins[idx];
        mass[key] += p;
        let f = &mut first[key * n..(key + 1) * n];
        for (fi, xi) in f.iter_mut().zip(x) {
            *fi += p * xi;
        }
        let sec = &mut second[key * n * n..(key + 1) * n * n];
        for i in 0..n {
            let pi = p * x[i];
            for j in i + 1..n {
                sec[i * n + j] += pi * x[j];
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let mut total = 0.0;
    for b in 0..buckets {
        let w = mass[b];
        if w <= 0.0 {
            continue;
        }
        let f = &first[b * n..(b + 1) * n];
        let sec = &second[b * n * n..(b + 1) * n * n];
        let mut acc = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                acc += (sec[i * n + j] / w - (f[i] / w) * (f[j] / w)).abs();
            }
        }
        total += w * acc / pairs;
    }
    total
}

/// For each `t ≤ t_max`, the minimum over `|S| ≤ t` of the average absolute
/// conditional covariance under the exact Gibbs measure.
pub fn kappa_sweep(model: &IsingModel, t_max: usize) -> Result<KappaSweepResult> {
    let n = model.n();
    if n > KAPPA_MAX_N {
        return Err(Error::SizeLimit { what: "kappa sweep (n)", needed: n as u128, cap: KAPPA_MAX_N as u128 });
    }
    if t_max > KAPPA_MAX_T {
        return Err(Error::SizeLimit { what: "kappa sweep (t_max)", needed: t_max as u128, cap: KAPPA_MAX_T as u128 });
    }
    if n < 2 {
        return invalid("kappa sweep needs n >= 2");
    }
    if t_max > n - 2 {
        return invalid(format!("t_max must be at most n − 2 = {}", n - 2));
    }
    let gibbs = ExactOracle::default().gibbs(&model.to_mrf())?;
    let mut letters = vec![0usize; n];
    let spins: Vec<Vec<f64>> = (0..gibbs.len())
        .map(|idx| {
            decode_index(idx, 2, n, &mut letters);
            letters.iter().map(|&a| crate::model::spin_of(a)).collect()
        })
        .collect();
    let mut values = Vec::with_capacity(t_max + 1);
    let mut argmin = Vec::with_capacity(t_max + 1);
    let mut best = (f64::INFINITY, Vec::new());
    for t in 0..=t_max {
        let sets = k_subsets(n, t);
        let vals: Vec<f64> = sets
            .par_iter()
            .map(|s| avg_abs_conditional_cov(gibbs.probs(), &spins, n, s))
            .collect();
        for (s, v) in sets.into_iter().zip(vals) {
            if v < best.0 {
                best = (v, s);
            }
        }
        values.push(best.0);
        argmin.push(best.1.clone());
    }
    let t_values: Vec<usize> = (0..=t_max).collect();
    let scaled = t_values.iter().zip(&values).map(|(&t, v)| (t as f64).sqrt() * v).collect();
    Ok(KappaSweepResult { n, t_values, values, scaled, argmin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sk_sample;

    #[test]
    fn rs_values() {
        assert_eq!(rs_prediction(0.0), 2f64.ln());
        assert!((rs_prediction(1.0) - 2f64.ln() - 0.25).abs() < 1e-15);
        assert!((rs_prediction(0.5) - 2f64.ln() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn infinite_temperature_trials() {
        let cfg = SkConfig { restarts: 5, ..SkConfig::new(6, 0.0, 3, Noise::Gaussian, 1, SkMethod::Exact) };
        let r = sk_experiment(&cfg).unwrap();
        for t in &r.trials {
            assert!((t.free_energy_density.unwrap() - 2f64.ln()).abs() < 1e-12);
            assert!((t.mean_field_density - 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn trials_are_seed_deterministic() {
        let cfg = SkConfig { restarts: 3, ..SkConfig::new(6, 0.8, 4, Noise::Rademacher, 7, SkMethod::Exact) };
        let a = sk_experiment(&cfg).unwrap();
        let b = sk_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        for t in &a.trials {
            assert!(t.free_energy_density.unwrap() >= t.mean_field_density - 1e-12);
        }
    }

    #[test]
    fn sweep_is_monotone_and_zero_without_couplings() {
        let z = sweep_of(&IsingModel::zero(6), 3);
        assert!(z.values.iter().all(|v| v.abs() < 1e-12));
        let m = sk_sample(8, 1.5, Noise::Gaussian, 2).unwrap();
        let r = sweep_of(&m, 3);
        for w in r.values.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(r.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn perfectly_correlated_block_drops_at_one() {
        let mut j = crate::linalg::Matrix::zeros(6);
        for a in 0..6 {
            for b in 0..6 {
                if a != b {
                    j.set(a, b, 30.0);
                }
            }
        }
        let m = IsingModel::new(j, vec![0.0; 6]).unwrap();
        let r = sweep_of(&m, 2);
        assert!(r.values[0] > 0.9);
        assert!(r.values[1] < 1e-10);
    }

    fn sweep_of(m: &IsingModel, t: usize) -> KappaSweepResult {
        kappa_sweep(m, t).unwrap()
    }
}
