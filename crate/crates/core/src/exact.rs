//! Brute-force enumeration oracle for the free energy and Gibbs measure.

use rayon::prelude::*;

use crate::distribution::JointDistribution;
use crate::error::{Error, Result};
use crate::model::Mrf;
use crate::util::{checked_pow, decode_index, CompensatedSum};

/// Default enumeration cap on `q^n`.
pub const DEFAULT_CAP: u128 = 1 << 24;

const CHUNK: usize = 1 << 12;

/// Enumeration oracle with a configurable cap on the number of configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactOracle {
    pub cap: u128,
}

impl Default for ExactOracle {
    fn default() -> Self {
        Self { cap: DEFAULT_CAP }
    }
}

impl ExactOracle {
    pub fn with_cap(cap: u128) -> Self {
        Self { cap }
    }

    fn check(&self, model: &Mrf) -> Result<usize> {
        let size = checked_pow(model.q(), model.n()).unwrap_or(u128::MAX);
        if size > self.cap {
            return Err(Error::SizeLimit {
                what: "configuration enumeration",
                needed: size,
                cap: self.cap,
            });
        }
        Ok(size as usize)
    }

    /// Energy of every configuration, in row-major order (vertex 0 most significant).
    pub fn energies(&self, model: &Mrf) -> Result<Vec<f64>> {
        let size = self.check(model)?;
        let (n, q) = (model.n(), model.q());
        let mut out = vec![0.0; size];
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let mut x = vec![0usize; n];
            for (o, slot) in chunk.iter_mut().enumerate() {
                decode_index(c * CHUNK + o, q, n, &mut x);
                *slot = model.energy_letters(&x);
            }
        });
        Ok(out)
    }

    /// `F = log Σ_x exp(energy(x))`.
    pub fn free_energy(&self, model: &Mrf) -> Result<f64> {
        let e = self.energies(model)?;
        Ok(log_partition(&e))
    }

    /// Gibbs table `P(x) = exp(energy(x) − F)` over scope `0..n`.
    pub fn gibbs(&self, model: &Mrf) -> Result<JointDistribution> {
        let e = self.energies(model)?;
        let f = log_partition(&e);
        let probs: Vec<f64> = e.par_iter().map(|&v| (v - f).exp()).collect();
        let total = probs.iter().sum::<f64>();
        let probs = probs.into_iter().map(|p| p / total).collect();
        JointDistribution::new((0..model.n()).collect(), model.q(), probs)
    }
}

fn log_partition(energies: &[f64]) -> f64 {
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = CompensatedSum::new();
    for &e in energies {
        acc.add((e - max).exp());
    }
    max + acc.value().ln()
}

pub fn exact_free_energy(model: &Mrf) -> Result<f64> {
    ExactOracle::default().free_energy(model)
}

pub fn exact_gibbs(model: &Mrf) -> Result<JointDistribution> {
    ExactOracle::default().gibbs(model)
}

/// `max_x energy(x)` by enumeration.
pub fn max_energy(model: &Mrf) -> Result<f64> {
    Ok(ExactOracle::default()
        .energies(model)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{curie_weiss, IsingModel};

    #[test]
    fn single_spin() {
        let m = Mrf::zero(1, 2, 2).unwrap();
        assert!((exact_free_energy(&m).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn two_spin_closed_form() {
        for beta in [0.0, 0.5, 1.0, 2.0] {
            let m = IsingModel::from_rows(vec![vec![0.0, beta], vec![beta, 0.0]], vec![0.0; 2])
                .unwrap()
                .to_mrf();
            let expect = (2.0 * beta.exp() + 2.0 * (-beta).exp()).ln();
            assert!((exact_free_energy(&m).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn gibbs_zero_and_aligned() {
        let z = Mrf::zero(3, 2, 2).unwrap();
        let g = exact_gibbs(&z).unwrap();
        assert!(g.probs().iter().all(|&p| (p - 0.125).abs() < 1e-15));
        let m = IsingModel::from_rows(vec![vec![0.0, 20.0], vec![20.0, 0.0]], vec![0.0; 2])
            .unwrap()
            .to_mrf();
        let g = exact_gibbs(&m).unwrap();
        assert!((g.probs()[0] - 0.5).abs() < 1e-12 && (g.probs()[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let m = curie_weiss(10, 1.0, 0.0).unwrap().to_mrf();
        let err = ExactOracle::with_cap(1000).free_energy(&m).unwrap_err();
        assert!(matches!(err, Error::SizeLimit { needed: 1024, .. }));
    }
}
