//! Information measures on explicit tables. All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::distribution::JointDistribution;
use crate::error::{invalid, Error, Result};
use crate::util::{binomial, decode_index, k_subsets};

/// Which quantity an [`InfoMeasure`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    Entropy,
    Kl,
    Tv,
    Mi,
    Mmi,
    TotalCorrelation,
}

/// A tagged information-theoretic value (nats; TV is unitless).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoMeasure {
    pub kind: MeasureKind,
    pub value: f64,
}

impl InfoMeasure {
    pub fn new(kind: MeasureKind, value: f64) -> Self {
        Self { kind, value }
    }

    /// Checks the sign/range invariants for the kinds that have them.
    pub fn is_consistent(&self) -> bool {
        match self.kind {
            MeasureKind::Entropy | MeasureKind::Kl | MeasureKind::TotalCorrelation => {
                self.value >= -1e-12
            }
            MeasureKind::Tv => self.value >= -1e-12 && self.value <= 1.0 + 1e-12,
            MeasureKind::Mi | MeasureKind::Mmi => !self.value.is_nan(),
        }
    }

    pub fn in_bits(&self) -> f64 {
        match self.kind {
            MeasureKind::Tv => self.value,
            _ => self.value / std::f64::consts::LN_2,
        }
    }
}

#[inline]
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

pub fn entropy_of_probs(probs: &[f64]) -> f64 {
    -probs.iter().map(|&p| plogp(p)).sum::<f64>()
}

/// `H(μ) = −Σ p log p`.
pub fn entropy(mu: &JointDistribution) -> f64 {
    entropy_of_probs(mu.probs())
}

pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("binary entropy needs p in [0, 1], got {p}"));
    }
    Ok(-plogp(p) - plogp(1.0 - p))
}

fn same_support(mu: &JointDistribution, nu: &JointDistribution) -> Result<()> {
    if mu.scope() != nu.scope() || mu.q() != nu.q() {
        return Err(Error::ScopeMismatch(format!(
            "scopes {:?} (q={}) and {:?} (q={}) differ",
            mu.scope(),
            mu.q(),
            nu.scope(),
            nu.q()
        )));
    }
    Ok(())
}

/// `KL(μ‖ν)`; `+∞` when μ puts mass where ν has none.
pub fn kl(mu: &JointDistribution, nu: &JointDistribution) -> Result<f64> {
    same_support(mu, nu)?;
    let mut acc = 0.0;
    for (&p, &r) in mu.probs().iter().zip(nu.probs()) {
        if p > 0.0 {
            if r <= 0.0 {
                return Ok(f64::INFINITY);
            }
            acc += p * (p / r).ln();
        }
    }
    Ok(acc.max(0.0))
}

/// `½ Σ |μ − ν|`.
pub fn tv(mu: &JointDistribution, nu: &JointDistribution) -> Result<f64> {
    same_support(mu, nu)?;
    Ok(0.5
        * mu
            .probs()
            .iter()
            .zip(nu.probs())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// `E[XY] − E[X]E[Y]` for a binary pair in the ±1 encoding.
pub fn covariance(mu: &JointDistribution) -> Result<f64> {
    if mu.arity() != 2 || mu.q() != 2 {
        return invalid("covariance needs a binary table over exactly two variables");
    }
    let p = mu.probs();
    // index = 2·a + b, spin(0) = +1
    let exy = p[0] - p[1] - p[2] + p[3];
    let ex = p[0] + p[1] - p[2] - p[3];
    let ey = p[0] - p[1] + p[2] - p[3];
    Ok(exy - ex * ey)
}

/// Entropies of every marginal of `mu`, indexed by the bitmask of scope positions.
pub(crate) fn subset_entropies(mu: &JointDistribution) -> Vec<f64> {
    let m = mu.arity();
    let q = mu.q();
    let mut out = vec![0.0; 1 << m];
    let mut letters = vec![0usize; m];
    for mask in 1usize..(1 << m) {
        let pos: Vec<usize> = (0..m).filter(|&b| mask >> b & 1 == 1).collect();
        let mut table = vec![0.0; q.pow(pos.len() as u32)];
        for (idx, &p) in mu.probs().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            decode_index(idx, q, m, &mut letters);
            let mut j = 0;
            for &b in &pos {
                j = j * q + letters[b];
            }
            table[j] += p;
        }
        out[mask] = entropy_of_probs(&table);
    }
    out
}

/// Mutual information `I(X_a; X_b)` between two scope positions.
pub fn mutual_information(mu: &JointDistribution, a: usize, b: usize) -> Result<f64> {
    if a >= mu.arity() || b >= mu.arity() || a == b {
        return invalid("mutual information needs two distinct scope positions");
    }
    let ha = entropy(&mu.marginal(&[mu.scope()[a]])?);
    let hb = entropy(&mu.marginal(&[mu.scope()[b]])?);
    let hab = entropy(&mu.marginal(&[mu.scope()[a], mu.scope()[b]])?);
    Ok(ha + hb - hab)
}

pub const MMI_MAX_SCOPE: usize = 12;

/// Multivariate mutual information `Σ_{m≥1} (−1)^{m−1} Σ_{|S|=m} H(X_S)` over the whole scope.
pub fn multivariate_mi(mu: &JointDistribution) -> Result<f64> {
    if mu.arity() > MMI_MAX_SCOPE {
        return Err(Error::SizeLimit {
            what: "multivariate MI scope",
            needed: mu.arity() as u128,
            cap: MMI_MAX_SCOPE as u128,
        });
    }
    let h = subset_entropies(mu);
    Ok((1usize..h.len())
        .map(|mask| {
            let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
            sign * h[mask]
        })
        .sum())
}

fn positions_mask(mu: &JointDistribution, set: &[usize]) -> Result<usize> {
    let mut mask = 0usize;
    for &v in set {
        let p = mu
            .scope()
            .iter()
            .position(|&s| s == v)
            .ok_or_else(|| Error::InvalidInput(format!("vertex {v} is not in the scope")))?;
        mask |= 1 << p;
    }
    Ok(mask)
}

/// Conditional multivariate mutual information
/// `I(X_R | X_S) = Σ_{∅≠T⊆R} (−1)^{|T|−1} H(X_T | X_S)`, with entropies indexed by position mask.
fn conditional_mmi_masks(h: &[f64], r: usize, s: usize) -> f64 {
    let mut acc = 0.0;
    let mut t = r;
    while t != 0 {
        let sign = if t.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        acc += sign * (h[t | s] - h[s]);
        t = (t - 1) & r;
    }
    acc
}

/// `C(X_F | X_S) = Σ_{i∈F} H(X_i|X_S) − H(X_F|X_S)`, given position masks.
fn total_correlation_masks(h: &[f64], f: usize, s: usize) -> f64 {
    let mut acc = 0.0;
    for b in 0..usize::BITS {
        if f >> b & 1 == 1 {
            acc += h[(1 << b) | s] - h[s];
        }
    }
    acc - (h[f | s] - h[s])
}

/// Conditional total correlation `C(X_F | X_S)` with F, S given as scope vertices.
pub fn total_correlation(mu: &JointDistribution, f: &[usize], s: &[usize]) -> Result<f64> {
    let fm = positions_mask(mu, f)?;
    let sm = positions_mask(mu, s)?;
    if fm.count_ones() as usize != f.len() || sm.count_ones() as usize != s.len() {
        return invalid("subsets must not repeat vertices");
    }
    // only the marginal over F ∪ S is needed
    let union: Vec<usize> = mu
        .scope()
        .iter()
        .enumerate()
        .filter(|(p, _)| (fm | sm) >> p & 1 == 1)
        .map(|(_, &v)| v)
        .collect();
    let sub = mu.marginal(&union)?;
    let h = subset_entropies(&sub);
    let fm = positions_mask(&sub, f)?;
    let sm = positions_mask(&sub, s)?;
    Ok(total_correlation_masks(&h, fm, sm).max(0.0))
}

/// Conditional multivariate MI `I(X_R | X_S)` with R, S given as scope vertices.
pub fn conditional_multivariate_mi(mu: &JointDistribution, r: &[usize], s: &[usize]) -> Result<f64> {
    let h = subset_entropies(mu);
    Ok(conditional_mmi_masks(&h, positions_mask(mu, r)?, positions_mask(mu, s)?))
}

pub const CORR_INFO_MAX_SCOPE: usize = 8;

/// Both sides of
/// `E_{F∼C(V,k)} C(X_F|X_S) = Σ_{r=2}^k C(k,r) (−1)^r E_{R∼C(V,r)} I(X_R|X_S)`.
pub fn corr_info_identity_check(mu: &JointDistribution, k: usize, s: &[usize]) -> Result<(f64, f64)> {
    let m = mu.arity();
    if m > CORR_INFO_MAX_SCOPE {
        return Err(Error::SizeLimit {
            what: "corr-info scope",
            needed: m as u128,
            cap: CORR_INFO_MAX_SCOPE as u128,
        });
    }
    if k < 1 || k > m {
        return invalid(format!("k must lie in [1, {m}]"));
    }
    let sm = positions_mask(mu, s)?;
    let h = subset_entropies(mu);
    let to_mask = |set: &[usize]| set.iter().fold(0usize, |acc, &p| acc | 1 << p);
    let fs = k_subsets(m, k);
    let lhs = fs
        .iter()
        .map(|f| total_correlation_masks(&h, to_mask(f), sm))
        .sum::<f64>()
        / fs.len() as f64;
    let mut rhs = 0.0;
    for r in 2..=k {
        let rs = k_subsets(m, r);
        let avg = rs
            .iter()
            .map(|set| conditional_mmi_masks(&h, to_mask(set), sm))
            .sum::<f64>()
            / rs.len() as f64;
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        rhs += binomial(k, r) * sign * avg;
    }
    Ok((lhs, rhs))
}
