//! Explicit probability tables.
//!
//! Tables are row-major in scope order: the first scope vertex is the most
//! significant digit of the cell index.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::util::{decode_index, mask_of};

pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A probability table over `Σ^scope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    scope: Vec<usize>,
    q: usize,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(scope: Vec<usize>, q: usize, probs: Vec<f64>) -> Result<Self> {
        let d = Self::new_unchecked(scope, q, probs)?;
        d.check_normalized(NORMALIZATION_TOL)?;
        Ok(d)
    }

    /// Builds a table without the normalization check (shape is still checked).
    pub fn new_unchecked(scope: Vec<usize>, q: usize, probs: Vec<f64>) -> Result<Self> {
        if q < 2 {
            return invalid("alphabet size must be at least 2");
        }
        let mut sorted = scope.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != scope.len() {
            return invalid("scope has repeated vertices");
        }
        let expected = q
            .checked_pow(scope.len() as u32)
            .ok_or_else(|| Error::InvalidInput("table too large".into()))?;
        if probs.len() != expected {
            return invalid(format!(
                "table has {} entries, expected {}",
                probs.len(),
                expected
            ));
        }
        if probs.iter().any(|p| !p.is_finite()) {
            return invalid("table has non-finite entries");
        }
        Ok(Self { scope, q, probs })
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        if let Some(p) = self.probs.iter().find(|&&p| p < -tol) {
            return invalid(format!("negative probability {p}"));
        }
        let s: f64 = self.probs.iter().sum();
        if (s - 1.0).abs() > tol {
            return invalid(format!("table sums to {s}"));
        }
        Ok(())
    }

    /// Normalizes a nonnegative weight table.
    pub fn from_weights(scope: Vec<usize>, q: usize, weights: Vec<f64>) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if s <= 0.0 || weights.iter().any(|w| *w < 0.0) {
            return invalid("weights must be nonnegative with positive sum");
        }
        Self::new(scope, q, weights.into_iter().map(|w| w / s).collect())
    }

    pub fn uniform(scope: Vec<usize>, q: usize) -> Result<Self> {
        let len = q.pow(scope.len() as u32);
        Self::new(scope, q, vec![1.0 / len as f64; len])
    }

    pub fn point_mass(scope: Vec<usize>, q: usize, letters: &[usize]) -> Result<Self> {
        if letters.len() != scope.len() || letters.iter().any(|&a| a >= q) {
            return invalid("point mass assignment does not fit the scope");
        }
        let len = q.pow(scope.len() as u32);
        let mut probs = vec![0.0; len];
        probs[crate::util::encode_index(letters, q)] = 1.0;
        Self::new(scope, q, probs)
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn probs_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.scope.len()
    }

    /// Marginal onto `vars` (each must be in scope); output scope order is `vars`.
    pub fn marginal(&self, vars: &[usize]) -> Result<JointDistribution> {
        let positions: Vec<usize> = vars
            .iter()
            .map(|v| {
                self.scope.iter().position(|s| s == v).ok_or_else(|| {
                    Error::ScopeMismatch(format!("vertex {v} is not in scope {:?}", self.scope))
                })
            })
            .collect::<Result<_>>()?;
        let q = self.q;
        let m = self.scope.len();
        let out_len = q.pow(vars.len() as u32);
        let mut out = vec![0.0; out_len];
        let mut letters = vec![0usize; m];
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            decode_index(idx, q, m, &mut letters);
            let mut o = 0usize;
            for &pos in &positions {
                o = o * q + letters[pos];
            }
            out[o] += p;
        }
        JointDistribution::new_unchecked(vars.to_vec(), q, out)
    }

    /// Product of the given single-vertex marginals, over `scope`.
    pub fn product_of(scope: Vec<usize>, q: usize, marginals: &[Vec<f64>]) -> Result<Self> {
        if marginals.len() != scope.len() {
            return invalid("one marginal per scope vertex required");
        }
        let m = scope.len();
        let len = q.pow(m as u32);
        let mut probs = vec![0.0; len];
        let mut letters = vec![0usize; m];
        for (idx, p) in probs.iter_mut().enumerate() {
            decode_index(idx, q, m, &mut letters);
            *p = letters
                .iter()
                .zip(marginals)
                .map(|(&a, marg)| marg[a])
                .product();
        }
        Self::new_unchecked(scope, q, probs)
    }

    /// Single-vertex marginals in scope order.
    pub fn single_marginals(&self) -> Vec<Vec<f64>> {
        let q = self.q;
        let m = self.scope.len();
        let mut out = vec![vec![0.0; q]; m];
        let mut letters = vec![0usize; m];
        for (idx, &p) in self.probs.iter().enumerate() {
            decode_index(idx, q, m, &mut letters);
            for (j, &a) in letters.iter().enumerate() {
                out[j][a] += p;
            }
        }
        out
    }

    /// Product of this table's own single-vertex marginals.
    pub fn product_of_marginals(&self) -> JointDistribution {
        let margs = self.single_marginals();
        Self::product_of(self.scope.clone(), self.q, &margs)
            .expect("marginals match scope by construction")
    }

    /// Conditional table given `cond` (scope positions `cond_pos` fixed to `letters`).
    /// Returns `None` when the conditioning event has zero mass.
    pub fn condition(&self, cond: &[usize], letters: &[usize]) -> Result<Option<JointDistribution>> {
        let rest: Vec<usize> = self
            .scope
            .iter()
            .cloned()
            .filter(|v| !cond.contains(v))
            .collect();
        let mut order = cond.to_vec();
        order.extend_from_slice(&rest);
        let joint = self.marginal(&order)?;
        let block = self.q.pow(rest.len() as u32);
        let offset = crate::util::encode_index(letters, self.q) * block;
        let slice = &joint.probs[offset..offset + block];
        let mass: f64 = slice.iter().sum();
        if mass <= 0.0 {
            return Ok(None);
        }
        Ok(Some(JointDistribution::new_unchecked(
            rest,
            self.q,
            slice.iter().map(|p| p / mass).collect(),
        )?))
    }

    /// Expectation of `f` over cells (f receives the letters in scope order).
    pub fn expect<F: FnMut(&[usize]) -> f64>(&self, mut f: F) -> f64 {
        let m = self.scope.len();
        let mut letters = vec![0usize; m];
        let mut acc = crate::util::CompensatedSum::new();
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            decode_index(idx, self.q, m, &mut letters);
            acc.add(p * f(&letters));
        }
        acc.value()
    }

    /// Covariance matrix in the Ising ±1 encoding (letter 0 ↦ +1), binary only.
    pub fn spin_covariance(&self) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if self.q != 2 {
            return invalid("spin covariance requires a binary alphabet");
        }
        let m = self.scope.len();
        let mut mean = vec![0.0; m];
        let mut second = vec![vec![0.0; m]; m];
        let mut letters = vec![0usize; m];
        let mut s = vec![0.0f64; m];
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            decode_index(idx, 2, m, &mut letters);
            for j in 0..m {
                s[j] = crate::model::spin_of(letters[j]);
                mean[j] += p * s[j];
            }
            for j in 0..m {
                for l in j..m {
                    second[j][l] += p * s[j] * s[l];
                }
            }
        }
        let mut cov = vec![vec![0.0; m]; m];
        for j in 0..m {
            for l in j..m {
                let c = second[j][l] - mean[j] * mean[l];
                cov[j][l] = c;
                cov[l][j] = c;
            }
        }
        Ok((mean, cov))
    }
}

/// One q-simplex marginal per vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductDistribution {
    marginals: Vec<Vec<f64>>,
}

impl ProductDistribution {
    pub fn new(marginals: Vec<Vec<f64>>) -> Result<Self> {
        if marginals.is_empty() {
            return invalid("product distribution needs at least one vertex");
        }
        let q = marginals[0].len();
        if q < 2 {
            return invalid("alphabet size must be at least 2");
        }
        for (i, m) in marginals.iter().enumerate() {
            if m.len() != q {
                return invalid(format!("marginal {i} has the wrong alphabet size"));
            }
            if m.iter().any(|p| !p.is_finite() || *p < -NORMALIZATION_TOL) {
                return invalid(format!("marginal {i} has a negative or non-finite entry"));
            }
            let s: f64 = m.iter().sum();
            if (s - 1.0).abs() > NORMALIZATION_TOL {
                return invalid(format!("marginal {i} sums to {s}"));
            }
        }
        Ok(Self { marginals })
    }

    pub fn uniform(n: usize, q: usize) -> Self {
        Self {
            marginals: vec![vec![1.0 / q as f64; q]; n],
        }
    }

    pub fn point_mass(letters: &[usize], q: usize) -> Self {
        Self {
            marginals: letters
                .iter()
                .map(|&a| {
                    let mut m = vec![0.0; q];
                    m[a] = 1.0;
                    m
                })
                .collect(),
        }
    }

    /// Binary product with spin means `m_i = E[X_i]` in the ±1 encoding.
    pub fn from_spin_means(means: &[f64]) -> Result<Self> {
        if means.iter().any(|m| !(-1.0..=1.0).contains(m)) {
            return invalid("spin means must lie in [-1, 1]");
        }
        Self::new(
            means
                .iter()
                .map(|&m| vec![(1.0 + m) / 2.0, (1.0 - m) / 2.0])
                .collect(),
        )
    }

    pub fn spin_means(&self) -> Vec<f64> {
        self.marginals.iter().map(|m| m[0] - m[1]).collect()
    }

    pub fn n(&self) -> usize {
        self.marginals.len()
    }

    pub fn q(&self) -> usize {
        self.marginals[0].len()
    }

    pub fn marginals(&self) -> &[Vec<f64>] {
        &self.marginals
    }

    pub fn marginal(&self, i: usize) -> &[f64] {
        &self.marginals[i]
    }

    pub fn set_marginal(&mut self, i: usize, m: Vec<f64>) {
        self.marginals[i] = m;
    }

    /// Full joint table over `0..n`.
    pub fn to_joint(&self) -> Result<JointDistribution> {
        JointDistribution::product_of((0..self.n()).collect(), self.q(), &self.marginals)
    }
}

/// Anything that can hand out marginal tables over small vertex sets: a full
/// joint distribution, or a local family of pseudo-marginals.
pub trait MarginalSource {
    fn num_vertices(&self) -> usize;
    fn alphabet(&self) -> usize;
    /// Largest set size for which `marginal_of` is defined.
    fn max_marginal_size(&self) -> usize;
    /// Marginal over `vars` (sorted ascending), scope order = `vars`.
    fn marginal_of(&self, vars: &[usize]) -> Result<JointDistribution>;
}

impl MarginalSource for JointDistribution {
    fn num_vertices(&self) -> usize {
        self.scope.len()
    }

    fn alphabet(&self) -> usize {
        self.q
    }

    fn max_marginal_size(&self) -> usize {
        self.scope.len()
    }

    fn marginal_of(&self, vars: &[usize]) -> Result<JointDistribution> {
        // sources index vertices 0..n; map through the scope
        let mapped: Vec<usize> = vars
            .iter()
            .map(|&v| {
                self.scope.get(v).cloned().ok_or_else(|| {
                    Error::ScopeMismatch(format!("vertex index {v} out of range"))
                })
            })
            .collect::<Result<_>>()?;
        let mut m = self.marginal(&mapped)?;
        m.scope = vars.to_vec();
        Ok(m)
    }
}

/// Entropies of marginals keyed by vertex-set bitmask.
pub struct EntropyCache<'a, M: MarginalSource + ?Sized> {
    source: &'a M,
    cache: std::collections::HashMap<u64, f64>,
}

impl<'a, M: MarginalSource + ?Sized> EntropyCache<'a, M> {
    pub fn new(source: &'a M) -> Self {
        Self {
            source,
            cache: std::collections::HashMap::new(),
        }
    }

    pub fn source(&self) -> &M {
        self.source
    }

    /// `H(X_set)`; `set` need not be sorted.
    pub fn entropy(&mut self, set: &[usize]) -> Result<f64> {
        if set.is_empty() {
            return Ok(0.0);
        }
        let mask = mask_of(set);
        if let Some(&h) = self.cache.get(&mask) {
            return Ok(h);
        }
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let table = self.source.marginal_of(&sorted)?;
        let h = crate::info::entropy(&table);
        self.cache.insert(mask, h);
        Ok(h)
    }

    /// `H(X_a | X_b)`.
    pub fn conditional_entropy(&mut self, a: &[usize], b: &[usize]) -> Result<f64> {
        let joint = crate::util::sorted_union(a, b);
        Ok(self.entropy(&joint)? - self.entropy(b)?)
    }

    /// `C(X_F | X_S) = Σ_{i∈F} H(X_i|X_S) − H(X_F|X_S)`.
    pub fn total_correlation(&mut self, f: &[usize], s: &[usize]) -> Result<f64> {
        let hs = self.entropy(s)?;
        let mut acc = 0.0;
        for &i in f {
            let joint = crate::util::sorted_union(&[i], s);
            acc += self.entropy(&joint)? - hs;
        }
        let joint = crate::util::sorted_union(f, s);
        acc -= self.entropy(&joint)? - hs;
        Ok(acc)
    }
}
