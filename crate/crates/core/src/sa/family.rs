//! Level-r local families (Sherali-Adams pseudo-distributions), their
//! validation, pseudo-expectations and the pseudo-entropy functional.

use serde::{Deserialize, Serialize};

use crate::distribution::{EntropyCache, JointDistribution, MarginalSource};
use crate::error::{invalid, Error, Result};
use crate::model::Mrf;
use crate::util::{binomial, k_subsets};

use super::moments::lex_rank;

pub const SIMPLEX_TOL: f64 = 1e-9;
pub const COMPAT_TOL: f64 = 1e-7;

/// One table per size-`level` subset of `{0..n−1}`, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFamily {
    n: usize,
    q: usize,
    level: usize,
    tables: Vec<JointDistribution>,
}

impl LocalFamily {
    /// Checks the layout (subset order, table sizes) but not the simplex or
    /// compatibility constraints; use [`validate_local_family`] for those.
    pub fn new(n: usize, q: usize, level: usize, tables: Vec<JointDistribution>) -> Result<Self> {
        if level == 0 || level > n {
            return invalid(format!("level {level} must lie in [1, {n}]"));
        }
        let subsets = k_subsets(n, level);
        if subsets.len() != tables.len() {
            return invalid(format!("expected {} tables, got {}", subsets.len(), tables.len()));
        }
        for (s, t) in subsets.iter().zip(&tables) {
            if t.scope() != s.as_slice() || t.q() != q {
                return invalid(format!("table for {:?} has scope {:?}", s, t.scope()));
            }
        }
        Ok(Self { n, q, level, tables })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn tables(&self) -> &[JointDistribution] {
        &self.tables
    }

    pub fn tables_mut(&mut self) -> &mut [JointDistribution] {
        &mut self.tables
    }

    /// Table for a size-`level` subset (sorted).
    pub fn table(&self, subset: &[usize]) -> Option<&JointDistribution> {
        if subset.len() != self.level || subset.iter().any(|&v| v >= self.n) {
            return None;
        }
        self.tables.get(lex_rank(subset, self.n))
    }

    /// Lexicographically smallest size-`level` superset of `vars` (sorted).
    pub fn covering_subset(&self, vars: &[usize]) -> Result<Vec<usize>> {
        if vars.len() > self.level {
            return Err(Error::LevelTooSmall { needed: vars.len(), level: self.level });
        }
        let mut cover = vars.to_vec();
        let mut v = 0;
        while cover.len() < self.level {
            if !vars.contains(&v) {
                cover.push(v);
            }
            v += 1;
        }
        cover.sort_unstable();
        Ok(cover)
    }

    /// Marginal over `vars` read from an explicitly chosen covering subset.
    pub fn marginal_from(&self, cover: &[usize], vars: &[usize]) -> Result<JointDistribution> {
        let table = self
            .table(cover)
            .ok_or_else(|| Error::InvalidInput(format!("{cover:?} is not a level-{} subset", self.level)))?;
        if !vars.iter().all(|v| cover.contains(v)) {
            return invalid(format!("{cover:?} does not cover {vars:?}"));
        }
        table.marginal(vars)
    }
}

impl MarginalSource for LocalFamily {
    fn num_vertices(&self) -> usize {
        self.n
    }

    fn alphabet(&self) -> usize {
        self.q
    }

    fn max_marginal_size(&self) -> usize {
        self.level
    }

    fn marginal_of(&self, vars: &[usize]) -> Result<JointDistribution> {
        if vars.iter().any(|&v| v >= self.n) {
            return Err(Error::ScopeMismatch(format!("{vars:?} exceeds {} vertices", self.n)));
        }
        let cover = self.covering_subset(vars)?;
        self.marginal_from(&cover, vars)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    /// Negative cell or total mass away from 1.
    Simplex { subset: Vec<usize>, magnitude: f64 },
    /// Marginals of two tables disagree on their common vertices.
    Compatibility { subset: Vec<usize>, reference: Vec<usize>, on: Vec<usize>, magnitude: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Largest compatibility discrepancy seen (violating or not).
    pub max_compatibility_residual: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every violated simplex or compatibility constraint.
///
/// Compatibility is checked between tables whose subsets share `level − 1`
/// vertices; any two tables are connected through such steps, so agreement
/// there implies agreement on every common subset.
pub fn validate_local_family(fam: &LocalFamily) -> ValidationReport {
    let mut report = ValidationReport::default();
    let subsets = k_subsets(fam.n, fam.level);
    for (s, t) in subsets.iter().zip(&fam.tables) {
        let neg = t.probs().iter().fold(0.0f64, |m, &p| m.max(-p));
        let mass = (t.probs().iter().sum::<f64>() - 1.0).abs();
        let magnitude = neg.max(mass);
        if magnitude > SIMPLEX_TOL {
            report.violations.push(Violation::Simplex { subset: s.clone(), magnitude });
        }
    }
    if fam.level == 1 {
        return report;
    }
    for u in k_subsets(fam.n, fam.level - 1) {
        let mut reference: Option<(Vec<usize>, JointDistribution)> = None;
        for extra in 0..fam.n {
            if u.contains(&extra) {
                continue;
            }
            let mut s = u.clone();
            s.push(extra);
            s.sort_unstable();
            let Ok(m) = fam.marginal_from(&s, &u) else { continue };
            match &reference {
                None => reference = Some((s, m)),
                Some((rs, rm)) => {
                    let diff = m
                        .probs()
                        .iter()
                        .zip(rm.probs())
                        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
                    report.max_compatibility_residual = report.max_compatibility_residual.max(diff);
                    if diff > COMPAT_TOL {
                        report.violations.push(Violation::Compatibility {
                            subset: s,
                            reference: rs.clone(),
                            on: u.clone(),
                            magnitude: diff,
                        });
                    }
                }
            }
        }
    }
    report
}

/// All size-`r` marginals of a distribution over `0..n`.
pub fn embed_distribution<M: MarginalSource + ?Sized>(mu: &M, r: usize) -> Result<LocalFamily> {
    let n = mu.num_vertices();
    if r == 0 || r > n {
        return invalid(format!("level {r} must lie in [1, {n}]"));
    }
    if r > mu.max_marginal_size() {
        return Err(Error::LevelTooSmall { needed: r, level: mu.max_marginal_size() });
    }
    let tables = k_subsets(n, r)
        .iter()
        .map(|s| mu.marginal_of(s))
        .collect::<Result<Vec<_>>>()?;
    LocalFamily::new(n, mu.alphabet(), r, tables)
}

fn check_model(fam: &LocalFamily, model: &Mrf) -> Result<()> {
    if fam.n != model.n() || fam.q != model.q() {
        return Err(Error::ScopeMismatch("family and model disagree on n or q".into()));
    }
    if fam.level < model.k() {
        return Err(Error::LevelTooSmall { needed: model.k(), level: fam.level });
    }
    Ok(())
}

/// `Σ_E Ẽ[f_E] + Σ_i Ẽ[h_i]`, each term read from the lexicographically smallest covering table.
pub fn pseudo_expectation_energy(fam: &LocalFamily, model: &Mrf) -> Result<f64> {
    check_model(fam, model)?;
    let mut acc = crate::util::CompensatedSum::new();
    for e in model.edges() {
        let m = fam.marginal_of(&e.vertices)?;
        for (p, f) in m.probs().iter().zip(&e.table) {
            acc.add(p * f);
        }
    }
    for (i, h) in model.fields().iter().enumerate() {
        let m = fam.marginal_of(&[i])?;
        for (p, f) in m.probs().iter().zip(h) {
            acc.add(p * f);
        }
    }
    Ok(acc.value())
}

/// `H(X_S) + Σ_{i∉S} H(X_i | X_S)` for a marginal source.
pub fn pseudo_entropy_with<M: MarginalSource + ?Sized>(
    cache: &mut EntropyCache<'_, M>,
    n: usize,
    s: &[usize],
) -> Result<f64> {
    let hs = cache.entropy(s)?;
    let mut acc = hs;
    for i in 0..n {
        if s.contains(&i) {
            continue;
        }
        let mut si = s.to_vec();
        si.push(i);
        acc += cache.entropy(&si)? - hs;
    }
    Ok(acc)
}

/// Pseudo-entropy at a fixed set `S`; needs `|S| + 1 ≤ level`.
pub fn pseudo_entropy(fam: &LocalFamily, s: &[usize]) -> Result<f64> {
    if s.len() + 1 > fam.level {
        return Err(Error::LevelTooSmall { needed: s.len() + 1, level: fam.level });
    }
    if s.iter().any(|&v| v >= fam.n) {
        return invalid("entropy set references a vertex outside the model");
    }
    let mut cache = EntropyCache::new(fam);
    pseudo_entropy_with(&mut cache, fam.n, s)
}

/// How the minimizing set of the pseudo-entropy was searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exhaustive,
    Greedy,
}

/// Exhaustive search is used when `C(n, r) ≤` this.
pub const EXHAUSTIVE_LIMIT: f64 = 1e5;

/// `H̃_r = min_{|S| ≤ r} [H(X_S) + Σ_i H(X_i | X_S)]`, returning the value, a
/// minimizing set and the search mode.
pub fn pseudo_entropy_min<M: MarginalSource + ?Sized>(
    src: &M,
    r: usize,
) -> Result<(f64, Vec<usize>, SearchMode)> {
    let n = src.num_vertices();
    if r + 1 > src.max_marginal_size() {
        return Err(Error::LevelTooSmall { needed: r + 1, level: src.max_marginal_size() });
    }
    let mut cache = EntropyCache::new(src);
    let mut best = (pseudo_entropy_with(&mut cache, n, &[])?, Vec::new());
    if binomial(n, r) <= EXHAUSTIVE_LIMIT {
        for t in 1..=r.min(n) {
            for s in k_subsets(n, t) {
                let v = pseudo_entropy_with(&mut cache, n, &s)?;
                if v < best.0 {
                    best = (v, s);
                }
            }
        }
        return Ok((best.0, best.1, SearchMode::Exhaustive));
    }
    let mut s: Vec<usize> = Vec::new();
    while s.len() < r {
        let mut step: Option<(f64, usize)> = None;
        for v in 0..n {
            if s.contains(&v) {
                continue;
            }
            let mut t = s.clone();
            t.push(v);
            t.sort_unstable();
            let val = pseudo_entropy_with(&mut cache, n, &t)?;
            if step.map_or(true, |(b, _)| val < b) {
                step = Some((val, v));
            }
        }
        match step {
            Some((val, v)) if val < best.0 => {
                s.push(v);
                s.sort_unstable();
                best = (val, s.clone());
            }
            _ => break,
        }
    }
    Ok((best.0, best.1, SearchMode::Greedy))
}
