//! The level-L Sherali-Adams polytope in moment coordinates, with a warm LP oracle.

use crate::distribution::JointDistribution;
use crate::error::{Error, Result};
use crate::model::Mrf;
use crate::util::k_subsets;

use super::family::LocalFamily;
use super::lp::{ActiveSetLp, LpOutcome, Rows};
use super::moments::{lex_rank, MomentBasis};

/// Cells more negative than this after a solve indicate a numerical failure.
const NEGATIVE_CELL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SaPolytope {
    basis: MomentBasis,
    subsets: Vec<Vec<usize>>,
    lp: ActiveSetLp,
}

impl SaPolytope {
    pub fn new(n: usize, q: usize, level: usize) -> Result<Self> {
        let basis = MomentBasis::new(n, q, level)?;
        let subsets = k_subsets(n, level);
        let cells = q.pow(level as u32);
        let mut rows = Vec::with_capacity(subsets.len() * cells);
        for s in &subsets {
            rows.extend(basis.cell_rows(s));
        }
        // Start at the point mass on the all-zero configuration: for every
        // coordinate g(T, a) take the cell (cover(T), a on T, 0 elsewhere).
        // Ordered by |T| this system is unitriangular, hence a valid basis.
        let mut start = vec![usize::MAX; basis.dim()];
        let rows = Rows::new(rows);
        let mut letters = vec![0usize; level];
        for t_size in 1..=level {
            for t in k_subsets(n, t_size) {
                let mut cover = t.clone();
                let mut v = 0;
                while cover.len() < level {
                    if !t.contains(&v) {
                        cover.push(v);
                    }
                    v += 1;
                }
                cover.sort_unstable();
                let base = lex_rank(&cover, n) * cells;
                let per = (q - 1).pow(t_size as u32);
                for inner in 0..per {
                    crate::util::decode_index(inner, q - 1, t_size, &mut letters[..t_size]);
                    let mut x = vec![0usize; level];
                    for (k, &vt) in t.iter().enumerate() {
                        let pos = cover.iter().position(|&c| c == vt).expect("cover contains t");
                        x[pos] = letters[k] + 1;
                    }
                    let row = base + crate::util::encode_index(&x, q);
                    let col = basis.column(&t, letters[..t_size].iter().map(|&l| l + 1));
                    start[col] = row;
                }
            }
        }
        if start.iter().any(|&r| r == usize::MAX) {
            return Err(Error::Internal("could not build the starting basis".into()));
        }
        let lp = ActiveSetLp::new(basis.dim(), rows, start)?.with_cell_map(basis.cell_map(&subsets));
        Ok(Self { basis, subsets, lp })
    }

    pub fn moment_basis(&self) -> &MomentBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn num_cells(&self) -> usize {
        self.lp.rows().len()
    }

    /// Maximizes `c·y` over the polytope; returns the optimal vertex.
    pub fn maximize(&mut self, c: &[f64]) -> Result<(LpOutcome, Vec<f64>)> {
        let out = self.lp.maximize(c)?;
        Ok((out, self.lp.point().to_vec()))
    }

    /// Smallest cell value over all tables at `y`.
    pub fn min_cell(&self, y: &[f64]) -> f64 {
        let rows = self.lp.rows();
        (0..rows.len()).map(|i| rows.slack(i, y)).fold(f64::INFINITY, f64::min)
    }

    /// Linear functional `c·y + c0` equal to `Σ_S Σ_x w_S(x) μ_S(x)`.
    pub fn functional_from_cells(&self, weights: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
        if weights.len() != self.subsets.len() {
            return Err(Error::InvalidInput(format!(
                "expected weights for {} tables, got {}",
                self.subsets.len(),
                weights.len()
            )));
        }
        let mut c = vec![0.0; self.dim()];
        let mut c0 = 0.0;
        for (s, w) in self.subsets.iter().zip(weights) {
            if w.len() != self.basis.q().pow(s.len() as u32) {
                return Err(Error::InvalidInput(format!("weight table for {s:?} has the wrong size")));
            }
            c0 += self.basis.adjoint_into(s, w, &mut c);
        }
        Ok((c, c0))
    }

    /// Linear functional for `Ẽ[f + h]`.
    pub fn energy_functional(&self, model: &Mrf) -> Result<(Vec<f64>, f64)> {
        if model.n() != self.basis.n() || model.q() != self.basis.q() {
            return Err(Error::ScopeMismatch("model and polytope disagree on n or q".into()));
        }
        if model.k() > self.basis.level() {
            return Err(Error::LevelTooSmall { needed: model.k(), level: self.basis.level() });
        }
        let mut c = vec![0.0; self.dim()];
        let mut c0 = 0.0;
        for e in model.edges() {
            c0 += self.basis.adjoint_into(&e.vertices, &e.table, &mut c);
        }
        for (i, h) in model.fields().iter().enumerate() {
            c0 += self.basis.adjoint_into(&[i], h, &mut c);
        }
        Ok((c, c0))
    }

    /// Tables of the family at moment point `y`. Cells within the numerical
    /// tolerance below zero are clipped and each table renormalized.
    pub fn family_of(&self, y: &[f64]) -> Result<LocalFamily> {
        let q = self.basis.q();
        let mut tables = Vec::with_capacity(self.subsets.len());
        for s in &self.subsets {
            let mut probs = self.basis.marginal(y, s);
            if let Some(p) = probs.iter().find(|&&p| p < -NEGATIVE_CELL_TOL) {
                return Err(Error::Internal(format!("cell value {p} on {s:?} is infeasible")));
            }
            probs.iter_mut().for_each(|p| *p = p.max(0.0));
            let z: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= z);
            tables.push(JointDistribution::new(s.clone(), q, probs)?);
        }
        LocalFamily::new(self.basis.n(), q, self.basis.level(), tables)
    }

    /// Moment point of a family (its marginals read from the lexicographic cover).
    pub fn point_of(&self, fam: &LocalFamily) -> Result<Vec<f64>> {
        use crate::distribution::MarginalSource;
        if fam.n() != self.basis.n() || fam.q() != self.basis.q() || fam.level() != self.basis.level() {
            return Err(Error::ScopeMismatch("family does not match the polytope".into()));
        }
        self.basis.point_from(|t| Ok(fam.marginal_of(t)?.probs().to_vec()))
    }
}

/// Result of [`lp_solve`].
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub family: LocalFamily,
    pub value: f64,
    pub pivots: usize,
}

/// Maximizes the linear functional `Σ_S Σ_x w_S(x) μ_S(x)` over the level-L
/// Sherali-Adams polytope. An identically zero objective returns the uniform
/// family.
pub fn lp_solve(polytope: &mut SaPolytope, weights: &[Vec<f64>]) -> Result<LpSolution> {
    let (c, c0) = polytope.functional_from_cells(weights)?;
    if weights.iter().flatten().all(|&w| w == 0.0) {
        let y = polytope.basis.uniform_point();
        return Ok(LpSolution { family: polytope.family_of(&y)?, value: 0.0, pivots: 0 });
    }
    let (out, y) = polytope.maximize(&c)?;
    Ok(LpSolution { family: polytope.family_of(&y)?, value: out.value + c0, pivots: out.pivots })
}
