//! Active-set primal simplex for `max c·y  s.t.  a_i·y + b_i ≥ 0`.
//!
//! The iterate is always a vertex given by `dim` tight rows (the basis) with
//! an explicitly maintained inverse. Pivoting runs on constants relaxed by tiny
//! deterministic amounts, which removes degeneracy; the reported vertex is
//! recomputed from the same basis with the original constants. Dantzig's rule
//! is used, switching to Bland's rule after a run of degenerate pivots. The
//! basis persists between calls, which makes re-solving with a nearby
//! objective cheap.

use crate::error::{Error, Result};
use crate::rng::splitmix64;

use super::moments::CellMap;

const PIVOT_TOL: f64 = 1e-9;
/// Infeasibility tolerated by the ratio test in exchange for larger pivots.
const HARRIS_SLACK: f64 = 1e-12;
const OPT_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 1000;
const MAX_PIVOTS: usize = 200_000;
const PERTURBATION: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

/// Sparse constraint rows in compressed form.
#[derive(Debug, Clone)]
pub struct Rows {
    starts: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    constants: Vec<f64>,
}

impl Rows {
    pub fn new(rows: Vec<(Vec<u32>, Vec<f64>, f64)>) -> Self {
        let mut starts = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut constants = Vec::with_capacity(rows.len());
        starts.push(0);
        for (c, v, b) in rows {
            cols.extend(c);
            vals.extend(v);
            constants.push(b);
            starts.push(cols.len());
        }
        Self { starts, cols, vals, constants }
    }

    pub fn len(&self) -> usize {
        self.constants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constants.is_empty()
    }

    #[inline]
    fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.starts[i], self.starts[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    #[inline]
    pub fn dot(&self, i: usize, x: &[f64]) -> f64 {
        let (c, v) = self.row(i);
        c.iter().zip(v).map(|(&j, &a)| a * x[j as usize]).sum()
    }

    /// `a_i·y + b_i`.
    #[inline]
    pub fn slack(&self, i: usize, y: &[f64]) -> f64 {
        self.dot(i, y) + self.constants[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOutcome {
    pub value: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone)]
pub struct ActiveSetLp {
    dim: usize,
    rows: Rows,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Row-major inverse of the basis matrix: column `p` is the direction that
    /// relaxes basis row `p` at unit rate.
    binv: Vec<f64>,
    /// Relaxed constants used while pivoting.
    shifted: Vec<f64>,
    /// Vertex for the relaxed constants.
    y: Vec<f64>,
    /// Vertex of the current basis for the original constants.
    vertex: Vec<f64>,
    slack: Vec<f64>,
    since_refactor: usize,
    /// Fast evaluation of all row products, when the rows have that structure.
    map: Option<CellMap>,
}

impl ActiveSetLp {
    /// `basis` must index `dim` linearly independent rows that are tight at a
    /// feasible point.
    pub fn new(dim: usize, rows: Rows, basis: Vec<usize>) -> Result<Self> {
        if basis.len() != dim {
            return Err(Error::Internal(format!("basis has {} rows, need {dim}", basis.len())));
        }
        let mut in_basis = vec![false; rows.len()];
        for &b in &basis {
            if b >= rows.len() || in_basis[b] {
                return Err(Error::Internal("basis rows must be distinct and in range".into()));
            }
            in_basis[b] = true;
        }
        let shifted = (0..rows.len())
            .map(|i| {
                if in_basis[i] {
                    rows.constants[i]
                } else {
                    let u = (splitmix64(i as u64) >> 11) as f64 / (1u64 << 53) as f64;
                    rows.constants[i] + PERTURBATION * (1.0 + u)
                }
            })
            .collect();
        let mut lp = Self {
            dim,
            slack: vec![0.0; rows.len()],
            shifted,
            vertex: vec![0.0; dim],
            rows,
            basis,
            in_basis,
            binv: vec![0.0; dim * dim],
            y: vec![0.0; dim],
            since_refactor: 0,
            map: None,
        };
        lp.refactor()?;
        lp.update_vertex();
        if let Some(i) = (0..lp.rows.len()).find(|&i| lp.slack[i] < -1e-9) {
            return Err(Error::Internal(format!("starting vertex violates row {i}")));
        }
        Ok(lp)
    }

    /// Uses `map` for row products; it must agree with the sparse rows.
    pub fn with_cell_map(mut self, map: CellMap) -> Self {
        self.map = Some(map);
        self
    }

    pub fn point(&self) -> &[f64] {
        &self.vertex
    }

    fn update_vertex(&mut self) {
        let d = self.dim;
        for j in 0..d {
            let mut s = 0.0;
            for (p, &r) in self.basis.iter().enumerate() {
                s -= self.binv[j * d + p] * self.rows.constants[r];
            }
            self.vertex[j] = s;
        }
    }

    pub fn rows(&self) -> &Rows {
        &self.rows
    }

    /// Recomputes the basis inverse, the vertex and all slacks from scratch.
    fn refactor(&mut self) -> Result<()> {
        let d = self.dim;
        let mut a = vec![0.0; d * d];
        for (p, &r) in self.basis.iter().enumerate() {
            let (c, v) = self.rows.row(r);
            for (&j, &val) in c.iter().zip(v) {
                a[p * d + j as usize] = val;
            }
        }
        self.binv = invert(a, d).ok_or_else(|| Error::Internal("singular basis".into()))?;
        for j in 0..d {
            let mut s = 0.0;
            for (p, &r) in self.basis.iter().enumerate() {
                s -= self.binv[j * d + p] * self.shifted[r];
            }
            self.y[j] = s;
        }
        for i in 0..self.rows.len() {
            self.slack[i] =
                if self.in_basis[i] { 0.0 } else { self.rows.dot(i, &self.y) + self.shifted[i] };
        }
        self.since_refactor = 0;
        Ok(())
    }

    /// `c·y` at the reported vertex.
    pub fn value(&self, c: &[f64]) -> f64 {
        c.iter().zip(&self.vertex).map(|(a, b)| a * b).sum()
    }

    /// Maximizes `c·y` starting from the current basis.
    pub fn maximize(&mut self, c: &[f64]) -> Result<LpOutcome> {
        let d = self.dim;
        let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut lambda = vec![0.0; d];
        let mut dir = vec![0.0; d];
        let mut ad = vec![0.0; self.rows.len()];
        let mut r = vec![0.0; d];
        let mut degenerate = 0usize;
        let mut fresh = false;
        for pivots in 0..MAX_PIVOTS {
            if !fresh {
                // λ = −A_B^{−T} c
                lambda.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..d {
                    let cj = c[j];
                    if cj == 0.0 {
                        continue;
                    }
                    let row = &self.binv[j * d..(j + 1) * d];
                    for (l, b) in lambda.iter_mut().zip(row) {
                        *l -= b * cj;
                    }
                }
                fresh = true;
            }
            let candidates = (0..d).filter(|&p| lambda[p] < -OPT_TOL * scale);
            let leaving = if degenerate >= DEGENERATE_RUN {
                candidates.min_by_key(|&p| self.basis[p])
            } else {
                candidates.min_by(|&a, &b| lambda[a].total_cmp(&lambda[b]))
            };
            let Some(p) = leaving else {
                self.update_vertex();
                return Ok(LpOutcome { value: self.value(c), pivots });
            };
            for j in 0..d {
                dir[j] = self.binv[j * d + p];
            }
            if let Some(map) = &self.map {
                map.apply(&dir, &mut ad);
            }
            // Harris ratio test: bound the step allowing HARRIS_SLACK of
            // infeasibility, then take the largest pivot within that bound
            let mut bound = f64::INFINITY;
            for i in 0..self.rows.len() {
                if self.in_basis[i] {
                    ad[i] = if i == self.basis[p] { 1.0 } else { 0.0 };
                    continue;
                }
                if self.map.is_none() {
                    ad[i] = self.rows.dot(i, &dir);
                }
                let v = ad[i];
                if v < -PIVOT_TOL {
                    bound = bound.min((self.slack[i].max(0.0) + HARRIS_SLACK) / -v);
                }
            }
            if bound == f64::INFINITY {
                return Err(Error::Internal("LP is unbounded".into()));
            }
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let v = ad[i];
                if self.in_basis[i] || v >= -PIVOT_TOL || self.slack[i].max(0.0) / -v > bound {
                    continue;
                }
                let better = match best {
                    None => true,
                    // Bland mode keeps the lowest index
                    Some(_) if degenerate >= DEGENERATE_RUN => false,
                    Some((_, bv)) => v < bv,
                };
                if better {
                    best = Some((i, v));
                }
            }
            let (enter, v) = best.expect("the bounding row qualifies");
            let t = self.slack[enter].max(0.0) / -v;
            if t == 0.0 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for (yj, dj) in self.y.iter_mut().zip(&dir) {
                *yj += t * dj;
            }
            for i in 0..self.rows.len() {
                self.slack[i] += t * ad[i];
            }
            let leave_row = self.basis[p];
            self.slack[enter] = 0.0;
            // Sherman–Morrison: replace basis row p by the entering row
            r.iter_mut().for_each(|v| *v = 0.0);
            let (cols, vals) = self.rows.row(enter);
            for (&j, &a) in cols.iter().zip(vals) {
                let row = &self.binv[j as usize * d..(j as usize + 1) * d];
                for (rv, b) in r.iter_mut().zip(row) {
                    *rv += a * b;
                }
            }
            r[p] -= 1.0;
            let denom = ad[enter];
            // binv' = binv − dir rᵀ / denom, hence λ' = λ + (c·dir / denom) r with c·dir = −λ_p
            let f = -lambda[p] / denom;
            for (l, rv) in lambda.iter_mut().zip(&r) {
                *l += f * rv;
            }
            for j in 0..d {
                let f = dir[j] / denom;
                if f == 0.0 {
                    continue;
                }
                let row = &mut self.binv[j * d..(j + 1) * d];
                for (b, rv) in row.iter_mut().zip(&r) {
                    *b -= f * rv;
                }
            }
            self.in_basis[leave_row] = false;
            self.in_basis[enter] = true;
            self.basis[p] = enter;
            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                fresh = false;
            }
        }
        Err(Error::Internal("LP pivot limit reached".into()))
    }
}

/// Gauss–Jordan inverse with partial pivoting; `None` if singular.
fn invert(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let s = 1.0 / a[col * n + col];
        for k in 0..n {
            a[col * n + k] *= s;
            inv[col * n + k] *= s;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                a[r * n + k] -= f * a[col * n + k];
                inv[r * n + k] -= f * inv[col * n + k];
            }
        }
    }
    Some(inv)
}
