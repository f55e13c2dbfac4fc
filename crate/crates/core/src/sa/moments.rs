//! Moment coordinates for level-L pseudo-distributions.
//!
//! A pseudo-distribution is parametrized by `g(T, a) = P̃(X_T = a)` for every
//! nonempty `T` with `|T| ≤ L` and every `a ∈ {1..q−1}^T` (letter 0 is the
//! reference letter). Every marginal table over a set `U` with `|U| ≤ L` is then
//! an affine function of `g`, obtained by a coordinate-wise inclusion–exclusion,
//! and compatibility holds by construction: the only remaining constraints are
//! nonnegativity of the cells of the size-L tables.

use crate::error::{Error, Result};
use crate::util::{binomial_u128, checked_pow, decode_index, k_subsets};

/// Index of a k-subset of `{0..n−1}` in lexicographic order.
pub fn lex_rank(subset: &[usize], n: usize) -> usize {
    rank_with(subset, n, |a, b| binomial_u128(a, b) as usize)
}

fn rank_with(subset: &[usize], n: usize, choose: impl Fn(usize, usize) -> usize) -> usize {
    let k = subset.len();
    let mut rank = 0;
    let mut next = 0;
    for (i, &c) in subset.iter().enumerate() {
        for j in next..c {
            rank += choose(n - 1 - j, k - 1 - i);
        }
        next = c + 1;
    }
    rank
}

fn pascal(n: usize) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; n + 1]; n + 1];
    for a in 0..=n {
        t[a][0] = 1;
        for b in 1..=a {
            t[a][b] = t[a - 1][b - 1] + if b < a { t[a - 1][b] } else { 0 };
        }
    }
    t
}

/// Caps on the moment LP size.
pub const MAX_DIM: usize = 6000;
pub const MAX_CELLS: u128 = 4_000_000;

#[derive(Debug, Clone)]
pub struct MomentBasis {
    n: usize,
    q: usize,
    level: usize,
    /// Column offset of each subset size block, then lexicographic rank within the block.
    block_offsets: Vec<usize>,
    dim: usize,
    choose: Vec<Vec<usize>>,
}

impl MomentBasis {
    pub fn new(n: usize, q: usize, level: usize) -> Result<Self> {
        if level == 0 || level > n {
            return Err(Error::InvalidInput(format!("level {level} must lie in [1, {n}]")));
        }
        let cells = binomial_u128(n, level).saturating_mul(checked_pow(q, level).unwrap_or(u128::MAX));
        if cells > MAX_CELLS {
            return Err(Error::SizeLimit { what: "pseudo-distribution cells", needed: cells, cap: MAX_CELLS });
        }
        let mut block_offsets = vec![0usize; level + 2];
        let mut dim: u128 = 0;
        for j in 1..=level {
            block_offsets[j] = dim as usize;
            dim += binomial_u128(n, j) * ((q - 1) as u128).pow(j as u32);
            if dim > MAX_DIM as u128 {
                return Err(Error::SizeLimit { what: "moment coordinates", needed: dim, cap: MAX_DIM as u128 });
            }
        }
        block_offsets[level + 1] = dim as usize;
        Ok(Self { n, q, level, block_offsets, dim: dim as usize, choose: pascal(n) })
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    /// Column of `g(T, a)`; `t` sorted, nonempty, `a` the nonzero letters on `t`.
    pub(crate) fn column(&self, t: &[usize], a: impl Iterator<Item = usize>) -> usize {
        let j = t.len();
        let per = (self.q - 1).pow(j as u32);
        let mut inner = 0usize;
        for letter in a {
            inner = inner * (self.q - 1) + (letter - 1);
        }
        self.block_offsets[j] + self.rank(t) * per + inner
    }

    fn rank(&self, t: &[usize]) -> usize {
        rank_with(t, self.n, |a, b| self.choose[a][b])
    }

    /// Pre-transform array over `Σ^U`: cell `x` holds `g(supp x, x_supp)`
    /// (1 for the all-zero cell when `with_constant`).
    fn lift(&self, y: &[f64], u: &[usize], with_constant: bool) -> Vec<f64> {
        let q = self.q;
        let len = q.pow(u.len() as u32);
        let mut h = vec![0.0; len];
        let mut letters = vec![0usize; u.len()];
        let mut support = Vec::with_capacity(u.len());
        for (idx, slot) in h.iter_mut().enumerate() {
            decode_index(idx, q, u.len(), &mut letters);
            support.clear();
            support.extend(u.iter().zip(&letters).filter(|(_, &a)| a != 0).map(|(&v, _)| v));
            if support.is_empty() {
                *slot = if with_constant { 1.0 } else { 0.0 };
            } else {
                *slot = y[self.column(&support, letters.iter().cloned().filter(|&a| a != 0))];
            }
        }
        h
    }

    fn transform(&self, h: &mut [f64], m: usize) {
        mobius(h, self.q, m);
    }

    /// Marginal table over `u` (sorted, `|u| ≤ L`) at point `y`.
    pub fn marginal(&self, y: &[f64], u: &[usize]) -> Vec<f64> {
        let mut h = self.lift(y, u, true);
        self.transform(&mut h, u.len());
        h
    }

    /// Linear part of the marginal map (no constant), for directions.
    pub fn marginal_linear(&self, d: &[f64], u: &[usize]) -> Vec<f64> {
        let mut h = self.lift(d, u, false);
        self.transform(&mut h, u.len());
        h
    }

    /// Accumulates the adjoint of the marginal map over `u` applied to cell
    /// weights `w` into `grad`; returns the constant part `Σ_x w(x) μ_U(x)|_{y=0}`.
    pub fn adjoint_into(&self, u: &[usize], w: &[f64], grad: &mut [f64]) -> f64 {
        let q = self.q;
        let m = u.len();
        let mut v = w.to_vec();
        let len = v.len();
        for c in 0..m {
            let stride = q.pow((m - 1 - c) as u32);
            for idx in 0..len {
                if (idx / stride) % q != 0 {
                    continue;
                }
                let w0 = v[idx];
                for b in 1..q {
                    v[idx + b * stride] -= w0;
                }
            }
        }
        let mut letters = vec![0usize; m];
        let mut support = Vec::with_capacity(m);
        let mut constant = 0.0;
        for (idx, &val) in v.iter().enumerate() {
            if val == 0.0 {
                continue;
            }
            decode_index(idx, q, m, &mut letters);
            support.clear();
            support.extend(u.iter().zip(&letters).filter(|(_, &a)| a != 0).map(|(&x, _)| x));
            if support.is_empty() {
                constant += val;
            } else {
                grad[self.column(&support, letters.iter().cloned().filter(|&a| a != 0))] += val;
            }
        }
        constant
    }

    /// The point whose every marginal is uniform: `g(T, a) = q^{−|T|}`.
    pub fn uniform_point(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for j in 1..=self.level {
            let v = (self.q as f64).powi(-(j as i32));
            y[self.block_offsets[j]..self.block_offsets[j + 1]].fill(v);
        }
        y
    }

    /// Moment coordinates read from a marginal oracle: `g(T, a) = P(X_T = a)`.
    pub fn point_from<F>(&self, mut marginal: F) -> Result<Vec<f64>>
    where
        F: FnMut(&[usize]) -> Result<Vec<f64>>,
    {
        let q = self.q;
        let mut y = vec![0.0; self.dim];
        let mut letters = vec![0usize; self.level];
        for j in 1..=self.level {
            for t in k_subsets(self.n, j) {
                let table = marginal(&t)?;
                let per = (q - 1).pow(j as u32);
                let base = self.block_offsets[j] + self.rank(&t) * per;
                for inner in 0..per {
                    decode_index(inner, q - 1, j, &mut letters[..j]);
                    let mut idx = 0usize;
                    for &a in &letters[..j] {
                        idx = idx * q + a + 1;
                    }
                    y[base + inner] = table[idx];
                }
            }
        }
        Ok(y)
    }

    /// Structured evaluation of all cell rows of the given size-L subsets.
    pub(crate) fn cell_map(&self, subsets: &[Vec<usize>]) -> CellMap {
        let q = self.q;
        let cells = q.pow(self.level as u32);
        let mut gather = Vec::with_capacity(subsets.len() * cells);
        let mut letters = vec![0usize; self.level];
        let mut support = Vec::with_capacity(self.level);
        for u in subsets {
            for idx in 0..cells {
                decode_index(idx, q, self.level, &mut letters);
                support.clear();
                support.extend(u.iter().zip(&letters).filter(|(_, &a)| a != 0).map(|(&v, _)| v));
                gather.push(if support.is_empty() {
                    u32::MAX
                } else {
                    self.column(&support, letters.iter().cloned().filter(|&a| a != 0)) as u32
                });
            }
        }
        CellMap { q, level: self.level, cells, gather }
    }

    /// Sparse rows of the cell map for one size-L subset: one `(columns,
    /// coefficients, constant)` triple per cell of `Σ^S`.
    pub fn cell_rows(&self, s: &[usize]) -> Vec<(Vec<u32>, Vec<f64>, f64)> {
        let len = self.q.pow(s.len() as u32);
        let mut grad = vec![0.0; self.dim];
        let mut w = vec![0.0; len];
        let mut rows = Vec::with_capacity(len);
        for x in 0..len {
            w[x] = 1.0;
            let constant = self.adjoint_into(s, &w, &mut grad);
            w[x] = 0.0;
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            for (c, g) in grad.iter_mut().enumerate() {
                if *g != 0.0 {
                    cols.push(c as u32);
                    vals.push(*g);
                    *g = 0.0;
                }
            }
            rows.push((cols, vals, constant));
        }
        rows
    }
}

/// In-place inverse Möbius step along each of the `m` coordinates: the new
/// value at letter 0 is the old one minus the sum over nonzero letters.
fn mobius(h: &mut [f64], q: usize, m: usize) {
    let len = h.len();
    let mut stride = len;
    for _ in 0..m {
        stride /= q;
        for base in (0..len).step_by(stride * q) {
            let (head, tail) = h[base..base + stride * q].split_at_mut(stride);
            for b in 0..q - 1 {
                for (x, t) in head.iter_mut().zip(&tail[b * stride..(b + 1) * stride]) {
                    *x -= t;
                }
            }
        }
    }
}

/// Linear part of the cell rows of several size-L tables, evaluated by
/// gathering coordinates and applying the Möbius transform per table.
#[derive(Debug, Clone)]
pub struct CellMap {
    q: usize,
    level: usize,
    cells: usize,
    gather: Vec<u32>,
}

impl CellMap {
    /// `out[i] = a_i · d` for every cell row `i`.
    pub fn apply(&self, d: &[f64], out: &mut [f64]) {
        for (block, g) in out.chunks_mut(self.cells).zip(self.gather.chunks(self.cells)) {
            for (o, &j) in block.iter_mut().zip(g) {
                *o = if j == u32::MAX { 0.0 } else { d[j as usize] };
            }
            mobius(block, self.q, self.level);
        }
    }
}
