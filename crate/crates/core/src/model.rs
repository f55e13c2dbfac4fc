//! Model representation: order-k Markov random fields over `{0..q-1}` and the
//! Ising specialization.
//!
//! The Ising boundary maps alphabet letter 0 to spin +1 and letter 1 to spin −1.
//! The canonical Ising energy is `Σ_{i<j} J_ij x_i x_j + Σ_i h_i x_i`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::util::{binomial, decode_index, encode_index, k_subsets, CompensatedSum};

/// Spin value of an alphabet letter (binary only).
#[inline]
pub fn spin_of(letter: usize) -> f64 {
    if letter == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
pub fn letter_of(spin: f64) -> usize {
    if spin > 0.0 {
        0
    } else {
        1
    }
}

/// One hyperedge: a sorted vertex set and its potential table (row-major in vertex order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperEdge {
    pub vertices: Vec<usize>,
    pub table: Vec<f64>,
}

impl HyperEdge {
    pub fn sup_norm(&self) -> f64 {
        self.table.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[inline]
    pub fn value(&self, x: &[usize], q: usize) -> f64 {
        let mut idx = 0usize;
        for &v in &self.vertices {
            idx = idx * q + x[v];
        }
        self.table[idx]
    }
}

/// An order-k Markov random field over alphabet `{0..q-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mrf {
    n: usize,
    q: usize,
    k: usize,
    edges: Vec<HyperEdge>,
    fields: Vec<Vec<f64>>,
}

impl Mrf {
    /// Validates and canonicalizes: every edge's vertex list is sorted (its
    /// table permuted accordingly) and edges are kept in input order.
    pub fn new(
        n: usize,
        q: usize,
        k: usize,
        edges: Vec<HyperEdge>,
        fields: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if n == 0 {
            return invalid("model needs at least one vertex");
        }
        if n > 64 {
            return invalid("at most 64 vertices are supported");
        }
        if q < 2 {
            return invalid("alphabet size q must be at least 2");
        }
        if k < 2 {
            return invalid("hyperedge order k must be at least 2");
        }
        if fields.len() != n {
            return invalid(format!("expected {n} field tables, got {}", fields.len()));
        }
        for (i, f) in fields.iter().enumerate() {
            if f.len() != q {
                return invalid(format!("field table {i} must have {q} entries"));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return invalid(format!("field table {i} has non-finite entries"));
            }
        }
        let table_len = q
            .checked_pow(k as u32)
            .ok_or_else(|| crate::Error::InvalidInput("q^k overflows".into()))?;
        let mut seen = std::collections::HashSet::new();
        let mut canon = Vec::with_capacity(edges.len());
        for (e, edge) in edges.into_iter().enumerate() {
            if edge.vertices.len() != k {
                return invalid(format!("edge {e} has {} vertices, expected {k}", edge.vertices.len()));
            }
            if edge.vertices.iter().any(|&v| v >= n) {
                return invalid(format!("edge {e} references a vertex outside [0, {n})"));
            }
            if edge.table.len() != table_len {
                return invalid(format!("edge {e} table must have {table_len} entries"));
            }
            if edge.table.iter().any(|v| !v.is_finite()) {
                return invalid(format!("edge {e} has non-finite entries"));
            }
            let edge = canonicalize_edge(edge, q);
            if edge.vertices.windows(2).any(|w| w[0] == w[1]) {
                return invalid(format!("edge {e} repeats a vertex"));
            }
            if !seen.insert(crate::util::mask_of(&edge.vertices)) {
                return invalid(format!("duplicate hyperedge {:?}", edge.vertices));
            }
            canon.push(edge);
        }
        Ok(Self { n, q, k, edges: canon, fields })
    }

    /// Model with no potentials at all.
    pub fn zero(n: usize, q: usize, k: usize) -> Result<Self> {
        Self::new(n, q, k, vec![], vec![vec![0.0; q]; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[HyperEdge] {
        &self.edges
    }

    pub fn fields(&self) -> &[Vec<f64>] {
        &self.fields
    }

    pub fn check_configuration(&self, x: &SpinConfiguration) -> Result<()> {
        if x.0.len() != self.n {
            return invalid(format!(
                "configuration has {} entries, model has {} vertices",
                x.0.len(),
                self.n
            ));
        }
        if x.0.iter().any(|&a| a >= self.q) {
            return invalid("configuration entry outside the alphabet");
        }
        Ok(())
    }

    /// `f(x) + h(x)`.
    pub fn energy(&self, x: &SpinConfiguration) -> Result<f64> {
        self.check_configuration(x)?;
        Ok(self.energy_letters(&x.0))
    }

    /// Unchecked energy on a raw letter slice.
    #[inline]
    pub fn energy_letters(&self, x: &[usize]) -> f64 {
        let mut acc = CompensatedSum::new();
        for e in &self.edges {
            acc.add(e.value(x, self.q));
        }
        for (i, f) in self.fields.iter().enumerate() {
            acc.add(f[x[i]]);
        }
        acc.value()
    }

    /// `sqrt(Σ_E ‖f_E‖∞²)`.
    pub fn interaction_norm(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| e.sup_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `sup_E ‖f_E‖∞`.
    pub fn interaction_sup_norm(&self) -> f64 {
        self.edges.iter().fold(0.0f64, |m, e| m.max(e.sup_norm()))
    }

    /// `k!`-free factor appearing in the MRF bounds: `k n^{k/2} ‖J‖_F / sqrt(k!)`.
    pub fn bound_scale(&self) -> f64 {
        self.k as f64 * (self.n as f64).powf(self.k as f64 / 2.0) * self.interaction_norm()
            / crate::util::factorial(self.k).sqrt()
    }

    /// Edges incident to each vertex.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.n];
        for (e, edge) in self.edges.iter().enumerate() {
            for &v in &edge.vertices {
                inc[v].push(e);
            }
        }
        inc
    }

    /// Binary pairwise model to Ising form, returning the constant energy offset.
    /// Each pairwise table is decomposed as `c + a s_i + b s_j + J s_i s_j`.
    pub fn to_ising(&self) -> Option<(IsingModel, f64)> {
        if self.q != 2 || self.k != 2 {
            return None;
        }
        let n = self.n;
        let mut j = Matrix::zeros(n);
        let mut h: Vec<f64> = self
            .fields
            .iter()
            .map(|f| 0.5 * (f[0] - f[1]))
            .collect();
        let mut offset: f64 = self.fields.iter().map(|f| 0.5 * (f[0] + f[1])).sum();
        for e in &self.edges {
            let (a, b) = (e.vertices[0], e.vertices[1]);
            let t = &e.table; // t[2*xa + xb]
            let c = 0.25 * (t[0] + t[1] + t[2] + t[3]);
            let ha = 0.25 * (t[0] + t[1] - t[2] - t[3]);
            let hb = 0.25 * (t[0] - t[1] + t[2] - t[3]);
            let jab = 0.25 * (t[0] - t[1] - t[2] + t[3]);
            offset += c;
            h[a] += ha;
            h[b] += hb;
            j.set(a, b, j.get(a, b) + jab);
            j.set(b, a, j.get(b, a) + jab);
        }
        Some((IsingModel { j, h }, offset))
    }
}

fn canonicalize_edge(edge: HyperEdge, q: usize) -> HyperEdge {
    let k = edge.vertices.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&p| edge.vertices[p]);
    if order.iter().enumerate().all(|(i, &p)| i == p) {
        return edge;
    }
    let vertices: Vec<usize> = order.iter().map(|&p| edge.vertices[p]).collect();
    let mut table = vec![0.0; edge.table.len()];
    let mut sorted_letters = vec![0usize; k];
    let mut orig = vec![0usize; k];
    for (idx, slot) in table.iter_mut().enumerate() {
        decode_index(idx, q, k, &mut sorted_letters);
        for (pos_sorted, &p) in order.iter().enumerate() {
            orig[p] = sorted_letters[pos_sorted];
        }
        *slot = edge.table[encode_index(&orig, q)];
    }
    HyperEdge { vertices, table }
}

/// An assignment of alphabet letters to vertices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinConfiguration(pub Vec<usize>);

impl SpinConfiguration {
    /// From ±1 spins.
    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return invalid("spins must be ±1");
        }
        Ok(Self(spins.iter().map(|&s| letter_of(s as f64)).collect()))
    }

    pub fn spins(&self) -> Vec<f64> {
        self.0.iter().map(|&a| spin_of(a)).collect()
    }
}

/// Ising model with symmetric zero-diagonal couplings and linear fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingModel {
    j: Matrix,
    h: Vec<f64>,
}

impl IsingModel {
    pub fn new(j: Matrix, h: Vec<f64>) -> Result<Self> {
        let n = j.dim();
        if n == 0 {
            return invalid("model needs at least one vertex");
        }
        if h.len() != n {
            return invalid(format!("field vector has {} entries, expected {n}", h.len()));
        }
        if j.data().iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return invalid("non-finite coupling or field");
        }
        for a in 0..n {
            if j.get(a, a) != 0.0 {
                return invalid("coupling matrix must have zero diagonal");
            }
            for b in 0..a {
                if j.get(a, b) != j.get(b, a) {
                    return invalid("coupling matrix must be symmetric");
                }
            }
        }
        Ok(Self { j, h })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, h: Vec<f64>) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, h)
    }

    pub fn zero(n: usize) -> Self {
        Self { j: Matrix::zeros(n), h: vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn couplings(&self) -> &Matrix {
        &self.j
    }

    pub fn fields(&self) -> &[f64] {
        &self.h
    }

    /// `Σ_{i<j} J_ij x_i x_j + Σ h_i x_i` for ±1 spins.
    pub fn energy_spins(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let mut acc = CompensatedSum::new();
        for a in 0..n {
            for b in a + 1..n {
                acc.add(self.j.get(a, b) * x[a] * x[b]);
            }
            acc.add(self.h[a] * x[a]);
        }
        acc.value()
    }

    /// `‖J‖_F = sqrt(Σ_{i,j} J_ij²)` over the full matrix.
    pub fn frobenius_norm(&self) -> f64 {
        self.j.frobenius()
    }

    /// `J_i · x + h_i` for every vertex.
    pub fn local_fields(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.j.matvec(x);
        for (o, h) in out.iter_mut().zip(&self.h) {
            *o += h;
        }
        out
    }

    /// MRF view: `f_ij(a, b) = J_ij s(a) s(b)`, `h_i(a) = h_i s(a)`.
    pub fn to_mrf(&self) -> Mrf {
        let n = self.n();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let jab = self.j.get(a, b);
                if jab != 0.0 {
                    edges.push(HyperEdge {
                        vertices: vec![a, b],
                        table: vec![jab, -jab, -jab, jab],
                    });
                }
            }
        }
        let fields = self.h.iter().map(|&h| vec![h, -h]).collect();
        Mrf::new(n, 2, 2, edges, fields).expect("Ising conversion always yields a valid MRF")
    }
}

/// `‖J‖_F` under each model's own convention: the full-matrix Frobenius norm
/// for Ising models, `sqrt(Σ_E ‖f_E‖∞²)` for general MRFs.
pub trait FrobeniusInteractionNorm {
    fn frobenius_interaction_norm(&self) -> f64;
}

impl FrobeniusInteractionNorm for IsingModel {
    fn frobenius_interaction_norm(&self) -> f64 {
        self.frobenius_norm()
    }
}

impl FrobeniusInteractionNorm for Mrf {
    fn frobenius_interaction_norm(&self) -> f64 {
        self.interaction_norm()
    }
}

/// Lifts a k-MRF to an ℓ-MRF defining the same distribution:
/// `g_F = (1 / C(n−k, ℓ−k)) Σ_{E⊂F} f_E`. Fields are carried over unchanged and
/// ℓ-sets containing no edge are omitted (their potential is identically zero).
pub fn lift_mrf(model: &Mrf, ell: usize) -> Result<Mrf> {
    let (n, q, k) = (model.n, model.q, model.k);
    if ell < k || ell > n {
        return invalid(format!("lift order {ell} must lie in [{k}, {n}]"));
    }
    if ell == k {
        return Ok(model.clone());
    }
    let scale = 1.0 / binomial(n - k, ell - k);
    let edge_masks: Vec<u64> = model
        .edges
        .iter()
        .map(|e| crate::util::mask_of(&e.vertices))
        .collect();
    let table_len = q.pow(ell as u32);
    let mut lifted = Vec::new();
    let mut letters = vec![0usize; ell];
    let mut full = vec![0usize; n];
    for f in k_subsets(n, ell) {
        let fmask = crate::util::mask_of(&f);
        let inside: Vec<usize> = edge_masks
            .iter()
            .enumerate()
            .filter(|(_, &m)| m & fmask == m)
            .map(|(e, _)| e)
            .collect();
        if inside.is_empty() {
            continue;
        }
        let mut table = vec![0.0; table_len];
        for (idx, slot) in table.iter_mut().enumerate() {
            decode_index(idx, q, ell, &mut letters);
            for (p, &v) in f.iter().enumerate() {
                full[v] = letters[p];
            }
            let s: f64 = inside
                .iter()
                .map(|&e| model.edges[e].value(&full, q))
                .sum();
            *slot = scale * s;
        }
        lifted.push(HyperEdge { vertices: f, table });
    }
    Mrf::new(n, q, ell, lifted, model.fields.clone())
}

/// Antiferromagnetic MAX-CUT encoding: `J_ij = −βn/m` on each edge.
pub fn ising_from_maxcut(n: usize, edges: &[(usize, usize)], beta: f64) -> Result<IsingModel> {
    if edges.is_empty() {
        return invalid("MAX-CUT encoding needs at least one edge");
    }
    let m = edges.len() as f64;
    let w = -beta * n as f64 / m;
    let mut j = Matrix::zeros(n);
    for &(a, b) in edges {
        if a >= n || b >= n || a == b {
            return invalid(format!("edge ({a}, {b}) is not a simple edge on {n} vertices"));
        }
        if j.get(a, b) != 0.0 {
            return invalid(format!("edge ({a}, {b}) appears twice"));
        }
        j.set(a, b, w);
        j.set(b, a, w);
    }
    IsingModel::new(j, vec![0.0; n])
}

/// Coupling noise for SK samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    Gaussian,
    Rademacher,
}

impl std::str::FromStr for Noise {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Noise::Gaussian),
            "rademacher" => Ok(Noise::Rademacher),
            other => invalid(format!("unknown noise kind '{other}'")),
        }
    }
}

/// Normalized SK matrix `g_ij / √n` (upper triangle i.i.d., symmetrized).
pub fn sk_normalized_matrix<R: Rng + ?Sized>(n: usize, noise: Noise, rng: &mut R) -> Matrix {
    let scale = 1.0 / (n as f64).sqrt();
    let mut j = Matrix::zeros(n);
    for a in 0..n {
        for b in a + 1..n {
            let g: f64 = match noise {
                Noise::Gaussian => rng.sample(StandardNormal),
                Noise::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            j.set(a, b, g * scale);
            j.set(b, a, g * scale);
        }
    }
    j
}

/// SK spin glass: `J_ij = (β/√n) g_ij`, no field. Deterministic under `seed`.
pub fn sk_sample(n: usize, beta: f64, noise: Noise, seed: u64) -> Result<IsingModel> {
    if n < 2 {
        return invalid("SK sample needs n >= 2");
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return invalid("beta must be a finite nonnegative number");
    }
    let mut rng = crate::rng::rng_from_seed(seed);
    let mut j = sk_normalized_matrix(n, noise, &mut rng);
    j.scale(beta);
    IsingModel::new(j, vec![0.0; n])
}

/// Curie-Weiss model: `J_ij = β/n` for all `i ≠ j`, uniform field `h`.
pub fn curie_weiss(n: usize, beta: f64, h: f64) -> Result<IsingModel> {
    let mut j = Matrix::zeros(n);
    for a in 0..n {
        for b in 0..n {
            if a != b {
                j.set(a, b, beta / n as f64);
            }
        }
    }
    IsingModel::new(j, vec![h; n])
}

/// Erdős–Rényi couplings: each pair is present with probability `p` and then
/// carries `scale · N(0,1)`; fields are `field_scale · N(0,1)`.
pub fn random_sparse_ising<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    scale: f64,
    field_scale: f64,
    rng: &mut R,
) -> IsingModel {
    let mut j = Matrix::zeros(n);
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                let g: f64 = rng.sample(StandardNormal);
                j.set(a, b, scale * g);
                j.set(b, a, scale * g);
            }
        }
    }
    let h = (0..n)
        .map(|_| field_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    IsingModel::new(j, h).expect("constructed symmetric with zero diagonal")
}

/// Dense Gaussian Ising model with coupling scale `scale` and field scale `field_scale`.
pub fn random_ising<R: Rng + ?Sized>(n: usize, scale: f64, field_scale: f64, rng: &mut R) -> IsingModel {
    random_sparse_ising(n, 1.0, scale, field_scale, rng)
}

/// General MRF with every k-subset present and i.i.d. uniform(−scale, scale) tables.
pub fn random_mrf<R: Rng + ?Sized>(
    n: usize,
    q: usize,
    k: usize,
    scale: f64,
    field_scale: f64,
    rng: &mut R,
) -> Result<Mrf> {
    let len = q.pow(k as u32);
    let edges = k_subsets(n, k)
        .into_iter()
        .map(|vertices| HyperEdge {
            vertices,
            table: (0..len).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect(),
        })
        .collect();
    let fields = (0..n)
        .map(|_| (0..q).map(|_| field_scale * (2.0 * rng.random::<f64>() - 1.0)).collect())
        .collect();
    Mrf::new(n, q, k, edges, fields)
}
