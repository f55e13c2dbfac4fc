//! Small dense square matrices, Schatten-4 and spectral norms.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != n {
                return invalid(format!("row {i} has {} entries, expected {n}", r.len()));
            }
            data.extend(r);
        }
        Ok(Self { n, data })
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut m = self.clone();
        m.scale(a);
        m
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.n != other.n {
            return Err(Error::ScopeMismatch(format!(
                "cannot multiply {n}x{n} by {m}x{m}",
                n = self.n,
                m = other.n
            )));
        }
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// `‖J‖_{s4} = sqrt(‖JᵀJ‖_F)`.
pub fn schatten4(j: &Matrix) -> f64 {
    j.transpose()
        .matmul(j)
        .expect("same dimension")
        .frobenius()
        .sqrt()
}

pub const SPECTRAL_TOL: f64 = 1e-8;
const SPECTRAL_MAX_ITERS: usize = 100_000;

/// Largest absolute eigenvalue of a symmetric matrix.
///
/// Power iteration runs on `J²`, which is positive semidefinite, so the
/// dominant eigenvalue is `λ_max²` regardless of the sign of `λ_max`. The
/// iteration stops once the Rayleigh estimate changes by less than `tol`
/// relative.
pub fn spectral_norm(j: &Matrix, tol: f64) -> Result<f64> {
    if !j.is_symmetric() {
        return invalid("spectral norm requires a symmetric matrix");
    }
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let n = j.dim();
    if n == 0 || j.data().iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    // deterministic start with no special alignment
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919 % 97) as f64 / 97.0)).collect();
    normalize(&mut v);
    let mut est = 0.0f64;
    for _ in 0..SPECTRAL_MAX_ITERS {
        let jv = j.matvec(&v);
        let mut w = j.matvec(&jv);
        let rayleigh: f64 = jv.iter().map(|a| a * a).sum();
        let norm = normalize(&mut w);
        if norm == 0.0 {
            // start vector in the kernel of J²; perturb it
            v = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
            normalize(&mut v);
            continue;
        }
        v = w;
        if (rayleigh - est).abs() <= tol * rayleigh.max(f64::MIN_POSITIVE) {
            est = rayleigh;
            break;
        }
        est = rayleigh;
    }
    Ok(est.sqrt())
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|a| *a /= norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schatten4_examples() {
        assert!((schatten4(&Matrix::identity(3)) - 3f64.powf(0.25)).abs() < 1e-15);
        assert_eq!(schatten4(&Matrix::zeros(4)), 0.0);
    }

    #[test]
    fn spectral_examples() {
        let d = Matrix::from_diagonal(&[3.0, -5.0]);
        assert!((spectral_norm(&d, SPECTRAL_TOL).unwrap() - 5.0).abs() < 1e-6);
        assert_eq!(spectral_norm(&Matrix::zeros(3), SPECTRAL_TOL).unwrap(), 0.0);
        let bad = Matrix::from_rows(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert!(spectral_norm(&bad, SPECTRAL_TOL).is_err());
    }

    #[test]
    fn spectral_homogeneity() {
        let m = Matrix::from_rows(vec![
            vec![0.0, 1.0, -2.0],
            vec![1.0, 0.0, 0.5],
            vec![-2.0, 0.5, 0.0],
        ])
        .unwrap();
        let a = spectral_norm(&m, 1e-12).unwrap();
        let b = spectral_norm(&m.scaled(-3.0), 1e-12).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-8);
    }
}
