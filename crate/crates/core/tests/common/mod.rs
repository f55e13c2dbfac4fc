// Brute-force helpers written against raw arrays so they share no code with the
// library. Configuration index: vertex 0 is the most significant binary digit,
// letter 0 is spin +1.
#![allow(dead_code)]

use gibbsrelax::IsingModel;

pub fn bit(idx: usize, n: usize, v: usize) -> usize {
    (idx >> (n - 1 - v)) & 1
}

pub fn spin(idx: usize, n: usize, v: usize) -> f64 {
    1.0 - 2.0 * bit(idx, n, v) as f64
}

pub fn ising_energy(model: &IsingModel, idx: usize) -> f64 {
    let n = model.n();
    let j = model.couplings();
    let mut e = 0.0;
    for a in 0..n {
        let sa = spin(idx, n, a);
        e += model.fields()[a] * sa;
        for b in a + 1..n {
            e += j.get(a, b) * sa * spin(idx, n, b);
        }
    }
    e
}

pub fn energies(model: &IsingModel) -> Vec<f64> {
    (0..1usize << model.n()).map(|i| ising_energy(model, i)).collect()
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn free_energy(model: &IsingModel) -> f64 {
    log_sum_exp(&energies(model))
}

pub fn gibbs(model: &IsingModel) -> Vec<f64> {
    let e = energies(model);
    let f = log_sum_exp(&e);
    e.iter().map(|x| (x - f).exp()).collect()
}

pub fn shannon(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Entropy of the marginal on `set` of a table over `n` variables with alphabet `q`.
pub fn marginal_entropy(probs: &[f64], n: usize, q: usize, set: &[usize]) -> f64 {
    let mut out = vec![0.0; q.pow(set.len() as u32)];
    for (idx, &p) in probs.iter().enumerate() {
        let mut key = 0;
        for &v in set {
            key = key * q + (idx / q.pow((n - 1 - v) as u32)) % q;
        }
        out[key] += p;
    }
    shannon(&out)
}

pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u64..1 << n {
        if mask.count_ones() as usize == k {
            out.push((0..n).filter(|&v| mask >> v & 1 == 1).collect());
        }
    }
    out
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).cloned().collect();
    u.sort_unstable();
    u.dedup();
    u
}

/// `Σ_{i∈F} H(X_i|X_S) − H(X_F|X_S)`.
pub fn conditional_tc(probs: &[f64], n: usize, q: usize, f: &[usize], s: &[usize]) -> f64 {
    let hs = marginal_entropy(probs, n, q, s);
    let singles: f64 = f.iter().map(|&i| marginal_entropy(probs, n, q, &union(&[i], s)) - hs).sum();
    singles - (marginal_entropy(probs, n, q, &union(f, s)) - hs)
}

/// Per-branch conditional covariances of all pairs `i<j`, computed by looping
/// over `x_S` and then over every configuration consistent with it.
pub fn conditional_covariances(probs: &[f64], n: usize, s: &[usize]) -> Vec<(f64, Vec<f64>)> {
    let mut out = Vec::new();
    for branch in 0..1usize << s.len() {
        let consistent = |idx: usize| (0..s.len()).all(|p| bit(idx, n, s[p]) == (branch >> (s.len() - 1 - p)) & 1);
        let mut mass = 0.0;
        let mut mean = vec![0.0; n];
        for idx in (0..probs.len()).filter(|&i| consistent(i)) {
            mass += probs[idx];
            for (v, m) in mean.iter_mut().enumerate() {
                *m += probs[idx] * spin(idx, n, v);
            }
        }
        if mass <= 0.0 {
            continue;
        }
        mean.iter_mut().for_each(|m| *m /= mass);
        let mut covs = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let mut c = 0.0;
                for idx in (0..probs.len()).filter(|&i| consistent(i)) {
                    c += probs[idx] * spin(idx, n, a) * spin(idx, n, b);
                }
                covs.push(c / mass - mean[a] * mean[b]);
            }
        }
        out.push((mass, covs));
    }
    out
}

pub fn avg_abs_cov(probs: &[f64], n: usize, s: &[usize]) -> f64 {
    conditional_covariances(probs, n, s)
        .iter()
        .map(|(w, c)| w * c.iter().map(|x| x.abs()).sum::<f64>() / c.len() as f64)
        .sum()
}

pub fn avg_sq_cov(probs: &[f64], n: usize, s: &[usize]) -> f64 {
    conditional_covariances(probs, n, s)
        .iter()
        .map(|(w, c)| w * c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64)
        .sum()
}

/// Symmetric eigenvalues by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}
