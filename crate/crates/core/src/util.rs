//! Small combinatorial and numerical helpers shared across modules.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// `log Σ exp(v)` with max-shift.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s = compensated_sum(values.iter().map(|v| (v - max).exp()));
    max + s.ln()
}

/// Binomial coefficient as f64 (exact for the desk-scale arguments used here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

pub fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// All size-`k` subsets of `items`, in lexicographic order of positions.
pub fn subsets_of(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All size-`k` subsets of `0..n`, lexicographic.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let items: Vec<usize> = (0..n).collect();
    subsets_of(&items, k)
}

pub fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0u64, |m, &v| m | (1u64 << v))
}

pub fn set_of_mask(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask & (1u64 << i) != 0).collect()
}

/// Sorted union of two sorted vertex lists.
pub fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b.iter()).cloned().collect();
    v.sort_unstable();
    v.dedup();
    v
}

pub fn complement(n: usize, set: &[usize]) -> Vec<usize> {
    let m = mask_of(set);
    (0..n).filter(|&i| m & (1u64 << i) == 0).collect()
}

/// Decode a row-major mixed-radix index (first position most significant).
pub fn decode_index(mut index: usize, q: usize, len: usize, out: &mut [usize]) {
    for j in (0..len).rev() {
        out[j] = index % q;
        index /= q;
    }
}

pub fn encode_index(letters: &[usize], q: usize) -> usize {
    letters.iter().fold(0usize, |acc, &a| acc * q + a)
}

pub fn checked_pow(q: usize, e: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..e {
        acc = acc.checked_mul(q as u128)?;
    }
    Some(acc)
}

/// Median of a slice (average of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Linear-interpolated quantile, `p` in [0, 1].
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] * (1.0 - frac) + v[hi] * frac
}

pub fn interquartile_range(values: &[f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_count_and_order() {
        let s = k_subsets(5, 3);
        assert_eq!(s.len(), 10);
        assert_eq!(s[0], vec![0, 1, 2]);
        assert_eq!(s[9], vec![2, 3, 4]);
        assert_eq!(k_subsets(4, 0), vec![Vec::<usize>::new()]);
        assert_eq!(k_subsets(3, 3), vec![vec![0, 1, 2]]);
        assert!(k_subsets(2, 3).is_empty());
        for k in 0..=6 {
            assert_eq!(k_subsets(6, k).len() as f64, binomial(6, k));
        }
    }

    #[test]
    fn logsumexp_is_shift_safe() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(median(&v), 3.0);
        assert_eq!(interquartile_range(&v), 2.0);
    }
}
