// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use gibbsrelax::exact::{exact_free_energy, exact_gibbs};
use gibbsrelax::info::corr_info_identity_check;
use gibbsrelax::linalg::{spectral_norm, SPECTRAL_TOL};
use gibbsrelax::model::{curie_weiss, lift_mrf, random_ising, random_sparse_ising, sk_normalized_matrix, sk_sample};
use gibbsrelax::rounding::{sa_meanfield, select_conditioning_set, theorem1_witness, SelectOptions};
use gibbsrelax::rng::{child_seed, rng_from_seed};
use gibbsrelax::spinglass::{kappa_sweep, sk_experiment, SkConfig, SkMethod};
use gibbsrelax::subsample::{subsample_estimate, SubsampleConfig};
use gibbsrelax::util::interquartile_range;
use gibbsrelax::{IsingModel, JointDistribution, Matrix, Noise};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ln2() -> f64 {
    2f64.ln()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn two_spin(beta: f64) -> IsingModel {
    IsingModel::from_rows(vec![vec![0.0, beta], vec![beta, 0.0]], vec![0.0, 0.0]).unwrap()
}

fn c1_two_spin() -> Outcome {
    let mut worst: f64 = 0.0;
    for beta in [0.0, 0.5, 1.0, 2.0] {
        let f = exact_free_energy(&two_spin(beta).to_mrf()).map_err(|e| e.to_string())?;
        let closed = (2.0 * beta.exp() + 2.0 * (-beta).exp()).ln();
        let err = (f - closed).abs();
        ensure(err <= 1e-10, || format!("beta {beta}: F = {f}, closed form {closed}"))?;
        worst = worst.max(err);
    }
    Ok(format!("max error {worst:.1e}"))
}

fn c2_variational() -> Outcome {
    let mut rng = rng_from_seed(2002);
    let mut worst_id: f64 = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    for m in 0..100 {
        let n = 2 + m % 7;
        let scale = [0.2, 0.5, 1.0, 2.0][m % 4];
        let model = if m % 5 == 4 {
            random_sparse_ising(n, 0.5, scale, 0.5, &mut rng)
        } else {
            random_ising(n, scale, 0.5 * scale, &mut rng)
        };
        let f = exact_free_energy(&model.to_mrf()).map_err(|e| e.to_string())?;
        let f_oracle = common::free_energy(&model);
        ensure((f - f_oracle).abs() <= 1e-9, || format!("model {m}: F {f} vs oracle {f_oracle}"))?;
        let e = common::energies(&model);
        let mu = exact_gibbs(&model.to_mrf()).map_err(|e| e.to_string())?;
        let value = |p: &[f64]| p.iter().zip(&e).map(|(p, e)| p * e).sum::<f64>() + common::shannon(p);
        let err = (value(mu.probs()) - f).abs();
        ensure(err <= 1e-7, || format!("model {m}: E[energy] + H = {}, F = {f}", value(mu.probs())))?;
        worst_id = worst_id.max(err);
        for trial in 0..20 {
            // mix flat and sharply peaked tables
            let power = [1.0, 4.0, 16.0][trial % 3];
            let w: Vec<f64> = (0..e.len()).map(|_| rng.random::<f64>().powf(power)).collect();
            let total: f64 = w.iter().sum();
            let p: Vec<f64> = w.iter().map(|x| x / total).collect();
            let v = value(&p);
            ensure(v <= f + 1e-9, || format!("model {m}: random distribution scores {v} > F = {f}"))?;
            worst_excess = worst_excess.max(v - f);
        }
    }
    Ok(format!("identity max error {worst_id:.1e}; max (value - F) over random distributions {worst_excess:.3}"))
}

fn c3_witness() -> Outcome {
    let mut rng = rng_from_seed(3003);
    let mut worst_ratio: f64 = 0.0;
    let mut fallbacks = 0;
    for m in 0..100 {
        let n = 6 + m % 7;
        let beta = [0.5, 1.0, 2.0][(m / 3) % 3];
        let model = match m % 3 {
            0 => sk_sample(n, beta, Noise::Gaussian, child_seed(3003, m as u64)).unwrap(),
            1 => curie_weiss(n, beta, 0.0).unwrap(),
            _ => random_sparse_ising(n, 0.4, beta / (n as f64).sqrt(), 0.3, &mut rng),
        };
        let rep = theorem1_witness(&model).map_err(|e| format!("model {m}: {e}"))?;
        let f = common::free_energy(&model);
        let jf = model.couplings().data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let bound = 3.0 * (n as f64).powf(2.0 / 3.0) * jf.powf(2.0 / 3.0);
        let gap = f - rep.lower;
        ensure((rep.free_energy - f).abs() <= 1e-9, || format!("model {m}: reported F {} vs oracle {f}", rep.free_energy))?;
        ensure(gap >= -1e-9, || format!("model {m}: witness exceeds F by {}", -gap))?;
        ensure(gap <= bound, || format!("model {m} (n={n}): gap {gap} > bound {bound}"))?;
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(gap / bound);
        }
        fallbacks += rep.used_fallback as usize;
    }
    Ok(format!("0 failures; max gap/bound {worst_ratio:.3}; point-mass fallback used {fallbacks} times"))
}

fn c4_sweep() -> Outcome {
    let mut rng = rng_from_seed(4004);
    let n = 10;
    let mut worst_tc: f64 = 0.0;
    let mut worst_cov: f64 = 0.0;
    for m in 0..50 {
        let scale = [0.3, 0.6, 1.0][m % 3];
        let model = random_ising(n, scale, 0.3, &mut rng);
        let mu = exact_gibbs(&model.to_mrf()).map_err(|e| e.to_string())?;
        let probs = common::gibbs(&model);
        for ell in [2, 3, 4] {
            let rep = select_conditioning_set(&mu, ell, 2, &SelectOptions::default())
                .map_err(|e| format!("model {m}, ell {ell}: {e}"))?;
            ensure(!rep.sampled, || format!("model {m}, ell {ell}: sweep was sampled"))?;
            let s = &rep.chosen_set;
            let rest: Vec<usize> = (0..n).filter(|v| !s.contains(v)).collect();
            let pairs = common::subsets(rest.len(), 2);
            let tc = pairs
                .iter()
                .map(|p| common::conditional_tc(&probs, n, 2, &[rest[p[0]], rest[p[1]]], s))
                .sum::<f64>()
                / pairs.len() as f64;
            let tc_bound = 4.0 * ln2() / ell as f64;
            ensure((tc - rep.avg_total_correlation).abs() <= 1e-9, || {
                format!("model {m}, ell {ell}: reported TC {} vs oracle {tc}", rep.avg_total_correlation)
            })?;
            ensure(tc <= tc_bound, || format!("model {m}, ell {ell}: TC {tc} > {tc_bound}"))?;
            let cov = common::avg_sq_cov(&probs, n, s);
            let cov_bound = 8.0 * ln2() / ell as f64;
            ensure(cov <= cov_bound, || format!("model {m}, ell {ell}: avg cov² {cov} > {cov_bound}"))?;
            worst_tc = worst_tc.max(tc / tc_bound);
            worst_cov = worst_cov.max(cov / cov_bound);
        }
    }
    Ok(format!("0 failures; max TC/bound {worst_tc:.3}, max cov²/bound {worst_cov:.3}"))
}

fn c5_corr_info() -> Outcome {
    let mut rng = rng_from_seed(5005);
    let mut worst: f64 = 0.0;
    for d in 0..200 {
        let m = 2 + d % 5;
        let q: usize = if m <= 4 && d % 4 == 0 { 3 } else { 2 };
        let ks: Vec<usize> = [2, 3, 4].into_iter().filter(|&k| k <= m).collect();
        let k = ks[d % ks.len()];
        let sparse = d % 3 == 0;
        let w: Vec<f64> = (0..q.pow(m as u32))
            .map(|_| if sparse && rng.random::<f64>() < 0.4 { 0.0 } else { rng.random::<f64>() })
            .collect();
        let total: f64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
        let s: Vec<usize> = (0..m).filter(|_| rng.random::<f64>() < 0.3).collect();
        let mu = JointDistribution::new((0..m).collect(), q, probs.clone()).map_err(|e| e.to_string())?;
        let (lhs, rhs) = corr_info_identity_check(&mu, k, &s).map_err(|e| e.to_string())?;
        let fs = common::subsets(m, k);
        let oracle = fs.iter().map(|f| common::conditional_tc(&probs, m, q, f, &s)).sum::<f64>() / fs.len() as f64;
        let err = (lhs - rhs).abs();
        ensure(err <= 1e-9, || format!("distribution {d}: lhs {lhs}, rhs {rhs}"))?;
        ensure((lhs - oracle).abs() <= 1e-9, || format!("distribution {d}: lhs {lhs} vs direct {oracle}"))?;
        worst = worst.max(err);
    }
    Ok(format!("max |lhs - rhs| {worst:.1e}"))
}

fn c6_sandwich() -> Outcome {
    let mut rng = rng_from_seed(6006);
    let (n, r, eps) = (8usize, 4usize, 1e-3);
    let mut worst_up: f64 = 0.0;
    let mut worst_low: f64 = 0.0;
    for m in 0..50 {
        let scale = [0.2, 0.35, 0.5][m % 3];
        let model = random_ising(n, scale, 0.1, &mut rng);
        let rep = sa_meanfield(&model.to_mrf(), r, eps).map_err(|e| format!("model {m}: {e}"))?;
        let f = common::free_energy(&model);
        let jf = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .map(|(a, b)| model.couplings().get(a, b).powi(2))
            .sum::<f64>()
            .sqrt();
        let up_bound = (4.0 * ln2() / r as f64).sqrt() * 2.0 * n as f64 * jf / 2f64.sqrt() + eps;
        let low_bound = up_bound + r as f64 * ln2();
        ensure(rep.lower <= f + 1e-6, || format!("model {m}: lower {} > F {f}", rep.lower))?;
        ensure(f <= rep.upper + 1e-6, || format!("model {m}: F {f} > upper {}", rep.upper))?;
        ensure(rep.upper - f <= up_bound, || format!("model {m}: F_SA - F = {} > {up_bound}", rep.upper - f))?;
        ensure(f - rep.lower <= low_bound, || format!("model {m}: F - F_nu = {} > {low_bound}", f - rep.lower))?;
        worst_up = worst_up.max((rep.upper - f) / up_bound);
        worst_low = worst_low.max((f - rep.lower) / low_bound);
    }
    Ok(format!("0 failures; max (F_SA - F)/bound {worst_up:.3}, max (F - F_nu)/bound {worst_low:.3}"))
}

fn c7_sk() -> Outcome {
    let cfg = SkConfig::new(16, 0.4, 30, Noise::Gaussian, 7007, SkMethod::Exact);
    let res = sk_experiment(&cfg).map_err(|e| e.to_string())?;
    let f = res.free_energy_density.mean;
    let mf = res.mean_field_density.mean;
    let target = ln2() + 0.04;
    for t in &res.trials {
        let fe = t.free_energy_density.ok_or("missing exact density")?;
        ensure(fe + 1e-9 >= t.mean_field_density, || format!("trial {}: F/n {fe} < F*/n {}", t.trial, t.mean_field_density))?;
    }
    ensure((f - target).abs() <= 0.05, || format!("mean F/n {f}, target {target}"))?;
    ensure((mf - ln2()).abs() <= 0.02, || format!("mean F*/n {mf}, target log 2"))?;
    Ok(format!("mean F/n {f:.5} (target {target:.5}), mean F*/n {mf:.5} (target {:.5})", ln2()))
}

fn c8_spectral() -> Outcome {
    let mut inside = 0;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for t in 0..50u64 {
        let g: Matrix = sk_normalized_matrix(200, Noise::Gaussian, &mut rng_from_seed(child_seed(8008, t)));
        let s = spectral_norm(&g, SPECTRAL_TOL).map_err(|e| e.to_string())?;
        lo = lo.min(s);
        hi = hi.max(s);
        if (1.8..=2.3).contains(&s) {
            inside += 1;
        }
    }
    ensure(inside >= 45, || format!("{inside}/50 in [1.8, 2.3]"))?;
    Ok(format!("{inside}/50 in [1.8, 2.3]; range [{lo:.4}, {hi:.4}]"))
}

fn c9_lift() -> Outcome {
    let mut rng = rng_from_seed(9009);
    let (n, k, ell) = (6usize, 2usize, 3usize);
    let mut worst: f64 = 0.0;
    for m in 0..20 {
        let model = random_ising(n, [0.3, 1.0][m % 2], 0.5, &mut rng);
        let mrf = model.to_mrf();
        let lifted = lift_mrf(&mrf, ell).map_err(|e| e.to_string())?;
        let f0 = exact_free_energy(&mrf).map_err(|e| e.to_string())?;
        let f1 = exact_free_energy(&lifted).map_err(|e| e.to_string())?;
        let fo = common::free_energy(&model);
        ensure((f0 - f1).abs() <= 1e-9, || format!("model {m}: F {f0} vs lifted {f1}"))?;
        ensure((f1 - fo).abs() <= 1e-9, || format!("model {m}: lifted {f1} vs oracle {fo}"))?;
        worst = worst.max((f0 - f1).abs());
        let sq = |e: &gibbsrelax::HyperEdge| e.table.iter().fold(0.0f64, |a, x| a.max(x.abs())).powi(2);
        let lifted_norm: f64 = lifted.edges().iter().map(sq).sum();
        let norm: f64 = mrf.edges().iter().map(sq).sum();
        let factor = binom(ell, k).powi(2) / binom(n - k, ell - k);
        ensure(lifted_norm <= factor * norm + 1e-12, || {
            format!("model {m}: lifted norm² {lifted_norm} > {factor} × {norm}")
        })?;
    }
    Ok(format!("max |F - F_lifted| {worst:.1e}; norm inequality held on all 20"))
}

fn c10_subsample() -> Outcome {
    let mut rng = rng_from_seed(10010);
    let small = random_ising(9, 0.5, 0.3, &mut rng);
    let full = SubsampleConfig { repetitions: Some(3), ..SubsampleConfig::new(9, 0.1, 1) };
    let est = subsample_estimate(&small.to_mrf(), &full).map_err(|e| e.to_string())?;
    let f = common::free_energy(&small);
    ensure((est.estimate - f).abs() <= 1e-12, || format!("s = n estimate {} vs F {f}", est.estimate))?;

    // IQR from 50 draws is itself noisy: over 60 independent models of this
    // class the ordering held in 55. The model gets its own seed stream.
    let n = 14;
    let model = random_ising(n, 1.0 / (n as f64).sqrt(), 0.3, &mut rng_from_seed(child_seed(10010, 1))).to_mrf();
    let mut iqrs = Vec::new();
    for s in [6, 8, 10] {
        let values: Vec<f64> = (0..50u64)
            .map(|run| {
                let cfg = SubsampleConfig { repetitions: Some(1), ..SubsampleConfig::new(s, 0.1, child_seed(10010, run)) };
                subsample_estimate(&model, &cfg).map(|e| e.estimate)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        iqrs.push(interquartile_range(&values));
    }
    ensure(iqrs[0] > iqrs[1] && iqrs[1] > iqrs[2], || format!("IQR not decreasing: {iqrs:?}"))?;
    Ok(format!("s = n error {:.1e}; IQR at s = 6, 8, 10: {:.4}, {:.4}, {:.4}", (est.estimate - f).abs(), iqrs[0], iqrs[1], iqrs[2]))
}

fn c11_kappa() -> Outcome {
    let mut rng = rng_from_seed(11011);
    let mut worst: f64 = 0.0;
    for m in 0..5 {
        let model = random_ising(6, [0.5, 1.0][m % 2], 0.3, &mut rng);
        let res = kappa_sweep(&model, 4).map_err(|e| e.to_string())?;
        let probs = common::gibbs(&model);
        let mut best = f64::INFINITY;
        for t in 0..=4 {
            for s in common::subsets(6, t) {
                best = best.min(common::avg_abs_cov(&probs, 6, &s));
            }
            let err = (res.values[t] - best).abs();
            ensure(err <= 1e-10, || format!("model {m}, t {t}: {} vs direct {best}", res.values[t]))?;
            worst = worst.max(err);
        }
    }
    let mut min_positive = f64::INFINITY;
    for seed in 0..3u64 {
        let model = sk_sample(12, 1.5, Noise::Gaussian, child_seed(11011, seed)).unwrap();
        let res = kappa_sweep(&model, 3).map_err(|e| e.to_string())?;
        for w in res.values.windows(2) {
            ensure(w[1] <= w[0], || format!("sample {seed}: not nonincreasing {:?}", res.values))?;
        }
        for (t, v) in res.values.iter().enumerate() {
            ensure(*v > 0.0, || format!("sample {seed}: value at t = {t} is {v}"))?;
            min_positive = min_positive.min(*v);
        }
    }
    Ok(format!("n = 6 max deviation {worst:.1e}; SK n = 12 minimum value {min_positive:.4}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("two-spin closed form", c1_two_spin),
        ("Gibbs variational identity", c2_variational),
        ("mean-field witness gap", c3_witness),
        ("conditioning sweep bounds", c4_sweep),
        ("correlation/information identity", c5_corr_info),
        ("relaxation sandwich", c6_sandwich),
        ("SK replica-symmetric proxy", c7_sk),
        ("semicircle edge", c8_spectral),
        ("lifting invariance", c9_lift),
        ("subsampling", c10_subsample),
        ("kappa sweep", c11_kappa),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| id == *p || name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {id} ({name}): {msg} [{secs:.1} s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {id} ({name}): {msg} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
