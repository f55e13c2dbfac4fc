mod common;

use gibbsrelax::info::{entropy, kl, total_correlation, tv};
use gibbsrelax::io::{ising_to_json, mrf_to_json, parse_model};
use gibbsrelax::linalg::{spectral_norm, SPECTRAL_TOL};
use gibbsrelax::meanfield::{mf_objective, mf_optimize};
use gibbsrelax::model::{lift_mrf, random_ising, random_mrf, sk_sample};
use gibbsrelax::rng::rng_from_seed;
use gibbsrelax::rounding::{select_conditioning_set, SelectOptions};
use gibbsrelax::sa::{embed_distribution, pseudo_entropy, validate_local_family};
use gibbsrelax::subsample::induce_rescaled;
use gibbsrelax::{exact_free_energy, exact_gibbs, solve_sa, JointDistribution, Matrix, Noise, ProductDistribution};
use proptest::prelude::*;
use rand::Rng;

fn table(m: usize, q: usize, seed: u64) -> JointDistribution {
    let mut rng = rng_from_seed(seed);
    let w: Vec<f64> = (0..q.pow(m as u32)).map(|_| rng.random::<f64>().powi(3)).collect();
    JointDistribution::from_weights((0..m).collect(), q, w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_matches_direct_sum(n in 1usize..10, scale in 0.0f64..3.0, seed in any::<u64>()) {
        let m = random_ising(n, scale, 0.5, &mut rng_from_seed(seed));
        let f = exact_free_energy(&m.to_mrf()).unwrap();
        let direct = common::free_energy(&m);
        prop_assert!((f - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        let mu = exact_gibbs(&m.to_mrf()).unwrap();
        let g = common::gibbs(&m);
        for (a, b) in mu.probs().iter().zip(&g) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn products_score_below_free_energy(n in 2usize..8, seed in any::<u64>()) {
        let m = random_ising(n, 1.0, 0.5, &mut rng_from_seed(seed)).to_mrf();
        let f = exact_free_energy(&m).unwrap();
        let mut rng = rng_from_seed(seed ^ 1);
        let means: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let nu = ProductDistribution::from_spin_means(&means).unwrap();
        prop_assert!(mf_objective(&m, &nu).unwrap() <= f + 1e-9);
        let sol = mf_optimize(&m, 4, seed).unwrap();
        prop_assert!(sol.objective <= f + 1e-9);
        prop_assert!(sol.objective >= mf_objective(&m, &ProductDistribution::uniform(n, 2)).unwrap() - 1e-12);
    }

    #[test]
    fn spectral_norm_matches_jacobi(n in 2usize..24, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let mut rows = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in a..n {
                let x = 2.0 * rng.random::<f64>() - 1.0;
                rows[a][b] = x;
                rows[b][a] = x;
            }
        }
        let direct = common::jacobi_eigenvalues(&rows).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let s = spectral_norm(&Matrix::from_rows(rows).unwrap(), SPECTRAL_TOL).unwrap();
        prop_assert!((s - direct).abs() <= 1e-5 * direct.max(1.0), "{} vs {}", s, direct);
    }

    #[test]
    fn information_inequalities(m in 2usize..6, q in 2usize..4, seed in any::<u64>()) {
        let mu = table(m, q, seed);
        let nu = table(m, q, seed.wrapping_add(7));
        let singles: f64 = (0..m).map(|i| common::marginal_entropy(mu.probs(), m, q, &[i])).sum();
        let h = entropy(&mu);
        prop_assert!((h - common::shannon(mu.probs())).abs() < 1e-12);
        prop_assert!(h <= singles + 1e-12);
        prop_assert!(kl(&mu, &nu).unwrap() >= -1e-12);
        let d = tv(&mu, &nu).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        let all: Vec<usize> = (0..m).collect();
        let tc = total_correlation(&mu, &all, &[]).unwrap();
        prop_assert!((tc - (singles - h)).abs() < 1e-10);
        let tc_cond = total_correlation(&mu, &all[1..], &[0]).unwrap();
        prop_assert!((tc_cond - common::conditional_tc(mu.probs(), m, q, &all[1..], &[0])).abs() < 1e-10);
        prop_assert!(tc_cond >= -1e-12);
    }

    #[test]
    fn product_tables_have_no_correlation(m in 2usize..6, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let means: Vec<f64> = (0..m).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let mu = ProductDistribution::from_spin_means(&means).unwrap().to_joint().unwrap();
        let singles: f64 = (0..m).map(|i| common::marginal_entropy(mu.probs(), m, 2, &[i])).sum();
        prop_assert!((entropy(&mu) - singles).abs() < 1e-10);
    }

    #[test]
    fn lifting_preserves_free_energy(n in 3usize..7, q in 2usize..4, seed in any::<u64>()) {
        let m = random_mrf(n, q, 2, 1.0, 0.5, &mut rng_from_seed(seed)).unwrap();
        let ell = 2 + (seed as usize) % (n - 1);
        let lifted = lift_mrf(&m, ell).unwrap();
        prop_assert!((exact_free_energy(&m).unwrap() - exact_free_energy(&lifted).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn model_files_roundtrip(n in 2usize..7, q in 2usize..4, seed in any::<u64>()) {
        let m = random_mrf(n, q, 2, 1.0, 0.5, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(&parse_model(&mrf_to_json(&m)).unwrap().mrf, &m);
        let im = random_ising(n, 1.0, 0.5, &mut rng_from_seed(seed));
        prop_assert_eq!(parse_model(&ising_to_json(&im)).unwrap().ising, Some(im));
    }

    #[test]
    fn true_marginals_form_valid_families(n in 3usize..7, seed in any::<u64>()) {
        let m = random_ising(n, 1.0, 0.5, &mut rng_from_seed(seed)).to_mrf();
        let mu = exact_gibbs(&m).unwrap();
        let fam = embed_distribution(&mu, 3).unwrap();
        prop_assert!(validate_local_family(&fam).is_valid());
        // the surrogate only ever overestimates the entropy of a real distribution
        let h = entropy(&mu);
        for s in [vec![], vec![0], vec![0, 1]] {
            prop_assert!(pseudo_entropy(&fam, &s).unwrap() >= h - 1e-10);
        }
    }

    #[test]
    fn sweep_meets_bound_on_arbitrary_tables(m in 4usize..8, ell in 1usize..4, seed in any::<u64>()) {
        let ell = ell.min(m - 2);
        let mu = table(m, 2, seed);
        let rep = select_conditioning_set(&mu, ell, 2, &SelectOptions::default()).unwrap();
        prop_assert!(rep.bound_met);
        prop_assert!(rep.avg_total_correlation <= 4.0 * 2f64.ln() / ell as f64 + 1e-9);
        prop_assert!(rep.chosen_set.len() <= ell);
    }

    #[test]
    fn full_subset_is_the_model(n in 2usize..9, seed in any::<u64>()) {
        let m = random_mrf(n, 2, 2, 1.0, 0.5, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(induce_rescaled(&m, &(0..n).rev().collect::<Vec<_>>()).unwrap(), m);
    }
}

#[test]
fn sk_samples_are_reproducible() {
    let a = sk_sample(10, 1.0, Noise::Rademacher, 5).unwrap();
    assert_eq!(a, sk_sample(10, 1.0, Noise::Rademacher, 5).unwrap());
    assert_ne!(a, sk_sample(10, 1.0, Noise::Rademacher, 6).unwrap());
    let off = a.couplings().get(0, 1).abs();
    assert!((off - 1.0 / 10f64.sqrt()).abs() < 1e-15);
}

#[test]
fn relaxation_bounds_small_models() {
    for seed in 0..4 {
        let im = random_ising(5, 0.8, 0.4, &mut rng_from_seed(seed));
        let m = im.to_mrf();
        let f = common::free_energy(&im);
        let rep = solve_sa(&m, 1, 1e-3).unwrap();
        assert!(rep.upper_bound >= f - 1e-6, "{} < {f}", rep.upper_bound);
        assert!(validate_local_family(&rep.family).is_valid());
    }
}
