//! Seeded statistical behaviour of the samplers, searches and validators.

mod common;

use common::{random_dataset, sparse_dataset};
use varsel::gibbs::{exact_target_enumeration, gibbs_run, inclusion_frequencies, subset_frequencies, GibbsConfig};
use varsel::linalg::fit_subset;
use varsel::ranking::{rank_forward_selection, rank_pvalues};
use varsel::search::{exhaustive_best_subset, multi_restart_search};
use varsel::selection::{pvalue_stopping, select_order, Criterion};
use varsel::validation::{monte_carlo_cv, R2Reference};
use varsel::{CostSpec, Dataset, FeatureSubset};

fn scaled(d: Dataset, f: f64) -> Dataset {
    d.map_columns(|_, c| c.iter().map(|v| v * f).collect()).unwrap()
}

#[test]
fn gibbs_chain_approaches_the_tempered_target() {
    let d = scaled(random_dataset(21, 20, 5, 0.2), 0.05);
    let mut config = GibbsConfig::new(2, 8000, 77);
    config.eta = 30.0;
    let chain = gibbs_run(&d, &config).unwrap();
    let exact = exact_target_enumeration(&d, 2, config.eta, CostSpec::default(), 100).unwrap();
    let tv = exact.total_variation(&subset_frequencies(&chain, config.burn_in));
    assert!(tv < 0.06, "total variation {tv}");
    let profile = inclusion_frequencies(&chain, 5, config.burn_in).unwrap();
    for (p, q) in profile.probabilities.iter().zip(&exact.profile.probabilities) {
        assert!((p - q).abs() < 0.05, "{p} vs {q}");
    }
}

#[test]
fn cold_chain_settles_on_the_best_subset() {
    let d = sparse_dataset(4, 60, 7, &[(1, 2.0), (4, -1.0), (5, 0.5)], 0.1);
    let best = exhaustive_best_subset(&d, 3, CostSpec::default(), 100).unwrap();
    let mut config = GibbsConfig::new(3, 400, 9);
    config.eta = 100.0;
    let chain = gibbs_run(&d, &config).unwrap();
    let freq = subset_frequencies(&chain, config.burn_in);
    let mode = freq.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(mode, &best.subset);
    assert!(freq[&best.subset] > 0.9);
}

#[test]
fn restarts_find_planted_support() {
    let truth = [(3, 1.0), (9, -2.0), (14, 0.7), (17, 1.5)];
    let d = sparse_dataset(8, 120, 20, &truth, 0.05);
    let r = multi_restart_search(&d, 4, 30, 1, 100, CostSpec::default()).unwrap();
    assert_eq!(r.subset.indices(), &[3, 9, 14, 17]);
    assert!(r.converged);
}

#[test]
fn cv_error_is_not_below_in_sample_error() {
    for seed in 0..5 {
        let d = sparse_dataset(seed, 80, 6, &[(0, 1.0), (2, -0.5)], 0.5);
        let s = FeatureSubset::new(vec![0, 2, 4]);
        let fit = fit_subset(&d, &s).unwrap();
        let cv = monte_carlo_cv(&d, &s, 0.8, 400, seed, R2Reference::TestMean).unwrap();
        assert!(cv.mse.mean >= fit.mse - 3.0 * cv.mse.std_dev, "seed {seed}");
        assert!(cv.mae.min <= cv.mae.mean && cv.mae.mean <= cv.mae.max);
        assert_eq!(cv.skipped_runs, 0);
    }
}

#[test]
fn train_mean_reference_lowers_test_r_squared() {
    let d = sparse_dataset(2, 50, 3, &[(0, 1.0)], 1.0);
    let s = FeatureSubset::new(vec![0]);
    let a = monte_carlo_cv(&d, &s, 0.8, 300, 5, R2Reference::TestMean).unwrap();
    let b = monte_carlo_cv(&d, &s, 0.8, 300, 5, R2Reference::TrainMean).unwrap();
    // Same splits; the test mean minimizes the test-set sum of squares.
    assert_eq!(a.mse, b.mse);
    assert!(b.r_squared.mean >= a.r_squared.mean);
}

#[test]
fn cv_does_not_depend_on_thread_count() {
    let d = random_dataset(6, 40, 4, 0.3);
    let s = FeatureSubset::new(vec![1, 3]);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monte_carlo_cv(&d, &s, 0.75, 500, 99, R2Reference::TestMean).unwrap())
    };
    let one = serde_json::to_string(&run(1)).unwrap();
    assert_eq!(one, serde_json::to_string(&run(4)).unwrap());
    assert_eq!(one, serde_json::to_string(&run(7)).unwrap());
}

#[test]
fn information_criteria_and_pvalues_on_sparse_data() {
    let mut bic_hits = 0;
    let mut pv_hits = 0;
    for seed in 0..20 {
        let d = sparse_dataset(100 + seed, 400, 6, &[(0, 1.0), (3, -1.0), (5, 0.8)], 0.3);
        let ranking = rank_forward_selection(&d).unwrap();
        let aic = select_order(&d, &ranking, Criterion::Aic).unwrap();
        let bic = select_order(&d, &ranking, Criterion::Bic).unwrap();
        let hqic = select_order(&d, &ranking, Criterion::Hqic).unwrap();
        assert!(bic.m_star <= hqic.m_star && hqic.m_star <= aic.m_star);
        bic_hits += usize::from(bic.m_star == 3);

        let pv = rank_pvalues(&d, 0.01).unwrap();
        let stop = pvalue_stopping(&d, &pv, 0.01).unwrap();
        pv_hits += usize::from(stop.m_star == 3 && pv.order.indices()[..3].iter().all(|k| [0, 3, 5].contains(k)));
    }
    assert!(bic_hits >= 17, "{bic_hits}");
    assert!(pv_hits >= 17, "{pv_hits}");
}

#[test]
fn temperature_limits_of_the_tempered_target() {
    // exp(−η·C): small η flattens the target, large η concentrates it on
    // the minimum-cost subset.
    let d = random_dataset(31, 25, 5, 0.5);
    let cost = CostSpec::default();
    let best = exhaustive_best_subset(&d, 2, cost, 100).unwrap().subset;
    let hot = exact_target_enumeration(&d, 2, 1e-9, cost, 100).unwrap();
    for (_, p) in &hot.subsets {
        assert!((p - 0.1).abs() < 1e-6);
    }
    let cold = exact_target_enumeration(&d, 2, 1e4, cost, 100).unwrap();
    let (top, p) = cold.subsets.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(top, &best);
    assert!(*p > 1.0 - 1e-9);
}
