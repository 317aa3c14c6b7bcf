use spmtc::driver::{per_task_kmeans, pooled_matrix, KMEANS_MAX_ITERS};
use spmtc::kmeans::kmeans_fit;
use spmtc::metrics::evaluate;
use spmtc::synth::{synth_multitask, SynthSpec};
use spmtc::updates::inner_fit;
use spmtc::{pooled_baseline, run_method, spmtc_fit, Error, FitConfig, Method, WeightMode, WeightState};

fn small(seed: u64, outliers: f64) -> SynthSpec {
    SynthSpec {
        n: 45,
        d: 8,
        seed,
        outlier_fraction: outliers,
        ..SynthSpec::default()
    }
}

#[test]
fn pooled_baseline_splits_one_clustering() {
    let (problem, _) = synth_multitask(&small(0, 0.0)).unwrap();
    let result = pooled_baseline(&problem, Method::AllKm, 3).unwrap();
    let fit = kmeans_fit(&pooled_matrix(&problem), problem.c(), 3, KMEANS_MAX_ITERS).unwrap();
    let joined: Vec<usize> = result.assignments.concat();
    assert_eq!(joined, fit.assignments);
    assert_eq!(result.assignments[0].len(), problem.n(0));
    assert!(result.state.is_none());
    assert!(matches!(
        pooled_baseline(&problem, Method::Km, 0),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn per_task_baseline_uses_offset_seeds() {
    let (problem, _) = synth_multitask(&small(1, 0.0)).unwrap();
    let result = per_task_kmeans(&problem, 10).unwrap();
    for k in 0..problem.m() {
        let fit = kmeans_fit(problem.task(k), problem.c(), 10 + k as u64, KMEANS_MAX_ITERS).unwrap();
        assert_eq!(result.assignments[k], fit.assignments);
    }
}

#[test]
fn unweighted_fit_is_one_inner_fit() {
    let (problem, _) = synth_multitask(&small(2, 0.0)).unwrap();
    let config = FitConfig {
        mode: WeightMode::None,
        seed: 4,
        ..FitConfig::default()
    };
    let result = spmtc_fit(&problem, &config).unwrap();
    let init = spmtc::driver::initial_state(&problem, config.l, config.seed, config.init).unwrap();
    let report = inner_fit(&problem, &init, &WeightState::unit(&problem), &config).unwrap();
    assert_eq!(result.trace.len(), report.trace.len());
    for (a, b) in result.trace.iter().zip(report.trace.iter()) {
        assert_eq!(a.outer_round, 1);
        assert_eq!(a.total, b.total);
    }
    assert_eq!(result.weight_history.len(), 1);
}

#[test]
fn self_paced_fit_runs_the_full_schedule() {
    let (problem, _) = synth_multitask(&small(3, 0.1)).unwrap();
    for mode in [WeightMode::Hard, WeightMode::Soft] {
        let config = FitConfig {
            mode,
            ..FitConfig::default()
        };
        let result = spmtc_fit(&problem, &config).unwrap();
        let warm = result.trace.iter().filter(|r| r.outer_round == 0).count();
        assert_eq!(warm, config.warm_start_iters);
        let rounds: std::collections::BTreeSet<usize> = result.trace.iter().map(|r| r.outer_round).collect();
        assert_eq!(rounds.into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(result.weight_history.len(), 6);
        if mode == WeightMode::Hard {
            let selected: Vec<f64> = result.weight_history.iter().map(|w| w.selected_fraction()[0]).collect();
            assert!(selected.windows(2).all(|p| p[0] <= p[1]), "{selected:?}");
            assert!(selected[0] >= 0.5);
        }
        assert!(result.trace.max_within_round_increase() <= 1e-9);
        // the last round weights every example
        let last = result.weight_history.last().unwrap();
        if mode == WeightMode::Hard {
            assert!(last.v.iter().flatten().all(|&x| x == 1.0));
        }
        let state = result.state.as_ref().unwrap();
        assert!(state.orthonormality_error() < 1e-8);
    }
}

#[test]
fn methods_are_deterministic_per_seed() {
    let (problem, _) = synth_multitask(&small(4, 0.05)).unwrap();
    for method in Method::ALL {
        let config = FitConfig {
            seed: 9,
            ..FitConfig::default()
        };
        let a = run_method(&problem, method, &config).unwrap();
        let b = run_method(&problem, method, &config).unwrap();
        assert_eq!(a.assignments, b.assignments, "{method}");
        assert_eq!(a.trace, b.trace, "{method}");
        let labels = problem.labels().unwrap();
        for (truth, pred) in labels.iter().zip(&a.assignments) {
            let rep = evaluate(truth, pred).unwrap();
            assert!((0.0..=1.0).contains(&rep.acc) && (0.0..=1.0).contains(&rep.nmi));
        }
    }
}

#[test]
fn invalid_config_is_rejected() {
    let (problem, _) = synth_multitask(&small(5, 0.0)).unwrap();
    for config in [
        FitConfig {
            l: 0,
            ..FitConfig::default()
        },
        FitConfig {
            l: 99,
            ..FitConfig::default()
        },
        FitConfig {
            lambda1: 1.5,
            ..FitConfig::default()
        },
        FitConfig {
            ridge_eps: 0.0,
            ..FitConfig::default()
        },
    ] {
        assert!(matches!(spmtc_fit(&problem, &config), Err(Error::InvalidConfig(_))));
    }
}
