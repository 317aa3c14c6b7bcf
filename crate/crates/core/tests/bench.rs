use std::collections::BTreeMap;
use std::fs;

use spmtc::bench::{bench_run, BenchPlan, DataSource, RUNS_FILE, SUMMARY_CSV_FILE, SUMMARY_MD_FILE};
use spmtc::synth::SynthSpec;
use spmtc::{Error, Method};

fn tiny(m: usize) -> SynthSpec {
    SynthSpec {
        m,
        n: 24,
        d: 5,
        ..SynthSpec::default()
    }
}

fn quick_plan(m: usize, methods: Vec<Method>, seeds: u64) -> BenchPlan {
    let mut plan = BenchPlan::new(DataSource::Synth(tiny(m)), methods, (0..seeds).collect());
    plan.lambda1_grid = vec![0.3, 0.7, 0.9];
    plan.l_grid = vec![2];
    plan.base.inner_max_iters = 5;
    plan.base.warm_start_iters = 2;
    plan
}

#[test]
fn row_count_matches_the_grid() {
    let plan = quick_plan(1, vec![Method::Lssmtc, Method::SpmtcHard], 20);
    let report = bench_run(&plan).unwrap();
    assert_eq!(report.rows.len(), 120);
    assert!(report.failures.is_empty());
}

type GroupKey = (String, String, String, String);

fn parse_runs(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

#[test]
fn summary_matches_recomputation_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = quick_plan(2, vec![Method::Km, Method::Lssmtc, Method::SpmtcSoft], 4);
    plan.out_dir = Some(dir.path().to_path_buf());
    let report = bench_run(&plan).unwrap();
    let runs = parse_runs(&fs::read_to_string(dir.path().join(RUNS_FILE)).unwrap());
    assert_eq!(runs.len(), report.rows.len());

    // group by (method, task, lambda1, l) and recompute means
    let mut groups: BTreeMap<GroupKey, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &runs {
        let g = groups
            .entry((
                r["method"].clone(),
                r["task"].clone(),
                r["lambda1"].clone(),
                r["l"].clone(),
            ))
            .or_default();
        g.0.push(r["acc"].parse().unwrap());
        g.1.push(r["nmi"].parse().unwrap());
    }
    let summary = parse_runs(&fs::read_to_string(dir.path().join(SUMMARY_CSV_FILE)).unwrap());
    assert_eq!(summary.len(), 3 * 2);
    for s in &summary {
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let candidates: Vec<(f64, f64, &str, &str)> = groups
            .iter()
            .filter(|(k, _)| k.0 == s["method"] && k.1 == s["task"])
            .map(|(k, (a, n))| (mean(a), mean(n), k.2.as_str(), k.3.as_str()))
            .collect();
        let best = candidates
            .iter()
            .fold(None::<&(f64, f64, &str, &str)>, |b, c| match b {
                Some(b) if b.0 > c.0 || (b.0 == c.0 && b.1 >= c.1) => Some(b),
                _ => Some(c),
            })
            .unwrap();
        let acc: f64 = s["acc_mean"].parse().unwrap();
        let nmi: f64 = s["nmi_mean"].parse().unwrap();
        assert!((acc - best.0).abs() <= 1e-12, "{s:?}");
        assert!((nmi - best.1).abs() <= 1e-12, "{s:?}");
        let chosen = &groups[&(
            s["method"].clone(),
            s["task"].clone(),
            s["lambda1"].clone(),
            s["l"].clone(),
        )];
        assert!((mean(&chosen.0) - acc).abs() <= 1e-12);
    }
    // exactly one best per task carries no p-value
    for task in ["0", "1"] {
        let bests = summary
            .iter()
            .filter(|s| s["task"] == task && s["p_vs_best"] == "na")
            .count();
        assert!(bests >= 1);
        assert!(summary
            .iter()
            .filter(|s| s["task"] == task)
            .any(|s| s["comparable"] == "true"));
    }
    let md = fs::read_to_string(dir.path().join(SUMMARY_MD_FILE)).unwrap();
    assert!(md.contains("## Task 0") && md.contains("## Task 1"));
    assert!(dir.path().join("runs").read_dir().unwrap().count() == report.rows.len() / 2);
}

#[test]
fn reruns_are_byte_identical_except_wall_time() {
    let strip = |text: String| -> String {
        text.lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(a, _)| a).to_string())
            .collect::<Vec<_>>()
            .join("\n")
    };
    let mut outputs = Vec::new();
    for execution in [spmtc::Execution::Parallel, spmtc::Execution::Sequential] {
        let dir = tempfile::tempdir().unwrap();
        let mut plan = quick_plan(2, vec![Method::AllKm, Method::SpmtcHard], 3);
        plan.out_dir = Some(dir.path().to_path_buf());
        plan.save_runs = false;
        plan.workers = 2;
        plan.base.execution = execution;
        bench_run(&plan).unwrap();
        outputs.push((
            strip(fs::read_to_string(dir.path().join(RUNS_FILE)).unwrap()),
            fs::read_to_string(dir.path().join(SUMMARY_CSV_FILE)).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn all_failed_method_aborts() {
    let mut plan = quick_plan(1, vec![Method::Km, Method::Lssmtc], 2);
    plan.base.ridge_eps = 0.0;
    match bench_run(&plan) {
        Err(Error::AllRunsFailed { method, summary }) => {
            assert_eq!(method, "lssmtc");
            assert!(summary.contains("ridge_eps"), "{summary}");
        }
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn plan_is_rejected_before_running() {
    let mut plan = quick_plan(1, vec![Method::Lssmtc], 1);
    plan.l_grid = vec![6];
    assert!(matches!(bench_run(&plan), Err(Error::InvalidConfig(_))));
}
