use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use spmtc::bench::{bench_run, BenchPlan, DataSource};
use spmtc::synth::{synth_multitask, SynthSpec};
use spmtc::{run_method, Execution, FitConfig, Method};

const BACKENDS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn spec(m: usize) -> SynthSpec {
    SynthSpec {
        m,
        n: 120,
        d: 20,
        outlier_fraction: 0.05,
        ..SynthSpec::default()
    }
}

fn fits(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    for m in [2, 8] {
        let (problem, _) = synth_multitask(&spec(m)).unwrap();
        for (name, execution) in BACKENDS {
            let config = FitConfig {
                execution,
                ..FitConfig::default()
            };
            group.bench_with_input(BenchmarkId::new(format!("spmtc-s/{name}"), m), &problem, |b, p| {
                b.iter(|| run_method(p, Method::SpmtcSoft, &config).unwrap())
            });
        }
    }
    group.finish();
}

fn grids(c: &mut Criterion) {
    let mut group = c.benchmark_group("bench_run");
    group.sample_size(10);
    for (name, execution) in BACKENDS {
        let mut plan = BenchPlan::new(
            DataSource::Synth(spec(2)),
            vec![Method::Km, Method::Lssmtc, Method::SpmtcHard],
            (0..4).collect(),
        );
        plan.lambda1_grid = vec![0.25, 0.75];
        plan.l_grid = vec![2];
        plan.base.execution = execution;
        group.bench_function(name, |b| b.iter(|| bench_run(&plan).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, fits, grids);
criterion_main!(benches);
