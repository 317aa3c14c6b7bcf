//! Benchmark grids: every (method, grid point, seed) run, a CSV of per-task
//! scores, and a per-task summary with significance marks.
//!
//! A plan file is a `key: value` file:
//!
//! ```text
//! manifest = data/problem.txt      # or synth.* keys, see SynthSpec
//! methods = km, all-km, lssmtc, spmtc-h, spmtc-s
//! lambda1 = 0.25, 0.5, 0.75        # default 0.05..0.95 step 0.05
//! l = 2, 4                         # default 2, 4, 8, 16
//! seeds = 0, 1, 2                  # or `runs = 20` for seeds 0..20
//! out = results
//! workers = 4
//! save_runs = true
//! fit.inner_max_iters = 50         # any FitConfig key under `fit.`
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::driver::{run_method, Method, RunResult};
use crate::error::{Error, Result};
use crate::exec::with_workers;
use crate::io::{fit_config_from_kv, load_problem, save_result, write_text, ProblemManifest};
use crate::kv::KvFile;
use crate::metrics::{evaluate, welch_t_test};
use crate::model::{FitConfig, MultiTaskProblem};
use crate::synth::{synth_multitask, SynthSpec};

/// Significance level for the "comparable to the best" marks.
pub const ALPHA: f64 = 0.05;

pub const RUNS_FILE: &str = "runs.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const SUMMARY_CSV_FILE: &str = "summary.csv";
pub const SUMMARY_MD_FILE: &str = "summary.md";

pub fn default_lambda1_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

pub fn default_l_grid() -> Vec<usize> {
    vec![2, 4, 8, 16]
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Manifest(PathBuf),
    Synth(SynthSpec),
}

impl DataSource {
    pub fn load(&self) -> Result<MultiTaskProblem> {
        match self {
            DataSource::Manifest(path) => load_problem(&ProblemManifest::load(path)?),
            DataSource::Synth(spec) => Ok(synth_multitask(spec)?.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub source: DataSource,
    pub methods: Vec<Method>,
    pub lambda1_grid: Vec<f64>,
    pub l_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    /// Worker threads for independent runs; 0 means the global pool.
    pub workers: usize,
    /// Also write each run's result files under `runs/`.
    pub save_runs: bool,
    /// Settings shared by every run; λ1, l, mode and seed are overridden.
    pub base: FitConfig,
}

impl BenchPlan {
    pub fn new(source: DataSource, methods: Vec<Method>, seeds: Vec<u64>) -> Self {
        Self {
            source,
            methods,
            lambda1_grid: default_lambda1_grid(),
            l_grid: default_l_grid(),
            seeds,
            out_dir: None,
            workers: 0,
            save_runs: true,
            base: FitConfig::default(),
        }
    }

    /// Reads a plan. Relative paths resolve against `base_dir`.
    pub fn from_kv(kv: &KvFile, base_dir: &Path) -> Result<Self> {
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let source = match kv.get("manifest") {
            Some(p) => DataSource::Manifest(resolve(p)),
            None => DataSource::Synth(SynthSpec::from_kv(kv, "synth.")?),
        };
        let methods = kv.list("methods")?.unwrap_or_else(|| Method::ALL.to_vec());
        let seeds = match kv.list::<u64>("seeds")? {
            Some(s) => s,
            None => (0..kv.parsed::<u64>("runs")?.unwrap_or(20)).collect(),
        };
        let plan = Self {
            source,
            methods,
            lambda1_grid: kv.list("lambda1")?.unwrap_or_else(default_lambda1_grid),
            l_grid: kv.list("l")?.unwrap_or_else(default_l_grid),
            seeds,
            out_dir: kv.get("out").map(resolve),
            workers: kv.parsed("workers")?.unwrap_or(0),
            save_runs: kv.parsed("save_runs")?.unwrap_or(true),
            base: fit_config_from_kv(kv, "fit.", FitConfig::default())?,
        };
        plan.validate(None)?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KvFile::load(path)?;
        Self::from_kv(&kv, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks the invariants; `d` enables the `l ≤ d` check.
    pub fn validate(&self, d: Option<usize>) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.methods.is_empty() {
            return bad("plan lists no methods".into());
        }
        if self.seeds.is_empty() {
            return bad("plan lists no seeds".into());
        }
        if self.methods.iter().any(|m| m.uses_grid()) && (self.lambda1_grid.is_empty() || self.l_grid.is_empty()) {
            return bad("lambda1 and l grids must be nonempty".into());
        }
        if let Some(v) = self.lambda1_grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return bad(format!("lambda1 grid value {v} outside [0, 1]"));
        }
        if let Some(l) = self.l_grid.iter().find(|&&l| l == 0 || d.is_some_and(|d| l > d)) {
            return bad(format!("l grid value {l} must lie in 1..=d"));
        }
        Ok(())
    }

    /// Grid points for `method`; methods without hyperparameters get one.
    pub fn grid(&self, method: Method) -> Vec<GridPoint> {
        if !method.uses_grid() {
            return vec![GridPoint::default()];
        }
        self.lambda1_grid
            .iter()
            .flat_map(|&lambda1| {
                self.l_grid.iter().map(move |&l| GridPoint {
                    lambda1: Some(lambda1),
                    l: Some(l),
                })
            })
            .collect()
    }

    /// Every run in execution (and output) order.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &method in &self.methods {
            for point in self.grid(method) {
                for &seed in &self.seeds {
                    jobs.push(Job { method, point, seed });
                }
            }
        }
        jobs
    }
}

/// Hyperparameters of one grid cell; `None` for methods that ignore them.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GridPoint {
    pub lambda1: Option<f64>,
    pub l: Option<usize>,
}

impl GridPoint {
    fn key(&self) -> (u64, usize) {
        (
            self.lambda1.map_or(u64::MAX, f64::to_bits),
            self.l.unwrap_or(usize::MAX),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub method: Method,
    pub point: GridPoint,
    pub seed: u64,
}

impl Job {
    fn config(&self, base: &FitConfig) -> FitConfig {
        FitConfig {
            lambda1: self.point.lambda1.unwrap_or(base.lambda1),
            l: self.point.l.unwrap_or(base.l),
            seed: self.seed,
            ..base.clone()
        }
    }

    fn dir_name(&self) -> String {
        let fmt_opt = |v: Option<String>| v.unwrap_or_else(|| "na".into());
        format!(
            "{}_lambda1-{}_l-{}_seed-{}",
            self.method,
            fmt_opt(self.point.lambda1.map(|v| v.to_string())),
            fmt_opt(self.point.l.map(|v| v.to_string())),
            self.seed
        )
    }
}

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub method: Method,
    pub task: usize,
    pub point: GridPoint,
    pub seed: u64,
    pub acc: f64,
    pub nmi: f64,
    pub objective: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub job: Job,
    pub error: String,
}

/// Per-task aggregate at a method's best grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub task: usize,
    pub point: GridPoint,
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_sd: f64,
    pub nmi_mean: f64,
    pub nmi_sd: f64,
    /// Best on this task, or not significantly worse than the best in ACC.
    pub comparable: bool,
    /// Welch p-value against the best method; `None` for the best itself or
    /// when the test is undefined.
    pub p_vs_best: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<RunRow>,
    pub failures: Vec<Failure>,
    pub summary: Vec<SummaryRow>,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn score(problem: &MultiTaskProblem, job: &Job, result: &RunResult) -> Result<Vec<RunRow>> {
    let labels = problem
        .labels()
        .ok_or_else(|| Error::InvalidInput("benchmarking needs ground-truth labels".into()))?;
    let wall_ms = result.wall_time.as_secs_f64() * 1e3;
    labels
        .iter()
        .zip(&result.assignments)
        .enumerate()
        .map(|(task, (truth, pred))| {
            let rep = evaluate(truth, pred)?;
            Ok(RunRow {
                method: job.method,
                task,
                point: job.point,
                seed: job.seed,
                acc: rep.acc,
                nmi: rep.nmi,
                objective: result.final_objective(),
                wall_ms,
            })
        })
        .collect()
}

/// Picks each method's best grid point per task (highest mean ACC, ties by
/// mean NMI, then by grid order) and marks the methods comparable to the best.
pub fn summarize(rows: &[RunRow], methods: &[Method], tasks: usize) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for task in 0..tasks {
        let mut best_rows: Vec<(SummaryRow, Vec<f64>)> = Vec::new();
        for &method in methods {
            let mut cells: Vec<(GridPoint, Vec<f64>, Vec<f64>)> = Vec::new();
            let mut index: BTreeMap<(u64, usize), usize> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.method == method && r.task == task) {
                let i = *index.entry(r.point.key()).or_insert_with(|| {
                    cells.push((r.point, Vec::new(), Vec::new()));
                    cells.len() - 1
                });
                cells[i].1.push(r.acc);
                cells[i].2.push(r.nmi);
            }
            let mut best: Option<(SummaryRow, Vec<f64>)> = None;
            for (point, accs, nmis) in cells {
                let (acc_mean, acc_sd) = mean_sd(&accs);
                let (nmi_mean, nmi_sd) = mean_sd(&nmis);
                let better = best
                    .as_ref()
                    .is_none_or(|(b, _)| acc_mean > b.acc_mean || (acc_mean == b.acc_mean && nmi_mean > b.nmi_mean));
                if better {
                    best = Some((
                        SummaryRow {
                            method,
                            task,
                            point,
                            runs: accs.len(),
                            acc_mean,
                            acc_sd,
                            nmi_mean,
                            nmi_sd,
                            comparable: false,
                            p_vs_best: None,
                        },
                        accs,
                    ));
                }
            }
            best_rows.extend(best);
        }
        let Some(top) = (0..best_rows.len()).reduce(|a, b| {
            let (x, y) = (&best_rows[a].0, &best_rows[b].0);
            if y.acc_mean > x.acc_mean || (y.acc_mean == x.acc_mean && y.nmi_mean > x.nmi_mean) {
                b
            } else {
                a
            }
        }) else {
            continue;
        };
        let top_accs = best_rows[top].1.clone();
        let top_mean = best_rows[top].0.acc_mean;
        for (i, (row, accs)) in best_rows.iter_mut().enumerate() {
            if i == top {
                row.comparable = true;
                continue;
            }
            match welch_t_test(accs, &top_accs) {
                Ok(t) => {
                    row.p_vs_best = Some(t.p);
                    row.comparable = t.p >= ALPHA;
                }
                Err(_) => row.comparable = row.acc_mean == top_mean,
            }
        }
        out.extend(best_rows.into_iter().map(|(r, _)| r));
    }
    out
}

/// Runs the whole plan. A failed run is recorded and excluded from the
/// aggregates; a method whose runs all fail aborts the benchmark.
pub fn bench_run(plan: &BenchPlan) -> Result<BenchReport> {
    let problem = plan.source.load()?;
    plan.validate(Some(problem.d()))?;
    if problem.labels().is_none() {
        return Err(Error::InvalidInput("benchmarking needs ground-truth labels".into()));
    }
    let jobs = plan.jobs();
    let outcomes: Vec<Result<(RunResult, Vec<RunRow>)>> = with_workers(plan.workers, || {
        plan.base.execution.map(jobs.len(), |i| {
            let job = &jobs[i];
            let result = run_method(&problem, job.method, &job.config(&plan.base))?;
            let rows = score(&problem, job, &result)?;
            Ok((result, rows))
        })
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut results = Vec::new();
    for (job, outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok((result, r)) => {
                rows.extend(r);
                results.push((*job, result));
            }
            Err(e) => failures.push(Failure {
                job: *job,
                error: e.to_string(),
            }),
        }
    }
    for &method in &plan.methods {
        if !rows.iter().any(|r| r.method == method) {
            let errors: Vec<&str> = failures
                .iter()
                .filter(|f| f.job.method == method)
                .map(|f| f.error.as_str())
                .collect();
            let mut distinct = errors.clone();
            distinct.sort_unstable();
            distinct.dedup();
            return Err(Error::AllRunsFailed {
                method: method.to_string(),
                summary: format!("{} runs; errors: {}", errors.len(), distinct.join("; ")),
            });
        }
    }

    let summary = summarize(&rows, &plan.methods, problem.m());
    let report = BenchReport {
        rows,
        failures,
        summary,
    };
    if let Some(dir) = &plan.out_dir {
        write_report(&report, dir)?;
        if plan.save_runs {
            for (job, result) in &results {
                save_result(result, &dir.join("runs").join(job.dir_name()))?;
            }
        }
    }
    Ok(report)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "na".into(), |v| v.to_string())
}

fn to_csv(header: &[&str], records: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in records {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn runs_csv(rows: &[RunRow]) -> String {
    to_csv(
        &[
            "method",
            "task",
            "lambda1",
            "l",
            "seed",
            "acc",
            "nmi",
            "objective",
            "wall_ms",
        ],
        rows.iter().map(|r| {
            vec![
                r.method.to_string(),
                r.task.to_string(),
                opt(r.point.lambda1),
                opt(r.point.l),
                r.seed.to_string(),
                r.acc.to_string(),
                r.nmi.to_string(),
                r.objective.to_string(),
                format!("{:.3}", r.wall_ms),
            ]
        }),
    )
}

pub fn failures_csv(failures: &[Failure]) -> String {
    to_csv(
        &["method", "lambda1", "l", "seed", "error"],
        failures.iter().map(|f| {
            vec![
                f.job.method.to_string(),
                opt(f.job.point.lambda1),
                opt(f.job.point.l),
                f.job.seed.to_string(),
                f.error.clone(),
            ]
        }),
    )
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    to_csv(
        &[
            "method",
            "task",
            "lambda1",
            "l",
            "runs",
            "acc_mean",
            "acc_sd",
            "nmi_mean",
            "nmi_sd",
            "comparable",
            "p_vs_best",
        ],
        summary.iter().map(|s| {
            vec![
                s.method.to_string(),
                s.task.to_string(),
                opt(s.point.lambda1),
                opt(s.point.l),
                s.runs.to_string(),
                s.acc_mean.to_string(),
                s.acc_sd.to_string(),
                s.nmi_mean.to_string(),
                s.nmi_sd.to_string(),
                s.comparable.to_string(),
                opt(s.p_vs_best),
            ]
        }),
    )
}

pub fn summary_markdown(report: &BenchReport) -> String {
    let mut out = String::from("# Benchmark summary\n\n");
    let _ = writeln!(
        out,
        "Mean ± sd over seeds at each method's best grid point. `*` marks the best method \
         and those not significantly worse in ACC (Welch t-test, α = {ALPHA}).\n"
    );
    let mut tasks: Vec<usize> = report.summary.iter().map(|s| s.task).collect();
    tasks.dedup();
    for task in tasks {
        let _ = writeln!(out, "## Task {task}\n");
        out.push_str("| method | lambda1 | l | runs | ACC | NMI | p vs best |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for s in report.summary.iter().filter(|s| s.task == task) {
            let mark = if s.comparable { " *" } else { "" };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.4} ± {:.4}{mark} | {:.4} ± {:.4} | {} |",
                s.method,
                opt(s.point.lambda1),
                opt(s.point.l),
                s.runs,
                s.acc_mean,
                s.acc_sd,
                s.nmi_mean,
                s.nmi_sd,
                s.p_vs_best.map_or_else(|| "-".into(), |p| format!("{p:.4}"))
            );
        }
        out.push('\n');
    }
    if !report.failures.is_empty() {
        let _ = writeln!(
            out,
            "{} failed runs are listed in `{FAILURES_FILE}`.",
            report.failures.len()
        );
    }
    out
}

pub fn write_report(report: &BenchReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(RUNS_FILE), &runs_csv(&report.rows))?;
    write_text(&dir.join(FAILURES_FILE), &failures_csv(&report.failures))?;
    write_text(&dir.join(SUMMARY_CSV_FILE), &summary_csv(&report.summary))?;
    write_text(&dir.join(SUMMARY_MD_FILE), &summary_markdown(report))
}
