use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spmtc::bench::{bench_run, BenchPlan, RUNS_FILE, SUMMARY_MD_FILE};
use spmtc::io::{
    fit_config_from_kv, load_problem, read_assignments, read_labels, save_result, write_dense, write_integers,
    MatrixFormat, ProblemManifest, TaskEntry,
};
use spmtc::kv::{render, KvFile};
use spmtc::metrics::evaluate;
use spmtc::synth::{synth_multitask, SynthSpec};
use spmtc::{run_method, Error, Execution, FitConfig, Method, Result, WeightMode};

#[derive(Parser)]
#[command(name = "spmtc", version, about = "Self-paced multi-task clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multi-task problem from a spec file.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one method on a problem manifest.
    Fit(FitArgs),
    /// Run a benchmark plan.
    Bench {
        #[arg(long)]
        plan: PathBuf,
        /// Overrides the plan's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        sequential: bool,
    },
    /// Score assignment files against label files, one pair per task.
    Eval {
        #[arg(long, required = true, num_args = 1..)]
        assignments: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        labels: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Defaults to the method matching `--mode`, else spmtc-s.
    #[arg(long)]
    method: Option<Method>,
    /// `key: value` file of solver settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<WeightMode>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    sequential: bool,
}

fn generate(spec_path: &Path, out: &Path) -> Result<()> {
    let spec = SynthSpec::load(spec_path)?;
    let (problem, truth) = synth_multitask(&spec)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let mut tasks = Vec::new();
    for (k, x) in problem.tasks().iter().enumerate() {
        let data = out.join(format!("task{k}.txt"));
        let labels = out.join(format!("labels{k}.txt"));
        write_dense(&data, x)?;
        write_integers(&labels, &truth.labels[k])?;
        write_integers(&out.join(format!("outliers{k}.txt")), &truth.outliers[k])?;
        tasks.push(TaskEntry {
            data,
            labels: Some(labels),
            format: MatrixFormat::Dense,
        });
    }
    ProblemManifest {
        tasks,
        d: problem.d(),
        c: problem.c(),
        normalize: false,
    }
    .save(&out.join("problem.txt"))?;
    write_dense(&out.join("basis.txt"), &truth.basis)?;
    std::fs::write(out.join("spec.txt"), spec.to_kv_text()).map_err(|e| Error::Io {
        path: out.join("spec.txt"),
        source: e,
    })?;
    println!("wrote {} tasks to {}", problem.m(), out.display());
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    let problem = load_problem(&ProblemManifest::load(&args.manifest)?)?;
    let mut config = match &args.config {
        Some(p) => fit_config_from_kv(&KvFile::load(p)?, "", FitConfig::default())?,
        None => FitConfig::default(),
    };
    let method = match (args.method, args.mode) {
        (Some(m), _) => m,
        (None, Some(WeightMode::None)) => Method::Lssmtc,
        (None, Some(WeightMode::Hard)) => Method::SpmtcHard,
        (None, _) => Method::SpmtcSoft,
    };
    if let Some(mode) = args.mode {
        if method.mode().is_some_and(|m| m != mode) {
            return Err(Error::InvalidConfig(format!(
                "--mode {mode} conflicts with --method {method}"
            )));
        }
    }
    config.seed = args.seed.unwrap_or(config.seed);
    config.lambda1 = args.lambda1.unwrap_or(config.lambda1);
    config.l = args.l.unwrap_or(config.l);
    if args.sequential {
        config.execution = Execution::Sequential;
    }
    let result = run_method(&problem, method, &config)?;
    save_result(&result, &args.out)?;
    println!("method: {method}");
    println!("final_objective: {}", result.final_objective());
    if let Some(labels) = problem.labels() {
        for (k, (truth, pred)) in labels.iter().zip(&result.assignments).enumerate() {
            let rep = evaluate(truth, pred)?;
            println!("task{k}_acc: {}", rep.acc);
            println!("task{k}_nmi: {}", rep.nmi);
        }
    }
    Ok(())
}

fn bench(plan_path: &Path, out: Option<PathBuf>, workers: Option<usize>, sequential: bool) -> Result<()> {
    let mut plan = BenchPlan::load(plan_path)?;
    if out.is_some() {
        plan.out_dir = out;
    }
    if let Some(w) = workers {
        plan.workers = w;
    }
    if sequential {
        plan.base.execution = Execution::Sequential;
    }
    let report = bench_run(&plan)?;
    println!("runs: {}", report.rows.len());
    println!("failures: {}", report.failures.len());
    if let Some(dir) = &plan.out_dir {
        println!("wrote {} and {} to {}", RUNS_FILE, SUMMARY_MD_FILE, dir.display());
    }
    Ok(())
}

fn eval(assignments: &[PathBuf], labels: &[PathBuf]) -> Result<()> {
    if assignments.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} assignment files for {} label files",
            assignments.len(),
            labels.len()
        )));
    }
    for (k, (a, l)) in assignments.iter().zip(labels).enumerate() {
        let pred = read_assignments(a)?;
        let raw = read_labels(l)?;
        let mut distinct = raw.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let truth: Vec<usize> = raw
            .iter()
            .map(|v| distinct.binary_search(v).expect("collected above"))
            .collect();
        let rep = evaluate(&truth, &pred)?;
        print!(
            "{}",
            render(&[
                (&format!("task{k}_acc"), rep.acc.to_string()),
                (&format!("task{k}_nmi"), rep.nmi.to_string()),
                (&format!("task{k}_n"), rep.n.to_string()),
                (&format!("task{k}_c_true"), rep.c_true.to_string()),
                (&format!("task{k}_c_pred"), rep.c_pred.to_string()),
            ])
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate { spec, out } => generate(spec, out),
        Command::Fit(args) => fit(args),
        Command::Bench {
            plan,
            out,
            workers,
            sequential,
        } => bench(plan, out.clone(), *workers, *sequential),
        Command::Eval { assignments, labels } => eval(assignments, labels),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
