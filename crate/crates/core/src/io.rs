//! On-disk formats: task matrices, label files, problem manifests and fit
//! results.
//!
//! Dense matrix files start with a `d n` header followed by `d` rows of `n`
//! whitespace-separated values. Sparse files start with `d n nnz` followed by
//! `nnz` lines of `row col value` (0-indexed; duplicates are summed). Label and
//! assignment files hold one integer per line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::driver::RunResult;
use crate::error::{Error, Result};
use crate::kv::{render, split_list, KvFile};
use crate::model::{FitConfig, MultiTaskProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Dense,
    SparseTriplet,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dense" => Ok(MatrixFormat::Dense),
            "sparse-triplet" | "sparse" => Ok(MatrixFormat::SparseTriplet),
            other => Err(Error::InvalidConfig(format!("unknown matrix format `{other}`"))),
        }
    }
}

impl std::fmt::Display for MatrixFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatrixFormat::Dense => "dense",
            MatrixFormat::SparseTriplet => "sparse-triplet",
        })
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_num<T: FromStr>(tok: &str, path: &Path, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::format(path, format!("cannot parse {what} `{tok}`")))
}

fn parse_dense(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::format(path, "empty matrix file"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::format(
            path,
            format!("dense header must be `d n`, got `{header}`"),
        ));
    }
    let d: usize = parse_num(dims[0], path, "row count")?;
    let n: usize = parse_num(dims[1], path, "column count")?;
    let mut data = Vec::with_capacity(d * n);
    let mut rows = 0;
    for line in lines {
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(parse_num::<f64>(tok, path, "value")?);
        }
        if data.len() - before != n {
            return Err(Error::format(
                path,
                format!("row {rows} has {} values, header says {n}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != d {
        return Err(Error::format(path, format!("file has {rows} rows, header says {d}")));
    }
    Ok(DMatrix::from_row_slice(d, n, &data))
}

fn parse_sparse(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::format(path, "empty matrix file"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(Error::format(
            path,
            format!("sparse header must be `d n nnz`, got `{header}`"),
        ));
    }
    let d: usize = parse_num(dims[0], path, "row count")?;
    let n: usize = parse_num(dims[1], path, "column count")?;
    let nnz: usize = parse_num(dims[2], path, "entry count")?;
    let mut out = DMatrix::zeros(d, n);
    let mut seen = 0;
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::format(
                path,
                format!("triplet line must be `row col value`, got `{line}`"),
            ));
        }
        let r: usize = parse_num(toks[0], path, "row index")?;
        let c: usize = parse_num(toks[1], path, "column index")?;
        let v: f64 = parse_num(toks[2], path, "value")?;
        if r >= d || c >= n {
            return Err(Error::format(path, format!("entry ({r}, {c}) outside {d}x{n}")));
        }
        out[(r, c)] += v;
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::format(
            path,
            format!("file has {seen} entries, header says {nnz}"),
        ));
    }
    Ok(out)
}

pub fn read_matrix(path: &Path, format: MatrixFormat) -> Result<DMatrix<f64>> {
    let text = read_text(path)?;
    match format {
        MatrixFormat::Dense => parse_dense(&text, path),
        MatrixFormat::SparseTriplet => parse_sparse(&text, path),
    }
}

pub fn write_dense(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    let mut out = format!("{} {}\n", x.nrows(), x.ncols());
    for r in 0..x.nrows() {
        let row: Vec<String> = (0..x.ncols()).map(|c| x[(r, c)].to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_sparse(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    let mut body = String::new();
    let mut nnz = 0;
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            let v = x[(r, c)];
            if v != 0.0 {
                let _ = writeln!(body, "{r} {c} {v}");
                nnz += 1;
            }
        }
    }
    write_text(path, &format!("{} {} {nnz}\n{body}", x.nrows(), x.ncols()))
}

pub fn read_labels(path: &Path) -> Result<Vec<i64>> {
    read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| parse_num(l, path, "label"))
        .collect()
}

pub fn read_assignments(path: &Path) -> Result<Vec<usize>> {
    read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| parse_num(l, path, "cluster index"))
        .collect()
}

pub fn write_integers<T: ToString>(path: &Path, values: &[T]) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 3);
    for v in values {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    write_text(path, &out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskEntry {
    pub data: PathBuf,
    pub labels: Option<PathBuf>,
    pub format: MatrixFormat,
}

/// Which files make up a problem. Relative paths resolve against the
/// manifest's directory.
///
/// ```text
/// d = 20
/// c = 3
/// tasks = task0.txt, task1.txt
/// labels = labels0.txt, labels1.txt   # optional
/// formats = dense, sparse-triplet     # optional, default dense
/// normalize = false                   # optional
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemManifest {
    pub tasks: Vec<TaskEntry>,
    pub d: usize,
    pub c: usize,
    pub normalize: bool,
}

impl ProblemManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let kv = KvFile::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let d = kv.required("d")?;
        let c = kv.required("c")?;
        let normalize = kv.parsed("normalize")?.unwrap_or(false);
        let data: Vec<PathBuf> = kv
            .get("tasks")
            .map(|v| split_list(v).map(resolve).collect())
            .unwrap_or_default();
        if data.is_empty() {
            return Err(Error::format(path, "manifest lists no tasks"));
        }
        let labels: Option<Vec<PathBuf>> = kv.get("labels").map(|v| split_list(v).map(resolve).collect());
        if let Some(l) = &labels {
            if l.len() != data.len() {
                return Err(Error::format(
                    path,
                    format!("{} label files for {} tasks", l.len(), data.len()),
                ));
            }
        }
        let formats: Vec<MatrixFormat> = kv.list("formats")?.unwrap_or_default();
        if !formats.is_empty() && formats.len() != data.len() {
            return Err(Error::format(
                path,
                format!("{} formats for {} tasks", formats.len(), data.len()),
            ));
        }
        let tasks = data
            .into_iter()
            .enumerate()
            .map(|(k, data)| TaskEntry {
                data,
                labels: labels.as_ref().map(|l| l[k].clone()),
                format: formats.get(k).copied().unwrap_or(MatrixFormat::Dense),
            })
            .collect();
        Ok(Self { tasks, d, c, normalize })
    }

    /// Writes the manifest with paths relative to `dir` where possible.
    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new("."));
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned();
        let mut pairs = vec![
            ("d", self.d.to_string()),
            ("c", self.c.to_string()),
            (
                "tasks",
                self.tasks.iter().map(|t| rel(&t.data)).collect::<Vec<_>>().join(", "),
            ),
            (
                "formats",
                self.tasks
                    .iter()
                    .map(|t| t.format.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            ("normalize", self.normalize.to_string()),
        ];
        if self.tasks.iter().all(|t| t.labels.is_some()) {
            pairs.push((
                "labels",
                self.tasks
                    .iter()
                    .map(|t| rel(t.labels.as_ref().expect("checked")))
                    .collect::<Vec<_>>()
                    .join(", "),
            ));
        }
        write_text(path, &render(&pairs))
    }
}

/// Scales every nonzero column to unit Euclidean norm.
pub fn normalize_columns(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
}

pub fn load_problem(manifest: &ProblemManifest) -> Result<MultiTaskProblem> {
    let mut tasks = Vec::with_capacity(manifest.tasks.len());
    let mut labels = Vec::new();
    for entry in &manifest.tasks {
        let mut x = read_matrix(&entry.data, entry.format)?;
        if x.nrows() != manifest.d {
            return Err(Error::format(
                &entry.data,
                format!(
                    "matrix has {} features, manifest declares d = {}",
                    x.nrows(),
                    manifest.d
                ),
            ));
        }
        if manifest.normalize {
            normalize_columns(&mut x);
        }
        if let Some(lp) = &entry.labels {
            let lab = read_labels(lp)?;
            if lab.len() != x.ncols() {
                return Err(Error::format(
                    lp,
                    format!("{} labels for {} examples", lab.len(), x.ncols()),
                ));
            }
            labels.push(lab);
        }
        tasks.push(x);
    }
    let problem = MultiTaskProblem::new(tasks, manifest.c)?;
    if labels.is_empty() {
        Ok(problem)
    } else {
        problem.with_labels(labels)
    }
}

/// Overrides fields of `base` from `prefix`-qualified keys of `kv`. Keys:
/// `lambda1`, `l`, `inner_max_iters`, `inner_rel_tol`, `warm_start_iters`,
/// `pace_start_fraction`, `pace_step_fraction`, `ridge_eps`, `seed`, `mode`,
/// `init`. Other keys are ignored.
pub fn fit_config_from_kv(kv: &KvFile, prefix: &str, base: FitConfig) -> Result<FitConfig> {
    let key = |k: &str| format!("{prefix}{k}");
    Ok(FitConfig {
        lambda1: kv.parsed(&key("lambda1"))?.unwrap_or(base.lambda1),
        l: kv.parsed(&key("l"))?.unwrap_or(base.l),
        inner_max_iters: kv.parsed(&key("inner_max_iters"))?.unwrap_or(base.inner_max_iters),
        inner_rel_tol: kv.parsed(&key("inner_rel_tol"))?.unwrap_or(base.inner_rel_tol),
        warm_start_iters: kv.parsed(&key("warm_start_iters"))?.unwrap_or(base.warm_start_iters),
        pace_start_fraction: kv
            .parsed(&key("pace_start_fraction"))?
            .unwrap_or(base.pace_start_fraction),
        pace_step_fraction: kv
            .parsed(&key("pace_step_fraction"))?
            .unwrap_or(base.pace_step_fraction),
        ridge_eps: kv.parsed(&key("ridge_eps"))?.unwrap_or(base.ridge_eps),
        seed: kv.parsed(&key("seed"))?.unwrap_or(base.seed),
        mode: kv.parsed(&key("mode"))?.unwrap_or(base.mode),
        init: kv.parsed(&key("init"))?.unwrap_or(base.init),
        execution: base.execution,
    })
}

pub const HEADER_FILE: &str = "header.txt";
pub const TRACE_FILE: &str = "trace.csv";

pub fn assignments_file(k: usize) -> String {
    format!("assignments_task{k}.txt")
}

/// CSV rendering of the objective trace.
pub fn trace_csv(result: &RunResult) -> String {
    let m = result.assignments.len();
    let mut out = String::from("outer_round,inner_iter,within,cross,total,reg");
    for k in 0..m {
        let _ = write!(out, ",fraction_task{k}");
    }
    out.push('\n');
    for r in result.trace.iter() {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            r.outer_round, r.inner_iter, r.within, r.cross, r.total, r.regularizer
        );
        for f in &r.selected_fraction {
            let _ = write!(out, ",{f}");
        }
        out.push('\n');
    }
    out
}

/// Run header as `key: value` lines. `wall_time_ms` is the only
/// non-deterministic entry.
pub fn header_text(result: &RunResult) -> String {
    let c = &result.config;
    render(&[
        ("method", result.method.to_string()),
        ("seed", result.seed.to_string()),
        ("mode", c.mode.to_string()),
        ("lambda1", c.lambda1.to_string()),
        ("l", c.l.to_string()),
        ("inner_max_iters", c.inner_max_iters.to_string()),
        ("inner_rel_tol", c.inner_rel_tol.to_string()),
        ("warm_start_iters", c.warm_start_iters.to_string()),
        ("pace_start_fraction", c.pace_start_fraction.to_string()),
        ("pace_step_fraction", c.pace_step_fraction.to_string()),
        ("ridge_eps", c.ridge_eps.to_string()),
        ("init", c.init.to_string()),
        ("tasks", result.assignments.len().to_string()),
        ("trace_len", result.trace.len().to_string()),
        ("final_objective", result.final_objective().to_string()),
        ("wall_time_ms", format!("{:.3}", result.wall_time.as_secs_f64() * 1e3)),
    ])
}

/// Writes assignments (one file per task), `trace.csv` and `header.txt` into
/// `dir`, creating it if needed.
pub fn save_result(result: &RunResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, a) in result.assignments.iter().enumerate() {
        write_integers(&dir.join(assignments_file(k)), a)?;
    }
    write_text(&dir.join(TRACE_FILE), &trace_csv(result))?;
    write_text(&dir.join(HEADER_FILE), &header_text(result))
}

pub fn read_header(dir: &Path) -> Result<KvFile> {
    KvFile::load(&dir.join(HEADER_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_parse_checks_shape() {
        let p = Path::new("mem");
        let x = parse_dense("2 3\n1 2 3\n4 5 6\n", p).unwrap();
        assert_eq!(x, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        assert!(parse_dense("2 3\n1 2 3\n", p).is_err());
        assert!(parse_dense("2 3\n1 2\n4 5 6\n", p).is_err());
        assert!(parse_dense("", p).is_err());
    }

    #[test]
    fn sparse_parse_sums_duplicates() {
        let p = Path::new("mem");
        let x = parse_sparse("2 2 3\n0 0 1.5\n1 1 2\n0 0 0.5\n", p).unwrap();
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]));
        assert!(parse_sparse("2 2 1\n2 0 1\n", p).is_err());
        assert!(parse_sparse("2 2 2\n0 0 1\n", p).is_err());
    }

    #[test]
    fn normalization_gives_unit_columns() {
        let mut x = DMatrix::from_column_slice(2, 3, &[3.0, 4.0, 0.0, 0.0, 1e-3, -2e-3]);
        normalize_columns(&mut x);
        assert!((x.column(0).norm() - 1.0).abs() < 1e-12);
        assert_eq!(x.column(1).norm(), 0.0);
        assert!((x.column(2).norm() - 1.0).abs() < 1e-12);
    }
}
