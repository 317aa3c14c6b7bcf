//! Synthetic multi-task benchmarks: Gaussian clusters whose centers live in a
//! shared low-dimensional subspace, perturbed per task, with optional uniform
//! outliers.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kv::{render, KvFile};
use crate::model::MultiTaskProblem;

/// Half-width multiplier applied to the clean data's bounding box before
/// outliers are drawn from it.
pub const OUTLIER_BOX_INFLATION: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub m: usize,
    pub d: usize,
    pub c: usize,
    pub l_true: usize,
    /// Examples per task.
    pub n: usize,
    /// Minimum distance between cluster centers.
    pub separation: f64,
    /// Expected norm of each task's per-center perturbation.
    pub task_offset: f64,
    pub noise_sd: f64,
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            m: 2,
            d: 20,
            c: 3,
            l_true: 2,
            n: 120,
            separation: 8.0,
            task_offset: 1.0,
            noise_sd: 1.0,
            outlier_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.m == 0 || self.d == 0 || self.c == 0 {
            return bad("m, d and c must be positive".into());
        }
        if self.l_true == 0 || self.l_true > self.d {
            return bad(format!("l_true = {} must lie in 1..={}", self.l_true, self.d));
        }
        if self.n < self.c {
            return bad(format!("n = {} is smaller than c = {}", self.n, self.c));
        }
        if !(0.0..0.5).contains(&self.outlier_fraction) {
            return bad(format!("outlier_fraction = {} outside [0, 0.5)", self.outlier_fraction));
        }
        if !(self.noise_sd >= 0.0) || !(self.separation >= 0.0) || !(self.task_offset >= 0.0) {
            return bad("noise_sd, separation and task_offset must be nonnegative".into());
        }
        Ok(())
    }

    /// Reads a spec; missing keys keep their defaults.
    pub fn from_kv(kv: &KvFile, prefix: &str) -> Result<Self> {
        let key = |k: &str| format!("{prefix}{k}");
        let def = SynthSpec::default();
        let spec = SynthSpec {
            m: kv.parsed(&key("m"))?.unwrap_or(def.m),
            d: kv.parsed(&key("d"))?.unwrap_or(def.d),
            c: kv.parsed(&key("c"))?.unwrap_or(def.c),
            l_true: kv.parsed(&key("l_true"))?.unwrap_or(def.l_true),
            n: kv.parsed(&key("n"))?.unwrap_or(def.n),
            separation: kv.parsed(&key("separation"))?.unwrap_or(def.separation),
            task_offset: kv.parsed(&key("task_offset"))?.unwrap_or(def.task_offset),
            noise_sd: kv.parsed(&key("noise_sd"))?.unwrap_or(def.noise_sd),
            outlier_fraction: kv.parsed(&key("outlier_fraction"))?.unwrap_or(def.outlier_fraction),
            seed: kv.parsed(&key("seed"))?.unwrap_or(def.seed),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::load(path)?, "")
    }

    pub fn to_kv_text(&self) -> String {
        render(&[
            ("m", self.m.to_string()),
            ("d", self.d.to_string()),
            ("c", self.c.to_string()),
            ("l_true", self.l_true.to_string()),
            ("n", self.n.to_string()),
            ("separation", self.separation.to_string()),
            ("task_offset", self.task_offset.to_string()),
            ("noise_sd", self.noise_sd.to_string()),
            ("outlier_fraction", self.outlier_fraction.to_string()),
            ("seed", self.seed.to_string()),
        ])
    }

    /// Size of cluster `j` when `n` examples are split as evenly as possible,
    /// remainder to the lowest indices.
    pub fn cluster_size(&self, j: usize) -> usize {
        self.n / self.c + usize::from(j < self.n % self.c)
    }
}

/// What the generator planted.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Orthonormal `d × l_true` basis of the shared subspace.
    pub basis: DMatrix<f64>,
    /// Per task, `d × c` centers after the task perturbation.
    pub centers: Vec<DMatrix<f64>>,
    pub labels: Vec<Vec<usize>>,
    /// Per task, sorted indices of the examples replaced by outliers.
    pub outliers: Vec<Vec<usize>>,
}

/// Center coordinates inside the subspace; adjacent centers are
/// `separation` apart.
fn subspace_layout(l: usize, c: usize, separation: f64) -> DMatrix<f64> {
    let mut coords = DMatrix::zeros(l, c);
    if c == 1 {
        return coords;
    }
    if l == 1 {
        for j in 0..c {
            coords[(0, j)] = (j as f64 - (c - 1) as f64 / 2.0) * separation;
        }
    } else {
        let radius = separation / (2.0 * (PI / c as f64).sin());
        for j in 0..c {
            let angle = 2.0 * PI * j as f64 / c as f64;
            coords[(0, j)] = radius * angle.cos();
            coords[(1, j)] = radius * angle.sin();
        }
    }
    coords
}

pub fn synth_multitask(spec: &SynthSpec) -> Result<(MultiTaskProblem, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (d, c) = (spec.d, spec.c);

    let gauss = DMatrix::from_fn(d, spec.l_true, |_, _| rng.sample::<f64, _>(StandardNormal));
    let basis = gauss.qr().q();
    let shared = &basis * subspace_layout(spec.l_true, c, spec.separation);

    let offset_sd = spec.task_offset / (d as f64).sqrt();
    let mut tasks = Vec::with_capacity(spec.m);
    let mut centers = Vec::with_capacity(spec.m);
    let mut labels = Vec::with_capacity(spec.m);
    let mut outliers = Vec::with_capacity(spec.m);
    for _ in 0..spec.m {
        let task_centers = &shared + DMatrix::from_fn(d, c, |_, _| offset_sd * rng.sample::<f64, _>(StandardNormal));
        let task_labels: Vec<usize> = (0..c)
            .flat_map(|j| std::iter::repeat_n(j, spec.cluster_size(j)))
            .collect();
        let mut x = DMatrix::from_fn(d, spec.n, |r, i| {
            task_centers[(r, task_labels[i])] + spec.noise_sd * rng.sample::<f64, _>(StandardNormal)
        });

        let count = (spec.outlier_fraction * spec.n as f64).floor() as usize;
        let mut idx = Vec::new();
        if count > 0 {
            idx = sample(&mut rng, spec.n, count).into_vec();
            idx.sort_unstable();
            let lo: Vec<f64> = (0..d).map(|r| x.row(r).min()).collect();
            let hi: Vec<f64> = (0..d).map(|r| x.row(r).max()).collect();
            for &i in &idx {
                for r in 0..d {
                    let mid = 0.5 * (lo[r] + hi[r]);
                    let half = 0.5 * (hi[r] - lo[r]) * OUTLIER_BOX_INFLATION;
                    x[(r, i)] = if half > 0.0 {
                        rng.random_range(mid - half..=mid + half)
                    } else {
                        mid
                    };
                }
            }
        }
        tasks.push(x);
        centers.push(task_centers);
        labels.push(task_labels);
        outliers.push(idx);
    }

    let raw: Vec<Vec<i64>> = labels.iter().map(|l| l.iter().map(|&v| v as i64).collect()).collect();
    let problem = MultiTaskProblem::new(tasks, c)?.with_labels(raw)?;
    Ok((
        problem,
        GroundTruth {
            basis,
            centers,
            labels,
            outliers,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let spec = SynthSpec {
            outlier_fraction: 0.1,
            ..SynthSpec::default()
        };
        let (a, ga) = synth_multitask(&spec).unwrap();
        let (b, gb) = synth_multitask(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
        let (c, _) = synth_multitask(&SynthSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn remainder_goes_to_low_clusters() {
        let spec = SynthSpec {
            n: 11,
            c: 3,
            ..SynthSpec::default()
        };
        let (_, truth) = synth_multitask(&spec).unwrap();
        let counts: Vec<usize> = (0..3)
            .map(|j| truth.labels[0].iter().filter(|&&l| l == j).count())
            .collect();
        assert_eq!(counts, vec![4, 4, 3]);
    }

    #[test]
    fn clean_points_stay_near_their_center() {
        // per-coordinate deviation beyond 6 sd has probability ~2e-9
        let spec = SynthSpec {
            seed: 5,
            ..SynthSpec::default()
        };
        let (problem, truth) = synth_multitask(&spec).unwrap();
        let mut within = 0usize;
        let mut total = 0usize;
        for k in 0..spec.m {
            let x = problem.task(k);
            for i in 0..spec.n {
                let center = truth.centers[k].column(truth.labels[k][i]);
                let dev = (x.column(i) - center).amax();
                within += usize::from(dev <= 6.0 * spec.noise_sd);
                total += 1;
            }
        }
        assert!(within as f64 / total as f64 >= 0.999);
    }

    #[test]
    fn centers_respect_separation_and_subspace() {
        let spec = SynthSpec {
            task_offset: 0.0,
            ..SynthSpec::default()
        };
        let (_, truth) = synth_multitask(&spec).unwrap();
        let ctr = &truth.centers[0];
        for a in 0..spec.c {
            for b in (a + 1)..spec.c {
                let dist = (ctr.column(a) - ctr.column(b)).norm();
                assert!(dist >= spec.separation - 1e-9);
            }
            let proj = &truth.basis * (truth.basis.transpose() * ctr.column(a));
            assert!((proj - ctr.column(a)).norm() < 1e-9);
        }
        let gram = truth.basis.transpose() * &truth.basis;
        assert!((gram - DMatrix::<f64>::identity(spec.l_true, spec.l_true)).amax() < 1e-12);
    }

    #[test]
    fn outliers_are_counted_and_keep_labels() {
        let spec = SynthSpec {
            outlier_fraction: 0.05,
            ..SynthSpec::default()
        };
        let (problem, truth) = synth_multitask(&spec).unwrap();
        for k in 0..spec.m {
            assert_eq!(truth.outliers[k].len(), 6);
            assert_eq!(problem.labels().unwrap()[k], truth.labels[k]);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SynthSpec {
            l_true: 30,
            ..SynthSpec::default()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            outlier_fraction: 0.5,
            ..SynthSpec::default()
        }
        .validate()
        .is_err());
    }
}
