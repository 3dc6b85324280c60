//! Datasets: CSV ingestion, MOS normalization, synthetic generation, splits.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::types::{MosSample, MOS_MAX, MOS_MIN};

pub const DEFAULT_FEATURE_DIM: usize = 16;
/// Range of synthetic per-sample rating std.
pub const SYNTH_STD_RANGE: (f64, f64) = (0.1, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    /// Scale the stored `mos` values live on.
    pub native_range: (f64, f64),
    pub samples: Vec<MosSample>,
}

fn check_range(range: (f64, f64)) -> Result<()> {
    if !(range.0.is_finite() && range.1.is_finite()) || !(range.0 < range.1) {
        return Err(Error::Degenerate(format!(
            "native range must satisfy lo < hi, got ({}, {})",
            range.0, range.1
        )));
    }
    Ok(())
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        native_range: (f64, f64),
        samples: Vec<MosSample>,
    ) -> Result<Self> {
        check_range(native_range)?;
        let dims = samples.first().map(|s| s.features.len());
        if let Some(d) = dims {
            if let Some(bad) = samples.iter().find(|s| s.features.len() != d) {
                return Err(Error::Validation(format!(
                    "sample {:?} has {} features, expected {d}",
                    bad.id,
                    bad.features.len()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            native_range,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Feature length shared by all samples (0 when features are absent).
    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn is_normalized(&self) -> bool {
        self.native_range == (MOS_MIN, MOS_MAX)
    }

    pub fn mos(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mos).collect()
    }
}

fn parse_field(field: &str, what: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        reason: format!("{what} {field:?} is not a number"),
    })
}

/// Reads `id,mos[,std][,f0..fk]` from any reader. `native_range` is the
/// scale of the `mos` column.
pub fn read_csv<R: Read>(reader: R, name: &str, native_range: (f64, f64)) -> Result<Dataset> {
    check_range(native_range)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                line: 1,
                reason: "empty file".into(),
            })
        }
    };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "mos" {
        return Err(Error::Parse {
            line: 1,
            reason: format!(
                "header must start with id,mos, got {:?}",
                header.iter().collect::<Vec<_>>()
            ),
        });
    }
    let has_std = cols.get(2) == Some(&"std");
    let feat_start = if has_std { 3 } else { 2 };
    for (k, c) in cols[feat_start..].iter().enumerate() {
        if *c != format!("f{k}") {
            return Err(Error::Parse {
                line: 1,
                reason: format!("expected feature column f{k}, got {c:?}"),
            });
        }
    }

    let mut samples = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != cols.len() {
            return Err(Error::Parse {
                line,
                reason: format!("expected {} fields, got {}", cols.len(), rec.len()),
            });
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                reason: "empty id".into(),
            });
        }
        let mos = parse_field(&rec[1], "mos", line)?;
        if !(native_range.0..=native_range.1).contains(&mos) {
            return Err(Error::Parse {
                line,
                reason: format!(
                    "mos {mos} outside native range [{}, {}]",
                    native_range.0, native_range.1
                ),
            });
        }
        let std = if has_std && !rec[2].trim().is_empty() {
            Some(parse_field(&rec[2], "std", line)?)
        } else {
            None
        };
        let features = (feat_start..rec.len())
            .map(|i| parse_field(&rec[i], "feature", line))
            .collect::<Result<Vec<_>>>()?;
        let sample = MosSample::new(id, features, mos, std).map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            line: 2,
            reason: "no data rows".into(),
        });
    }
    Dataset::new(name, native_range, samples)
}

pub fn load_csv(path: impl AsRef<Path>, native_range: (f64, f64)) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    read_csv(std::fs::File::open(path)?, &name, native_range)
}

/// Writes the dataset in the format read by [`read_csv`]. Floats use the
/// shortest representation that round-trips exactly.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let has_std = dataset.samples.iter().any(|s| s.std.is_some());
    let mut header = vec!["id".to_string(), "mos".to_string()];
    if has_std {
        header.push("std".into());
    }
    header.extend((0..dataset.feature_dim()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for s in &dataset.samples {
        let mut row = vec![s.id.clone(), s.mos.to_string()];
        if has_std {
            row.push(s.std.map_or_else(String::new, |v| v.to_string()));
        }
        row.extend(s.features.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(dataset, std::fs::File::create(path)?)
}

/// Maps `mos` linearly from the native range onto `[1, 5]`; `std` is
/// scaled by the same factor.
pub fn normalize_mos(dataset: &Dataset) -> Result<Dataset> {
    let (lo, hi) = dataset.native_range;
    check_range((lo, hi))?;
    let scale = (MOS_MAX - MOS_MIN) / (hi - lo);
    let samples = dataset
        .samples
        .iter()
        .map(|s| {
            let mos = (MOS_MIN + scale * (s.mos - lo)).clamp(MOS_MIN, MOS_MAX);
            MosSample::new(
                s.id.clone(),
                s.features.clone(),
                mos,
                s.std.map(|v| v * scale),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(dataset.name.clone(), (MOS_MIN, MOS_MAX), samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Affine in the features.
    Linear,
    /// Smooth saturating function of two feature projections.
    NonlinearSmooth,
    /// Three score clusters selected by the first feature.
    Multimodal,
}

impl Generator {
    pub const ALL: [Generator; 3] = [
        Generator::Linear,
        Generator::NonlinearSmooth,
        Generator::Multimodal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Linear => "linear",
            Generator::NonlinearSmooth => "nonlinear-smooth",
            Generator::Multimodal => "multimodal",
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown generator {s:?} (expected linear, nonlinear-smooth or multimodal)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub feature_dim: usize,
    pub generator: Generator,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(n: usize, generator: Generator, noise_std: f64, seed: u64) -> Self {
        Self {
            n,
            feature_dim: DEFAULT_FEATURE_DIM,
            generator,
            noise_std,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.feature_dim == 0 {
            return Err(Error::Config(format!(
                "synthetic data needs n >= 1 and feature_dim >= 1, got {} and {}",
                self.n, self.feature_dim
            )));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Config(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        if self.generator == Generator::Multimodal && self.feature_dim < 2 {
            return Err(Error::Config(
                "multimodal generator needs feature_dim >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// The noiseless score function of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    generator: Generator,
    /// Two unit-variance projections of the centred features.
    w1: Vec<f64>,
    w2: Vec<f64>,
}

const CLUSTER_CENTRES: [f64; 3] = [1.6, 3.0, 4.4];

impl SynthTruth {
    pub fn new(spec: &SynthSpec) -> Self {
        let mut r = rng::stream(spec.seed, streams::DATA_WEIGHTS);
        let mut draw = || {
            let w: Vec<f64> = (0..spec.feature_dim)
                .map(|_| StandardNormal.sample(&mut r))
                .collect();
            // Var[w·(x - 1/2)] = |w|² / 12 for x uniform on the cube
            let sd = (w.iter().map(|v| v * v).sum::<f64>() / 12.0).sqrt();
            w.into_iter().map(|v| v / sd).collect::<Vec<_>>()
        };
        let w1 = draw();
        let w2 = draw();
        Self {
            generator: spec.generator,
            w1,
            w2,
        }
    }

    fn project(w: &[f64], x: &[f64]) -> f64 {
        w.iter().zip(x).map(|(a, b)| a * (b - 0.5)).sum()
    }

    /// Score before noise and clamping.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let z1 = Self::project(&self.w1, x);
        match self.generator {
            Generator::Linear => 3.0 + 0.9 * z1,
            Generator::NonlinearSmooth => {
                let z2 = Self::project(&self.w2, x);
                3.0 + 1.6 * (0.8 * z1).tanh() + 0.35 * (std::f64::consts::PI * 0.5 * z2).sin()
            }
            Generator::Multimodal => {
                let k = ((x[0] * 3.0) as usize).min(2);
                // projection without the selector feature keeps clusters apart
                let z = Self::project(&self.w2[1..], &x[1..]);
                CLUSTER_CENTRES[k] + 0.25 * z
            }
        }
    }
}

/// Generates `spec.n` samples: features uniform on `[0,1]^d`,
/// `mos = clamp(g(x) + noise, 1, 5)`, std uniform in [`SYNTH_STD_RANGE`].
///
/// Also returns the noiseless scores `g(x)` before clamping.
pub fn generate_synthetic_with_truth(spec: &SynthSpec) -> Result<(Dataset, Vec<f64>)> {
    spec.validate()?;
    let truth = SynthTruth::new(spec);
    let mut feat_rng = rng::stream(spec.seed, streams::DATA_FEATURES);
    let mut noise_rng = rng::stream(spec.seed, streams::DATA_NOISE);
    let mut std_rng = rng::stream(spec.seed, streams::DATA_STD);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut samples = Vec::with_capacity(spec.n);
    let mut clean = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let x: Vec<f64> = (0..spec.feature_dim)
            .map(|_| feat_rng.random::<f64>())
            .collect();
        let g = truth.eval(&x);
        let mos = (g + noise.sample(&mut noise_rng)).clamp(MOS_MIN, MOS_MAX);
        let std = std_rng.random_range(SYNTH_STD_RANGE.0..=SYNTH_STD_RANGE.1);
        samples.push(MosSample::new(format!("s{i:05}"), x, mos, Some(std))?);
        clean.push(g);
    }
    let name = format!("synthetic-{}", spec.generator);
    Ok((Dataset::new(name, (MOS_MIN, MOS_MAX), samples)?, clean))
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    generate_synthetic_with_truth(spec).map(|(d, _)| d)
}

/// Seeded shuffle, then the first `round(train_frac · n)` samples form the
/// training part.
pub fn split(dataset: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Domain(format!(
            "train_frac must be in (0, 1), got {train_frac}"
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::stream(seed, streams::SPLIT));
    let n_train = (train_frac * dataset.len() as f64).round() as usize;
    let pick = |idx: &[usize], part: &str| Dataset {
        name: format!("{}-{part}", dataset.name),
        native_range: dataset.native_range,
        samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
    };
    Ok((
        pick(&order[..n_train], "train"),
        pick(&order[n_train..], "test"),
    ))
}
