//! Synthetic data-generating processes and z-scoring.
//!
//! All bivariate processes draw `x ~ N(0, 1)` and add Gaussian noise
//! `sigma * N(0, 1)` to a fixed mechanism. Draws come from a single stream
//! derived from the caller's seed: first all `x` values, then all noise terms.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{tag, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DgpKind {
    #[serde(rename = "sin")]
    Sin,
    #[serde(rename = "exp")]
    Exp05,
    #[serde(rename = "cubic")]
    Cubic,
    #[serde(rename = "square")]
    Square,
    #[serde(rename = "linear")]
    Linear2x,
}

impl DgpKind {
    pub const ALL: [DgpKind; 5] = [DgpKind::Sin, DgpKind::Exp05, DgpKind::Cubic, DgpKind::Square, DgpKind::Linear2x];

    /// The noise-free mechanism `f` in `y = f(x) + e`.
    pub fn mechanism(self, x: f64) -> f64 {
        match self {
            DgpKind::Sin => x.sin(),
            DgpKind::Exp05 => (0.5 * x).exp(),
            DgpKind::Cubic => x * x * x,
            DgpKind::Square => x * x,
            DgpKind::Linear2x => 2.0 * x,
        }
    }

    pub fn is_injective(self) -> bool {
        !matches!(self, DgpKind::Square)
    }

    pub fn name(self) -> &'static str {
        match self {
            DgpKind::Sin => "sin",
            DgpKind::Exp05 => "exp",
            DgpKind::Cubic => "cubic",
            DgpKind::Square => "square",
            DgpKind::Linear2x => "linear",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            DgpKind::Sin => "y = sin(x) + e",
            DgpKind::Exp05 => "y = exp(0.5x) + e",
            DgpKind::Cubic => "y = x^3 + e",
            DgpKind::Square => "y = x^2 + e",
            DgpKind::Linear2x => "y = 2x + e",
        }
    }
}

impl std::str::FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DgpKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown DGP `{s}` (expected sin, exp, cubic, square or linear)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum XDistribution {
    #[default]
    StdNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    pub noise_sigma: f64,
    #[serde(default)]
    pub x_dist: XDistribution,
}

impl DgpSpec {
    pub fn new(kind: DgpKind, n: usize, noise_sigma: f64) -> Self {
        DgpSpec { kind, n, noise_sigma, x_dist: XDistribution::StdNormal }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("sample count must be positive"));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise sigma must be positive"));
        }
        Ok(())
    }
}

/// Mean and population standard deviation removed by [`zscore`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScoreMeta {
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_y: f64,
    pub std_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub zscore_meta: Option<ZScoreMeta>,
}

impl SampleSet {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::ShapeMismatch { expected: x.len(), actual: y.len() });
        }
        Ok(SampleSet { x, y, zscore_meta: None })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn standardized(&self) -> bool {
        self.zscore_meta.is_some()
    }

    /// Both columns z-scored, with the removed moments recorded.
    pub fn zscored(&self) -> Result<SampleSet> {
        let zx = zscore(&self.x)?;
        let zy = zscore(&self.y)?;
        Ok(SampleSet {
            x: zx.values,
            y: zy.values,
            zscore_meta: Some(ZScoreMeta { mean_x: zx.mean, std_x: zx.std, mean_y: zy.mean, std_y: zy.std }),
        })
    }

    /// Two-column CSV with header `x,y`, values in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::io("<csv>", e.into());
        w.write_record(["x", "y"]).map_err(wrap)?;
        for (x, y) in self.x.iter().zip(&self.y) {
            w.write_record([x.to_string(), y.to_string()]).map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads a two-column numeric CSV. A non-numeric first row is treated as a header.
    pub fn read_csv<R: Read>(input: R) -> Result<SampleSet> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 1;
            let record = record.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            if record.len() != 2 {
                return Err(Error::Parse { line, msg: format!("expected 2 columns, found {}", record.len()) });
            }
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => {
                    x.push(v[0]);
                    y.push(v[1]);
                }
                Err(_) if idx == 0 => continue,
                Err(e) => return Err(Error::Parse { line, msg: e.to_string() }),
            }
        }
        SampleSet::new(x, y)
    }
}

/// Draws `spec.n` rows of a bivariate process.
pub fn sample_bivariate(spec: &DgpSpec, seed: u64) -> Result<SampleSet> {
    spec.validate()?;
    let mut stream = Stream::derived(seed, tag::DATA);
    let x: Vec<f64> = (0..spec.n).map(|_| stream.normal()).collect();
    let y: Vec<f64> = x.iter().map(|&xi| spec.kind.mechanism(xi) + spec.noise_sigma * stream.normal()).collect();
    SampleSet::new(x, y)
}

/// Samples from the three-variable structural model
/// `x2 = x1^2 + e1`, `x3 = x2 + 0.5 x1 + e2`, `x1 ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scm3Sample {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
}

impl Scm3Sample {
    /// Columns as `[x1, x2, x3]`.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        vec![self.x1.clone(), self.x2.clone(), self.x3.clone()]
    }
}

pub fn sample_scm3(n: usize, noise_sigmas: (f64, f64), seed: u64) -> Result<Scm3Sample> {
    if n == 0 {
        return Err(Error::config("sample count must be positive"));
    }
    let (s1, s2) = noise_sigmas;
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(Error::config("noise sigmas must be positive"));
    }
    let mut stream = Stream::derived(seed, tag::DATA);
    let x1: Vec<f64> = (0..n).map(|_| stream.normal()).collect();
    let x2: Vec<f64> = x1.iter().map(|&a| a * a + s1 * stream.normal()).collect();
    let x3: Vec<f64> = x1.iter().zip(&x2).map(|(&a, &b)| b + 0.5 * a + s2 * stream.normal()).collect();
    Ok(Scm3Sample { x1, x2, x3 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZScore {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation (divides by `n`).
    pub std: f64,
}

/// Standardizes a series to mean 0 and population variance 1.
pub fn zscore(series: &[f64]) -> Result<ZScore> {
    if series.len() < 2 {
        return Err(Error::DegenerateSeries(format!("need at least 2 values, got {}", series.len())));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::DegenerateSeries("series has zero variance".into()));
    }
    let values = series.iter().map(|v| (v - mean) / std).collect();
    Ok(ZScore { values, mean, std })
}

/// Inverse of [`zscore`].
pub fn unstandardize(values: &[f64], mean: f64, std: f64) -> Vec<f64> {
    values.iter().map(|v| v * std + mean).collect()
}
