//! Cause-effect pair benchmark: loading, scoring and metrics.
//!
//! A benchmark directory holds `pairNNNN.txt` data files (whitespace-separated
//! numeric rows) and a `pairmeta.txt` with one line per pair:
//!
//! ```text
//! id cause-start cause-end effect-start effect-end [weight]
//! ```
//!
//! Column numbers are 1-based and inclusive; `id` names the data file
//! (`1` and `0001` both mean `pair0001.txt`). A missing weight means 1.0.

use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::{mean_pair_score, Direction, RunConfig};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub const METADATA_FILE: &str = "pairmeta.txt";

/// Published reference figures, reported next to our own.
pub mod reference {
    pub const ACCURACY: f64 = 0.96;
    pub const AUC: f64 = 0.96;
    pub const MAJORITY_BASELINE: f64 = 0.722;
    pub const ANM_RESIT: f64 = 0.63;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: u32,
    /// Row-major `n x k`.
    pub data: Vec<Vec<f64>>,
    /// 0-based, half-open.
    pub cause_cols: Range<usize>,
    pub effect_cols: Range<usize>,
    pub weight: f64,
    /// Relative to `x` = the lower-numbered block and `y` = the other.
    pub ground_truth: Direction,
}

impl PairRecord {
    pub fn new(id: u32, data: Vec<Vec<f64>>, cause_cols: Range<usize>, effect_cols: Range<usize>, weight: f64) -> Result<Self> {
        let k = data.first().map_or(0, Vec::len);
        let bad = |msg: String| Error::config(format!("pair {id}: {msg}"));
        if data.len() < 10 {
            return Err(bad(format!("{} rows, need at least 10", data.len())));
        }
        if cause_cols.is_empty() || effect_cols.is_empty() || cause_cols.end > k || effect_cols.end > k {
            return Err(bad(format!("column ranges {cause_cols:?} / {effect_cols:?} do not fit {k} columns")));
        }
        if cause_cols.start < effect_cols.end && effect_cols.start < cause_cols.end {
            return Err(bad("cause and effect columns overlap".into()));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(bad(format!("weight {weight} must be nonnegative")));
        }
        let ground_truth = if cause_cols.start < effect_cols.start { Direction::XtoY } else { Direction::YtoX };
        Ok(PairRecord { id, data, cause_cols, effect_cols, weight, ground_truth })
    }

    /// Both blocks are single columns.
    pub fn is_scalar(&self) -> bool {
        self.cause_cols.len() == 1 && self.effect_cols.len() == 1
    }

    /// The `(x, y)` columns of a scalar pair.
    pub fn xy(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if !self.is_scalar() {
            return None;
        }
        let (a, b) = (self.cause_cols.start.min(self.effect_cols.start), self.cause_cols.start.max(self.effect_cols.start));
        Some((self.data.iter().map(|r| r[a]).collect(), self.data.iter().map(|r| r[b]).collect()))
    }
}

/// Parses whitespace-separated numeric rows. Blank lines are skipped.
pub fn parse_pair_file(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line: k + 1, msg: format!("not a number: {t:?}") }))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse { line: k + 1, msg: format!("expected {} values, found {}", first.len(), row.len()) });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Writes rows in the format read by [`parse_pair_file`], at full precision.
pub fn format_pair_file(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
struct MetaRow {
    id: u32,
    cause: Range<usize>,
    effect: Range<usize>,
    weight: f64,
}

fn parse_metadata(text: &str) -> Result<Vec<MetaRow>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: k + 1, msg };
        if fields.len() != 5 && fields.len() != 6 {
            return Err(perr(format!("expected 5 or 6 fields, found {}", fields.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| perr(format!("not an integer: {s:?}")));
        let cols = |a: &str, b: &str| -> Result<Range<usize>> {
            let (a, b) = (int(a)?, int(b)?);
            if a == 0 || b < a {
                return Err(perr(format!("bad column range {a}-{b}")));
            }
            Ok(a - 1..b)
        };
        let weight = match fields.get(5) {
            Some(w) => w.parse::<f64>().map_err(|_| perr(format!("not a number: {w:?}")))?,
            None => 1.0,
        };
        out.push(MetaRow {
            id: int(fields[0])? as u32,
            cause: cols(fields[1], fields[2])?,
            effect: cols(fields[3], fields[4])?,
            weight,
        });
    }
    Ok(out)
}

pub fn pair_file_name(id: u32) -> String {
    format!("pair{id:04}.txt")
}

/// Loads every pair listed in the directory's metadata file.
///
/// An empty directory yields no pairs and a logged warning.
pub fn load_benchmark(dir: &Path) -> Result<Vec<PairRecord>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    if entries.count() == 0 {
        log::warn!("benchmark directory {} is empty", dir.display());
        return Ok(Vec::new());
    }
    let meta_path = dir.join(METADATA_FILE);
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    parse_metadata(&meta)?
        .into_iter()
        .map(|m| {
            let path = dir.join(pair_file_name(m.id));
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let data = parse_pair_file(&text).map_err(|e| match e {
                Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
                other => other,
            })?;
            PairRecord::new(m.id, data, m.cause, m.effect, m.weight)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub id: u32,
    pub weight: f64,
    pub ground_truth: Direction,
    /// Mean of the per-seed scores; its sign gives `predicted`.
    pub mean_score: f64,
    pub seed_scores: Vec<i64>,
    pub predicted: Direction,
    pub correct: bool,
}

impl PairResult {
    pub fn new(id: u32, weight: f64, ground_truth: Direction, seed_scores: Vec<i64>) -> Self {
        let mean_score = seed_scores.iter().map(|&s| s as f64).sum::<f64>() / seed_scores.len().max(1) as f64;
        let predicted = Direction::from_score(mean_score);
        PairResult { id, weight, ground_truth, mean_score, seed_scores, predicted, correct: predicted == ground_truth }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub pairs_included: usize,
    pub weighted_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub weighted_accuracy: f64,
    pub unweighted_accuracy: f64,
    /// NaN when every pair is correct or every pair is wrong. Serialized as
    /// `null` in JSON.
    #[serde(deserialize_with = "nan_from_null")]
    pub auc: f64,
    pub cumulative_curve: Vec<CurvePoint>,
}

fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Accuracy, confidence AUC and the cumulative accuracy curve.
///
/// AUC is the weighted probability that a correct pair has a larger `|mean
/// score|` than a wrong one, ties counting one half. The curve adds pairs in
/// order of decreasing `|mean score|`, ties by ascending id.
pub fn compute_metrics(results: &[PairResult]) -> Result<Metrics> {
    if results.is_empty() {
        return Err(Error::config("no scored pairs"));
    }
    let total_w: f64 = results.iter().map(|r| r.weight).sum();
    let correct_w: f64 = results.iter().filter(|r| r.correct).map(|r| r.weight).sum();
    let unweighted_accuracy = results.iter().filter(|r| r.correct).count() as f64 / results.len() as f64;

    let (mut num, mut pos_w, mut neg_w) = (0.0, 0.0, 0.0);
    for p in results.iter().filter(|r| r.correct) {
        pos_w += p.weight;
        for q in results.iter().filter(|r| !r.correct) {
            let (a, b) = (p.mean_score.abs(), q.mean_score.abs());
            let win = if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            num += p.weight * q.weight * win;
        }
    }
    for q in results.iter().filter(|r| !r.correct) {
        neg_w += q.weight;
    }
    let auc = if pos_w > 0.0 && neg_w > 0.0 { num / (pos_w * neg_w) } else { f64::NAN };

    let mut order: Vec<&PairResult> = results.iter().collect();
    order.sort_by(|a, b| b.mean_score.abs().total_cmp(&a.mean_score.abs()).then(a.id.cmp(&b.id)));
    let (mut w, mut c) = (0.0, 0.0);
    let mut cumulative_curve: Vec<CurvePoint> = order
        .iter()
        .enumerate()
        .map(|(k, r)| {
            w += r.weight;
            if r.correct {
                c += r.weight;
            }
            CurvePoint { pairs_included: k + 1, weighted_accuracy: c / w }
        })
        .collect();
    // The running sums reach the totals in a different order; pin the last point.
    let weighted_accuracy = correct_w / total_w;
    if let Some(last) = cumulative_curve.last_mut() {
        last.weighted_accuracy = weighted_accuracy;
    }
    Ok(Metrics { weighted_accuracy, unweighted_accuracy, auc, cumulative_curve })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub id: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    /// Sorted by id.
    pub pairs: Vec<PairResult>,
    pub skipped_non_scalar: Vec<u32>,
    pub failed: Vec<PairFailure>,
    pub loaded: usize,
    /// `None` when no pair was scored.
    pub metrics: Option<Metrics>,
}

/// Scores every scalar pair over `cfg.n_seeds` seeds and decides by the mean.
/// Pair `id` uses seeds `derive_seed(seed, id) + k`.
pub fn run_tuebingen(pairs: &[PairRecord], cfg: &RunConfig, seed: u64) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let outcomes: Vec<(u32, Option<Result<PairResult>>)> = pairs
        .par_iter()
        .map(|p| {
            let scored = p.xy().map(|(x, y)| {
                mean_pair_score(&x, &y, cfg, derive_seed(seed, u64::from(p.id)))
                    .map(|(_, s)| PairResult::new(p.id, p.weight, p.ground_truth, s.iter().map(|s| s.score).collect()))
            });
            (p.id, scored)
        })
        .collect();
    let mut report = BenchmarkReport { pairs: Vec::new(), skipped_non_scalar: Vec::new(), failed: Vec::new(), loaded: pairs.len(), metrics: None };
    for (id, o) in outcomes {
        match o {
            None => report.skipped_non_scalar.push(id),
            Some(Ok(r)) => report.pairs.push(r),
            Some(Err(e)) => report.failed.push(PairFailure { id, error: e.to_string() }),
        }
    }
    report.pairs.sort_by_key(|r| r.id);
    report.skipped_non_scalar.sort();
    report.failed.sort_by_key(|f| f.id);
    if !report.pairs.is_empty() {
        report.metrics = Some(compute_metrics(&report.pairs)?);
    }
    Ok(report)
}
