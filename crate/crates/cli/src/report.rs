//! Output files: manifest, CSV tables and JSON reports.
//!
//! CSV headers are fixed per file and written even when there are no rows.
//! Floats use the shortest representation that round-trips.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cca_core::cca::{CellSummary, GradVarRow, GradVarSummary, GridRun, RunTraces};
use cca_core::graph::{Dag, LoopTrace};
use cca_core::mlp::TrainTrace;
use cca_core::tuebingen::{CurvePoint, PairResult};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub jobs: usize,
    pub timestamp: String,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(subcommand: &str, master_seed: u64, jobs: usize, config: &impl Serialize) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            jobs,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config: serde_json::to_value(config).expect("configs serialize"),
        }
    }
}

/// Destination directory for one run.
pub struct Emitter {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

impl Emitter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Emitter { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
        w.write_record(header).map_err(|e| io_err(&path, e))?;
        for r in rows {
            w.serialize(r).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(&path, e))?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}

/// A JSON report: the manifest plus the payload.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub manifest: &'a RunManifest,
    #[serde(flatten)]
    pub body: T,
}

pub const RUN_HEADER: &[&str] = &[
    "suite", "dgp", "arch_index", "architecture", "seed_index", "normalized", "t_fwd", "t_rev", "score", "direction", "correct",
    "fwd_capped", "rev_capped", "fwd_diverged", "rev_diverged", "error",
];

#[derive(Serialize)]
pub struct RunRow<'a> {
    suite: &'a str,
    dgp: &'a str,
    arch_index: usize,
    architecture: &'a str,
    seed_index: usize,
    normalized: bool,
    t_fwd: Option<u64>,
    t_rev: Option<u64>,
    score: Option<i64>,
    direction: Option<&'static str>,
    correct: bool,
    fwd_capped: Option<bool>,
    rev_capped: Option<bool>,
    fwd_diverged: Option<bool>,
    rev_diverged: Option<bool>,
    error: &'a str,
}

impl<'a> RunRow<'a> {
    pub fn new(suite: &'a str, r: &'a GridRun) -> Self {
        let s = r.score.as_ref();
        RunRow {
            suite,
            dgp: r.dgp.name(),
            arch_index: r.arch_index,
            architecture: &r.architecture,
            seed_index: r.seed_index,
            normalized: r.normalized,
            t_fwd: s.map(|s| s.t_fwd),
            t_rev: s.map(|s| s.t_rev),
            score: s.map(|s| s.score),
            direction: s.map(|s| s.direction.name()),
            correct: r.correct,
            fwd_capped: s.map(|s| s.fwd_capped),
            rev_capped: s.map(|s| s.rev_capped),
            fwd_diverged: s.map(|s| s.fwd_diverged),
            rev_diverged: s.map(|s| s.rev_diverged),
            error: r.error.as_deref().unwrap_or(""),
        }
    }
}

pub const SUMMARY_HEADER: &[&str] = &[
    "suite", "dgp", "group", "runs", "correct", "undecided", "errors", "mean_t_fwd", "sd_t_fwd", "mean_t_rev", "sd_t_rev", "mean_abs_score",
    "median_t_rev",
];

#[derive(Serialize)]
pub struct SummaryRow<'a> {
    suite: &'a str,
    dgp: &'a str,
    group: &'a str,
    runs: usize,
    correct: usize,
    undecided: usize,
    errors: usize,
    mean_t_fwd: f64,
    sd_t_fwd: f64,
    mean_t_rev: f64,
    sd_t_rev: f64,
    mean_abs_score: f64,
    median_t_rev: f64,
}

impl<'a> SummaryRow<'a> {
    /// `group` names the architecture, or `all`.
    pub fn new(suite: &'a str, dgp: &'a str, group: &'a str, c: &CellSummary) -> Self {
        SummaryRow {
            suite,
            dgp,
            group,
            runs: c.runs,
            correct: c.correct,
            undecided: c.undecided,
            errors: c.errors,
            mean_t_fwd: c.mean_t_fwd,
            sd_t_fwd: c.sd_t_fwd,
            mean_t_rev: c.mean_t_rev,
            sd_t_rev: c.sd_t_rev,
            mean_abs_score: c.mean_abs_score,
            median_t_rev: c.median_t_rev,
        }
    }
}

pub const SCORE_HEADER: &[&str] = &["suite", "dgp", "arch_index", "seed_index", "normalized", "score"];

#[derive(Serialize)]
pub struct ScoreRow<'a> {
    suite: &'a str,
    dgp: &'a str,
    arch_index: usize,
    seed_index: usize,
    normalized: bool,
    score: Option<i64>,
}

impl<'a> ScoreRow<'a> {
    pub fn new(suite: &'a str, r: &'a GridRun) -> Self {
        ScoreRow {
            suite,
            dgp: r.dgp.name(),
            arch_index: r.arch_index,
            seed_index: r.seed_index,
            normalized: r.normalized,
            score: r.score.as_ref().map(|s| s.score),
        }
    }
}

pub const BOUNDARY_HEADER: &[&str] = &["suite", "dgp", "arch_index", "seed_index", "t_fwd", "t_rev", "score", "correct"];

#[derive(Serialize)]
pub struct BoundaryRow<'a> {
    suite: &'a str,
    dgp: &'a str,
    arch_index: usize,
    seed_index: usize,
    t_fwd: Option<u64>,
    t_rev: Option<u64>,
    score: Option<i64>,
    correct: bool,
}

impl<'a> BoundaryRow<'a> {
    pub fn new(suite: &'a str, r: &'a GridRun) -> Self {
        let s = r.score.as_ref();
        BoundaryRow {
            suite,
            dgp: r.dgp.name(),
            arch_index: r.arch_index,
            seed_index: r.seed_index,
            t_fwd: s.map(|s| s.t_fwd),
            t_rev: s.map(|s| s.t_rev),
            score: s.map(|s| s.score),
            correct: r.correct,
        }
    }
}

pub const CURVE_HEADER: &[&str] = &["suite", "dgp", "arch_index", "seed_index", "normalized", "direction", "step", "holdout_mse"];

#[derive(Serialize)]
pub struct CurveRow<'a> {
    suite: &'a str,
    dgp: &'a str,
    arch_index: usize,
    seed_index: usize,
    normalized: bool,
    direction: &'static str,
    step: u64,
    holdout_mse: f64,
}

fn trace_rows<'a>(
    suite: &'a str,
    dgp: &'a str,
    arch_index: usize,
    seed_index: usize,
    normalized: bool,
    direction: &'static str,
    t: &'a TrainTrace,
) -> impl Iterator<Item = CurveRow<'a>> + 'a {
    t.eval_steps().zip(&t.holdout_mse).map(move |(step, &holdout_mse)| CurveRow {
        suite,
        dgp,
        arch_index,
        seed_index,
        normalized,
        direction,
        step,
        holdout_mse,
    })
}

/// Held-out loss curves of every run that kept its traces.
pub fn curve_rows<'a>(suite: &'a str, runs: &'a [GridRun]) -> impl Iterator<Item = CurveRow<'a>> + 'a {
    runs.iter().filter_map(move |r| r.traces.as_ref().map(|t| (r, t))).flat_map(move |(r, RunTraces { forward, reverse })| {
        trace_rows(suite, r.dgp.name(), r.arch_index, r.seed_index, r.normalized, "forward", forward).chain(trace_rows(
            suite,
            r.dgp.name(),
            r.arch_index,
            r.seed_index,
            r.normalized,
            "reverse",
            reverse,
        ))
    })
}

/// Loss curves of one seed of a single pair.
pub fn pair_curve_rows<'a>(
    seed_index: usize,
    normalized: bool,
    forward: &'a TrainTrace,
    reverse: &'a TrainTrace,
) -> impl Iterator<Item = CurveRow<'a>> + 'a {
    trace_rows("pair", "", 0, seed_index, normalized, "forward", forward).chain(trace_rows("pair", "", 0, seed_index, normalized, "reverse", reverse))
}

pub const GRADVAR_HEADER: &[&str] = &["dgp", "seed_index", "phase", "var_fwd", "var_rev", "ratio"];

#[derive(Serialize)]
pub struct GradVarCsvRow<'a> {
    dgp: &'a str,
    seed_index: usize,
    phase: u64,
    var_fwd: f64,
    var_rev: f64,
    ratio: f64,
}

impl<'a> From<&'a GradVarRow> for GradVarCsvRow<'a> {
    fn from(r: &'a GradVarRow) -> Self {
        GradVarCsvRow { dgp: r.dgp.name(), seed_index: r.seed_index, phase: r.phase, var_fwd: r.var_fwd, var_rev: r.var_rev, ratio: r.ratio }
    }
}

pub const GRADVAR_SUMMARY_HEADER: &[&str] = &["dgp", "phase", "mean_var_fwd", "mean_var_rev", "ratio", "ratio_of_means"];

#[derive(Serialize)]
pub struct GradVarSummaryRow<'a> {
    dgp: &'a str,
    phase: u64,
    mean_var_fwd: f64,
    mean_var_rev: f64,
    ratio: f64,
    ratio_of_means: f64,
}

impl<'a> From<&'a GradVarSummary> for GradVarSummaryRow<'a> {
    fn from(s: &'a GradVarSummary) -> Self {
        GradVarSummaryRow {
            dgp: s.dgp.name(),
            phase: s.phase,
            mean_var_fwd: s.mean_var_fwd,
            mean_var_rev: s.mean_var_rev,
            ratio: s.ratio,
            ratio_of_means: s.ratio_of_means,
        }
    }
}

fn edge_string(g: &Dag) -> String {
    g.edges().map(|(a, b)| format!("{a}->{b}")).collect::<Vec<_>>().join(";")
}

pub const SWEEP_HEADER: &[&str] =
    &["lambda2", "iterations", "initial_objective", "final_objective", "monotone", "n_edges", "spurious", "edges"];

#[derive(Serialize)]
pub struct SweepRow {
    lambda2: f64,
    iterations: usize,
    initial_objective: f64,
    final_objective: f64,
    monotone: bool,
    n_edges: usize,
    spurious: Option<usize>,
    edges: String,
}

impl SweepRow {
    pub fn new(lambda2: f64, t: &LoopTrace) -> Self {
        SweepRow {
            lambda2,
            iterations: t.iterations,
            initial_objective: t.objectives[0],
            final_objective: *t.objectives.last().expect("trace has a starting objective"),
            monotone: t.monotone,
            n_edges: t.final_graph().n_edges(),
            spurious: t.spurious_edge_count(),
            edges: edge_string(t.final_graph()),
        }
    }
}

pub const LOOP_HEADER: &[&str] = &["lambda2", "iteration", "objective", "mdl", "cca_sum", "n_edges", "spurious", "edges"];

#[derive(Serialize)]
pub struct LoopRow {
    lambda2: f64,
    iteration: usize,
    objective: f64,
    mdl: f64,
    cca_sum: f64,
    n_edges: usize,
    spurious: Option<usize>,
    edges: String,
}

pub fn loop_rows(lambda2: f64, t: &LoopTrace) -> impl Iterator<Item = LoopRow> + '_ {
    t.breakdowns.iter().enumerate().map(move |(k, b)| LoopRow {
        lambda2,
        iteration: k,
        objective: t.objectives[k],
        mdl: b.mdl,
        cca_sum: b.cca_sum,
        n_edges: t.graphs[k].n_edges(),
        spurious: t.spurious.as_ref().map(|s| s[k]),
        edges: edge_string(&t.graphs[k]),
    })
}

pub const PAIR_HEADER: &[&str] = &["id", "weight", "ground_truth", "predicted", "mean_score", "correct", "seed_scores"];

#[derive(Serialize)]
pub struct PairRow {
    id: u32,
    weight: f64,
    ground_truth: &'static str,
    predicted: &'static str,
    mean_score: f64,
    correct: bool,
    seed_scores: String,
}

impl From<&PairResult> for PairRow {
    fn from(r: &PairResult) -> Self {
        PairRow {
            id: r.id,
            weight: r.weight,
            ground_truth: r.ground_truth.name(),
            predicted: r.predicted.name(),
            mean_score: r.mean_score,
            correct: r.correct,
            seed_scores: r.seed_scores.iter().map(i64::to_string).collect::<Vec<_>>().join(";"),
        }
    }
}

pub const FIG5_HEADER: &[&str] = &["pairs_included", "weighted_accuracy"];

pub fn fig5_rows(curve: &[CurvePoint]) -> impl Iterator<Item = (usize, f64)> + '_ {
    curve.iter().map(|p| (p.pairs_included, p.weighted_accuracy))
}
