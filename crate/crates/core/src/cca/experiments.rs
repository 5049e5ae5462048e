use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{direction_seeds, score_pair_traced, CcaScore, Direction, InitMode, RunConfig};
use crate::dgp::{sample_bivariate, zscore, DgpKind, DgpSpec};
use crate::error::Result;
use crate::mlp::{gradient_norm_variance, Activation, Dataset, MlpConfig, OptimizerKind, OptimizerSpec, TrainConfig, TrainTrace};
use crate::rng::{derive_seed, tag};

/// Network shape plus optimizer: one column of the architecture grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub opt: OptimizerSpec,
}

impl Architecture {
    pub fn new(hidden_widths: &[usize], activation: Activation, kind: OptimizerKind) -> Self {
        Architecture { hidden_widths: hidden_widths.to_vec(), activation, opt: OptimizerSpec::new(kind) }
    }

    /// The six architecture/optimizer combinations of the synthetic grid.
    pub fn standard_grid() -> Vec<Architecture> {
        use Activation::*;
        use OptimizerKind::*;
        vec![
            Self::new(&[64, 64], Tanh, Adam),
            Self::new(&[128, 128], Tanh, Adam),
            Self::new(&[32, 32, 32], Tanh, Adam),
            Self::new(&[64, 64], Relu, Adam),
            Self::new(&[64, 64], Tanh, Sgd),
            Self::new(&[64, 64], Tanh, RmsProp),
        ]
    }

    pub fn mlp(&self) -> MlpConfig {
        MlpConfig::scalar(&self.hidden_widths, self.activation)
    }

    /// For example `64-64-Tanh / Adam`.
    pub fn label(&self) -> String {
        format!("{} / {}", self.mlp().label(), self.opt.kind.name())
    }
}

/// Noise standard deviation used for each bivariate mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    pub sin: f64,
    pub exp: f64,
    pub cubic: f64,
    pub square: f64,
    pub linear: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        NoiseLevels { sin: 0.1, exp: 0.11, cubic: 0.115, square: 0.3, linear: 0.3 }
    }
}

impl NoiseLevels {
    pub fn uniform(sigma: f64) -> Self {
        NoiseLevels { sin: sigma, exp: sigma, cubic: sigma, square: sigma, linear: sigma }
    }

    pub fn get(&self, kind: DgpKind) -> f64 {
        match kind {
            DgpKind::Sin => self.sin,
            DgpKind::Exp05 => self.exp,
            DgpKind::Cubic => self.cubic,
            DgpKind::Square => self.square,
            DgpKind::Linear2x => self.linear,
        }
    }
}

/// Settings shared by the synthetic experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub noise: NoiseLevels,
    pub train: TrainConfig,
    pub n_seeds: usize,
    pub master_seed: u64,
    pub normalize: bool,
    pub init_mode: InitMode,
    /// Keep full loss curves in each [`GridRun`].
    pub keep_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 1000,
            noise: NoiseLevels::default(),
            train: TrainConfig::default(),
            n_seeds: 5,
            master_seed: 0,
            normalize: true,
            init_mode: InitMode::Independent,
            keep_traces: false,
        }
    }
}

impl ExperimentConfig {
    /// Seed of the dataset for `(kind, seed_index)`. Shared by every
    /// architecture and by raw and z-scored runs, so they see the same sample.
    pub fn data_seed(&self, kind: DgpKind, seed_index: usize) -> u64 {
        let per_kind = derive_seed(self.master_seed, tag::DATA ^ ((kind as u64 + 1) << 8));
        derive_seed(per_kind, seed_index as u64)
    }

    pub fn sample(&self, kind: DgpKind, seed_index: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = sample_bivariate(&DgpSpec::new(kind, self.n, self.noise.get(kind)), self.data_seed(kind, seed_index))?;
        Ok((s.x, s.y))
    }

    fn run_config(&self, arch: &Architecture) -> RunConfig {
        RunConfig {
            mlp: arch.mlp(),
            train: self.train.clone(),
            opt: arch.opt,
            normalize: self.normalize,
            n_seeds: 1,
            init_mode: self.init_mode,
        }
    }
}

/// Loss curves of one run, kept when [`ExperimentConfig::keep_traces`] is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTraces {
    pub forward: TrainTrace,
    pub reverse: TrainTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub dgp: DgpKind,
    pub arch_index: usize,
    pub architecture: String,
    pub seed_index: usize,
    pub normalized: bool,
    pub score: Option<CcaScore>,
    pub error: Option<String>,
    /// Judged against the generating direction `x -> y`; ties are incorrect.
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traces: Option<RunTraces>,
}

/// Totals over a group of runs. Means skip runs that failed with an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub key: String,
    pub runs: usize,
    pub correct: usize,
    pub undecided: usize,
    pub errors: usize,
    pub mean_t_fwd: f64,
    pub sd_t_fwd: f64,
    pub mean_t_rev: f64,
    pub sd_t_rev: f64,
    pub mean_abs_score: f64,
    pub median_t_rev: f64,
}

impl CellSummary {
    pub fn of<'a>(key: impl Into<String>, runs: impl IntoIterator<Item = &'a GridRun>) -> Self {
        let runs: Vec<&GridRun> = runs.into_iter().collect();
        let scores: Vec<&CcaScore> = runs.iter().filter_map(|r| r.score.as_ref()).collect();
        let col = |f: fn(&CcaScore) -> f64| scores.iter().map(|s| f(s)).collect::<Vec<f64>>();
        let (mean_t_fwd, sd_t_fwd) = mean_sd(&col(|s| s.t_fwd as f64));
        let (mean_t_rev, sd_t_rev) = mean_sd(&col(|s| s.t_rev as f64));
        CellSummary {
            key: key.into(),
            runs: runs.len(),
            correct: runs.iter().filter(|r| r.correct).count(),
            undecided: scores.iter().filter(|s| s.direction == Direction::Undecided).count(),
            errors: runs.iter().filter(|r| r.error.is_some()).count(),
            mean_t_fwd,
            sd_t_fwd,
            mean_t_rev,
            sd_t_rev,
            mean_abs_score: mean_sd(&col(|s| s.score.unsigned_abs() as f64)).0,
            median_t_rev: median(col(|s| s.t_rev as f64)),
        }
    }

    pub fn wrong(&self) -> usize {
        self.runs - self.correct
    }
}

/// Mean and sample standard deviation; NaN where undefined.
fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    /// Sorted by (dgp, architecture, seed).
    pub runs: Vec<GridRun>,
    pub per_dgp: Vec<CellSummary>,
    pub per_arch: Vec<CellSummary>,
}

impl GridReport {
    fn assemble(mut runs: Vec<GridRun>, dgps: &[DgpKind], archs: &[Architecture]) -> Self {
        runs.sort_by_key(|r| (r.dgp as u8, r.arch_index, r.seed_index));
        let per_dgp = dgps.iter().map(|&d| CellSummary::of(d.name(), runs.iter().filter(|r| r.dgp == d))).collect();
        let per_arch = archs
            .iter()
            .enumerate()
            .map(|(i, a)| CellSummary::of(a.label(), runs.iter().filter(|r| r.arch_index == i)))
            .collect();
        GridReport { runs, per_dgp, per_arch }
    }

    pub fn dgp(&self, kind: DgpKind) -> Option<&CellSummary> {
        self.per_dgp.iter().find(|s| s.key == kind.name())
    }

    /// Summary of one (dgp, architecture) cell.
    pub fn cell(&self, kind: DgpKind, arch_index: usize) -> CellSummary {
        let runs = self.runs.iter().filter(|r| r.dgp == kind && r.arch_index == arch_index);
        let label = self.runs.iter().find(|r| r.arch_index == arch_index).map_or(String::new(), |r| r.architecture.clone());
        CellSummary::of(format!("{} | {label}", kind.name()), runs)
    }
}

fn run_cell(cfg: &ExperimentConfig, kind: DgpKind, arch_index: usize, arch: &Architecture, seed_index: usize) -> GridRun {
    let outcome = cfg.sample(kind, seed_index).and_then(|(x, y)| {
        let run_seed = derive_seed(cfg.data_seed(kind, seed_index), 0x100 + arch_index as u64);
        score_pair_traced(&x, &y, &cfg.run_config(arch), run_seed)
    });
    let mut run = GridRun {
        dgp: kind,
        arch_index,
        architecture: arch.label(),
        seed_index,
        normalized: cfg.normalize,
        score: None,
        error: None,
        correct: false,
        traces: None,
    };
    match outcome {
        Ok(o) => {
            run.correct = o.score.direction == Direction::XtoY;
            run.score = Some(o.score);
            if cfg.keep_traces {
                run.traces = Some(RunTraces { forward: o.forward, reverse: o.reverse });
            }
        }
        Err(e) => run.error = Some(e.to_string()),
    }
    run
}

/// Scores every (dgp, architecture, seed) cell. Cells run in parallel on the
/// current rayon pool; each is a pure function of the config, so the report does
/// not depend on the pool size. Cell errors are recorded, never raised.
pub fn run_dgp_grid(archs: &[Architecture], dgps: &[DgpKind], cfg: &ExperimentConfig) -> GridReport {
    let cells: Vec<(DgpKind, usize, usize)> = dgps
        .iter()
        .flat_map(|&d| (0..archs.len()).flat_map(move |a| (0..cfg.n_seeds).map(move |s| (d, a, s))))
        .collect();
    let runs = cells.par_iter().map(|&(d, a, s)| run_cell(cfg, d, a, &archs[a], s)).collect();
    GridReport::assemble(runs, dgps, archs)
}

/// The three boundary studies: linear symmetry, the non-injective square
/// collapse, and cubic data with and without z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub linear: GridReport,
    pub square: GridReport,
    pub cubic_zscored: GridReport,
    pub cubic_raw: GridReport,
}

pub fn run_boundary_suite(archs: &[Architecture], cfg: &ExperimentConfig) -> BoundaryReport {
    let z = ExperimentConfig { normalize: true, ..cfg.clone() };
    let raw = ExperimentConfig { normalize: false, ..cfg.clone() };
    BoundaryReport {
        linear: run_dgp_grid(archs, &[DgpKind::Linear2x], &z),
        square: run_dgp_grid(archs, &[DgpKind::Square], &z),
        cubic_zscored: run_dgp_grid(archs, &[DgpKind::Cubic], &z),
        cubic_raw: run_dgp_grid(archs, &[DgpKind::Cubic], &raw),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradVarRow {
    pub dgp: DgpKind,
    pub seed_index: usize,
    pub phase: u64,
    pub var_fwd: f64,
    pub var_rev: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradVarSummary {
    pub dgp: DgpKind,
    pub phase: u64,
    pub mean_var_fwd: f64,
    pub mean_var_rev: f64,
    /// Mean over seeds of the per-seed ratio `var_rev / var_fwd`.
    pub ratio: f64,
    /// `mean_var_rev / mean_var_fwd`, for reference.
    pub ratio_of_means: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradVarReport {
    pub rows: Vec<GradVarRow>,
    pub summary: Vec<GradVarSummary>,
}

impl GradVarReport {
    pub fn ratio(&self, kind: DgpKind, phase: u64) -> Option<f64> {
        self.summary.iter().find(|s| s.dgp == kind && s.phase == phase).map(|s| s.ratio)
    }
}

fn gradvar_row(
    cfg: &ExperimentConfig,
    arch: &Architecture,
    kind: DgpKind,
    seed_index: usize,
    phase: u64,
    n_batches: usize,
) -> Result<GradVarRow> {
    let (mut x, mut y) = cfg.sample(kind, seed_index)?;
    if cfg.normalize {
        x = zscore(&x)?.values;
        y = zscore(&y)?.values;
    }
    let (fwd_seed, rev_seed) = direction_seeds(derive_seed(cfg.data_seed(kind, seed_index), 0x200), cfg.init_mode);
    let mlp = arch.mlp();
    let var = |inputs: &[f64], targets: &[f64], seed: u64| {
        let tc = TrainConfig { seed, ..cfg.train.clone() };
        gradient_norm_variance(&mlp, &Dataset::scalar(inputs, targets)?, &tc, &arch.opt, n_batches, phase)
    };
    let var_fwd = var(&x, &y, fwd_seed)?;
    let var_rev = var(&y, &x, rev_seed)?;
    Ok(GradVarRow { dgp: kind, seed_index, phase, var_fwd, var_rev, ratio: var_rev / var_fwd })
}

/// Variance of squared gradient norms for forward and reverse networks, per
/// DGP, seed and training phase. Summary ratios are averaged over seeds.
pub fn run_gradvar_experiment(
    arch: &Architecture,
    dgps: &[DgpKind],
    cfg: &ExperimentConfig,
    n_batches: usize,
    phases: &[u64],
) -> Result<GradVarReport> {
    let jobs: Vec<(DgpKind, usize, u64)> = dgps
        .iter()
        .flat_map(|&d| (0..cfg.n_seeds).flat_map(move |s| phases.iter().map(move |&p| (d, s, p))))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(d, s, p)| gradvar_row(cfg, arch, d, s, p, n_batches))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.dgp as u8, r.phase, r.seed_index));

    let mut summary = Vec::new();
    for &d in dgps {
        for &p in phases {
            let sel: Vec<&GradVarRow> = rows.iter().filter(|r| r.dgp == d && r.phase == p).collect();
            let n = sel.len() as f64;
            let mean_var_fwd = sel.iter().map(|r| r.var_fwd).sum::<f64>() / n;
            let mean_var_rev = sel.iter().map(|r| r.var_rev).sum::<f64>() / n;
            summary.push(GradVarSummary {
                dgp: d,
                phase: p,
                mean_var_fwd,
                mean_var_rev,
                ratio: sel.iter().map(|r| r.ratio).sum::<f64>() / n,
                ratio_of_means: mean_var_rev / mean_var_fwd,
            });
        }
    }
    Ok(GradVarReport { rows, summary })
}
