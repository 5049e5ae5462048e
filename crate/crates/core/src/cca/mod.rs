//! Convergence-time asymmetry scoring.
//!
//! For an ordered pair `(x, y)` two networks with identical hyperparameters are
//! trained: one predicting `y` from `x` (forward) and one predicting `x` from `y`
//! (reverse). With `t_fwd` and `t_rev` their steps to threshold, the score is
//! `t_fwd - t_rev`; a negative score predicts `x -> y`.

mod experiments;

pub use experiments::{
    run_boundary_suite, run_dgp_grid, run_gradvar_experiment, Architecture, BoundaryReport, CellSummary,
    ExperimentConfig, GradVarReport, GradVarRow, GradVarSummary, GridReport, GridRun, NoiseLevels, RunTraces,
};

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dgp::zscore;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::mlp::{train_to_threshold, Activation, Dataset, MlpConfig, OptimizerSpec, TrainConfig, TrainTrace};
use crate::rng::{derive_seed, mix64, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    XtoY,
    YtoX,
    Undecided,
}

impl Direction {
    /// Decision rule: negative scores mean the forward network was faster.
    pub fn from_score(score: f64) -> Self {
        if score < 0.0 {
            Direction::XtoY
        } else if score > 0.0 {
            Direction::YtoX
        } else {
            Direction::Undecided
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::XtoY => "XtoY",
            Direction::YtoX => "YtoX",
            Direction::Undecided => "Undecided",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::XtoY => Direction::YtoX,
            Direction::YtoX => Direction::XtoY,
            Direction::Undecided => Direction::Undecided,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcaScore {
    pub t_fwd: u64,
    pub t_rev: u64,
    pub score: i64,
    pub direction: Direction,
    pub fwd_capped: bool,
    pub rev_capped: bool,
    pub fwd_diverged: bool,
    pub rev_diverged: bool,
    pub normalized: bool,
}

impl CcaScore {
    pub fn from_traces(fwd: &TrainTrace, rev: &TrainTrace, normalized: bool) -> Self {
        let score = fwd.steps_to_threshold as i64 - rev.steps_to_threshold as i64;
        CcaScore {
            t_fwd: fwd.steps_to_threshold,
            t_rev: rev.steps_to_threshold,
            score,
            direction: Direction::from_score(score as f64),
            fwd_capped: !fwd.converged,
            rev_capped: !rev.converged,
            fwd_diverged: fwd.diverged,
            rev_diverged: rev.diverged,
            normalized,
        }
    }
}

/// How the forward and reverse networks are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Independent streams derived from `(seed, direction tag)`.
    #[default]
    Independent,
    /// Both directions share one stream: same weights, split and batch order.
    Shared,
}

/// Seeds for the forward and reverse networks of one scored pair.
pub fn direction_seeds(seed: u64, mode: InitMode) -> (u64, u64) {
    match mode {
        InitMode::Independent => (derive_seed(seed, tag::FORWARD), derive_seed(seed, tag::REVERSE)),
        InitMode::Shared => {
            let s = derive_seed(seed, tag::FORWARD);
            (s, s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mlp: MlpConfig,
    pub train: TrainConfig,
    pub opt: OptimizerSpec,
    /// Z-score both series before training. Only boundary studies turn this off.
    pub normalize: bool,
    pub n_seeds: usize,
    #[serde(default)]
    pub init_mode: InitMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mlp: MlpConfig::scalar(&[64, 64], Activation::Tanh),
            train: TrainConfig::default(),
            opt: OptimizerSpec::adam(),
            normalize: true,
            n_seeds: 1,
            init_mode: InitMode::Independent,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.mlp.validate()?;
        self.train.validate()?;
        self.opt.validate()?;
        if self.n_seeds == 0 {
            return Err(Error::config("n_seeds must be at least 1"));
        }
        Ok(())
    }
}

/// A scored pair together with both training traces.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub score: CcaScore,
    pub forward: TrainTrace,
    pub reverse: TrainTrace,
}

fn prepare(x: &[f64], y: &[f64], normalize: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch { expected: x.len(), actual: y.len() });
    }
    if x.len() < 10 {
        return Err(Error::config(format!("need at least 10 paired values, got {}", x.len())));
    }
    // z-scoring also rejects constant series.
    let zx = zscore(x)?;
    let zy = zscore(y)?;
    if normalize {
        Ok((zx.values, zy.values))
    } else {
        Ok((x.to_vec(), y.to_vec()))
    }
}

/// Scores `x -> y` with explicit seeds for the forward (`y` from `x`) and
/// reverse (`x` from `y`) networks.
pub fn score_pair_with_seeds(x: &[f64], y: &[f64], cfg: &RunConfig, fwd_seed: u64, rev_seed: u64) -> Result<PairOutcome> {
    cfg.validate()?;
    if cfg.mlp.input_dim != 1 || cfg.mlp.output_dim != 1 {
        return Err(Error::config("pair scoring needs a scalar-to-scalar network"));
    }
    let (x, y) = prepare(x, y, cfg.normalize)?;
    let forward = train_to_threshold(&cfg.mlp, &Dataset::scalar(&x, &y)?, &TrainConfig { seed: fwd_seed, ..cfg.train.clone() }, &cfg.opt)?;
    let reverse = train_to_threshold(&cfg.mlp, &Dataset::scalar(&y, &x)?, &TrainConfig { seed: rev_seed, ..cfg.train.clone() }, &cfg.opt)?;
    Ok(PairOutcome { score: CcaScore::from_traces(&forward, &reverse, cfg.normalize), forward, reverse })
}

/// Scores the candidate edge `x -> y`.
pub fn score_pair(x: &[f64], y: &[f64], cfg: &RunConfig, seed: u64) -> Result<CcaScore> {
    score_pair_traced(x, y, cfg, seed).map(|o| o.score)
}

pub fn score_pair_traced(x: &[f64], y: &[f64], cfg: &RunConfig, seed: u64) -> Result<PairOutcome> {
    let (f, r) = direction_seeds(seed, cfg.init_mode);
    score_pair_with_seeds(x, y, cfg, f, r)
}

/// Mean score over `cfg.n_seeds` runs with seeds `seed, seed + 1, ...`.
pub fn mean_pair_score(x: &[f64], y: &[f64], cfg: &RunConfig, seed: u64) -> Result<(f64, Vec<CcaScore>)> {
    let scores = (0..cfg.n_seeds as u64)
        .map(|k| score_pair(x, y, cfg, seed.wrapping_add(k)))
        .collect::<Result<Vec<_>>>()?;
    let mean = scores.iter().map(|s| s.score as f64).sum::<f64>() / scores.len() as f64;
    Ok((mean, scores))
}

/// Seeds of the two networks for graph edge `from -> to`.
///
/// The network predicting `to` from `from` always gets the same seed, whichever
/// orientation is being scored, so `edge_seeds(s, j, i)` is `edge_seeds(s, i, j)`
/// swapped and the two orientations score exactly opposite.
pub fn edge_seeds(seed: u64, from: usize, to: usize) -> (u64, u64) {
    let net = |a: usize, b: usize| derive_seed(seed, mix64(((a as u64) << 32) | b as u64 | (1 << 63)));
    (net(from, to), net(to, from))
}

/// Score of the directed edge `from -> to`, averaged over `cfg.n_seeds`.
pub fn edge_score(columns: &[Vec<f64>], from: usize, to: usize, cfg: &RunConfig, seed: u64) -> Result<f64> {
    let x = columns.get(from).ok_or(Error::MissingColumn(from))?;
    let y = columns.get(to).ok_or(Error::MissingColumn(to))?;
    let mut total = 0.0;
    for k in 0..cfg.n_seeds as u64 {
        let (f, r) = edge_seeds(seed.wrapping_add(k), from, to);
        total += score_pair_with_seeds(x, y, cfg, f, r)?.score.score as f64;
    }
    Ok(total / cfg.n_seeds as f64)
}

/// Sum of edge scores over every directed edge of `dag`.
pub fn aggregate_graph_cca(dag: &Dag, columns: &[Vec<f64>], cfg: &RunConfig, seed: u64) -> Result<f64> {
    if let Some(bad) = dag.edges().flat_map(|(a, b)| [a, b]).find(|&v| v >= columns.len()) {
        return Err(Error::MissingColumn(bad));
    }
    dag.edges().map(|(i, j)| edge_score(columns, i, j, cfg, seed)).sum()
}

/// Edge scores computed at most once per unordered pair.
///
/// Scoring `i -> j` also yields `j -> i` (its negation) because of the seed
/// layout of [`edge_seeds`]. Slots are filled with `OnceLock::get_or_init`, so
/// concurrent readers block on, rather than duplicate, an in-flight computation.
pub struct CcaCache<'a> {
    columns: &'a [Vec<f64>],
    cfg: RunConfig,
    seed: u64,
    slots: HashMap<(usize, usize), OnceLock<std::result::Result<f64, String>>>,
}

impl<'a> CcaCache<'a> {
    pub fn new(columns: &'a [Vec<f64>], cfg: RunConfig, seed: u64) -> Self {
        let n = columns.len();
        let slots = (0..n).flat_map(|i| (i + 1..n).map(move |j| ((i, j), OnceLock::new()))).collect();
        CcaCache { columns, cfg, seed, slots }
    }

    pub fn score(&self, from: usize, to: usize) -> Result<f64> {
        if from == to {
            return Err(Error::config("self-loop has no score"));
        }
        let key = (from.min(to), from.max(to));
        let slot = self.slots.get(&key).ok_or(Error::MissingColumn(key.1))?;
        let value = slot
            .get_or_init(|| edge_score(self.columns, key.0, key.1, &self.cfg, self.seed).map_err(|e| e.to_string()))
            .clone()
            .map_err(Error::config)?;
        Ok(if from < to { value } else { -value })
    }

    /// Number of unordered pairs scored so far.
    pub fn computed(&self) -> usize {
        self.slots.values().filter(|s| s.get().is_some()).count()
    }

    pub fn graph_score(&self, dag: &Dag) -> Result<f64> {
        dag.edges().map(|(i, j)| self.score(i, j)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{sample_bivariate, DgpKind, DgpSpec};

    fn quick_cfg() -> RunConfig {
        RunConfig {
            mlp: MlpConfig::scalar(&[8], Activation::Tanh),
            train: TrainConfig { t_max: 200, tau: 0.3, ..TrainConfig::default() },
            opt: OptimizerSpec::adam().with_step_size(1e-2),
            ..RunConfig::default()
        }
    }

    fn sin_data(n: usize) -> (Vec<f64>, Vec<f64>) {
        let s = sample_bivariate(&DgpSpec::new(DgpKind::Sin, n, 0.1), 3).unwrap();
        (s.x, s.y)
    }

    #[test]
    fn direction_rule() {
        assert_eq!(Direction::from_score(-3.0), Direction::XtoY);
        assert_eq!(Direction::from_score(2.0), Direction::YtoX);
        assert_eq!(Direction::from_score(0.0), Direction::Undecided);
    }

    #[test]
    fn shared_init_on_identical_series_ties() {
        let (x, _) = sin_data(200);
        let cfg = RunConfig { init_mode: InitMode::Shared, ..quick_cfg() };
        let s = score_pair(&x, &x, &cfg, 4).unwrap();
        assert_eq!(s.t_fwd, s.t_rev);
        assert_eq!(s.score, 0);
        assert_eq!(s.direction, Direction::Undecided);
    }

    #[test]
    fn swapping_seeds_and_roles_negates() {
        let (x, y) = sin_data(200);
        let cfg = quick_cfg();
        let (f, r) = direction_seeds(9, InitMode::Independent);
        let a = score_pair_with_seeds(&x, &y, &cfg, f, r).unwrap().score;
        let b = score_pair_with_seeds(&y, &x, &cfg, r, f).unwrap().score;
        assert_eq!(a.score, -b.score);
        assert_eq!((a.t_fwd, a.t_rev), (b.t_rev, b.t_fwd));
        assert_eq!(a.direction, b.direction.flipped());
    }

    #[test]
    fn power_of_two_rescale_is_invisible() {
        let (x, y) = sin_data(200);
        let cfg = quick_cfg();
        let y4: Vec<f64> = y.iter().map(|v| v * 4.0).collect();
        assert_eq!(score_pair(&x, &y, &cfg, 1).unwrap(), score_pair(&x, &y4, &cfg, 1).unwrap());
    }

    #[test]
    fn arbitrary_rescale_changes_standardized_series_negligibly() {
        let (_, y) = sin_data(500);
        let a = zscore(&y).unwrap().values;
        let b = zscore(&y.iter().map(|v| v * 3.7).collect::<Vec<_>>()).unwrap().values;
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_containment() {
        let (x, y) = sin_data(100);
        let cfg = RunConfig { train: TrainConfig { tau: 1e-9, t_max: 30, ..TrainConfig::default() }, ..quick_cfg() };
        let s = score_pair(&x, &y, &cfg, 0).unwrap();
        assert!(s.fwd_capped && s.rev_capped);
        assert_eq!((s.t_fwd, s.t_rev, s.score), (30, 30, 0));
    }

    #[test]
    fn constant_series_rejected() {
        let (x, _) = sin_data(50);
        let c = vec![1.0; 50];
        assert!(matches!(score_pair(&x, &c, &quick_cfg(), 0), Err(Error::DegenerateSeries(_))));
        let raw = RunConfig { normalize: false, ..quick_cfg() };
        assert!(matches!(score_pair(&c, &x, &raw, 0), Err(Error::DegenerateSeries(_))));
    }

    #[test]
    fn short_series_rejected() {
        assert!(score_pair(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0], &quick_cfg(), 0).is_err());
    }

    #[test]
    fn edge_scores_antisymmetric() {
        let (x, y) = sin_data(150);
        let cols = vec![x, y];
        let cfg = quick_cfg();
        let a = edge_score(&cols, 0, 1, &cfg, 5).unwrap();
        let b = edge_score(&cols, 1, 0, &cfg, 5).unwrap();
        assert_eq!(a, -b);
        let cache = CcaCache::new(&cols, cfg, 5);
        assert_eq!(cache.score(1, 0).unwrap(), b);
        assert_eq!(cache.score(0, 1).unwrap(), a);
        assert_eq!(cache.computed(), 1);
    }

    #[test]
    fn graph_aggregation() {
        let (x, y) = sin_data(150);
        let z: Vec<f64> = y.iter().map(|v| v * v * v + 0.1).collect();
        let cols = vec![x, y, z];
        let cfg = quick_cfg();
        assert_eq!(aggregate_graph_cca(&Dag::empty(3), &cols, &cfg, 2).unwrap(), 0.0);

        let single = Dag::from_edges(3, &[(0, 1)]).unwrap();
        let (f, r) = edge_seeds(2, 0, 1);
        let direct = score_pair_with_seeds(&cols[0], &cols[1], &cfg, f, r).unwrap().score.score as f64;
        assert_eq!(aggregate_graph_cca(&single, &cols, &cfg, 2).unwrap(), direct);

        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let sum = edge_score(&cols, 0, 1, &cfg, 2).unwrap() + edge_score(&cols, 1, 2, &cfg, 2).unwrap();
        assert_eq!(aggregate_graph_cca(&chain, &cols, &cfg, 2).unwrap(), sum);

        let bad = Dag::from_edges(4, &[(0, 3)]).unwrap();
        assert!(matches!(aggregate_graph_cca(&bad, &cols, &cfg, 2), Err(Error::MissingColumn(3))));
    }

    #[test]
    fn mean_over_seeds() {
        let (x, y) = sin_data(120);
        let cfg = RunConfig { n_seeds: 3, ..quick_cfg() };
        let (mean, scores) = mean_pair_score(&x, &y, &cfg, 10).unwrap();
        assert_eq!(scores.len(), 3);
        assert_eq!(scores[1], score_pair(&x, &y, &cfg, 11).unwrap());
        let m = scores.iter().map(|s| s.score as f64).sum::<f64>() / 3.0;
        assert_eq!(mean, m);
    }
}
