//! Resolved per-subcommand configuration.
//!
//! Every subcommand starts from its built-in defaults, then applies the
//! `--config` file, then typed flags, then `--set key=value` overrides. Keys
//! that do not exist in the defaults are rejected. The merged table is what
//! lands in `manifest.json`, so a manifest can be fed back through `--config`.

use std::path::{Path, PathBuf};

use cca_core::cca::{Architecture, ExperimentConfig, InitMode, NoiseLevels, RunConfig};
use cca_core::dgp::DgpKind;
use cca_core::graph::CclParams;
use cca_core::mlp::{Activation, MlpConfig, OptimizerKind, OptimizerSpec, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

/// Network shape and optimizer. A missing `step_size` resolves to the
/// optimizer default (1e-3 for Adam and RMSProp, 1e-2 for SGD).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Network {
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    pub init_bound: f64,
}

impl Default for Network {
    fn default() -> Self {
        Network {
            hidden_widths: vec![64, 64],
            activation: Activation::Tanh,
            optimizer: OptimizerKind::Adam,
            step_size: None,
            init_bound: MlpConfig::DEFAULT_INIT_BOUND,
        }
    }
}

impl Network {
    fn resolve(&mut self) {
        self.step_size.get_or_insert(OptimizerSpec::new(self.optimizer).step_size);
    }

    pub fn opt(&self) -> OptimizerSpec {
        let spec = OptimizerSpec::new(self.optimizer);
        spec.with_step_size(self.step_size.unwrap_or(spec.step_size))
    }

    pub fn mlp(&self) -> MlpConfig {
        MlpConfig { init_bound: self.init_bound, ..MlpConfig::scalar(&self.hidden_widths, self.activation) }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { hidden_widths: self.hidden_widths.clone(), activation: self.activation, opt: self.opt() }
    }
}

/// Training loop settings. Network seeds always derive from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Training {
    pub batch_size: usize,
    pub t_max: u64,
    pub tau: f64,
    pub holdout_fraction: f64,
    pub eval_every: u64,
}

impl Default for Training {
    fn default() -> Self {
        let d = TrainConfig::default();
        Training { batch_size: d.batch_size, t_max: d.t_max, tau: d.tau, holdout_fraction: d.holdout_fraction, eval_every: d.eval_every }
    }
}

impl Training {
    fn with_t_max(t_max: u64) -> Self {
        Training { t_max, ..Default::default() }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            t_max: self.t_max,
            tau: self.tau,
            holdout_fraction: self.holdout_fraction,
            eval_every: self.eval_every,
            seed: 0,
        }
    }
}

/// Shared by `exp1`, `boundary` and `gradvar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub n: usize,
    pub noise: NoiseLevels,
    pub n_seeds: usize,
    pub normalize: bool,
    pub init_mode: InitMode,
    pub keep_traces: bool,
}

impl Default for Experiment {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        Experiment { n: d.n, noise: d.noise, n_seeds: d.n_seeds, normalize: d.normalize, init_mode: d.init_mode, keep_traces: true }
    }
}

impl Experiment {
    pub fn config(&self, seed: u64, train: &Training) -> ExperimentConfig {
        ExperimentConfig {
            n: self.n,
            noise: self.noise,
            train: train.train_config(),
            n_seeds: self.n_seeds,
            master_seed: seed,
            normalize: self.normalize,
            init_mode: self.init_mode,
            keep_traces: self.keep_traces,
        }
    }
}

/// Common surface of the subcommand configurations.
pub trait Resolved: Serialize + DeserializeOwned + Default + Sync {
    fn seed(&self) -> u64;

    /// Fills derived defaults and checks values.
    fn finish(&mut self) -> Result<(), CliError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorePairConfig {
    pub seed: u64,
    pub input: PathBuf,
    pub n_seeds: usize,
    pub normalize: bool,
    pub init_mode: InitMode,
    pub network: Network,
    pub train: Training,
}

impl Default for ScorePairConfig {
    fn default() -> Self {
        ScorePairConfig {
            seed: 0,
            input: PathBuf::new(),
            n_seeds: 1,
            normalize: true,
            init_mode: InitMode::Independent,
            network: Network::default(),
            train: Training::default(),
        }
    }
}

impl ScorePairConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            mlp: self.network.mlp(),
            train: self.train.train_config(),
            opt: self.network.opt(),
            normalize: self.normalize,
            n_seeds: self.n_seeds,
            init_mode: self.init_mode,
        }
    }
}

impl Resolved for ScorePairConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn finish(&mut self) -> Result<(), CliError> {
        self.network.resolve();
        if self.input.as_os_str().is_empty() {
            return Err(CliError::Usage("score-pair needs --input <csv>".into()));
        }
        check(self.run_config().validate())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub seed: u64,
    pub dgps: Vec<DgpKind>,
    pub experiment: Experiment,
    pub train: Training,
    pub architectures: Vec<Network>,
}

fn standard_networks() -> Vec<Network> {
    Architecture::standard_grid()
        .into_iter()
        .map(|a| Network { hidden_widths: a.hidden_widths, activation: a.activation, optimizer: a.opt.kind, ..Default::default() })
        .collect()
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            seed: 0,
            dgps: DgpKind::ALL.to_vec(),
            experiment: Experiment::default(),
            train: Training::default(),
            architectures: standard_networks(),
        }
    }
}

impl GridConfig {
    pub fn experiment_config(&self) -> ExperimentConfig {
        self.experiment.config(self.seed, &self.train)
    }

    pub fn architectures(&self) -> Vec<Architecture> {
        self.architectures.iter().map(Network::architecture).collect()
    }
}

impl Resolved for GridConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn finish(&mut self) -> Result<(), CliError> {
        self.architectures.iter_mut().for_each(Network::resolve);
        check_experiment(&self.experiment_config(), &self.architectures())
    }
}

/// `boundary` runs fixed suites, so it has no DGP list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub seed: u64,
    pub experiment: Experiment,
    pub train: Training,
    pub architectures: Vec<Network>,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        let g = GridConfig::default();
        BoundaryConfig { seed: g.seed, experiment: g.experiment, train: g.train, architectures: g.architectures }
    }
}

impl BoundaryConfig {
    pub fn experiment_config(&self) -> ExperimentConfig {
        self.experiment.config(self.seed, &self.train)
    }

    pub fn architectures(&self) -> Vec<Architecture> {
        self.architectures.iter().map(Network::architecture).collect()
    }
}

impl Resolved for BoundaryConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn finish(&mut self) -> Result<(), CliError> {
        self.architectures.iter_mut().for_each(Network::resolve);
        check_experiment(&self.experiment_config(), &self.architectures())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradVarConfig {
    pub seed: u64,
    pub dgps: Vec<DgpKind>,
    pub n_batches: usize,
    pub phases: Vec<u64>,
    pub experiment: Experiment,
    pub train: Training,
    pub network: Network,
}

impl Default for GradVarConfig {
    fn default() -> Self {
        GradVarConfig {
            seed: 0,
            dgps: vec![DgpKind::Sin, DgpKind::Cubic],
            n_batches: 50,
            phases: vec![0, 200],
            experiment: Experiment { n_seeds: 10, keep_traces: false, ..Default::default() },
            train: Training::default(),
            network: Network::default(),
        }
    }
}

impl GradVarConfig {
    pub fn experiment_config(&self) -> ExperimentConfig {
        self.experiment.config(self.seed, &self.train)
    }
}

impl Resolved for GradVarConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn finish(&mut self) -> Result<(), CliError> {
        self.network.resolve();
        if self.n_batches < 2 {
            return Err(CliError::Usage("n_batches must be at least 2".into()));
        }
        check_experiment(&self.experiment_config(), &[self.network.architecture()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CclSweepConfig {
    pub seed: u64,
    pub n: usize,
    /// Noise of `x2` and `x3` in the three-variable model.
    pub scm_noise: [f64; 2],
    pub lambda2s: Vec<f64>,
    pub lambda3: f64,
    pub gamma: f64,
    pub e_max: usize,
    pub alpha_pc: f64,
    pub max_iters: usize,
    pub n_seeds: usize,
    pub network: Network,
    pub train: Training,
}

impl Default for CclSweepConfig {
    fn default() -> Self {
        let p = CclParams::default();
        CclSweepConfig {
            seed: 0,
            n: 1000,
            scm_noise: [0.3, 0.3],
            lambda2s: vec![0.01, 0.05, 0.08, 0.1, 0.15, 0.2, 0.5],
            lambda3: p.lambda3,
            gamma: p.gamma,
            e_max: p.e_max,
            alpha_pc: p.alpha_pc,
            max_iters: 10,
            n_seeds: 1,
            network: Network::default(),
            train: Training::default(),
        }
    }
}

impl CclSweepConfig {
    pub fn params(&self) -> CclParams {
        CclParams { lambda2: 1.0, lambda3: self.lambda3, gamma: self.gamma, e_max: self.e_max, alpha_pc: self.alpha_pc }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            mlp: self.network.mlp(),
            train: self.train.train_config(),
            opt: self.network.opt(),
            normalize: true,
            n_seeds: self.n_seeds,
            init_mode: InitMode::Independent,
        }
    }
}

impl Resolved for CclSweepConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn finish(&mut self) -> Result<(), CliError> {
        self.network.resolve();
        check(self.params().validate())?;
        for &l in &self.lambda2s {
            check(CclParams { lambda2: l, ..self.params() }.validate())?;
        }
        if self.max_iters == 0 {
            return Err(CliError::Usage("max_iters must be at least 1".into()));
        }
        check(self.run_config().validate())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuebingenConfig {
    pub seed: u64,
    pub data: PathBuf,
    pub n_seeds: usize,
    pub network: Network,
    pub train: Training,
}

impl Default for TuebingenConfig {
    fn default() -> Self {
        TuebingenConfig {
            seed: 0,
            data: PathBuf::new(),
            n_seeds: 5,
            network: Network::default(),
            train: Training::with_t_max(10_000),
        }
    }
}

impl TuebingenConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            mlp: self.network.mlp(),
            train: self.train.train_config(),
            opt: self.network.opt(),
            normalize: true,
            n_seeds: self.n_seeds,
            init_mode: InitMode::Independent,
        }
    }
}

impl Resolved for TuebingenConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn finish(&mut self) -> Result<(), CliError> {
        self.network.resolve();
        if self.data.as_os_str().is_empty() {
            return Err(CliError::Usage("tuebingen needs --data <dir>".into()));
        }
        check(self.run_config().validate())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacBoundConfig {
    pub seed: u64,
    pub d_c: f64,
    pub tau_mix: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub c: f64,
}

impl Default for PacBoundConfig {
    fn default() -> Self {
        PacBoundConfig { seed: 0, d_c: 3.0, tau_mix: 10.0, gamma: 0.9, epsilon: 0.1, delta: 0.05, c: 1.0 }
    }
}

impl Resolved for PacBoundConfig {
    fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lambda2Config {
    pub seed: u64,
    pub gamma: f64,
    pub v: f64,
    pub e_max: f64,
}

impl Default for Lambda2Config {
    fn default() -> Self {
        Lambda2Config { seed: 0, gamma: 0.9, v: 3.0, e_max: 3.0 }
    }
}

impl Resolved for Lambda2Config {
    fn seed(&self) -> u64 {
        self.seed
    }
}

fn check(r: cca_core::Result<()>) -> Result<(), CliError> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

fn check_experiment(cfg: &ExperimentConfig, archs: &[Architecture]) -> Result<(), CliError> {
    if cfg.n < 10 {
        return Err(CliError::Usage("experiment.n must be at least 10".into()));
    }
    check(cfg.train.validate())?;
    for a in archs {
        check(a.mlp().validate())?;
        check(a.opt.validate())?;
    }
    let NoiseLevels { sin, exp, cubic, square, linear } = cfg.noise;
    if [sin, exp, cubic, square, linear].iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(CliError::Usage("noise levels must be positive".into()));
    }
    Ok(())
}

/// Reads a `--config` file: TOML, or a previous run's `manifest.json`.
///
/// A TOML file may hold the settings at top level or under a table named after
/// the subcommand.
pub fn read_config_file(path: &Path, subcommand: &str) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let table = if path.extension().is_some_and(|e| e == "json") {
        let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if let Some(cmd) = json.get("subcommand").and_then(|v| v.as_str()) {
            if cmd != subcommand {
                return Err(bad(format!("manifest is for `{cmd}`, not `{subcommand}`")));
            }
        }
        let cfg = json.get("config").cloned().unwrap_or(json);
        Table::try_from(cfg).map_err(|e| bad(e.to_string()))?
    } else {
        text.parse::<Table>().map_err(|e| bad(e.to_string()))?
    };
    match table.get(subcommand) {
        Some(Value::Table(t)) if table.len() == 1 => Ok(t.clone()),
        _ => Ok(table),
    }
}

/// Merges `over` into `base`, rejecting keys that `base` lacks.
pub fn merge(base: &mut Table, over: Table, prefix: &str) -> Result<(), CliError> {
    for (k, v) in over {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o, &path)?,
            (Some(slot), v) => *slot = v,
            // Optional keys absent from the defaults.
            (None, v) if path.ends_with("step_size") => {
                base.insert(k, v);
            }
            (None, _) => return Err(CliError::Usage(format!("unknown config key `{path}`"))),
        }
    }
    Ok(())
}

/// Parses `a.b.c=value` into a nested table. The value is read as TOML and
/// falls back to a plain string.
pub fn parse_assignment(s: &str) -> Result<Table, CliError> {
    let (key, raw) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{s}`")))?;
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad config key `{key}`")));
    }
    let last = parts.pop().expect("split yields at least one part");
    let mut table = Table::new();
    table.insert(last.to_string(), value);
    for p in parts.into_iter().rev() {
        let mut outer = Table::new();
        outer.insert(p.to_string(), Value::Table(table));
        table = outer;
    }
    Ok(table)
}

/// Defaults, then each layer in order, then [`Resolved::finish`].
pub fn resolve<C: Resolved>(layers: Vec<Table>) -> Result<C, CliError> {
    let mut base = Table::try_from(C::default()).expect("defaults serialize to a table");
    for layer in layers {
        merge(&mut base, layer, "")?;
    }
    let mut cfg: C = Value::Table(base).try_into().map_err(|e: toml::de::Error| CliError::Usage(format!("invalid config: {}", e.message())))?;
    cfg.finish()?;
    Ok(cfg)
}
