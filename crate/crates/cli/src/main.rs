//! `cca`: command-line driver for the convergence-asymmetry experiments.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::{Table, Value};

use crate::config::{
    parse_assignment, read_config_file, resolve, BoundaryConfig, CclSweepConfig, GradVarConfig, GridConfig, Lambda2Config, PacBoundConfig,
    Resolved, ScorePairConfig, TuebingenConfig,
};
use crate::report::RunManifest;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration values. Exit code 1.
    Usage(String),
    /// Unreadable or malformed input, failed writes. Exit code 2.
    Data(String),
    /// A computation produced no usable number. Exit code 3.
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<cca_core::Error> for CliError {
    fn from(e: cca_core::Error) -> Self {
        use cca_core::Error::*;
        let msg = e.to_string();
        match e {
            InvalidConfig(_) => CliError::Usage(msg),
            ShapeMismatch { .. } | DegenerateSeries(_) | MissingColumn(_) | Parse { .. } | Io { .. } => CliError::Data(msg),
            Diverged { .. } | DegenerateConditioning { .. } | Cycle(..) | NonPositiveLog(_) => CliError::Numeric(msg),
        }
    }
}

#[derive(Parser)]
#[command(name = "cca", version, about = "Causal direction from convergence-time asymmetry")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML settings file, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Override any setting, e.g. `--set experiment.noise.sin=0.2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Score one pair from a two-column CSV; prints JSON.
    ScorePair {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Number of seeds to average.
        #[arg(long)]
        seeds: Option<usize>,
        /// Skip z-scoring.
        #[arg(long)]
        raw: bool,
    },
    /// Mechanism by architecture grid.
    Exp1 {
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        dgps: Vec<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t_max: Option<u64>,
    },
    /// Linear, non-injective and unscaled-cubic suites.
    Boundary {
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t_max: Option<u64>,
    },
    /// Mini-batch gradient-norm variance, forward against reverse.
    Gradvar {
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        n_batches: Option<usize>,
    },
    /// Structure-learning loop over a range of lambda2 values.
    CclSweep {
        #[arg(long, value_delimiter = ',')]
        lambda2: Vec<f64>,
        #[arg(long)]
        lambda3: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Score a cause-effect pair benchmark directory.
    Tuebingen {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        t_max: Option<u64>,
    },
    /// Sample-complexity bound.
    PacBound {
        #[arg(long)]
        dc: Option<f64>,
        #[arg(long)]
        tau_mix: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
    },
    /// Smallest lambda2 allowed by the threshold condition.
    Lambda2Threshold {
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        v: Option<f64>,
        #[arg(long)]
        e_max: Option<f64>,
    },
}

/// Typed flags collected into one override table.
#[derive(Default)]
struct Flags(Table);

impl Flags {
    fn set(&mut self, path: &str, value: Option<impl Into<Value>>) {
        let Some(value) = value else { return };
        let mut parts: Vec<&str> = path.split('.').collect();
        let last = parts.pop().expect("nonempty path");
        let mut t = &mut self.0;
        for p in parts {
            t = t.entry(p).or_insert_with(|| Value::Table(Table::new())).as_table_mut().expect("flag paths nest tables");
        }
        t.insert(last.to_string(), value.into());
    }
}

fn u(v: Option<impl TryInto<i64>>) -> Option<i64> {
    v.and_then(|v| v.try_into().ok())
}

struct Context {
    out: Option<PathBuf>,
    jobs: usize,
}

impl Context {
    fn out_or(&self, name: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results").join(name))
    }
}

fn run_with<C: Resolved>(
    name: &str,
    layers: Vec<Table>,
    ctx: &Context,
    body: impl FnOnce(&C, &RunManifest, &Context) -> Result<(), CliError> + Send,
) -> Result<(), CliError> {
    let cfg: C = resolve(layers)?;
    let manifest = RunManifest::new(name, cfg.seed(), ctx.jobs, &cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", ctx.jobs)))?;
    pool.install(|| body(&cfg, &manifest, ctx))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let Common { seed, out, config, jobs, set } = cli.common;
    let name = cli.command.name();
    let mut layers = Vec::new();
    if let Some(path) = &config {
        layers.push(read_config_file(path, name)?);
    }
    let mut f = Flags::default();
    f.set("seed", u(seed));
    match &cli.command {
        Command::ScorePair { input, seeds, raw } => {
            f.set("input", input.as_ref().map(|p| p.display().to_string()));
            f.set("n_seeds", u(*seeds));
            f.set("normalize", raw.then_some(false));
        }
        Command::Exp1 { seeds, dgps, n, t_max } => {
            f.set("experiment.n_seeds", u(*seeds));
            f.set("experiment.n", u(*n));
            f.set("train.t_max", u(*t_max));
            f.set("dgps", (!dgps.is_empty()).then(|| Value::Array(dgps.iter().map(|d| Value::String(d.clone())).collect())));
        }
        Command::Boundary { seeds, n, t_max } => {
            f.set("experiment.n_seeds", u(*seeds));
            f.set("experiment.n", u(*n));
            f.set("train.t_max", u(*t_max));
        }
        Command::Gradvar { seeds, n_batches } => {
            f.set("experiment.n_seeds", u(*seeds));
            f.set("n_batches", u(*n_batches));
        }
        Command::CclSweep { lambda2, lambda3, n } => {
            f.set("lambda2s", (!lambda2.is_empty()).then(|| Value::Array(lambda2.iter().map(|&l| Value::Float(l)).collect())));
            f.set("lambda3", *lambda3);
            f.set("n", u(*n));
        }
        Command::Tuebingen { data, seeds, t_max } => {
            f.set("data", data.as_ref().map(|p| p.display().to_string()));
            f.set("n_seeds", u(*seeds));
            f.set("train.t_max", u(*t_max));
        }
        Command::PacBound { dc, tau_mix, gamma, eps, delta, c } => {
            f.set("d_c", *dc);
            f.set("tau_mix", *tau_mix);
            f.set("gamma", *gamma);
            f.set("epsilon", *eps);
            f.set("delta", *delta);
            f.set("c", *c);
        }
        Command::Lambda2Threshold { gamma, v, e_max } => {
            f.set("gamma", *gamma);
            f.set("v", *v);
            f.set("e_max", *e_max);
        }
    }
    layers.push(f.0);
    for s in &set {
        layers.push(parse_assignment(s)?);
    }

    let ctx = Context { out, jobs };
    match cli.command {
        Command::ScorePair { .. } => run_with::<ScorePairConfig>(name, layers, &ctx, commands::score_pair),
        Command::Exp1 { .. } => run_with::<GridConfig>(name, layers, &ctx, commands::exp1),
        Command::Boundary { .. } => run_with::<BoundaryConfig>(name, layers, &ctx, commands::boundary),
        Command::Gradvar { .. } => run_with::<GradVarConfig>(name, layers, &ctx, commands::gradvar),
        Command::CclSweep { .. } => run_with::<CclSweepConfig>(name, layers, &ctx, commands::ccl_sweep),
        Command::Tuebingen { .. } => run_with::<TuebingenConfig>(name, layers, &ctx, commands::tuebingen),
        Command::PacBound { .. } => run_with::<PacBoundConfig>(name, layers, &ctx, commands::pac_bound),
        Command::Lambda2Threshold { .. } => run_with::<Lambda2Config>(name, layers, &ctx, commands::lambda2_threshold),
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ScorePair { .. } => "score-pair",
            Command::Exp1 { .. } => "exp1",
            Command::Boundary { .. } => "boundary",
            Command::Gradvar { .. } => "gradvar",
            Command::CclSweep { .. } => "ccl-sweep",
            Command::Tuebingen { .. } => "tuebingen",
            Command::PacBound { .. } => "pac-bound",
            Command::Lambda2Threshold { .. } => "lambda2-threshold",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cca: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
