//! Command-line arguments and JSON config merging.
//!
//! Every option is optional on the command line so that a `--config` file can
//! supply it; a flag given on the command line always wins.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Parser)]
#[command(
    name = "dynsbm",
    version,
    about = "Dynamic stochastic block models: simulation, estimation and identifiability checks"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalArgs {
    /// Seed from which all randomness is derived [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [default: logical cores]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory for output files [default: .]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// JSON file with option values; command-line flags take precedence
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// More log output (repeat for more)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    #[serde(skip)]
    pub verbose: u8,
}

impl GlobalArgs {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample networks from a scenario or parameter file
    Simulate(SimulateArgs),
    /// Estimate parameters from a network file by variational EM
    Fit(FitArgs),
    /// Smallest subgraph size giving conditional matrices of full row rank
    RankTable(RankTableArgs),
    /// Check the hypotheses of the identifiability results for a model
    Identify(IdentifyArgs),
    /// Simulate, fit and align replicates, then summarize and plot
    Experiment(ExperimentArgs),
    /// Recover parameters from exact distributions and report the error
    RecoverDemo(RecoverArgs),
}

/// Where model parameters come from.
#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelArgs {
    /// Built-in parameter set: scenario1, scenario1_inhomogeneous or scenario2
    #[arg(long, conflicts_with = "params")]
    pub scenario: Option<String>,
    /// Parameter file (JSON)
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Number of nodes [default: 150]
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of networks [default: 1]
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Keep only the first T time points of the model
    #[arg(long = "time-points")]
    pub time_points: Option<usize>,
    /// Omit latent states from the output files
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_latent: Option<bool>,
}

/// Estimation options shared by `fit` and `experiment`.
#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationArgs {
    /// Number of latent states
    #[arg(long = "states", short = 'q')]
    pub states: Option<usize>,
    /// Restarts per network [default: 25]
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Outer EM iterations per restart [default: 100]
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Relative bound change that ends a restart [default: 1e-6]
    #[arg(long)]
    pub elbo_tol: Option<f64>,
    /// Fixed-point sweeps per E-step [default: 50]
    #[arg(long)]
    pub e_step_iters: Option<usize>,
    /// Responsibility change that ends an E-step [default: 1e-6]
    #[arg(long)]
    pub e_step_tol: Option<f64>,
    /// Initialization: random or spectral [default: random]
    #[arg(long)]
    pub init: Option<String>,
    /// One transition matrix per time step instead of a shared one
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub inhomogeneous: Option<bool>,
    /// Keep time points whose labels disagree with the previous time point
    /// as they are
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_harmonize: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct FitArgs {
    /// Network file (JSON, as written by `simulate`)
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub estimation: EstimationArgs,
    /// True parameters: estimates are aligned to them and they fill the truth column
    #[command(flatten)]
    #[serde(flatten)]
    pub truth: ModelArgs,
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct RankTableArgs {
    /// Smallest Q [default: 2]
    #[arg(long)]
    pub q_min: Option<usize>,
    /// Largest Q [default: 5]
    #[arg(long)]
    pub q_max: Option<usize>,
    /// Smallest kappa [default: 2]
    #[arg(long)]
    pub kappa_min: Option<usize>,
    /// Largest kappa [default: 10]
    #[arg(long)]
    pub kappa_max: Option<usize>,
    /// Random parameter draws per cell [default: 20]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Largest subgraph size tried [default: 8]
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Relative singular-value threshold [default: 1e-9]
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Extra cell `Q,kappa` outside the grid (repeatable)
    #[arg(long = "cell", value_parser = parse_cell)]
    pub cells: Option<Vec<(usize, usize)>>,
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (q, k) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `Q,kappa`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(q)?, parse(k)?))
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Number of nodes of the network
    #[arg(long)]
    pub n: Option<usize>,
    /// Subgraph size used by the rank conditions [default: 3]
    #[arg(long)]
    pub m: Option<usize>,
    /// Verdict deciding the exit code: any, t1, t2, t3 or corollary [default: any]
    #[arg(long)]
    pub theorem: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Number of nodes [default: 150]
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of simulated networks [default: 10]
    #[arg(long)]
    pub replicates: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub estimation: EstimationArgs,
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoverArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// phi, hmm or static
    #[arg(long)]
    pub method: Option<String>,
    /// Subgraph size for the hmm and static methods [default: 3]
    #[arg(long)]
    pub m: Option<usize>,
    /// Reference time point, 1-based [default: 1 for phi, 2 for hmm]
    #[arg(long)]
    pub t0: Option<usize>,
}

/// Fills every unset field of `cli` from `file`, returning the merged value.
pub fn merge<T: Serialize + DeserializeOwned>(cli: &T, file: &Map<String, Value>) -> Result<T> {
    let Value::Object(mut merged) = serde_json::to_value(cli)? else {
        bail!("options must serialize to an object");
    };
    for (key, value) in merged.iter_mut() {
        if value.is_null() {
            if let Some(v) = file.get(key) {
                *value = v.clone();
            }
        }
    }
    serde_json::from_value(Value::Object(merged))
        .context("config file has a value of the wrong type")
}

/// Keys of `T` when serialized, used to report unknown config entries.
pub fn known_keys<T: Serialize + Default>() -> Vec<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

pub fn read_config(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    match serde_json::from_str(&text)
        .with_context(|| format!("config {} is not valid JSON", path.display()))?
    {
        Value::Object(m) => Ok(m),
        _ => bail!("config {} must hold a JSON object", path.display()),
    }
}
