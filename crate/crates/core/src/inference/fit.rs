//! Multi-restart variational EM.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::align::{align_labels, time_alignment};
use super::engine::{
    e_step_dense, elbo_dense, floor_edge_laws, m_step_dense, DenseNetwork, EStepSettings,
    EmptyCell, EDGE_FLOOR,
};
use super::state::VariationalState;
use crate::error::{Error, Result};
use crate::labels::LabelPermutation;
use crate::network::{edge_pairs, ObservedNetwork};
use crate::params::ModelParams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// Independent Dirichlet(1) state laws per node.
    #[default]
    Random,
    /// k-means on the leading eigenvectors of the time-averaged adjacency of
    /// present edges.
    Spectral,
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "spectral" => Ok(Self::Spectral),
            other => Err(Error::InvalidConfig(format!(
                "unknown init strategy `{other}` (random or spectral)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub n_states: usize,
    pub homogeneous: bool,
    pub n_restarts: usize,
    pub max_outer_iterations: usize,
    /// Stop when `|J_k - J_{k-1}| / (1 + |J_k|)` falls below this.
    pub elbo_rel_tol: f64,
    pub e_step_fixed_point_iters: usize,
    pub e_step_tol: f64,
    pub init_strategy: InitStrategy,
    pub seed: u64,
    /// Relabel time points whose diagonal edge laws match another state's at
    /// the previous time point, then continue EM.
    pub harmonize_labels: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_states: 2,
            homogeneous: true,
            n_restarts: 25,
            max_outer_iterations: 100,
            elbo_rel_tol: 1e-6,
            e_step_fixed_point_iters: 50,
            e_step_tol: 1e-6,
            init_strategy: InitStrategy::Random,
            seed: 0,
            harmonize_labels: true,
        }
    }
}

impl FitConfig {
    pub fn new(n_states: usize) -> Self {
        Self {
            n_states,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_states", self.n_states),
            ("n_restarts", self.n_restarts),
            ("max_outer_iterations", self.max_outer_iterations),
            ("e_step_fixed_point_iters", self.e_step_fixed_point_iters),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        for (name, v) in [
            ("elbo_rel_tol", self.elbo_rel_tol),
            ("e_step_tol", self.e_step_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {v} must lie in (0, 1)"
                )));
            }
        }
        Ok(())
    }

    fn e_step_settings(&self) -> EStepSettings {
        EStepSettings {
            max_sweeps: self.e_step_fixed_point_iters,
            tol: self.e_step_tol,
        }
    }
}

/// Outcome of one restart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    /// Bound after each (E, M) iteration.
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
    /// E-steps that stopped at the sweep limit.
    pub unconverged_e_steps: usize,
    /// Time points (0-based) relabeled after `elbo_trace` ended.
    #[serde(default)]
    pub relabeled_times: Vec<usize>,
    /// Bound after each iteration of the EM continued from the relabeled
    /// responsibilities; empty when nothing was relabeled.
    #[serde(default)]
    pub relabeled_trace: Vec<f64>,
}

impl RestartSummary {
    pub fn final_elbo(&self) -> f64 {
        self.relabeled_trace
            .last()
            .or(self.elbo_trace.last())
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn n_iterations(&self) -> usize {
        self.elbo_trace.len() + self.relabeled_trace.len()
    }

    /// Largest drop between consecutive iterations of either trace, zero
    /// when neither decreases. Relabeling itself may lower the bound.
    pub fn max_decrease(&self) -> f64 {
        [&self.elbo_trace, &self.relabeled_trace]
            .iter()
            .flat_map(|trace| trace.windows(2).map(|w| w[0] - w[1]))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub params_hat: ModelParams,
    pub elbo: f64,
    /// Iterations of the selected restart.
    pub n_iterations: usize,
    pub n_restarts: usize,
    pub converged: bool,
    /// Relabeling applied to the selected restart.
    pub alignment: LabelPermutation,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
    /// Cells left without responsibility mass in the final M-step.
    pub empty_cells: Vec<EmptyCell>,
    /// Responsibilities of the selected restart, relabeled like `params_hat`.
    #[serde(skip)]
    pub state: VariationalState,
}

impl FitResult {
    /// Largest bound decrease between consecutive iterations over all
    /// restarts.
    pub fn max_elbo_decrease(&self) -> f64 {
        self.restarts
            .iter()
            .map(RestartSummary::max_decrease)
            .fold(0.0, f64::max)
    }
}

struct Run {
    params: ModelParams,
    state: VariationalState,
    summary: RestartSummary,
    empty_cells: Vec<EmptyCell>,
}

fn check_inputs(network: &ObservedNetwork, config: &FitConfig) -> Result<()> {
    config.validate()?;
    if network.n_nodes() < 2 {
        return Err(Error::InvalidNetwork("the network has no edges".into()));
    }
    if config.n_states > network.n_nodes() {
        return Err(Error::InvalidConfig(format!(
            "Q = {} exceeds the number of nodes n = {}",
            config.n_states,
            network.n_nodes()
        )));
    }
    Ok(())
}

/// Variational EM with `config.n_restarts` independent starts.
///
/// Restart `r` draws its initialization from stream `r` of a ChaCha8
/// generator seeded with `config.seed`, so results do not depend on thread
/// count. The restart with the largest final bound is kept (ties go to the
/// lower index) and its labels are canonicalized with [`align_labels`].
///
/// With `config.harmonize_labels`, a restart whose diagonal edge laws
/// match under a time-dependent relabeling (see [`time_alignment`]) is
/// relabeled per time point and run again from there; the continued run
/// replaces its result.
pub fn fit(network: &ObservedNetwork, config: &FitConfig) -> Result<FitResult> {
    check_inputs(network, config)?;
    let net = DenseNetwork::new(network);
    let runs: Vec<Run> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(config.seed, r);
            let init = initial_state(network, config, &mut rng);
            run_harmonized(&net, config, init, r)
        })
        .collect();
    let best = (0..runs.len())
        .reduce(|a, b| {
            if runs[b].summary.final_elbo() > runs[a].summary.final_elbo() {
                b
            } else {
                a
            }
        })
        .expect("at least one restart");
    let restarts = runs.iter().map(|r| r.summary.clone()).collect();
    let run = runs.into_iter().nth(best).expect("index in range");
    let (params_hat, alignment) = align_labels(&run.params, None)?;
    Ok(FitResult {
        elbo: run.summary.final_elbo(),
        n_iterations: run.summary.n_iterations(),
        n_restarts: config.n_restarts,
        converged: run.summary.converged,
        best_restart: best,
        state: run.state.relabeled(&alignment),
        empty_cells: relabel_cells(&run.empty_cells, &alignment),
        params_hat,
        alignment,
        restarts,
    })
}

/// A single EM run from the given responsibilities, without label alignment
/// or harmonization. `config.n_restarts`, `config.init_strategy` and
/// `config.harmonize_labels` are ignored.
pub fn fit_from(
    network: &ObservedNetwork,
    config: &FitConfig,
    init: VariationalState,
) -> Result<FitResult> {
    check_inputs(network, config)?;
    if init.n_nodes() != network.n_nodes()
        || init.n_times() != network.n_times()
        || init.n_states() != config.n_states
    {
        return Err(Error::Dimension(
            "initial responsibilities do not match the network and Q".into(),
        ));
    }
    let run = run_restart(&DenseNetwork::new(network), config, init, 0);
    Ok(FitResult {
        elbo: run.summary.final_elbo(),
        n_iterations: run.summary.elbo_trace.len(),
        n_restarts: 1,
        converged: run.summary.converged,
        alignment: LabelPermutation::identity(config.n_states),
        best_restart: 0,
        restarts: vec![run.summary],
        empty_cells: run.empty_cells,
        params_hat: run.params,
        state: run.state,
    })
}

fn relabel_cells(cells: &[EmptyCell], sigma: &LabelPermutation) -> Vec<EmptyCell> {
    let inv = sigma.inverse();
    cells
        .iter()
        .map(|c| match *c {
            EmptyCell::EdgeLaw { t, q, l } => {
                let (a, b) = (inv.apply(q), inv.apply(l));
                EmptyCell::EdgeLaw {
                    t,
                    q: a.min(b),
                    l: a.max(b),
                }
            }
            EmptyCell::TransitionRow { t, q } => EmptyCell::TransitionRow { t, q: inv.apply(q) },
        })
        .collect()
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn run_harmonized(
    net: &DenseNetwork,
    config: &FitConfig,
    init: VariationalState,
    restart: usize,
) -> Run {
    let run = run_restart(net, config, init, restart);
    if !config.harmonize_labels {
        return run;
    }
    let sigmas = time_alignment(&run.params);
    let relabeled_times: Vec<usize> = (0..sigmas.len())
        .filter(|&t| !sigmas[t].is_identity())
        .collect();
    if relabeled_times.is_empty() {
        return run;
    }
    let next = run_restart(net, config, run.state.relabeled_per_time(&sigmas), restart);
    Run {
        summary: RestartSummary {
            restart,
            elbo_trace: run.summary.elbo_trace,
            converged: next.summary.converged,
            unconverged_e_steps: run.summary.unconverged_e_steps + next.summary.unconverged_e_steps,
            relabeled_times,
            relabeled_trace: next.summary.elbo_trace,
        },
        ..next
    }
}

fn run_restart(
    net: &DenseNetwork,
    config: &FitConfig,
    init: VariationalState,
    restart: usize,
) -> Run {
    let settings = config.e_step_settings();
    let first = m_step_dense(&init, net, config.homogeneous);
    let mut params = floor_edge_laws(&first.params, EDGE_FLOOR);
    let mut empty_cells = first.empty_cells;
    let mut state = init;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut unconverged_e_steps = 0;
    for it in 0..config.max_outer_iterations {
        if it > 0 {
            let m = m_step_dense(&state, net, config.homogeneous);
            params = floor_edge_laws(&m.params, EDGE_FLOOR);
            empty_cells = m.empty_cells;
        }
        let e = e_step_dense(&params, net, state, &settings);
        unconverged_e_steps += usize::from(!e.converged);
        state = e.state;
        let j = elbo_dense(&params, net, &state);
        let previous = trace.last().copied();
        trace.push(j);
        // With one state the E-step is trivial and the first M-step exact.
        if config.n_states == 1 {
            converged = true;
            break;
        }
        if let Some(prev) = previous {
            if ((j - prev) / (1.0 + j.abs())).abs() < config.elbo_rel_tol {
                converged = true;
                break;
            }
        }
    }
    Run {
        params,
        state,
        summary: RestartSummary {
            restart,
            elbo_trace: trace,
            converged,
            unconverged_e_steps,
            relabeled_times: Vec::new(),
            relabeled_trace: Vec::new(),
        },
        empty_cells,
    }
}

/// Responsibilities for one restart under `config.init_strategy`.
pub fn initial_state<R: Rng + ?Sized>(
    network: &ObservedNetwork,
    config: &FitConfig,
    rng: &mut R,
) -> VariationalState {
    let q = config.n_states;
    let laws: Vec<Vec<f64>> = match config.init_strategy {
        InitStrategy::Random => (0..network.n_nodes())
            .map(|_| dirichlet_one(q, rng))
            .collect(),
        InitStrategy::Spectral => {
            let labels = spectral_labels(network, q, rng);
            labels
                .into_iter()
                .map(|z| (0..q).map(|a| if a == z { 1.0 - SPECTRAL_SMOOTHING } else { 0.0 } + SPECTRAL_SMOOTHING / q as f64).collect())
                .collect()
        }
    };
    VariationalState::from_node_laws(&laws, network.n_times()).expect("laws are normalized")
}

/// Mass spread uniformly over all states on top of a spectral cluster label,
/// so that no state starts empty.
const SPECTRAL_SMOOTHING: f64 = 0.1;

fn dirichlet_one<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..q).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Cluster labels from k-means on the `q` eigenvectors of largest absolute
/// eigenvalue of the time-averaged indicator of present edges.
pub fn spectral_labels<R: Rng + ?Sized>(
    network: &ObservedNetwork,
    q: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = network.n_nodes();
    let mut adj = DMatrix::<f64>::zeros(n, n);
    let w = 1.0 / network.n_times() as f64;
    for t in 0..network.n_times() {
        for ((i, j), &x) in edge_pairs(n).zip(network.snapshot(t)) {
            if x != 0 {
                adj[(i, j)] += w;
                adj[(j, i)] += w;
            }
        }
    }
    let eig = SymmetricEigen::new(adj);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
            .then(a.cmp(&b))
    });
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            order[..q]
                .iter()
                .map(|&k| eig.eigenvectors[(i, k)])
                .collect()
        })
        .collect();
    kmeans(&points, q, rng)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from a k-means++ seeding.
fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| squared_distance(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            d.iter()
                .position(|&v| {
                    u -= v;
                    u < 0.0
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[pick].clone());
    }
    let nearest = |p: &[f64], centers: &[Vec<f64>]| {
        (0..k).fold(0, |best, c| {
            if squared_distance(p, &centers[c]) < squared_distance(p, &centers[best]) {
                c
            } else {
                best
            }
        })
    };
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..100 {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            if !members.is_empty() {
                for (d, v) in center.iter_mut().enumerate() {
                    *v = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
                }
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}
