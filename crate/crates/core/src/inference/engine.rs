//! Variational E-step, evidence lower bound and M-step.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::state::VariationalState;
use crate::error::{Error, Result};
use crate::network::{edge_pairs, ObservedNetwork};
use crate::params::{EdgeTensor, ModelParams, Transitions};

/// Dense copy of the edge states, `adj[(t * n + i) * n + j]`.
pub(crate) struct DenseNetwork {
    n: usize,
    n_times: usize,
    kappa: usize,
    adj: Vec<u8>,
}

impl DenseNetwork {
    pub(crate) fn new(network: &ObservedNetwork) -> Self {
        let (n, t_len) = (network.n_nodes(), network.n_times());
        let mut adj = vec![0u8; t_len * n * n];
        for t in 0..t_len {
            for ((i, j), &x) in edge_pairs(n).zip(network.snapshot(t)) {
                adj[(t * n + i) * n + j] = x;
                adj[(t * n + j) * n + i] = x;
            }
        }
        Self {
            n,
            n_times: t_len,
            kappa: network.kappa(),
            adj,
        }
    }

    fn row(&self, t: usize, i: usize) -> &[u8] {
        let start = (t * self.n + i) * self.n;
        &self.adj[start..start + self.n]
    }

    /// `out[x * Q + l] = sum of delta_l(j)` over the nodes `j` in `others`
    /// joined to `i` by state `x` at time `t`.
    fn neighbour_mass(
        &self,
        state: &VariationalState,
        t: usize,
        i: usize,
        others: impl Iterator<Item = usize>,
        out: &mut [f64],
    ) {
        let q = state.n_states();
        out.fill(0.0);
        let row = self.row(t, i);
        for j in others {
            let x = row[j] as usize;
            let d = state.delta(t, j);
            for (o, v) in out[x * q..(x + 1) * q].iter_mut().zip(d) {
                *o += v;
            }
        }
    }
}

/// `ln bp^t_{ql}(x)` at `((t * kappa + x) * Q + q) * Q + l`, `-inf` for zero
/// probabilities.
fn log_edge_tables(params: &ModelParams) -> Vec<f64> {
    let (q, kappa) = (params.n_states(), params.kappa());
    let mut out = Vec::with_capacity(params.n_times() * kappa * q * q);
    for t in 0..params.n_times() {
        for x in 0..kappa {
            for a in 0..q {
                for b in 0..q {
                    out.push(ln(params.bp(t, a, b)[x]));
                }
            }
        }
    }
    out
}

fn ln(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `w * ln(p)` with `0 * ln(anything) = 0`.
fn weighted_log(w: f64, log_p: f64) -> f64 {
    if w > 0.0 {
        w * log_p
    } else {
        0.0
    }
}

fn entropy_term(w: f64) -> f64 {
    if w > 0.0 {
        -w * w.ln()
    } else {
        0.0
    }
}

pub(crate) fn check_dims(
    params: &ModelParams,
    network: &ObservedNetwork,
    state: &VariationalState,
) -> Result<()> {
    let ok = params.n_times() == network.n_times()
        && params.kappa() == network.kappa()
        && state.n_nodes() == network.n_nodes()
        && state.n_times() == network.n_times()
        && state.n_states() == params.n_states();
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "model (Q = {}, T = {}, kappa = {}), network (n = {}, T = {}, kappa = {}) and responsibilities \
             (n = {}, T = {}, Q = {}) disagree",
            params.n_states(),
            params.n_times(),
            params.kappa(),
            network.n_nodes(),
            network.n_times(),
            network.kappa(),
            state.n_nodes(),
            state.n_times(),
            state.n_states()
        )))
    }
}

/// Evidence lower bound `E_q[log P(X, Z)] + H(q)`.
///
/// Returns `-inf` when a zero probability carries positive weight.
pub fn elbo(
    params: &ModelParams,
    network: &ObservedNetwork,
    state: &VariationalState,
) -> Result<f64> {
    check_dims(params, network, state)?;
    Ok(elbo_dense(params, &DenseNetwork::new(network), state))
}

pub(crate) fn elbo_dense(
    params: &ModelParams,
    net: &DenseNetwork,
    state: &VariationalState,
) -> f64 {
    let (n, q, kappa) = (net.n, state.n_states(), net.kappa);
    let log_pi: Vec<f64> = params.pi().iter().map(|&p| ln(p)).collect();
    let log_rho: Vec<Vec<f64>> = (1..net.n_times)
        .map(|t| {
            params
                .transition(t)
                .transpose()
                .iter()
                .map(|&p| ln(p))
                .collect()
        })
        .collect();
    let mut total = 0.0;
    for i in 0..n {
        for (&w, &lp) in state.lambda1(i).iter().zip(&log_pi) {
            total += weighted_log(w, lp) + entropy_term(w);
        }
        for t in 1..net.n_times {
            let prev = state.delta(t - 1, i);
            let rows = state.lambda(t, i);
            for a in 0..q {
                for b in 0..q {
                    let lam = rows[a * q + b];
                    total += weighted_log(prev[a] * lam, log_rho[t - 1][a * q + b])
                        + prev[a] * entropy_term(lam);
                }
            }
        }
    }
    let logs = log_edge_tables(params);
    let mut mass = vec![0.0; kappa * q];
    for t in 0..net.n_times {
        for i in 0..n {
            net.neighbour_mass(state, t, i, i + 1..n, &mut mass);
            let d = state.delta(t, i);
            for x in 0..kappa {
                let table = &logs[(t * kappa + x) * q * q..(t * kappa + x + 1) * q * q];
                for a in 0..q {
                    for b in 0..q {
                        total += weighted_log(d[a] * mass[x * q + b], table[a * q + b]);
                    }
                }
            }
        }
    }
    total
}

/// Limits for the fixed-point sweeps of [`e_step`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EStepSettings {
    pub max_sweeps: usize,
    /// Sweeps stop once no responsibility moves by more than this.
    pub tol: f64,
}

impl Default for EStepSettings {
    fn default() -> Self {
        Self {
            max_sweeps: 50,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EStepReport {
    pub state: VariationalState,
    pub sweeps: usize,
    /// Largest responsibility change in the last sweep.
    pub max_change: f64,
    pub converged: bool,
}

/// Variational E-step.
///
/// Each sweep visits the nodes in order and replaces a node's chain by the
/// exact maximizer of the bound given every other node, so the bound never
/// decreases. The maximizer is the posterior of a hidden Markov chain whose
/// emission log-potential at time `t` is
/// `sum_{j != i} sum_l delta^t_{jl} ln bp^t_{ql}(x^t_{ij})`.
pub fn e_step(
    params: &ModelParams,
    network: &ObservedNetwork,
    state: &VariationalState,
    settings: &EStepSettings,
) -> Result<EStepReport> {
    check_dims(params, network, state)?;
    Ok(e_step_dense(
        params,
        &DenseNetwork::new(network),
        state.clone(),
        settings,
    ))
}

pub(crate) fn e_step_dense(
    params: &ModelParams,
    net: &DenseNetwork,
    mut state: VariationalState,
    settings: &EStepSettings,
) -> EStepReport {
    let logs = log_edge_tables(params);
    let mut scratch = NodeScratch::new(net.n_times, state.n_states(), net.kappa);
    let mut sweeps = 0;
    let mut max_change = f64::INFINITY;
    while sweeps < settings.max_sweeps {
        let before = state.clone();
        for i in 0..net.n {
            update_node(params, net, &logs, &mut state, i, &mut scratch);
        }
        sweeps += 1;
        max_change = state.sup_distance(&before);
        if max_change < settings.tol {
            break;
        }
    }
    EStepReport {
        state,
        sweeps,
        max_change,
        converged: max_change < settings.tol,
    }
}

struct NodeScratch {
    mass: Vec<f64>,
    emission: Vec<f64>,
    beta: Vec<f64>,
}

impl NodeScratch {
    fn new(n_times: usize, q: usize, kappa: usize) -> Self {
        Self {
            mass: vec![0.0; kappa * q],
            emission: vec![0.0; n_times * q],
            beta: vec![0.0; n_times * q],
        }
    }
}

fn update_node(
    params: &ModelParams,
    net: &DenseNetwork,
    logs: &[f64],
    state: &mut VariationalState,
    i: usize,
    s: &mut NodeScratch,
) {
    let (n, t_len, q, kappa) = (net.n, net.n_times, state.n_states(), net.kappa);
    for t in 0..t_len {
        net.neighbour_mass(state, t, i, (0..n).filter(|&j| j != i), &mut s.mass);
        let e = &mut s.emission[t * q..(t + 1) * q];
        e.fill(0.0);
        for x in 0..kappa {
            let table = &logs[(t * kappa + x) * q * q..(t * kappa + x + 1) * q * q];
            let m = &s.mass[x * q..(x + 1) * q];
            for (a, ea) in e.iter_mut().enumerate() {
                for (b, &w) in m.iter().enumerate() {
                    *ea += weighted_log(w, table[a * q + b]);
                }
            }
        }
        // Potentials are only needed up to a factor per time point.
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            e.fill(1.0);
        } else {
            e.iter_mut().for_each(|v| *v = (*v - max).exp());
        }
    }
    let psi = &s.emission;
    let beta = &mut s.beta;
    beta[(t_len - 1) * q..].fill(1.0);
    for t in (1..t_len).rev() {
        let rho = params.transition(t);
        let (head, tail) = beta.split_at_mut(t * q);
        let next = &tail[..q];
        let prev = &mut head[(t - 1) * q..];
        for a in 0..q {
            prev[a] = (0..q).map(|b| rho[(a, b)] * psi[t * q + b] * next[b]).sum();
        }
        let scale = prev.iter().copied().fold(0.0, f64::max);
        if scale > 0.0 {
            prev.iter_mut().for_each(|v| *v /= scale);
        }
    }
    let first: Vec<f64> = (0..q).map(|a| params.pi()[a] * psi[a] * beta[a]).collect();
    normalize_or(state.lambda1_mut(i), &first, params.pi());
    for t in 1..t_len {
        let rho = params.transition(t);
        let rows = state.lambda_mut(t, i);
        for a in 0..q {
            let weights: Vec<f64> = (0..q)
                .map(|b| rho[(a, b)] * psi[t * q + b] * beta[t * q + b])
                .collect();
            let prior: Vec<f64> = rho.row(a).iter().copied().collect();
            normalize_or(&mut rows[a * q..(a + 1) * q], &weights, &prior);
        }
    }
    state.refresh_delta(i);
}

/// Writes `weights / sum(weights)`; when every weight vanishes the branch
/// carries no mass and `fallback` (or the uniform law) is written instead.
fn normalize_or(out: &mut [f64], weights: &[f64], fallback: &[f64]) {
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        out.iter_mut()
            .zip(weights)
            .for_each(|(o, w)| *o = w / total);
        return;
    }
    let total: f64 = fallback.iter().sum();
    if total > 0.0 {
        out.iter_mut()
            .zip(fallback)
            .for_each(|(o, w)| *o = w / total);
    } else {
        out.fill(1.0 / out.len() as f64);
    }
}

/// Parameter cell that received no responsibility mass in the M-step and was
/// set to the uniform law. Indices are 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmptyCell {
    EdgeLaw {
        t: usize,
        q: usize,
        l: usize,
    },
    /// Row `q` of the transition into time `t`; `t = 0` stands for the
    /// shared matrix of a homogeneous model.
    TransitionRow {
        t: usize,
        q: usize,
    },
}

#[derive(Clone, Debug)]
pub struct MStepOutput {
    pub params: ModelParams,
    pub empty_cells: Vec<EmptyCell>,
}

/// M-step: the parameters maximizing the bound for fixed responsibilities.
///
/// `pi` is the mean of the initial laws, transition rows are the normalized
/// expected transition counts (pooled over time when `homogeneous`), and
/// each edge-state law is the responsibility-weighted frequency of the
/// observed states over node pairs.
pub fn m_step(
    state: &VariationalState,
    network: &ObservedNetwork,
    homogeneous: bool,
) -> Result<MStepOutput> {
    if state.n_nodes() != network.n_nodes() || state.n_times() != network.n_times() {
        return Err(Error::Dimension(format!(
            "responsibilities for n = {}, T = {} do not match a network with n = {}, T = {}",
            state.n_nodes(),
            state.n_times(),
            network.n_nodes(),
            network.n_times()
        )));
    }
    if network.n_nodes() < 2 {
        return Err(Error::InvalidNetwork(
            "at least two nodes are needed to observe an edge".into(),
        ));
    }
    Ok(m_step_dense(
        state,
        &DenseNetwork::new(network),
        homogeneous,
    ))
}

pub(crate) fn m_step_dense(
    state: &VariationalState,
    net: &DenseNetwork,
    homogeneous: bool,
) -> MStepOutput {
    let (n, t_len, q, kappa) = (net.n, net.n_times, state.n_states(), net.kappa);
    let mut empty_cells = Vec::new();

    let pi: Vec<f64> = (0..q)
        .map(|a| (0..n).map(|i| state.lambda1(i)[a]).sum::<f64>() / n as f64)
        .collect();

    let counts: Vec<(DMatrix<f64>, Vec<f64>)> =
        (1..t_len).map(|t| transition_counts(state, t)).collect();
    let transitions = if t_len == 1 {
        Transitions::Inhomogeneous(Vec::new())
    } else if homogeneous {
        let mut num = DMatrix::zeros(q, q);
        let mut den = vec![0.0; q];
        for (c, d) in &counts {
            num += c;
            den.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        }
        Transitions::Homogeneous(normalize_rows(num, &den, 0, &mut empty_cells))
    } else {
        Transitions::Inhomogeneous(
            counts
                .into_iter()
                .enumerate()
                .map(|(k, (num, den))| normalize_rows(num, &den, k + 1, &mut empty_cells))
                .collect(),
        )
    };

    let mut edge_probs = Vec::with_capacity(t_len);
    let mut mass = vec![0.0; kappa * q];
    for t in 0..t_len {
        // stats[(x * Q + a) * Q + b] = sum_{i<j, x_ij = x} delta_ia delta_jb
        let mut stats = vec![0.0; kappa * q * q];
        for i in 0..n {
            net.neighbour_mass(state, t, i, i + 1..n, &mut mass);
            let d = state.delta(t, i);
            for x in 0..kappa {
                for a in 0..q {
                    for b in 0..q {
                        stats[(x * q + a) * q + b] += d[a] * mass[x * q + b];
                    }
                }
            }
        }
        let tensor = EdgeTensor::from_fn(q, kappa, |a, b| {
            let w: Vec<f64> = (0..kappa)
                .map(|x| {
                    let s = stats[(x * q + a) * q + b];
                    if a == b {
                        s
                    } else {
                        s + stats[(x * q + b) * q + a]
                    }
                })
                .collect();
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                w.iter().map(|v| v / total).collect()
            } else {
                empty_cells.push(EmptyCell::EdgeLaw { t, q: a, l: b });
                vec![1.0 / kappa as f64; kappa]
            }
        })
        .expect("shape fixed by Q and kappa");
        edge_probs.push(tensor);
    }
    let params = ModelParams::new(pi, transitions, edge_probs)
        .expect("shapes fixed by the responsibilities");
    MStepOutput {
        params,
        empty_cells,
    }
}

/// Expected transition counts into time `t` and the expected occupancy of
/// each origin state.
fn transition_counts(state: &VariationalState, t: usize) -> (DMatrix<f64>, Vec<f64>) {
    let q = state.n_states();
    let mut num = DMatrix::zeros(q, q);
    let mut den = vec![0.0; q];
    for i in 0..state.n_nodes() {
        let prev = state.delta(t - 1, i);
        let rows = state.lambda(t, i);
        for a in 0..q {
            den[a] += prev[a];
            for b in 0..q {
                num[(a, b)] += prev[a] * rows[a * q + b];
            }
        }
    }
    (num, den)
}

fn normalize_rows(
    mut num: DMatrix<f64>,
    den: &[f64],
    t: usize,
    empty: &mut Vec<EmptyCell>,
) -> DMatrix<f64> {
    let q = num.nrows();
    for a in 0..q {
        let total: f64 = num.row(a).sum();
        if den[a] > 0.0 && total > 0.0 {
            num.row_mut(a).iter_mut().for_each(|v| *v /= total);
        } else {
            empty.push(EmptyCell::TransitionRow { t, q: a });
            num.row_mut(a).fill(1.0 / q as f64);
        }
    }
    num
}

/// Lowest value an estimated edge-state probability may take.
pub const EDGE_FLOOR: f64 = 1e-10;

/// Raises every edge-state probability to at least `floor` and rescales the
/// remaining entries to keep each law normalized.
///
/// Entries that end up at the floor stay there and the rest keep their
/// ratios, which is the constrained maximizer of the edge part of the bound.
/// The estimate therefore stays optimal among laws bounded below by `floor`.
pub fn floor_edge_laws(params: &ModelParams, floor: f64) -> ModelParams {
    let edge_probs = params
        .edge_probs_all()
        .iter()
        .map(|e| {
            EdgeTensor::from_fn(e.n_states(), e.kappa(), |a, b| {
                floor_law(e.get(a, b), floor)
            })
            .expect("shape unchanged")
        })
        .collect();
    ModelParams::with_parts(
        params.pi().to_vec(),
        params.transitions().clone(),
        edge_probs,
    )
}

fn floor_law(law: &[f64], floor: f64) -> Vec<f64> {
    let mut floored = vec![false; law.len()];
    loop {
        let free: f64 = law
            .iter()
            .zip(&floored)
            .filter(|(_, &f)| !f)
            .map(|(v, _)| v)
            .sum();
        let n_floored = floored.iter().filter(|&&f| f).count();
        let scale = free / (1.0 - n_floored as f64 * floor);
        let mut changed = false;
        for (k, &v) in law.iter().enumerate() {
            if !floored[k] && v < floor * scale {
                floored[k] = true;
                changed = true;
            }
        }
        if !changed {
            return law
                .iter()
                .zip(&floored)
                .map(|(&v, &f)| if f { floor } else { v / scale })
                .collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{brute_force_log_likelihood, complete_log_likelihood};
    use crate::network::LatentStates;
    use crate::presets::Scenario;
    use crate::simulate::sample_network;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_law<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
        let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    fn random_params(q: usize, kappa: usize, t_len: usize, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = random_law(q, &mut rng);
        let ms = (1..t_len)
            .map(|_| {
                let rows: Vec<Vec<f64>> = (0..q).map(|_| random_law(q, &mut rng)).collect();
                DMatrix::from_fn(q, q, |a, b| rows[a][b])
            })
            .collect();
        let edges = (0..t_len)
            .map(|_| EdgeTensor::from_fn(q, kappa, |_, _| random_law(kappa, &mut rng)).unwrap())
            .collect();
        ModelParams::new(pi, Transitions::Inhomogeneous(ms), edges).unwrap()
    }

    fn random_state(n: usize, t_len: usize, q: usize, seed: u64) -> VariationalState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambda1 = (0..n).flat_map(|_| random_law(q, &mut rng)).collect();
        let lambda = (0..(t_len - 1) * n * q)
            .flat_map(|_| random_law(q, &mut rng))
            .collect();
        VariationalState::from_parts(n, t_len, q, lambda1, lambda).unwrap()
    }

    fn small_instance(seed: u64) -> (ModelParams, ObservedNetwork) {
        let params = random_params(2, 3, 2, seed);
        let net = sample_network(&params, 3, seed).unwrap().network;
        (params, net)
    }

    #[test]
    fn single_state_bound_is_the_likelihood() {
        let params = random_params(1, 3, 3, 4);
        let net = sample_network(&params, 6, 1).unwrap().network;
        let state = VariationalState::uniform(6, 3, 1);
        let exact: f64 = (0..3)
            .flat_map(|t| net.snapshot(t).iter().map(move |&x| (t, x)))
            .map(|(t, x)| params.bp(t, 0, 0)[x as usize].ln())
            .sum();
        assert!((elbo(&params, &net, &state).unwrap() - exact).abs() < 1e-10);
        let r = e_step(&params, &net, &state, &EStepSettings::default()).unwrap();
        assert!(r.state.delta(2, 5).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn point_mass_bound_is_the_complete_likelihood() {
        let params = Scenario::Scenario1.params();
        let sim = sample_network(&params, 12, 9).unwrap();
        let state = VariationalState::point_mass(&sim.latent, 3).unwrap();
        let complete = complete_log_likelihood(&params, &sim.network, &sim.latent);
        assert!((elbo(&params, &sim.network, &state).unwrap() - complete).abs() < 1e-9);
    }

    #[test]
    fn bound_lies_below_the_marginal_likelihood() {
        for seed in 0..10 {
            let (params, net) = small_instance(seed);
            let exact = brute_force_log_likelihood(&params, &net).unwrap();
            let state = random_state(3, 2, 2, seed + 100);
            assert!(elbo(&params, &net, &state).unwrap() <= exact + 1e-12);
            let fitted = e_step(
                &params,
                &net,
                &state,
                &EStepSettings {
                    max_sweeps: 500,
                    tol: 1e-13,
                },
            )
            .unwrap();
            let j = elbo(&params, &net, &fitted.state).unwrap();
            assert!(j <= exact + 1e-12);
        }
    }

    #[test]
    fn e_step_does_not_lower_the_bound() {
        for seed in 0..20 {
            let (params, net) = small_instance(seed);
            let state = random_state(3, 2, 2, seed + 50);
            let before = elbo(&params, &net, &state).unwrap();
            let after = e_step(
                &params,
                &net,
                &state,
                &EStepSettings {
                    max_sweeps: 1,
                    tol: 1e-6,
                },
            )
            .unwrap();
            assert!(elbo(&params, &net, &after.state).unwrap() >= before - 1e-10);
        }
    }

    #[test]
    fn uninformative_model_gives_uniform_responsibilities() {
        let q = 3;
        let rho = DMatrix::from_element(q, q, 1.0 / q as f64);
        let params = ModelParams::time_stable(
            vec![1.0 / 3.0; 3],
            rho,
            EdgeTensor::from_fn(q, 2, |_, _| vec![0.7, 0.3]).unwrap(),
            2,
        )
        .unwrap();
        let net = sample_network(&params, 8, 3).unwrap().network;
        let r = e_step(
            &params,
            &net,
            &random_state(8, 2, 3, 1),
            &EStepSettings::default(),
        )
        .unwrap();
        for i in 0..8 {
            assert!(r
                .state
                .delta(1, i)
                .iter()
                .all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn zero_probability_with_weight_gives_minus_infinity() {
        let rho = DMatrix::identity(1, 1);
        let params = ModelParams::time_stable(
            vec![1.0],
            rho,
            EdgeTensor::from_fn(1, 2, |_, _| vec![1.0, 0.0]).unwrap(),
            1,
        )
        .unwrap();
        let net = ObservedNetwork::new(2, 2, vec![vec![1]]).unwrap();
        assert_eq!(
            elbo(&params, &net, &VariationalState::uniform(2, 1, 1)).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn one_hot_initial_laws_give_a_one_hot_pi() {
        let net = ObservedNetwork::new(3, 2, vec![vec![0, 1, 1]]).unwrap();
        let state = VariationalState::from_node_laws(&vec![vec![1.0, 0.0, 0.0]; 3], 1).unwrap();
        let out = m_step(&state, &net, false).unwrap();
        assert_eq!(out.params.pi(), &[1.0, 0.0, 0.0]);
        assert!(out
            .empty_cells
            .contains(&EmptyCell::EdgeLaw { t: 0, q: 1, l: 2 }));
    }

    #[test]
    fn single_node_is_rejected() {
        let net = ObservedNetwork::new(1, 2, vec![vec![]]).unwrap();
        assert!(m_step(&VariationalState::uniform(1, 1, 2), &net, false).is_err());
    }

    #[test]
    fn two_node_transition_matches_hand_calculation() {
        // Node 0: lambda1 = (0.6, 0.4), rows (0.7, 0.3), (0.2, 0.8).
        // Node 1: lambda1 = (0.1, 0.9), rows (0.5, 0.5), (0.4, 0.6).
        let state = VariationalState::from_parts(
            2,
            2,
            2,
            vec![0.6, 0.4, 0.1, 0.9],
            vec![0.7, 0.3, 0.2, 0.8, 0.5, 0.5, 0.4, 0.6],
        )
        .unwrap();
        let net = ObservedNetwork::new(2, 2, vec![vec![1], vec![0]]).unwrap();
        let out = m_step(&state, &net, false).unwrap();
        let rho = out.params.transition(1);
        let num = [
            [0.6 * 0.7 + 0.1 * 0.5, 0.6 * 0.3 + 0.1 * 0.5],
            [0.4 * 0.2 + 0.9 * 0.4, 0.4 * 0.8 + 0.9 * 0.6],
        ];
        for a in 0..2 {
            let den = num[a][0] + num[a][1];
            for b in 0..2 {
                assert!((rho[(a, b)] - num[a][b] / den).abs() < 1e-15);
            }
        }
        assert!((out.params.pi()[0] - 0.35).abs() < 1e-15);
        // One edge: at t = 0 it is present, mixed pair weight 0.6*0.9 + 0.4*0.1.
        assert_eq!(out.params.bp(0, 0, 1), &[0.0, 1.0]);
    }

    #[test]
    fn hard_responsibilities_give_empirical_frequencies() {
        let latent = LatentStates::new(vec![vec![0, 0, 1, 1], vec![0, 1, 1, 1]], 2).unwrap();
        // Edge order (0,1) (0,2) (0,3) (1,2) (1,3) (2,3).
        let net = ObservedNetwork::new(4, 3, vec![vec![1, 0, 2, 2, 0, 1], vec![0, 1, 1, 2, 2, 0]])
            .unwrap();
        let state = VariationalState::point_mass(&latent, 2).unwrap();
        let out = m_step(&state, &net, false).unwrap();
        let p = &out.params;
        assert_eq!(p.pi(), &[0.5, 0.5]);
        assert_eq!(p.bp(0, 0, 0), &[0.0, 1.0, 0.0]);
        assert_eq!(p.bp(0, 0, 1), &[0.5, 0.0, 0.5]);
        assert_eq!(p.bp(0, 1, 1), &[0.0, 1.0, 0.0]);
        assert_eq!(p.bp(1, 0, 0), &[1.0 / 3.0; 3]);
        assert_eq!(p.bp(1, 0, 1), &[1.0 / 3.0, 2.0 / 3.0, 0.0]);
        assert_eq!(p.bp(1, 1, 1), &[1.0 / 3.0, 0.0, 2.0 / 3.0]);
        let rho = p.transition(1);
        assert_eq!(
            (rho[(0, 0)], rho[(0, 1)], rho[(1, 0)], rho[(1, 1)]),
            (0.5, 0.5, 0.0, 1.0)
        );
        assert!(out
            .empty_cells
            .contains(&EmptyCell::EdgeLaw { t: 1, q: 0, l: 0 }));
    }

    #[test]
    fn homogeneous_estimate_pools_the_per_step_estimates() {
        let params = Scenario::Scenario2.params();
        let sim = sample_network(&params, 20, 5).unwrap();
        let state = random_state(20, 3, 3, 8);
        let hom = m_step(&state, &sim.network, true).unwrap().params;
        let inhom = m_step(&state, &sim.network, false).unwrap().params;
        for a in 0..3 {
            let dens: Vec<f64> = (1..3)
                .map(|t| (0..20).map(|i| state.delta(t - 1, i)[a]).sum())
                .collect();
            for b in 0..3 {
                let pooled: f64 = (1..3)
                    .map(|t| dens[t - 1] * inhom.transition(t)[(a, b)])
                    .sum::<f64>()
                    / dens.iter().sum::<f64>();
                assert!((hom.transition(1)[(a, b)] - pooled).abs() < 1e-12);
            }
        }
        assert_eq!(hom.edge_probs_all(), inhom.edge_probs_all());
    }

    #[test]
    fn floor_keeps_laws_normalized() {
        let law = floor_law(&[0.0, 1e-12, 0.3, 0.7], 1e-10);
        assert_eq!(&law[..2], &[1e-10, 1e-10]);
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((law[3] / law[2] - 0.7 / 0.3).abs() < 1e-12);
        assert_eq!(floor_law(&[0.25, 0.75], 1e-10), vec![0.25, 0.75]);
    }

    proptest! {
        #[test]
        fn e_step_output_is_a_valid_state(seed in 0u64..500) {
            let (params, net) = small_instance(seed);
            let r = e_step(&params, &net, &random_state(3, 2, 2, seed), &EStepSettings::default()).unwrap();
            for i in 0..3 {
                prop_assert!((r.state.lambda1(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for row in r.state.lambda(1, i).chunks(2) {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    prop_assert!(row.iter().all(|&v| v >= 0.0));
                }
            }
        }

        #[test]
        fn m_step_output_validates(seed in 0u64..500, homogeneous in proptest::bool::ANY) {
            let (_, net) = small_instance(seed);
            let out = m_step(&random_state(3, 2, 2, seed), &net, homogeneous).unwrap();
            prop_assert!(out.params.validate().is_valid());
        }
    }
}
