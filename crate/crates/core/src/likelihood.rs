//! Exact likelihoods for small networks.

use crate::error::{Error, Result};
use crate::network::{edge_pairs, LatentStates, ObservedNetwork};
use crate::params::ModelParams;

/// Largest number of latent configurations [`brute_force_log_likelihood`]
/// will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 1 << 22;

fn check_shapes(params: &ModelParams, network: &ObservedNetwork) -> Result<()> {
    if params.n_times() != network.n_times() || params.kappa() != network.kappa() {
        return Err(Error::Dimension(format!(
            "model has T = {}, kappa = {}; network has T = {}, kappa = {}",
            params.n_times(),
            params.kappa(),
            network.n_times(),
            network.kappa()
        )));
    }
    Ok(())
}

fn ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `log P(X, Z)` for fully specified latent paths.
pub fn complete_log_likelihood(
    params: &ModelParams,
    network: &ObservedNetwork,
    latent: &LatentStates,
) -> f64 {
    let n = network.n_nodes();
    let mut total = 0.0;
    for i in 0..n {
        total += ln(params.pi()[latent.get(0, i)]);
        for t in 1..network.n_times() {
            total += ln(params.transition(t)[(latent.get(t - 1, i), latent.get(t, i))]);
        }
    }
    for t in 0..network.n_times() {
        let z = latent.at(t);
        for ((i, j), &x) in edge_pairs(n).zip(network.snapshot(t)) {
            total += ln(params.bp(t, z[i], z[j])[x as usize]);
        }
    }
    total
}

/// `log P(X)` by summing the complete-data likelihood over all `Q^(nT)`
/// latent configurations.
pub fn brute_force_log_likelihood(params: &ModelParams, network: &ObservedNetwork) -> Result<f64> {
    check_shapes(params, network)?;
    let q = params.n_states() as u64;
    let cells = network.n_nodes() * network.n_times();
    let count = q
        .checked_pow(cells as u32)
        .filter(|&c| c <= BRUTE_FORCE_LIMIT)
        .ok_or_else(|| Error::BudgetExceeded {
            requested: (q as u128).saturating_pow(cells as u32),
            budget: BRUTE_FORCE_LIMIT as usize,
        })?;
    let n = network.n_nodes();
    let t_len = network.n_times();
    let mut terms = Vec::with_capacity(count as usize);
    let mut digits = vec![0usize; cells];
    for code in 0..count {
        let mut c = code;
        for d in digits.iter_mut().rev() {
            *d = (c % q) as usize;
            c /= q;
        }
        let rows: Vec<Vec<usize>> = (0..t_len)
            .map(|t| digits[t * n..(t + 1) * n].to_vec())
            .collect();
        let latent = LatentStates::new(rows, params.n_states())?;
        terms.push(complete_log_likelihood(params, network, &latent));
    }
    Ok(log_sum_exp(&terms))
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
