//! Sampling latent node chains and edge snapshots.
//!
//! Every node chain and every (edge, time point) pair draws from its own
//! ChaCha stream derived from a single seed, so results do not depend on how
//! the work is scheduled.

use log::info;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::markov;
use crate::network::{edge_pairs, n_edges, LatentStates, NetworkFile, ObservedNetwork};
use crate::params::{ModelParams, StateCodec};

/// A simulated network together with the latent paths that generated it.
#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub latent: LatentStates,
    pub network: ObservedNetwork,
    pub seed: u64,
}

impl SimOutput {
    pub fn to_file(&self, include_latent: bool) -> NetworkFile {
        let t = self.network.n_times();
        NetworkFile {
            n: self.network.n_nodes(),
            n_times: t,
            kappa: Some(self.network.kappa()),
            seed: Some(self.seed),
            latent: include_latent.then(|| {
                (0..t)
                    .map(|s| {
                        self.latent
                            .at(s)
                            .iter()
                            .map(|&z| StateCodec::to_external(z))
                            .collect()
                    })
                    .collect()
            }),
            edges: (0..t).map(|s| self.network.snapshot(s).to_vec()).collect(),
        }
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left a sliver above the cumulative sum; take the last
    // state with positive mass.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Draws one latent path of length `n_times`: the first state from `pi`, each
/// subsequent state from the row of `rho_list[t - 1]` picked by the previous
/// state.
pub fn sample_node_chain<R: Rng + ?Sized>(
    pi: &[f64],
    rho_list: &[&DMatrix<f64>],
    n_times: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n_times == 0 || rho_list.len() + 1 != n_times {
        return Err(Error::Dimension(format!(
            "{} transition matrices for {n_times} time points",
            rho_list.len()
        )));
    }
    if rho_list
        .iter()
        .any(|m| m.nrows() != pi.len() || m.ncols() != pi.len())
    {
        return Err(Error::Dimension("transition matrices must be Q x Q".into()));
    }
    let mut path = Vec::with_capacity(n_times);
    path.push(sample_categorical(pi, rng));
    for rho in rho_list {
        let prev = *path.last().unwrap();
        let row: Vec<f64> = rho.row(prev).iter().copied().collect();
        path.push(sample_categorical(&row, rng));
    }
    Ok(path)
}

fn stream(base: &ChaCha8Rng, id: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(id);
    rng.set_word_pos(0);
    rng
}

/// Simulates latent paths for `n` nodes and the edge states they generate.
pub fn sample_network(params: &ModelParams, n: usize, seed: u64) -> Result<SimOutput> {
    if n < 2 {
        return Err(Error::InvalidNetwork(format!(
            "need at least 2 nodes, got {n}"
        )));
    }
    params.validate().into_result()?;
    if params.n_times() > 1 && params.is_homogeneous() {
        let rho = params.transition(1);
        if let Ok(stationary) = markov::stationary_distribution(rho) {
            let gap = stationary
                .iter()
                .zip(params.pi())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if gap > 1e-9 {
                info!(
                    "initial law is not stationary for the transition matrix (max gap {gap:.3e})"
                );
            }
        }
    }

    let base = ChaCha8Rng::seed_from_u64(seed);
    let n_times = params.n_times();
    let rho_list = params.transition_list();
    let paths: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            sample_node_chain(
                params.pi(),
                &rho_list,
                n_times,
                &mut stream(&base, i as u64),
            )
        })
        .collect::<Result<_>>()?;
    let latent = LatentStates::from_paths(&paths, n_times);

    let m = n_edges(n);
    let pairs: Vec<(usize, usize)> = edge_pairs(n).collect();
    let snapshots = (0..n_times)
        .map(|t| {
            let table = params.edge_probs(t);
            let states = latent.at(t);
            pairs
                .par_iter()
                .enumerate()
                .map(|(e, &(i, j))| {
                    let id = (n + t * m + e) as u64;
                    sample_categorical(table.get(states[i], states[j]), &mut stream(&base, id))
                        as u8
                })
                .collect()
        })
        .collect();
    let network = ObservedNetwork::new(n, params.kappa(), snapshots)?;
    Ok(SimOutput {
        latent,
        network,
        seed,
    })
}

/// Law of a single edge state at time `t` with the latent states integrated
/// out: `sum_{q,l} pi_t(q) pi_t(l) bp_t[q][l]`.
pub fn marginal_edge_distribution(params: &ModelParams, t: usize) -> Vec<f64> {
    let law = params.marginal_state_law(t);
    let q = params.n_states();
    let mut out = vec![0.0; params.kappa()];
    for a in 0..q {
        for b in 0..q {
            let w = law[a] * law[b];
            for (o, p) in out.iter_mut().zip(params.bp(t, a, b)) {
                *o += w * p;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{EdgeTensor, Transitions};
    use crate::presets::Scenario;

    #[test]
    fn identity_transitions_freeze_the_chain() {
        let id = DMatrix::identity(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let path = sample_node_chain(&[0.2, 0.3, 0.5], &[&id, &id, &id], 4, &mut rng).unwrap();
            assert!(path.iter().all(|&z| z == path[0]));
        }
    }

    #[test]
    fn point_mass_start_with_one_time_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            sample_node_chain(&[1.0, 0.0], &[], 1, &mut rng).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn chain_rejects_mismatched_lengths() {
        let id = DMatrix::identity(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_node_chain(&[0.5, 0.5], &[&id], 3, &mut rng).is_err());
    }

    #[test]
    fn sticky_diagonal_frequency() {
        let p = Scenario::Scenario1.params();
        let rho = p.transition(1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut stay = [0usize; 3];
        let mut total = [0usize; 3];
        for _ in 0..100_000 {
            let path = sample_node_chain(p.pi(), &[rho], 2, &mut rng).unwrap();
            total[path[0]] += 1;
            stay[path[0]] += usize::from(path[1] == path[0]);
        }
        for q in 0..3 {
            let freq = stay[q] as f64 / total[q] as f64;
            assert!((freq - 0.6).abs() < 0.01, "state {q}: {freq}");
        }
    }

    #[test]
    fn point_mass_edges_are_all_absent() {
        let p = ModelParams::new(
            vec![0.5, 0.5],
            Transitions::Inhomogeneous(vec![DMatrix::from_element(2, 2, 0.5)]),
            vec![EdgeTensor::from_fn(2, 3, |_, _| vec![1.0, 0.0, 0.0]).unwrap(); 2],
        )
        .unwrap();
        let out = sample_network(&p, 20, 3).unwrap();
        assert!((0..2).all(|t| out.network.snapshot(t).iter().all(|&x| x == 0)));
    }

    #[test]
    fn single_state_edges_follow_the_table() {
        let table = vec![0.5, 0.3, 0.2];
        let p = ModelParams::new(
            vec![1.0],
            Transitions::Inhomogeneous(vec![]),
            vec![EdgeTensor::from_fn(1, 3, |_, _| table.clone()).unwrap()],
        )
        .unwrap();
        let out = sample_network(&p, 200, 9).unwrap();
        let hist = out.network.state_histogram(0);
        let m = n_edges(200) as f64;
        for (c, p) in hist.iter().zip(&table) {
            let sd = (p * (1.0 - p) / m).sqrt();
            assert!((*c as f64 / m - p).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let p = Scenario::Scenario2.params();
        let a = sample_network(&p, 40, 17).unwrap();
        let b = sample_network(&p, 40, 17).unwrap();
        assert_eq!(a, b);
        let c = sample_network(&p, 40, 18).unwrap();
        assert_ne!(a.network, c.network);
    }

    #[test]
    fn too_few_nodes() {
        assert!(sample_network(&Scenario::Scenario2.params(), 1, 0).is_err());
    }

    #[test]
    fn marginal_of_scenario2() {
        let p = Scenario::Scenario2.params();
        let m = marginal_edge_distribution(&p, 0);
        // (0.1 + 0.2 + 0.3 + 2 * (0.4 + 0.5 + 0.6)) / 9
        assert!((m[0] - 0.4).abs() < 1e-15);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marginal_single_state_is_the_table() {
        let table = vec![0.25, 0.75];
        let p = ModelParams::new(
            vec![1.0],
            Transitions::Inhomogeneous(vec![]),
            vec![EdgeTensor::from_fn(1, 2, |_, _| table.clone()).unwrap()],
        )
        .unwrap();
        assert_eq!(marginal_edge_distribution(&p, 0), table);
    }

    #[test]
    fn marginal_tracks_the_moving_state_law() {
        let p = Scenario::Scenario1Inhomogeneous.params();
        for t in 0..4 {
            let m = marginal_edge_distribution(&p, t);
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // The last transition is uniform, so the state law at t = 4 is uniform.
        let law = p.marginal_state_law(3);
        assert!(law.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn file_round_trip_and_latent_switch() {
        let out = sample_network(&Scenario::Scenario2.params(), 10, 5).unwrap();
        let file = out.to_file(true);
        assert_eq!(file.edges.len(), 3);
        assert!(file.edges.iter().all(|e| e.len() == 45));
        assert_eq!(file.network().unwrap(), out.network);
        assert_eq!(file.latent_states(3).unwrap().unwrap(), out.latent);
        let bare = serde_json::to_value(out.to_file(false)).unwrap();
        assert!(bare.get("latent").is_none());
    }
}
