//! Observed networks and latent state paths.
//!
//! Edges of an undirected network on `n` nodes are stored per time point as
//! one flat vector in upper-triangular row-major order:
//! `(0,1), (0,2), .., (0,n-1), (1,2), ..`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::StateCodec;

pub fn n_edges(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of the edge `{i, j}` (`i != j`) in the flat layout.
pub fn edge_index(i: usize, j: usize, n: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    debug_assert!(a != b && b < n);
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

/// All node pairs `i < j` in layout order.
pub fn edge_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
}

/// Edge states of `n` nodes over `T` time points.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedNetwork {
    n: usize,
    kappa: usize,
    snapshots: Vec<Vec<u8>>,
}

impl ObservedNetwork {
    pub fn new(n: usize, kappa: usize, snapshots: Vec<Vec<u8>>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::InvalidNetwork("no time points".into()));
        }
        if !(2..=256).contains(&kappa) {
            return Err(Error::InvalidNetwork(format!(
                "kappa = {kappa} outside 2..=256"
            )));
        }
        for (t, s) in snapshots.iter().enumerate() {
            if s.len() != n_edges(n) {
                return Err(Error::InvalidNetwork(format!(
                    "time point {} has {} edges, expected {}",
                    t + 1,
                    s.len(),
                    n_edges(n)
                )));
            }
            if let Some(&x) = s.iter().find(|&&x| x as usize >= kappa) {
                return Err(Error::InvalidNetwork(format!(
                    "edge state {x} at time point {} is not below kappa = {kappa}",
                    t + 1
                )));
            }
        }
        Ok(Self {
            n,
            kappa,
            snapshots,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_times(&self) -> usize {
        self.snapshots.len()
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn snapshot(&self, t: usize) -> &[u8] {
        &self.snapshots[t]
    }

    pub fn state(&self, t: usize, i: usize, j: usize) -> usize {
        self.snapshots[t][edge_index(i, j, self.n)] as usize
    }

    /// Empirical frequency of each edge state at time `t`.
    pub fn state_histogram(&self, t: usize) -> Vec<usize> {
        let mut counts = vec![0; self.kappa];
        for &x in &self.snapshots[t] {
            counts[x as usize] += 1;
        }
        counts
    }
}

/// Latent states `states[t][i]`, 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatentStates {
    states: Vec<Vec<usize>>,
}

impl LatentStates {
    pub fn new(states: Vec<Vec<usize>>, n_states: usize) -> Result<Self> {
        let n = states.first().map_or(0, Vec::len);
        if states.iter().any(|s| s.len() != n) {
            return Err(Error::Dimension(
                "every time point needs one state per node".into(),
            ));
        }
        if states.iter().flatten().any(|&z| z >= n_states) {
            return Err(Error::Dimension(format!(
                "latent state out of range 1..={n_states}"
            )));
        }
        Ok(Self { states })
    }

    /// Builds from per-node paths `paths[i][t]`.
    pub fn from_paths(paths: &[Vec<usize>], n_times: usize) -> Self {
        let states = (0..n_times)
            .map(|t| paths.iter().map(|p| p[t]).collect())
            .collect();
        Self { states }
    }

    pub fn n_nodes(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn n_times(&self) -> usize {
        self.states.len()
    }

    pub fn get(&self, t: usize, i: usize) -> usize {
        self.states[t][i]
    }

    pub fn at(&self, t: usize) -> &[usize] {
        &self.states[t]
    }
}

/// On-disk network document. Latent states are optional and 1-based; `kappa`
/// may be omitted and is then inferred from the data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub n: usize,
    #[serde(rename = "T")]
    pub n_times: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Vec<Vec<usize>>>,
    pub edges: Vec<Vec<u8>>,
}

impl NetworkFile {
    pub fn network(&self) -> Result<ObservedNetwork> {
        if self.edges.len() != self.n_times {
            return Err(Error::InvalidNetwork(format!(
                "T = {} but {} snapshots given",
                self.n_times,
                self.edges.len()
            )));
        }
        let kappa = match self.kappa {
            Some(k) => k,
            None => self
                .edges
                .iter()
                .flatten()
                .map(|&x| x as usize + 1)
                .max()
                .unwrap_or(2)
                .max(2),
        };
        ObservedNetwork::new(self.n, kappa, self.edges.clone())
    }

    pub fn latent_states(&self, n_states: usize) -> Result<Option<LatentStates>> {
        self.latent
            .as_ref()
            .map(|rows| {
                let internal = rows
                    .iter()
                    .map(|r| {
                        r.iter()
                            .map(|&z| {
                                StateCodec::to_internal(z).ok_or_else(|| {
                                    Error::Dimension("latent labels are 1-based".into())
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                LatentStates::new(internal, n_states)
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_index_matches_enumeration() {
        for n in 2..8 {
            for (k, (i, j)) in edge_pairs(n).enumerate() {
                assert_eq!(edge_index(i, j, n), k);
                assert_eq!(edge_index(j, i, n), k);
            }
            assert_eq!(edge_pairs(n).count(), n_edges(n));
        }
    }

    #[test]
    fn rejects_out_of_range_states() {
        assert!(ObservedNetwork::new(3, 2, vec![vec![0, 1, 2]]).is_err());
        assert!(ObservedNetwork::new(3, 2, vec![vec![0, 1]]).is_err());
        assert!(ObservedNetwork::new(3, 3, vec![vec![0, 1, 2]]).is_ok());
    }

    #[test]
    fn kappa_is_inferred_when_absent() {
        let file: NetworkFile = serde_json::from_str(r#"{"n":3,"T":1,"edges":[[0,4,1]]}"#).unwrap();
        assert_eq!(file.network().unwrap().kappa(), 5);
    }
}
