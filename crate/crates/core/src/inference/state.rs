//! Markov mean-field variational distribution over latent node paths.

use crate::error::{Error, Result};
use crate::labels::LabelPermutation;
use crate::network::LatentStates;

const ROW_TOL: f64 = 1e-9;

/// Per-node Markov variational laws.
///
/// Node `i` follows its own chain with initial law `lambda1(i)` and
/// transition rows `lambda(t, i)` (`1 <= t < T`, row `q` is the law of the
/// state at `t` given state `q` at `t - 1`). `delta(t, i)` is the implied
/// marginal at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalState {
    n_nodes: usize,
    n_times: usize,
    n_states: usize,
    lambda1: Vec<f64>,
    lambda: Vec<f64>,
    delta: Vec<f64>,
}

impl VariationalState {
    /// Builds a state from flat arrays: `lambda1[i * Q + q]` and
    /// `lambda[((t - 1) * n + i) * Q * Q + q * Q + l]`. The marginals are
    /// derived.
    pub fn from_parts(
        n_nodes: usize,
        n_times: usize,
        n_states: usize,
        lambda1: Vec<f64>,
        lambda: Vec<f64>,
    ) -> Result<Self> {
        if n_times == 0 || n_states == 0 {
            return Err(Error::Dimension(
                "need at least one time point and one state".into(),
            ));
        }
        let q = n_states;
        if lambda1.len() != n_nodes * q || lambda.len() != (n_times - 1) * n_nodes * q * q {
            return Err(Error::Dimension(format!(
                "responsibility arrays of length {} and {} do not fit n = {n_nodes}, T = {n_times}, Q = {q}",
                lambda1.len(),
                lambda.len()
            )));
        }
        for (what, values) in [("lambda1", &lambda1), ("lambda", &lambda)] {
            for (k, row) in values.chunks(q).enumerate() {
                let ok = row.iter().all(|v| v.is_finite() && *v >= 0.0)
                    && (row.iter().sum::<f64>() - 1.0).abs() <= ROW_TOL;
                if !ok {
                    return Err(Error::Inconsistent(format!(
                        "{what} row {k} is not a probability vector"
                    )));
                }
            }
        }
        let mut state = Self {
            n_nodes,
            n_times,
            n_states,
            lambda1,
            lambda,
            delta: vec![0.0; n_times * n_nodes * q],
        };
        for i in 0..n_nodes {
            state.refresh_delta(i);
        }
        Ok(state)
    }

    /// Every node follows `laws[i]` at each time point, independently of its
    /// past.
    pub fn from_node_laws(laws: &[Vec<f64>], n_times: usize) -> Result<Self> {
        let q = laws.first().map_or(0, Vec::len);
        if laws.iter().any(|l| l.len() != q) {
            return Err(Error::Dimension("node laws differ in length".into()));
        }
        let n = laws.len();
        let lambda1 = laws.concat();
        let mut lambda = Vec::with_capacity(n_times.saturating_sub(1) * n * q * q);
        for _ in 1..n_times {
            for law in laws {
                for _ in 0..q {
                    lambda.extend_from_slice(law);
                }
            }
        }
        Self::from_parts(n, n_times, q, lambda1, lambda)
    }

    pub fn uniform(n_nodes: usize, n_times: usize, n_states: usize) -> Self {
        let law = vec![1.0 / n_states as f64; n_states];
        Self::from_node_laws(&vec![law; n_nodes], n_times).expect("uniform laws are valid")
    }

    /// Point masses on the given latent paths.
    pub fn point_mass(latent: &LatentStates, n_states: usize) -> Result<Self> {
        let (n, t_len, q) = (latent.n_nodes(), latent.n_times(), n_states);
        let one_hot = |s: usize| {
            let mut v = vec![0.0; q];
            v[s] = 1.0;
            v
        };
        if (0..t_len).any(|t| latent.at(t).iter().any(|&z| z >= q)) {
            return Err(Error::Dimension(format!(
                "latent states must lie below Q = {q}"
            )));
        }
        let lambda1 = (0..n).flat_map(|i| one_hot(latent.get(0, i))).collect();
        let mut lambda = Vec::with_capacity(t_len.saturating_sub(1) * n * q * q);
        for t in 1..t_len {
            for i in 0..n {
                let row = one_hot(latent.get(t, i));
                for _ in 0..q {
                    lambda.extend_from_slice(&row);
                }
            }
        }
        Self::from_parts(n, t_len, q, lambda1, lambda)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn lambda1(&self, i: usize) -> &[f64] {
        &self.lambda1[i * self.n_states..(i + 1) * self.n_states]
    }

    /// Transition rows of node `i` into time `t` (`1 <= t < T`), `Q x Q`
    /// row-major.
    pub fn lambda(&self, t: usize, i: usize) -> &[f64] {
        let qq = self.n_states * self.n_states;
        let start = self.lambda_offset(t, i);
        &self.lambda[start..start + qq]
    }

    pub fn delta(&self, t: usize, i: usize) -> &[f64] {
        let start = (t * self.n_nodes + i) * self.n_states;
        &self.delta[start..start + self.n_states]
    }

    /// Most probable state of every node at time `t`.
    pub fn hard_labels(&self, t: usize) -> Vec<usize> {
        (0..self.n_nodes)
            .map(|i| {
                let d = self.delta(t, i);
                (0..self.n_states).fold(0, |best, q| if d[q] > d[best] { q } else { best })
            })
            .collect()
    }

    /// State whose label `q` carries what this one calls `sigma(q)`, matching
    /// [`crate::permute_labels`].
    pub fn relabeled(&self, sigma: &LabelPermutation) -> Self {
        self.relabeled_per_time(&vec![sigma.clone(); self.n_times])
    }

    /// As [`relabeled`](Self::relabeled) with a separate permutation for
    /// every time point; `sigmas[t]` relabels time `t`.
    pub fn relabeled_per_time(&self, sigmas: &[LabelPermutation]) -> Self {
        assert_eq!(sigmas.len(), self.n_times, "one permutation per time point");
        let q = self.n_states;
        assert!(
            sigmas.iter().all(|s| s.len() == q),
            "permutation size must equal Q"
        );
        let first = &sigmas[0];
        let lambda1 = (0..self.n_nodes)
            .flat_map(|i| (0..q).map(move |a| self.lambda1[i * q + first.apply(a)]))
            .collect();
        let mut lambda = Vec::with_capacity(self.lambda.len());
        for (k, block) in self.lambda.chunks(q * q).enumerate() {
            let t = k / self.n_nodes + 1;
            let (from, to) = (&sigmas[t - 1], &sigmas[t]);
            for a in 0..q {
                for b in 0..q {
                    lambda.push(block[from.apply(a) * q + to.apply(b)]);
                }
            }
        }
        Self::from_parts(self.n_nodes, self.n_times, q, lambda1, lambda)
            .expect("relabeling preserves validity")
    }

    fn lambda_offset(&self, t: usize, i: usize) -> usize {
        assert!(
            t >= 1 && t < self.n_times,
            "no transition into time index {t}"
        );
        ((t - 1) * self.n_nodes + i) * self.n_states * self.n_states
    }

    pub(crate) fn lambda1_mut(&mut self, i: usize) -> &mut [f64] {
        let q = self.n_states;
        &mut self.lambda1[i * q..(i + 1) * q]
    }

    pub(crate) fn lambda_mut(&mut self, t: usize, i: usize) -> &mut [f64] {
        let qq = self.n_states * self.n_states;
        let start = self.lambda_offset(t, i);
        &mut self.lambda[start..start + qq]
    }

    /// Recomputes the marginals of node `i` from its chain.
    pub(crate) fn refresh_delta(&mut self, i: usize) {
        let q = self.n_states;
        let first = self.lambda1(i).to_vec();
        self.delta[i * q..(i + 1) * q].copy_from_slice(&first);
        let mut prev = first;
        for t in 1..self.n_times {
            let rows = self.lambda(t, i);
            let next: Vec<f64> = (0..q)
                .map(|l| (0..q).map(|a| prev[a] * rows[a * q + l]).sum())
                .collect();
            let start = (t * self.n_nodes + i) * q;
            self.delta[start..start + q].copy_from_slice(&next);
            prev = next;
        }
    }

    /// Largest absolute difference between the chains of `self` and `other`.
    pub(crate) fn sup_distance(&self, other: &Self) -> f64 {
        self.lambda1
            .iter()
            .zip(&other.lambda1)
            .chain(self.lambda.iter().zip(&other.lambda))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
