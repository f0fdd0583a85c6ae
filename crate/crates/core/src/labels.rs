//! Global relabeling of latent states.

use std::fmt;

use itertools::Itertools;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{EdgeTensor, ModelParams, StateCodec, Transitions};

/// A bijection on `{0, .., Q-1}`. Serialized as the 1-based image list
/// `[sigma(1), .., sigma(Q)]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelPermutation(Vec<usize>);

impl LabelPermutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            if i >= images.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Dimension(format!("{images:?} is not a permutation")));
            }
        }
        Ok(Self(images))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// Swaps two states and fixes the rest.
    pub fn transposition(n: usize, a: usize, b: usize) -> Self {
        let mut v: Vec<usize> = (0..n).collect();
        v.swap(a, b);
        Self(v)
    }

    /// Every permutation of `n` states, in lexicographic order.
    pub fn all(n: usize) -> impl Iterator<Item = LabelPermutation> {
        (0..n).permutations(n).map(LabelPermutation)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, q: usize) -> usize {
        self.0[q]
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (q, &s) in self.0.iter().enumerate() {
            inv[s] = q;
        }
        Self(inv)
    }

    /// `self ∘ other`, i.e. `q -> self(other(q))`.
    pub fn compose(&self, other: &Self) -> Self {
        Self(other.0.iter().map(|&q| self.0[q]).collect())
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(q, &s)| q == s)
    }
}

impl fmt::Display for LabelPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self
            .0
            .iter()
            .map(|&s| StateCodec::to_external(s).to_string())
            .collect();
        write!(f, "[{}]", labels.join(" "))
    }
}

impl Serialize for LabelPermutation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let ext: Vec<usize> = self.0.iter().map(|&q| StateCodec::to_external(q)).collect();
        ext.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelPermutation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let ext = Vec::<usize>::deserialize(d)?;
        let int = ext
            .into_iter()
            .map(|l| {
                StateCodec::to_internal(l)
                    .ok_or_else(|| serde::de::Error::custom("labels are 1-based"))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        LabelPermutation::new(int).map_err(serde::de::Error::custom)
    }
}

fn permute_matrix(m: &DMatrix<f64>, sigma: &LabelPermutation) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |q, l| {
        m[(sigma.apply(q), sigma.apply(l))]
    })
}

/// Relabels every state-indexed quantity: the result has
/// `pi'[q] = pi[sigma(q)]`, `rho'[q][l] = rho[sigma(q)][sigma(l)]` and
/// `bp'[q][l] = bp[sigma(q)][sigma(l)]`.
///
/// The observable law is unchanged, so `params` and the result describe the
/// same model.
pub fn permute_labels(params: &ModelParams, sigma: &LabelPermutation) -> ModelParams {
    assert_eq!(
        sigma.len(),
        params.n_states(),
        "permutation size must equal Q"
    );
    let pi = (0..params.n_states())
        .map(|q| params.pi()[sigma.apply(q)])
        .collect();
    let transitions = match params.transitions() {
        Transitions::Homogeneous(m) => Transitions::Homogeneous(permute_matrix(m, sigma)),
        Transitions::Inhomogeneous(ms) => {
            Transitions::Inhomogeneous(ms.iter().map(|m| permute_matrix(m, sigma)).collect())
        }
    };
    let edges = params
        .edge_probs_all()
        .iter()
        .map(|e| {
            EdgeTensor::from_fn(e.n_states(), e.kappa(), |q, l| {
                e.get(sigma.apply(q), sigma.apply(l)).to_vec()
            })
            .expect("relabeling preserves shape")
        })
        .collect();
    ModelParams::with_parts(pi, transitions, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::Scenario;
    use proptest::prelude::*;

    #[test]
    fn identity_leaves_params_unchanged() {
        let p = Scenario::Scenario1Inhomogeneous.params();
        assert_eq!(permute_labels(&p, &LabelPermutation::identity(3)), p);
    }

    #[test]
    fn swap_exchanges_diagonal_tables() {
        let p = Scenario::Scenario2.params();
        let swapped = permute_labels(&p, &LabelPermutation::transposition(3, 0, 1));
        assert_eq!(swapped.bp(0, 0, 0), p.bp(0, 1, 1));
        assert_eq!(swapped.bp(0, 1, 1), p.bp(0, 0, 0));
        assert_eq!(swapped.pi(), p.pi());
    }

    #[test]
    fn swap_is_an_involution() {
        let p = Scenario::Scenario2.params();
        let s = LabelPermutation::transposition(3, 0, 1);
        assert_eq!(permute_labels(&permute_labels(&p, &s), &s), p);
    }

    #[test]
    fn rejects_non_permutations() {
        assert!(LabelPermutation::new(vec![0, 0, 2]).is_err());
        assert!(LabelPermutation::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn serializes_one_based() {
        let s = LabelPermutation::new(vec![2, 0, 1]).unwrap();
        assert_eq!(serde_json::to_string(&s).unwrap(), "[3,1,2]");
        assert_eq!(
            serde_json::from_str::<LabelPermutation>("[3,1,2]").unwrap(),
            s
        );
        assert_eq!(s.to_string(), "[3 1 2]");
    }

    proptest! {
        #[test]
        fn validity_is_label_invariant(k in 0usize..6, scenario in 0usize..3) {
            let p = Scenario::ALL[scenario].params();
            let sigma = LabelPermutation::all(3).nth(k).unwrap();
            let q = permute_labels(&p, &sigma);
            prop_assert_eq!(q.validate().is_valid(), p.validate().is_valid());
            let back = permute_labels(&q, &sigma.inverse());
            prop_assert_eq!(back, p);
        }

        #[test]
        fn inverse_composes_to_identity(k in 0usize..24) {
            let s = LabelPermutation::all(4).nth(k).unwrap();
            prop_assert!(s.compose(&s.inverse()).is_identity());
            prop_assert!(s.inverse().compose(&s).is_identity());
        }
    }
}
