//! Recovery of transition matrices from the joint law of one edge at two
//! consecutive time points, when the edge laws are linearly independent.

use log::warn;
use nalgebra::DMatrix;

use super::rank::{rank_summary, DEFAULT_REL_TOL};
use crate::error::{Error, Result};
use crate::markov;
use crate::params::{n_pairs, pair_index, pairs, EdgeTensor, ModelParams};

/// Joint law of the unordered state pairs of two nodes at consecutive time
/// points. Rows index the pair `{q1, l1}` at the first time point, columns
/// the pair `{q2, l2}` at the second, both in the order of
/// [`pairs`](crate::params::pairs).
#[derive(Clone, Debug, PartialEq)]
pub struct PhiMatrix {
    n_states: usize,
    data: DMatrix<f64>,
}

impl PhiMatrix {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn get(&self, first: (usize, usize), second: (usize, usize)) -> f64 {
        let q = self.n_states;
        self.data[(
            pair_index(first.0, first.1, q),
            pair_index(second.0, second.1, q),
        )]
    }
}

/// Builds the pair-transition law from the state law `pi` at the first time
/// point and the transition matrix `rho` to the second.
///
/// A warning is logged when `pi` is not stationary for `rho`; the matrix is
/// still the exact law for the given `pi`.
pub fn build_phi(pi: &[f64], rho: &DMatrix<f64>) -> PhiMatrix {
    if let Ok(stationary) = markov::stationary_distribution(rho) {
        let gap = stationary
            .iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if gap > 1e-9 {
            warn!("state law is not stationary for the transition matrix (max gap {gap:.3e})");
        }
    }
    phi_matrix(pi, rho)
}

pub(crate) fn phi_matrix(pi: &[f64], rho: &DMatrix<f64>) -> PhiMatrix {
    let q = pi.len();
    let index = pairs(q);
    let data = DMatrix::from_fn(n_pairs(q), n_pairs(q), |r, c| {
        let (q1, l1) = index[r];
        let (q2, l2) = index[c];
        match (q1 == l1, q2 == l2) {
            (true, true) => pi[q1] * pi[q1] * rho[(q1, q2)] * rho[(q1, q2)],
            (true, false) => 2.0 * pi[q1] * pi[q1] * rho[(q1, q2)] * rho[(q1, l2)],
            (false, true) => 2.0 * pi[q1] * pi[l1] * rho[(q1, q2)] * rho[(l1, q2)],
            (false, false) => {
                2.0 * pi[q1]
                    * pi[l1]
                    * (rho[(q1, q2)] * rho[(l1, l2)] + rho[(q1, l2)] * rho[(l1, q2)])
            }
        }
    });
    PhiMatrix { n_states: q, data }
}

/// Exact `kappa x kappa` joint law of the states of one edge at time points
/// `t0` and `t0 + 1` (0-based): `M_t0' Phi M_t0+1`, where `M_t` stacks the
/// edge laws of the unordered state pairs.
pub fn joint_consecutive_edge_distribution(
    params: &ModelParams,
    t0: usize,
) -> Result<DMatrix<f64>> {
    if t0 + 1 >= params.n_times() {
        return Err(Error::Dimension(format!(
            "time index {t0} has no successor among {} time points",
            params.n_times()
        )));
    }
    let law = params.marginal_state_law(t0);
    let phi = phi_matrix(&law, params.transition(t0 + 1));
    let m0 = params.edge_probs(t0).distribution_matrix();
    let m1 = params.edge_probs(t0 + 1).distribution_matrix();
    Ok(m0.transpose() * phi.data() * m1)
}

/// Transition matrix recovered from a joint consecutive-edge law.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiRecovery {
    pub rho: DMatrix<f64>,
    /// Largest row-sum deviation from one before renormalization.
    pub row_sum_defect: f64,
    /// `max |M_t0' Phi_hat M_t0+1 - joint|`.
    pub residual: f64,
}

/// Inverts `joint = M_t0' Phi M_t0+1` through pseudo-inverses of the edge-law
/// matrices and reads `rho_ql = sqrt(Phi((q,q);(l,l))) / pi_q`, where `pi`
/// is the state law at `t0`.
pub fn recover_transitions_via_phi(
    joint: &DMatrix<f64>,
    bp_t0: &EdgeTensor,
    bp_t1: &EdgeTensor,
    pi: &[f64],
) -> Result<PhiRecovery> {
    let q = pi.len();
    let kappa = bp_t0.kappa();
    if bp_t0.n_states() != q
        || bp_t1.n_states() != q
        || bp_t1.kappa() != kappa
        || joint.shape() != (kappa, kappa)
    {
        return Err(Error::Dimension(
            "joint law, edge laws and pi disagree on Q or kappa".into(),
        ));
    }
    if kappa < n_pairs(q) {
        return Err(Error::HypothesisViolated(format!(
            "{} edge laws cannot be linearly independent in dimension kappa = {kappa}",
            n_pairs(q)
        )));
    }
    if let Some(k) = pi.iter().position(|&p| p <= 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "state {} has zero probability",
            k + 1
        )));
    }
    let m0 = bp_t0.distribution_matrix();
    let m1 = bp_t1.distribution_matrix();
    for (name, m) in [("first", &m0), ("second", &m1)] {
        let summary = rank_summary(m, DEFAULT_REL_TOL)?;
        if !summary.full_row_rank() {
            return Err(Error::HypothesisViolated(format!(
                "edge laws at the {name} time point are linearly dependent (rank {} of {})",
                summary.rank, summary.n_rows
            )));
        }
    }
    let pinv0t = m0
        .transpose()
        .pseudo_inverse(0.0)
        .map_err(|e| Error::Inconsistent(e.to_string()))?;
    let pinv1 = m1
        .clone()
        .pseudo_inverse(0.0)
        .map_err(|e| Error::Inconsistent(e.to_string()))?;
    let phi = &pinv0t * joint * &pinv1;

    let mut rho = DMatrix::zeros(q, q);
    for a in 0..q {
        for b in 0..q {
            let v = phi[(pair_index(a, a, q), pair_index(b, b, q))];
            if v < -1e-10 {
                return Err(Error::Inconsistent(format!(
                    "negative pair-transition mass {v:.3e} for states ({}, {})",
                    a + 1,
                    b + 1
                )));
            }
            rho[(a, b)] = v.max(0.0).sqrt() / pi[a];
        }
    }
    let mut row_sum_defect: f64 = 0.0;
    for mut row in rho.row_iter_mut() {
        let s = row.sum();
        row_sum_defect = row_sum_defect.max((s - 1.0).abs());
        if s > 0.0 {
            row /= s;
        }
    }
    let residual = (m0.transpose() * &phi * &m1 - joint).amax();
    Ok(PhiRecovery {
        rho,
        row_sum_defect,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::Scenario;
    use proptest::prelude::*;

    fn two_state() -> (Vec<f64>, DMatrix<f64>) {
        (
            vec![0.5, 0.5],
            DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.4, 0.6]),
        )
    }

    #[test]
    fn hand_values_two_states() {
        let (pi, rho) = two_state();
        let phi = build_phi(&pi, &rho);
        assert!((phi.get((0, 0), (0, 0)) - 0.09).abs() < 1e-15);
        assert!((phi.get((0, 1), (0, 1)) - 0.26).abs() < 1e-15);
        assert!((phi.data().sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn margins_are_unordered_pair_laws() {
        let p = Scenario::Scenario1.params();
        let rho = p.transition(1);
        let pi = markov::stationary_distribution(rho).unwrap();
        let phi = build_phi(&pi, rho);
        for (k, (q, l)) in pairs(3).into_iter().enumerate() {
            let expect = if q == l {
                pi[q] * pi[q]
            } else {
                2.0 * pi[q] * pi[l]
            };
            assert!((phi.data().row(k).sum() - expect).abs() < 1e-12);
            assert!((phi.data().column(k).sum() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_matches_enumeration_over_state_paths() {
        let (pi, rho) = two_state();
        let bp0 = EdgeTensor::from_pair_rows(
            2,
            3,
            vec![
                vec![0.5, 0.3, 0.2],
                vec![0.1, 0.6, 0.3],
                vec![0.3, 0.3, 0.4],
            ],
        )
        .unwrap();
        let bp1 = EdgeTensor::from_pair_rows(
            2,
            3,
            vec![
                vec![0.2, 0.2, 0.6],
                vec![0.7, 0.1, 0.2],
                vec![0.4, 0.5, 0.1],
            ],
        )
        .unwrap();
        let p = ModelParams::new(
            pi.clone(),
            crate::params::Transitions::Inhomogeneous(vec![rho.clone()]),
            vec![bp0.clone(), bp1.clone()],
        )
        .unwrap();
        let joint = joint_consecutive_edge_distribution(&p, 0).unwrap();
        let mut brute = DMatrix::zeros(3, 3);
        for q1 in 0..2 {
            for l1 in 0..2 {
                for q2 in 0..2 {
                    for l2 in 0..2 {
                        let w = pi[q1] * pi[l1] * rho[(q1, q2)] * rho[(l1, l2)];
                        for x in 0..3 {
                            for y in 0..3 {
                                brute[(x, y)] += w * bp0.get(q1, l1)[x] * bp1.get(q2, l2)[y];
                            }
                        }
                    }
                }
            }
        }
        assert!((joint - brute).amax() < 1e-14);
    }

    #[test]
    fn frozen_chain_gives_weighted_products() {
        let pi = vec![0.3, 0.7];
        let bp = EdgeTensor::from_pair_rows(
            2,
            3,
            vec![
                vec![0.5, 0.3, 0.2],
                vec![0.1, 0.6, 0.3],
                vec![0.3, 0.3, 0.4],
            ],
        )
        .unwrap();
        let p =
            ModelParams::time_stable(pi.clone(), DMatrix::identity(2, 2), bp.clone(), 2).unwrap();
        let joint = joint_consecutive_edge_distribution(&p, 0).unwrap();
        let mut expect = DMatrix::zeros(3, 3);
        for (q, l) in pairs(2) {
            let w = if q == l {
                pi[q] * pi[q]
            } else {
                2.0 * pi[q] * pi[l]
            };
            let v = nalgebra::DVector::from_column_slice(bp.get(q, l));
            expect += w * &v * v.transpose();
        }
        assert!((joint.clone() - expect).amax() < 1e-15);
        assert!((joint.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scenario1_round_trip() {
        let p = Scenario::Scenario1.params();
        let joint = joint_consecutive_edge_distribution(&p, 0).unwrap();
        let rec =
            recover_transitions_via_phi(&joint, p.edge_probs(0), p.edge_probs(1), p.pi()).unwrap();
        assert!((rec.rho - p.transition(1)).amax() < 1e-8);
        assert!(rec.residual < 1e-12);
    }

    #[test]
    fn inhomogeneous_round_trip_uses_the_moved_state_law() {
        let p = Scenario::Scenario1Inhomogeneous.params();
        for t0 in 0..3 {
            let joint = joint_consecutive_edge_distribution(&p, t0).unwrap();
            let law = p.marginal_state_law(t0);
            let rec =
                recover_transitions_via_phi(&joint, p.edge_probs(t0), p.edge_probs(t0 + 1), &law)
                    .unwrap();
            assert!((rec.rho - p.transition(t0 + 1)).amax() < 1e-8, "t0 = {t0}");
        }
    }

    #[test]
    fn single_state_is_trivial() {
        let bp = EdgeTensor::from_pair_rows(1, 2, vec![vec![0.4, 0.6]]).unwrap();
        let joint = DMatrix::from_row_slice(2, 2, &[0.16, 0.24, 0.24, 0.36]);
        let rec = recover_transitions_via_phi(&joint, &bp, &bp, &[1.0]).unwrap();
        assert!((rec.rho[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_edge_states_is_rejected() {
        let p = Scenario::Scenario2.params();
        let joint = joint_consecutive_edge_distribution(&p, 0).unwrap();
        let err = recover_transitions_via_phi(&joint, p.edge_probs(0), p.edge_probs(1), p.pi())
            .unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated(_)));
    }

    proptest! {
        #[test]
        fn phi_is_a_probability_law(
            raw_pi in proptest::collection::vec(0.05f64..1.0, 3),
            raw_rho in proptest::collection::vec(0.05f64..1.0, 9),
        ) {
            let s: f64 = raw_pi.iter().sum();
            let pi: Vec<f64> = raw_pi.iter().map(|v| v / s).collect();
            let mut rho = DMatrix::from_row_slice(3, 3, &raw_rho);
            for mut row in rho.row_iter_mut() {
                let s = row.sum();
                row /= s;
            }
            let phi = phi_matrix(&pi, &rho);
            prop_assert!(phi.data().iter().all(|&v| v >= 0.0));
            prop_assert!((phi.data().sum() - 1.0).abs() < 1e-12);
        }
    }
}
