//! Recovery of the initial law and edge laws from a conditional matrix whose
//! row order is unknown, together with the row probabilities.
//!
//! Marginalizing a row over all edges but one gives the law of that edge.
//! A row where every edge has the same law belongs to a constant assignment
//! `(q, .., q)`, and its probability is `pi_q^m`. A row with exactly two
//! distinct edge laws contains one diagonal law `bp_qq` and one mixed law
//! `bp_ql`; the mixed law appears next to `bp_qq` in some rows and next to
//! `bp_ll` in others, which fixes its pair.

use nalgebra::DMatrix;

use super::conditional::{ConditionalMatrix, LexCodec};
use crate::error::{Error, Result};
use crate::labels::LabelPermutation;
use crate::network::n_edges;
use crate::params::EdgeTensor;

pub const DEFAULT_MATCH_TOL: f64 = 1e-9;

/// Parameters recovered up to one global relabeling.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticRecovery {
    pub pi: Vec<f64>,
    pub edge_probs: EdgeTensor,
    /// Smallest sup-norm distance between two recovered edge laws.
    pub min_gap: f64,
}

impl StaticRecovery {
    /// The relabeling of the recovered states that best matches a
    /// reference, with the largest absolute error left after applying it.
    pub fn align_to(&self, pi: &[f64], edge_probs: &EdgeTensor) -> (LabelPermutation, f64) {
        let q = self.pi.len();
        LabelPermutation::all(q)
            .map(|sigma| {
                let mut err: f64 = 0.0;
                for a in 0..q {
                    err = err.max((self.pi[sigma.apply(a)] - pi[a]).abs());
                    for b in 0..q {
                        let got = self.edge_probs.get(sigma.apply(a), sigma.apply(b));
                        for (x, y) in got.iter().zip(edge_probs.get(a, b)) {
                            err = err.max((x - y).abs());
                        }
                    }
                }
                (sigma, err)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one permutation")
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Catalog of distinct vectors seen so far; returns the index of `v`,
/// adding it when new. Errors when `v` is close to more than one entry.
fn intern(catalog: &mut Vec<Vec<f64>>, v: &[f64], tol: f64) -> Result<usize> {
    let hits: Vec<usize> = (0..catalog.len())
        .filter(|&k| sup_distance(&catalog[k], v) <= tol)
        .collect();
    match hits.as_slice() {
        [] => {
            catalog.push(v.to_vec());
            Ok(catalog.len() - 1)
        }
        [k] => Ok(*k),
        _ => Err(Error::AmbiguousMatching(format!(
            "an edge law lies within {tol:e} of {} distinct laws",
            hits.len()
        ))),
    }
}

/// Law of each edge of the `m`-node subgraph, marginalized from one row.
fn edge_marginals(row: &[f64], m: usize, kappa: usize) -> Vec<Vec<f64>> {
    let codec = LexCodec::new(n_edges(m), kappa);
    let mut out = vec![vec![0.0; kappa]; n_edges(m)];
    for (col, &v) in row.iter().enumerate() {
        for (e, x) in codec.decode(col).into_iter().enumerate() {
            out[e][x] += v;
        }
    }
    out
}

/// Recovers `pi` and the edge laws from a row-shuffled conditional matrix and
/// the matching row probabilities `lambda`. States are numbered in the order
/// their constant rows appear.
pub fn recover_static_params(
    c: &ConditionalMatrix,
    lambda: &[f64],
    tol: f64,
) -> Result<StaticRecovery> {
    let (m, q, kappa) = (c.m(), c.n_states(), c.kappa());
    if m < 3 || q < 2 {
        return Err(Error::HypothesisViolated(format!(
            "recovery needs m >= 3 and Q >= 2 (m = {m}, Q = {q})"
        )));
    }
    let data: &DMatrix<f64> = c.data();
    if lambda.len() != data.nrows() {
        return Err(Error::Dimension(format!(
            "{} row probabilities for {} rows",
            lambda.len(),
            data.nrows()
        )));
    }

    let mut catalog: Vec<Vec<f64>> = Vec::new();
    // Distinct law indices per row.
    let mut row_sets: Vec<Vec<usize>> = Vec::with_capacity(data.nrows());
    for r in 0..data.nrows() {
        let row: Vec<f64> = data.row(r).iter().copied().collect();
        let mut set: Vec<usize> = Vec::new();
        for law in edge_marginals(&row, m, kappa) {
            let k = intern(&mut catalog, &law, tol)?;
            if !set.contains(&k) {
                set.push(k);
            }
        }
        row_sets.push(set);
    }

    let constant_rows: Vec<usize> = (0..row_sets.len())
        .filter(|&r| row_sets[r].len() == 1)
        .collect();
    if constant_rows.len() != q {
        return Err(Error::HypothesisViolated(format!(
            "{} rows carry a single edge law, expected Q = {q}; some edge laws coincide",
            constant_rows.len()
        )));
    }
    let diagonal: Vec<usize> = constant_rows.iter().map(|&r| row_sets[r][0]).collect();
    let pi: Vec<f64> = constant_rows
        .iter()
        .map(|&r| lambda[r].max(0.0).powf(1.0 / m as f64))
        .collect();

    // For every mixed law, the diagonal laws it shares a row with.
    let mut partners: Vec<Vec<usize>> = vec![Vec::new(); catalog.len()];
    for set in row_sets.iter().filter(|s| s.len() == 2) {
        let states: Vec<Option<usize>> = set
            .iter()
            .map(|k| diagonal.iter().position(|d| d == k))
            .collect();
        let (state, mixed) = match (states[0], states[1]) {
            (Some(s), None) => (s, set[1]),
            (None, Some(s)) => (s, set[0]),
            _ => {
                return Err(Error::HypothesisViolated(
                    "a row with two edge laws lacks exactly one diagonal law".into(),
                ))
            }
        };
        if !partners[mixed].contains(&state) {
            partners[mixed].push(state);
        }
    }

    let mut off: Vec<Option<Vec<f64>>> = vec![None; q * q];
    for (k, states) in partners.iter().enumerate() {
        if states.is_empty() {
            continue;
        }
        let [a, b] = states[..] else {
            return Err(Error::HypothesisViolated(format!(
                "a mixed edge law pairs with {} diagonal laws instead of 2",
                states.len()
            )));
        };
        for (x, y) in [(a, b), (b, a)] {
            if off[x * q + y].replace(catalog[k].clone()).is_some() {
                return Err(Error::AmbiguousMatching(format!(
                    "two mixed edge laws claim states ({}, {})",
                    x + 1,
                    y + 1
                )));
            }
        }
    }

    let mut missing = None;
    let edge_probs = EdgeTensor::from_fn(q, kappa, |a, b| {
        if a == b {
            catalog[diagonal[a]].clone()
        } else if let Some(v) = &off[a * q + b] {
            v.clone()
        } else {
            missing = Some((a, b));
            vec![0.0; kappa]
        }
    })?;
    if let Some((a, b)) = missing {
        return Err(Error::HypothesisViolated(format!(
            "no edge law found for states ({}, {})",
            a + 1,
            b + 1
        )));
    }

    let laws: Vec<&[f64]> = crate::params::pairs(q)
        .into_iter()
        .map(|(a, b)| edge_probs.get(a, b))
        .collect();
    let mut min_gap = f64::INFINITY;
    for i in 0..laws.len() {
        for j in i + 1..laws.len() {
            min_gap = min_gap.min(sup_distance(laws[i], laws[j]));
        }
    }
    if min_gap <= 10.0 * tol {
        return Err(Error::AmbiguousMatching(format!(
            "edge laws are only {min_gap:.3e} apart, within ten times the matching tolerance"
        )));
    }
    Ok(StaticRecovery {
        pi,
        edge_probs,
        min_gap,
    })
}

/// Row probabilities `prod_i pi_{z_i}` of the state assignments on `m` nodes,
/// in row-codec order.
pub fn assignment_probabilities(pi: &[f64], m: usize) -> Vec<f64> {
    let codec = LexCodec::new(m, pi.len());
    (0..codec.size())
        .map(|r| codec.decode(r).iter().map(|&z| pi[z]).product())
        .collect()
}
