//! Checks of the identification hypotheses for a given parameter set, with
//! the numbers that decide each one.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::conditional::build_conditional_matrix;
use super::rank::{rank_summary, DEFAULT_REL_TOL};
use crate::error::Error;
use crate::markov;
use crate::params::{n_pairs, pairs, ModelParams};

/// Distinctness and stability comparisons use this absolute tolerance.
pub const VALUE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    /// Linearly independent edge laws.
    #[serde(rename = "t1")]
    LinearIndependence,
    /// Static model, conditional matrices of full row rank.
    #[serde(rename = "t2")]
    StaticRank,
    /// Dynamic model, conditional matrices of full row rank.
    #[serde(rename = "t3")]
    DynamicRank,
    /// Binary edges with two or three states.
    #[serde(rename = "corollary")]
    Binary,
}

impl Theorem {
    pub const ALL: [Theorem; 4] = [
        Theorem::LinearIndependence,
        Theorem::StaticRank,
        Theorem::DynamicRank,
        Theorem::Binary,
    ];

    /// Short command-line name.
    pub fn key(self) -> &'static str {
        match self {
            Theorem::LinearIndependence => "t1",
            Theorem::StaticRank => "t2",
            Theorem::DynamicRank => "t3",
            Theorem::Binary => "corollary",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.key() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown theorem {s:?} (expected t1, t2, t3 or corollary)"
                ))
            })
    }
}

/// One hypothesis and the number that decided it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub name: String,
    pub theorems: Vec<Theorem>,
    pub satisfied: bool,
    /// `None` when the quantity is undefined, e.g. a gap between fewer than
    /// two values.
    pub evidence: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub theorem: Theorem,
    /// False when the theorem does not cover the model at all.
    pub applicable: bool,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentReport {
    pub n: usize,
    pub m: usize,
    pub entries: Vec<HypothesisEntry>,
    pub verdicts: Vec<Verdict>,
}

impl IdentReport {
    pub fn verdict(&self, theorem: Theorem) -> &Verdict {
        self.verdicts
            .iter()
            .find(|v| v.theorem == theorem)
            .expect("every theorem has a verdict")
    }

    pub fn satisfied(&self, theorem: Theorem) -> bool {
        self.verdict(theorem).satisfied
    }

    pub fn any_satisfied(&self) -> bool {
        self.verdicts.iter().any(|v| v.satisfied)
    }

    pub fn entry(&self, name: &str) -> Option<&HypothesisEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

impl fmt::Display for IdentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let tags: Vec<&str> = e.theorems.iter().map(|t| t.key()).collect();
            let evidence = e
                .evidence
                .map_or_else(|| "-".to_string(), |v| format!("{v:.4e}"));
            writeln!(
                f,
                "[{}] {:<30} {:>12}  ({}) {}",
                if e.satisfied { "ok" } else { "--" },
                e.name,
                evidence,
                tags.join(","),
                e.detail
            )?;
        }
        for v in &self.verdicts {
            let state = match (v.applicable, v.satisfied) {
                (false, _) => "not applicable",
                (true, true) => "satisfied",
                (true, false) => "not satisfied",
            };
            writeln!(f, "{}: {state}", v.theorem)?;
        }
        Ok(())
    }
}

struct Builder {
    entries: Vec<HypothesisEntry>,
}

impl Builder {
    fn add(
        &mut self,
        name: &str,
        theorems: &[Theorem],
        satisfied: bool,
        evidence: f64,
        detail: String,
    ) {
        self.entries.push(HypothesisEntry {
            name: name.into(),
            theorems: theorems.to_vec(),
            satisfied,
            evidence: evidence.is_finite().then_some(evidence),
            detail,
        });
    }
}

fn min_pairwise_gap(values: &[f64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            gap = gap.min((values[i] - values[j]).abs());
        }
    }
    gap
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest change over time of the conditional-on-presence law of `bp_qq`,
/// for every `q` in `states`.
fn diagonal_nonzero_drift(params: &ModelParams, states: std::ops::Range<usize>) -> f64 {
    let mut drift: f64 = 0.0;
    for q in states {
        let first = params.conditional_nonzero(0, q, q);
        for t in 1..params.n_times() {
            drift = drift.max(match (&first, params.conditional_nonzero(t, q, q)) {
                (Some(a), Some(b)) => sup_distance(a, &b),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            });
        }
    }
    drift
}

fn diagonal_drift(params: &ModelParams, states: &[usize]) -> f64 {
    let mut drift: f64 = 0.0;
    for &q in states {
        for t in 1..params.n_times() {
            drift = drift.max(sup_distance(params.bp(0, q, q), params.bp(t, q, q)));
        }
    }
    drift
}

fn matrix_rank_ratio(m: &DMatrix<f64>) -> (bool, f64) {
    match rank_summary(m, DEFAULT_REL_TOL) {
        Ok(s) => (s.full_row_rank(), s.ratio()),
        Err(_) => (false, 0.0),
    }
}

/// Evaluates every hypothesis for a network of `n` nodes, with subgraphs of
/// `m` nodes for the rank conditions.
pub fn check_conditions(params: &ModelParams, n: usize, m: usize) -> IdentReport {
    use Theorem::*;
    let (q, kappa, t_count) = (params.n_states(), params.kappa(), params.n_times());
    let mut b = Builder {
        entries: Vec::new(),
    };

    // Linearly independent edge laws.
    let mut worst_ratio = f64::INFINITY;
    let mut independent = kappa >= n_pairs(q);
    for t in 0..t_count {
        let (full, ratio) = matrix_rank_ratio(&params.edge_probs(t).distribution_matrix());
        independent &= full;
        worst_ratio = worst_ratio.min(ratio);
    }
    b.add(
        "edge_laws_independent",
        &[LinearIndependence],
        independent,
        worst_ratio,
        format!(
            "{} laws in dimension kappa = {kappa}; smallest sigma ratio over time points",
            n_pairs(q)
        ),
    );
    let min_presence = (0..t_count)
        .flat_map(|t| pairs(q).into_iter().map(move |(a, c)| (t, a, c)))
        .map(|(t, a, c)| params.sparsity(t, a, c))
        .fold(f64::INFINITY, f64::min);
    b.add(
        "edges_present",
        &[LinearIndependence],
        min_presence > 0.0,
        min_presence,
        "smallest probability that an edge is present".into(),
    );
    let pi_gap = min_pairwise_gap(params.pi());
    let drift = diagonal_nonzero_drift(params, 0..q.saturating_sub(1));
    b.add(
        "global_alignment",
        &[LinearIndependence],
        pi_gap > VALUE_TOL || drift <= VALUE_TOL,
        pi_gap,
        format!("smallest gap between initial probabilities; drift of diagonal laws given presence {drift:.3e}"),
    );
    b.add(
        "size_linear_independence",
        &[LinearIndependence],
        n >= 9 && t_count >= 2,
        n as f64,
        format!("n = {n} >= 9 and T = {t_count} >= 2"),
    );

    // Conditional matrices of full row rank.
    let mut rank_ok = m >= 3;
    let mut rank_ratio = f64::INFINITY;
    let mut rank_detail = Vec::new();
    for t in 0..t_count {
        match build_conditional_matrix(params.edge_probs(t), m) {
            Ok(c) => {
                let (full, ratio) = matrix_rank_ratio(c.data());
                rank_ok &= full;
                rank_ratio = rank_ratio.min(ratio);
                let rank = rank_summary(c.data(), DEFAULT_REL_TOL)
                    .map(|s| s.rank)
                    .unwrap_or(0);
                rank_detail.push(format!("rank {rank}/{}", c.data().nrows()));
            }
            Err(e) => {
                rank_ok = false;
                rank_ratio = 0.0;
                rank_detail.push(e.to_string());
            }
        }
    }
    b.add(
        "conditional_full_row_rank",
        &[StaticRank, DynamicRank],
        rank_ok,
        rank_ratio,
        format!("m = {m}: {}", rank_detail.join(", ")),
    );
    let min_law = (0..t_count)
        .flat_map(|t| params.marginal_state_law(t))
        .fold(f64::INFINITY, f64::min);
    b.add(
        "state_laws_positive",
        &[StaticRank],
        min_law > 0.0,
        min_law,
        "smallest marginal state probability over time points".into(),
    );
    b.add(
        "size_rank",
        &[StaticRank, DynamicRank],
        n >= m * m,
        n as f64,
        format!("n = {n} >= m^2 = {}", m * m),
    );

    // Dynamic extras.
    let transitions = params.transition_list();
    let (mut ergodic, mut gap) = (!transitions.is_empty(), f64::INFINITY);
    let (mut full_rank, mut rho_ratio) = (!transitions.is_empty(), f64::INFINITY);
    for rho in &transitions {
        let g = markov::spectral_gap(rho);
        gap = gap.min(g);
        ergodic &= if params.is_homogeneous() {
            markov::is_irreducible(rho) && g > 1e-12
        } else {
            markov::is_irreducible(rho)
        };
        let (full, ratio) = matrix_rank_ratio(rho);
        full_rank &= full;
        rho_ratio = rho_ratio.min(ratio);
    }
    let positive_start = params.pi().iter().all(|&p| p > 0.0);
    b.add(
        "chain_ergodic",
        &[DynamicRank],
        ergodic && positive_start,
        if transitions.is_empty() { 0.0 } else { gap },
        if params.is_homogeneous() {
            "spectral gap; irreducible with positive gap".into()
        } else {
            "smallest spectral gap; every step irreducible with a positive initial law".into()
        },
    );
    b.add(
        "transition_full_rank",
        &[DynamicRank, Binary],
        full_rank,
        if transitions.is_empty() {
            0.0
        } else {
            rho_ratio
        },
        "smallest sigma ratio of the transition matrices".into(),
    );
    b.add(
        "three_time_points",
        &[DynamicRank, Binary],
        t_count >= 3,
        t_count as f64,
        format!("T = {t_count} >= 3"),
    );
    let all_states: Vec<usize> = (0..q).collect();
    let diag_drift = diagonal_drift(params, &all_states);
    let diag_laws: Vec<&[f64]> = (0..q).map(|a| params.bp(0, a, a)).collect();
    let mut diag_gap = f64::INFINITY;
    for i in 0..q {
        for j in i + 1..q {
            diag_gap = diag_gap.min(sup_distance(diag_laws[i], diag_laws[j]));
        }
    }
    b.add(
        "diagonal_laws_stable_distinct",
        &[DynamicRank],
        diag_drift <= VALUE_TOL && diag_gap > VALUE_TOL,
        diag_gap,
        format!("smallest gap between diagonal laws; drift over time {diag_drift:.3e}"),
    );

    let binary_applicable = kappa == 2 && (q == 2 || q == 3);
    if binary_applicable {
        add_binary(&mut b, params, n, &transitions);
    }

    let entries = b.entries;
    let verdicts = Theorem::ALL
        .into_iter()
        .map(|theorem| {
            let applicable = theorem != Binary || binary_applicable;
            let satisfied = applicable
                && entries
                    .iter()
                    .filter(|e| e.theorems.contains(&theorem))
                    .all(|e| e.satisfied);
            Verdict {
                theorem,
                applicable,
                satisfied,
            }
        })
        .collect();
    IdentReport {
        n,
        m,
        entries,
        verdicts,
    }
}

fn add_binary(b: &mut Builder, params: &ModelParams, n: usize, transitions: &[&DMatrix<f64>]) {
    use Theorem::Binary;
    let q = params.n_states();
    let mut card_gap = f64::INFINITY;
    for t in 0..params.n_times() {
        let p: Vec<f64> = pairs(q)
            .into_iter()
            .map(|(a, c)| params.sparsity(t, a, c))
            .collect();
        card_gap = card_gap.min(min_pairwise_gap(&p));
    }
    b.add(
        "binary_distinct_presence",
        &[Binary],
        card_gap > VALUE_TOL,
        card_gap,
        format!(
            "all {} presence probabilities distinct at every time point",
            n_pairs(q)
        ),
    );
    let needed = if q == 2 { 16 } else { 25 };
    b.add(
        "binary_size",
        &[Binary],
        n >= needed,
        n as f64,
        format!("n = {n} >= {needed}"),
    );
    if q == 2 {
        let inner = transitions
            .iter()
            .all(|r| (0..2).all(|j| r[(j, j)] > 0.0 && r[(j, j)] < 1.0));
        let asym = transitions
            .iter()
            .map(|r| (r[(0, 1)] - r[(1, 0)]).abs())
            .fold(f64::INFINITY, f64::min);
        let drift = diagonal_drift(params, &[0]);
        b.add(
            "binary_persistence_inner",
            &[Binary],
            inner && !transitions.is_empty(),
            transitions
                .iter()
                .map(|r| r[(0, 0)].min(r[(1, 1)]))
                .fold(f64::INFINITY, f64::min),
            "diagonal transition probabilities strictly between 0 and 1".into(),
        );
        b.add(
            "binary_alignment",
            &[Binary],
            asym > VALUE_TOL || drift <= VALUE_TOL,
            asym,
            format!("|rho_12 - rho_21|; drift of p_11 over time {drift:.3e}"),
        );
    } else {
        let ergodic = !transitions.is_empty()
            && transitions
                .iter()
                .all(|r| markov::is_irreducible(r) && markov::spectral_gap(r) > 1e-12);
        let drift = diagonal_drift(params, &[0, 1]);
        b.add(
            "binary_ergodic",
            &[Binary],
            ergodic,
            transitions
                .iter()
                .map(|r| markov::spectral_gap(r))
                .fold(f64::INFINITY, f64::min),
            "spectral gap of the transition matrix".into(),
        );
        b.add(
            "binary_alignment",
            &[Binary],
            drift <= VALUE_TOL,
            drift,
            "drift of p_11 and p_22 over time".into(),
        );
    }
}
