//! Model parameters of the dynamic stochastic block model with finitely many
//! edge states.
//!
//! A model has `Q` latent node states, `T` time points and `kappa` edge
//! states `0..kappa`, where state `0` means "no edge". It is described by
//!
//! * the initial node-state law `pi`,
//! * transition matrices, either one shared matrix (homogeneous chain) or one
//!   per time step (inhomogeneous chain),
//! * for every time point a symmetric table of edge-state laws: the law of the
//!   edge state between two nodes in states `q` and `l`.
//!
//! States are 0-based throughout the API. Anything written for humans (JSON
//! documents, CSV files, reports) uses 1-based labels; [`StateCodec`] is the
//! single place where that translation happens.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for probability vectors supplied as input.
pub const PROB_TOL: f64 = 1e-12;

/// Translation between internal 0-based states and the 1-based labels used in
/// every external representation.
pub struct StateCodec;

impl StateCodec {
    pub fn to_external(state: usize) -> usize {
        state + 1
    }

    pub fn to_internal(label: usize) -> Option<usize> {
        label.checked_sub(1)
    }
}

/// Number of unordered state pairs `q <= l`.
pub fn n_pairs(n_states: usize) -> usize {
    n_states * (n_states + 1) / 2
}

/// Position of the unordered pair `{q, l}` in the lexicographic list of pairs
/// `(0,0), (0,1), .., (0,Q-1), (1,1), ..`.
pub fn pair_index(q: usize, l: usize, n_states: usize) -> usize {
    let (a, b) = if q <= l { (q, l) } else { (l, q) };
    a * n_states - a * a.saturating_sub(1) / 2 + (b - a)
}

/// All unordered pairs `q <= l` in storage order.
pub fn pairs(n_states: usize) -> Vec<(usize, usize)> {
    (0..n_states)
        .flat_map(|q| (q..n_states).map(move |l| (q, l)))
        .collect()
}

/// Symmetric table of edge-state laws at one time point.
///
/// Only pairs `q <= l` are stored; reads of `(l, q)` are mirrored, so the
/// symmetry `bp[q][l] = bp[l][q]` holds by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeTensor {
    n_states: usize,
    kappa: usize,
    data: Vec<f64>,
}

impl EdgeTensor {
    /// Builds a table from one probability vector per unordered pair, in the
    /// order returned by [`pairs`].
    pub fn from_pair_rows(n_states: usize, kappa: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != n_pairs(n_states) {
            return Err(Error::Dimension(format!(
                "expected {} edge-state laws for {} states, got {}",
                n_pairs(n_states),
                n_states,
                rows.len()
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * kappa);
        for (k, row) in rows.into_iter().enumerate() {
            if row.len() != kappa {
                return Err(Error::Dimension(format!(
                    "edge-state law #{k} has {} entries, expected {kappa}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Ok(Self {
            n_states,
            kappa,
            data,
        })
    }

    /// Builds a table by evaluating `f(q, l)` on every pair `q <= l`.
    pub fn from_fn(
        n_states: usize,
        kappa: usize,
        mut f: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let rows = pairs(n_states).into_iter().map(|(q, l)| f(q, l)).collect();
        Self::from_pair_rows(n_states, kappa, rows)
    }

    pub fn uniform(n_states: usize, kappa: usize) -> Self {
        Self {
            n_states,
            kappa,
            data: vec![1.0 / kappa as f64; n_pairs(n_states) * kappa],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    /// Law of the edge state between nodes in states `q` and `l`.
    pub fn get(&self, q: usize, l: usize) -> &[f64] {
        let start = pair_index(q, l, self.n_states) * self.kappa;
        &self.data[start..start + self.kappa]
    }

    /// The `(Q+1 choose 2) x kappa` matrix whose rows are the laws of the
    /// unordered pairs in storage order.
    pub fn distribution_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(n_pairs(self.n_states), self.kappa, &self.data)
    }

    pub(crate) fn rows(&self) -> impl Iterator<Item = ((usize, usize), &[f64])> {
        pairs(self.n_states)
            .into_iter()
            .zip(self.data.chunks(self.kappa))
    }
}

/// Transition structure of the latent chains.
#[derive(Clone, Debug, PartialEq)]
pub enum Transitions {
    /// A single matrix shared by every time step.
    Homogeneous(DMatrix<f64>),
    /// One matrix per step; entry `k` moves the chain from time `k` to `k + 1`.
    Inhomogeneous(Vec<DMatrix<f64>>),
}

/// Parameters of a dynamic SBM with finite edge states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDoc", into = "ParamsDoc")]
pub struct ModelParams {
    pi: Vec<f64>,
    transitions: Transitions,
    edge_probs: Vec<EdgeTensor>,
}

impl ModelParams {
    /// Assembles parameters, checking only that all shapes agree. Probability
    /// constraints are reported by [`ModelParams::validate`].
    pub fn new(
        pi: Vec<f64>,
        transitions: Transitions,
        edge_probs: Vec<EdgeTensor>,
    ) -> Result<Self> {
        let q = pi.len();
        if q == 0 {
            return Err(Error::Dimension(
                "at least one node state is required".into(),
            ));
        }
        if edge_probs.is_empty() {
            return Err(Error::Dimension(
                "at least one time point is required".into(),
            ));
        }
        let kappa = edge_probs[0].kappa;
        if kappa < 2 {
            return Err(Error::Dimension(
                "at least two edge states are required".into(),
            ));
        }
        for (t, e) in edge_probs.iter().enumerate() {
            if e.n_states != q || e.kappa != kappa {
                return Err(Error::Dimension(format!(
                    "edge-state table at time {} has shape ({}, {}), expected ({q}, {kappa})",
                    t + 1,
                    e.n_states,
                    e.kappa
                )));
            }
        }
        let n_times = edge_probs.len();
        let check_square = |m: &DMatrix<f64>| {
            if m.nrows() != q || m.ncols() != q {
                Err(Error::Dimension(format!(
                    "transition matrix is {}x{}, expected {q}x{q}",
                    m.nrows(),
                    m.ncols()
                )))
            } else {
                Ok(())
            }
        };
        match &transitions {
            Transitions::Homogeneous(m) => check_square(m)?,
            Transitions::Inhomogeneous(ms) => {
                if ms.len() != n_times - 1 {
                    return Err(Error::Dimension(format!(
                        "{} transition matrices given for {n_times} time points",
                        ms.len()
                    )));
                }
                ms.iter().try_for_each(check_square)?;
            }
        }
        Ok(Self {
            pi,
            transitions,
            edge_probs,
        })
    }

    /// Homogeneous model whose edge-state laws are the same at every time point.
    pub fn time_stable(
        pi: Vec<f64>,
        rho: DMatrix<f64>,
        edges: EdgeTensor,
        n_times: usize,
    ) -> Result<Self> {
        Self::new(
            pi,
            Transitions::Homogeneous(rho),
            vec![edges; n_times.max(1)],
        )
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn n_times(&self) -> usize {
        self.edge_probs.len()
    }

    pub fn kappa(&self) -> usize {
        self.edge_probs[0].kappa
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn transitions(&self) -> &Transitions {
        &self.transitions
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.transitions, Transitions::Homogeneous(_))
    }

    /// Transition matrix used to move from time `t - 1` to time `t`
    /// (`1 <= t < T`).
    pub fn transition(&self, t: usize) -> &DMatrix<f64> {
        assert!(
            t >= 1 && t < self.n_times().max(2),
            "no transition into time index {t}"
        );
        match &self.transitions {
            Transitions::Homogeneous(m) => m,
            Transitions::Inhomogeneous(ms) => &ms[t - 1],
        }
    }

    /// Every transition matrix in time order, one per step.
    pub fn transition_list(&self) -> Vec<&DMatrix<f64>> {
        (1..self.n_times()).map(|t| self.transition(t)).collect()
    }

    pub fn edge_probs(&self, t: usize) -> &EdgeTensor {
        &self.edge_probs[t]
    }

    pub fn edge_probs_all(&self) -> &[EdgeTensor] {
        &self.edge_probs
    }

    /// Edge-state law at time `t` between states `q` and `l`.
    pub fn bp(&self, t: usize, q: usize, l: usize) -> &[f64] {
        self.edge_probs[t].get(q, l)
    }

    /// Probability that an edge is present, `1 - bp(0)`.
    pub fn sparsity(&self, t: usize, q: usize, l: usize) -> f64 {
        1.0 - self.bp(t, q, l)[0]
    }

    /// Law of the edge state given that an edge is present. `None` when the
    /// edge is never present.
    pub fn conditional_nonzero(&self, t: usize, q: usize, l: usize) -> Option<Vec<f64>> {
        let bp = self.bp(t, q, l);
        let p = 1.0 - bp[0];
        (p > 0.0).then(|| bp[1..].iter().map(|v| v / p).collect())
    }

    /// Marginal law of a node state at time `t`: `pi * rho_1 * .. * rho_t`.
    pub fn marginal_state_law(&self, t: usize) -> Vec<f64> {
        let mut law = self.pi.clone();
        for s in 1..=t {
            law = row_times_matrix(&law, self.transition(s));
        }
        law
    }

    /// Same model restricted to the first `n_times` time points.
    pub fn truncated(&self, n_times: usize) -> Result<Self> {
        if n_times == 0 || n_times > self.n_times() {
            return Err(Error::Dimension(format!(
                "cannot truncate {} time points to {n_times}",
                self.n_times()
            )));
        }
        let transitions = match &self.transitions {
            Transitions::Homogeneous(m) => Transitions::Homogeneous(m.clone()),
            Transitions::Inhomogeneous(ms) => {
                Transitions::Inhomogeneous(ms[..n_times - 1].to_vec())
            }
        };
        Self::new(
            self.pi.clone(),
            transitions,
            self.edge_probs[..n_times].to_vec(),
        )
    }

    pub(crate) fn with_parts(
        pi: Vec<f64>,
        transitions: Transitions,
        edge_probs: Vec<EdgeTensor>,
    ) -> Self {
        Self {
            pi,
            transitions,
            edge_probs,
        }
    }

    /// Lists every violated invariant; an empty report means the parameters
    /// are valid.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        check_prob_vector(
            &self.pi,
            &mut violations,
            Violation::PiNegative,
            Violation::PiNotNormalized,
        );
        let matrices: Vec<(usize, &DMatrix<f64>)> = match &self.transitions {
            Transitions::Homogeneous(m) => vec![(1, m)],
            Transitions::Inhomogeneous(ms) => {
                ms.iter().enumerate().map(|(k, m)| (k + 1, m)).collect()
            }
        };
        for (t, m) in matrices {
            for q in 0..m.nrows() {
                let row: Vec<f64> = m.row(q).iter().copied().collect();
                check_prob_vector(
                    &row,
                    &mut violations,
                    Violation::RhoNegative { t, q },
                    Violation::RhoRowNotNormalized { t, q },
                );
            }
        }
        for (t, e) in self.edge_probs.iter().enumerate() {
            for ((q, l), row) in e.rows() {
                check_prob_vector(
                    row,
                    &mut violations,
                    Violation::EdgeProbsNegative { t, q, l },
                    Violation::EdgeProbsNotNormalized { t, q, l },
                );
            }
        }
        ValidationReport { violations }
    }
}

fn check_prob_vector(
    v: &[f64],
    out: &mut Vec<Violation>,
    negative: Violation,
    unnormalized: Violation,
) {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        out.push(negative);
    }
    if (v.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
        out.push(unnormalized);
    }
}

pub(crate) fn row_times_matrix(v: &[f64], m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|l| v.iter().enumerate().map(|(q, x)| x * m[(q, l)]).sum())
        .collect()
}

/// One violated invariant. Indices are 0-based; `Display` prints them 1-based.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    PiNotNormalized,
    PiNegative,
    RhoRowNotNormalized { t: usize, q: usize },
    RhoNegative { t: usize, q: usize },
    EdgeProbsNotNormalized { t: usize, q: usize, l: usize },
    EdgeProbsNegative { t: usize, q: usize, l: usize },
    Symmetry { t: usize, q: usize, l: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = StateCodec::to_external;
        match *self {
            Violation::PiNotNormalized => write!(f, "pi not normalized"),
            Violation::PiNegative => write!(f, "pi has negative entries"),
            Violation::RhoRowNotNormalized { t, q } => {
                write!(f, "rho^{} row {} not normalized", t + 1, e(q))
            }
            Violation::RhoNegative { t, q } => {
                write!(f, "rho^{} row {} has negative entries", t + 1, e(q))
            }
            Violation::EdgeProbsNotNormalized { t, q, l } => {
                write!(f, "bp^{}_{},{} not normalized", e(t), e(q), e(l))
            }
            Violation::EdgeProbsNegative { t, q, l } => {
                write!(f, "bp^{}_{},{} has negative entries", e(t), e(q), e(l))
            }
            Violation::Symmetry { t, q, l } => write!(
                f,
                "symmetry: bp^{t}_{q},{l} differs from bp^{t}_{l},{q}",
                t = e(t),
                q = e(q),
                l = e(l)
            ),
        }
    }
}

/// Result of [`ModelParams::validate`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidParams(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Builds a symmetric table from a dense `Q x Q x kappa` array, reporting
/// every pair where `bp[q][l] != bp[l][q]`.
pub fn edge_tensor_from_dense(
    dense: &[Vec<Vec<f64>>],
    t: usize,
) -> std::result::Result<EdgeTensor, ValidationReport> {
    let q = dense.len();
    let kappa = dense.first().and_then(|r| r.first()).map_or(0, |v| v.len());
    let mut violations = Vec::new();
    for a in 0..q {
        for b in (a + 1)..q {
            if dense[a][b] != dense[b][a] {
                violations.push(Violation::Symmetry { t, q: a, l: b });
            }
        }
    }
    if !violations.is_empty() {
        return Err(ValidationReport { violations });
    }
    EdgeTensor::from_fn(q, kappa, |a, b| dense[a][b].clone())
        .map_err(|_| ValidationReport::default())
}

// JSON document layout. States and time points are 1-based.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    #[serde(rename = "Q")]
    n_states: usize,
    #[serde(rename = "T")]
    n_times: usize,
    kappa: usize,
    pi: Vec<f64>,
    rho: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    homogeneous: bool,
    edge_probs: Vec<Vec<EdgeEntry>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeEntry {
    q: usize,
    l: usize,
    probs: Vec<f64>,
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], n: usize) -> std::result::Result<DMatrix<f64>, String> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(format!("transition matrices must be {n}x{n}"));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

impl From<ModelParams> for ParamsDoc {
    fn from(p: ModelParams) -> Self {
        let (rho, homogeneous) = match &p.transitions {
            Transitions::Homogeneous(m) => (vec![matrix_to_rows(m)], true),
            Transitions::Inhomogeneous(ms) => (ms.iter().map(matrix_to_rows).collect(), false),
        };
        let edge_probs = p
            .edge_probs
            .iter()
            .map(|e| {
                e.rows()
                    .map(|((q, l), probs)| EdgeEntry {
                        q: StateCodec::to_external(q),
                        l: StateCodec::to_external(l),
                        probs: probs.to_vec(),
                    })
                    .collect()
            })
            .collect();
        ParamsDoc {
            n_states: p.n_states(),
            n_times: p.n_times(),
            kappa: p.kappa(),
            pi: p.pi,
            rho,
            homogeneous,
            edge_probs,
        }
    }
}

impl TryFrom<ParamsDoc> for ModelParams {
    type Error = String;

    fn try_from(doc: ParamsDoc) -> std::result::Result<Self, String> {
        let q = doc.n_states;
        if doc.pi.len() != q {
            return Err(format!("pi has {} entries, Q = {q}", doc.pi.len()));
        }
        if doc.edge_probs.len() != doc.n_times {
            return Err(format!(
                "edge_probs has {} time points, T = {}",
                doc.edge_probs.len(),
                doc.n_times
            ));
        }
        let transitions = if doc.homogeneous {
            if doc.rho.len() != 1 {
                return Err("a homogeneous model carries exactly one transition matrix".into());
            }
            Transitions::Homogeneous(rows_to_matrix(&doc.rho[0], q)?)
        } else {
            Transitions::Inhomogeneous(
                doc.rho
                    .iter()
                    .map(|m| rows_to_matrix(m, q))
                    .collect::<std::result::Result<_, _>>()?,
            )
        };
        let mut tables = Vec::with_capacity(doc.n_times);
        for (t, entries) in doc.edge_probs.into_iter().enumerate() {
            let mut slots: Vec<Option<Vec<f64>>> = vec![None; n_pairs(q)];
            for entry in entries {
                let (a, b) = match (
                    StateCodec::to_internal(entry.q),
                    StateCodec::to_internal(entry.l),
                ) {
                    (Some(a), Some(b)) if a < q && b < q => (a, b),
                    _ => {
                        return Err(format!(
                            "edge state pair ({}, {}) out of range",
                            entry.q, entry.l
                        ))
                    }
                };
                if entry.probs.len() != doc.kappa {
                    return Err(format!(
                        "edge-state law ({}, {}) must have kappa entries",
                        entry.q, entry.l
                    ));
                }
                let slot = &mut slots[pair_index(a, b, q)];
                match slot {
                    Some(existing) if *existing != entry.probs => {
                        return Err(Violation::Symmetry {
                            t,
                            q: a.min(b),
                            l: a.max(b),
                        }
                        .to_string())
                    }
                    Some(_) => {}
                    None => *slot = Some(entry.probs),
                }
            }
            let rows = slots
                .into_iter()
                .enumerate()
                .map(|(k, s)| {
                    s.ok_or_else(|| format!("missing edge-state law #{} at time {}", k + 1, t + 1))
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            tables.push(EdgeTensor::from_pair_rows(q, doc.kappa, rows).map_err(|e| e.to_string())?);
        }
        ModelParams::new(doc.pi, transitions, tables).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::Scenario;

    #[test]
    fn pair_index_enumerates_pairs_in_order() {
        for q in 1..6 {
            for (k, (a, b)) in pairs(q).into_iter().enumerate() {
                assert_eq!(pair_index(a, b, q), k);
                assert_eq!(pair_index(b, a, q), k);
            }
        }
    }

    #[test]
    fn unnormalized_pi_is_reported() {
        let p = Scenario::Scenario2.params();
        let bad = ModelParams::new(
            vec![0.5, 0.6, 0.0],
            p.transitions().clone(),
            p.edge_probs_all().to_vec(),
        )
        .unwrap();
        let report = bad.validate();
        assert!(report.violations.contains(&Violation::PiNotNormalized));
        assert!(report.to_string().contains("pi not normalized"));
    }

    #[test]
    fn asymmetric_dense_table_is_reported() {
        let mut dense = vec![vec![vec![0.5, 0.5]; 2]; 2];
        dense[0][1] = vec![0.3, 0.7];
        let err = edge_tensor_from_dense(&dense, 0).unwrap_err();
        assert_eq!(
            err.violations,
            vec![Violation::Symmetry { t: 0, q: 0, l: 1 }]
        );
        assert!(err.to_string().starts_with("symmetry"));
    }

    #[test]
    fn json_rejects_conflicting_mirror_entries() {
        let doc = r#"{"Q":2,"T":1,"kappa":2,"pi":[0.5,0.5],"rho":[],
            "edge_probs":[[{"q":1,"l":1,"probs":[0.5,0.5]},{"q":1,"l":2,"probs":[0.2,0.8]},
                           {"q":2,"l":1,"probs":[0.3,0.7]},{"q":2,"l":2,"probs":[0.9,0.1]}]]}"#;
        let err = serde_json::from_str::<ModelParams>(doc).unwrap_err();
        assert!(err.to_string().contains("symmetry"), "{err}");
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let mut v = serde_json::to_value(Scenario::Scenario2.params()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ModelParams>(v).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        for s in Scenario::ALL {
            let p = s.params();
            let text = serde_json::to_string(&p).unwrap();
            let back: ModelParams = serde_json::from_str(&text).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn mirrored_reads_agree() {
        let p = Scenario::Scenario1.params();
        assert_eq!(p.bp(0, 0, 2), p.bp(0, 2, 0));
        assert!((p.sparsity(0, 2, 1) - 0.6).abs() < 1e-15);
        let cond = p.conditional_nonzero(0, 0, 0).unwrap();
        assert!((cond.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
