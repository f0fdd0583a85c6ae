//! Flat estimate tables and their summaries.

use std::fmt::Write as _;

use dynsbm::{LabelPermutation, ModelParams};
use serde::{Deserialize, Serialize};

pub const ESTIMATE_HEADER: &str = "replicate,group,t,q,l,x,estimate,truth";

/// Identifies one parameter entry. Time points and states are 1-based; `x`
/// is the edge state itself.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryKey {
    pub group: String,
    pub t: Option<usize>,
    pub q: Option<usize>,
    pub l: Option<usize>,
    pub x: Option<usize>,
}

impl EntryKey {
    fn new(
        group: &str,
        t: Option<usize>,
        q: Option<usize>,
        l: Option<usize>,
        x: Option<usize>,
    ) -> Self {
        Self {
            group: group.to_string(),
            t,
            q,
            l,
            x,
        }
    }

    /// Short axis label, e.g. `t1 12:0` for `bp^1_12(0)`.
    pub fn label(&self) -> String {
        let mut s = String::new();
        if let (Some(t), "bp") = (self.t, self.group.as_str()) {
            let _ = write!(s, "t{t} ");
        }
        if let Some(q) = self.q {
            let _ = write!(s, "{q}");
        }
        if let Some(l) = self.l {
            let _ = write!(s, "{l}");
        }
        if let Some(x) = self.x {
            let _ = write!(s, ":{x}");
        }
        s
    }

    /// Output file stem of the boxplot panel holding this entry.
    pub fn panel(&self) -> String {
        match (self.group.as_str(), self.t) {
            ("rho", Some(t)) => format!("rho_t{t}"),
            (g, _) => g.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRow {
    pub replicate: usize,
    pub key: EntryKey,
    pub estimate: f64,
    pub truth: Option<f64>,
}

fn opt(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl EstimateRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.replicate,
            self.key.group,
            opt(self.key.t),
            opt(self.key.q),
            opt(self.key.l),
            opt(self.key.x),
            self.estimate,
            self.truth.map(|v| v.to_string()).unwrap_or_default()
        )
    }
}

/// One row per entry of `pi`, each transition matrix and each edge-state
/// law (pairs `q <= l`), followed by the relabeling used, as group `sigma`
/// with the 1-based image of each state.
pub fn estimate_rows(
    replicate: usize,
    estimate: &ModelParams,
    truth: Option<&ModelParams>,
    sigma: &LabelPermutation,
) -> Vec<EstimateRow> {
    let q_len = estimate.n_states();
    let mut rows = Vec::new();
    let mut push = |key: EntryKey, estimate: f64, truth: Option<f64>| {
        rows.push(EstimateRow {
            replicate,
            key,
            estimate,
            truth,
        });
    };
    for q in 0..q_len {
        push(
            EntryKey::new("pi", Some(1), Some(q + 1), None, None),
            estimate.pi()[q],
            truth.map(|p| p.pi()[q]),
        );
    }
    let steps: Vec<Option<usize>> = if estimate.n_times() < 2 {
        Vec::new()
    } else if estimate.is_homogeneous() {
        vec![None]
    } else {
        (1..estimate.n_times()).map(Some).collect()
    };
    for step in steps {
        let t = step.unwrap_or(1);
        let rho = estimate.transition(t);
        // A shared estimate is compared with a shared truth only.
        let truth_rho = truth
            .filter(|p| step.is_some() || p.is_homogeneous())
            .map(|p| p.transition(t));
        for q in 0..q_len {
            for l in 0..q_len {
                push(
                    EntryKey::new("rho", step.map(|s| s + 1), Some(q + 1), Some(l + 1), None),
                    rho[(q, l)],
                    truth_rho.map(|m| m[(q, l)]),
                );
            }
        }
    }
    for t in 0..estimate.n_times() {
        for q in 0..q_len {
            for l in q..q_len {
                for (x, &v) in estimate.bp(t, q, l).iter().enumerate() {
                    push(
                        EntryKey::new("bp", Some(t + 1), Some(q + 1), Some(l + 1), Some(x)),
                        v,
                        truth.map(|p| p.bp(t, q, l)[x]),
                    );
                }
            }
        }
    }
    for q in 0..q_len {
        push(
            EntryKey::new("sigma", None, Some(q + 1), None, None),
            (sigma.apply(q) + 1) as f64,
            None,
        );
    }
    rows
}

pub fn estimates_csv(rows: &[EstimateRow]) -> String {
    let mut out = String::from(ESTIMATE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Quantile of sorted data, interpolating between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    Quartiles::of(values).map_or(f64::NAN, |q| q.median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dynsbm::presets::Scenario;

    #[test]
    fn quartiles_interpolate() {
        let q = Quartiles::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(
            (q.min, q.q1, q.median, q.q3, q.max),
            (1.0, 1.75, 2.5, 3.25, 4.0)
        );
        let single = Quartiles::of(&[0.3]).unwrap();
        assert_eq!((single.q1, single.median, single.q3), (0.3, 0.3, 0.3));
        assert!(Quartiles::of(&[]).is_none());
    }

    #[test]
    fn rows_cover_every_parameter() {
        let p = Scenario::Scenario2.params();
        let rows = estimate_rows(1, &p, Some(&p), &LabelPermutation::identity(3));
        // 3 pi + 9 rho + 3 times * 6 pairs * 3 states + 3 sigma
        assert_eq!(rows.len(), 3 + 9 + 54 + 3);
        assert!(rows
            .iter()
            .filter(|r| r.key.group != "sigma")
            .all(|r| r.truth == Some(r.estimate)));
        let csv = estimates_csv(&rows);
        assert!(csv.starts_with(ESTIMATE_HEADER));
        assert!(csv.contains("\n1,bp,1,1,1,0,0.1,0.1\n"));
        assert!(csv.contains("\n1,rho,,1,1,,0.6,0.6\n"));
        assert!(csv.ends_with("1,sigma,,3,,,3,\n"));
    }

    #[test]
    fn inhomogeneous_rows_are_indexed_by_target_time() {
        let p = Scenario::Scenario1Inhomogeneous.params();
        let rows = estimate_rows(0, &p, Some(&p), &LabelPermutation::identity(3));
        let rho4: Vec<&EstimateRow> = rows
            .iter()
            .filter(|r| r.key.group == "rho" && r.key.t == Some(4))
            .collect();
        assert_eq!(rho4.len(), 9);
        assert!(rho4.iter().all(|r| (r.estimate - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(rho4[0].key.panel(), "rho_t4");
    }
}
