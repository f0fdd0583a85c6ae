//! Global label alignment of estimates.

use crate::error::{Error, Result};
use crate::labels::{permute_labels, LabelPermutation};
use crate::params::ModelParams;

/// Largest `Q` for which alignment to a reference enumerates permutations.
pub const MAX_ALIGN_STATES: usize = 8;

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// `sum_{t, q} TV(bp_hat^t_{sigma(q) sigma(q)}, reference^t_{qq})`.
pub fn alignment_cost(
    params_hat: &ModelParams,
    reference: &ModelParams,
    sigma: &LabelPermutation,
) -> f64 {
    (0..reference.n_times())
        .flat_map(|t| (0..reference.n_states()).map(move |q| (t, q)))
        .map(|(t, q)| {
            let s = sigma.apply(q);
            total_variation(params_hat.bp(t, s, s), reference.bp(t, q, q))
        })
        .sum()
}

/// Relabels `params_hat` and returns the permutation used, so that the
/// result equals `permute_labels(params_hat, sigma)`.
///
/// With a reference, `sigma` minimizes [`alignment_cost`] over all `Q!`
/// permutations (first minimizer in lexicographic order). Without one,
/// states are sorted by their diagonal edge-state law at the first time
/// point, compared lexicographically, so the state with the smallest
/// probability of no edge comes first.
pub fn align_labels(
    params_hat: &ModelParams,
    reference: Option<&ModelParams>,
) -> Result<(ModelParams, LabelPermutation)> {
    let q = params_hat.n_states();
    let sigma = match reference {
        Some(r) => {
            if r.n_states() != q
                || r.n_times() != params_hat.n_times()
                || r.kappa() != params_hat.kappa()
            {
                return Err(Error::Dimension(
                    "estimate and reference have different shapes".into(),
                ));
            }
            if q > MAX_ALIGN_STATES {
                return Err(Error::InvalidConfig(format!(
                    "alignment to a reference enumerates Q! permutations; Q = {q} exceeds {MAX_ALIGN_STATES}"
                )));
            }
            let mut best: Option<(f64, LabelPermutation)> = None;
            for sigma in LabelPermutation::all(q) {
                let cost = alignment_cost(params_hat, r, &sigma);
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, sigma));
                }
            }
            best.expect("at least one permutation").1
        }
        None => {
            let mut order: Vec<usize> = (0..q).collect();
            order.sort_by(|&a, &b| {
                let (la, lb) = (params_hat.bp(0, a, a), params_hat.bp(0, b, b));
                la.iter()
                    .zip(lb)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            LabelPermutation::new(order)?
        }
    };
    Ok((permute_labels(params_hat, &sigma), sigma))
}

/// Per-time relabeling that makes diagonal edge-state laws agree across
/// time points: `sigmas[0]` is the identity and `sigmas[t]` minimizes
/// `sum_q TV(bp^t_{s(q) s(q)}, bp^{t-1}_{r(q) r(q)})` with `r = sigmas[t-1]`
/// (first minimizer in lexicographic order, so the identity wins ties).
///
/// The edge laws may change freely between time points, so labelings that
/// differ by a permutation at one time point can fit equally well; only
/// stable diagonal laws tie the labels together. With more than
/// [`MAX_ALIGN_STATES`] states every permutation is the identity.
pub fn time_alignment(params: &ModelParams) -> Vec<LabelPermutation> {
    let q = params.n_states();
    let mut sigmas = vec![LabelPermutation::identity(q)];
    if q > MAX_ALIGN_STATES {
        sigmas.resize(params.n_times(), LabelPermutation::identity(q));
        return sigmas;
    }
    for t in 1..params.n_times() {
        let prev = sigmas[t - 1].clone();
        let cost = |s: &LabelPermutation| -> f64 {
            (0..q)
                .map(|a| {
                    total_variation(
                        params.bp(t, s.apply(a), s.apply(a)),
                        params.bp(t - 1, prev.apply(a), prev.apply(a)),
                    )
                })
                .sum()
        };
        let mut best: Option<(f64, LabelPermutation)> = None;
        for s in LabelPermutation::all(q) {
            let c = cost(&s);
            if best.as_ref().is_none_or(|(b, _)| c < *b) {
                best = Some((c, s));
            }
        }
        sigmas.push(best.expect("at least one permutation").1);
    }
    sigmas
}
