//! Recovery of transition matrices when the edge laws are not linearly
//! independent but conditional matrices on `m` nodes have full row rank.
//!
//! The states of `m` nodes form one chain with transition matrix
//! `rho^{(x)m}` (Kronecker power). Given the factor `rho^{(x)m} C`, the power
//! is recovered by a right inverse of `C`, and each `rho_ql` is the `m`-th
//! root of the entry linking the constant assignments `(q, .., q)` and
//! `(l, .., l)`.

use nalgebra::DMatrix;

use super::conditional::{build_conditional_matrix_with_budget, LexCodec, DEFAULT_BUDGET};
use super::rank::{RankSummary, DEFAULT_REL_TOL};
use crate::error::{Error, Result};
use crate::params::ModelParams;

/// `diag(pi)^-1 rho' diag(pi)`: the chain run backwards under the state law
/// `pi`.
pub fn time_reversal(rho: &DMatrix<f64>, pi: &[f64]) -> Result<DMatrix<f64>> {
    time_reversal_between(rho, pi, pi)
}

/// `diag(pi_next)^-1 rho' diag(pi_prev)`: the backward transition matrix of
/// a step from state law `pi_prev` to `pi_next = pi_prev rho`.
pub fn time_reversal_between(
    rho: &DMatrix<f64>,
    pi_prev: &[f64],
    pi_next: &[f64],
) -> Result<DMatrix<f64>> {
    let n = rho.nrows();
    if rho.ncols() != n || pi_prev.len() != n || pi_next.len() != n {
        return Err(Error::Dimension(
            "time reversal needs a square matrix and matching laws".into(),
        ));
    }
    if let Some(k) = pi_next.iter().position(|&p| p <= 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "state {} has zero probability",
            k + 1
        )));
    }
    Ok(DMatrix::from_fn(n, n, |q, l| {
        rho[(l, q)] * pi_prev[l] / pi_next[q]
    }))
}

/// `m`-fold Kronecker power; row and column indices follow the row codec of
/// conditional matrices (first factor most significant).
pub fn kron_power(matrix: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    kron_power_with_budget(matrix, m, DEFAULT_BUDGET)
}

pub fn kron_power_with_budget(
    matrix: &DMatrix<f64>,
    m: usize,
    budget: usize,
) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::Dimension("Kronecker power needs m >= 1".into()));
    }
    let size = (matrix.nrows() as u128)
        .checked_pow(m as u32)
        .zip((matrix.ncols() as u128).checked_pow(m as u32))
        .and_then(|(r, c)| r.checked_mul(c))
        .unwrap_or(u128::MAX);
    if size > budget as u128 {
        return Err(Error::BudgetExceeded {
            requested: size,
            budget,
        });
    }
    let mut out = matrix.clone();
    for _ in 1..m {
        out = out.kronecker(matrix);
    }
    Ok(out)
}

/// Dense three-way array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dims.1 + j) * self.dims.2 + k]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// `T(i1, i2, i3) = sum_r v_r M1[r, i1] M2[r, i2] M3[r, i3]`.
pub fn triple_product(
    v: &[f64],
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
    m3: &DMatrix<f64>,
) -> Result<Tensor3> {
    let r = v.len();
    if m1.nrows() != r || m2.nrows() != r || m3.nrows() != r {
        return Err(Error::Dimension(format!(
            "factors need {r} rows, got {}, {} and {}",
            m1.nrows(),
            m2.nrows(),
            m3.nrows()
        )));
    }
    let dims = (m1.ncols(), m2.ncols(), m3.ncols());
    let mut data = vec![0.0; dims.0 * dims.1 * dims.2];
    for (row, &w) in v.iter().enumerate() {
        for i in 0..dims.0 {
            let a = w * m1[(row, i)];
            for j in 0..dims.1 {
                let b = a * m2[(row, j)];
                let base = (i * dims.1 + j) * dims.2;
                for k in 0..dims.2 {
                    data[base + k] += b * m3[(row, k)];
                }
            }
        }
    }
    Ok(Tensor3 { dims, data })
}

/// Transition matrix recovered through conditional matrices on `m` nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmRecovery {
    pub rho: DMatrix<f64>,
    /// 0-based time point the recovered matrix moves the chain into.
    pub target_time: usize,
    /// `max |rho_hat^(x)m - rho^(x)m|` over the whole Kronecker power.
    pub kron_error: f64,
    /// Rank of the conditional matrix that was inverted.
    pub rank: RankSummary,
}

/// Solves `X C = A` for `X` with `C` of full row rank, i.e.
/// `X = A C' (C C')^-1`, through a QR factorization `C' = Q R`, which gives
/// `X = A Q R'^-1` without forming `C C'`.
fn right_solve(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<(DMatrix<f64>, RankSummary)> {
    let qr = c.transpose().qr();
    let r = qr.r();
    let mut s: Vec<f64> = r.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    let rank = RankSummary {
        rank: s.iter().filter(|&&v| v > DEFAULT_REL_TOL * s[0]).count(),
        n_rows: c.nrows(),
        sigma_max: s[0],
        sigma_min: *s.last().unwrap(),
    };
    if c.nrows() > c.ncols() || !rank.full_row_rank() {
        return Err(Error::HypothesisViolated(format!(
            "conditional matrix does not have full row rank (rank {} of {} rows)",
            rank.rank, rank.n_rows
        )));
    }
    let aq = a * qr.q();
    let xt = r
        .solve_upper_triangular(&aq.transpose())
        .ok_or_else(|| Error::HypothesisViolated("singular triangular factor".into()))?;
    Ok((xt.transpose(), rank))
}

fn check_middle_time(params: &ModelParams, m: usize, t0: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::Dimension(format!("need m >= 2 nodes, got {m}")));
    }
    if t0 == 0 || t0 + 1 >= params.n_times() {
        return Err(Error::Dimension(format!(
            "time index {t0} needs a predecessor and a successor among {} time points",
            params.n_times()
        )));
    }
    Ok(())
}

/// Entries of a recovered Kronecker power at or below this magnitude are
/// round-off and read as zero; the `m`-th root would otherwise inflate them.
pub const ROOT_NOISE_FLOOR: f64 = 1e-14;

fn extract_roots(power: &DMatrix<f64>, n_states: usize, m: usize) -> Result<DMatrix<f64>> {
    let codec = LexCodec::new(m, n_states);
    let mut rho = DMatrix::zeros(n_states, n_states);
    for q in 0..n_states {
        for l in 0..n_states {
            let v = power[(codec.encode(&vec![q; m]), codec.encode(&vec![l; m]))];
            if v < -1e-10 {
                return Err(Error::Inconsistent(format!(
                    "negative entry {v:.3e} for states ({}, {})",
                    q + 1,
                    l + 1
                )));
            }
            rho[(q, l)] = if v <= ROOT_NOISE_FLOOR {
                0.0
            } else {
                v.powf(1.0 / m as f64)
            };
        }
    }
    Ok(rho)
}

/// Recovers the transition matrix from time `t0` to `t0 + 1` (0-based,
/// `1 <= t0 <= T - 2`) from the exact factor `rho^(x)m C^{t0+1}`.
pub fn recover_transitions_via_hmm(
    params: &ModelParams,
    m: usize,
    t0: usize,
) -> Result<HmmRecovery> {
    check_middle_time(params, m, t0)?;
    let c = build_conditional_matrix_with_budget(params.edge_probs(t0 + 1), m, DEFAULT_BUDGET)?
        .into_data();
    let power = kron_power(params.transition(t0 + 1), m)?;
    let factor = &power * &c;
    let (power_hat, rank) = right_solve(&factor, &c)?;
    let rho = extract_roots(&power_hat, params.n_states(), m)?;
    Ok(HmmRecovery {
        rho,
        target_time: t0 + 1,
        kron_error: (&power_hat - &power).amax(),
        rank,
    })
}

/// Recovers the transition matrix from time `t0 - 1` to `t0` (0-based,
/// `1 <= t0 <= T - 2`) through the time-reversed chain: the factor
/// `rho_rev^(x)m C^{t0-1}` gives the backward power, which is turned forward
/// with the state laws at `t0 - 1` and `t0`.
pub fn recover_previous_transitions_via_hmm(
    params: &ModelParams,
    m: usize,
    t0: usize,
) -> Result<HmmRecovery> {
    check_middle_time(params, m, t0)?;
    let q = params.n_states();
    let c = build_conditional_matrix_with_budget(params.edge_probs(t0 - 1), m, DEFAULT_BUDGET)?
        .into_data();
    let before = kron_law(&params.marginal_state_law(t0 - 1), m)?;
    let after = kron_law(&params.marginal_state_law(t0), m)?;
    let power = kron_power(params.transition(t0), m)?;
    let reversed = time_reversal_between(&power, &before, &after)?;
    let factor = &reversed * &c;
    let (reversed_hat, rank) = right_solve(&factor, &c)?;
    let power_hat = time_reversal_between(&reversed_hat, &after, &before)?;
    let rho = extract_roots(&power_hat, q, m)?;
    Ok(HmmRecovery {
        rho,
        target_time: t0,
        kron_error: (&power_hat - &power).amax(),
        rank,
    })
}

/// `pi^(x)m` as a flat vector in row-codec order.
fn kron_law(pi: &[f64], m: usize) -> Result<Vec<f64>> {
    let v = DMatrix::from_row_slice(1, pi.len(), pi);
    Ok(kron_power(&v, m)?.iter().copied().collect())
}
