//! Numerical rank of conditional matrices and the search for the smallest
//! subgraph size giving full row rank.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conditional::{
    build_conditional_matrix_with_budget, conditional_matrix_size, LexCodec, DEFAULT_BUDGET,
};
use crate::error::{Error, Result};
use crate::network::n_edges;
use crate::params::{n_pairs, pairs, EdgeTensor};

pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Singular values in decreasing order.
///
/// The matrix is first reduced by a QR factorization of its tall
/// orientation; the triangular factor has the same singular values and is
/// square in the smaller dimension.
pub fn singular_values(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    if matrix.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let r = if matrix.nrows() <= matrix.ncols() {
        matrix.transpose().qr().r()
    } else {
        matrix.clone().qr().r()
    };
    let mut s: Vec<f64> = r.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Rank together with the singular values that decided it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub rank: usize,
    pub n_rows: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
}

impl RankSummary {
    pub fn full_row_rank(&self) -> bool {
        self.rank == self.n_rows
    }

    /// `sigma_min / sigma_max`, zero for the zero matrix.
    pub fn ratio(&self) -> f64 {
        if self.sigma_max > 0.0 {
            self.sigma_min / self.sigma_max
        } else {
            0.0
        }
    }
}

pub fn rank_summary(matrix: &DMatrix<f64>, rel_tol: f64) -> Result<RankSummary> {
    let s = singular_values(matrix)?;
    let sigma_max = s[0];
    // A wide or square matrix has one singular value per row; a tall one is
    // missing the rest, which are zero.
    let sigma_min = if matrix.nrows() > matrix.ncols() {
        0.0
    } else {
        *s.last().unwrap()
    };
    let rank = s.iter().filter(|&&v| v > rel_tol * sigma_max).count();
    Ok(RankSummary {
        rank,
        n_rows: matrix.nrows(),
        sigma_max,
        sigma_min,
    })
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_row_rank(matrix: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    rank_summary(matrix, rel_tol).map(|s| s.rank)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSearchConfig {
    pub n_trials: usize,
    pub m_max: usize,
    pub rel_tol: f64,
    /// Largest conditional matrix, in entries, that will be formed.
    pub budget: usize,
    pub seed: u64,
}

impl Default for RankSearchConfig {
    fn default() -> Self {
        Self {
            n_trials: 20,
            m_max: 8,
            rel_tol: DEFAULT_REL_TOL,
            budget: DEFAULT_BUDGET,
            seed: 0,
        }
    }
}

/// Required spacing between free parameters of a random draw: `1e-3`, or
/// less when many free parameters have to fit in the unit interval.
pub fn draw_spacing(n_states: usize, kappa: usize) -> f64 {
    let free = n_pairs(n_states) * (kappa - 1);
    1e-3f64.min(1e-2 / free as f64)
}

/// Random edge laws whose free entries `bp_ql(x)`, `x < kappa - 1`, are
/// pairwise separated by at least [`draw_spacing`]. Each law is uniform on
/// the simplex, redrawn until it is separated from itself and from the laws
/// drawn before it.
pub fn draw_distinct_edge_laws<R: Rng + ?Sized>(
    n_states: usize,
    kappa: usize,
    rng: &mut R,
) -> EdgeTensor {
    let gap = draw_spacing(n_states, kappa);
    let mut taken: Vec<f64> = Vec::new();
    let mut rows = Vec::with_capacity(n_pairs(n_states));
    for _ in pairs(n_states) {
        let law = loop {
            let e: Vec<f64> = (0..kappa).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = e.iter().sum();
            let law: Vec<f64> = e.iter().map(|v| v / total).collect();
            let free = &law[..kappa - 1];
            let separated = free.iter().enumerate().all(|(k, a)| {
                free[k + 1..]
                    .iter()
                    .chain(&taken)
                    .all(|b| (a - b).abs() >= gap)
            });
            if separated {
                break law;
            }
        };
        taken.extend_from_slice(&law[..kappa - 1]);
        rows.push(law);
    }
    EdgeTensor::from_pair_rows(n_states, kappa, rows).expect("draws are probability vectors")
}

fn trial_rng(seed: u64, n_states: usize, kappa: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n_states as u64) << 40) | ((kappa as u64) << 20) | trial as u64);
    rng
}

/// Smallest `m <= m_max` for which every one of `n_trials` random draws gives
/// a conditional matrix of full row rank, using default tolerance, budget and
/// seed.
pub fn minimal_m_search(
    n_states: usize,
    kappa: usize,
    n_trials: usize,
    m_max: usize,
) -> Result<Option<usize>> {
    let config = RankSearchConfig {
        n_trials,
        m_max,
        ..RankSearchConfig::default()
    };
    minimal_m_search_with(n_states, kappa, &config)
}

/// As [`minimal_m_search`]. Sizes whose matrix would exceed the budget end
/// the search; sizes with more rows than columns cannot have full row rank
/// and are skipped without drawing.
pub fn minimal_m_search_with(
    n_states: usize,
    kappa: usize,
    config: &RankSearchConfig,
) -> Result<Option<usize>> {
    if n_states < 1 || kappa < 2 || config.n_trials == 0 {
        return Err(Error::InvalidConfig(format!(
            "need Q >= 1, kappa >= 2 and at least one trial (Q = {n_states}, kappa = {kappa}, trials = {})",
            config.n_trials
        )));
    }
    for m in 2..=config.m_max {
        let within_budget =
            conditional_matrix_size(n_states, kappa, m).is_some_and(|s| s <= config.budget as u128);
        if !within_budget {
            break;
        }
        let rows = LexCodec::new(m, n_states).size();
        let cols = LexCodec::new(n_edges(m), kappa).size();
        if rows > cols {
            continue;
        }
        if full_rank_for_all_trials(n_states, kappa, m, config)? {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// Checks every trial draw at subgraph size `m`; stops at the first failure.
pub fn full_rank_for_all_trials(
    n_states: usize,
    kappa: usize,
    m: usize,
    config: &RankSearchConfig,
) -> Result<bool> {
    let check = |trial: usize| -> Result<bool> {
        let bp = draw_distinct_edge_laws(
            n_states,
            kappa,
            &mut trial_rng(config.seed, n_states, kappa, trial),
        );
        let c = build_conditional_matrix_with_budget(&bp, m, config.budget)?;
        Ok(rank_summary(c.data(), config.rel_tol)?.full_row_rank())
    };
    match (0..config.n_trials)
        .into_par_iter()
        .map(check)
        .find_any(|r| !matches!(r, Ok(true)))
    {
        None => Ok(true),
        Some(r) => r,
    }
}

/// Subgraph size sufficient for generic binary models with `Q` states:
/// `Q - 1 + (Q+2)^2 / 4` for even `Q`, `Q - 1 + (Q+1)(Q+3) / 4` for odd `Q`.
pub fn generic_binary_bound(n_states: usize) -> usize {
    assert!(n_states >= 2, "the bound is stated for Q >= 2");
    let q = n_states;
    if q.is_multiple_of(2) {
        q - 1 + (q + 2) * (q + 2) / 4
    } else {
        q - 1 + (q + 1) * (q + 3) / 4
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn identity_has_full_rank() {
        assert_eq!(
            numerical_row_rank(&DMatrix::identity(5, 5), DEFAULT_REL_TOL).unwrap(),
            5
        );
    }

    #[test]
    fn duplicated_row_loses_rank() {
        let mut m = DMatrix::from_fn(4, 6, |r, c| {
            ((r * 7 + c * 3) % 5) as f64 + 0.1 * (r * c) as f64
        });
        let first = m.row(0).clone_owned();
        m.row_mut(3).copy_from(&first);
        assert!(numerical_row_rank(&m, DEFAULT_REL_TOL).unwrap() < 4);
    }

    #[test]
    fn tall_and_wide_orientations_agree() {
        let m = DMatrix::from_fn(3, 7, |r, c| {
            ((r + 1) * (c + 2)) as f64 + if r == c { 1.0 } else { 0.0 }
        });
        let a = singular_values(&m).unwrap();
        let b = singular_values(&m.transpose()).unwrap();
        let direct = m.singular_values();
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-10 * a[0]);
            assert!(direct.iter().any(|d| (d - a[k]).abs() < 1e-10 * a[0]));
        }
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert!(matches!(
            numerical_row_rank(&DMatrix::zeros(0, 3), 1e-9),
            Err(Error::EmptyMatrix)
        ));
    }

    #[test]
    fn binary_two_states_four_nodes_full_rank() {
        let bp = draw_distinct_edge_laws(2, 2, &mut ChaCha8Rng::seed_from_u64(3));
        let c = build_conditional_matrix_with_budget(&bp, 4, DEFAULT_BUDGET).unwrap();
        assert_eq!(numerical_row_rank(c.data(), DEFAULT_REL_TOL).unwrap(), 16);
    }

    #[test]
    fn small_table_cells() {
        assert_eq!(minimal_m_search(2, 3, 20, 8).unwrap(), Some(3));
        assert_eq!(minimal_m_search(2, 2, 20, 8).unwrap(), Some(4));
        assert_eq!(minimal_m_search(3, 2, 20, 8).unwrap(), Some(5));
    }

    #[test]
    fn search_respects_m_max() {
        assert_eq!(minimal_m_search(3, 2, 5, 4).unwrap(), None);
    }

    #[test]
    fn full_rank_persists_one_size_up() {
        let config = RankSearchConfig {
            n_trials: 4,
            ..RankSearchConfig::default()
        };
        assert!(full_rank_for_all_trials(2, 3, 3, &config).unwrap());
        assert!(full_rank_for_all_trials(2, 3, 4, &config).unwrap());
        assert!(full_rank_for_all_trials(2, 2, 4, &config).unwrap());
        assert!(full_rank_for_all_trials(2, 2, 5, &config).unwrap());
    }

    #[test]
    fn binary_bound_values() {
        assert_eq!(generic_binary_bound(2), 5);
        assert_eq!(generic_binary_bound(3), 8);
        assert_eq!(generic_binary_bound(4), 12);
    }

    #[test]
    fn draws_are_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (q, k) in [(2, 3), (3, 6), (4, 4)] {
            let bp = draw_distinct_edge_laws(q, k, &mut rng);
            let mut free: Vec<f64> = bp.rows().flat_map(|(_, r)| r[..k - 1].to_vec()).collect();
            free.sort_by(f64::total_cmp);
            let gap = draw_spacing(q, k);
            assert!(free.windows(2).all(|w| w[1] - w[0] >= gap));
        }
    }

    proptest! {
        #[test]
        fn rank_is_bounded_by_both_dimensions(r in 1usize..6, c in 1usize..6, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(r, c, |_, _| rng.random::<f64>());
            let rank = numerical_row_rank(&m, DEFAULT_REL_TOL).unwrap();
            prop_assert!(rank <= r.min(c));
        }
    }
}
