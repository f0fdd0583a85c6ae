//! Finite Markov chain utilities.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Every state reaches every other state through positive transitions.
pub fn is_irreducible(rho: &DMatrix<f64>) -> bool {
    let n = rho.nrows();
    (0..n).all(|start| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(q) = stack.pop() {
            for l in 0..n {
                if rho[(q, l)] > 0.0 && !seen[l] {
                    seen[l] = true;
                    stack.push(l);
                }
            }
        }
        seen.into_iter().all(|s| s)
    })
}

/// Irreducible and aperiodic. Checked through the sign pattern: a
/// nonnegative `n x n` matrix is primitive iff its `(n-1)^2 + 1`-th power is
/// strictly positive.
pub fn is_ergodic(rho: &DMatrix<f64>) -> bool {
    let n = rho.nrows();
    if n == 0 {
        return false;
    }
    let pattern = rho.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let exponent = (n - 1) * (n - 1) + 1;
    let mut power = pattern.clone();
    for _ in 1..exponent {
        power = (&power * &pattern).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    }
    power.iter().all(|&v| v > 0.0)
}

/// `1 - |lambda_2|`, where `lambda_2` is the second largest eigenvalue of
/// `rho` in modulus. Zero for a single state.
pub fn spectral_gap(rho: &DMatrix<f64>) -> f64 {
    let mut moduli: Vec<f64> = rho.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    match moduli.get(1) {
        Some(second) => 1.0 - second,
        None => 0.0,
    }
}

/// The unique law `pi` with `pi * rho = pi`.
pub fn stationary_distribution(rho: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = rho.nrows();
    if n != rho.ncols() || n == 0 {
        return Err(Error::Dimension("transition matrix must be square".into()));
    }
    if !is_ergodic(rho) {
        return Err(Error::NonErgodic);
    }
    // (rho' - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = rho.transpose() - DMatrix::identity(n, n);
    let mut b = nalgebra::DVector::zeros(n);
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(Error::NonErgodic)?;
    let total: f64 = x.iter().sum();
    Ok(x.iter().map(|v| (v / total).max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::row_times_matrix;
    use proptest::prelude::*;

    #[test]
    fn doubly_stochastic_has_uniform_law() {
        let rho = DMatrix::from_row_slice(3, 3, &[0.6, 0.2, 0.2, 0.2, 0.6, 0.2, 0.2, 0.2, 0.6]);
        let pi = stationary_distribution(&rho).unwrap();
        for v in pi {
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_is_not_ergodic() {
        assert!(matches!(
            stationary_distribution(&DMatrix::identity(3, 3)),
            Err(Error::NonErgodic)
        ));
    }

    #[test]
    fn periodic_chain_is_not_ergodic() {
        let flip = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(is_irreducible(&flip));
        assert!(!is_ergodic(&flip));
    }

    #[test]
    fn two_state_law_matches_hand_solution() {
        // pi0 * 0.1 = pi1 * 0.5 and pi0 + pi1 = 1 give (5/6, 1/6).
        let rho = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.5]);
        let pi = stationary_distribution(&rho).unwrap();
        assert!((pi[0] - 5.0 / 6.0).abs() < 1e-14);
        assert!((pi[1] - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_gap_of_sticky_chain() {
        // Eigenvalues 1, 0.4, 0.4.
        let rho = DMatrix::from_row_slice(3, 3, &[0.6, 0.2, 0.2, 0.2, 0.6, 0.2, 0.2, 0.2, 0.6]);
        assert!((spectral_gap(&rho) - 0.6).abs() < 1e-12);
    }

    fn stochastic_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(0.05f64..1.0, n * n).prop_map(move |v| {
            let mut m = DMatrix::from_row_slice(n, n, &v);
            for mut row in m.row_iter_mut() {
                let s: f64 = row.iter().sum();
                row /= s;
            }
            m
        })
    }

    proptest! {
        #[test]
        fn stationary_law_is_invariant(rho in (2usize..6).prop_flat_map(stochastic_matrix)) {
            let pi = stationary_distribution(&rho).unwrap();
            let next = row_times_matrix(&pi, &rho);
            for (a, b) in pi.iter().zip(&next) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
