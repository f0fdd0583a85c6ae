//! The conditional matrix of edge assignments on `m` nodes given their
//! latent states.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{edge_pairs, n_edges};
use crate::params::EdgeTensor;

/// Largest dense matrix, in entries, the identification routines will form.
pub const DEFAULT_BUDGET: usize = 1 << 26;

/// Mixed-radix codec: index `sum_k digit_k * radix^(len-1-k)`, so the first
/// digit is the most significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LexCodec {
    len: usize,
    radix: usize,
}

impl LexCodec {
    pub fn new(len: usize, radix: usize) -> Self {
        Self { len, radix }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn radix(&self) -> usize {
        self.radix
    }

    /// Number of distinct words.
    pub fn size(&self) -> usize {
        self.radix.pow(self.len as u32)
    }

    pub fn encode(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.len);
        digits.iter().fold(0, |acc, &d| {
            debug_assert!(d < self.radix);
            acc * self.radix + d
        })
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.len];
        for d in digits.iter_mut().rev() {
            *d = index % self.radix;
            index /= self.radix;
        }
        digits
    }
}

/// `C(z, x) = prod_{i<j} bp[z_i][z_j][x_ij]` for all state assignments `z` on
/// `m` nodes (rows) and edge assignments `x` (columns).
///
/// Rows are indexed by `z` lexicographically with node 1 most significant.
/// Columns are indexed by `x` lexicographically over the edges in
/// upper-triangular row-major order `(1,2), (1,3), .., (m-1,m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMatrix {
    m: usize,
    n_states: usize,
    kappa: usize,
    data: DMatrix<f64>,
}

impl ConditionalMatrix {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn row_codec(&self) -> LexCodec {
        LexCodec::new(self.m, self.n_states)
    }

    pub fn col_codec(&self) -> LexCodec {
        LexCodec::new(n_edges(self.m), self.kappa)
    }

    pub fn entry(&self, z: &[usize], x: &[usize]) -> f64 {
        self.data[(self.row_codec().encode(z), self.col_codec().encode(x))]
    }

    /// Wraps a matrix whose rows may be in any order, for example a row
    /// shuffle of a built matrix.
    pub fn from_rows(m: usize, n_states: usize, kappa: usize, data: DMatrix<f64>) -> Result<Self> {
        let cols = LexCodec::new(n_edges(m), kappa).size();
        if m < 2 || data.nrows() != n_states.pow(m as u32) || data.ncols() != cols {
            return Err(Error::Dimension(format!(
                "expected a {} x {cols} matrix for m = {m}, got {} x {}",
                n_states.pow(m as u32),
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self {
            m,
            n_states,
            kappa,
            data,
        })
    }
}

/// Number of entries of `C_{m,Q,kappa}`, or `None` on overflow.
pub fn conditional_matrix_size(n_states: usize, kappa: usize, m: usize) -> Option<u128> {
    let rows = (n_states as u128).checked_pow(m as u32)?;
    let cols = (kappa as u128).checked_pow(n_edges(m) as u32)?;
    rows.checked_mul(cols)
}

pub fn build_conditional_matrix(bp: &EdgeTensor, m: usize) -> Result<ConditionalMatrix> {
    build_conditional_matrix_with_budget(bp, m, DEFAULT_BUDGET)
}

pub fn build_conditional_matrix_with_budget(
    bp: &EdgeTensor,
    m: usize,
    budget: usize,
) -> Result<ConditionalMatrix> {
    if m < 2 {
        return Err(Error::Dimension(format!("need m >= 2 nodes, got {m}")));
    }
    let (q, kappa) = (bp.n_states(), bp.kappa());
    let size = conditional_matrix_size(q, kappa, m).unwrap_or(u128::MAX);
    if size > budget as u128 {
        return Err(Error::BudgetExceeded {
            requested: size,
            budget,
        });
    }
    let rows = LexCodec::new(m, q);
    let n_cols = LexCodec::new(n_edges(m), kappa).size();
    let edges: Vec<(usize, usize)> = edge_pairs(m).collect();

    let row_data: Vec<Vec<f64>> = (0..rows.size())
        .into_par_iter()
        .map(|r| {
            let z = rows.decode(r);
            let mut row = Vec::with_capacity(n_cols);
            row.push(1.0);
            for &(i, j) in &edges {
                let law = bp.get(z[i], z[j]);
                row = row
                    .iter()
                    .flat_map(|&a| law.iter().map(move |&b| a * b))
                    .collect();
            }
            row
        })
        .collect();
    let data = DMatrix::from_fn(rows.size(), n_cols, |r, c| row_data[r][c]);
    Ok(ConditionalMatrix {
        m,
        n_states: q,
        kappa,
        data,
    })
}
