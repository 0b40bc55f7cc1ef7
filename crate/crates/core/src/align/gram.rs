//! Blocked 64-bit accumulation of column statistics and cross-products.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::align::FitOptions;
use crate::par::sum_blocks;
use crate::tensorstore::ActivationMatrix;

/// Per-row preprocessing applied while a block is widened to f64.
#[derive(Clone, Copy)]
pub(crate) enum RowPrep<'a> {
    Raw,
    Center(&'a [f64]),
    /// Divide each sample row by its L2 norm; zero rows stay zero.
    UnitRows,
}

pub(crate) fn block_matrix(m: &ActivationMatrix, rows: Range<usize>, prep: RowPrep<'_>) -> DMatrix<f64> {
    let d = m.n_cols();
    let mut out = DMatrix::<f64>::zeros(rows.len(), d);
    for (i, n) in rows.enumerate() {
        let row = m.row(n);
        match prep {
            RowPrep::Raw => {
                for (j, &v) in row.iter().enumerate() {
                    out[(i, j)] = v as f64;
                }
            }
            RowPrep::Center(mu) => {
                for (j, &v) in row.iter().enumerate() {
                    out[(i, j)] = v as f64 - mu[j];
                }
            }
            RowPrep::UnitRows => {
                let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for (j, &v) in row.iter().enumerate() {
                        out[(i, j)] = v as f64 / norm;
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn column_means(m: &ActivationMatrix, opts: &FitOptions) -> Vec<f64> {
    let d = m.n_cols();
    let mut sums = sum_blocks(opts.exec, m.n_rows(), opts.block_rows, d, |r| {
        let mut s = vec![0.0f64; d];
        for n in r {
            for (a, &v) in s.iter_mut().zip(m.row(n)) {
                *a += v as f64;
            }
        }
        s
    });
    let n = m.n_rows() as f64;
    sums.iter_mut().for_each(|s| *s /= n);
    sums
}

/// Population standard deviations (1/N) given the column means.
pub(crate) fn column_stds(m: &ActivationMatrix, mu: &[f64], opts: &FitOptions) -> Vec<f64> {
    let d = m.n_cols();
    let ss = sum_blocks(opts.exec, m.n_rows(), opts.block_rows, d, |r| {
        let mut s = vec![0.0f64; d];
        for n in r {
            for ((a, &v), &c) in s.iter_mut().zip(m.row(n)).zip(mu) {
                let x = v as f64 - c;
                *a += x * x;
            }
        }
        s
    });
    let n = m.n_rows() as f64;
    ss.into_iter().map(|s| (s / n).sqrt()).collect()
}

/// Σ_n left(n)ᵀ right(n) over all sample rows: a (d_left × d_right) matrix.
pub(crate) fn cross(
    left: &ActivationMatrix,
    left_prep: RowPrep<'_>,
    right: &ActivationMatrix,
    right_prep: RowPrep<'_>,
    opts: &FitOptions,
) -> DMatrix<f64> {
    assert_eq!(left.n_rows(), right.n_rows());
    let (p, q) = (left.n_cols(), right.n_cols());
    let acc = sum_blocks(opts.exec, left.n_rows(), opts.block_rows, p * q, |r| {
        let l = block_matrix(left, r.clone(), left_prep);
        let rm = block_matrix(right, r, right_prep);
        (l.transpose() * rm).as_slice().to_vec()
    });
    DMatrix::from_vec(p, q, acc)
}
