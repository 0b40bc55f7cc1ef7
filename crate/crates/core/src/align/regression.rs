use nalgebra::{DMatrix, SymmetricEigen};

use super::gram::{cross, RowPrep};
use super::{FitMeta, FitOptions, Method, TranslationMatrix};
use crate::error::{Error, Result};
use crate::tensorstore::PairedActivations;

/// Least-squares T minimizing ‖A_s − A_c Tᵀ‖²_F (+ ridge·‖T‖²_F).
///
/// Solves (A_cᵀA_c + ridge·I) Tᵀ = A_cᵀA_s through a symmetric
/// eigendecomposition. Eigenvalues at or below `rcond · λ_max` are dropped,
/// which yields the minimum-norm solution when the system is singular.
pub fn fit_linear_regression(
    pair: &PairedActivations,
    ridge: f64,
    rcond: f64,
    opts: &FitOptions,
) -> Result<TranslationMatrix> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::ConfigInvalid(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    let mut gram = cross(&pair.atlas, RowPrep::Raw, &pair.atlas, RowPrep::Raw, opts);
    let rhs = cross(&pair.atlas, RowPrep::Raw, &pair.subject, RowPrep::Raw, opts);
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let (x, dropped) = pinv_solve(gram, &rhs, rcond)?;
    let meta = FitMeta::for_pair(pair)
        .param("ridge", ridge)
        .param("rcond", rcond)
        .param("dropped_eigenvalues", dropped)
        .param("block_rows", opts.block_rows);
    TranslationMatrix::new(x.transpose(), Method::LinearRegression, meta)
}

/// Solves the symmetric PSD system `h x = rhs` with an eigenvalue cutoff.
/// Returns the solution and the number of discarded eigenpairs.
pub(crate) fn pinv_solve(h: DMatrix<f64>, rhs: &DMatrix<f64>, rcond: f64) -> Result<(DMatrix<f64>, usize)> {
    let n = h.nrows();
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigendecomposition did not converge".into()))?;
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cutoff = rcond * lmax;
    let mut dropped = 0;
    let inv = eig.eigenvalues.map(|l| {
        if l > cutoff && l > 0.0 {
            1.0 / l
        } else {
            dropped += 1;
            0.0
        }
    });
    let q = &eig.eigenvectors;
    let mut proj = q.tr_mul(rhs);
    for i in 0..n {
        proj.row_mut(i).scale_mut(inv[i]);
    }
    let x = q * proj;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("regression solve produced non-finite values".into()));
    }
    Ok((x, dropped))
}
