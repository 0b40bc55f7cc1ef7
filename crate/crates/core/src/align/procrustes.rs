//! Orthogonal Procrustes: argmin ‖A_s − A_c Tᵀ‖_F subject to T Tᵀ = I.
//!
//! With d_s = d_c the minimizer is the polar factor of M = A_cᵀA_s, read
//! off the thin SVD M = U Σ Vᵀ as T = V Uᵀ. With d_s < d_c the term
//! ‖A_c Tᵀ‖_F is no longer constant over the feasible set and the polar
//! factor is only an approximation; it seeds a majorization iteration
//! (X = Tᵀ)
//!
//! ```text
//! X ← polar(M + α X − G X),   G = A_cᵀA_c,  α ≥ λ_max(G)
//! ```
//!
//! which decreases the objective monotonically and converges to the
//! constrained minimizer.

use nalgebra::{DMatrix, SymmetricEigen};

use super::gram::{cross, RowPrep};
use super::{FitMeta, FitOptions, Method, TranslationMatrix};
use crate::error::{Error, Result};
use crate::tensorstore::PairedActivations;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcrustesOptions {
    /// L2-normalize every sample row of both A_s and A_c before fitting.
    pub normalize_rows: bool,
    /// Iteration cap for the d_s < d_c refinement.
    pub max_iter: usize,
    /// Stop when an update moves no entry of T by more than this.
    pub tol: f64,
}

impl Default for ProcrustesOptions {
    fn default() -> Self {
        ProcrustesOptions { normalize_rows: true, max_iter: 20_000, tol: 1e-13 }
    }
}

pub fn fit_orthogonal_procrustes(
    pair: &PairedActivations,
    popts: &ProcrustesOptions,
    opts: &FitOptions,
) -> Result<TranslationMatrix> {
    let (d_s, d_c) = (pair.d_s(), pair.d_c());
    if d_s > d_c {
        return Err(Error::DimensionOrder { d_s, d_c });
    }
    let prep = if popts.normalize_rows { RowPrep::UnitRows } else { RowPrep::Raw };
    let m = cross(&pair.atlas, prep, &pair.subject, prep, opts);

    let mut x = polar_svd(&m)?;
    let mut iterations = 0usize;
    let mut converged = true;
    if d_s < d_c {
        let g = cross(&pair.atlas, prep, &pair.atlas, prep, opts);
        let (xr, it, ok) = refine(&m, &g, x, popts)?;
        // Clean up drift in orthonormality accumulated by the fast polar path.
        x = polar_svd(&xr)?;
        iterations = it;
        converged = ok;
        if !converged {
            log::warn!("Procrustes refinement stopped after {it} iterations without reaching tol {}", popts.tol);
        }
    }

    let t = x.transpose();
    let err = orthogonality_error(&t);
    if err > 1e-6 {
        return Err(Error::NumericalFailure(format!("T Tᵀ deviates from I by {err:e}")));
    }
    let meta = FitMeta::for_pair(pair)
        .param("normalize_rows", popts.normalize_rows)
        .param("iterations", iterations)
        .param("converged", converged)
        .param("tol", popts.tol)
        .param("block_rows", opts.block_rows);
    TranslationMatrix::new(t, Method::OrthogonalProcrustes, meta)
}

/// max |T Tᵀ − I|.
pub fn orthogonality_error(t: &DMatrix<f64>) -> f64 {
    let tt = t * t.transpose();
    (tt - DMatrix::<f64>::identity(t.nrows(), t.nrows())).amax()
}

fn refine(
    m: &DMatrix<f64>,
    g: &DMatrix<f64>,
    mut x: DMatrix<f64>,
    popts: &ProcrustesOptions,
) -> Result<(DMatrix<f64>, usize, bool)> {
    let eig = SymmetricEigen::try_new(g.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("eigendecomposition of A_cᵀA_c failed".into()))?;
    let lmax = eig.eigenvalues.max();
    if lmax <= 0.0 {
        return Ok((x, 0, true));
    }
    // A small margin keeps α a strict upper bound despite eigenvalue rounding.
    let alpha = lmax * (1.0 + 1e-9);
    for it in 1..=popts.max_iter {
        let mut target = m - g * &x;
        target += &x * alpha;
        let next = polar_fast(&target)?;
        let step = (&next - &x).amax();
        x = next;
        if step <= popts.tol {
            return Ok((x, it, true));
        }
    }
    Ok((x, popts.max_iter, false))
}

/// Polar factor U Vᵀ of a tall matrix from its thin SVD, with each singular
/// pair's sign fixed so the largest-magnitude entry of u is positive.
fn polar_svd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let mut u = svd.u.ok_or_else(|| Error::NumericalFailure("SVD returned no U".into()))?;
    let mut v_t = svd.v_t.ok_or_else(|| Error::NumericalFailure("SVD returned no Vᵀ".into()))?;
    for i in 0..u.ncols() {
        let col = u.column(i);
        let (mut best, mut best_abs) = (0.0f64, -1.0f64);
        for &v in col.iter() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = v;
            }
        }
        if best < 0.0 {
            u.column_mut(i).neg_mut();
            v_t.row_mut(i).neg_mut();
        }
    }
    Ok(u * v_t)
}

/// Polar factor through the d_s×d_s Gram matrix: M (MᵀM)^{-1/2}. Falls back
/// to the SVD when M is close to rank deficient.
fn polar_fast(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let w = m.tr_mul(m);
    if let Some(eig) = SymmetricEigen::try_new(w, f64::EPSILON, 0) {
        let lmax = eig.eigenvalues.max();
        let lmin = eig.eigenvalues.min();
        if lmax > 0.0 && lmin > 1e-8 * lmax {
            let q = &eig.eigenvectors;
            let mut scaled = q.clone();
            for (i, &l) in eig.eigenvalues.iter().enumerate() {
                scaled.column_mut(i).unscale_mut(l.sqrt());
            }
            let p = m * (scaled * q.transpose());
            if p.iter().all(|v| v.is_finite()) {
                return Ok(p);
            }
        }
    }
    polar_svd(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};
    use crate::tensorstore::{pair, ActivationMatrix};

    fn raw() -> ProcrustesOptions {
        ProcrustesOptions { normalize_rows: false, ..Default::default() }
    }

    #[test]
    fn identical_spaces_give_identity() {
        let rows: Vec<[f32; 3]> = vec![[1.0, 0.0, 2.0], [0.5, 3.0, 0.0], [0.0, 1.0, 1.0], [2.0, 2.0, 0.5]];
        let m = ActivationMatrix::from_rows(&rows).unwrap();
        let p = pair(m.clone(), m, true).unwrap();
        let t = fit_orthogonal_procrustes(&p, &raw(), &FitOptions::default()).unwrap();
        assert!((t.data - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn recovers_planted_semi_orthogonal_map() {
        let cfg = SynthConfig { n_samples: 800, d_c: 12, d_s: 5, sparsity: 0.3, noise_sigma: 0.0, seed: 1 };
        let inst = generate(&cfg).unwrap();
        let t = fit_orthogonal_procrustes(&inst.pair, &raw(), &FitOptions::default()).unwrap();
        assert!((&t.data - &inst.t_true.data).abs().max() < 1e-6);
        assert_eq!(t.fit_meta.method_params["converged"], true);
        assert!(orthogonality_error(&t.data) < 1e-10);
    }

    #[test]
    fn wider_subject_than_atlas_is_rejected() {
        let s = ActivationMatrix::from_rows(&[[1.0f32, 2.0, 3.0], [0.0, 1.0, 0.0]]).unwrap();
        let c = ActivationMatrix::from_rows(&[[1.0f32, 2.0], [3.0, 0.0]]).unwrap();
        let p = pair(s, c, true).unwrap();
        let err = fit_orthogonal_procrustes(&p, &raw(), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DimensionOrder { d_s: 3, d_c: 2 }));
    }
}
