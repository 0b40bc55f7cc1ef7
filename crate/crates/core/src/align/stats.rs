use nalgebra::DMatrix;

use super::gram::{column_means, column_stds, cross, RowPrep};
use super::{FitMeta, FitOptions, Method, TranslationMatrix};
use crate::tensorstore::PairedActivations;

/// T = (A_s − μ_s)ᵀ (A_c − μ_c), the unnormalized centered cross-product.
pub fn fit_covariance(pair: &PairedActivations, opts: &FitOptions) -> TranslationMatrix {
    let mu_s = column_means(&pair.subject, opts);
    let mu_c = column_means(&pair.atlas, opts);
    let data = cross(&pair.subject, RowPrep::Center(&mu_s), &pair.atlas, RowPrep::Center(&mu_c), opts);
    let mut meta = FitMeta::for_pair(pair).param("block_rows", opts.block_rows);
    meta.column_means_s = Some(mu_s);
    meta.column_means_c = Some(mu_c);
    TranslationMatrix { data, method: Method::Covariance, fit_meta: meta }
}

/// Pearson correlation between every subject and atlas column.
///
/// The centered cross-product is divided by N and by the population standard
/// deviations, so a column correlated with itself scores exactly 1. Columns
/// whose deviation is below `eps` produce zero rows/columns.
pub fn fit_correlation(pair: &PairedActivations, eps: f64, opts: &FitOptions) -> TranslationMatrix {
    let mu_s = column_means(&pair.subject, opts);
    let mu_c = column_means(&pair.atlas, opts);
    let sd_s = column_stds(&pair.subject, &mu_s, opts);
    let sd_c = column_stds(&pair.atlas, &mu_c, opts);
    let cov = cross(&pair.subject, RowPrep::Center(&mu_s), &pair.atlas, RowPrep::Center(&mu_c), opts);
    let n = pair.n_samples() as f64;
    let inv = |s: f64| if s < eps || s == 0.0 { 0.0 } else { 1.0 / s };
    let data = DMatrix::from_fn(cov.nrows(), cov.ncols(), |j, k| {
        let (a, b) = (inv(sd_s[j]), inv(sd_c[k]));
        if a == 0.0 || b == 0.0 {
            0.0
        } else {
            cov[(j, k)] / n * a * b
        }
    });
    let mut meta = FitMeta::for_pair(pair).param("eps", eps).param("block_rows", opts.block_rows);
    meta.column_means_s = Some(mu_s);
    meta.column_means_c = Some(mu_c);
    meta.column_stds_s = Some(sd_s);
    meta.column_stds_c = Some(sd_c);
    TranslationMatrix { data, method: Method::Correlation, fit_meta: meta }
}
