use std::cmp::Ordering;

use nalgebra::DMatrix;

use super::{FitMeta, FitOptions, Method, TranslationMatrix};
use crate::error::{Error, Result};
use crate::par::map_indexed;
use crate::tensorstore::PairedActivations;

/// Each subject feature becomes the mean atlas row over its `k` most
/// activating samples. Ties are broken towards the lower sample index.
pub fn fit_semantic_lens(pair: &PairedActivations, k: usize, opts: &FitOptions) -> Result<TranslationMatrix> {
    let n = pair.n_samples();
    if k == 0 {
        return Err(Error::ConfigInvalid("semantic lens k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let (d_s, d_c) = (pair.d_s(), pair.d_c());
    let rows = map_indexed(opts.exec, d_s, |j| {
        let top = top_k_samples(&pair.subject.column(j), k);
        let mut acc = vec![0.0f64; d_c];
        for &s in &top {
            for (a, &v) in acc.iter_mut().zip(pair.atlas.row(s)) {
                *a += v as f64;
            }
        }
        acc.iter_mut().for_each(|a| *a /= k as f64);
        acc
    });
    let data = DMatrix::from_fn(d_s, d_c, |j, c| rows[j][c]);
    let meta = FitMeta::for_pair(pair).param("k", k);
    TranslationMatrix::new(data, Method::SemanticLens, meta)
}

/// Indices of the `k` largest values, returned in ascending index order.
pub(crate) fn top_k_samples(values: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let cmp =
        |a: &usize, b: &usize| -> Ordering { crate::cmp_score(values[*b] as f64, values[*a] as f64).then(a.cmp(b)) };
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}
