use std::collections::BTreeMap;

use crate::align::NormalizedTranslation;
use crate::error::{Error, Result};
use crate::mapping::map_vector;
use crate::metrics::mean_std;
use crate::par::{map_indexed, Exec};
use crate::tensorstore::ActivationMatrix;

/// Row `i` holds the similarity of every candidate subject feature for
/// target `i`; `target_index[i]` is the correct candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalMatrix {
    pub scores: Vec<Vec<f64>>,
    pub target_index: Vec<usize>,
}

impl RetrievalMatrix {
    pub fn new(scores: Vec<Vec<f64>>, target_index: Vec<usize>) -> Result<Self> {
        if scores.len() != target_index.len() {
            return Err(Error::DimensionMismatch { expected: scores.len(), got: target_index.len() });
        }
        let width = scores.first().map_or(0, Vec::len);
        for (row, &t) in scores.iter().zip(&target_index) {
            if row.len() != width {
                return Err(Error::ShapeMismatch("ragged retrieval matrix".into()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::ParseError("retrieval scores must be finite".into()));
            }
            if t >= width {
                return Err(Error::IndexOutOfRange { index: t, width });
            }
        }
        Ok(RetrievalMatrix { scores, target_index })
    }

    pub fn n_targets(&self) -> usize {
        self.scores.len()
    }

    pub fn n_candidates(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }
}

/// 1 / (1 + #{k ≠ target : S[i, target] < S[i, k]}) per target. Ties with
/// the correct candidate do not lower its rank.
pub fn reciprocal_ranks(r: &RetrievalMatrix, exec: Exec) -> Vec<f64> {
    map_indexed(exec, r.n_targets(), |i| {
        let row = &r.scores[i];
        let t = r.target_index[i];
        let own = row[t];
        let better = row.iter().enumerate().filter(|&(k, &v)| k != t && own < v).count();
        1.0 / (1 + better) as f64
    })
}

/// Softmax probability of the correct candidate after z-scoring each row.
/// Zero-variance rows give the uniform probability 1/d.
pub fn predicted_probabilities(r: &RetrievalMatrix, exec: Exec) -> Vec<f64> {
    map_indexed(exec, r.n_targets(), |i| {
        let row = &r.scores[i];
        let d = row.len() as f64;
        let (mean, std) = mean_std(row);
        if std == 0.0 || !std.is_finite() {
            return 1.0 / d;
        }
        let z: Vec<f64> = row.iter().map(|v| (v - mean) / std).collect();
        let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = z.iter().map(|v| (v - zmax).exp()).sum();
        (z[r.target_index[i]] - zmax).exp() / denom
    })
}

/// Mean reciprocal rank, returned as (mean, population std).
pub fn mrr(r: &RetrievalMatrix) -> (f64, f64) {
    mean_std(&reciprocal_ranks(r, Exec::default()))
}

/// Mean predicted probability, returned as (mean, population std).
pub fn mpp(r: &RetrievalMatrix) -> (f64, f64) {
    mean_std(&predicted_probabilities(r, Exec::default()))
}

/// Builds a retrieval matrix from probe activations in atlas space: rows of
/// `probes` sharing a target are averaged into one concept query, which is
/// mapped through `t`. Targets are emitted in ascending order.
pub fn retrieval_from_probes(
    t: &NormalizedTranslation,
    probes: &ActivationMatrix,
    probe_targets: &[usize],
) -> Result<RetrievalMatrix> {
    if probes.n_rows() != probe_targets.len() {
        return Err(Error::DimensionMismatch { expected: probes.n_rows(), got: probe_targets.len() });
    }
    if probes.n_cols() != t.d_c() {
        return Err(Error::WidthMismatch { expected: t.d_c(), got: probes.n_cols() });
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, &target) in probe_targets.iter().enumerate() {
        if target >= t.d_s() {
            return Err(Error::IndexOutOfRange { index: target, width: t.d_s() });
        }
        groups.entry(target).or_default().push(row);
    }
    let mut scores = Vec::with_capacity(groups.len());
    let mut targets = Vec::with_capacity(groups.len());
    for (target, rows) in groups {
        let mut q = vec![0.0f64; probes.n_cols()];
        for &r in &rows {
            for (a, &v) in q.iter_mut().zip(probes.row(r)) {
                *a += v as f64;
            }
        }
        q.iter_mut().for_each(|a| *a /= rows.len() as f64);
        scores.push(map_vector(t, &q)?.scores);
        targets.push(target);
    }
    RetrievalMatrix::new(scores, targets)
}
