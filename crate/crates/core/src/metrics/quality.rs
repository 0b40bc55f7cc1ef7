use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::NormalizedTranslation;
use crate::error::{Error, Result};
use crate::mapping::{map_vector, score_samples, ScoreMode};
use crate::metrics::ranking::{auroc, average_precision, BinaryLabeledScores};
use crate::par::{map_indexed, Exec};
use crate::tensorstore::PairedActivations;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityOptions {
    /// A sample is positive for atlas feature k when A_c[n, k] > theta.
    pub theta: f64,
    pub mode: ScoreMode,
    pub exec: Exec,
}

impl Default for QualityOptions {
    fn default() -> Self {
        QualityOptions { theta: 0.0, mode: ScoreMode::Cosine, exec: Exec::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureQuality {
    pub feature: usize,
    pub n_positive: usize,
    pub auroc: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub features: Vec<FeatureQuality>,
    /// Features that could not be scored, with the reason.
    pub skipped: Vec<(usize, String)>,
    pub mean_auroc: f64,
    pub mean_ap: f64,
}

/// `n` distinct atlas features drawn uniformly with a seeded ChaCha8
/// generator, returned in ascending order.
pub fn sample_features(d_c: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = sample(&mut rng, d_c, n.min(d_c)).into_vec();
    v.sort_unstable();
    v
}

/// How well each single-feature query e_k, mapped through `t`, ranks the
/// subject samples that activate atlas feature k above those that do not.
pub fn translation_quality(
    t: &NormalizedTranslation,
    pair: &PairedActivations,
    feature_indices: &[usize],
    opts: &QualityOptions,
) -> Result<QualityReport> {
    if t.d_c() != pair.d_c() {
        return Err(Error::WidthMismatch { expected: t.d_c(), got: pair.d_c() });
    }
    if t.d_s() != pair.d_s() {
        return Err(Error::WidthMismatch { expected: t.d_s(), got: pair.d_s() });
    }
    if let Some(&k) = feature_indices.iter().find(|&&k| k >= pair.d_c()) {
        return Err(Error::IndexOutOfRange { index: k, width: pair.d_c() });
    }
    let per_feature =
        map_indexed(opts.exec, feature_indices.len(), |i| -> Result<std::result::Result<FeatureQuality, String>> {
            let k = feature_indices[i];
            let labels: Vec<bool> = pair.atlas.rows().map(|r| r[k] as f64 > opts.theta).collect();
            let n_pos = labels.iter().filter(|&&l| l).count();
            if n_pos == 0 {
                return Ok(Err("no positive samples".into()));
            }
            if n_pos == labels.len() {
                return Ok(Err("no negative samples".into()));
            }
            let mut e_k = vec![0.0; pair.d_c()];
            e_k[k] = 1.0;
            let s = map_vector(t, &e_k)?;
            let scores = score_samples(&pair.subject, &s.scores, opts.mode, Exec::Sequential)?;
            let x = BinaryLabeledScores::new(scores, labels)?;
            Ok(Ok(FeatureQuality { feature: k, n_positive: n_pos, auroc: auroc(&x)?, ap: average_precision(&x)? }))
        });
    let mut features = Vec::new();
    let mut skipped = Vec::new();
    for (i, res) in per_feature.into_iter().enumerate() {
        match res? {
            Ok(f) => features.push(f),
            Err(reason) => skipped.push((feature_indices[i], reason)),
        }
    }
    let n = features.len() as f64;
    let (mean_auroc, mean_ap) = if features.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (features.iter().map(|f| f.auroc).sum::<f64>() / n, features.iter().map(|f| f.ap).sum::<f64>() / n)
    };
    Ok(QualityReport { features, skipped, mean_auroc, mean_ap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_features_are_distinct_and_seeded() {
        let a = sample_features(1000, 100, 7);
        assert_eq!(a.len(), 100);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, sample_features(1000, 100, 7));
        assert_ne!(a, sample_features(1000, 100, 8));
        assert_eq!(sample_features(5, 10, 0), vec![0, 1, 2, 3, 4]);
    }
}
