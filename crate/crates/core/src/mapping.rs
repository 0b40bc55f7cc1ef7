//! Concept query → subject-space similarity vector, and the rankings built on
//! top of it.

use std::path::Path;

use crate::align::NormalizedTranslation;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Exec};
use crate::query::ConceptQuery;
use crate::tensorstore::{ActivationMatrix, FeatureCatalog};

/// Per-subject-feature cosine alignment with a concept query.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityVector {
    pub scores: Vec<f64>,
    pub query_ref: String,
    pub translation_ref: String,
}

impl SimilarityVector {
    pub fn new(scores: Vec<f64>) -> Self {
        SimilarityVector { scores, query_ref: String::new(), translation_ref: String::new() }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// q / ‖q‖, computed after an exact power-of-two rescale so that the result
/// does not depend on the magnitude of q.
pub(crate) fn unit(q: &[f64]) -> Option<Vec<f64>> {
    let max = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 || !max.is_finite() {
        return None;
    }
    let (_, exp) = frexp(max);
    let scale = 2f64.powi(-exp);
    let scaled: Vec<f64> = q.iter().map(|v| v * scale).collect();
    let norm = scaled.iter().map(|v| v * v).sum::<f64>().sqrt();
    Some(scaled.into_iter().map(|v| v / norm).collect())
}

fn frexp(x: f64) -> (f64, i32) {
    let e = x.abs().log2().floor() as i32 + 1;
    (x / 2f64.powi(e), e)
}

/// s = T̂ · q/‖q‖₂. Zero rows of T̂ score exactly 0.
pub fn map_query(t: &NormalizedTranslation, q: &ConceptQuery) -> Result<SimilarityVector> {
    map_vector(t, &q.vector)
}

pub fn map_vector(t: &NormalizedTranslation, q: &[f64]) -> Result<SimilarityVector> {
    if q.len() != t.d_c() {
        return Err(Error::WidthMismatch { expected: t.d_c(), got: q.len() });
    }
    let u = unit(q).ok_or(Error::ZeroQuery)?;
    let scores = (0..t.d_s())
        .map(|j| if t.zero_rows.contains(&j) { 0.0 } else { t.data.row(j).iter().zip(&u).map(|(a, b)| a * b).sum() })
        .collect();
    Ok(SimilarityVector::new(scores))
}

/// Subject features ordered by descending score, ties by ascending index.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedFeatures(pub Vec<(usize, f64)>);

impl RankedFeatures {
    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(|r| r.0).collect()
    }

    /// CSV with columns `rank, feature_index, score[, description]`; the
    /// description column is present when a catalog is given.
    pub fn write_csv(&self, path: &Path, catalog: Option<&FeatureCatalog>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut header = vec!["rank", "feature_index", "score"];
        if catalog.is_some() {
            header.push("description");
        }
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        for (rank, &(idx, score)) in self.0.iter().enumerate() {
            let mut rec = vec![(rank + 1).to_string(), idx.to_string(), format!("{score:.17e}")];
            if let Some(c) = catalog {
                rec.push(c.description(idx).unwrap_or("").to_string());
            }
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::ParseError(format!("{}: {other:?}", path.display())),
    }
}

/// The `top_n` highest-scoring subject features. `top_n` is clamped to d_s.
pub fn rank_features(s: &SimilarityVector, top_n: usize) -> RankedFeatures {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| crate::cmp_score(s.scores[b], s.scores[a]).then(a.cmp(&b)));
    idx.truncate(top_n.min(s.len()));
    RankedFeatures(idx.into_iter().map(|i| (i, s.scores[i])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreMode {
    Dot,
    #[default]
    Cosine,
}

impl ScoreMode {
    pub fn name(self) -> &'static str {
        match self {
            ScoreMode::Dot => "dot",
            ScoreMode::Cosine => "cosine",
        }
    }
}

/// Scores every sample row of `subject` against `s`.
pub fn score_samples(subject: &ActivationMatrix, s: &[f64], mode: ScoreMode, exec: Exec) -> Result<Vec<f64>> {
    if subject.n_cols() != s.len() {
        return Err(Error::WidthMismatch { expected: s.len(), got: subject.n_cols() });
    }
    let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(map_indexed(exec, subject.n_rows(), |n| {
        let row = subject.row(n);
        let dot: f64 = row.iter().zip(s).map(|(&a, &b)| a as f64 * b).sum();
        match mode {
            ScoreMode::Dot => dot,
            ScoreMode::Cosine => {
                let rn = row.iter().map(|&a| (a as f64) * (a as f64)).sum::<f64>().sqrt();
                if rn == 0.0 || s_norm == 0.0 {
                    0.0
                } else {
                    dot / (rn * s_norm)
                }
            }
        }
    }))
}
