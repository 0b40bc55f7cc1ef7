//! Concept queries: vectors in atlas space that encode a concept of interest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::npy;
use crate::tensorstore::{sidecar_path, write_json, ActivationMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Indices,
    DescriptionSimilarity,
    ActivationMean,
    ActivationContrast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptQuery {
    pub vector: Vec<f64>,
    pub provenance: Provenance,
    pub atlas_id: String,
    pub source_detail: BTreeMap<String, Value>,
}

impl ConceptQuery {
    pub fn new(vector: Vec<f64>, provenance: Provenance, atlas_id: impl Into<String>) -> Result<Self> {
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::ParseError("concept query has non-finite entries".into()));
        }
        if vector.iter().all(|&v| v == 0.0) {
            return Err(Error::EmptyQuery);
        }
        Ok(ConceptQuery { vector, provenance, atlas_id: atlas_id.into(), source_detail: BTreeMap::new() })
    }

    pub fn d_c(&self) -> usize {
        self.vector.len()
    }

    /// Nonzero entries as `(index, weight)`, ascending by index.
    pub fn support(&self) -> Vec<(usize, f64)> {
        self.vector.iter().enumerate().filter(|(_, &w)| w != 0.0).map(|(i, &w)| (i, w)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn detail(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.source_detail.insert(key.into(), value.into());
        self
    }

    /// `.json` writes the sparse entry list; `.npy` writes a dense `<f8`
    /// vector with a `.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        if is_npy(path) {
            npy::write_f64(path, &[self.d_c()], &self.vector)?;
            let side = DenseSidecar {
                atlas_id: self.atlas_id.clone(),
                d_c: self.d_c(),
                provenance: self.provenance,
                source_detail: self.source_detail.clone(),
            };
            write_json(&sidecar_path(path), &side)
        } else {
            let file = SparseQueryFile {
                atlas_id: self.atlas_id.clone(),
                d_c: self.d_c(),
                provenance: self.provenance,
                entries: self.support().into_iter().map(|(index, weight)| QueryEntry { index, weight }).collect(),
            };
            write_json(path, &file)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if is_npy(path) {
            let side_path = sidecar_path(path);
            if !side_path.exists() {
                return Err(Error::MissingSidecar(side_path));
            }
            let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
            let side: DenseSidecar =
                serde_json::from_str(&text).map_err(|e| Error::ParseError(format!("{}: {e}", side_path.display())))?;
            let (shape, vector) = npy::read_f64(path)?;
            if shape != [side.d_c] {
                return Err(Error::ShapeMismatch(format!("query payload {shape:?}, sidecar d_c={}", side.d_c)));
            }
            let mut q = ConceptQuery::new(vector, side.provenance, side.atlas_id)?;
            q.source_detail = side.source_detail;
            Ok(q)
        } else {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let file: SparseQueryFile =
                serde_json::from_str(&text).map_err(|e| Error::ParseError(format!("{}: {e}", path.display())))?;
            let entries: Vec<(usize, f64)> = file.entries.iter().map(|e| (e.index, e.weight)).collect();
            let mut q = query_from_indices(&entries, file.d_c)?;
            q.provenance = file.provenance;
            q.atlas_id = file.atlas_id;
            Ok(q)
        }
    }
}

fn is_npy(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "npy")
}

#[derive(Serialize, Deserialize)]
struct QueryEntry {
    index: usize,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct SparseQueryFile {
    atlas_id: String,
    d_c: usize,
    provenance: Provenance,
    entries: Vec<QueryEntry>,
}

#[derive(Serialize, Deserialize)]
struct DenseSidecar {
    atlas_id: String,
    d_c: usize,
    provenance: Provenance,
    #[serde(default)]
    source_detail: BTreeMap<String, Value>,
}

/// Indicator-style query: the given weights at the given atlas indices.
/// Zero weights are dropped from the support.
pub fn query_from_indices(entries: &[(usize, f64)], d_c: usize) -> Result<ConceptQuery> {
    let mut vector = vec![0.0; d_c];
    let mut seen = BTreeSet::new();
    for &(index, weight) in entries {
        if index >= d_c {
            return Err(Error::IndexOutOfRange { index, width: d_c });
        }
        if !weight.is_finite() {
            return Err(Error::ParseError(format!("weight for index {index} is not finite")));
        }
        if !seen.insert(index) {
            return Err(Error::DuplicateIndex(index));
        }
        vector[index] = weight;
    }
    Ok(ConceptQuery::new(vector, Provenance::Indices, "")?.detail("n_entries", entries.len()))
}

/// Description embeddings, one row per labeled atlas feature.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vectors: Vec<Vec<f64>>,
    feature_indices: Vec<usize>,
}

impl EmbeddingTable {
    pub fn new(vectors: Vec<Vec<f64>>, feature_indices: Vec<usize>, d_c: usize) -> Result<Self> {
        if vectors.len() != feature_indices.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} embedding rows but {} feature indices",
                vectors.len(),
                feature_indices.len()
            )));
        }
        let width = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != width) {
            return Err(Error::ShapeMismatch("ragged embedding rows".into()));
        }
        let mut seen = BTreeSet::new();
        for &i in &feature_indices {
            if i >= d_c {
                return Err(Error::IndexOutOfRange { index: i, width: d_c });
            }
            if !seen.insert(i) {
                return Err(Error::DuplicateIndex(i));
            }
        }
        Ok(EmbeddingTable { vectors, feature_indices })
    }

    pub fn width(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Loads `table.npy` plus its `table.index.jsonl` row → feature mapping.
    pub fn load(path: &Path, d_c: usize) -> Result<Self> {
        let (shape, data) = npy::read_f64(path)?;
        let (n, w) = match shape.as_slice() {
            [n, w] => (*n, *w),
            other => return Err(Error::ShapeMismatch(format!("embedding table has shape {other:?}"))),
        };
        let index_path = embedding_index_path(path);
        let file = fs::File::open(&index_path).map_err(|_| Error::MissingSidecar(index_path.clone()))?;
        let mut mapping = vec![None; n];
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&index_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: IndexRecord = serde_json::from_str(&line)
                .map_err(|e| Error::ParseError(format!("{}:{}: {e}", index_path.display(), lineno + 1)))?;
            let slot = mapping.get_mut(rec.row).ok_or(Error::IndexOutOfRange { index: rec.row, width: n })?;
            if slot.replace(rec.index).is_some() {
                return Err(Error::ParseError(format!("row {} mapped twice", rec.row)));
            }
        }
        let feature_indices = mapping
            .into_iter()
            .enumerate()
            .map(|(row, f)| f.ok_or_else(|| Error::ParseError(format!("embedding row {row} has no feature index"))))
            .collect::<Result<Vec<_>>>()?;
        let vectors = data.chunks_exact(w.max(1)).take(n).map(<[f64]>::to_vec).collect();
        EmbeddingTable::new(vectors, feature_indices, d_c)
    }
}

pub fn embedding_index_path(path: &Path) -> PathBuf {
    path.with_extension("index.jsonl")
}

#[derive(Deserialize)]
struct IndexRecord {
    row: usize,
    index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    TopK(usize),
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Binary,
    Similarity,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Selects atlas features whose description embedding is closest (cosine)
/// to the query embedding. Ties in top-k go to the lower feature index;
/// similarity weights are clipped at zero.
pub fn query_from_description_similarity(
    query_embedding: &[f64],
    table: &EmbeddingTable,
    select: Selection,
    weighting: Weighting,
    d_c: usize,
) -> Result<ConceptQuery> {
    if query_embedding.len() != table.width() {
        return Err(Error::DimensionMismatch { expected: table.width(), got: query_embedding.len() });
    }
    if query_embedding.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroQuery);
    }
    let mut scored: Vec<(usize, f64)> =
        table.feature_indices.iter().zip(&table.vectors).map(|(&f, row)| (f, cosine(query_embedding, row))).collect();
    scored.sort_by(|a, b| crate::cmp_score(b.1, a.1).then(a.0.cmp(&b.0)));
    let chosen: Vec<(usize, f64)> = match select {
        Selection::TopK(k) => {
            if k == 0 {
                return Err(Error::ConfigInvalid("top_k needs k >= 1".into()));
            }
            scored.into_iter().take(k).collect()
        }
        Selection::Threshold(tau) => {
            if !(tau > -1.0 && tau <= 1.0) {
                return Err(Error::ConfigInvalid(format!("threshold {tau} outside (-1, 1]")));
            }
            scored.into_iter().filter(|&(_, s)| s >= tau).collect()
        }
    };
    if chosen.is_empty() {
        return Err(Error::NoMatch);
    }
    let mut vector = vec![0.0; d_c];
    for &(f, s) in &chosen {
        if f >= d_c {
            return Err(Error::IndexOutOfRange { index: f, width: d_c });
        }
        vector[f] = match weighting {
            Weighting::Binary => 1.0,
            Weighting::Similarity => s.max(0.0),
        };
    }
    let (sel_name, sel_value) = match select {
        Selection::TopK(k) => ("top_k", Value::from(k)),
        Selection::Threshold(t) => ("threshold", Value::from(t)),
    };
    Ok(ConceptQuery::new(vector, Provenance::DescriptionSimilarity, "")?
        .detail(sel_name, sel_value)
        .detail("weighting", if weighting == Weighting::Binary { "binary" } else { "similarity" })
        .detail("n_selected", chosen.len()))
}

/// Mean atlas activation of `positive`, minus the mean of `negative` when
/// given.
pub fn query_from_activations(
    positive: &ActivationMatrix,
    negative: Option<&ActivationMatrix>,
) -> Result<ConceptQuery> {
    let mut vector = positive.column_means();
    let provenance = match negative {
        Some(neg) => {
            if neg.n_cols() != positive.n_cols() {
                return Err(Error::WidthMismatch { expected: positive.n_cols(), got: neg.n_cols() });
            }
            for (v, m) in vector.iter_mut().zip(neg.column_means()) {
                *v -= m;
            }
            Provenance::ActivationContrast
        }
        None => Provenance::ActivationMean,
    };
    let q = ConceptQuery::new(vector, provenance, "")?.detail("n_positive", positive.n_rows());
    Ok(match negative {
        Some(neg) => q.detail("n_negative", neg.n_rows()),
        None => q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_examples() {
        let q = query_from_indices(&[(0, 1.0)], 4).unwrap();
        assert_eq!(q.vector, vec![1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(query_from_indices(&[], 4), Err(Error::EmptyQuery)));
        assert!(matches!(query_from_indices(&[(4, 1.0)], 4), Err(Error::IndexOutOfRange { index: 4, width: 4 })));
        assert!(matches!(query_from_indices(&[(1, 1.0), (1, 2.0)], 4), Err(Error::DuplicateIndex(1))));
    }

    #[test]
    fn reddit_comments_query_is_fourteen_hot() {
        let feats = [1786, 13945, 9829, 9346, 9736, 13851, 7937, 1914, 2402, 3204, 12203, 10075, 1917, 5067];
        let entries: Vec<(usize, f64)> = feats.iter().map(|&i| (i, 1.0)).collect();
        let q = query_from_indices(&entries, 16384).unwrap();
        let support = q.support();
        assert_eq!(support.len(), 14);
        assert!(support.iter().all(|&(_, w)| w == 1.0));
        let mut sorted = feats.to_vec();
        sorted.sort();
        assert_eq!(support.iter().map(|s| s.0).collect::<Vec<_>>(), sorted);
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], vec![3, 1], 5).unwrap()
    }

    #[test]
    fn top_k_picks_aligned_row() {
        let q = query_from_description_similarity(&[2.0, 0.1, 0.0], &table(), Selection::TopK(1), Weighting::Binary, 5)
            .unwrap();
        assert_eq!(q.support(), vec![(3, 1.0)]);
    }

    #[test]
    fn threshold_without_match() {
        let r = query_from_description_similarity(
            &[1.0, 1.0, 1.0],
            &table(),
            Selection::Threshold(0.99),
            Weighting::Binary,
            5,
        );
        assert!(matches!(r, Err(Error::NoMatch)));
    }

    #[test]
    fn identical_rows_tie_to_lower_feature() {
        let t = EmbeddingTable::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![7, 2], 8).unwrap();
        let q = query_from_description_similarity(&[1.0, 1.0], &t, Selection::TopK(1), Weighting::Binary, 8).unwrap();
        assert_eq!(q.support(), vec![(2, 1.0)]);
    }

    #[test]
    fn similarity_weights_are_clipped() {
        let t = EmbeddingTable::new(vec![vec![1.0, 0.0], vec![-1.0, 0.1]], vec![0, 1], 2).unwrap();
        let q =
            query_from_description_similarity(&[1.0, 0.0], &t, Selection::TopK(2), Weighting::Similarity, 2).unwrap();
        assert_eq!(q.vector, vec![1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let r = query_from_description_similarity(&[1.0], &table(), Selection::TopK(1), Weighting::Binary, 5);
        assert!(matches!(r, Err(Error::DimensionMismatch { expected: 3, got: 1 })));
    }

    #[test]
    fn activation_mean_and_contrast() {
        let pos = ActivationMatrix::from_rows(&[[1.0f32, 0.0], [3.0, 0.0]]).unwrap();
        assert_eq!(query_from_activations(&pos, None).unwrap().vector, vec![2.0, 0.0]);

        let pos = ActivationMatrix::from_rows(&[[2.0f32, 1.0]]).unwrap();
        let neg = ActivationMatrix::from_rows(&[[1.0f32, 0.0], [3.0, 0.0]]).unwrap();
        let q = query_from_activations(&pos, Some(&neg)).unwrap();
        assert_eq!(q.vector, vec![0.0, 1.0]);
        assert_eq!(q.provenance, Provenance::ActivationContrast);

        let single = ActivationMatrix::from_rows(&[[0.25f32, -3.5, 7.0]]).unwrap();
        assert_eq!(query_from_activations(&single, None).unwrap().vector, vec![0.25, -3.5, 7.0]);

        let narrow = ActivationMatrix::from_rows(&[[1.0f32]]).unwrap();
        assert!(matches!(query_from_activations(&pos, Some(&narrow)), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn sparse_and_dense_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut q = query_from_indices(&[(6772, 1.0), (1089, 1.0), (12082, 0.5)], 16384).unwrap();
        q.atlas_id = "gemma-scope-16k".into();
        let json = dir.path().join("q.json");
        q.save(&json).unwrap();
        let back = ConceptQuery::load(&json).unwrap();
        assert_eq!(back.vector, q.vector);
        assert_eq!(back.atlas_id, q.atlas_id);

        let dense = dir.path().join("q.npy");
        q.save(&dense).unwrap();
        let back = ConceptQuery::load(&dense).unwrap();
        assert_eq!(back.vector, q.vector);
        assert_eq!(back.provenance, Provenance::Indices);
    }
}
