//! Activation matrices, their metadata sidecars, feature catalogs, and the
//! pairing contract between a subject dump and an atlas dump.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Max,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub model_id: String,
    pub layer: i64,
    pub hook_point: String,
    pub pooling: Pooling,
    pub dataset_id: String,
    /// Order-sensitive 64-bit digest of the input sequences, as 16 hex digits.
    pub dataset_hash: String,
    pub n_samples: usize,
    pub n_features: usize,
}

impl MatrixMeta {
    /// Metadata for matrices that did not come from a model dump (tests,
    /// derived matrices).
    pub fn anonymous(n_samples: usize, n_features: usize) -> Self {
        MatrixMeta {
            model_id: "anonymous".into(),
            layer: 0,
            hook_point: "none".into(),
            pooling: Pooling::Max,
            dataset_id: "anonymous".into(),
            dataset_hash: "0000000000000000".into(),
            n_samples,
            n_features,
        }
    }

    fn validate(&self) -> Result<()> {
        let h = &self.dataset_hash;
        if h.len() != 16 || !h.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::ParseError(format!("dataset_hash must be 16 hex digits, got {h:?}")));
        }
        Ok(())
    }
}

/// Sidecar path for a payload: `x.npy` → `x.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// N×d max-pooled activations, row-major, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    data: Vec<f32>,
    n_rows: usize,
    n_cols: usize,
    meta: MatrixMeta,
}

impl ActivationMatrix {
    pub fn new(data: Vec<f32>, n_rows: usize, n_cols: usize, meta: MatrixMeta) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::ShapeMismatch(format!("empty matrix {n_rows}x{n_cols}")));
        }
        if data.len() != n_rows * n_cols {
            return Err(Error::ShapeMismatch(format!("{} values cannot fill {n_rows}x{n_cols}", data.len())));
        }
        if meta.n_samples != n_rows || meta.n_features != n_cols {
            return Err(Error::ShapeMismatch(format!(
                "metadata says {}x{}, payload is {n_rows}x{n_cols}",
                meta.n_samples, meta.n_features
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: i / n_cols, col: i % n_cols });
        }
        Ok(ActivationMatrix { data, n_rows, n_cols, meta })
    }

    /// Builds a matrix with anonymous metadata from nested rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            if r.as_ref().len() != n_cols {
                return Err(Error::ShapeMismatch("ragged rows".into()));
            }
            data.extend_from_slice(r.as_ref());
        }
        ActivationMatrix::new(data, n_rows, n_cols, MatrixMeta::anonymous(n_rows, n_cols))
    }

    pub fn with_meta(mut self, meta: MatrixMeta) -> Result<Self> {
        if meta.n_samples != self.n_rows || meta.n_features != self.n_cols {
            return Err(Error::ShapeMismatch("metadata does not match payload".into()));
        }
        self.meta = meta;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn meta(&self) -> &MatrixMeta {
        &self.meta
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.n_cols + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.n_cols)
    }

    pub fn column(&self, col: usize) -> Vec<f32> {
        self.rows().map(|r| r[col]).collect()
    }

    /// Column means accumulated in f64.
    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0f64; self.n_cols];
        for r in self.rows() {
            for (a, &v) in m.iter_mut().zip(r) {
                *a += v as f64;
            }
        }
        let n = self.n_rows as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

pub fn load_matrix(path: &Path) -> Result<ActivationMatrix> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Err(Error::MissingSidecar(side));
    }
    let (shape, data) = npy::read_f32(path)?;
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: MatrixMeta =
        serde_json::from_str(&text).map_err(|e| Error::ParseError(format!("{}: {e}", side.display())))?;
    meta.validate()?;
    let (n_rows, n_cols) = match shape.as_slice() {
        [n, d] => (*n, *d),
        other => return Err(Error::ShapeMismatch(format!("expected a 2-D payload, got shape {other:?}"))),
    };
    ActivationMatrix::new(data, n_rows, n_cols, meta)
}

pub fn save_matrix(m: &ActivationMatrix, path: &Path) -> Result<()> {
    npy::write_f32(path, &[m.n_rows, m.n_cols], &m.data)?;
    write_json(&sidecar_path(path), &m.meta)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::ParseError(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Subject and atlas activations over the same inputs in the same order.
#[derive(Debug, Clone)]
pub struct PairedActivations {
    pub subject: ActivationMatrix,
    pub atlas: ActivationMatrix,
    pub warnings: Vec<String>,
}

impl PairedActivations {
    pub fn n_samples(&self) -> usize {
        self.subject.n_rows()
    }

    pub fn d_s(&self) -> usize {
        self.subject.n_cols()
    }

    pub fn d_c(&self) -> usize {
        self.atlas.n_cols()
    }
}

/// Pairs two dumps. A sample-count mismatch always fails; a dataset hash
/// mismatch fails when `strict`, and is recorded as a warning otherwise.
pub fn pair(subject: ActivationMatrix, atlas: ActivationMatrix, strict: bool) -> Result<PairedActivations> {
    if subject.n_rows() != atlas.n_rows() {
        return Err(Error::SampleCountMismatch { subject: subject.n_rows(), atlas: atlas.n_rows() });
    }
    let mut warnings = Vec::new();
    let (hs, hc) = (&subject.meta.dataset_hash, &atlas.meta.dataset_hash);
    if hs != hc {
        if strict {
            return Err(Error::DatasetHashMismatch { subject: hs.clone(), atlas: hc.clone() });
        }
        let w = format!("dataset hash mismatch (subject {hs}, atlas {hc}); pairing anyway");
        log::warn!("{w}");
        warnings.push(w);
    }
    Ok(PairedActivations { subject, atlas, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub index: usize,
    pub description: String,
    #[serde(default)]
    pub quality_score: Option<f64>,
}

/// Natural-language labels for (a subset of) a model's features.
#[derive(Debug, Clone, Default)]
pub struct FeatureCatalog {
    pub atlas_id: String,
    entries: Vec<CatalogEntry>,
    by_index: BTreeMap<usize, usize>,
}

impl FeatureCatalog {
    pub fn new(atlas_id: impl Into<String>, entries: Vec<CatalogEntry>, d_c: Option<usize>) -> Result<Self> {
        let mut by_index = BTreeMap::new();
        for (pos, e) in entries.iter().enumerate() {
            if let Some(w) = d_c {
                if e.index >= w {
                    return Err(Error::IndexOutOfRange { index: e.index, width: w });
                }
            }
            if let Some(q) = e.quality_score {
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::ParseError(format!("quality_score {q} for feature {} outside [0, 1]", e.index)));
                }
            }
            if by_index.insert(e.index, pos).is_some() {
                return Err(Error::DuplicateIndex(e.index));
            }
        }
        Ok(FeatureCatalog { atlas_id: atlas_id.into(), entries, by_index })
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn description(&self, index: usize) -> Option<&str> {
        self.by_index.get(&index).map(|&p| self.entries[p].description.as_str())
    }
}

/// Loads a JSON-lines catalog. `atlas_id` defaults to the file stem.
pub fn load_catalog(path: &Path, d_c: Option<usize>) -> Result<FeatureCatalog> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: CatalogEntry = serde_json::from_str(&line)
            .map_err(|e| Error::ParseError(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        entries.push(e);
    }
    let atlas_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    FeatureCatalog::new(atlas_id, entries, d_c)
}
