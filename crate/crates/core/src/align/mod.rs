//! Translation matrices T (d_s × d_c) fitted from paired activations.
//!
//! Row `j` of T expresses subject feature `j` as a combination of atlas
//! features. All fits accumulate 64-bit partial Gram matrices over blocks of
//! sample rows; see [`crate::par`] for the reduction-order guarantee.

mod gram;
mod lens;
pub(crate) mod procrustes;
mod regression;
mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::npy;
use crate::par::{Exec, DEFAULT_BLOCK_ROWS};
use crate::tensorstore::{sidecar_path, write_json, MatrixMeta, PairedActivations};

pub use lens::fit_semantic_lens;
pub use procrustes::{fit_orthogonal_procrustes, ProcrustesOptions};
pub use regression::fit_linear_regression;
pub use stats::{fit_correlation, fit_covariance};

pub const DEFAULT_EPS: f64 = 1e-12;
pub const DEFAULT_RCOND: f64 = 1e-10;
pub const DEFAULT_LENS_K: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Covariance,
    Correlation,
    LinearRegression,
    OrthogonalProcrustes,
    SemanticLens,
    /// Not a fit: a matrix supplied from elsewhere (e.g. a random baseline).
    External,
}

impl Method {
    pub const FITTED: [Method; 5] = [
        Method::Covariance,
        Method::Correlation,
        Method::LinearRegression,
        Method::OrthogonalProcrustes,
        Method::SemanticLens,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Covariance => "covariance",
            Method::Correlation => "correlation",
            Method::LinearRegression => "linear_regression",
            Method::OrthogonalProcrustes => "orthogonal_procrustes",
            Method::SemanticLens => "semantic_lens",
            Method::External => "external",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Method::External]
            .into_iter()
            .chain(Method::FITTED)
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::ParseError(format!("unknown method {s:?}")))
    }
}

/// Shared knobs for the blocked accumulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub block_rows: usize,
    pub exec: Exec,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { block_rows: DEFAULT_BLOCK_ROWS, exec: Exec::default() }
    }
}

/// One of the five fitting methods with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodConfig {
    Covariance,
    Correlation { eps: f64 },
    LinearRegression { ridge: f64, rcond: f64 },
    OrthogonalProcrustes(ProcrustesOptions),
    SemanticLens { k: usize },
}

impl MethodConfig {
    pub fn default_for(method: Method) -> Result<Self> {
        Ok(match method {
            Method::Covariance => MethodConfig::Covariance,
            Method::Correlation => MethodConfig::Correlation { eps: DEFAULT_EPS },
            Method::LinearRegression => MethodConfig::LinearRegression { ridge: 0.0, rcond: DEFAULT_RCOND },
            Method::OrthogonalProcrustes => MethodConfig::OrthogonalProcrustes(ProcrustesOptions::default()),
            Method::SemanticLens => MethodConfig::SemanticLens { k: DEFAULT_LENS_K },
            Method::External => return Err(Error::ConfigInvalid("external matrices are not fitted".into())),
        })
    }
}

pub fn fit(pair: &PairedActivations, config: &MethodConfig, opts: &FitOptions) -> Result<TranslationMatrix> {
    match *config {
        MethodConfig::Covariance => Ok(fit_covariance(pair, opts)),
        MethodConfig::Correlation { eps } => Ok(fit_correlation(pair, eps, opts)),
        MethodConfig::LinearRegression { ridge, rcond } => fit_linear_regression(pair, ridge, rcond, opts),
        MethodConfig::OrthogonalProcrustes(p) => fit_orthogonal_procrustes(pair, &p, opts),
        MethodConfig::SemanticLens { k } => fit_semantic_lens(pair, k, opts),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub n_train: usize,
    pub subject_meta: MatrixMeta,
    pub atlas_meta: MatrixMeta,
    #[serde(default)]
    pub method_params: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_means_s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_means_c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_stds_s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_stds_c: Option<Vec<f64>>,
}

impl FitMeta {
    pub(crate) fn for_pair(pair: &PairedActivations) -> Self {
        FitMeta {
            n_train: pair.n_samples(),
            subject_meta: pair.subject.meta().clone(),
            atlas_meta: pair.atlas.meta().clone(),
            method_params: BTreeMap::new(),
            column_means_s: None,
            column_means_c: None,
            column_stds_s: None,
            column_stds_c: None,
        }
    }

    pub(crate) fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.method_params.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationMatrix {
    pub data: DMatrix<f64>,
    pub method: Method,
    pub fit_meta: FitMeta,
}

#[derive(Serialize, Deserialize)]
struct TranslationSidecar {
    format_version: String,
    method: Method,
    d_s: usize,
    d_c: usize,
    #[serde(flatten)]
    fit_meta: FitMeta,
}

impl TranslationMatrix {
    pub fn new(data: DMatrix<f64>, method: Method, fit_meta: FitMeta) -> Result<Self> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let r = data.nrows();
            return Err(Error::NumericalFailure(format!("non-finite translation entry at ({}, {})", i % r, i / r)));
        }
        Ok(TranslationMatrix { data, method, fit_meta })
    }

    /// A matrix that was not fitted here, e.g. a random baseline.
    pub fn external(data: DMatrix<f64>) -> Result<Self> {
        let (d_s, d_c) = data.shape();
        let fit_meta = FitMeta {
            n_train: 0,
            subject_meta: MatrixMeta::anonymous(0, d_s),
            atlas_meta: MatrixMeta::anonymous(0, d_c),
            method_params: BTreeMap::new(),
            column_means_s: None,
            column_means_c: None,
            column_stds_s: None,
            column_stds_c: None,
        };
        Self::new(data, Method::External, fit_meta)
    }

    pub fn d_s(&self) -> usize {
        self.data.nrows()
    }

    pub fn d_c(&self) -> usize {
        self.data.ncols()
    }

    /// Writes an `<f8` row-major (d_s, d_c) payload plus a `.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let row_major: Vec<f64> = self.data.transpose().as_slice().to_vec();
        npy::write_f64(path, &[self.d_s(), self.d_c()], &row_major)?;
        let side = TranslationSidecar {
            format_version: crate::FORMAT_VERSION.into(),
            method: self.method,
            d_s: self.d_s(),
            d_c: self.d_c(),
            fit_meta: self.fit_meta.clone(),
        };
        write_json(&sidecar_path(path), &side)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side_path = sidecar_path(path);
        if !side_path.exists() {
            return Err(Error::MissingSidecar(side_path));
        }
        let (shape, data) = npy::read_f64(path)?;
        let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let side: TranslationSidecar =
            serde_json::from_str(&text).map_err(|e| Error::ParseError(format!("{}: {e}", side_path.display())))?;
        let (r, c) = match shape.as_slice() {
            [r, c] => (*r, *c),
            other => return Err(Error::ShapeMismatch(format!("translation payload has shape {other:?}"))),
        };
        if (r, c) != (side.d_s, side.d_c) {
            return Err(Error::ShapeMismatch(format!("sidecar says {}x{}, payload is {r}x{c}", side.d_s, side.d_c)));
        }
        TranslationMatrix::new(DMatrix::from_row_slice(r, c, &data), side.method, side.fit_meta)
    }
}

/// T with unit-norm rows; all-zero rows are kept and listed in `zero_rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTranslation {
    pub data: DMatrix<f64>,
    pub zero_rows: BTreeSet<usize>,
}

impl NormalizedTranslation {
    pub fn d_s(&self) -> usize {
        self.data.nrows()
    }

    pub fn d_c(&self) -> usize {
        self.data.ncols()
    }
}

pub fn row_normalize(t: &TranslationMatrix) -> NormalizedTranslation {
    normalize_rows_of(&t.data)
}

pub(crate) fn normalize_rows_of(m: &DMatrix<f64>) -> NormalizedTranslation {
    let mut data = m.clone();
    let mut zero_rows = BTreeSet::new();
    for j in 0..data.nrows() {
        let norm = data.row(j).norm();
        if norm == 0.0 {
            zero_rows.insert(j);
        } else {
            data.row_mut(j).unscale_mut(norm);
        }
    }
    NormalizedTranslation { data, zero_rows }
}
