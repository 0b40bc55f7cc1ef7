//! Norm-preserving activation steering and on-disk steering bundles.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::NormalizedTranslation;
use crate::error::{Error, Result};
use crate::mapping::map_query;
use crate::npy;
use crate::query::ConceptQuery;
use crate::tensorstore::write_json;

/// Lambda schedule used for the steering evaluation sweep.
pub const DEFAULT_LAMBDAS: [f64; 7] = [-50.0, -10.0, -1.0, 0.0, 1.0, 10.0, 50.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringRequest {
    pub direction: Vec<f64>,
    pub lambda: f64,
    pub layer: i64,
}

impl SteeringRequest {
    pub fn new(direction: Vec<f64>, lambda: f64, layer: i64) -> Result<Self> {
        if direction.iter().any(|v| !v.is_finite()) || direction.iter().all(|&v| v == 0.0) {
            return Err(Error::ConfigInvalid("steering direction must be finite and nonzero".into()));
        }
        if !lambda.is_finite() {
            return Err(Error::ConfigInvalid("lambda must be finite".into()));
        }
        Ok(SteeringRequest { direction, lambda, layer })
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        SteeringRequest { lambda, ..self.clone() }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// (a + λs) · ‖a‖ / ‖a + λs‖.
pub fn apply_steering(a: &[f64], req: &SteeringRequest) -> Result<Vec<f64>> {
    if a.len() != req.direction.len() {
        return Err(Error::DimensionMismatch { expected: req.direction.len(), got: a.len() });
    }
    if req.lambda == 0.0 {
        return Ok(a.to_vec());
    }
    let sum: Vec<f64> = a.iter().zip(&req.direction).map(|(x, s)| x + req.lambda * s).collect();
    let sum_norm = norm(&sum);
    if sum_norm == 0.0 || !sum_norm.is_finite() {
        return Err(Error::DegenerateSum);
    }
    let scale = norm(a) / sum_norm;
    Ok(sum.into_iter().map(|v| v * scale).collect())
}

/// Generation-loop policy: a degenerate sum passes `a` through unchanged and
/// returns a warning instead of failing.
pub fn apply_steering_or_pass(a: &[f64], req: &SteeringRequest) -> Result<(Vec<f64>, Option<String>)> {
    match apply_steering(a, req) {
        Ok(v) => Ok((v, None)),
        Err(Error::DegenerateSum) => Ok((
            a.to_vec(),
            Some(format!(
                "degenerate steering sum at layer {} (lambda {}); activation left unchanged",
                req.layer, req.lambda
            )),
        )),
        Err(e) => Err(e),
    }
}

/// Per-layer steering directions plus the lambda sweep to run them at.
///
/// Each request carries `lambda = 1`; the harness scales by every value of
/// `lambda_schedule`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringBundle {
    pub bundle_id: String,
    pub requests: Vec<SteeringRequest>,
    pub lambda_schedule: Vec<f64>,
    pub query_ref: String,
}

#[derive(Serialize, Deserialize)]
struct BundleManifest {
    bundle_id: String,
    query_ref: String,
    lambda_schedule: Vec<f64>,
    layers: Vec<LayerEntry>,
}

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    layer: i64,
    vector_file: String,
}

impl SteeringBundle {
    pub fn has_baseline(&self) -> bool {
        self.lambda_schedule.contains(&0.0)
    }

    pub fn layers(&self) -> Vec<i64> {
        self.requests.iter().map(|r| r.layer).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.lambda_schedule.is_empty() {
            return Err(Error::ConfigInvalid("lambda schedule is empty".into()));
        }
        if self.lambda_schedule.iter().any(|l| !l.is_finite()) {
            return Err(Error::ConfigInvalid("lambda schedule has non-finite values".into()));
        }
        let unique: BTreeSet<i64> = self.requests.iter().map(|r| r.layer).collect();
        if unique.len() != self.requests.len() {
            return Err(Error::ConfigInvalid("duplicate layer in steering bundle".into()));
        }
        Ok(())
    }

    /// Writes `manifest.json` and one `layer_<L>.npy` (`<f8`) per layer.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut layers = Vec::new();
        for r in &self.requests {
            let name = format!("layer_{}.npy", r.layer);
            npy::write_f64(&dir.join(&name), &[r.direction.len()], &r.direction)?;
            layers.push(LayerEntry { layer: r.layer, vector_file: name });
        }
        let manifest = BundleManifest {
            bundle_id: self.bundle_id.clone(),
            query_ref: self.query_ref.clone(),
            lambda_schedule: self.lambda_schedule.clone(),
            layers,
        };
        write_json(&dir.join("manifest.json"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let m: BundleManifest =
            serde_json::from_str(&text).map_err(|e| Error::ParseError(format!("{}: {e}", mpath.display())))?;
        let requests = m
            .layers
            .iter()
            .map(|l| {
                let (shape, v) = npy::read_f64(&dir.join(&l.vector_file))?;
                if shape.len() != 1 {
                    return Err(Error::ShapeMismatch(format!("{} is not a vector", l.vector_file)));
                }
                SteeringRequest::new(v, 1.0, l.layer)
            })
            .collect::<Result<Vec<_>>>()?;
        let b = SteeringBundle {
            bundle_id: m.bundle_id,
            requests,
            lambda_schedule: m.lambda_schedule,
            query_ref: m.query_ref,
        };
        b.validate()?;
        Ok(b)
    }
}

/// One request per layer with direction `map_query(T̂_layer, query)`; the
/// direction is not renormalized.
pub fn build_bundle(
    bundle_id: impl Into<String>,
    query: &ConceptQuery,
    query_ref: impl Into<String>,
    translations: &BTreeMap<i64, NormalizedTranslation>,
    lambda_schedule: &[f64],
) -> Result<SteeringBundle> {
    if translations.is_empty() {
        return Err(Error::ConfigInvalid("no translation matrices given".into()));
    }
    let requests = translations
        .iter()
        .map(|(&layer, t)| {
            let s = map_query(t, query)?;
            SteeringRequest::new(s.scores, 1.0, layer)
        })
        .collect::<Result<Vec<_>>>()?;
    let bundle = SteeringBundle {
        bundle_id: bundle_id.into(),
        requests,
        lambda_schedule: lambda_schedule.to_vec(),
        query_ref: query_ref.into(),
    };
    bundle.validate()?;
    Ok(bundle)
}
