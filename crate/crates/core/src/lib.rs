//! Linear alignment of an uninterpreted model latent space onto a labeled
//! concept atlas, plus the downstream machinery that uses the alignment:
//! concept queries, feature retrieval, norm-preserving steering export and
//! the evaluation metrics for translation quality.
//!
//! The pipeline is `tensorstore` (load paired activations) → `align` (fit a
//! translation matrix) → `query` (build a concept query in atlas space) →
//! `mapping` (similarity vector over subject features) → `steering` /
//! `metrics`. `synth` produces planted instances for testing all of it.

pub mod align;
pub mod error;
pub mod manifest;
pub mod mapping;
pub mod metrics;
pub mod npy;
pub mod par;
pub mod query;
pub mod steering;
pub mod synth;
pub mod tensorstore;

pub use align::{FitMeta, Method, NormalizedTranslation, TranslationMatrix};
pub use error::{Error, Result};
pub use mapping::{RankedFeatures, SimilarityVector};
pub use par::Exec;
pub use query::{ConceptQuery, EmbeddingTable, Provenance};
pub use steering::{SteeringBundle, SteeringRequest};
pub use tensorstore::{ActivationMatrix, FeatureCatalog, MatrixMeta, PairedActivations};

/// Version of the on-disk formats written by this crate (sidecars, bundles,
/// query files, manifests).
pub const FORMAT_VERSION: &str = "1";

/// Total order on scores in which -0.0 and 0.0 tie, matching `==`.
pub(crate) fn cmp_score(a: f64, b: f64) -> std::cmp::Ordering {
    (a + 0.0).total_cmp(&(b + 0.0))
}
