//! Evaluation metrics: ranking quality of translated features, retrieval of
//! subject features from concept queries, and steering effectiveness.

mod quality;
mod ranking;
mod retrieval;
mod steer;

pub use quality::{sample_features, translation_quality, FeatureQuality, QualityOptions, QualityReport};
pub use ranking::{auroc, average_precision, BinaryLabeledScores};
pub use retrieval::{mpp, mrr, predicted_probabilities, reciprocal_ranks, retrieval_from_probes, RetrievalMatrix};
pub use steer::{
    activation_delta, faithfulness, faithfulness_all, no_effect, summarize_deltas, ActivationDeltaInput, DeltaCell,
    FaithfulnessOptions, FaithfulnessResult, Rating, RatingsTable,
};

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
