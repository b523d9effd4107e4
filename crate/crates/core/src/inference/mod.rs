//! Bayesian comparison of stopping models on decision logs.
//!
//! Decisions at non-dominated, non-final boxes are Bernoulli draws with the
//! model's stop probability. Posteriors are sampled with a coordinate-wise
//! slice sampler, models are scored by cross-validated evidence over random
//! trajectory splits, and the multiple-threshold fit yields per-box threshold
//! intervals.

mod dataset;
mod evidence;
mod model;
mod slice;
mod thresholds;

pub use dataset::Dataset;
pub use evidence::{
    bronze_log_evidence, compare_models, cv_evidence, group_records, make_splits,
    predictive_log_evidence, CvEvidence, EvidenceConfig, EvidenceEstimator, EvidenceReport,
    EvidenceRow, GroupEvidence, Grouping, ModelEvidence, Split, SplitEvidence, SplitSpec,
    EVIDENCE_COLUMNS, EVIDENCE_SCHEMA,
};
pub use model::{LikelihoodModel, ParamKind, ParamSpec, PolicyModel, PriorSpec};
pub use slice::{
    sample_posterior, sample_posterior_from, slice_step, PosteriorSample, SamplerConfig,
    SamplerDiagnostics, SliceStats,
};
pub use thresholds::{
    estimate_thresholds, SlopeSummary, ThresholdReport, ThresholdRow, CREDIBLE_LEVEL,
    THRESHOLD_COLUMNS,
};

use crate::engine::DecisionRecord;
use crate::error::Result;

/// Log-likelihood of `records` under `model` at `theta`. Forced stops are
/// ignored; any other decision outside boxes `1..T-1` is an error.
pub fn log_likelihood(
    model: &PolicyModel,
    theta: &[f64],
    records: &[DecisionRecord],
) -> Result<f64> {
    let data = Dataset::from_records(records, model.horizon())?;
    Ok(model.log_likelihood(theta, &data))
}
