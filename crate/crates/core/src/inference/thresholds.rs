use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::evidence::{group_records, Grouping};
use super::model::{PolicyModel, PriorSpec};
use super::slice::{sample_posterior, SamplerConfig};
use crate::engine::DecisionRecord;
use crate::error::{Error, Result};
use crate::policies::ModelKind;
use crate::rng::{self, Domain};
use crate::solver;

pub const CREDIBLE_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub game_number: String,
    pub box_index: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// Optimal threshold `z_{T-i+1}` for this box.
    pub optimal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub game_number: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub horizon: usize,
    pub level: f64,
    pub rows: Vec<ThresholdRow>,
    pub slopes: Vec<SlopeSummary>,
    pub warnings: Vec<String>,
}

pub const THRESHOLD_COLUMNS: [&str; 6] = [
    "game_number",
    "box_index",
    "mean",
    "lower",
    "upper",
    "optimal",
];

/// Posterior means and equal-tailed 95% intervals of the multiple-threshold
/// model's per-box thresholds, one fit per group.
pub fn estimate_thresholds(
    records: &[DecisionRecord],
    horizon: usize,
    grouping: Grouping,
    prior: &PriorSpec,
    sampler: &SamplerConfig,
) -> Result<ThresholdReport> {
    let model = PolicyModel::new(ModelKind::MultipleThreshold, horizon)?;
    let optimal = (1..horizon)
        .map(|i| solver::solve_critical_value(horizon - i + 1))
        .collect::<Result<Vec<_>>>()?;
    let mut report = ThresholdReport {
        horizon,
        level: CREDIBLE_LEVEL,
        rows: Vec::new(),
        slopes: Vec::new(),
        warnings: Vec::new(),
    };
    for (key, group) in group_records(records, grouping) {
        let label = key.map_or_else(|| "all".to_string(), |g| g.to_string());
        let data = Dataset::from_records(&group, horizon)?;
        if data.is_empty() {
            report
                .warnings
                .push(format!("game {label}: no unforced decisions, skipped"));
            continue;
        }
        let seed = rng::derive_seed(sampler.seed, Domain::Chain, key.map_or(0, u64::from));
        let posterior = sample_posterior(&model, &data, prior, &sampler.with_seed(seed))?;
        for i in 1..horizon {
            let (lower, upper) = posterior.credible_interval(i - 1, CREDIBLE_LEVEL);
            report.rows.push(ThresholdRow {
                game_number: label.clone(),
                box_index: i,
                mean: posterior.mean(i - 1),
                lower,
                upper,
                optimal: optimal[i - 1],
            });
        }
        let (lower, upper) = posterior.credible_interval(horizon - 1, CREDIBLE_LEVEL);
        report.slopes.push(SlopeSummary {
            game_number: label,
            mean: posterior.mean(horizon - 1),
            lower,
            upper,
        });
    }
    if report.rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(report)
}
