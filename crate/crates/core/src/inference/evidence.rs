//! Cross-validated model evidence and model comparison.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::model::{LikelihoodModel, PolicyModel, PriorSpec};
use super::slice::{sample_posterior, PosteriorSample, SamplerConfig};
use crate::engine::DecisionRecord;
use crate::error::{Error, Result};
use crate::policies::ModelKind;
use crate::rng::{self, Domain};

/// Random train/test splits over player-game trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub splits: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            splits: 10,
            seed: 0,
        }
    }
}

/// How `p(D_test | D_train)` is estimated from posterior draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceEstimator {
    /// Average of `p(D_test | theta)` over draws from the training posterior,
    /// one chain per split.
    #[default]
    Direct,
    /// One chain on the full data; each split is scored by the harmonic
    /// identity `1 / p(D_test | D_train) = E_{theta | D}[1 / p(D_test | theta)]`.
    Bronze,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceConfig {
    pub splits: SplitSpec,
    pub prior: PriorSpec,
    pub sampler: SamplerConfig,
    pub estimator: EvidenceEstimator,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        EvidenceConfig {
            splits: SplitSpec::default(),
            prior: PriorSpec::default(),
            sampler: SamplerConfig::default(),
            estimator: EvidenceEstimator::Direct,
        }
    }
}

/// A train/test partition of the decisions of one group.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

/// Builds `spec.splits` partitions. Whole trajectories (all decisions of one
/// player in one game) go to one side; split `s` shuffles with the stream
/// `(spec.seed, Split, s)`.
pub fn make_splits(
    records: &[DecisionRecord],
    horizon: usize,
    spec: &SplitSpec,
) -> Result<Vec<Split>> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {} outside (0, 1)",
            spec.test_fraction
        )));
    }
    if spec.splits == 0 {
        return Err(Error::InvalidArgument("need at least one split".into()));
    }
    let mut by_trajectory: BTreeMap<(u64, u32), Vec<&DecisionRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.forced) {
        by_trajectory
            .entry((r.player_id, r.game_number))
            .or_default()
            .push(r);
    }
    let keys: Vec<(u64, u32)> = by_trajectory.keys().copied().collect();
    let n = keys.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs at least two trajectories, found {n}"
        )));
    }
    let n_test = ((spec.test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    (0..spec.splits)
        .map(|s| {
            let mut order = keys.clone();
            order.shuffle(&mut rng::stream(spec.seed, Domain::Split, s as u64));
            let test_keys: BTreeSet<_> = order[..n_test].iter().copied().collect();
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (k, rs) in &by_trajectory {
                let side = if test_keys.contains(k) {
                    &mut test
                } else {
                    &mut train
                };
                side.extend(rs.iter().copied());
            }
            Ok(Split {
                train: Dataset::from_records(train, horizon)?,
                test: Dataset::from_records(test, horizon)?,
            })
        })
        .collect()
}

pub(crate) fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || xs.is_empty() {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + (xs.iter().map(|x| (x - m).exp()).sum::<f64>() / xs.len() as f64).ln()
}

/// `log p(D_test | D_train)` from draws of the training posterior.
pub fn predictive_log_evidence(
    model: &dyn LikelihoodModel,
    test: &Dataset,
    posterior: &PosteriorSample,
) -> f64 {
    let lls: Vec<f64> = posterior
        .draws
        .iter()
        .map(|theta| model.log_likelihood(theta, test))
        .collect();
    log_mean_exp(&lls)
}

/// `log p(D_test | D_train)` from draws of the full-data posterior.
pub fn bronze_log_evidence(
    model: &dyn LikelihoodModel,
    test: &Dataset,
    full_posterior: &PosteriorSample,
) -> f64 {
    let neg: Vec<f64> = full_posterior
        .draws
        .iter()
        .map(|theta| -model.log_likelihood(theta, test))
        .collect();
    -log_mean_exp(&neg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEvidence {
    pub split: usize,
    pub train_decisions: usize,
    pub test_decisions: usize,
    pub log_evidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEvidence {
    pub model: String,
    /// `log E_s p(D_test | D_train)`, the log of the split-averaged evidence.
    pub log_evidence: f64,
    pub per_split: Vec<SplitEvidence>,
    pub estimator: EvidenceEstimator,
}

fn chain_seed(master: u64, group: u64, split: u64) -> u64 {
    rng::derive_seed(
        rng::derive_seed(master, Domain::Chain, group),
        Domain::Chain,
        split,
    )
}

/// Cross-validated evidence of `model` on `records` (one group).
pub fn cv_evidence(
    model: &dyn LikelihoodModel,
    records: &[DecisionRecord],
    horizon: usize,
    config: &EvidenceConfig,
) -> Result<CvEvidence> {
    cv_evidence_in_group(model, records, horizon, config, 0)
}

fn cv_evidence_in_group(
    model: &dyn LikelihoodModel,
    records: &[DecisionRecord],
    horizon: usize,
    config: &EvidenceConfig,
    group: u64,
) -> Result<CvEvidence> {
    let splits = make_splits(records, horizon, &config.splits)?;
    let per_split: Vec<SplitEvidence> = match config.estimator {
        EvidenceEstimator::Direct => splits
            .par_iter()
            .enumerate()
            .map(|(s, split)| {
                let sampler =
                    config
                        .sampler
                        .with_seed(chain_seed(config.sampler.seed, group, s as u64));
                let posterior = sample_posterior(model, &split.train, &config.prior, &sampler)?;
                Ok(SplitEvidence {
                    split: s,
                    train_decisions: split.train.len(),
                    test_decisions: split.test.len(),
                    log_evidence: predictive_log_evidence(model, &split.test, &posterior),
                })
            })
            .collect::<Result<_>>()?,
        EvidenceEstimator::Bronze => {
            let full = Dataset::from_records(records, horizon)?;
            let sampler =
                config
                    .sampler
                    .with_seed(chain_seed(config.sampler.seed, group, u64::MAX));
            let posterior = sample_posterior(model, &full, &config.prior, &sampler)?;
            splits
                .iter()
                .enumerate()
                .map(|(s, split)| SplitEvidence {
                    split: s,
                    train_decisions: split.train.len(),
                    test_decisions: split.test.len(),
                    log_evidence: bronze_log_evidence(model, &split.test, &posterior),
                })
                .collect()
        }
    };
    let logs: Vec<f64> = per_split.iter().map(|s| s.log_evidence).collect();
    Ok(CvEvidence {
        model: model.name(),
        log_evidence: log_mean_exp(&logs),
        per_split,
        estimator: config.estimator,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// All game numbers together.
    Pooled,
    /// One analysis per game number.
    #[default]
    ByGameNumber,
}

/// Splits records into analysis groups. The key is the game number, or
/// `None` when pooled.
pub fn group_records(
    records: &[DecisionRecord],
    grouping: Grouping,
) -> BTreeMap<Option<u32>, Vec<DecisionRecord>> {
    let mut groups: BTreeMap<Option<u32>, Vec<DecisionRecord>> = BTreeMap::new();
    for r in records {
        let key = match grouping {
            Grouping::Pooled => None,
            Grouping::ByGameNumber => Some(r.game_number),
        };
        groups.entry(key).or_default().push(r.clone());
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvidence {
    pub model: ModelKind,
    pub log_evidence: f64,
    pub log10_evidence: f64,
    /// log10 cross-validated Bayes factor against the group's lowest-evidence
    /// model.
    pub normalized_log10_bf: f64,
    pub per_split_log_evidence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEvidence {
    pub game_number: Option<u32>,
    pub decisions: usize,
    pub models: Vec<ModelEvidence>,
}

impl GroupEvidence {
    pub fn get(&self, model: ModelKind) -> Option<&ModelEvidence> {
        self.models.iter().find(|m| m.model == model)
    }

    /// Direct log10 cross-validated Bayes factor of `a` over `b`.
    pub fn log10_bayes_factor(&self, a: ModelKind, b: ModelKind) -> Option<f64> {
        Some((self.get(a)?.log_evidence - self.get(b)?.log_evidence) / std::f64::consts::LN_10)
    }

    /// Models ordered from highest to lowest evidence.
    pub fn ranking(&self) -> Vec<ModelKind> {
        let mut ms: Vec<&ModelEvidence> = self.models.iter().collect();
        ms.sort_by(|a, b| b.log_evidence.total_cmp(&a.log_evidence));
        ms.into_iter().map(|m| m.model).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub schema: String,
    pub horizon: usize,
    pub grouping: Grouping,
    pub config: EvidenceConfig,
    pub groups: Vec<GroupEvidence>,
    pub warnings: Vec<String>,
}

pub const EVIDENCE_SCHEMA: &str = "stoplab.evidence-report.v1";

impl EvidenceReport {
    pub fn group(&self, game_number: Option<u32>) -> Option<&GroupEvidence> {
        self.groups.iter().find(|g| g.game_number == game_number)
    }

    pub fn csv_rows(&self) -> Vec<EvidenceRow> {
        self.groups
            .iter()
            .flat_map(|g| {
                g.models.iter().map(move |m| EvidenceRow {
                    game_number: g
                        .game_number
                        .map_or_else(|| "all".to_string(), |n| n.to_string()),
                    model: m.model,
                    decisions: g.decisions,
                    log_evidence: m.log_evidence,
                    log10_evidence: m.log10_evidence,
                    normalized_log10_bf: m.normalized_log10_bf,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub game_number: String,
    pub model: ModelKind,
    pub decisions: usize,
    pub log_evidence: f64,
    pub log10_evidence: f64,
    pub normalized_log10_bf: f64,
}

pub const EVIDENCE_COLUMNS: [&str; 6] = [
    "game_number",
    "model",
    "decisions",
    "log_evidence",
    "log10_evidence",
    "normalized_log10_bf",
];

/// Cross-validated evidence of every model in every group, with log10 Bayes
/// factors normalized against each group's weakest model.
pub fn compare_models(
    models: &[ModelKind],
    records: &[DecisionRecord],
    horizon: usize,
    grouping: Grouping,
    config: &EvidenceConfig,
) -> Result<EvidenceReport> {
    if models.len() < 2 {
        return Err(Error::InvalidArgument(
            "model comparison needs at least two models".into(),
        ));
    }
    let built = models
        .iter()
        .map(|&m| PolicyModel::new(m, horizon))
        .collect::<Result<Vec<_>>>()?;
    let mut report = EvidenceReport {
        schema: EVIDENCE_SCHEMA.into(),
        horizon,
        grouping,
        config: *config,
        groups: Vec::new(),
        warnings: Vec::new(),
    };
    for (key, group) in group_records(records, grouping) {
        let label = key.map_or_else(|| "all games".to_string(), |g| format!("game {g}"));
        let decisions = group.iter().filter(|r| !r.forced).count();
        if decisions == 0 {
            report
                .warnings
                .push(format!("{label}: no unforced decisions, skipped"));
            continue;
        }
        let group_seed = key.map_or(0, u64::from);
        let evidences = built
            .iter()
            .map(|m| cv_evidence_in_group(m, &group, horizon, config, group_seed))
            .collect::<Result<Vec<_>>>();
        let evidences = match evidences {
            Ok(e) => e,
            Err(Error::InvalidArgument(msg)) => {
                report.warnings.push(format!("{label}: {msg}, skipped"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let floor = evidences
            .iter()
            .map(|e| e.log_evidence)
            .fold(f64::INFINITY, f64::min);
        let models = models
            .iter()
            .zip(evidences)
            .map(|(&model, e)| ModelEvidence {
                model,
                log_evidence: e.log_evidence,
                log10_evidence: e.log_evidence / std::f64::consts::LN_10,
                normalized_log10_bf: (e.log_evidence - floor) / std::f64::consts::LN_10,
                per_split_log_evidence: e.per_split.iter().map(|s| s.log_evidence).collect(),
            })
            .collect();
        report.groups.push(GroupEvidence {
            game_number: key,
            decisions,
            models,
        });
    }
    if report.groups.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(report)
}
