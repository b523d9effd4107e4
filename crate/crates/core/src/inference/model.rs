use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::policies::{ModelKind, PolicyParams};

/// Support and prior family of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Uniform on `[0, 1]` (stop probabilities and thresholds).
    Unit,
    /// Uniform on `[0, 0.5]`.
    Epsilon,
    /// Exponential slope on `(0, inf)`.
    Slope,
    /// Uniform on the integers `lo..=hi`.
    Discrete { lo: usize, hi: usize },
}

impl ParamKind {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            ParamKind::Unit => (0.0, 1.0),
            ParamKind::Epsilon => (0.0, 0.5),
            ParamKind::Slope => (0.0, f64::INFINITY),
            ParamKind::Discrete { lo, hi } => (lo as f64, hi as f64),
        }
    }

    pub fn in_support(self, v: f64) -> bool {
        match self {
            ParamKind::Unit | ParamKind::Epsilon => {
                let (lo, hi) = self.bounds();
                (lo..=hi).contains(&v)
            }
            ParamKind::Slope => v > 0.0 && v.is_finite(),
            ParamKind::Discrete { lo, hi } => {
                v.fract() == 0.0 && (lo as f64..=hi as f64).contains(&v)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

/// Independent priors: uniform on every bounded parameter, exponential with
/// mean `slope_mean` on slopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub slope_mean: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { slope_mean: 1000.0 }
    }
}

impl PriorSpec {
    pub fn log_density(&self, kind: ParamKind, v: f64) -> f64 {
        if !kind.in_support(v) {
            return f64::NEG_INFINITY;
        }
        match kind {
            ParamKind::Unit => 0.0,
            ParamKind::Epsilon => std::f64::consts::LN_2,
            ParamKind::Slope => -self.slope_mean.ln() - v / self.slope_mean,
            ParamKind::Discrete { lo, hi } => -((hi - lo + 1) as f64).ln(),
        }
    }

    pub fn log_prior(&self, params: &[ParamSpec], theta: &[f64]) -> f64 {
        params
            .iter()
            .zip(theta)
            .map(|(p, &v)| self.log_density(p.kind, v))
            .sum()
    }

    /// A point of high prior density used to start chains.
    pub fn center(&self, kind: ParamKind) -> f64 {
        match kind {
            ParamKind::Unit => 0.5,
            ParamKind::Epsilon => 0.25,
            ParamKind::Slope => self.slope_mean,
            ParamKind::Discrete { lo, hi } => ((lo + hi) / 2) as f64,
        }
    }
}

/// A parametric decision model that can score a [`Dataset`].
pub trait LikelihoodModel: Sync {
    fn name(&self) -> String;

    fn parameters(&self) -> &[ParamSpec];

    /// `sum_r w_r log P(y_r | theta)`; `-inf` when a decision is impossible.
    fn log_likelihood(&self, theta: &[f64], data: &Dataset) -> f64;

    /// The terms of [`log_likelihood`](Self::log_likelihood) that depend on
    /// coordinate `coord`. Differences between two values of that
    /// coordinate must match those of the full likelihood.
    fn log_likelihood_partial(&self, theta: &[f64], data: &Dataset, coord: usize) -> f64 {
        let _ = coord;
        self.log_likelihood(theta, data)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn bernoulli_counts(p: f64, stops: f64, continues: f64) -> f64 {
    let mut ll = 0.0;
    if stops > 0.0 {
        ll += stops * p.ln();
    }
    if continues > 0.0 {
        ll += continues * (1.0 - p).ln();
    }
    ll
}

/// `sum w log sigmoid(sign * lambda * (q - tau))` over `rows`.
#[inline]
fn threshold_rows(data: &Dataset, rows: std::ops::Range<usize>, lambda: f64, tau: f64) -> f64 {
    let mut ll = 0.0;
    for r in rows {
        let x = data.sign[r] * lambda * (data.percentile[r] - tau);
        ll -= data.weight[r] * softplus(-x);
    }
    ll
}

/// One of the fitted stopping models for games of a fixed horizon.
#[derive(Debug, Clone)]
pub struct PolicyModel {
    kind: ModelKind,
    horizon: usize,
    params: Vec<ParamSpec>,
}

impl PolicyModel {
    pub fn new(kind: ModelKind, horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidArgument(
                "models need a horizon of at least 2".into(),
            ));
        }
        let unit = |name: String| ParamSpec {
            name,
            kind: ParamKind::Unit,
        };
        let slope = || ParamSpec {
            name: "lambda".into(),
            kind: ParamKind::Slope,
        };
        let per_box = |prefix: &str| {
            (1..horizon)
                .map(|i| unit(format!("{prefix}_{i}")))
                .collect::<Vec<_>>()
        };
        let params = match kind {
            ModelKind::ValueOblivious => per_box("p"),
            ModelKind::ViableK | ModelKind::SampleK => vec![
                ParamSpec {
                    name: "k".into(),
                    kind: ParamKind::Discrete {
                        lo: 1,
                        hi: horizon - 1,
                    },
                },
                ParamSpec {
                    name: "epsilon".into(),
                    kind: ParamKind::Epsilon,
                },
            ],
            ModelKind::MultipleThreshold => {
                let mut p = per_box("tau");
                p.push(slope());
                p
            }
            ModelKind::SingleThreshold => vec![unit("tau".into()), slope()],
            ModelKind::TwoThreshold => {
                vec![unit("tau_early".into()), unit("tau_late".into()), slope()]
            }
            ModelKind::LpAgent => {
                return Err(Error::InvalidArgument(
                    "lp_agent has no free parameters to fit".into(),
                ));
            }
        };
        Ok(PolicyModel {
            kind,
            horizon,
            params,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn to_params(&self, theta: &[f64]) -> PolicyParams {
        let t = self.horizon;
        match self.kind {
            ModelKind::ValueOblivious => PolicyParams::ValueOblivious { p: theta.to_vec() },
            ModelKind::ViableK => PolicyParams::ViableK {
                k: theta[0] as usize,
                epsilon: theta[1],
            },
            ModelKind::SampleK => PolicyParams::SampleK {
                k: theta[0] as usize,
                epsilon: theta[1],
            },
            ModelKind::MultipleThreshold => PolicyParams::MultipleThreshold {
                tau: theta[..t - 1].to_vec(),
                lambda: theta[t - 1],
            },
            ModelKind::SingleThreshold => PolicyParams::SingleThreshold {
                tau: theta[0],
                lambda: theta[1],
            },
            ModelKind::TwoThreshold => PolicyParams::TwoThreshold {
                tau_early: theta[0],
                tau_late: theta[1],
                lambda: theta[2],
            },
            ModelKind::LpAgent => unreachable!("rejected in PolicyModel::new"),
        }
    }

    pub fn from_params(&self, params: &PolicyParams) -> Result<Vec<f64>> {
        if params.kind() != self.kind {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.kind,
                params.kind()
            )));
        }
        params.validate(self.horizon)?;
        Ok(match params {
            PolicyParams::ValueOblivious { p } => p.clone(),
            PolicyParams::ViableK { k, epsilon } | PolicyParams::SampleK { k, epsilon } => {
                vec![*k as f64, *epsilon]
            }
            PolicyParams::MultipleThreshold { tau, lambda } => {
                tau.iter().copied().chain([*lambda]).collect()
            }
            PolicyParams::SingleThreshold { tau, lambda } => vec![*tau, *lambda],
            PolicyParams::TwoThreshold {
                tau_early,
                tau_late,
                lambda,
            } => vec![*tau_early, *tau_late, *lambda],
            PolicyParams::LpAgent { .. } => unreachable!(),
        })
    }

    /// Boxes `i` with `2i < T` use the early threshold.
    fn early_boxes(&self) -> std::ops::Range<usize> {
        1..self.horizon.div_ceil(2)
    }

    fn late_boxes(&self) -> std::ops::Range<usize> {
        self.horizon.div_ceil(2)..self.horizon
    }
}

impl LikelihoodModel for PolicyModel {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }

    fn parameters(&self) -> &[ParamSpec] {
        &self.params
    }

    fn log_likelihood(&self, theta: &[f64], data: &Dataset) -> f64 {
        let all = 0..data.rows();
        match self.kind {
            ModelKind::ValueOblivious => data
                .box_counts
                .iter()
                .zip(theta)
                .map(|(&(s, c), &p)| bernoulli_counts(p, s, c))
                .sum(),
            ModelKind::ViableK => {
                let (k, eps) = (theta[0] as usize, theta[1]);
                data.nondominated_counts
                    .iter()
                    .enumerate()
                    .map(|(j, &(s, c))| {
                        bernoulli_counts(if j + 1 < k { eps } else { 1.0 - eps }, s, c)
                    })
                    .sum()
            }
            ModelKind::SampleK => {
                let (k, eps) = (theta[0] as usize, theta[1]);
                data.box_counts
                    .iter()
                    .enumerate()
                    .map(|(j, &(s, c))| {
                        bernoulli_counts(if j + 1 < k { eps } else { 1.0 - eps }, s, c)
                    })
                    .sum()
            }
            ModelKind::MultipleThreshold => {
                let lambda = theta[self.horizon - 1];
                data.box_rows
                    .iter()
                    .zip(theta)
                    .map(|(rows, &tau)| threshold_rows(data, rows.clone(), lambda, tau))
                    .sum()
            }
            ModelKind::SingleThreshold => threshold_rows(data, all, theta[1], theta[0]),
            ModelKind::TwoThreshold => {
                threshold_rows(
                    data,
                    data.rows_for_boxes(self.early_boxes()),
                    theta[2],
                    theta[0],
                ) + threshold_rows(
                    data,
                    data.rows_for_boxes(self.late_boxes()),
                    theta[2],
                    theta[1],
                )
            }
            ModelKind::LpAgent => unreachable!(),
        }
    }

    fn log_likelihood_partial(&self, theta: &[f64], data: &Dataset, coord: usize) -> f64 {
        match self.kind {
            ModelKind::ValueOblivious => {
                let (s, c) = data.box_counts[coord];
                bernoulli_counts(theta[coord], s, c)
            }
            ModelKind::MultipleThreshold if coord + 1 < self.horizon => threshold_rows(
                data,
                data.box_rows[coord].clone(),
                theta[self.horizon - 1],
                theta[coord],
            ),
            ModelKind::TwoThreshold if coord == 0 => threshold_rows(
                data,
                data.rows_for_boxes(self.early_boxes()),
                theta[2],
                theta[0],
            ),
            ModelKind::TwoThreshold if coord == 1 => threshold_rows(
                data,
                data.rows_for_boxes(self.late_boxes()),
                theta[2],
                theta[1],
            ),
            _ => self.log_likelihood(theta, data),
        }
    }
}
