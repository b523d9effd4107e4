//! Coordinate-wise slice sampling.
//!
//! Continuous coordinates are updated with the univariate stepping-out and
//! shrinkage procedures; a discrete coordinate is redrawn from its exact full
//! conditional by enumerating its support.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::model::{LikelihoodModel, ParamKind, PriorSpec};
use crate::error::{Error, Result};
use crate::rng::{self, Domain, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Total iterations, burn-in included.
    pub draws: usize,
    pub burn_in: usize,
    /// Maximum number of step-outs on each side of the slice.
    pub max_steps_out: usize,
    /// Initial width as a fraction of a bounded parameter's support.
    pub width_fraction: f64,
    /// Initial width of slope parameters as a fraction of the prior mean.
    pub slope_width_fraction: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            draws: 25_000,
            burn_in: 5_000,
            max_steps_out: 32,
            width_fraction: 0.1,
            slope_width_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        SamplerConfig { seed, ..self }
    }

    fn check(&self) -> Result<()> {
        if self.draws <= self.burn_in {
            return Err(Error::InvalidArgument(format!(
                "draws ({}) must exceed burn-in ({})",
                self.draws, self.burn_in
            )));
        }
        if !(self.width_fraction > 0.0 && self.slope_width_fraction > 0.0) {
            return Err(Error::InvalidArgument(
                "slice widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub log_density_evaluations: u64,
    /// Mean number of shrinkage proposals per continuous update (1 = the first
    /// proposal was accepted).
    pub mean_proposals: f64,
    pub mean_steps_out: f64,
    /// Lag-1 autocorrelation of each coordinate over the retained draws.
    pub lag1_autocorrelation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub model: String,
    pub parameter_names: Vec<String>,
    /// Retained draws, one row per iteration after burn-in.
    pub draws: Vec<Vec<f64>>,
    pub burn_in: usize,
    pub seed: u64,
    pub diagnostics: SamplerDiagnostics,
}

impl PosteriorSample {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.draws.iter().map(|d| d[j]).sum::<f64>() / self.draws.len() as f64
    }

    /// Sample quantile with linear interpolation between order statistics.
    pub fn quantile(&self, j: usize, p: f64) -> f64 {
        let mut col = self.column(j);
        col.sort_by(f64::total_cmp);
        interpolated_quantile(&col, p)
    }

    /// Equal-tailed credible interval with mass `level`.
    pub fn credible_interval(&self, j: usize, level: f64) -> (f64, f64) {
        let mut col = self.column(j);
        col.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - level);
        (
            interpolated_quantile(&col, tail),
            interpolated_quantile(&col, 1.0 - tail),
        )
    }
}

pub(crate) fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Univariate stepping-out + shrinkage update on a log density.
///
/// `bounds` is the support of the coordinate; the density must be `-inf`
/// outside it. Returns the new point together with the number of density
/// evaluations, step-outs and shrinkage proposals used.
pub fn slice_step<F: FnMut(f64) -> f64>(
    x0: f64,
    log_density_x0: f64,
    mut log_density: F,
    width: f64,
    max_steps_out: usize,
    bounds: (f64, f64),
    rng: &mut Rng,
) -> (f64, f64, SliceStats) {
    let mut stats = SliceStats::default();
    let level = log_density_x0 - exp1(rng);
    let mut left = x0 - width * rng.random::<f64>();
    let mut right = left + width;
    let mut j = (max_steps_out as f64 * rng.random::<f64>()).floor() as usize;
    let mut k = max_steps_out.saturating_sub(1).saturating_sub(j);
    while j > 0 && left > bounds.0 && {
        stats.evaluations += 1;
        log_density(left) > level
    } {
        left -= width;
        j -= 1;
        stats.steps_out += 1;
    }
    while k > 0 && right < bounds.1 && {
        stats.evaluations += 1;
        log_density(right) > level
    } {
        right += width;
        k -= 1;
        stats.steps_out += 1;
    }
    left = left.max(bounds.0);
    right = right.min(bounds.1);
    loop {
        let x1 = left + rng.random::<f64>() * (right - left);
        stats.evaluations += 1;
        stats.proposals += 1;
        let l1 = log_density(x1);
        if l1 > level {
            return (x1, l1, stats);
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
        if right - left <= f64::EPSILON * x0.abs().max(1.0) {
            // interval collapsed onto x0; keep the current state
            return (x0, log_density_x0, stats);
        }
    }
}

fn exp1(rng: &mut Rng) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SliceStats {
    pub evaluations: u64,
    pub steps_out: u64,
    pub proposals: u64,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn lag1(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return f64::NAN;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

/// Draws from `p(theta | data)` under `prior`, starting at the prior centre.
pub fn sample_posterior(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    prior: &PriorSpec,
    config: &SamplerConfig,
) -> Result<PosteriorSample> {
    let start: Vec<f64> = model
        .parameters()
        .iter()
        .map(|p| prior.center(p.kind))
        .collect();
    sample_posterior_from(model, data, prior, config, start)
}

pub fn sample_posterior_from(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    prior: &PriorSpec,
    config: &SamplerConfig,
    start: Vec<f64>,
) -> Result<PosteriorSample> {
    config.check()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let params = model.parameters().to_vec();
    if start.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "start has {} coordinates, model has {}",
            start.len(),
            params.len()
        )));
    }
    let mut theta = start;
    let log_prior0 = prior.log_prior(&params, &theta);
    let log_lik0 = model.log_likelihood(&theta, data);
    if !(log_prior0 + log_lik0).is_finite() {
        return Err(Error::Initialization(format!(
            "{}: log prior {log_prior0}, log likelihood {log_lik0} at {:?}",
            model.name(),
            theta
        )));
    }

    let mut rng = rng::stream(config.seed, Domain::Chain, 0);
    let widths: Vec<f64> = params
        .iter()
        .map(|p| match p.kind {
            ParamKind::Slope => config.slope_width_fraction * prior.slope_mean,
            kind => {
                let (lo, hi) = kind.bounds();
                config.width_fraction * (hi - lo)
            }
        })
        .collect();

    let mut diag = SamplerDiagnostics::default();
    let mut continuous_updates = 0u64;
    let mut proposals = 0u64;
    let mut steps_out = 0u64;
    let retained = config.draws - config.burn_in;
    let mut draws = Vec::with_capacity(retained);

    for iter in 0..config.draws {
        for (c, spec) in params.iter().enumerate() {
            let kind = spec.kind;
            match kind {
                ParamKind::Discrete { lo, hi } => {
                    let logs: Vec<f64> = (lo..=hi)
                        .map(|v| {
                            theta[c] = v as f64;
                            prior.log_density(kind, v as f64)
                                + model.log_likelihood_partial(&theta, data, c)
                        })
                        .collect();
                    diag.log_density_evaluations += logs.len() as u64;
                    let total = log_sum_exp(&logs);
                    if total == f64::NEG_INFINITY {
                        return Err(Error::Initialization(format!(
                            "{}: every value of {} is impossible",
                            model.name(),
                            spec.name
                        )));
                    }
                    let u = rng.random::<f64>();
                    let mut acc = 0.0;
                    let mut pick = hi;
                    for (offset, l) in logs.iter().enumerate() {
                        acc += (l - total).exp();
                        if u < acc {
                            pick = lo + offset;
                            break;
                        }
                    }
                    theta[c] = pick as f64;
                }
                _ => {
                    let x0 = theta[c];
                    let mut work = theta.clone();
                    let mut density = |x: f64| {
                        let lp = prior.log_density(kind, x);
                        if lp == f64::NEG_INFINITY {
                            return lp;
                        }
                        work[c] = x;
                        lp + model.log_likelihood_partial(&work, data, c)
                    };
                    let l0 = density(x0);
                    let (x1, _, stats) = slice_step(
                        x0,
                        l0,
                        &mut density,
                        widths[c],
                        config.max_steps_out,
                        kind.bounds(),
                        &mut rng,
                    );
                    theta[c] = x1;
                    continuous_updates += 1;
                    proposals += stats.proposals;
                    steps_out += stats.steps_out;
                    diag.log_density_evaluations += stats.evaluations + 1;
                }
            }
        }
        if iter >= config.burn_in {
            draws.push(theta.clone());
        }
    }

    if continuous_updates > 0 {
        diag.mean_proposals = proposals as f64 / continuous_updates as f64;
        diag.mean_steps_out = steps_out as f64 / continuous_updates as f64;
    }
    diag.lag1_autocorrelation = (0..params.len())
        .map(|j| lag1(&draws.iter().map(|d: &Vec<f64>| d[j]).collect::<Vec<_>>()))
        .collect();

    Ok(PosteriorSample {
        model: model.name(),
        parameter_names: params.into_iter().map(|p| p.name).collect(),
        draws,
        burn_in: config.burn_in,
        seed: config.seed,
        diagnostics: diag,
    })
}
