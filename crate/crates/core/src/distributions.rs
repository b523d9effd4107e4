//! Box-value distributions.
//!
//! The decision problem only sees values through their CDF, so every family
//! here is sampled by inverse transform: a uniform draw `u` maps to
//! `quantile(u)`. Two specs fed the same uniform stream therefore produce
//! draws with identical ranks.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain, Rng};

/// Maximum box value used by the experimental conditions.
pub const DEFAULT_MAX_VALUE: f64 = 100_000_000.0;

/// Horizon at which the reported gap statistics were measured.
pub const CALIBRATION_HORIZON: usize = 15;

/// Shape bracket searched by [`calibrate_shape`].
pub const SHAPE_MIN: f64 = 1e-3;
pub const SHAPE_MAX: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Power,
    Uniform,
    CustomTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Low,
    Medium,
    High,
    Other,
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Label::Low),
            "medium" => Ok(Label::Medium),
            "high" => Ok(Label::High),
            "other" => Ok(Label::Other),
            _ => Err(Error::InvalidArgument(format!(
                "unknown distribution label `{s}`"
            ))),
        }
    }
}

/// A value distribution on `[0, max_value]`.
///
/// `power` has CDF `(x / max_value)^shape`; `uniform` is the power family
/// with `shape = 1`. `custom-table` interpolates linearly between
/// `(value, cdf)` knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct DistributionSpec {
    family: Family,
    max_value: f64,
    shape: f64,
    label: Label,
    table: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    family: Family,
    max_value: f64,
    #[serde(default = "one")]
    shape: f64,
    #[serde(default = "other")]
    label: Label,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    table: Vec<(f64, f64)>,
}

fn one() -> f64 {
    1.0
}

fn other() -> Label {
    Label::Other
}

impl TryFrom<RawSpec> for DistributionSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        match raw.family {
            Family::Power => DistributionSpec::power(raw.max_value, raw.shape, raw.label),
            Family::Uniform => {
                if (raw.shape - 1.0).abs() > 0.0 {
                    return Err(Error::InvalidSpec(
                        "uniform family requires shape = 1".into(),
                    ));
                }
                DistributionSpec::uniform(raw.max_value, raw.label)
            }
            Family::CustomTable => DistributionSpec::custom_table(raw.table, raw.label),
        }
    }
}

impl From<DistributionSpec> for RawSpec {
    fn from(spec: DistributionSpec) -> Self {
        RawSpec {
            family: spec.family,
            max_value: spec.max_value,
            shape: spec.shape,
            label: spec.label,
            table: spec.table,
        }
    }
}

fn check_max(max_value: f64) -> Result<()> {
    if !(max_value.is_finite() && max_value > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "max_value must be positive and finite, got {max_value}"
        )));
    }
    Ok(())
}

impl DistributionSpec {
    pub fn power(max_value: f64, shape: f64, label: Label) -> Result<Self> {
        check_max(max_value)?;
        if !(shape.is_finite() && shape > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "shape must be positive and finite, got {shape}"
            )));
        }
        Ok(DistributionSpec {
            family: Family::Power,
            max_value,
            shape,
            label,
            table: Vec::new(),
        })
    }

    pub fn uniform(max_value: f64, label: Label) -> Result<Self> {
        check_max(max_value)?;
        Ok(DistributionSpec {
            family: Family::Uniform,
            max_value,
            shape: 1.0,
            label,
            table: Vec::new(),
        })
    }

    /// Piecewise-linear CDF through `(value, cdf)` knots. The first knot must
    /// be `(0, 0)`, the last must have `cdf = 1`, and both coordinates must be
    /// nondecreasing.
    pub fn custom_table(knots: Vec<(f64, f64)>, label: Label) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidSpec(
                "custom table needs at least two knots".into(),
            ));
        }
        let (x0, c0) = knots[0];
        let (xn, cn) = knots[knots.len() - 1];
        if x0 != 0.0 || c0 != 0.0 || cn != 1.0 {
            return Err(Error::InvalidSpec(
                "custom table must run from (0, 0) to (max, 1)".into(),
            ));
        }
        check_max(xn)?;
        for w in knots.windows(2) {
            let ((xa, ca), (xb, cb)) = (w[0], w[1]);
            if !(xb > xa && cb >= ca) || !xb.is_finite() || !cb.is_finite() {
                return Err(Error::InvalidSpec(
                    "custom table knots must be increasing in value and nondecreasing in cdf"
                        .into(),
                ));
            }
        }
        Ok(DistributionSpec {
            family: Family::CustomTable,
            max_value: xn,
            shape: 1.0,
            label,
            table: knots,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.max_value {
            return 1.0;
        }
        match self.family {
            Family::Uniform => x / self.max_value,
            Family::Power => (x / self.max_value).powf(self.shape),
            Family::CustomTable => {
                let j = self.table.partition_point(|&(v, _)| v <= x);
                let (xa, ca) = self.table[j - 1];
                let (xb, cb) = self.table[j];
                ca + (cb - ca) * (x - xa) / (xb - xa)
            }
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self.family {
            Family::Uniform => u * self.max_value,
            Family::Power => self.max_value * u.powf(1.0 / self.shape),
            Family::CustomTable => {
                // first knot whose cdf reaches u
                let j = self.table.partition_point(|&(_, c)| c < u).max(1);
                let (xa, ca) = self.table[j - 1];
                let (xb, cb) = self.table[j];
                if cb == ca {
                    xa
                } else {
                    xa + (xb - xa) * (u - ca) / (cb - ca)
                }
            }
        }
    }

    pub fn draw(&self, rng: &mut Rng) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// `n` i.i.d. draws from the stream `(seed, Sample, 0)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "sample size must be at least 1".into(),
            ));
        }
        let mut rng = rng::stream(seed, Domain::Sample, 0);
        Ok((0..n).map(|_| self.draw(&mut rng)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStatistics {
    pub horizon: usize,
    pub mean_gap: f64,
    pub std_error: f64,
    pub replicates: usize,
}

impl GapStatistics {
    /// A calibration target with no sampling error attached.
    pub fn target(horizon: usize, mean_gap: f64) -> Self {
        GapStatistics {
            horizon,
            mean_gap,
            std_error: 0.0,
            replicates: 1,
        }
    }
}

fn top_two(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for v in values {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    (first, second)
}

/// Monte Carlo estimate of `E[max - second max]` over games of `horizon` draws.
pub fn estimate_gap(
    spec: &DistributionSpec,
    horizon: usize,
    replicates: usize,
    seed: u64,
) -> Result<GapStatistics> {
    if horizon < 2 {
        return Err(Error::InvalidArgument(
            "gap needs a horizon of at least 2".into(),
        ));
    }
    if replicates == 0 {
        return Err(Error::InvalidArgument(
            "replicates must be at least 1".into(),
        ));
    }
    let mut rng = rng::stream(seed, Domain::Gap, 0);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..replicates {
        let (a, b) = top_two((0..horizon).map(|_| spec.draw(&mut rng)));
        let gap = a - b;
        sum += gap;
        sum_sq += gap * gap;
    }
    let n = replicates as f64;
    let mean = sum / n;
    let var = if replicates > 1 {
        (sum_sq - n * mean * mean).max(0.0) / (n - 1.0)
    } else {
        0.0
    };
    Ok(GapStatistics {
        horizon,
        mean_gap: mean,
        std_error: (var / n).sqrt(),
        replicates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Relative tolerance on the matched gap.
    pub tolerance: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            replicates: 200_000,
            seed: 20_190_101,
            tolerance: 0.02,
        }
    }
}

/// Common-random-number gap evaluator for the power family: the top two
/// uniforms of every replicate are drawn once and reused for every shape.
struct CrnGap {
    pairs: Vec<(f64, f64)>,
    max_value: f64,
}

impl CrnGap {
    fn new(horizon: usize, replicates: usize, seed: u64, max_value: f64) -> Self {
        let mut rng = rng::stream(seed, Domain::Calibration, 0);
        let pairs = (0..replicates)
            .map(|_| top_two((0..horizon).map(|_| rng.random::<f64>())))
            .collect();
        CrnGap { pairs, max_value }
    }

    fn gap(&self, shape: f64) -> f64 {
        let inv = 1.0 / shape;
        let total: f64 = self
            .pairs
            .iter()
            .map(|&(a, b)| a.powf(inv) - b.powf(inv))
            .sum();
        self.max_value * total / self.pairs.len() as f64
    }
}

/// Shape at which the power-family gap peaks for a given horizon. Below this
/// shape the gap shrinks again, so only `[peak, SHAPE_MAX]` is a monotone
/// (decreasing) branch.
pub fn peak_gap_shape(horizon: usize) -> f64 {
    let n = horizon as f64;
    1.0 / (n * (n - 1.0)).sqrt()
}

pub fn calibrate_shape(target: &GapStatistics, max_value: f64) -> Result<DistributionSpec> {
    calibrate_shape_with(target, max_value, &CalibrationConfig::default())
}

/// Bisects `ln(shape)` on the decreasing branch of the power-family gap until
/// the simulated gap matches `target.mean_gap`.
pub fn calibrate_shape_with(
    target: &GapStatistics,
    max_value: f64,
    config: &CalibrationConfig,
) -> Result<DistributionSpec> {
    check_max(max_value)?;
    if target.horizon < 2 {
        return Err(Error::InvalidArgument(
            "calibration horizon must be at least 2".into(),
        ));
    }
    if !(target.mean_gap > 0.0 && target.mean_gap < max_value) {
        return Err(Error::InvalidArgument(format!(
            "target gap {} outside (0, {max_value})",
            target.mean_gap
        )));
    }
    let crn = CrnGap::new(
        target.horizon,
        config.replicates.max(1),
        config.seed,
        max_value,
    );
    let mut lo = SHAPE_MIN.max(peak_gap_shape(target.horizon)).ln();
    let mut hi = SHAPE_MAX.ln();
    let (gap_lo, gap_hi) = (crn.gap(lo.exp()), crn.gap(hi.exp()));
    if target.mean_gap > gap_lo || target.mean_gap < gap_hi {
        return Err(Error::Calibration(format!(
            "gap {} unreachable: shapes in [{:.4e}, {SHAPE_MAX:e}] give gaps in [{gap_hi:.4e}, {gap_lo:.4e}]",
            target.mean_gap,
            lo.exp()
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if crn.gap(mid.exp()) > target.mean_gap {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let shape = (0.5 * (lo + hi)).exp();
    let achieved = crn.gap(shape);
    let rel = (achieved - target.mean_gap).abs() / target.mean_gap;
    if rel > config.tolerance {
        return Err(Error::Calibration(format!(
            "best shape {shape:.6} gives gap {achieved:.4e}, {:.2}% from target",
            100.0 * rel
        )));
    }
    DistributionSpec::power(max_value, shape, Label::Other)
}

/// Calibrated experimental conditions shipped with the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedSet {
    pub version: u32,
    pub horizon: usize,
    pub calibration: CalibrationConfig,
    pub targets: Vec<CalibrationTarget>,
    pub distributions: Vec<DistributionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub label: Label,
    pub mean_gap: f64,
}

/// Reported max-minus-second gaps (dollars, 15 boxes) for the skewed conditions.
pub const LOW_TARGET_GAP: f64 = 14.5e6;
pub const HIGH_TARGET_GAP: f64 = 8.0e4;

pub const BUILTIN_JSON: &str = include_str!("../data/distributions.json");

impl CalibratedSet {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN_JSON).expect("shipped distributions.json is valid")
    }

    /// Runs the calibration for the low and high conditions from scratch.
    pub fn calibrate(config: &CalibrationConfig) -> Result<Self> {
        let horizon = CALIBRATION_HORIZON;
        let low = calibrate_shape_with(
            &GapStatistics::target(horizon, LOW_TARGET_GAP),
            DEFAULT_MAX_VALUE,
            config,
        )?;
        let high = calibrate_shape_with(
            &GapStatistics::target(horizon, HIGH_TARGET_GAP),
            DEFAULT_MAX_VALUE,
            config,
        )?;
        Ok(CalibratedSet {
            version: 1,
            horizon,
            calibration: *config,
            targets: vec![
                CalibrationTarget {
                    label: Label::Low,
                    mean_gap: LOW_TARGET_GAP,
                },
                CalibrationTarget {
                    label: Label::High,
                    mean_gap: HIGH_TARGET_GAP,
                },
            ],
            distributions: vec![
                DistributionSpec::power(DEFAULT_MAX_VALUE, low.shape(), Label::Low)?,
                DistributionSpec::uniform(DEFAULT_MAX_VALUE, Label::Medium)?,
                DistributionSpec::power(DEFAULT_MAX_VALUE, high.shape(), Label::High)?,
            ],
        })
    }

    pub fn get(&self, label: Label) -> Option<&DistributionSpec> {
        self.distributions.iter().find(|d| d.label() == label)
    }
}
