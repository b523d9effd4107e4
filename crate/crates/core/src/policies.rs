//! Stopping policies.
//!
//! Each model maps a decision point `(i, i*, q)` (box index, count of
//! non-dominated boxes so far, percentile of the current box) to a stop
//! probability. The same function drives simulation and the likelihoods in
//! [`crate::inference`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::PercentileMemory;
use crate::solver::{self, CriticalValueTable};

/// Slope used when a threshold model stands in for a step function.
pub const STEP_SLOPE: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ValueOblivious,
    ViableK,
    SampleK,
    MultipleThreshold,
    SingleThreshold,
    TwoThreshold,
    LpAgent,
}

impl ModelKind {
    /// The six models that are fitted to decision data.
    pub const BEHAVIORAL: [ModelKind; 6] = [
        ModelKind::ValueOblivious,
        ModelKind::ViableK,
        ModelKind::SampleK,
        ModelKind::MultipleThreshold,
        ModelKind::SingleThreshold,
        ModelKind::TwoThreshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ValueOblivious => "value_oblivious",
            ModelKind::ViableK => "viable_k",
            ModelKind::SampleK => "sample_k",
            ModelKind::MultipleThreshold => "multiple_threshold",
            ModelKind::SingleThreshold => "single_threshold",
            ModelKind::TwoThreshold => "two_threshold",
            ModelKind::LpAgent => "lp_agent",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [ModelKind::LpAgent]
            .into_iter()
            .chain(ModelKind::BEHAVIORAL)
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{s}`")))
    }
}

/// A model together with its parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PolicyParams {
    /// Stop with probability `p[i - 1]` at a non-dominated box `i`.
    ValueOblivious {
        p: Vec<f64>,
    },
    /// Stop on the `k`-th non-dominated box, erring with probability `epsilon`.
    ViableK {
        k: usize,
        epsilon: f64,
    },
    /// Stop on the first non-dominated box at position `k` or later.
    SampleK {
        k: usize,
        epsilon: f64,
    },
    /// Logistic threshold per box position.
    MultipleThreshold {
        tau: Vec<f64>,
        lambda: f64,
    },
    SingleThreshold {
        tau: f64,
        lambda: f64,
    },
    /// `tau_early` applies to boxes `i < T/2`, `tau_late` to the rest.
    TwoThreshold {
        tau_early: f64,
        tau_late: f64,
        lambda: f64,
    },
    /// Deterministic comparison against the optimal critical values
    /// (`critical[t - 1] = z_t`). Filled in by [`PolicyParams::resolve`] when
    /// loaded without values.
    LpAgent {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        critical: Vec<f64>,
    },
}

/// Where a decision currently stands within its game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionPoint {
    pub box_index: usize,
    pub nondominated_count: usize,
    pub percentile: f64,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stop probability of a logistic threshold rule.
pub fn threshold_stop_probability(lambda: f64, percentile: f64, tau: f64) -> f64 {
    logistic(lambda * (percentile - tau))
}

fn unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidArgument(format!(
            "{name} = {v} outside [0, 1]"
        )));
    }
    Ok(())
}

fn slope(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must be positive and finite"
        )));
    }
    Ok(())
}

impl PolicyParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            PolicyParams::ValueOblivious { .. } => ModelKind::ValueOblivious,
            PolicyParams::ViableK { .. } => ModelKind::ViableK,
            PolicyParams::SampleK { .. } => ModelKind::SampleK,
            PolicyParams::MultipleThreshold { .. } => ModelKind::MultipleThreshold,
            PolicyParams::SingleThreshold { .. } => ModelKind::SingleThreshold,
            PolicyParams::TwoThreshold { .. } => ModelKind::TwoThreshold,
            PolicyParams::LpAgent { .. } => ModelKind::LpAgent,
        }
    }

    pub fn lp_agent(horizon: usize) -> Result<Self> {
        let critical = (1..=horizon)
            .map(solver::solve_critical_value)
            .collect::<Result<_>>()?;
        Ok(PolicyParams::LpAgent { critical })
    }

    /// Fills in anything derivable from the horizon and validates the rest.
    pub fn resolve(self, horizon: usize) -> Result<Self> {
        let resolved = match self {
            PolicyParams::LpAgent { critical } if critical.is_empty() => {
                PolicyParams::lp_agent(horizon)?
            }
            other => other,
        };
        resolved.validate(horizon)?;
        Ok(resolved)
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if horizon < 2 {
            return Err(Error::InvalidArgument(
                "policies need a horizon of at least 2".into(),
            ));
        }
        let per_box = |len: usize, what: &str| {
            if len != horizon - 1 {
                Err(Error::InvalidArgument(format!(
                    "{what} needs {} entries for T = {horizon}, got {len}",
                    horizon - 1
                )))
            } else {
                Ok(())
            }
        };
        match self {
            PolicyParams::ValueOblivious { p } => {
                per_box(p.len(), "p")?;
                p.iter().try_for_each(|&v| unit("p_i", v))
            }
            PolicyParams::ViableK { k, epsilon } | PolicyParams::SampleK { k, epsilon } => {
                if *k < 1 || *k > horizon - 1 {
                    return Err(Error::InvalidArgument(format!(
                        "k = {k} outside 1..={}",
                        horizon - 1
                    )));
                }
                if !(0.0..=0.5).contains(epsilon) {
                    return Err(Error::InvalidArgument(format!(
                        "epsilon = {epsilon} outside [0, 0.5]"
                    )));
                }
                Ok(())
            }
            PolicyParams::MultipleThreshold { tau, lambda } => {
                per_box(tau.len(), "tau")?;
                tau.iter().try_for_each(|&v| unit("tau_i", v))?;
                slope(*lambda)
            }
            PolicyParams::SingleThreshold { tau, lambda } => {
                unit("tau", *tau)?;
                slope(*lambda)
            }
            PolicyParams::TwoThreshold {
                tau_early,
                tau_late,
                lambda,
            } => {
                unit("tau_early", *tau_early)?;
                unit("tau_late", *tau_late)?;
                slope(*lambda)
            }
            PolicyParams::LpAgent { critical } => {
                if critical.len() < horizon {
                    return Err(Error::InvalidArgument(format!(
                        "lp_agent needs critical values for t = 1..={horizon}"
                    )));
                }
                critical.iter().try_for_each(|&v| unit("z_t", v))
            }
        }
    }

    /// Stop probability without range checks; callers guarantee
    /// `1 <= i* <= i <= T - 1` and validated parameters.
    #[inline]
    pub fn stop_probability_unchecked(&self, horizon: usize, point: &DecisionPoint) -> f64 {
        let i = point.box_index;
        let q = point.percentile;
        match self {
            PolicyParams::ValueOblivious { p } => p[i - 1],
            PolicyParams::ViableK { k, epsilon } => {
                if point.nondominated_count < *k {
                    *epsilon
                } else {
                    1.0 - epsilon
                }
            }
            PolicyParams::SampleK { k, epsilon } => {
                if i < *k {
                    *epsilon
                } else {
                    1.0 - epsilon
                }
            }
            PolicyParams::MultipleThreshold { tau, lambda } => {
                threshold_stop_probability(*lambda, q, tau[i - 1])
            }
            PolicyParams::SingleThreshold { tau, lambda } => {
                threshold_stop_probability(*lambda, q, *tau)
            }
            PolicyParams::TwoThreshold {
                tau_early,
                tau_late,
                lambda,
            } => {
                let tau = if 2 * i < horizon { tau_early } else { tau_late };
                threshold_stop_probability(*lambda, q, *tau)
            }
            PolicyParams::LpAgent { critical } => {
                if q > critical[horizon - i] {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Stop probability at a non-dominated, non-final box.
pub fn stop_probability(
    params: &PolicyParams,
    horizon: usize,
    point: &DecisionPoint,
) -> Result<f64> {
    params.validate(horizon)?;
    let DecisionPoint {
        box_index: i,
        nondominated_count: i_star,
        percentile: q,
    } = *point;
    if i < 1 || i > horizon - 1 {
        return Err(Error::InvalidArgument(format!(
            "box index {i} outside 1..={}",
            horizon - 1
        )));
    }
    if i_star < 1 || i_star > i {
        return Err(Error::InvalidArgument(format!(
            "non-dominated count {i_star} outside 1..={i}"
        )));
    }
    unit("q_i", q)?;
    Ok(params.stop_probability_unchecked(horizon, point))
}

/// One LP-agent step. `x` must already be in `memory`.
pub fn lp_agent_decide(
    memory: &PercentileMemory,
    table: &CriticalValueTable,
    box_index: usize,
    horizon: usize,
    is_dominated: bool,
    x: f64,
) -> Result<bool> {
    if box_index == horizon {
        return Ok(true);
    }
    if is_dominated {
        return Ok(false);
    }
    if !table.covers(horizon) {
        return Err(Error::InvalidArgument(format!(
            "critical value table stops at {}",
            table.horizon_max
        )));
    }
    Ok(memory.percentile_rank(x)? > table.threshold_for_box(horizon, box_index))
}

/// Multiple-threshold parameters with `tau_i = z_{T-i+1}`.
pub fn optimal_policy_from_table(
    table: &CriticalValueTable,
    horizon: usize,
    lambda: f64,
) -> Result<PolicyParams> {
    if horizon < 2 || !table.covers(horizon) {
        return Err(Error::InvalidArgument(format!(
            "table does not cover T = {horizon}"
        )));
    }
    slope(lambda)?;
    let tau = (1..horizon)
        .map(|i| table.threshold_for_box(horizon, i))
        .collect();
    Ok(PolicyParams::MultipleThreshold { tau, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(i: usize, i_star: usize, q: f64) -> DecisionPoint {
        DecisionPoint {
            box_index: i,
            nondominated_count: i_star,
            percentile: q,
        }
    }

    #[test]
    fn threshold_midpoint_is_half() {
        let params = PolicyParams::MultipleThreshold {
            tau: vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
            lambda: 37.0,
        };
        for i in 1..=6 {
            let tau = 1.0 - 0.1 * i as f64;
            let p = stop_probability(&params, 7, &at(i, 1, tau)).unwrap();
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_k_classical_cutoff() {
        let horizon = 7;
        let k = (horizon as f64 / std::f64::consts::E).ceil() as usize;
        let params = PolicyParams::SampleK { k, epsilon: 0.0 };
        for i in 1..k {
            assert_eq!(
                stop_probability(&params, horizon, &at(i, 1, 0.99)).unwrap(),
                0.0
            );
        }
        assert_eq!(
            stop_probability(&params, horizon, &at(k, 1, 0.01)).unwrap(),
            1.0
        );
    }

    #[test]
    fn viable_k_errs_with_epsilon() {
        let params = PolicyParams::ViableK { k: 3, epsilon: 0.1 };
        assert!((stop_probability(&params, 7, &at(5, 3, 0.2)).unwrap() - 0.9).abs() < 1e-15);
        assert!((stop_probability(&params, 7, &at(5, 2, 0.2)).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn two_threshold_switches_after_first_half() {
        let params = PolicyParams::TwoThreshold {
            tau_early: 0.9,
            tau_late: 0.3,
            lambda: 50.0,
        };
        // T = 7: boxes 1..=3 are early
        assert!((stop_probability(&params, 7, &at(3, 1, 0.9)).unwrap() - 0.5).abs() < 1e-12);
        assert!((stop_probability(&params, 7, &at(4, 1, 0.3)).unwrap() - 0.5).abs() < 1e-12);
        // T = 15: boxes 1..=7 are early
        assert!((stop_probability(&params, 15, &at(7, 1, 0.9)).unwrap() - 0.5).abs() < 1e-12);
        assert!((stop_probability(&params, 15, &at(8, 1, 0.3)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn value_oblivious_indexes_by_position() {
        let params = PolicyParams::ValueOblivious {
            p: vec![0.1, 0.2, 0.3],
        };
        assert_eq!(stop_probability(&params, 4, &at(2, 1, 0.5)).unwrap(), 0.2);
        assert_eq!(stop_probability(&params, 4, &at(3, 3, 0.5)).unwrap(), 0.3);
    }

    #[test]
    fn out_of_range_inputs_rejected() {
        let params = PolicyParams::SingleThreshold {
            tau: 0.5,
            lambda: 10.0,
        };
        assert!(stop_probability(&params, 7, &at(7, 1, 0.5)).is_err());
        assert!(stop_probability(&params, 7, &at(0, 1, 0.5)).is_err());
        assert!(stop_probability(&params, 7, &at(2, 3, 0.5)).is_err());
        assert!(stop_probability(&params, 7, &at(2, 1, 1.5)).is_err());
        let bad = PolicyParams::SingleThreshold {
            tau: 0.5,
            lambda: 0.0,
        };
        assert!(stop_probability(&bad, 7, &at(2, 1, 0.5)).is_err());
        let bad = PolicyParams::ViableK { k: 7, epsilon: 0.1 };
        assert!(bad.validate(7).is_err());
        let bad = PolicyParams::ValueOblivious { p: vec![0.5; 3] };
        assert!(bad.validate(7).is_err());
    }

    #[test]
    fn optimal_policy_reverses_table() {
        let table = CriticalValueTable::compute(15).unwrap();
        let PolicyParams::MultipleThreshold { tau, .. } =
            optimal_policy_from_table(&table, 7, STEP_SLOPE).unwrap()
        else {
            panic!("wrong model");
        };
        assert!((tau[0] - 0.8778).abs() < 1e-4);
        assert!((tau[5] - 0.5).abs() < 1e-9);
        assert!(tau.windows(2).all(|w| w[0] > w[1]));
        let PolicyParams::MultipleThreshold { tau, .. } =
            optimal_policy_from_table(&table, 2, STEP_SLOPE).unwrap()
        else {
            panic!("wrong model");
        };
        assert_eq!(tau.len(), 1);
        assert!((tau[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn lp_agent_rules() {
        let table = CriticalValueTable::compute(7).unwrap();
        let mut memory = PercentileMemory::new();
        memory.insert(42.0);
        // first box of the first game sits at the 0.5 percentile, below z_7
        assert!(!lp_agent_decide(&memory, &table, 1, 7, false, 42.0).unwrap());
        assert!(lp_agent_decide(&memory, &table, 7, 7, true, 42.0).unwrap());
        let memory: PercentileMemory = (0..100).map(f64::from).collect();
        assert!(!lp_agent_decide(&memory, &table, 3, 7, true, 99.0).unwrap());
        assert!(lp_agent_decide(&memory, &table, 3, 7, false, 99.0).unwrap());
    }

    #[test]
    fn params_json_has_model_tag() {
        let params = PolicyParams::ViableK { k: 2, epsilon: 0.1 };
        let json = serde_json::to_string(&params).unwrap();
        assert_eq!(json, r#"{"model":"viable_k","k":2,"epsilon":0.1}"#);
        let lp: PolicyParams = serde_json::from_str(r#"{"model":"lp_agent"}"#).unwrap();
        let lp = lp.resolve(7).unwrap();
        assert_eq!(lp.kind(), ModelKind::LpAgent);
        assert!(lp.validate(7).is_ok());
    }

    proptest! {
        #[test]
        fn threshold_probability_increases_in_percentile(
            tau in 0.0f64..=1.0,
            lambda in 0.01f64..2000.0,
            q1 in 0.0f64..=1.0,
            q2 in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
            let p_lo = threshold_stop_probability(lambda, lo, tau);
            let p_hi = threshold_stop_probability(lambda, hi, tau);
            prop_assert!(p_lo <= p_hi);
            prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
            // strict where floating point can resolve the difference
            if lambda * (hi - lo) > 1e-6 && p_lo > 1e-12 && p_hi < 1.0 - 1e-12 {
                prop_assert!(p_lo < p_hi);
            }
        }
    }
}
