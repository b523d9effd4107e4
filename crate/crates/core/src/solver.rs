//! Optimal play.
//!
//! Everything here works in percentile space (values replaced by their CDF,
//! so `F(x) = x` on `[0, 1]`). Periods count boxes *remaining*: `t = 1` is
//! the last box.

use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};

pub const ROOT_TOLERANCE: f64 = 1e-10;
const ROOT_BRACKET: (f64, f64) = (1e-12, 1.0 - 1e-12);

/// Default number of uniform grid nodes for the win-probability recursion.
pub const DEFAULT_GRID_SIZE: usize = 10_001;
pub const MIN_GRID_SIZE: usize = 1001;
/// Finest grid tried before giving up and attaching a precision warning.
pub const MAX_GRID_SIZE: usize = 160_001;
/// Target agreement between successive grid refinements.
pub const GRID_TOLERANCE: f64 = 1e-8;

/// Critical percentile with `t` boxes remaining: zero for the last box,
/// otherwise the root in `(0, 1)` of `sum_{i=1}^{t-1} (z^-i - 1) / i = 1`.
pub fn solve_critical_value(t: usize) -> Result<f64> {
    match t {
        0 => Err(Error::InvalidArgument(
            "boxes remaining must be at least 1".into(),
        )),
        1 => Ok(0.0),
        _ => {
            // excess is strictly decreasing in z
            let excess = |z: f64| {
                (1..t)
                    .map(|i| (z.powi(-(i as i32)) - 1.0) / i as f64)
                    .sum::<f64>()
                    - 1.0
            };
            let (mut lo, mut hi) = ROOT_BRACKET;
            while hi - lo > ROOT_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if excess(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

/// Win probability with `t` boxes left when every value above the history
/// `h` is accepted.
pub fn accept_any_improvement(t: usize, h: f64) -> f64 {
    let ht = h.powi(t as i32);
    (1..=t)
        .map(|j| (h.powi(j as i32 - 1) - ht) / (t + 1 - j) as f64)
        .sum()
}

/// `p_t(h)` for `t = 1..=horizon` on a grid over `[0, 1]` that contains every
/// critical value as a node.
#[derive(Debug, Clone)]
pub struct WinProbabilityGrid {
    horizon: usize,
    nodes: Vec<f64>,
    /// `values[t - 1][j]` is `p_t(nodes[j])`.
    values: Vec<Vec<f64>>,
    critical: Vec<f64>,
    /// Set when refinement hit [`MAX_GRID_SIZE`] without meeting
    /// [`GRID_TOLERANCE`]; holds the last observed refinement change.
    pub precision_warning: Option<f64>,
}

fn grid_nodes(size: usize, critical: &[f64]) -> Vec<f64> {
    let step = 1.0 / (size - 1) as f64;
    let mut nodes: Vec<f64> = (0..size).map(|j| j as f64 * step).collect();
    nodes.extend_from_slice(critical);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    nodes
}

fn recursion(horizon: usize, nodes: &[f64], critical: &[f64]) -> Vec<Vec<f64>> {
    let mut values = Vec::with_capacity(horizon);
    values.push(nodes.iter().map(|h| 1.0 - h).collect::<Vec<_>>());
    let mut cumulative = vec![0.0; nodes.len()];
    for t in 2..=horizon {
        let z = critical[t - 1];
        let prev = &values[t - 2];
        // cumulative[j] = integral of p_{t-1} from 0 to nodes[j]
        for j in 1..nodes.len() {
            cumulative[j] =
                cumulative[j - 1] + 0.5 * (prev[j] + prev[j - 1]) * (nodes[j] - nodes[j - 1]);
        }
        let kz = nodes.partition_point(|&x| x < z);
        let accept_mass = (1.0 - z.powi(t as i32)) / t as f64;
        let next = nodes
            .iter()
            .enumerate()
            .map(|(j, &h)| {
                if h >= z {
                    accept_any_improvement(t, h)
                } else {
                    accept_mass + (cumulative[kz] - cumulative[j]) + h * prev[j]
                }
            })
            .collect();
        values.push(next);
    }
    values
}

impl WinProbabilityGrid {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self, t: usize) -> &[f64] {
        &self.values[t - 1]
    }

    pub fn critical_values(&self) -> &[f64] {
        &self.critical
    }

    /// `p_t(h)`, linearly interpolated between nodes.
    pub fn value(&self, t: usize, h: f64) -> f64 {
        let row = &self.values[t - 1];
        let h = h.clamp(0.0, 1.0);
        let j = self.nodes.partition_point(|&x| x < h);
        if j == 0 {
            return row[0];
        }
        if j >= self.nodes.len() {
            return row[row.len() - 1];
        }
        let (x0, x1) = (self.nodes[j - 1], self.nodes[j]);
        let w = (h - x0) / (x1 - x0);
        row[j - 1] * (1.0 - w) + row[j] * w
    }
}

/// Tabulates `p_t(h)` by backward recursion with trapezoidal quadrature,
/// refining the grid until two successive grids agree to [`GRID_TOLERANCE`].
pub fn win_probability_grid(horizon: usize, grid_size: usize) -> Result<WinProbabilityGrid> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if grid_size < MIN_GRID_SIZE {
        return Err(Error::InvalidArgument(format!(
            "grid size must be at least {MIN_GRID_SIZE}"
        )));
    }
    let critical = (1..=horizon)
        .map(solve_critical_value)
        .collect::<Result<Vec<_>>>()?;
    let mut size = grid_size;
    let mut nodes = grid_nodes(size, &critical);
    let mut values = recursion(horizon, &nodes, &critical);
    loop {
        let finer_size = 2 * size - 1;
        let finer_nodes = grid_nodes(finer_size, &critical);
        let finer = recursion(horizon, &finer_nodes, &critical);
        let change = (0..horizon)
            .map(|t| (finer[t][0] - values[t][0]).abs())
            .fold(0.0, f64::max);
        nodes = finer_nodes;
        values = finer;
        size = finer_size;
        if change <= GRID_TOLERANCE {
            return Ok(WinProbabilityGrid {
                horizon,
                nodes,
                values,
                critical,
                precision_warning: None,
            });
        }
        if 2 * size - 1 > MAX_GRID_SIZE {
            return Ok(WinProbabilityGrid {
                horizon,
                nodes,
                values,
                critical,
                precision_warning: Some(change),
            });
        }
    }
}

/// Critical percentiles and zero-history win probabilities for every number
/// of boxes remaining up to `horizon_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    pub horizon_max: usize,
    pub z: Vec<f64>,
    pub p0: Vec<f64>,
    /// Last grid-refinement change if the grid hit its size cap first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_warning: Option<f64>,
}

impl CriticalValueTable {
    pub fn compute(horizon_max: usize) -> Result<Self> {
        Self::compute_with_grid(horizon_max, DEFAULT_GRID_SIZE)
    }

    pub fn compute_with_grid(horizon_max: usize, grid_size: usize) -> Result<Self> {
        let grid = win_probability_grid(horizon_max, grid_size)?;
        let p0 = (1..=horizon_max).map(|t| grid.values(t)[0]).collect();
        Ok(CriticalValueTable {
            horizon_max,
            z: grid.critical.clone(),
            p0,
            precision_warning: grid.precision_warning,
        })
    }

    /// Critical percentile with `t` boxes remaining.
    pub fn z(&self, t: usize) -> f64 {
        self.z[t - 1]
    }

    pub fn p0(&self, t: usize) -> f64 {
        self.p0[t - 1]
    }

    /// Critical percentile used when deciding on box `i` (1-based) of a game
    /// with `horizon` boxes.
    pub fn threshold_for_box(&self, horizon: usize, i: usize) -> f64 {
        self.z(horizon - i + 1)
    }

    /// Dollar thresholds `c_t = F^-1(z_t)` under `spec`.
    pub fn dollar_thresholds(&self, spec: &DistributionSpec) -> Vec<f64> {
        self.z.iter().map(|&z| spec.quantile(z)).collect()
    }

    pub fn covers(&self, horizon: usize) -> bool {
        horizon >= 1 && horizon <= self.horizon_max
    }
}

/// Win probability of the sample-`k`-then-beat-the-best rule with `horizon`
/// boxes and no knowledge of the distribution.
pub fn classical_win_prob(k: usize, horizon: usize) -> Result<f64> {
    if k == 0 || k >= horizon {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k < T, got k = {k}, T = {horizon}"
        )));
    }
    let tail: f64 = (k + 1..=horizon).map(|m| 1.0 / (m - 1) as f64).sum();
    Ok(k as f64 / horizon as f64 * tail)
}

/// Best sample size for the classical rule; ties go to the smaller `k`.
pub fn optimal_classical(horizon: usize) -> Result<(usize, f64)> {
    if horizon < 2 {
        return Err(Error::InvalidArgument(
            "classical optimum needs T >= 2".into(),
        ));
    }
    let mut best = (1, classical_win_prob(1, horizon)?);
    for k in 2..horizon {
        let p = classical_win_prob(k, horizon)?;
        if p > best.1 {
            best = (k, p);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalTable {
    pub horizon_max: usize,
    /// `best_k[T - 1]`; zero for `T = 1`, where the only box is taken.
    pub best_k: Vec<usize>,
    pub win_prob: Vec<f64>,
}

impl ClassicalTable {
    pub fn compute(horizon_max: usize) -> Result<Self> {
        if horizon_max == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        let mut best_k = vec![0];
        let mut win_prob = vec![1.0];
        for horizon in 2..=horizon_max {
            let (k, p) = optimal_classical(horizon)?;
            best_k.push(k);
            win_prob.push(p);
        }
        Ok(ClassicalTable {
            horizon_max,
            best_k,
            win_prob,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_critical_values() {
        assert_eq!(solve_critical_value(1).unwrap(), 0.0);
        assert!((solve_critical_value(2).unwrap() - 0.5).abs() < 1e-10);
        // t = 3: u^2 + 2u - 5 = 0 with u = 1/z
        let z3 = 1.0 / (6f64.sqrt() - 1.0);
        assert!((solve_critical_value(3).unwrap() - z3).abs() < 1e-10);
        assert!(solve_critical_value(0).is_err());
    }

    #[test]
    fn accept_any_improvement_base_case() {
        for h in [0.0, 0.3, 0.9] {
            assert!((accept_any_improvement(1, h) - (1.0 - h)).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_rejects_coarse_request() {
        assert!(win_probability_grid(7, 100).is_err());
        assert!(win_probability_grid(0, 10_001).is_err());
    }

    #[test]
    fn grid_includes_critical_nodes_and_is_monotone() {
        let grid = win_probability_grid(15, DEFAULT_GRID_SIZE).unwrap();
        assert!(grid.precision_warning.is_none());
        for &z in grid.critical_values() {
            assert!(grid.nodes().binary_search_by(|x| x.total_cmp(&z)).is_ok());
        }
        for t in 1..=15 {
            let row = grid.values(t);
            assert!(
                row.windows(2).all(|w| w[1] <= w[0] + 1e-12),
                "p_{t} not nonincreasing"
            );
        }
        assert!((grid.value(1, 0.25) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn classical_rejects_bad_k() {
        assert!(classical_win_prob(0, 5).is_err());
        assert!(classical_win_prob(5, 5).is_err());
        assert!(optimal_classical(1).is_err());
    }

    #[test]
    fn classical_small_cases() {
        assert!((classical_win_prob(1, 2).unwrap() - 0.5).abs() < 1e-15);
        let expected = 2.0 / 7.0 * (1.0 / 2.0 + 1.0 / 3.0 + 1.0 / 4.0 + 1.0 / 5.0 + 1.0 / 6.0);
        assert!((classical_win_prob(2, 7).unwrap() - expected).abs() < 1e-15);
        // T = 3: k = 1 and k = 2 both give 1/2; ties go to k = 1
        assert_eq!(optimal_classical(3).unwrap().0, 1);
        assert!((optimal_classical(3).unwrap().1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dollar_thresholds_follow_quantile() {
        let table = CriticalValueTable::compute(7).unwrap();
        let spec = DistributionSpec::uniform(100.0, crate::distributions::Label::Medium).unwrap();
        let c = table.dollar_thresholds(&spec);
        assert!((c[1] - 50.0).abs() < 1e-8);
        assert_eq!(c[0], 0.0);
        assert!((table.threshold_for_box(7, 1) - table.z(7)).abs() < 1e-15);
    }
}
