//! Summaries of decision logs and outcomes: learning curves and stopping
//! curves relative to the optimal thresholds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{DecisionRecord, ErrorType, OutcomeRecord, OutcomeTally};
use crate::error::{Error, Result};
use crate::solver::CriticalValueTable;

pub const LEARNING_COLUMNS: [&str; 11] = [
    "game_number",
    "players",
    "win_rate",
    "win_se",
    "early_rate",
    "early_se",
    "late_rate",
    "late_se",
    "mean_depth",
    "depth_se",
    "rate_sum",
];

pub const CURVE_COLUMNS: [&str; 8] = [
    "game_band",
    "condition",
    "bin_lower",
    "bin_upper",
    "count",
    "stops",
    "stop_rate",
    "std_error",
];

/// Outcome rates for one game number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub game_number: u32,
    pub players: u64,
    pub win_rate: f64,
    pub win_se: f64,
    pub early_rate: f64,
    pub early_se: f64,
    pub late_rate: f64,
    pub late_se: f64,
    pub mean_depth: f64,
    pub depth_se: f64,
    pub rate_sum: f64,
}

fn rate(k: u64, n: u64) -> (f64, f64) {
    let r = k as f64 / n as f64;
    (r, (r * (1.0 - r) / n as f64).sqrt())
}

#[derive(Default)]
struct Acc {
    n: u64,
    wins: u64,
    early: u64,
    late: u64,
    depth: f64,
    depth_sq: f64,
}

/// Per-game-number win, early-stop and late-stop rates with search depth.
///
/// With `min_games = Some(m)` only players that have at least `m` outcome
/// rows are kept, which removes the selection effect of players dropping out.
pub fn learning_curves(outcomes: &[OutcomeRecord], min_games: Option<usize>) -> Vec<LearningPoint> {
    let keep: Option<BTreeSet<u64>> = min_games.map(|m| {
        let mut per_player: BTreeMap<u64, usize> = BTreeMap::new();
        for o in outcomes {
            *per_player.entry(o.player_id).or_default() += 1;
        }
        per_player
            .into_iter()
            .filter(|&(_, n)| n >= m)
            .map(|(p, _)| p)
            .collect()
    });
    let mut by_game: BTreeMap<u32, Acc> = BTreeMap::new();
    for o in outcomes {
        if keep.as_ref().is_some_and(|k| !k.contains(&o.player_id)) {
            continue;
        }
        let a = by_game.entry(o.game_number).or_default();
        a.n += 1;
        match o.error_type {
            ErrorType::None => a.wins += 1,
            ErrorType::StoppedBeforeMax => a.early += 1,
            ErrorType::StoppedAfterMax => a.late += 1,
        }
        let d = o.depth as f64;
        a.depth += d;
        a.depth_sq += d * d;
    }
    by_game
        .into_iter()
        .map(|(game_number, a)| {
            let (win_rate, win_se) = rate(a.wins, a.n);
            let (early_rate, early_se) = rate(a.early, a.n);
            let (late_rate, late_se) = rate(a.late, a.n);
            let n = a.n as f64;
            let mean_depth = a.depth / n;
            let var = if a.n > 1 {
                ((a.depth_sq - n * mean_depth * mean_depth) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            LearningPoint {
                game_number,
                players: a.n,
                win_rate,
                win_se,
                early_rate,
                early_se,
                late_rate,
                late_se,
                mean_depth,
                depth_se: (var / n).sqrt(),
                rate_sum: win_rate + early_rate + late_rate,
            }
        })
        .collect()
}

/// Learning curve from per-game tallies, `tallies[g - 1]` for game `g`.
pub fn learning_curve_from_tallies(tallies: &[OutcomeTally]) -> Vec<LearningPoint> {
    tallies
        .iter()
        .enumerate()
        .filter(|(_, t)| t.games > 0)
        .map(|(g, t)| {
            let (win_rate, win_se) = t.win_rate();
            let (early_rate, early_se) = t.early_rate();
            let (late_rate, late_se) = t.late_rate();
            let (mean_depth, depth_se) = t.mean_depth();
            LearningPoint {
                game_number: g as u32 + 1,
                players: t.games,
                win_rate,
                win_se,
                early_rate,
                early_se,
                late_rate,
                late_se,
                mean_depth,
                depth_se,
                rate_sum: win_rate + early_rate + late_rate,
            }
        })
        .collect()
}

/// Equal-width bins over `[lo, hi]`; the last bin is closed on the right and
/// may be narrower when the width does not divide the range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

impl Default for Bins {
    fn default() -> Self {
        Bins {
            lo: -1.0,
            hi: 1.0,
            width: 0.05,
        }
    }
}

impl Bins {
    pub fn new(width: f64) -> Result<Self> {
        Bins {
            width,
            ..Bins::default()
        }
        .checked()
    }

    pub fn checked(self) -> Result<Self> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bin width must be positive, got {}",
                self.width
            )));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return Err(Error::InvalidArgument(format!(
                "empty bin range [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        (((self.hi - self.lo) / self.width) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn edges(&self, b: usize) -> (f64, f64) {
        let lo = self.lo + b as f64 * self.width;
        let hi = if b + 1 == self.len() {
            self.hi
        } else {
            self.lo + (b + 1) as f64 * self.width
        };
        (lo, hi)
    }

    /// Bin holding `x`, or `None` outside the range.
    pub fn index(&self, x: f64) -> Option<usize> {
        if !(self.lo..=self.hi).contains(&x) {
            return None;
        }
        let b = ((x - self.lo) / self.width).floor() as usize;
        Some(b.min(self.len() - 1))
    }
}

/// Inclusive range of game numbers; `last = None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameBand {
    pub first: u32,
    pub last: Option<u32>,
}

impl GameBand {
    pub const ALL: GameBand = GameBand {
        first: 1,
        last: None,
    };

    pub fn single(g: u32) -> Self {
        GameBand {
            first: g,
            last: Some(g),
        }
    }

    /// `{1}`, `{2-4}`, `{5+}`.
    pub fn defaults() -> [GameBand; 3] {
        [
            GameBand::single(1),
            GameBand {
                first: 2,
                last: Some(4),
            },
            GameBand {
                first: 5,
                last: None,
            },
        ]
    }

    pub fn contains(&self, g: u32) -> bool {
        g >= self.first && self.last.is_none_or(|l| g <= l)
    }
}

impl fmt::Display for GameBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.last {
            Some(l) if l == self.first => write!(f, "{l}"),
            Some(l) => write!(f, "{}-{l}", self.first),
            None => write!(f, "{}+", self.first),
        }
    }
}

impl FromStr for GameBand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("game band `{s}`: expected N, N-M or N+"));
        let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
        let band = if let Some(first) = s.strip_suffix('+') {
            GameBand {
                first: num(first)?,
                last: None,
            }
        } else if let Some((a, b)) = s.split_once('-') {
            GameBand {
                first: num(a)?,
                last: Some(num(b)?),
            }
        } else {
            GameBand::single(num(s)?)
        };
        if band.first == 0 || band.last.is_some_and(|l| l < band.first) {
            return Err(bad());
        }
        Ok(band)
    }
}

/// Condition on how a player's first game went.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Any,
    WonFirst,
    LostFirst,
    /// Passed over a value above its critical value in game 1.
    OverSearchedFirst,
    /// Stopped on a value below its critical value in game 1.
    UnderSearchedFirst,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::Any,
        Condition::WonFirst,
        Condition::LostFirst,
        Condition::OverSearchedFirst,
        Condition::UnderSearchedFirst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Any => "any",
            Condition::WonFirst => "won_first",
            Condition::LostFirst => "lost_first",
            Condition::OverSearchedFirst => "over_searched_first",
            Condition::UnderSearchedFirst => "under_searched_first",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown condition `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstGameFlags {
    /// `None` when no outcome row was available for game 1.
    pub won: Option<bool>,
    pub over_searched: bool,
    pub under_searched: bool,
}

/// First-game flags per player. A game is over-searched if any continue
/// happened at a percentile above the box's critical value, and
/// under-searched if the stop happened below it; both can hold.
pub fn first_game_flags(
    log: &[DecisionRecord],
    outcomes: &[OutcomeRecord],
    table: &CriticalValueTable,
    horizon: usize,
) -> Result<BTreeMap<u64, FirstGameFlags>> {
    check_table(table, horizon)?;
    let mut flags: BTreeMap<u64, FirstGameFlags> = BTreeMap::new();
    for r in log.iter().filter(|r| r.game_number == 1) {
        let z = threshold(table, horizon, r)?;
        let f = flags.entry(r.player_id).or_default();
        if r.stopped && r.percentile < z {
            f.under_searched = true;
        }
        if !r.stopped && r.percentile > z {
            f.over_searched = true;
        }
    }
    for o in outcomes.iter().filter(|o| o.game_number == 1) {
        flags.entry(o.player_id).or_default().won = Some(o.won);
    }
    Ok(flags)
}

fn check_table(table: &CriticalValueTable, horizon: usize) -> Result<()> {
    if horizon < 2 || !table.covers(horizon) {
        return Err(Error::InvalidArgument(format!(
            "critical value table does not cover T = {horizon}"
        )));
    }
    Ok(())
}

fn threshold(table: &CriticalValueTable, horizon: usize, r: &DecisionRecord) -> Result<f64> {
    let i = r.box_index as usize;
    if i < 1 || i > horizon {
        return Err(Error::MalformedRecord(format!(
            "box index {i} with T = {horizon}"
        )));
    }
    Ok(table.threshold_for_box(horizon, i))
}

fn keep_player(condition: Condition, flags: Option<&FirstGameFlags>) -> Result<bool> {
    let Some(f) = flags else {
        return Ok(condition == Condition::Any);
    };
    let won = |want: bool| {
        f.won.map(|w| w == want).ok_or_else(|| {
            Error::InvalidArgument("won/lost conditions need first-game outcomes".into())
        })
    };
    Ok(match condition {
        Condition::Any => true,
        Condition::WonFirst => won(true)?,
        Condition::LostFirst => won(false)?,
        Condition::OverSearchedFirst => f.over_searched,
        Condition::UnderSearchedFirst => f.under_searched,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
    pub stops: u64,
    /// `None` for an empty bin.
    pub rate: Option<f64>,
    pub std_error: Option<f64>,
}

/// Stop rate as a function of `q_i - z_{T-i+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCurve {
    pub horizon: usize,
    pub band: GameBand,
    pub condition: Condition,
    pub bins: Vec<CurveBin>,
}

impl BinnedCurve {
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub game_band: String,
    pub condition: String,
    pub bin_lower: f64,
    pub bin_upper: f64,
    pub count: u64,
    pub stops: u64,
    pub stop_rate: Option<f64>,
    pub std_error: Option<f64>,
}

pub fn curve_rows(curves: &[BinnedCurve]) -> Vec<CurveRow> {
    curves
        .iter()
        .flat_map(|c| {
            c.bins.iter().map(move |b| CurveRow {
                game_band: c.band.to_string(),
                condition: c.condition.to_string(),
                bin_lower: b.lower,
                bin_upper: b.upper,
                count: b.count,
                stops: b.stops,
                stop_rate: b.rate,
                std_error: b.std_error,
            })
        })
        .collect()
}

/// Bins every unforced decision in `band` (from players matching
/// `condition`) by its distance to the critical value for its box.
///
/// `flags` is only consulted when `condition` is not [`Condition::Any`].
pub fn stopping_curve(
    log: &[DecisionRecord],
    table: &CriticalValueTable,
    horizon: usize,
    bins: &Bins,
    band: GameBand,
    condition: Condition,
    flags: &BTreeMap<u64, FirstGameFlags>,
) -> Result<BinnedCurve> {
    let bins = bins.checked()?;
    check_table(table, horizon)?;
    let mut counts = vec![(0u64, 0u64); bins.len()];
    for r in log {
        if r.forced || !band.contains(r.game_number) {
            continue;
        }
        if condition != Condition::Any && !keep_player(condition, flags.get(&r.player_id))? {
            continue;
        }
        let d = r.percentile - threshold(table, horizon, r)?;
        let b = bins.index(d).ok_or_else(|| {
            Error::MalformedRecord(format!("percentile {} out of range", r.percentile))
        })?;
        counts[b].0 += 1;
        if r.stopped {
            counts[b].1 += 1;
        }
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(b, (count, stops))| {
            let (lower, upper) = bins.edges(b);
            let (rate, std_error) = if count == 0 {
                (None, None)
            } else {
                let (r, se) = rate(stops, count);
                (Some(r), Some(se))
            };
            CurveBin {
                lower,
                upper,
                count,
                stops,
                rate,
                std_error,
            }
        })
        .collect();
    Ok(BinnedCurve {
        horizon,
        band,
        condition,
        bins,
    })
}

/// Largest box index among forced decisions, i.e. the number of boxes when at
/// least one game reached the end.
pub fn infer_horizon(log: &[DecisionRecord]) -> Option<usize> {
    log.iter()
        .filter(|r| r.forced)
        .map(|r| r.box_index as usize)
        .max()
}
