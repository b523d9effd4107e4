//! Game execution.
//!
//! A game opens `T` boxes in order. The player may stop only on a box that
//! beats everything opened earlier in the same game; the last box is taken if
//! reached. The game is won iff the stopped box holds the maximum.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::memory::PercentileMemory;
use crate::policies::{DecisionPoint, PolicyParams};
use crate::rng::{self, Domain, Rng};

/// Which percentile a policy compares against its thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileSource {
    /// Percentile rank over the player's memory.
    Learned,
    /// The true CDF of the value distribution.
    Exact,
}

/// What a policy sees at a non-dominated, non-final box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionContext {
    pub horizon: usize,
    pub box_index: usize,
    pub nondominated_count: usize,
    pub value: f64,
    pub learned_percentile: f64,
    pub exact_percentile: f64,
}

pub trait StoppingPolicy {
    fn stop_probability(&self, ctx: &DecisionContext) -> f64;
}

/// A [`PolicyParams`] model reading one of the two percentile sources.
#[derive(Debug, Clone)]
pub struct ParametricPolicy {
    pub params: PolicyParams,
    pub source: PercentileSource,
}

impl ParametricPolicy {
    pub fn new(params: PolicyParams, source: PercentileSource, horizon: usize) -> Result<Self> {
        let params = params.resolve(horizon)?;
        Ok(ParametricPolicy { params, source })
    }
}

impl StoppingPolicy for ParametricPolicy {
    fn stop_probability(&self, ctx: &DecisionContext) -> f64 {
        let percentile = match self.source {
            PercentileSource::Learned => ctx.learned_percentile,
            PercentileSource::Exact => ctx.exact_percentile,
        };
        let point = DecisionPoint {
            box_index: ctx.box_index,
            nondominated_count: ctx.nondominated_count,
            percentile,
        };
        self.params.stop_probability_unchecked(ctx.horizon, &point)
    }
}

impl<P: StoppingPolicy + ?Sized> StoppingPolicy for &P {
    fn stop_probability(&self, ctx: &DecisionContext) -> f64 {
        (**self).stop_probability(ctx)
    }
}

impl<P: StoppingPolicy + ?Sized> StoppingPolicy for Box<P> {
    fn stop_probability(&self, ctx: &DecisionContext) -> f64 {
        (**self).stop_probability(ctx)
    }
}

/// Hidden box values of one game and how far it has been opened.
#[derive(Debug, Clone)]
pub struct GameState {
    values: Vec<f64>,
    opened: usize,
    history_max: f64,
}

impl GameState {
    pub fn deal(spec: &DistributionSpec, horizon: usize, rng: &mut Rng) -> Self {
        let values = (0..horizon).map(|_| spec.draw(rng)).collect();
        GameState {
            values,
            opened: 0,
            history_max: f64::NEG_INFINITY,
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        GameState {
            values,
            opened: 0,
            history_max: f64::NEG_INFINITY,
        }
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn opened(&self) -> usize {
        self.opened
    }

    pub fn history_max(&self) -> f64 {
        self.history_max
    }

    /// Boxes remaining while deciding on the most recently opened box.
    pub fn boxes_remaining(&self) -> usize {
        self.horizon() - self.opened + 1
    }

    /// Opens the next box; returns its value and whether it is dominated
    /// (no better than an earlier box of this game; ties count as dominated).
    pub fn open_next(&mut self) -> Option<(f64, bool)> {
        let x = *self.values.get(self.opened)?;
        self.opened += 1;
        let dominated = x <= self.history_max;
        if !dominated {
            self.history_max = x;
        }
        Some((x, dominated))
    }

    /// 1-based index of the maximum value.
    pub fn max_index(&self) -> usize {
        let mut best = 0;
        for (j, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = j;
            }
        }
        best + 1
    }
}

/// One decision with its context, as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub player_id: u64,
    pub game_number: u32,
    pub box_index: u32,
    pub nondominated_count: u32,
    pub box_value: f64,
    pub percentile: f64,
    #[serde(with = "bool_int")]
    pub stopped: bool,
    #[serde(with = "bool_int")]
    pub forced: bool,
}

impl DecisionRecord {
    pub fn point(&self) -> DecisionPoint {
        DecisionPoint {
            box_index: self.box_index as usize,
            nondominated_count: self.nondominated_count as usize,
            percentile: self.percentile,
        }
    }
}

pub(crate) mod bool_int {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(de::Error::custom(format!("expected 0 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    None,
    StoppedBeforeMax,
    StoppedAfterMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameOutcome {
    pub won: bool,
    pub error_type: ErrorType,
    pub stop_index: usize,
    pub max_index: usize,
    pub search_depth: usize,
}

impl GameOutcome {
    pub fn classify(stop_index: usize, max_index: usize) -> Self {
        let error_type = match stop_index.cmp(&max_index) {
            std::cmp::Ordering::Equal => ErrorType::None,
            std::cmp::Ordering::Less => ErrorType::StoppedBeforeMax,
            std::cmp::Ordering::Greater => ErrorType::StoppedAfterMax,
        };
        GameOutcome {
            won: error_type == ErrorType::None,
            error_type,
            stop_index,
            max_index,
            search_depth: stop_index,
        }
    }
}

/// Outcome row as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub player_id: u64,
    pub game_number: u32,
    #[serde(with = "bool_int")]
    pub won: bool,
    pub error_type: ErrorType,
    pub stop_index: u32,
    pub max_index: u32,
    pub depth: u32,
}

impl OutcomeRecord {
    pub fn new(player_id: u64, game_number: u32, outcome: &GameOutcome) -> Self {
        OutcomeRecord {
            player_id,
            game_number,
            won: outcome.won,
            error_type: outcome.error_type,
            stop_index: outcome.stop_index as u32,
            max_index: outcome.max_index as u32,
            depth: outcome.search_depth as u32,
        }
    }
}

fn sample_stop(p: f64, rng: &mut Rng) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random::<f64>() < p
    }
}

/// Plays one game. Every opened value is added to `memory`; a record is
/// emitted for each non-dominated box before the last and for the last box if
/// it is reached.
pub fn play_game<P: StoppingPolicy + ?Sized>(
    policy: &P,
    spec: &DistributionSpec,
    horizon: usize,
    memory: &mut PercentileMemory,
    rng: &mut Rng,
    player_id: u64,
    game_number: u32,
) -> Result<(GameOutcome, Vec<DecisionRecord>)> {
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut state = GameState::deal(spec, horizon, rng);
    let mut records = Vec::new();
    let mut nondominated = 0;
    while let Some((x, dominated)) = state.open_next() {
        memory.insert(x);
        let i = state.opened();
        if !dominated {
            nondominated += 1;
        }
        let forced = i == horizon;
        if dominated && !forced {
            continue;
        }
        let learned = memory.percentile_rank(x)?;
        let stopped = if forced {
            true
        } else {
            let ctx = DecisionContext {
                horizon,
                box_index: i,
                nondominated_count: nondominated,
                value: x,
                learned_percentile: learned,
                exact_percentile: spec.cdf(x),
            };
            let p = policy.stop_probability(&ctx);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::ContractViolation(format!(
                    "stop probability {p} at box {i}"
                )));
            }
            sample_stop(p, rng)
        };
        records.push(DecisionRecord {
            player_id,
            game_number,
            box_index: i as u32,
            nondominated_count: nondominated as u32,
            box_value: x,
            percentile: learned,
            stopped,
            forced,
        });
        if stopped {
            return Ok((GameOutcome::classify(i, state.max_index()), records));
        }
    }
    unreachable!("the last box always stops the game")
}

/// Win / error counts and depth moments for one game number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTally {
    pub games: u64,
    pub wins: u64,
    pub stopped_before_max: u64,
    pub stopped_after_max: u64,
    pub depth_sum: u64,
    pub depth_sq_sum: u64,
}

fn rate_se(count: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let r = count as f64 / n as f64;
    (r, (r * (1.0 - r) / n as f64).sqrt())
}

impl OutcomeTally {
    pub fn add(&mut self, outcome: &GameOutcome) {
        self.games += 1;
        match outcome.error_type {
            ErrorType::None => self.wins += 1,
            ErrorType::StoppedBeforeMax => self.stopped_before_max += 1,
            ErrorType::StoppedAfterMax => self.stopped_after_max += 1,
        }
        let d = outcome.search_depth as u64;
        self.depth_sum += d;
        self.depth_sq_sum += d * d;
    }

    pub fn merge(&mut self, other: &OutcomeTally) {
        self.games += other.games;
        self.wins += other.wins;
        self.stopped_before_max += other.stopped_before_max;
        self.stopped_after_max += other.stopped_after_max;
        self.depth_sum += other.depth_sum;
        self.depth_sq_sum += other.depth_sq_sum;
    }

    pub fn win_rate(&self) -> (f64, f64) {
        rate_se(self.wins, self.games)
    }

    pub fn early_rate(&self) -> (f64, f64) {
        rate_se(self.stopped_before_max, self.games)
    }

    pub fn late_rate(&self) -> (f64, f64) {
        rate_se(self.stopped_after_max, self.games)
    }

    pub fn mean_depth(&self) -> (f64, f64) {
        if self.games == 0 {
            return (f64::NAN, f64::NAN);
        }
        let n = self.games as f64;
        let mean = self.depth_sum as f64 / n;
        let var = if self.games > 1 {
            ((self.depth_sq_sum as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        (mean, (var / n).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CohortOptions {
    pub record_decisions: bool,
    pub record_outcomes: bool,
}

impl Default for CohortOptions {
    fn default() -> Self {
        CohortOptions {
            record_decisions: true,
            record_outcomes: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CohortRun {
    pub decisions: Vec<DecisionRecord>,
    pub outcomes: Vec<OutcomeRecord>,
    /// `tallies[g - 1]` aggregates game number `g` over all players.
    pub tallies: Vec<OutcomeTally>,
}

struct PlayerRun {
    decisions: Vec<DecisionRecord>,
    outcomes: Vec<OutcomeRecord>,
    tallies: Vec<OutcomeTally>,
}

/// Plays `games_per_player` consecutive games for each of `n_players`
/// players. Player `p` (0-based) gets a fresh policy from `factory(p)`, an
/// empty memory, and the random stream `(seed, Player, p)`; results are
/// concatenated in player order.
pub fn run_cohort<F, P>(
    factory: F,
    spec: &DistributionSpec,
    horizon: usize,
    n_players: usize,
    games_per_player: usize,
    seed: u64,
    options: CohortOptions,
) -> Result<CohortRun>
where
    F: Fn(u64) -> P + Sync,
    P: StoppingPolicy,
{
    if n_players == 0 || games_per_player == 0 {
        return Err(Error::InvalidArgument(
            "cohort needs at least one player and one game".into(),
        ));
    }
    let players: Vec<PlayerRun> = (0..n_players as u64)
        .into_par_iter()
        .map(|player_id| {
            let policy = factory(player_id);
            let mut rng = rng::stream(seed, Domain::Player, player_id);
            let mut memory = PercentileMemory::new();
            let mut run = PlayerRun {
                decisions: Vec::new(),
                outcomes: Vec::new(),
                tallies: vec![OutcomeTally::default(); games_per_player],
            };
            for g in 0..games_per_player {
                let game_number = g as u32 + 1;
                let (outcome, records) = play_game(
                    &policy,
                    spec,
                    horizon,
                    &mut memory,
                    &mut rng,
                    player_id,
                    game_number,
                )?;
                run.tallies[g].add(&outcome);
                if options.record_outcomes {
                    run.outcomes
                        .push(OutcomeRecord::new(player_id, game_number, &outcome));
                }
                if options.record_decisions {
                    run.decisions.extend(records);
                }
            }
            Ok(run)
        })
        .collect::<Result<_>>()?;

    let mut cohort = CohortRun {
        tallies: vec![OutcomeTally::default(); games_per_player],
        ..Default::default()
    };
    for run in players {
        for (total, t) in cohort.tallies.iter_mut().zip(&run.tallies) {
            total.merge(t);
        }
        cohort.decisions.extend(run.decisions);
        cohort.outcomes.extend(run.outcomes);
    }
    Ok(cohort)
}
