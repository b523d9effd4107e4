use stoplab_core::distributions::{CalibratedSet, DistributionSpec, Label};
use stoplab_core::engine::{
    run_cohort, CohortOptions, DecisionContext, DecisionRecord, ParametricPolicy, PercentileSource,
    StoppingPolicy,
};
use stoplab_core::io::write_decisions;
use stoplab_core::policies::{optimal_policy_from_table, PolicyParams, STEP_SLOPE};
use stoplab_core::solver::{ClassicalTable, CriticalValueTable};

struct Constant(f64);

impl StoppingPolicy for Constant {
    fn stop_probability(&self, _: &DecisionContext) -> f64 {
        self.0
    }
}

fn medium() -> DistributionSpec {
    CalibratedSet::builtin().get(Label::Medium).unwrap().clone()
}

fn games(log: &[DecisionRecord]) -> Vec<&[DecisionRecord]> {
    log.chunk_by(|a, b| a.player_id == b.player_id && a.game_number == b.game_number)
        .collect()
}

#[test]
fn logged_boxes_are_running_maxima_and_games_end_on_a_stop() {
    for spec in &CalibratedSet::builtin().distributions {
        let run = run_cohort(
            |_| Constant(0.2),
            spec,
            7,
            200,
            5,
            3,
            CohortOptions::default(),
        )
        .unwrap();
        let games = games(&run.decisions);
        assert_eq!(games.len(), 1000);
        for game in games {
            let (last, before) = game.split_last().unwrap();
            assert!(last.stopped);
            assert!(before.iter().all(|r| !r.stopped && !r.forced));
            let mut best = f64::NEG_INFINITY;
            for (n, r) in game.iter().enumerate() {
                if r.forced {
                    assert_eq!(r.box_index, 7);
                    continue;
                }
                // an unforced decision only happens on a new running maximum
                assert!(r.box_value > best);
                assert_eq!(r.nondominated_count as usize, n + 1);
                best = r.box_value;
            }
        }
    }
}

#[test]
fn outcome_rates_partition() {
    let run = run_cohort(
        |_| Constant(0.4),
        &medium(),
        15,
        300,
        4,
        9,
        CohortOptions::default(),
    )
    .unwrap();
    for t in &run.tallies {
        assert_eq!(t.wins + t.stopped_before_max + t.stopped_after_max, t.games);
        let sum = t.win_rate().0 + t.early_rate().0 + t.late_rate().0;
        assert!((sum - 1.0).abs() < 1e-12);
    }
    assert_eq!(run.outcomes.len(), 1200);
}

fn log_bytes(seed: u64) -> Vec<u8> {
    let table = CriticalValueTable::compute(7).unwrap();
    let params = optimal_policy_from_table(&table, 7, 50.0).unwrap();
    let policy = ParametricPolicy::new(params, PercentileSource::Learned, 7).unwrap();
    let run = run_cohort(
        |_| policy.clone(),
        &medium(),
        7,
        400,
        6,
        seed,
        CohortOptions::default(),
    )
    .unwrap();
    let mut out = Vec::new();
    write_decisions(&mut out, &run.decisions).unwrap();
    out
}

#[test]
fn logs_are_byte_identical_across_runs_and_thread_counts() {
    let a = log_bytes(17);
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| log_bytes(17));
    let c = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| log_bytes(17));
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, log_bytes(18));
}

fn known_distribution_rate(
    horizon: usize,
    params: PolicyParams,
    players: usize,
    games: usize,
) -> (f64, f64) {
    let policy = ParametricPolicy::new(params, PercentileSource::Exact, horizon).unwrap();
    let opts = CohortOptions {
        record_decisions: false,
        record_outcomes: false,
    };
    let run = run_cohort(
        |_| policy.clone(),
        &medium(),
        horizon,
        players,
        games,
        23,
        opts,
    )
    .unwrap();
    let mut total = run.tallies[0];
    for t in &run.tallies[1..] {
        total.merge(t);
    }
    total.win_rate()
}

#[test]
fn known_distribution_agents_win_at_p0() {
    let table = CriticalValueTable::compute(15).unwrap();
    for horizon in [7, 15] {
        let steep = optimal_policy_from_table(&table, horizon, STEP_SLOPE).unwrap();
        for params in [steep, PolicyParams::lp_agent(horizon).unwrap()] {
            let (rate, se) = known_distribution_rate(horizon, params, 2_000, 50);
            assert!(
                (rate - table.p0(horizon)).abs() < 4.0 * se,
                "T={horizon}: {rate} vs {}",
                table.p0(horizon)
            );
        }
    }
}

#[test]
fn first_game_lp_agent_wins_like_the_classical_optimum() {
    // with an empty memory the learned percentile of the k-th running maximum
    // is informative only through ranks, so the first game is a rank-based game
    let classical = ClassicalTable::compute(7).unwrap();
    let policy = ParametricPolicy::new(
        PolicyParams::lp_agent(7).unwrap(),
        PercentileSource::Learned,
        7,
    )
    .unwrap();
    let opts = CohortOptions {
        record_decisions: false,
        record_outcomes: false,
    };
    let run = run_cohort(|_| policy.clone(), &medium(), 7, 40_000, 1, 4, opts).unwrap();
    let (rate, se) = run.tallies[0].win_rate();
    assert!((rate - classical.win_prob[6]).abs() < 4.0 * se, "{rate}");
}

#[test]
fn percentile_policies_ignore_monotone_value_transforms() {
    let table = CriticalValueTable::compute(7).unwrap();
    let params = optimal_policy_from_table(&table, 7, 30.0).unwrap();
    let policy = ParametricPolicy::new(params, PercentileSource::Learned, 7).unwrap();
    let set = CalibratedSet::builtin();
    let strip = |spec: &DistributionSpec| {
        let run = run_cohort(
            |_| policy.clone(),
            spec,
            7,
            200,
            5,
            31,
            CohortOptions::default(),
        )
        .unwrap();
        run.decisions
            .iter()
            .map(|r| {
                (
                    r.player_id,
                    r.game_number,
                    r.box_index,
                    r.percentile,
                    r.stopped,
                )
            })
            .collect::<Vec<_>>()
    };
    let base = strip(set.get(Label::Medium).unwrap());
    assert_eq!(base, strip(set.get(Label::Low).unwrap()));
    assert_eq!(base, strip(set.get(Label::High).unwrap()));
}
