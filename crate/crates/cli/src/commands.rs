use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use stoplab_core::analysis::{
    curve_rows, first_game_flags, infer_horizon, learning_curve_from_tallies, learning_curves,
    stopping_curve, Bins, Condition, GameBand, LearningPoint, CURVE_COLUMNS, LEARNING_COLUMNS,
};
use stoplab_core::distributions::{CalibratedSet, CalibrationConfig, DistributionSpec, Label};
use stoplab_core::engine::{
    run_cohort, CohortOptions, DecisionRecord, ParametricPolicy, PercentileSource,
};
use stoplab_core::inference::{
    compare_models, estimate_thresholds, sample_posterior, Dataset, EvidenceConfig,
    EvidenceEstimator, Grouping, PolicyModel, PriorSpec, SamplerConfig, SamplerDiagnostics,
    SplitSpec, CREDIBLE_LEVEL, EVIDENCE_COLUMNS, THRESHOLD_COLUMNS,
};
use stoplab_core::io::{
    read_decisions_file, read_outcomes_file, write_csv, write_decisions, write_matrix,
    write_outcomes,
};
use stoplab_core::policies::{optimal_policy_from_table, ModelKind, PolicyParams, STEP_SLOPE};
use stoplab_core::solver::{ClassicalTable, CriticalValueTable, DEFAULT_GRID_SIZE};
use stoplab_core::{Error, Result};

const MAX_BOXES: usize = 15;

fn with_path(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(with_path(path))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(with_path(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn check_boxes(boxes: usize) -> Result<usize> {
    if !(2..=MAX_BOXES).contains(&boxes) {
        return Err(Error::InvalidArgument(format!(
            "--boxes must be in 2..={MAX_BOXES}, got {boxes}"
        )));
    }
    Ok(boxes)
}

fn check_t_max(t_max: usize) -> Result<usize> {
    if !(1..=MAX_BOXES).contains(&t_max) {
        return Err(Error::InvalidArgument(format!(
            "--t-max must be in 1..={MAX_BOXES}, got {t_max}"
        )));
    }
    Ok(t_max)
}

/// Reads a decision log and settles the number of boxes.
fn load_log(path: &Path, boxes: Option<usize>) -> Result<(Vec<DecisionRecord>, usize)> {
    let log = read_decisions_file(path)?;
    let horizon = match boxes {
        Some(b) => b,
        None if log.is_empty() => return Err(Error::EmptyDataset),
        None => infer_horizon(&log).ok_or_else(|| {
            Error::InvalidArgument("no game reached its last box; pass --boxes".into())
        })?,
    };
    let horizon = check_boxes(horizon)?;
    if let Some(r) = log.iter().find(|r| r.box_index as usize > horizon) {
        return Err(Error::MalformedRecord(format!(
            "box {} in a log with {horizon} boxes (player {}, game {})",
            r.box_index, r.player_id, r.game_number
        )));
    }
    Ok((log, horizon))
}

fn resolve_dist(name: &str) -> Result<DistributionSpec> {
    if let Ok(label) = name.parse::<Label>() {
        if label != Label::Other {
            return CalibratedSet::builtin()
                .get(label)
                .cloned()
                .ok_or_else(|| Error::InvalidSpec(format!("no built-in `{name}` distribution")));
        }
    }
    let text = read_text(Path::new(name))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidSpec(format!("{name}: {e}")))
}

#[derive(Args)]
pub struct CriticalArgs {
    /// Largest number of boxes remaining.
    #[arg(long, default_value_t = 15)]
    t_max: usize,
    /// Initial quadrature grid size (refined until converged).
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid_size: usize,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct CriticalRow {
    t: usize,
    z: f64,
    p0: f64,
}

pub fn solve_critical(a: CriticalArgs) -> Result<()> {
    let t_max = check_t_max(a.t_max)?;
    let table = CriticalValueTable::compute_with_grid(t_max, a.grid_size)?;
    if let Some(change) = table.precision_warning {
        eprintln!("warning: grid refinement stopped at the size cap; last change {change:.3e}");
    }
    let rows: Vec<CriticalRow> = (1..=t_max)
        .map(|t| CriticalRow {
            t,
            z: table.z(t),
            p0: table.p0(t),
        })
        .collect();
    let mut out = sink(a.out.as_deref())?;
    write_csv(&mut out, "critical-values", &["t", "z", "p0"], &rows)?;
    out.flush()?;
    Ok(())
}

#[derive(Args)]
pub struct ClassicalArgs {
    #[arg(long, default_value_t = 15)]
    t_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ClassicalRow {
    #[serde(rename = "T")]
    horizon: usize,
    best_k: usize,
    p_win: f64,
}

pub fn solve_classical(a: ClassicalArgs) -> Result<()> {
    let t_max = check_t_max(a.t_max)?;
    let table = ClassicalTable::compute(t_max)?;
    let rows: Vec<ClassicalRow> = (0..t_max)
        .map(|i| ClassicalRow {
            horizon: i + 1,
            best_k: table.best_k[i],
            p_win: table.win_prob[i],
        })
        .collect();
    let mut out = sink(a.out.as_deref())?;
    write_csv(&mut out, "classical", &["T", "best_k", "p_win"], &rows)?;
    out.flush()?;
    Ok(())
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = CalibrationConfig::default().replicates)]
    replicates: usize,
    #[arg(long, default_value_t = CalibrationConfig::default().seed)]
    seed: u64,
    /// Relative tolerance on the matched gap.
    #[arg(long, default_value_t = CalibrationConfig::default().tolerance)]
    tolerance: f64,
    /// Output JSON (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn calibrate(a: CalibrateArgs) -> Result<()> {
    let config = CalibrationConfig {
        replicates: a.replicates,
        seed: a.seed,
        tolerance: a.tolerance,
    };
    let set = CalibratedSet::calibrate(&config)?;
    write_json(a.out.as_deref(), &set)
}

#[derive(Clone, Copy, ValueEnum)]
enum Percentiles {
    Learned,
    Exact,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// `lp`, `optimal`, or a JSON file with policy parameters.
    #[arg(long)]
    policy: String,
    #[arg(long, default_value_t = 7)]
    boxes: usize,
    #[arg(long, default_value_t = 1000)]
    players: usize,
    /// Games per player.
    #[arg(long, default_value_t = 20)]
    games: usize,
    #[arg(long)]
    seed: u64,
    /// `low`, `medium`, `high`, or a JSON distribution spec.
    #[arg(long, default_value = "medium")]
    dist: String,
    /// Percentile the policy sees (default: exact for `optimal`, learned otherwise).
    #[arg(long, value_enum)]
    percentiles: Option<Percentiles>,
    /// Sigmoid slope of the `optimal` policy.
    #[arg(long, default_value_t = STEP_SLOPE)]
    lambda: f64,
    /// Decision log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Per-game outcome CSV.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    /// Learning curve CSV (stdout if omitted).
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Stopping curves CSV for the default game bands.
    #[arg(long)]
    stopping: Option<PathBuf>,
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let horizon = check_boxes(a.boxes)?;
    let spec = resolve_dist(&a.dist)?;
    let (params, default_source) = match a.policy.as_str() {
        "lp" => (PolicyParams::lp_agent(horizon)?, Percentiles::Learned),
        "optimal" => {
            let table = CriticalValueTable::compute(horizon)?;
            (
                optimal_policy_from_table(&table, horizon, a.lambda)?,
                Percentiles::Exact,
            )
        }
        path => {
            let text = read_text(Path::new(path))?;
            let params: PolicyParams = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidArgument(format!("{path}: {e}")))?;
            (params, Percentiles::Learned)
        }
    };
    let source = match a.percentiles.unwrap_or(default_source) {
        Percentiles::Learned => PercentileSource::Learned,
        Percentiles::Exact => PercentileSource::Exact,
    };
    let policy = ParametricPolicy::new(params, source, horizon)?;
    let options = CohortOptions {
        record_decisions: a.log.is_some() || a.stopping.is_some(),
        record_outcomes: a.outcomes.is_some(),
    };
    let run = run_cohort(
        |_| policy.clone(),
        &spec,
        horizon,
        a.players,
        a.games,
        a.seed,
        options,
    )?;

    if let Some(path) = &a.log {
        let mut out = sink(Some(path))?;
        write_decisions(&mut out, &run.decisions)?;
        out.flush()?;
    }
    if let Some(path) = &a.outcomes {
        let mut out = sink(Some(path))?;
        write_outcomes(&mut out, &run.outcomes)?;
        out.flush()?;
    }
    if let Some(path) = &a.stopping {
        let table = CriticalValueTable::compute(horizon)?;
        let curves = GameBand::defaults()
            .into_iter()
            .map(|band| {
                stopping_curve(
                    &run.decisions,
                    &table,
                    horizon,
                    &Bins::default(),
                    band,
                    Condition::Any,
                    &Default::default(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = sink(Some(path))?;
        write_csv(
            &mut out,
            "stopping-curve",
            &CURVE_COLUMNS,
            &curve_rows(&curves),
        )?;
        out.flush()?;
    }
    write_learning(
        a.curve.as_deref(),
        &learning_curve_from_tallies(&run.tallies),
    )
}

fn write_learning(path: Option<&Path>, points: &[LearningPoint]) -> Result<()> {
    let mut out = sink(path)?;
    write_csv(&mut out, "learning-curve", &LEARNING_COLUMNS, points)?;
    out.flush()?;
    Ok(())
}

/// Sampler flags shared by `fit` and `compare`.
#[derive(Args)]
struct SamplerArgs {
    /// Total slice-sampler iterations, burn-in included.
    #[arg(long, default_value_t = SamplerConfig::default().draws)]
    draws: usize,
    #[arg(long, default_value_t = SamplerConfig::default().burn_in)]
    burn_in: usize,
    /// Prior mean of sigmoid slopes.
    #[arg(long, default_value_t = PriorSpec::default().slope_mean)]
    slope_mean: f64,
}

impl SamplerArgs {
    fn config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            draws: self.draws,
            burn_in: self.burn_in,
            ..SamplerConfig::default()
        }
        .with_seed(seed)
    }

    fn prior(&self) -> Result<PriorSpec> {
        if !(self.slope_mean.is_finite() && self.slope_mean > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "--slope-mean must be positive, got {}",
                self.slope_mean
            )));
        }
        Ok(PriorSpec {
            slope_mean: self.slope_mean,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    Pooled,
    ByGame,
}

impl From<GroupingArg> for Grouping {
    fn from(g: GroupingArg) -> Self {
        match g {
            GroupingArg::Pooled => Grouping::Pooled,
            GroupingArg::ByGame => Grouping::ByGameNumber,
        }
    }
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,
    /// Decision log CSV.
    #[arg(long)]
    data: PathBuf,
    /// Boxes per game (inferred from the log if omitted).
    #[arg(long)]
    boxes: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Only use games in this band, e.g. `1`, `2-4` or `5+`.
    #[arg(long)]
    games: Option<String>,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Posterior draws CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Posterior summary JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Per-box threshold estimates CSV (multiple_threshold only).
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Grouping for --thresholds.
    #[arg(long, value_enum, default_value = "pooled")]
    grouping: GroupingArg,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Serialize)]
struct ParameterSummary {
    name: String,
    mean: f64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct FitSummary {
    schema: &'static str,
    model: String,
    horizon: usize,
    decisions: usize,
    seed: u64,
    sampler: SamplerConfig,
    prior: PriorSpec,
    level: f64,
    parameters: Vec<ParameterSummary>,
    diagnostics: SamplerDiagnostics,
}

pub fn fit(a: FitArgs) -> Result<()> {
    let (mut log, horizon) = load_log(&a.data, a.boxes)?;
    if let Some(band) = &a.games {
        let band: GameBand = band.parse()?;
        log.retain(|r| band.contains(r.game_number));
    }
    let prior = a.sampler.prior()?;
    let sampler = a.sampler.config(a.seed);
    let model = PolicyModel::new(a.model, horizon)?;
    let data = Dataset::from_records(&log, horizon)?;
    let posterior = sample_posterior(&model, &data, &prior, &sampler)?;

    let mut out = sink(a.out.as_deref())?;
    write_matrix(
        &mut out,
        "posterior",
        &posterior.parameter_names,
        &posterior.draws,
    )?;
    out.flush()?;
    drop(out);

    if let Some(path) = &a.summary {
        let parameters = posterior
            .parameter_names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let (lower, upper) = posterior.credible_interval(j, CREDIBLE_LEVEL);
                ParameterSummary {
                    name: name.clone(),
                    mean: posterior.mean(j),
                    lower,
                    upper,
                }
            })
            .collect();
        let summary = FitSummary {
            schema: "stoplab.fit-summary.v1",
            model: posterior.model.clone(),
            horizon,
            decisions: data.len(),
            seed: a.seed,
            sampler,
            prior,
            level: CREDIBLE_LEVEL,
            parameters,
            diagnostics: posterior.diagnostics.clone(),
        };
        write_json(Some(path), &summary)?;
    }
    if let Some(path) = &a.thresholds {
        if a.model != ModelKind::MultipleThreshold {
            return Err(Error::InvalidArgument(
                "--thresholds needs --model multiple_threshold".into(),
            ));
        }
        let report = estimate_thresholds(&log, horizon, a.grouping.into(), &prior, &sampler)?;
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        let mut out = sink(Some(path))?;
        write_csv(&mut out, "thresholds", &THRESHOLD_COLUMNS, &report.rows)?;
        out.flush()?;
    }
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Direct,
    Bronze,
}

#[derive(Args)]
pub struct CompareArgs {
    /// `all` or a comma-separated list of models.
    #[arg(long, default_value = "all")]
    models: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    boxes: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "by-game")]
    grouping: GroupingArg,
    /// Number of random train/test splits.
    #[arg(long, default_value_t = SplitSpec::default().splits)]
    splits: usize,
    #[arg(long, default_value_t = SplitSpec::default().test_fraction)]
    test_fraction: f64,
    #[arg(long, value_enum, default_value = "direct")]
    estimator: EstimatorArg,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Evidence report JSON (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tidy evidence CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let (log, horizon) = load_log(&a.data, a.boxes)?;
    let models: Vec<ModelKind> = if a.models == "all" {
        ModelKind::BEHAVIORAL.to_vec()
    } else {
        a.models
            .split(',')
            .map(|m| m.trim().parse())
            .collect::<Result<_>>()?
    };
    let config = EvidenceConfig {
        splits: SplitSpec {
            test_fraction: a.test_fraction,
            splits: a.splits,
            seed: a.seed,
        },
        prior: a.sampler.prior()?,
        sampler: a.sampler.config(a.seed),
        estimator: match a.estimator {
            EstimatorArg::Direct => EvidenceEstimator::Direct,
            EstimatorArg::Bronze => EvidenceEstimator::Bronze,
        },
    };
    let report = compare_models(&models, &log, horizon, a.grouping.into(), &config)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &a.csv {
        let mut out = sink(Some(path))?;
        write_csv(&mut out, "evidence", &EVIDENCE_COLUMNS, &report.csv_rows())?;
        out.flush()?;
    }
    write_json(a.out.as_deref(), &report)
}

#[derive(Args)]
pub struct CurvesArgs {
    /// Decision log CSV.
    #[arg(long)]
    data: PathBuf,
    /// Outcome CSV, needed for won/lost conditions and learning curves.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    #[arg(long)]
    boxes: Option<usize>,
    #[arg(long, default_value_t = Bins::default().width)]
    bin_width: f64,
    /// Game bands, e.g. `1,2-4,5+`.
    #[arg(long, value_delimiter = ',', default_value = "1,2-4,5+")]
    bands: Vec<GameBand>,
    /// Conditions on the first game: any, won_first, lost_first,
    /// over_searched_first, under_searched_first.
    #[arg(long, value_delimiter = ',', default_value = "any")]
    conditions: Vec<Condition>,
    /// Stopping curve CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Learning curve CSV (needs --outcomes).
    #[arg(long)]
    learning: Option<PathBuf>,
    /// Only players with at least this many games in the learning curve.
    #[arg(long)]
    min_games: Option<usize>,
}

pub fn curves(a: CurvesArgs) -> Result<()> {
    let (log, horizon) = load_log(&a.data, a.boxes)?;
    if log.iter().all(|r| r.forced) {
        return Err(Error::EmptyDataset);
    }
    let outcomes = match &a.outcomes {
        Some(p) => read_outcomes_file(p)?,
        None => Vec::new(),
    };
    let table = CriticalValueTable::compute(horizon)?;
    let bins = Bins::new(a.bin_width)?;
    let flags = first_game_flags(&log, &outcomes, &table, horizon)?;
    let mut curves = Vec::new();
    for &condition in &a.conditions {
        for &band in &a.bands {
            curves.push(stopping_curve(
                &log, &table, horizon, &bins, band, condition, &flags,
            )?);
        }
    }
    let mut out = sink(a.out.as_deref())?;
    write_csv(
        &mut out,
        "stopping-curve",
        &CURVE_COLUMNS,
        &curve_rows(&curves),
    )?;
    out.flush()?;
    drop(out);
    if let Some(path) = &a.learning {
        if a.outcomes.is_none() {
            return Err(Error::InvalidArgument("--learning needs --outcomes".into()));
        }
        write_learning(Some(path), &learning_curves(&outcomes, a.min_games))?;
    }
    Ok(())
}
