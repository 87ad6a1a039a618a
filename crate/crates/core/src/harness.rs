//! Multi-trial experiment runner, regret experiments, rate fits, tables and
//! CSV/JSON output.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_ne_cournot_tol, solve_ne_logistic_tol, solve_ne_vi, NeSolution, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::games::{
    cournot_build, kelly_build, load_libsvm, logistic_build, profile_dist_sq, random_cournot,
    random_kelly, synthetic_dataset, CournotGame, CournotParams, Dataset, Game, KellyGame,
    KellyParams, LibsvmOptions, LogisticGame, LogisticGameParams,
};
use crate::geometry::Barrier;
use crate::learners::{
    descent_residual, BarrierDynamics, BarrierLearner, BarrierLearnerConfig, FkmConfig,
    FkmDynamics, GammaSchedule, StepSchedule,
};
use crate::sampling::{FeasibilityBall, NoiseModel, RngStream};

/// Slack allowed in the per-step descent inequality.
pub const DESCENT_SLACK: f64 = 1e-8;
const CHECKPOINT_RATIO: f64 = 1.25;
const MIN_FIT_POINTS: usize = 10;
const MIN_FIT_DECADES: f64 = 2.0;
/// Fitted slopes above this count as a stalled run.
const STALL_SLOPE: f64 = -0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Libsvm { path: PathBuf, dim: Option<usize> },
    Synthetic { samples: usize, dim: usize, seed: u64 },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Libsvm { path, dim } => {
                load_libsvm(path, &LibsvmOptions { dim: *dim, ..Default::default() })
            }
            DataSource::Synthetic { samples, dim, seed } => Ok(synthetic_dataset(*samples, *dim, *seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GameSpec {
    Cournot { params: CournotParams },
    Kelly { params: KellyParams },
    Logistic { data: DataSource, mu: f64 },
}

impl GameSpec {
    pub fn random_cournot(n: usize, a: f64, b: f64, seed: u64) -> Self {
        GameSpec::Cournot { params: random_cournot(n, a, b, seed) }
    }

    pub fn random_kelly(n: usize, s: usize, dbar: f64, seed: u64) -> Self {
        GameSpec::Kelly { params: random_kelly(n, s, dbar, seed) }
    }

    pub fn build(&self) -> Result<BuiltGame> {
        Ok(match self {
            GameSpec::Cournot { params } => BuiltGame::Cournot(cournot_build(params.clone())?),
            GameSpec::Kelly { params } => BuiltGame::Kelly(kelly_build(params.clone())?),
            GameSpec::Logistic { data, mu } => BuiltGame::Logistic(logistic_build(LogisticGameParams {
                dataset: data.load()?,
                mu: *mu,
            })?),
        })
    }
}

#[derive(Debug, Clone)]
pub enum BuiltGame {
    Cournot(CournotGame),
    Kelly(KellyGame),
    Logistic(LogisticGame),
}

impl BuiltGame {
    pub fn game(&self) -> &dyn Game {
        match self {
            BuiltGame::Cournot(g) => g,
            BuiltGame::Kelly(g) => g,
            BuiltGame::Logistic(g) => g,
        }
    }

    /// Reference equilibrium with the solver suited to the family.
    pub fn solve_ne(&self) -> Result<NeSolution> {
        self.solve_ne_tol(DEFAULT_TOL)
    }

    pub fn solve_ne_tol(&self, tol: f64) -> Result<NeSolution> {
        match self {
            BuiltGame::Cournot(g) => solve_ne_cournot_tol(g.params(), tol),
            BuiltGame::Kelly(g) => solve_ne_vi(g, tol),
            BuiltGame::Logistic(g) => solve_ne_logistic_tol(g, tol),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Barrier,
    Fkm,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Barrier => "barrier",
            Algorithm::Fkm => "fkm",
        }
    }
}

/// How the barrier learner's step sizes are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleChoice {
    /// The per-family experimental settings.
    Tuned,
    /// `η_t = 1 / (2 n L √t)` with `L = sup |u_i|`.
    Theory,
    /// `η_t = 1 / (2 n (L + σ) √t)`.
    TheoryNoisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub game: GameSpec,
    pub algorithm: Algorithm,
    pub schedule: ScheduleChoice,
    pub horizon: u64,
    pub trials: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(game: GameSpec, algorithm: Algorithm, horizon: u64, trials: usize, seed: u64) -> Self {
        Self {
            game,
            algorithm,
            schedule: ScheduleChoice::Tuned,
            horizon,
            trials,
            seed,
            noise_sigma: 0.0,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Param("horizon T must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Param("trials must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Param("noise sigma must be a finite number ≥ 0".into()));
        }
        Ok(())
    }
}

/// Rounds `⌈1.25^k⌉` up to `T`, plus `T` itself.
pub fn checkpoints(horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut x = 1.0f64;
    loop {
        let t = x.ceil() as u64;
        if t > horizon {
            break;
        }
        if out.last() != Some(&t) {
            out.push(t);
        }
        x *= CHECKPOINT_RATIO;
    }
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub trial: usize,
    pub t: u64,
    pub dist_sq_played: f64,
    pub dist_sq_pivot: f64,
    pub warnings: u64,
}

/// Per-step checks collected during barrier runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: u64,
    pub descent_violations: u64,
    /// Largest residual seen; `None` before the first step.
    pub max_descent_residual: Option<f64>,
    /// Steps whose prox decrement at the pivot was at most 1/2.
    pub local_steps: u64,
    /// Local steps longer than twice their decrement.
    pub local_step_violations: u64,
    pub warnings: u64,
}

impl Diagnostics {
    fn merge(&mut self, other: &Diagnostics) {
        self.steps += other.steps;
        self.descent_violations += other.descent_violations;
        self.max_descent_residual = match (self.max_descent_residual, other.max_descent_residual) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.local_steps += other.local_steps;
        self.local_step_violations += other.local_step_violations;
        self.warnings += other.warnings;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub game: GameSpec,
    pub algorithm: Algorithm,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub trials: usize,
    pub seed: u64,
    pub final_mean: f64,
    pub final_std: f64,
    pub slope: Option<f64>,
    pub runtime_seconds: f64,
    pub diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<TrajectoryRecord>,
    pub summary: Summary,
    pub equilibrium: NeSolution,
}

impl ExperimentResult {
    /// `dist_sq_played` at `T`, one value per trial.
    pub fn finals(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.t == self.summary.horizon)
            .map(|r| r.dist_sq_played)
            .collect()
    }
}

/// Barrier-learner settings for every player of `built`.
pub fn barrier_configs(
    built: &BuiltGame,
    schedule: ScheduleChoice,
    noise_sigma: f64,
) -> Result<Vec<BarrierLearnerConfig>> {
    let game = built.game();
    let n_players = game.num_players();
    let domains: Vec<Barrier> = (0..n_players).map(|i| game.domain(i).clone()).collect();
    let theory = |sigma: f64| -> Result<StepSchedule> {
        let bound = game.payoff_bound();
        if !bound.is_finite() {
            return Err(Error::Param("theory schedules need bounded payoffs".into()));
        }
        let n = game.max_dim() as f64;
        Ok(StepSchedule::InverseSqrt { scale: 1.0 / (2.0 * n * (bound + sigma)) })
    };
    let uniform = |beta: f64, weights: &dyn Fn(usize) -> f64, schedule: StepSchedule| {
        domains
            .iter()
            .enumerate()
            .map(|(i, d)| BarrierLearnerConfig {
                beta,
                lambda: weights(i),
                schedule: schedule.clone(),
                barrier: d.clone(),
            })
            .collect::<Vec<_>>()
    };
    let configs = match (schedule, built) {
        (ScheduleChoice::Tuned, BuiltGame::Cournot(g)) => uniform(
            g.params().b,
            &|_| 1.0,
            StepSchedule::InverseSqrt { scale: 1.0 / 20.0 },
        ),
        (ScheduleChoice::Tuned, BuiltGame::Kelly(g)) => {
            let p = g.params();
            let ratio = p
                .entry
                .iter()
                .zip(&p.quantities)
                .map(|(d, q)| d / q)
                .fold(f64::INFINITY, f64::min);
            let size = (p.num_players() * p.num_resources()) as f64;
            let scale = 1.0 / (2.0 * (size * (1.0 + ratio)).sqrt());
            uniform(g.modulus(), &|i| 1.0 / p.gains[i], StepSchedule::InverseSqrt { scale })
        }
        (ScheduleChoice::Tuned, BuiltGame::Logistic(g)) => {
            let two_mu = 2.0 * g.mu();
            let coef = 2.0 * (g.dim() as f64).sqrt();
            uniform(
                two_mu,
                &|_| two_mu,
                StepSchedule::ShiftedInverseSqrt { offset: g.smoothness(), coef },
            )
        }
        (ScheduleChoice::Theory, _) => uniform(game.modulus(), &|i| game.weight(i), theory(0.0)?),
        (ScheduleChoice::TheoryNoisy, _) => {
            uniform(game.modulus(), &|i| game.weight(i), theory(noise_sigma)?)
        }
    };
    Ok(configs)
}

/// Baseline settings for every player of `built`.
pub fn fkm_config(built: &BuiltGame) -> FkmConfig {
    match built {
        BuiltGame::Cournot(g) => {
            let balls = g
                .params()
                .capacities
                .iter()
                .map(|c| FeasibilityBall { anchor: DVector::from_element(1, c / 2.0), radius: c / 2.0 })
                .collect();
            FkmConfig::new(balls, GammaSchedule::Harmonic { coef: 5.0 * g.params().b })
        }
        BuiltGame::Kelly(g) => {
            let p = g.params();
            let s = p.num_resources() as f64;
            // The barycenter of {x ≥ 0, Σx ≤ B} is at distance B/((S+1)√S)
            // from the budget facet, so the ball B(B/(S+1)·1, B/(S(S+1)))
            // fits inside.
            let balls = p
                .budgets
                .iter()
                .map(|b| FeasibilityBall {
                    anchor: DVector::from_element(p.num_resources(), b / (s + 1.0)),
                    radius: b / (s * (s + 1.0)),
                })
                .collect();
            FkmConfig::new(balls, GammaSchedule::Harmonic { coef: 5.0 * g.modulus() })
        }
        BuiltGame::Logistic(g) => {
            let balls = (0..g.dim())
                .map(|_| FeasibilityBall { anchor: DVector::zeros(1), radius: f64::INFINITY })
                .collect();
            FkmConfig::new(balls, GammaSchedule::Shifted { offset: g.smoothness(), coef: 10.0 })
        }
    }
}

enum Dynamics {
    Barrier(BarrierDynamics, Vec<BarrierLearnerConfig>),
    Fkm(FkmDynamics),
}

fn run_trial(
    cfg: &ExperimentConfig,
    built: &BuiltGame,
    x_star: &[DVector<f64>],
    trial: usize,
) -> Result<(Vec<TrajectoryRecord>, Diagnostics)> {
    let game = built.game();
    let n = game.num_players();
    let rngs = RngStream::per_player(cfg.seed, trial as u64, n);
    let noise = NoiseModel::uniform(cfg.noise_sigma);
    let mut dynamics = match cfg.algorithm {
        Algorithm::Barrier => {
            let configs = barrier_configs(built, cfg.schedule, cfg.noise_sigma)?;
            let learners = configs
                .iter()
                .cloned()
                .map(BarrierLearner::new)
                .collect::<Result<Vec<_>>>()?;
            Dynamics::Barrier(BarrierDynamics::new(learners, rngs, noise)?, configs)
        }
        Algorithm::Fkm => Dynamics::Fkm(FkmDynamics::new(fkm_config(built), rngs, noise)?),
    };
    let marks = checkpoints(cfg.horizon);
    let mut next_mark = 0;
    let mut records = Vec::with_capacity(marks.len());
    let mut diag = Diagnostics::default();

    for t in 1..=cfg.horizon {
        let annotate = |e: Error| e.at(trial, t);
        let (outcome, pivots, warnings) = match &mut dynamics {
            Dynamics::Barrier(d, configs) => {
                let out = d.round(game).map_err(annotate)?;
                let refs: Vec<&BarrierLearnerConfig> = configs.iter().collect();
                let residual = descent_residual(&refs, &out.records, x_star).map_err(annotate)?;
                diag.steps += 1;
                diag.max_descent_residual = Some(diag.max_descent_residual.map_or(residual, |m| m.max(residual)));
                if residual > DESCENT_SLACK {
                    diag.descent_violations += 1;
                }
                for r in &out.records {
                    if r.decrement <= 0.5 {
                        diag.local_steps += 1;
                        if r.step_norm > 2.0 * r.decrement + 1e-12 {
                            diag.local_step_violations += 1;
                        }
                    }
                }
                let pivots: Vec<_> = out.records.iter().map(|r| r.pivot.clone()).collect();
                let w = d.warnings();
                (out, pivots, w)
            }
            Dynamics::Fkm(d) => {
                let pivots = d.pivots().to_vec();
                (d.round(game).map_err(annotate)?, pivots, 0)
            }
        };
        if next_mark < marks.len() && marks[next_mark] == t {
            records.push(TrajectoryRecord {
                trial,
                t,
                dist_sq_played: profile_dist_sq(&outcome.played, x_star),
                dist_sq_pivot: profile_dist_sq(&pivots, x_star),
                warnings,
            });
            next_mark += 1;
        }
    }
    if let Dynamics::Barrier(d, _) = &dynamics {
        diag.warnings = d.warnings();
    }
    Ok((records, diag))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn with_workers<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Param(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let started = Instant::now();
    let built = cfg.game.build()?;
    let equilibrium = built.solve_ne()?;
    let per_trial = with_workers(cfg.workers, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let out = run_trial(cfg, &built, &equilibrium.x_star, trial);
                if out.is_ok() {
                    log::info!("trial {trial} finished");
                }
                out
            })
            .collect::<Vec<_>>()
    })?;
    let mut records = Vec::new();
    let mut diag = Diagnostics::default();
    for out in per_trial {
        let (r, d) = out?;
        records.extend(r);
        diag.merge(&d);
    }
    let finals: Vec<f64> = records
        .iter()
        .filter(|r| r.t == cfg.horizon)
        .map(|r| r.dist_sq_played)
        .collect();
    let (final_mean, final_std) = mean_std(&finals);
    let slope = fit_rate(&records).ok().map(|f| f.slope);
    let summary = Summary {
        game: cfg.game.clone(),
        algorithm: cfg.algorithm,
        horizon: cfg.horizon,
        trials: cfg.trials,
        seed: cfg.seed,
        final_mean,
        final_std,
        slope,
        runtime_seconds: started.elapsed().as_secs_f64(),
        diagnostics: (cfg.algorithm == Algorithm::Barrier).then_some(diag),
    };
    Ok(ExperimentResult { records, summary, equilibrium })
}

/// Mean of a metric over trials at each checkpoint, sorted by round.
pub fn mean_curve(records: &[TrajectoryRecord], metric: fn(&TrajectoryRecord) -> f64) -> Vec<(u64, f64)> {
    let mut by_t: std::collections::BTreeMap<u64, (f64, usize)> = Default::default();
    for r in records {
        let e = by_t.entry(r.t).or_insert((0.0, 0));
        e.0 += metric(r);
        e.1 += 1;
    }
    by_t.into_iter().map(|(t, (s, k))| (t, s / k as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
    pub stalled: bool,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData("need two positive points for a log-log fit".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Fits the decay of mean `dist_sq_played` over the tail half of the
/// checkpoints.
pub fn fit_rate(records: &[TrajectoryRecord]) -> Result<RateFit> {
    let curve = mean_curve(records, |r| r.dist_sq_played);
    if curve.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} checkpoints, need {MIN_FIT_POINTS}",
            curve.len()
        )));
    }
    let span = (curve[curve.len() - 1].0 as f64 / curve[0].0 as f64).log10();
    if span < MIN_FIT_DECADES {
        return Err(Error::InsufficientData(format!("checkpoints span {span:.2} decades, need 2")));
    }
    let tail: Vec<(f64, f64)> = curve[curve.len() / 2..].iter().map(|(t, y)| (*t as f64, *y)).collect();
    let (slope, intercept) = loglog_slope(&tail)?;
    Ok(RateFit { slope, intercept, points: tail.len(), stalled: slope > STALL_SLOPE })
}

pub fn write_records_csv<W: Write>(writer: W, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(["trial", "t", "dist_sq_played", "dist_sq_pivot", "warnings"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<TrajectoryRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_summary_json<W: Write>(writer: W, summary: &Summary) -> Result<()> {
    serde_json::to_writer_pretty(writer, summary)?;
    Ok(())
}

/// Oblivious adversary over `f_t(x) = -(β/2)‖x - θ_t‖²` on `[0, 1]^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Adversary {
    Constant { theta: Vec<f64> },
    /// `θ_t` i.i.d. uniform on `[low, high]^n`.
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegretSchedule {
    /// `η = 1 / (2 n L √T)`.
    FixedHorizon,
    /// `η_t = 1 / (2 n L √t)`.
    Anytime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretConfig {
    pub dim: usize,
    pub beta: f64,
    pub adversary: Adversary,
    pub horizons: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    pub schedule: RegretSchedule,
    pub workers: usize,
}

impl RegretConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !(self.beta > 0.0) || self.trials == 0 || self.horizons.is_empty() {
            return Err(Error::Param("regret runs need dim ≥ 1, beta > 0, trials ≥ 1 and horizons".into()));
        }
        if self.horizons.contains(&0) {
            return Err(Error::Param("horizons must be positive".into()));
        }
        match &self.adversary {
            Adversary::Constant { theta } if theta.len() != self.dim => {
                Err(Error::Param("theta dimension mismatch".into()))
            }
            Adversary::Uniform { low, high } if !(0.0 <= *low && low <= high && *high <= 1.0) => {
                Err(Error::Param("uniform adversary needs 0 ≤ low ≤ high ≤ 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// `sup |f_t|` over the unit box: `(β/2)·n`.
    pub fn payoff_bound(&self) -> f64 {
        0.5 * self.beta * self.dim as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub horizon: u64,
    pub trial: usize,
    /// `Σ_t f_t(x^t)` at the pivots.
    pub realized: f64,
    /// `Σ_t f_t(x̂^t)` at the played points.
    pub realized_played: f64,
    pub best: f64,
    pub best_action: Vec<f64>,
    /// `best - realized`.
    pub regret: f64,
    /// `best - realized_played`, which also pays for exploration.
    pub regret_played: f64,
}

fn quadratic_payoff(beta: f64, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    -0.5 * beta * (x - theta).norm_squared()
}

/// The maximizer of `Σ_t f_t` over the box: the clipped mean of `θ_t`.
pub fn best_fixed_action(thetas: &[DVector<f64>]) -> DVector<f64> {
    let n = thetas[0].len();
    let mean = thetas.iter().fold(DVector::zeros(n), |acc, th| acc + th) / thetas.len() as f64;
    mean.map(|v| v.clamp(0.0, 1.0))
}

fn regret_trial(cfg: &RegretConfig, horizon: u64, trial: usize) -> Result<RegretRecord> {
    let n = cfg.dim;
    let mut adv_rng = RngStream::new(cfg.seed, trial as u64, u64::MAX - horizon);
    let thetas: Vec<DVector<f64>> = (0..horizon)
        .map(|_| match &cfg.adversary {
            Adversary::Constant { theta } => DVector::from_column_slice(theta),
            Adversary::Uniform { low, high } => {
                DVector::from_fn(n, |_, _| low + (high - low) * adv_rng.gen::<f64>())
            }
        })
        .collect();
    let scale = 1.0 / (2.0 * n as f64 * cfg.payoff_bound());
    let schedule = match cfg.schedule {
        RegretSchedule::FixedHorizon => StepSchedule::Constant { eta: scale / (horizon as f64).sqrt() },
        RegretSchedule::Anytime => StepSchedule::InverseSqrt { scale },
    };
    let barrier = Barrier::cube(vec![0.0; n], vec![1.0; n])?;
    let mut learner = BarrierLearner::new(BarrierLearnerConfig { beta: cfg.beta, lambda: 1.0, schedule, barrier })?;
    let mut rng = RngStream::new(cfg.seed, trial as u64, horizon);
    let (mut realized, mut realized_played) = (0.0, 0.0);
    for (t, theta) in thetas.iter().enumerate() {
        realized += quadratic_payoff(cfg.beta, learner.pivot(), theta);
        let x = learner.act(&mut rng).map_err(|e| e.at(trial, t as u64 + 1))?;
        let u = quadratic_payoff(cfg.beta, &x, theta);
        realized_played += u;
        learner.update(u).map_err(|e| e.at(trial, t as u64 + 1))?;
    }
    let best_action = best_fixed_action(&thetas);
    let best: f64 = thetas.iter().map(|th| quadratic_payoff(cfg.beta, &best_action, th)).sum();
    Ok(RegretRecord {
        horizon,
        trial,
        realized,
        realized_played,
        best,
        best_action: best_action.iter().copied().collect(),
        regret: best - realized,
        regret_played: best - realized_played,
    })
}

pub fn run_regret_experiment(cfg: &RegretConfig) -> Result<Vec<RegretRecord>> {
    cfg.validate()?;
    let jobs: Vec<(u64, usize)> = cfg
        .horizons
        .iter()
        .flat_map(|h| (0..cfg.trials).map(move |k| (*h, k)))
        .collect();
    with_workers(cfg.workers, || {
        jobs.par_iter()
            .map(|(h, k)| regret_trial(cfg, *h, *k))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Mean and sample standard deviation of regret per horizon.
pub fn regret_by_horizon(records: &[RegretRecord]) -> Vec<(u64, f64, f64)> {
    let mut horizons: Vec<u64> = records.iter().map(|r| r.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    horizons
        .into_iter()
        .map(|h| {
            let v: Vec<f64> = records.iter().filter(|r| r.horizon == h).map(|r| r.regret).collect();
            let (m, s) = mean_std(&v);
            (h, m, s)
        })
        .collect()
}

/// Scientific notation with two significant digits and a two-digit
/// exponent, e.g. `1.3e-03`.
pub fn sci(x: f64) -> String {
    if x == 0.0 {
        return "0.0e+00".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.1e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRuns {
    /// Parameter tuple identifying the row, e.g. `(N, a, b)`.
    pub key: Vec<f64>,
    pub algorithm: Algorithm,
    pub horizon: u64,
    pub finals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub key: Vec<f64>,
    /// `(mean, std)` per column.
    pub cells: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub key_names: Vec<String>,
    pub columns: Vec<Algorithm>,
    pub rows: Vec<TableRow>,
}

fn fmt_key(v: f64) -> String {
    format!("{v}")
}

impl Table {
    pub fn cell_text(cell: (f64, f64)) -> String {
        format!("{} ± {}", sci(cell.0), sci(cell.1))
    }

    pub fn to_text(&self) -> String {
        let mut header: Vec<String> = self.key_names.clone();
        header.extend(self.columns.iter().map(|a| a.name().to_string()));
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                r.key
                    .iter()
                    .map(|k| fmt_key(*k))
                    .chain(r.cells.iter().map(|c| Self::cell_text(*c)))
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|j| {
                body.iter()
                    .map(|row| row[j].chars().count())
                    .chain([header[j].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&header).chain(body.iter()) {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header = self.key_names.clone();
        for a in &self.columns {
            header.push(format!("{}_mean", a.name()));
            header.push(format!("{}_std", a.name()));
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.key.iter().map(|k| fmt_key(*k)).collect();
            for (m, s) in &r.cells {
                rec.push(sci(*m));
                rec.push(sci(*s));
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Groups per-cell runs into rows (in first-seen key order) with one
/// `mean ± std` column per algorithm.
pub fn aggregate_table(key_names: &[&str], runs: &[CellRuns]) -> Result<Table> {
    if runs.is_empty() {
        return Err(Error::MissingCell("no cells to aggregate".into()));
    }
    let horizon = runs[0].horizon;
    let trials = runs[0].finals.len();
    if runs.iter().any(|r| r.horizon != horizon || r.finals.len() != trials) {
        return Err(Error::Param("all cells must share T and the trial count".into()));
    }
    if trials == 0 {
        return Err(Error::MissingCell("cells have no trials".into()));
    }
    let mut columns: Vec<Algorithm> = Vec::new();
    let mut keys: Vec<Vec<f64>> = Vec::new();
    for r in runs {
        if !columns.contains(&r.algorithm) {
            columns.push(r.algorithm);
        }
        if !keys.contains(&r.key) {
            keys.push(r.key.clone());
        }
    }
    columns.sort_by_key(|a| *a as u8);
    let rows = keys
        .into_iter()
        .map(|key| {
            let cells = columns
                .iter()
                .map(|a| {
                    runs.iter()
                        .find(|r| r.key == key && r.algorithm == *a)
                        .map(|r| mean_std(&r.finals))
                        .ok_or_else(|| Error::MissingCell(format!("{key:?} / {}", a.name())))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TableRow { key, cells })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        key_names: key_names.iter().map(|s| s.to_string()).collect(),
        columns,
        rows,
    })
}

/// `(N, a, b)` rows of the Cournot grid.
pub fn cournot_grid() -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    for n in [10, 20, 50, 100] {
        for a in [10.0, 20.0] {
            for b in [0.05, 0.1] {
                out.push((n, a, b));
            }
        }
    }
    out
}

/// `(N, S, d̄)` rows of the Kelly grid.
pub fn kelly_grid() -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for n in [10, 20, 50, 100] {
        for s in [2, 5] {
            for d in [0.5, 1.0] {
                out.push((n, s, d));
            }
        }
    }
    out
}
