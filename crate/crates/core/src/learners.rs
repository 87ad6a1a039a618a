//! Step-driven bandit learners: the eager barrier learner (single player and
//! joint dynamics) and the projected spherical-SPSA baseline.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::Game;
use crate::geometry::{Barrier, BarrierKind, ProxProblem, ScalingMatrix};
use crate::sampling::{
    sample_sphere, spsa_spherical_round, FeasibilityBall, NoiseModel, RngStream, FEASIBILITY_TOL,
};

/// Step size `η_t` as a function of the round `t ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `η_t = eta` (fixed-horizon tuning).
    Constant { eta: f64 },
    /// `η_t = scale / √t`.
    InverseSqrt { scale: f64 },
    /// `η_t = 1 / (offset + coef·√t)`.
    ShiftedInverseSqrt { offset: f64, coef: f64 },
    /// Explicit values for `t = 1, 2, …`; the last one repeats.
    Sequence { values: Vec<f64> },
}

impl StepSchedule {
    pub fn eta(&self, t: u64) -> f64 {
        let tf = t as f64;
        match self {
            StepSchedule::Constant { eta } => *eta,
            StepSchedule::InverseSqrt { scale } => scale / tf.sqrt(),
            StepSchedule::ShiftedInverseSqrt { offset, coef } => 1.0 / (offset + coef * tf.sqrt()),
            StepSchedule::Sequence { values } => {
                let k = (t.max(1) - 1) as usize;
                values[k.min(values.len() - 1)]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            StepSchedule::Constant { eta } => *eta > 0.0 && eta.is_finite(),
            StepSchedule::InverseSqrt { scale } => *scale > 0.0 && scale.is_finite(),
            StepSchedule::ShiftedInverseSqrt { offset, coef } => {
                *offset >= 0.0 && *coef >= 0.0 && offset + coef > 0.0
            }
            StepSchedule::Sequence { values } => {
                !values.is_empty()
                    && values.iter().all(|v| *v > 0.0 && v.is_finite())
                    && values.windows(2).all(|w| w[1] <= w[0])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Param(format!("invalid step schedule {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierLearnerConfig {
    pub beta: f64,
    pub lambda: f64,
    pub schedule: StepSchedule,
    pub barrier: Barrier,
}

impl BarrierLearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::Param("beta and lambda must be positive".into()));
        }
        self.schedule.validate()
    }

    /// `η_t β (t+1) / λ`.
    pub fn quad_coef(&self, t: u64) -> f64 {
        self.schedule.eta(t) * self.beta * (t as f64 + 1.0) / self.lambda
    }
}

/// What the learner committed to in `act` and needs in `update`.
#[derive(Debug, Clone)]
struct Pending {
    scaling: ScalingMatrix,
    z: DVector<f64>,
}

/// One prox step, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub eta: f64,
    pub quad_coef: f64,
    pub payoff: f64,
    pub pivot: DVector<f64>,
    pub next: DVector<f64>,
    pub v_hat: DVector<f64>,
    /// `‖A v̂‖`.
    pub scaled_norm: f64,
    /// Newton decrement of the prox objective at the pivot, `η‖A v̂‖`.
    pub decrement: f64,
    /// `‖next - pivot‖` in the local norm of the prox Hessian at the pivot.
    pub step_norm: f64,
}

/// Single-player eager barrier learner.
#[derive(Debug, Clone)]
pub struct BarrierLearner {
    config: BarrierLearnerConfig,
    t: u64,
    pivot: DVector<f64>,
    pending: Option<Pending>,
    warnings: u64,
}

impl BarrierLearner {
    /// Starts at the minimizer of the barrier.
    pub fn new(config: BarrierLearnerConfig) -> Result<Self> {
        config.validate()?;
        let pivot = match config.barrier.kind() {
            BarrierKind::Zero { origin } => DVector::from_column_slice(origin),
            _ => config.barrier.analytic_center()?,
        };
        Ok(Self { config, t: 1, pivot, pending: None, warnings: 0 })
    }

    pub fn with_pivot(config: BarrierLearnerConfig, pivot: DVector<f64>) -> Result<Self> {
        config.validate()?;
        if !config.barrier.is_interior(&pivot) {
            return Err(Error::Boundary);
        }
        Ok(Self { config, t: 1, pivot, pending: None, warnings: 0 })
    }

    pub fn config(&self) -> &BarrierLearnerConfig {
        &self.config
    }

    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn pivot(&self) -> &DVector<f64> {
        &self.pivot
    }

    /// Rounds where `η_t n |û| > 1/2`.
    pub fn warnings(&self) -> u64 {
        self.warnings
    }

    pub fn scaling(&self) -> Result<ScalingMatrix> {
        ScalingMatrix::new(&self.config.barrier, &self.pivot, self.config.quad_coef(self.t))
    }

    pub fn act(&mut self, rng: &mut RngStream) -> Result<DVector<f64>> {
        let z = sample_sphere(rng, self.pivot.len());
        self.act_with(z)
    }

    /// `act` with a caller-chosen direction.
    pub fn act_with(&mut self, z: DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.pivot.len() {
            return Err(Error::Param("perturbation dimension mismatch".into()));
        }
        let scaling = self.scaling()?;
        let played = &self.pivot + scaling.matrix() * &z;
        if !self.config.barrier.contains(&played, FEASIBILITY_TOL) {
            return Err(Error::Feasibility { player: 0 });
        }
        self.pending = Some(Pending { scaling, z });
        Ok(played)
    }

    pub fn update(&mut self, payoff: f64) -> Result<StepRecord> {
        let Pending { scaling, z } = self
            .pending
            .take()
            .ok_or_else(|| Error::Param("update called without act".into()))?;
        let n = self.pivot.len() as f64;
        let eta = self.config.schedule.eta(self.t);
        if eta * n * payoff.abs() > 0.5 {
            self.warnings += 1;
            log::debug!("round {}: step-size safety condition violated", self.t);
        }
        let v_hat = scaling.inverse() * &z * (n * payoff);
        let quad_coef = scaling.regularization();
        let prox = ProxProblem::new(&self.config.barrier, self.pivot.clone(), v_hat.clone(), eta, quad_coef)?;
        let next = prox.solve()?;
        let scaled_norm = (scaling.matrix() * &v_hat).norm();
        let step_norm = (scaling.inverse() * (&next - &self.pivot)).norm();
        let record = StepRecord {
            t: self.t,
            eta,
            quad_coef,
            payoff,
            pivot: std::mem::replace(&mut self.pivot, next.clone()),
            next,
            v_hat,
            scaled_norm,
            decrement: eta * scaled_norm,
            step_norm,
        };
        self.t += 1;
        Ok(record)
    }
}

/// `Σ_i λ_i [D(p_i, x_i⁺) - D(p_i, x_i)] + (ηβ(t+1)/2) Σ_i [‖x_i⁺ - p_i‖² - ‖x_i - p_i‖²]
/// - 2η² Σ_i λ_i ‖A_i v̂_i‖² - η Σ_i λ_i ⟨v̂_i, x_i - p_i⟩`.
///
/// Nonpositive for every exact prox step whose decrement is at most 1/2.
pub fn descent_residual(
    configs: &[&BarrierLearnerConfig],
    records: &[StepRecord],
    reference: &[DVector<f64>],
) -> Result<f64> {
    let mut total = 0.0;
    for ((cfg, r), p) in configs.iter().zip(records).zip(reference) {
        let lambda = cfg.lambda;
        let half_quad = 0.5 * lambda * r.quad_coef;
        total += lambda * cfg.barrier.bregman_shift(p, &r.next, &r.pivot)?;
        total += half_quad * ((&r.next - p).norm_squared() - (&r.pivot - p).norm_squared());
        total -= 2.0 * r.eta * r.eta * lambda * r.scaled_norm * r.scaled_norm;
        total -= r.eta * lambda * r.v_hat.dot(&(&r.pivot - p));
    }
    Ok(total)
}

/// Played profile and pivots of one joint round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub played: Vec<DVector<f64>>,
    pub payoffs: Vec<f64>,
    pub records: Vec<StepRecord>,
}

/// Every player runs its own barrier learner; the game sees only the played
/// profile and each learner sees only its own scalar payoff.
#[derive(Debug, Clone)]
pub struct BarrierDynamics {
    learners: Vec<BarrierLearner>,
    rngs: Vec<RngStream>,
    noise: NoiseModel,
}

impl BarrierDynamics {
    pub fn new(learners: Vec<BarrierLearner>, rngs: Vec<RngStream>, noise: NoiseModel) -> Result<Self> {
        if learners.len() != rngs.len() {
            return Err(Error::Param("one stream per learner required".into()));
        }
        Ok(Self { learners, rngs, noise })
    }

    pub fn learners(&self) -> &[BarrierLearner] {
        &self.learners
    }

    pub fn pivots(&self) -> Vec<DVector<f64>> {
        self.learners.iter().map(|l| l.pivot().clone()).collect()
    }

    pub fn warnings(&self) -> u64 {
        self.learners.iter().map(|l| l.warnings()).sum()
    }

    pub fn round<G: Game + ?Sized>(&mut self, game: &G) -> Result<RoundOutcome> {
        let played = self
            .learners
            .iter_mut()
            .zip(self.rngs.iter_mut())
            .enumerate()
            .map(|(i, (l, rng))| {
                l.act(rng).map_err(|e| match e {
                    Error::Feasibility { .. } => Error::Feasibility { player: i },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let exact = game.payoffs(&played);
        let mut payoffs = Vec::with_capacity(exact.len());
        let mut records = Vec::with_capacity(exact.len());
        for ((l, rng), u) in self.learners.iter_mut().zip(self.rngs.iter_mut()).zip(exact) {
            let u = u + self.noise.sample(rng);
            payoffs.push(u);
            records.push(l.update(u)?);
        }
        Ok(RoundOutcome { played, payoffs, records })
    }
}

/// Baseline step size `γ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GammaSchedule {
    /// `γ_t = 1 / (coef·t)`.
    Harmonic { coef: f64 },
    /// `γ_t = 1 / (offset + coef·t)`.
    Shifted { offset: f64, coef: f64 },
}

impl GammaSchedule {
    pub fn gamma(&self, t: u64) -> f64 {
        let tf = t as f64;
        match self {
            GammaSchedule::Harmonic { coef } => 1.0 / (coef * tf),
            GammaSchedule::Shifted { offset, coef } => 1.0 / (offset + coef * tf),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkmConfig {
    pub balls: Vec<FeasibilityBall>,
    pub gamma: GammaSchedule,
    /// Upper bound on the exploration radius; `δ_t = min(cap, t^(-1/3))`.
    pub delta_cap: f64,
}

impl FkmConfig {
    /// Caps the radius at the smallest feasibility radius.
    pub fn new(balls: Vec<FeasibilityBall>, gamma: GammaSchedule) -> Self {
        let delta_cap = balls.iter().map(|b| b.radius).fold(f64::INFINITY, f64::min);
        Self { balls, gamma, delta_cap }
    }

    pub fn delta(&self, t: u64) -> f64 {
        (t as f64).powf(-1.0 / 3.0).min(self.delta_cap)
    }
}

/// Projected spherical-SPSA gradient ascent for every player.
#[derive(Debug, Clone)]
pub struct FkmDynamics {
    config: FkmConfig,
    pivots: Vec<DVector<f64>>,
    rngs: Vec<RngStream>,
    noise: NoiseModel,
    t: u64,
}

impl FkmDynamics {
    /// Players start at their anchors.
    pub fn new(config: FkmConfig, rngs: Vec<RngStream>, noise: NoiseModel) -> Result<Self> {
        if config.balls.len() != rngs.len() {
            return Err(Error::Param("one stream per player required".into()));
        }
        let pivots = config.balls.iter().map(|b| b.anchor.clone()).collect();
        Ok(Self { config, pivots, rngs, noise, t: 1 })
    }

    pub fn pivots(&self) -> &[DVector<f64>] {
        &self.pivots
    }

    pub fn round_index(&self) -> u64 {
        self.t
    }

    pub fn round<G: Game + ?Sized>(&mut self, game: &G) -> Result<RoundOutcome> {
        let delta = self.config.delta(self.t);
        let samples = spsa_spherical_round(
            game,
            &self.pivots,
            delta,
            &self.config.balls,
            &mut self.rngs,
            self.noise,
        )?;
        let gamma = self.config.gamma.gamma(self.t);
        let mut played = Vec::with_capacity(samples.len());
        let mut payoffs = Vec::with_capacity(samples.len());
        for (i, s) in samples.into_iter().enumerate() {
            let moved = &self.pivots[i] + &s.v_hat * gamma;
            self.pivots[i] = game.domain(i).project(&moved);
            played.push(s.played);
            payoffs.push(s.payoff);
        }
        self.t += 1;
        Ok(RoundOutcome { played, payoffs, records: Vec::new() })
    }
}
