//! Seeded random streams, uniform sphere draws and the single-shot gradient
//! estimators (spherical and ellipsoidal, single-agent and SPSA forms).

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::Game;
use crate::geometry::{Barrier, ScalingMatrix};

/// Slack used when checking that a played action lies in its set.
pub const FEASIBILITY_TOL: f64 = 1e-12;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A ChaCha stream keyed by `(seed, trial)` with the player (or any other
/// consumer id) selecting the ChaCha stream number. Streams never overlap,
/// so trials can run on any thread in any order.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    trial: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, trial: u64, stream: u64) -> Self {
        let key = splitmix64(seed ^ splitmix64(trial.wrapping_add(0x5EED)));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(stream);
        Self { seed, trial, stream, rng }
    }

    /// One stream per player for a given trial.
    pub fn per_player(seed: u64, trial: u64, players: usize) -> Vec<Self> {
        (0..players as u64).map(|p| Self::new(seed, trial, p)).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> (u64, u64) {
        (self.trial, self.stream)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Uniform draw from the unit sphere in `R^n` (normalized Gaussian).
pub fn sample_sphere<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm: f64 = g.norm();
        if norm >= 1e-12 {
            return g / norm;
        }
    }
}

/// Uniform draw from the closed unit ball in `R^n`.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    let dir = sample_sphere(rng, n);
    let u: f64 = rng.gen();
    dir * u.powf(1.0 / n as f64)
}

/// Additive feedback noise `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseModel {
    #[default]
    Exact,
    /// i.i.d. `Uniform[-σ, σ]`.
    Uniform { sigma: f64 },
}

impl NoiseModel {
    pub fn uniform(sigma: f64) -> Self {
        if sigma > 0.0 {
            NoiseModel::Uniform { sigma }
        } else {
            NoiseModel::Exact
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            NoiseModel::Exact => 0.0,
            NoiseModel::Uniform { sigma } => *sigma,
        }
    }

    /// Draws nothing from `rng` in the exact case.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Exact => 0.0,
            NoiseModel::Uniform { sigma } => rng.gen_range(-*sigma..=*sigma),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSample {
    pub z: DVector<f64>,
    pub played: DVector<f64>,
    pub payoff: f64,
    pub v_hat: DVector<f64>,
}

fn check_played(domain: &Barrier, played: &DVector<f64>, player: usize) -> Result<()> {
    if domain.contains(played, FEASIBILITY_TOL) {
        Ok(())
    } else {
        Err(Error::Feasibility { player })
    }
}

/// `v̂ = n f(x + Az) A⁻¹ z` with `z` uniform on the sphere.
pub fn ellipsoidal_estimate<F, R>(
    f: F,
    x: &DVector<f64>,
    scaling: &ScalingMatrix,
    domain: &Barrier,
    rng: &mut R,
) -> Result<EstimatorSample>
where
    F: Fn(&DVector<f64>) -> f64,
    R: Rng + ?Sized,
{
    let n = x.len();
    let z = sample_sphere(rng, n);
    let played = x + scaling.matrix() * &z;
    check_played(domain, &played, 0)?;
    let payoff = f(&played);
    let v_hat = scaling.inverse() * &z * (n as f64 * payoff);
    Ok(EstimatorSample { z, played, payoff, v_hat })
}

/// `v̂ = (n/δ) f(x + δz) z`.
pub fn spherical_estimate<F, R>(
    f: F,
    x: &DVector<f64>,
    delta: f64,
    domain: &Barrier,
    rng: &mut R,
) -> Result<EstimatorSample>
where
    F: Fn(&DVector<f64>) -> f64,
    R: Rng + ?Sized,
{
    if !(delta > 0.0) {
        return Err(Error::Param("spherical estimator needs delta > 0".into()));
    }
    let n = x.len();
    let z = sample_sphere(rng, n);
    let played = x + &z * delta;
    check_played(domain, &played, 0)?;
    let payoff = f(&played);
    let v_hat = &z * (n as f64 * payoff / delta);
    Ok(EstimatorSample { z, played, payoff, v_hat })
}

fn check_round_shapes<G: Game + ?Sized>(
    game: &G,
    pivots: &[DVector<f64>],
    rngs: &[RngStream],
) -> Result<()> {
    let n = game.num_players();
    if pivots.len() != n || rngs.len() != n {
        return Err(Error::Param(format!(
            "expected {n} pivots and streams, got {} and {}",
            pivots.len(),
            rngs.len()
        )));
    }
    Ok(())
}

/// One joint SPSA round with ellipsoidal perturbations: every player draws
/// its own direction, the perturbed profile is evaluated once, and each
/// player forms its estimate from its own (noisy) payoff only.
pub fn spsa_ellipsoidal_round<G: Game + ?Sized>(
    game: &G,
    pivots: &[DVector<f64>],
    scalings: &[ScalingMatrix],
    rngs: &mut [RngStream],
    noise: NoiseModel,
) -> Result<Vec<EstimatorSample>> {
    check_round_shapes(game, pivots, rngs)?;
    if scalings.len() != pivots.len() {
        return Err(Error::Param("one scaling matrix per player required".into()));
    }
    let mut zs = Vec::with_capacity(pivots.len());
    let mut played = Vec::with_capacity(pivots.len());
    for (i, ((x, a), rng)) in pivots.iter().zip(scalings).zip(rngs.iter_mut()).enumerate() {
        let z = sample_sphere(rng, x.len());
        let p = x + a.matrix() * &z;
        check_played(game.domain(i), &p, i)?;
        zs.push(z);
        played.push(p);
    }
    let payoffs = game.payoffs(&played);
    Ok(zs
        .into_iter()
        .zip(played)
        .zip(payoffs)
        .zip(scalings)
        .zip(rngs.iter_mut())
        .map(|((((z, p), u), a), rng)| {
            let payoff = u + noise.sample(rng);
            let v_hat = a.inverse() * &z * (z.len() as f64 * payoff);
            EstimatorSample { z, played: p, payoff, v_hat }
        })
        .collect())
}

/// Anchor and radius of a ball `B(p, r)` inside a player's set. An infinite
/// radius disables the feasibility adjustment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityBall {
    pub anchor: DVector<f64>,
    pub radius: f64,
}

/// The spherical SPSA round of the baseline: plays
/// `x̂ = x + δ(z - (x - p)/r)` and sets `v̂ = (n/δ) û z`.
pub fn spsa_spherical_round<G: Game + ?Sized>(
    game: &G,
    pivots: &[DVector<f64>],
    delta: f64,
    feasibility: &[FeasibilityBall],
    rngs: &mut [RngStream],
    noise: NoiseModel,
) -> Result<Vec<EstimatorSample>> {
    check_round_shapes(game, pivots, rngs)?;
    if feasibility.len() != pivots.len() {
        return Err(Error::Param("one feasibility ball per player required".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Param("delta must be positive".into()));
    }
    if feasibility.iter().any(|b| delta > b.radius) {
        return Err(Error::Param("delta exceeds a feasibility radius".into()));
    }
    let mut zs = Vec::with_capacity(pivots.len());
    let mut played = Vec::with_capacity(pivots.len());
    for (i, ((x, ball), rng)) in pivots.iter().zip(feasibility).zip(rngs.iter_mut()).enumerate() {
        let z = sample_sphere(rng, x.len());
        let mut p = x + &z * delta;
        if ball.radius.is_finite() {
            p.axpy(-delta / ball.radius, &(x - &ball.anchor), 1.0);
        }
        check_played(game.domain(i), &p, i)?;
        zs.push(z);
        played.push(p);
    }
    let payoffs = game.payoffs(&played);
    Ok(zs
        .into_iter()
        .zip(played)
        .zip(payoffs)
        .zip(rngs.iter_mut())
        .map(|(((z, p), u), rng)| {
            let payoff = u + noise.sample(rng);
            let v_hat = &z * (z.len() as f64 * payoff / delta);
            EstimatorSample { z, played: p, payoff, v_hat }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{cournot_build, CournotParams};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    #[test]
    fn sphere_draws_have_unit_norm() {
        let mut rng = RngStream::new(7, 0, 0);
        for n in 1..8 {
            for _ in 0..100 {
                assert!((sample_sphere(&mut rng, n).norm() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn one_dimensional_sphere_is_a_fair_sign() {
        let mut rng = RngStream::new(11, 0, 0);
        let mut sum = 0.0;
        for _ in 0..10_000 {
            let z = sample_sphere(&mut rng, 1)[0];
            assert!(z == 1.0 || z == -1.0);
            sum += z;
        }
        assert!((sum / 10_000.0).abs() <= 0.03);
    }

    #[test]
    fn sphere_second_moments() {
        let mut rng = RngStream::new(3, 1, 2);
        let draws = 100_000;
        let mut moments = [0.0; 3];
        for _ in 0..draws {
            let z = sample_sphere(&mut rng, 3);
            for k in 0..3 {
                moments[k] += z[k] * z[k];
            }
        }
        for m in moments {
            let m = m / draws as f64;
            assert!((m - 1.0 / 3.0).abs() <= 0.05 / 3.0, "second moment {m}");
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..5).map({
            let mut r = RngStream::new(42, 3, 1);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..5).map({
            let mut r = RngStream::new(42, 3, 1);
            move |_| r.next_u64()
        }).collect();
        let c: Vec<u64> = (0..5).map({
            let mut r = RngStream::new(42, 3, 2);
            move |_| r.next_u64()
        }).collect();
        let d: Vec<u64> = (0..5).map({
            let mut r = RngStream::new(42, 4, 1);
            move |_| r.next_u64()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn spherical_is_ellipsoidal_with_isotropic_scaling() {
        let domain = Barrier::zero(3).unwrap();
        let x = DVector::from_column_slice(&[0.1, -0.2, 0.3]);
        let f = |y: &DVector<f64>| y[0] * 2.0 - y[1] + 0.5 * y[2] * y[2];
        let delta = 0.25;
        let scaling = ScalingMatrix::from_hessian(DMatrix::zeros(3, 3), 1.0 / (delta * delta)).unwrap();
        let s = spherical_estimate(f, &x, delta, &domain, &mut RngStream::new(5, 0, 0)).unwrap();
        let e = ellipsoidal_estimate(f, &x, &scaling, &domain, &mut RngStream::new(5, 0, 0)).unwrap();
        assert_eq!(s.z, e.z);
        assert_relative_eq!(s.played, e.played, epsilon = 1e-14);
        assert_relative_eq!(s.v_hat, e.v_hat, epsilon = 1e-12);
    }

    #[test]
    fn spherical_magnitude_bound() {
        let domain = Barrier::zero(2).unwrap();
        let x = DVector::zeros(2);
        let mut rng = RngStream::new(1, 0, 0);
        for _ in 0..200 {
            let s = spherical_estimate(|_| -3.0, &x, 0.1, &domain, &mut rng).unwrap();
            assert_relative_eq!(s.v_hat.norm(), 2.0 * 3.0 / 0.1, epsilon = 1e-10);
        }
    }

    #[test]
    fn infeasible_perturbation_is_reported() {
        let domain = Barrier::interval(0.0, 1.0).unwrap();
        let x = DVector::from_element(1, 0.95);
        let err = spherical_estimate(|_| 1.0, &x, 0.2, &domain, &mut RngStream::new(0, 0, 0));
        // Either sign may be drawn; draw until the outward one shows up.
        let mut rng = RngStream::new(0, 0, 0);
        let mut saw_error = err.is_err();
        for _ in 0..50 {
            saw_error |= spherical_estimate(|_| 1.0, &x, 0.2, &domain, &mut rng).is_err();
        }
        assert!(saw_error);
    }

    fn duopoly() -> crate::games::CournotGame {
        cournot_build(CournotParams {
            a: 2.0,
            b: 1.0,
            capacities: vec![1.0, 1.0],
            costs: vec![0.0, 0.0],
        })
        .unwrap()
    }

    #[test]
    fn zero_payoff_gives_zero_estimates() {
        let game = crate::games::ConstantGame::new(vec![Barrier::interval(0.0, 1.0).unwrap(); 2], 0.0);
        let pivots = vec![DVector::from_element(1, 0.5), DVector::from_element(1, 0.4)];
        let scalings: Vec<_> = (0..2)
            .map(|_| ScalingMatrix::from_hessian(DMatrix::zeros(1, 1), 1e4).unwrap())
            .collect();
        let mut rngs = RngStream::per_player(1, 0, 2);
        let out = spsa_ellipsoidal_round(&game, &pivots, &scalings, &mut rngs, NoiseModel::Exact).unwrap();
        assert!(out.iter().all(|s| s.v_hat.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn ellipsoidal_round_uses_joint_payoffs() {
        let game = duopoly();
        let pivots = vec![DVector::from_element(1, 0.5), DVector::from_element(1, 0.4)];
        let scalings: Vec<_> = (0..2)
            .map(|_| ScalingMatrix::from_hessian(DMatrix::zeros(1, 1), 1e4).unwrap())
            .collect();
        let mut rngs = RngStream::per_player(1, 0, 2);
        let out = spsa_ellipsoidal_round(&game, &pivots, &scalings, &mut rngs, NoiseModel::Exact).unwrap();
        let total: f64 = out.iter().map(|o| o.played[0]).sum();
        for s in &out {
            assert_relative_eq!(s.payoff, s.played[0] * (2.0 - total), epsilon = 1e-14);
            assert_relative_eq!(s.v_hat[0], s.payoff * 100.0 * s.z[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn spherical_round_adjusts_toward_anchor() {
        let game = duopoly();
        let balls = vec![
            FeasibilityBall { anchor: DVector::from_element(1, 0.5), radius: 0.5 },
            FeasibilityBall { anchor: DVector::from_element(1, 0.5), radius: 0.5 },
        ];
        // At the anchor the played point is x + δz.
        let pivots = vec![DVector::from_element(1, 0.5), DVector::from_element(1, 1.0)];
        let mut rngs = RngStream::per_player(9, 0, 2);
        for _ in 0..50 {
            let out = spsa_spherical_round(&game, &pivots, 0.1, &balls, &mut rngs, NoiseModel::Exact).unwrap();
            assert_relative_eq!(out[0].played[0], 0.5 + 0.1 * out[0].z[0], epsilon = 1e-15);
            // Boundary pivot: 1 + 0.1(z - 1) stays in [0, 1].
            assert_relative_eq!(out[1].played[0], 1.0 + 0.1 * (out[1].z[0] - 1.0), epsilon = 1e-15);
            assert!(out[1].played[0] <= 1.0 && out[1].played[0] >= 0.0);
        }
    }

    #[test]
    fn spherical_round_constant_payoff_norm() {
        let zero = crate::games::ConstantGame::new(
            vec![Barrier::interval(0.0, 1.0).unwrap(), Barrier::budget_simplex(3, 1.0).unwrap()],
            2.5,
        );
        let balls = vec![
            FeasibilityBall { anchor: DVector::from_element(1, 0.5), radius: 0.5 },
            FeasibilityBall { anchor: DVector::from_element(3, 0.25), radius: 1.0 / 12.0 },
        ];
        let pivots = vec![DVector::from_element(1, 0.3), DVector::from_element(3, 0.2)];
        let mut rngs = RngStream::per_player(2, 0, 2);
        let out = spsa_spherical_round(&zero, &pivots, 0.05, &balls, &mut rngs, NoiseModel::Exact).unwrap();
        assert_relative_eq!(out[0].v_hat.norm(), 1.0 * 2.5 / 0.05, epsilon = 1e-10);
        assert_relative_eq!(out[1].v_hat.norm(), 3.0 * 2.5 / 0.05, epsilon = 1e-10);
    }

    #[test]
    fn uniform_noise_is_bounded() {
        let noise = NoiseModel::uniform(0.1);
        let mut rng = RngStream::new(0, 0, 0);
        let mut sum = 0.0;
        for _ in 0..10_000 {
            let xi = noise.sample(&mut rng);
            assert!(xi.abs() <= 0.1);
            sum += xi;
        }
        assert!((sum / 10_000.0).abs() < 0.005);
        assert_eq!(NoiseModel::uniform(0.0), NoiseModel::Exact);
    }
}
