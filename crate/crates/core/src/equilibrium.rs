//! Euclidean projections and high-accuracy reference equilibrium solvers.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{Game, LogisticGame, CournotParams};
use crate::geometry::{Barrier, BarrierKind};
use crate::sampling::{sample_ball, RngStream};

pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_ITER: usize = 2_000_000;
/// Safety factor applied to the sampled Lipschitz estimate.
const LIPSCHITZ_SAFETY: f64 = 1.5;
const LIPSCHITZ_SAMPLES: usize = 200;

pub fn project_box(y: &DVector<f64>, lower: &[f64], upper: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        y.len(),
        y.iter().zip(lower).zip(upper).map(|((v, lo), hi)| v.clamp(*lo, *hi)),
    )
}

/// Projection onto `{x ≥ 0, Σx ≤ B}`.
pub fn project_budget_simplex(y: &DVector<f64>, budget: f64) -> DVector<f64> {
    let clipped = y.map(|v| v.max(0.0));
    if clipped.sum() <= budget {
        return clipped;
    }
    // Budget binds: find τ with Σ max(y - τ, 0) = B.
    let mut sorted: Vec<f64> = y.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - budget) / (k + 1) as f64;
        if *v > candidate {
            tau = candidate;
        } else {
            break;
        }
    }
    y.map(|v| (v - tau).max(0.0))
}

pub fn project_ball(y: &DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = y.norm();
    if norm <= radius {
        y.clone()
    } else {
        y * (radius / norm)
    }
}

pub fn project_profile<G: Game + ?Sized>(game: &G, profile: &[DVector<f64>]) -> Vec<DVector<f64>> {
    profile
        .iter()
        .enumerate()
        .map(|(i, x)| game.domain(i).project(x))
        .collect()
}

/// Draw a point of the closed feasible set. Unconstrained domains use a
/// standard Gaussian scaled by `spread` around the origin.
pub fn sample_feasible<R: Rng + ?Sized>(barrier: &Barrier, spread: f64, rng: &mut R) -> DVector<f64> {
    let n = barrier.dim();
    match barrier.kind() {
        BarrierKind::Box { lower, upper } => {
            DVector::from_fn(n, |k, _| lower[k] + (upper[k] - lower[k]) * rng.gen::<f64>())
        }
        BarrierKind::BudgetSimplex { budget } => {
            // Uniform on the simplex: normalized exponentials with one slack.
            let e: Vec<f64> = (0..=n).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = e.iter().sum();
            DVector::from_fn(n, |k, _| budget * e[k] / total)
        }
        BarrierKind::Ball { radius } => sample_ball(rng, n) * *radius,
        BarrierKind::Zero { origin } => DVector::from_fn(n, |k, _| {
            origin[k] + spread * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    ProjectedGradient,
    OperatorExtrapolation,
    AcceleratedGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeSolution {
    pub x_star: Vec<DVector<f64>>,
    pub residual: f64,
    pub solver: Solver,
    pub iterations: usize,
}

impl NeSolution {
    pub fn flat(&self) -> Vec<f64> {
        self.x_star.iter().flat_map(|x| x.iter().copied()).collect()
    }
}

/// `‖x - Π_X(x + v(x))‖` over the joint profile.
pub fn natural_residual<G: Game + ?Sized>(game: &G, profile: &[DVector<f64>]) -> f64 {
    let v = game.gradients(profile);
    profile
        .iter()
        .zip(&v)
        .enumerate()
        .map(|(i, (x, g))| (x - game.domain(i).project(&(x + g))).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Largest sampled `⟨v_i(x*), x_i - x*_i⟩` over unilateral deviations.
/// Nonpositive (up to rounding) exactly at a Nash equilibrium.
pub fn vi_violation<G: Game + ?Sized, R: Rng + ?Sized>(
    game: &G,
    x_star: &[DVector<f64>],
    samples: usize,
    rng: &mut R,
) -> f64 {
    let v = game.gradients(x_star);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        for i in 0..game.num_players() {
            let x = sample_feasible(game.domain(i), 1.0, rng);
            worst = worst.max(v[i].dot(&(x - &x_star[i])));
        }
    }
    worst
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("tolerance must be positive, got {tol}")))
    }
}

/// Cournot equilibrium as the minimizer of the potential
/// `Σ(c_i - a)x_i + (b/2)(Σx)² + (b/2)‖x‖²` over the capacity box.
pub fn solve_ne_cournot(params: &CournotParams) -> Result<NeSolution> {
    solve_ne_cournot_tol(params, DEFAULT_TOL)
}

/// [`solve_ne_cournot`] stopping once the scaled gradient mapping is at most `tol`.
pub fn solve_ne_cournot_tol(params: &CournotParams, tol: f64) -> Result<NeSolution> {
    check_tol(tol)?;
    params.validate()?;
    let n = params.num_players();
    let lipschitz = params.b * (n as f64 + 1.0);
    let step = 1.0 / lipschitz;
    let lower = vec![0.0; n];
    let mut x = DVector::from_vec(params.capacities.iter().map(|c| 0.5 * c).collect());
    let grad = |x: &DVector<f64>| {
        let s = x.sum();
        DVector::from_fn(n, |i, _| params.costs[i] - params.a + params.b * (s + x[i]))
    };
    let mut residual = f64::INFINITY;
    for it in 0..MAX_ITER {
        let next = project_box(&(&x - grad(&x) * step), &lower, &params.capacities);
        residual = (&next - &x).norm() * lipschitz;
        x = next;
        if residual <= tol {
            let x_star = x.iter().map(|v| DVector::from_element(1, *v)).collect();
            return Ok(NeSolution {
                x_star,
                residual,
                solver: Solver::ProjectedGradient,
                iterations: it + 1,
            });
        }
    }
    Err(Error::Convergence { iterations: MAX_ITER, residual })
}

fn weighted_operator<G: Game + ?Sized>(game: &G, profile: &[DVector<f64>]) -> Vec<DVector<f64>> {
    game.gradients(profile)
        .into_iter()
        .enumerate()
        .map(|(i, v)| v * game.weight(i))
        .collect()
}

fn joint_dist(x: &[DVector<f64>], y: &[DVector<f64>]) -> f64 {
    crate::games::profile_dist_sq(x, y).sqrt()
}

fn starting_profile<G: Game + ?Sized>(game: &G) -> Result<Vec<DVector<f64>>> {
    (0..game.num_players())
        .map(|i| {
            let d = game.domain(i);
            match d.kind() {
                BarrierKind::Zero { origin } => Ok(DVector::from_column_slice(origin)),
                _ => d.analytic_center(),
            }
        })
        .collect()
}

/// Lipschitz estimate of the weighted operator from random difference
/// quotients, including close pairs to catch steep regions.
pub fn sampled_lipschitz<G: Game + ?Sized>(game: &G, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, u64::MAX, 3);
    let mut best: f64 = 0.0;
    for k in 0..LIPSCHITZ_SAMPLES {
        let x: Vec<_> = (0..game.num_players())
            .map(|i| sample_feasible(game.domain(i), 1.0, &mut rng))
            .collect();
        let y: Vec<_> = if k % 2 == 0 {
            (0..game.num_players())
                .map(|i| sample_feasible(game.domain(i), 1.0, &mut rng))
                .collect()
        } else {
            let scale = 10f64.powi(-(1 + (k as i32 / 2) % 6));
            let moved: Vec<_> = x
                .iter()
                .map(|xi| xi + DVector::from_fn(xi.len(), |_, _| scale * (rng.gen::<f64>() - 0.5)))
                .collect();
            project_profile(game, &moved)
        };
        let dx = joint_dist(&x, &y);
        if dx > 0.0 {
            let fx = weighted_operator(game, &x);
            let fy = weighted_operator(game, &y);
            best = best.max(joint_dist(&fx, &fy) / dx);
        }
    }
    best
}

/// Operator extrapolation on the weighted operator `(λ_i v_i)_i` with an
/// adaptive step: the step starts at `1 / (2 · 1.5 · L̂)` and is halved
/// whenever the local Lipschitz test fails.
pub fn solve_ne_vi<G: Game + ?Sized>(game: &G, tol: f64) -> Result<NeSolution> {
    check_tol(tol)?;
    let lipschitz = sampled_lipschitz(game, 0).max(f64::MIN_POSITIVE);
    let mut step = 1.0 / (2.0 * LIPSCHITZ_SAFETY * lipschitz);
    let mut x = starting_profile(game)?;
    let mut fx = weighted_operator(game, &x);
    let mut f_prev = fx.clone();
    let mut step_prev = step;
    let mut residual = natural_residual(game, &x);
    for it in 0..MAX_ITER {
        if residual <= tol {
            return Ok(NeSolution {
                x_star: x,
                residual,
                solver: Solver::OperatorExtrapolation,
                iterations: it,
            });
        }
        let theta = step_prev / step;
        let trial: Vec<_> = (0..x.len())
            .map(|i| {
                let dir = &fx[i] + (&fx[i] - &f_prev[i]) * theta;
                game.domain(i).project(&(&x[i] + dir * step))
            })
            .collect();
        let f_trial = weighted_operator(game, &trial);
        let moved = joint_dist(&trial, &x);
        let changed = joint_dist(&f_trial, &fx);
        if step * changed > 0.5 * moved && moved > 0.0 {
            step *= 0.5;
            step_prev = step;
            f_prev = fx.clone();
            continue;
        }
        f_prev = std::mem::replace(&mut fx, f_trial);
        x = trial;
        step_prev = step;
        if step * changed < 0.1 * moved {
            step *= 1.05;
        }
        residual = natural_residual(game, &x);
    }
    Err(Error::Convergence { iterations: MAX_ITER, residual })
}

/// Minimizer of the regularized logistic objective by Nesterov's method
/// with gradient-based restarts.
pub fn solve_ne_logistic(game: &LogisticGame) -> Result<NeSolution> {
    solve_ne_logistic_tol(game, DEFAULT_TOL)
}

/// [`solve_ne_logistic`] stopping once `‖∇f‖ ≤ tol`.
pub fn solve_ne_logistic_tol(game: &LogisticGame, tol: f64) -> Result<NeSolution> {
    check_tol(tol)?;
    let n = game.dim();
    let step = 1.0 / (game.smoothness() + 2.0 * game.mu());
    let mut x = DVector::zeros(n);
    let mut y = x.clone();
    let mut momentum: f64 = 1.0;
    let mut residual = game.objective_gradient(&x).norm();
    for it in 0..MAX_ITER {
        if residual <= tol {
            return Ok(NeSolution {
                x_star: LogisticGame::unstack(&x),
                residual,
                solver: Solver::AcceleratedGradient,
                iterations: it,
            });
        }
        let gy = game.objective_gradient(&y);
        let next = &y - gy * step;
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let g_next = game.objective_gradient(&next);
        if g_next.dot(&(&next - &x)) > 0.0 {
            // Restart: momentum is pointing uphill.
            momentum = 1.0;
            y = next.clone();
        } else {
            y = &next + (&next - &x) * ((momentum - 1.0) / next_momentum);
            momentum = next_momentum;
        }
        x = next;
        residual = g_next.norm();
    }
    Err(Error::Convergence { iterations: MAX_ITER, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{
        cournot_build, kelly_build, logistic_build, random_cournot, random_kelly, synthetic_dataset,
        Dataset, KellyParams, LogisticGameParams,
    };
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_box(&v(&[-0.2]), &[0.0], &[1.0])[0], 0.0);
        let p = project_budget_simplex(&v(&[0.8, 0.8]), 1.0);
        assert_relative_eq!(p, v(&[0.5, 0.5]), epsilon = 1e-15);
        assert_eq!(project_ball(&v(&[2.0, 0.0]), 1.0), v(&[1.0, 0.0]));
        assert_eq!(project_budget_simplex(&v(&[0.2, -0.5]), 1.0), v(&[0.2, 0.0]));
        let p = project_budget_simplex(&v(&[3.0, -1.0, 0.5]), 1.0);
        assert_relative_eq!(p, v(&[1.0, 0.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn cournot_symmetric_interior() {
        let p = CournotParams { a: 2.0, b: 1.0, capacities: vec![10.0, 10.0], costs: vec![0.5, 0.5] };
        let sol = solve_ne_cournot(&p).unwrap();
        assert_relative_eq!(sol.x_star[0][0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(sol.x_star[1][0], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn cournot_default_regime_is_the_upper_corner() {
        let p = random_cournot(10, 10.0, 0.05, 5);
        let sol = solve_ne_cournot(&p).unwrap();
        for x in &sol.x_star {
            assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        }
        let game = cournot_build(p).unwrap();
        let mut rng = RngStream::new(0, 0, 0);
        assert!(vi_violation(&game, &sol.x_star, 1000, &mut rng) <= 1e-8);
    }

    #[test]
    fn vi_solver_matches_cournot_solver() {
        let p = random_cournot(6, 3.0, 0.7, 2);
        let exact = solve_ne_cournot(&p).unwrap();
        let game = cournot_build(p).unwrap();
        let vi = solve_ne_vi(&game, DEFAULT_TOL).unwrap();
        assert!(vi.residual <= DEFAULT_TOL);
        let d = joint_dist(&exact.x_star, &vi.x_star);
        assert!(d <= 1e-7, "distance {d}");
    }

    #[test]
    fn single_bidder_kelly_closed_form() {
        for (g, q, d, b) in [(0.9, 0.8, 0.1, 1.0), (0.5, 0.3, 0.4, 1.0), (1.0, 1.0, 0.01, 0.05)] {
            let game = kelly_build(KellyParams {
                gains: vec![g],
                quantities: vec![q],
                entry: vec![d],
                budgets: vec![b],
            })
            .unwrap();
            let sol = solve_ne_vi(&game, DEFAULT_TOL).unwrap();
            let expected = ((g * q * d) as f64).sqrt() - d;
            assert_relative_eq!(sol.x_star[0][0], expected.clamp(0.0, b), epsilon = 1e-8);
        }
    }

    #[test]
    fn kelly_vi_solution_satisfies_variational_inequality() {
        let game = kelly_build(random_kelly(10, 2, 0.5, 3)).unwrap();
        let sol = solve_ne_vi(&game, DEFAULT_TOL).unwrap();
        let mut rng = RngStream::new(1, 0, 0);
        assert!(vi_violation(&game, &sol.x_star, 1000, &mut rng) <= 1e-8);
    }

    fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn logistic_single_sample() {
        let mut a = DMatrix::zeros(1, 3);
        a[(0, 0)] = 1.0;
        let data = Dataset::new(a, vec![1.0]).unwrap();
        let game = logistic_build(LogisticGameParams { dataset: data, mu: 0.5 }).unwrap();
        let sol = solve_ne_logistic(&game).unwrap();
        let root = bisect(-10.0, 10.0, |x| -1.0 / (1.0 + x.exp()) + x);
        assert_relative_eq!(sol.x_star[0][0], root, epsilon = 1e-9);
        assert!(sol.x_star[1][0].abs() < 1e-12 && sol.x_star[2][0].abs() < 1e-12);
    }

    #[test]
    fn logistic_heavy_regularization() {
        let data = synthetic_dataset(50, 4, 1);
        let game = logistic_build(LogisticGameParams { dataset: data, mu: 1e6 }).unwrap();
        let sol = solve_ne_logistic(&game).unwrap();
        let bound = game.objective_gradient(&DVector::zeros(4)).norm() / 2e6;
        assert!(LogisticGame::stack(&sol.x_star).norm() <= bound * (1.0 + 1e-9));
        assert!(sol.residual <= DEFAULT_TOL);
    }

    #[test]
    fn logistic_gradient_vanishes_at_output() {
        let data = synthetic_dataset(300, 10, 4);
        let game = logistic_build(LogisticGameParams { dataset: data, mu: 0.001 }).unwrap();
        let sol = solve_ne_logistic(&game).unwrap();
        assert!(game.objective_gradient(&LogisticGame::stack(&sol.x_star)).norm() <= DEFAULT_TOL);
    }

    #[test]
    fn feasible_samples_are_feasible() {
        let mut rng = RngStream::new(3, 0, 0);
        for b in [
            Barrier::cube(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap(),
            Barrier::budget_simplex(4, 2.0).unwrap(),
            Barrier::ball(3, 0.5).unwrap(),
        ] {
            for _ in 0..1000 {
                assert!(b.contains(&sample_feasible(&b, 1.0, &mut rng), 1e-12));
            }
        }
    }
}
