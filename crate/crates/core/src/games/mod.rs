//! Smooth concave games: the abstraction every learner plays against, plus
//! the Cournot, Kelly-auction and distributed logistic-regression families.

use nalgebra::DVector;

use crate::geometry::Barrier;

mod cournot;
mod kelly;
pub mod libsvm;
mod logistic;

pub use cournot::{cournot_build, random_cournot, CournotGame, CournotParams};
pub use kelly::{kelly_build, random_kelly, KellyGame, KellyParams};
pub use libsvm::{load_libsvm, parse_libsvm, Dataset, LabelMap, LibsvmOptions};
pub use logistic::{logistic_build, synthetic_dataset, LogisticGame, LogisticGameParams};

/// An N-player game with per-player convex action sets.
///
/// A profile is a slice with one action vector per player. Implementations
/// are immutable and safe to evaluate from several threads.
pub trait Game: Send + Sync {
    fn num_players(&self) -> usize;

    /// Action set of `player`, carried as its barrier.
    fn domain(&self, player: usize) -> &Barrier;

    fn dim(&self, player: usize) -> usize {
        self.domain(player).dim()
    }

    fn payoff(&self, player: usize, profile: &[DVector<f64>]) -> f64;

    /// All payoffs of one joint profile. Override when the players share work.
    fn payoffs(&self, profile: &[DVector<f64>]) -> Vec<f64> {
        (0..self.num_players()).map(|i| self.payoff(i, profile)).collect()
    }

    /// Individual payoff gradient `v_i(x) = ∇_i u_i(x)`.
    fn gradient(&self, player: usize, profile: &[DVector<f64>]) -> DVector<f64>;

    fn gradients(&self, profile: &[DVector<f64>]) -> Vec<DVector<f64>> {
        (0..self.num_players()).map(|i| self.gradient(i, profile)).collect()
    }

    /// Strong monotonicity modulus β for the weights returned by `weight`.
    fn modulus(&self) -> f64;

    fn weight(&self, player: usize) -> f64;

    /// Lipschitz constant of `v_i` with respect to the full profile.
    fn lipschitz(&self, player: usize) -> f64;

    /// `sup |u_i|` over the joint action set (infinite when unbounded).
    fn payoff_bound(&self) -> f64;

    fn max_dim(&self) -> usize {
        (0..self.num_players()).map(|i| self.dim(i)).max().unwrap_or(0)
    }

    fn total_dim(&self) -> usize {
        (0..self.num_players()).map(|i| self.dim(i)).sum()
    }
}

/// Every player receives the same constant payoff; gradients vanish.
#[derive(Debug, Clone)]
pub struct ConstantGame {
    domains: Vec<Barrier>,
    value: f64,
}

impl ConstantGame {
    pub fn new(domains: Vec<Barrier>, value: f64) -> Self {
        Self { domains, value }
    }
}

impl Game for ConstantGame {
    fn num_players(&self) -> usize {
        self.domains.len()
    }

    fn domain(&self, player: usize) -> &Barrier {
        &self.domains[player]
    }

    fn payoff(&self, _player: usize, _profile: &[DVector<f64>]) -> f64 {
        self.value
    }

    fn gradient(&self, player: usize, _profile: &[DVector<f64>]) -> DVector<f64> {
        DVector::zeros(self.dim(player))
    }

    fn modulus(&self) -> f64 {
        0.0
    }

    fn weight(&self, _player: usize) -> f64 {
        1.0
    }

    fn lipschitz(&self, _player: usize) -> f64 {
        0.0
    }

    fn payoff_bound(&self) -> f64 {
        self.value.abs()
    }
}

/// Squared distance `Σ_i ‖x_i - y_i‖²` between two profiles.
pub fn profile_dist_sq(x: &[DVector<f64>], y: &[DVector<f64>]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm_squared()).sum()
}

/// Weighted monotonicity form `Σ_i λ_i ⟨x'_i - x_i, v_i(x') - v_i(x)⟩`.
pub fn monotonicity_form<G: Game + ?Sized>(game: &G, x: &[DVector<f64>], y: &[DVector<f64>]) -> f64 {
    let vx = game.gradients(x);
    let vy = game.gradients(y);
    (0..game.num_players())
        .map(|i| game.weight(i) * (&y[i] - &x[i]).dot(&(&vy[i] - &vx[i])))
        .sum()
}
