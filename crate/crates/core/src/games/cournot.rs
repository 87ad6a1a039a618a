use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Game;
use crate::error::{Error, Result};
use crate::geometry::Barrier;
use crate::sampling::RngStream;

/// Linear inverse-demand Cournot oligopoly with linear production costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CournotParams {
    pub a: f64,
    pub b: f64,
    pub capacities: Vec<f64>,
    pub costs: Vec<f64>,
}

impl CournotParams {
    pub fn num_players(&self) -> usize {
        self.capacities.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !(self.b > 0.0) {
            return Err(Error::Param("Cournot requires a > 0 and b > 0".into()));
        }
        if self.capacities.is_empty() || self.capacities.len() != self.costs.len() {
            return Err(Error::Param("Cournot needs one capacity and one cost per firm".into()));
        }
        if self.capacities.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Param("capacities must be positive".into()));
        }
        if self.costs.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::Param("costs must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CournotGame {
    params: CournotParams,
    domains: Vec<Barrier>,
}

pub fn cournot_build(params: CournotParams) -> Result<CournotGame> {
    params.validate()?;
    let domains = params
        .capacities
        .iter()
        .map(|cap| Barrier::interval(0.0, *cap))
        .collect::<Result<Vec<_>>>()?;
    Ok(CournotGame { params, domains })
}

/// Unit capacities and costs drawn from `U[0, 1]`.
pub fn random_cournot(n: usize, a: f64, b: f64, seed: u64) -> CournotParams {
    let mut rng = RngStream::new(seed, u64::MAX, 0);
    CournotParams {
        a,
        b,
        capacities: vec![1.0; n],
        costs: (0..n).map(|_| rng.gen::<f64>()).collect(),
    }
}

impl CournotGame {
    pub fn params(&self) -> &CournotParams {
        &self.params
    }

    fn supply(profile: &[DVector<f64>]) -> f64 {
        profile.iter().map(|x| x[0]).sum()
    }
}

impl Game for CournotGame {
    fn num_players(&self) -> usize {
        self.params.num_players()
    }

    fn domain(&self, player: usize) -> &Barrier {
        &self.domains[player]
    }

    fn payoff(&self, player: usize, profile: &[DVector<f64>]) -> f64 {
        let x = profile[player][0];
        x * (self.params.a - self.params.b * Self::supply(profile)) - self.params.costs[player] * x
    }

    fn payoffs(&self, profile: &[DVector<f64>]) -> Vec<f64> {
        let price = self.params.a - self.params.b * Self::supply(profile);
        profile
            .iter()
            .zip(&self.params.costs)
            .map(|(x, c)| x[0] * (price - c))
            .collect()
    }

    fn gradient(&self, player: usize, profile: &[DVector<f64>]) -> DVector<f64> {
        let p = &self.params;
        let x = profile[player][0];
        DVector::from_element(1, p.a - p.costs[player] - p.b * Self::supply(profile) - p.b * x)
    }

    fn gradients(&self, profile: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let p = &self.params;
        let s = Self::supply(profile);
        profile
            .iter()
            .zip(&p.costs)
            .map(|(x, c)| DVector::from_element(1, p.a - c - p.b * s - p.b * x[0]))
            .collect()
    }

    fn modulus(&self) -> f64 {
        self.params.b
    }

    fn weight(&self, _player: usize) -> f64 {
        1.0
    }

    fn lipschitz(&self, _player: usize) -> f64 {
        // ∇v_i = -b (1, …, 2, …, 1).
        self.params.b * (self.num_players() as f64 + 3.0).sqrt()
    }

    fn payoff_bound(&self) -> f64 {
        let p = &self.params;
        let total: f64 = p.capacities.iter().sum();
        p.capacities
            .iter()
            .zip(&p.costs)
            .map(|(cap, c)| cap * (p.a + p.b * total + c))
            .fold(0.0, f64::max)
    }
}
