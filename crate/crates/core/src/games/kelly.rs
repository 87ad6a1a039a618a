use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Game;
use crate::error::{Error, Result};
use crate::geometry::Barrier;
use crate::sampling::RngStream;

/// Draws below this are redrawn when sampling random auctions.
const DEGENERATE_DRAW: f64 = 1e-6;

/// Kelly proportional-allocation auction over `S` splittable resources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KellyParams {
    /// Marginal gains `g_i`.
    pub gains: Vec<f64>,
    /// Resource quantities `q_s`.
    pub quantities: Vec<f64>,
    /// Entry barriers `d_s`.
    pub entry: Vec<f64>,
    /// Bidding budgets `B_i`.
    pub budgets: Vec<f64>,
}

impl KellyParams {
    pub fn num_players(&self) -> usize {
        self.gains.len()
    }

    pub fn num_resources(&self) -> usize {
        self.quantities.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gains.is_empty() || self.gains.len() != self.budgets.len() {
            return Err(Error::Param("Kelly needs one gain and one budget per bidder".into()));
        }
        if self.quantities.is_empty() || self.quantities.len() != self.entry.len() {
            return Err(Error::Param("Kelly needs one quantity and one entry barrier per resource".into()));
        }
        if self.entry.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Param("entry barriers d_s must be strictly positive".into()));
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.gains) || !positive(&self.quantities) || !positive(&self.budgets) {
            return Err(Error::Param("gains, quantities and budgets must be positive".into()));
        }
        Ok(())
    }

    /// `min_s(q_s d_s) / (Σ_s d_s + Σ_i B_i)³`.
    pub fn modulus(&self) -> f64 {
        let num = self
            .quantities
            .iter()
            .zip(&self.entry)
            .map(|(q, d)| q * d)
            .fold(f64::INFINITY, f64::min);
        let den = self.entry.iter().sum::<f64>() + self.budgets.iter().sum::<f64>();
        num / den.powi(3)
    }
}

#[derive(Debug, Clone)]
pub struct KellyGame {
    params: KellyParams,
    domains: Vec<Barrier>,
}

pub fn kelly_build(params: KellyParams) -> Result<KellyGame> {
    params.validate()?;
    let s = params.num_resources();
    let domains = params
        .budgets
        .iter()
        .map(|b| Barrier::budget_simplex(s, *b))
        .collect::<Result<Vec<_>>>()?;
    Ok(KellyGame { params, domains })
}

/// Unit budgets; `g_i, q_s ~ U[0, 1]`, `d_s ~ U[0, d̄]`.
pub fn random_kelly(n: usize, s: usize, dbar: f64, seed: u64) -> KellyParams {
    let mut rng = RngStream::new(seed, u64::MAX, 1);
    let mut draw = |scale: f64| loop {
        let v = rng.gen::<f64>() * scale;
        if v >= DEGENERATE_DRAW {
            break v;
        }
    };
    let gains = (0..n).map(|_| draw(1.0)).collect();
    let quantities = (0..s).map(|_| draw(1.0)).collect();
    let entry = (0..s).map(|_| draw(dbar)).collect();
    KellyParams { gains, quantities, entry, budgets: vec![1.0; n] }
}

impl KellyGame {
    pub fn params(&self) -> &KellyParams {
        &self.params
    }

    /// `d_s + Σ_j x_js` for every resource.
    fn congestion(&self, profile: &[DVector<f64>]) -> Vec<f64> {
        let mut totals = self.params.entry.clone();
        for x in profile {
            for (t, v) in totals.iter_mut().zip(x.iter()) {
                *t += v;
            }
        }
        totals
    }

    fn payoff_with(&self, player: usize, x: &DVector<f64>, totals: &[f64]) -> f64 {
        let g = self.params.gains[player];
        x.iter()
            .zip(totals)
            .zip(&self.params.quantities)
            .map(|((v, t), q)| g * q * v / t - v)
            .sum()
    }

    fn gradient_with(&self, player: usize, x: &DVector<f64>, totals: &[f64]) -> DVector<f64> {
        let g = self.params.gains[player];
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(totals)
                .zip(&self.params.quantities)
                .map(|((v, t), q)| g * q * (t - v) / (t * t) - 1.0),
        )
    }
}

impl Game for KellyGame {
    fn num_players(&self) -> usize {
        self.params.num_players()
    }

    fn domain(&self, player: usize) -> &Barrier {
        &self.domains[player]
    }

    fn payoff(&self, player: usize, profile: &[DVector<f64>]) -> f64 {
        let totals = self.congestion(profile);
        self.payoff_with(player, &profile[player], &totals)
    }

    fn payoffs(&self, profile: &[DVector<f64>]) -> Vec<f64> {
        let totals = self.congestion(profile);
        profile
            .iter()
            .enumerate()
            .map(|(i, x)| self.payoff_with(i, x, &totals))
            .collect()
    }

    fn gradient(&self, player: usize, profile: &[DVector<f64>]) -> DVector<f64> {
        let totals = self.congestion(profile);
        self.gradient_with(player, &profile[player], &totals)
    }

    fn gradients(&self, profile: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let totals = self.congestion(profile);
        profile
            .iter()
            .enumerate()
            .map(|(i, x)| self.gradient_with(i, x, &totals))
            .collect()
    }

    fn modulus(&self) -> f64 {
        self.params.modulus()
    }

    fn weight(&self, player: usize) -> f64 {
        1.0 / self.params.gains[player]
    }

    fn lipschitz(&self, player: usize) -> f64 {
        // Entries of ∇v_i are bounded by 2 g q_s / d_s² (own bid) and
        // g q_s / d_s² (rivals' bids on the same resource).
        let worst = self
            .params
            .quantities
            .iter()
            .zip(&self.params.entry)
            .map(|(q, d)| q / (d * d))
            .fold(0.0, f64::max);
        self.params.gains[player] * worst * (self.num_players() as f64 + 3.0).sqrt()
    }

    fn payoff_bound(&self) -> f64 {
        let qsum: f64 = self.params.quantities.iter().sum();
        self.params
            .gains
            .iter()
            .zip(&self.params.budgets)
            .map(|(g, b)| g * qsum + b)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn modulus_example() {
        let p = KellyParams {
            gains: vec![0.5, 0.7],
            quantities: vec![1.0],
            entry: vec![1.0],
            budgets: vec![1.0, 1.0],
        };
        assert_relative_eq!(p.modulus(), 1.0 / 27.0, epsilon = 1e-15);
    }

    #[test]
    fn lone_bidder_at_zero() {
        let p = KellyParams {
            gains: vec![0.8],
            quantities: vec![0.6, 0.9],
            entry: vec![0.3, 0.4],
            budgets: vec![1.0],
        };
        let g = kelly_build(p).unwrap();
        let v = g.gradient(0, &[DVector::zeros(2)]);
        assert_relative_eq!(v[0], 0.8 * 0.6 / 0.3 - 1.0, epsilon = 1e-14);
        assert_relative_eq!(v[1], 0.8 * 0.9 / 0.4 - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_zero_entry_barrier() {
        let p = KellyParams {
            gains: vec![1.0],
            quantities: vec![1.0],
            entry: vec![0.0],
            budgets: vec![1.0],
        };
        assert!(matches!(kelly_build(p), Err(Error::Param(_))));
    }

    #[test]
    fn random_auctions() {
        let p = random_kelly(10, 2, 0.5, 9);
        assert_eq!(p, random_kelly(10, 2, 0.5, 9));
        assert!(p.budgets.iter().all(|b| *b == 1.0));
        assert!(p.entry.iter().all(|d| *d >= 1e-6 && *d <= 0.5));
        assert!(p.gains.iter().chain(&p.quantities).all(|v| *v >= 1e-6 && *v <= 1.0));
        assert!(kelly_build(p).is_ok());
    }
}
