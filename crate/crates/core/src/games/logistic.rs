use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::libsvm::Dataset;
use super::Game;
use crate::error::{Error, Result};
use crate::geometry::Barrier;
use crate::sampling::RngStream;

/// ℓ2-regularized logistic regression split coordinate-wise across players.
#[derive(Debug, Clone)]
pub struct LogisticGameParams {
    pub dataset: Dataset,
    pub mu: f64,
}

impl LogisticGameParams {
    /// `ℓ = max_j ‖a_j‖² / 4`.
    pub fn smoothness(&self) -> f64 {
        0.25 * self.dataset.max_row_norm_sq()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.samples() == 0 || self.dataset.dim() == 0 {
            return Err(Error::Param("logistic game needs a nonempty dataset".into()));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Param("regularization mu must be positive".into()));
        }
        if let Some(b) = self.dataset.labels.iter().find(|b| **b != 1.0 && **b != -1.0) {
            return Err(Error::Param(format!("label {b} is not in {{-1, +1}}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LogisticGame {
    params: LogisticGameParams,
    /// Rows `b_j a_jᵀ`, so margins are a single product.
    signed: DMatrix<f64>,
    domain: Barrier,
    smoothness: f64,
}

pub fn logistic_build(params: LogisticGameParams) -> Result<LogisticGame> {
    params.validate()?;
    let mut signed = params.dataset.features.clone();
    for (mut row, b) in signed.row_iter_mut().zip(&params.dataset.labels) {
        row *= *b;
    }
    let smoothness = params.smoothness();
    Ok(LogisticGame { params, signed, domain: Barrier::zero(1)?, smoothness })
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticGame {
    pub fn params(&self) -> &LogisticGameParams {
        &self.params
    }

    pub fn mu(&self) -> f64 {
        self.params.mu
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn dim(&self) -> usize {
        self.params.dataset.dim()
    }

    /// `f(x) = (1/m) Σ_j log(1 + exp(-b_j a_jᵀx)) + μ‖x‖²`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let margins = &self.signed * x;
        let m = margins.len() as f64;
        margins.iter().map(|z| softplus(-z)).sum::<f64>() / m + self.params.mu * x.norm_squared()
    }

    pub fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let margins = &self.signed * x;
        let m = margins.len() as f64;
        let weights = margins.map(|z| -sigmoid(-z) / m);
        self.signed.tr_mul(&weights) + x * (2.0 * self.params.mu)
    }

    pub fn stack(profile: &[DVector<f64>]) -> DVector<f64> {
        DVector::from_iterator(profile.len(), profile.iter().map(|x| x[0]))
    }

    pub fn unstack(x: &DVector<f64>) -> Vec<DVector<f64>> {
        x.iter().map(|v| DVector::from_element(1, *v)).collect()
    }
}

impl Game for LogisticGame {
    fn num_players(&self) -> usize {
        self.dim()
    }

    fn domain(&self, _player: usize) -> &Barrier {
        &self.domain
    }

    fn payoff(&self, _player: usize, profile: &[DVector<f64>]) -> f64 {
        -self.objective(&Self::stack(profile))
    }

    fn payoffs(&self, profile: &[DVector<f64>]) -> Vec<f64> {
        vec![-self.objective(&Self::stack(profile)); profile.len()]
    }

    fn gradient(&self, player: usize, profile: &[DVector<f64>]) -> DVector<f64> {
        DVector::from_element(1, -self.objective_gradient(&Self::stack(profile))[player])
    }

    fn gradients(&self, profile: &[DVector<f64>]) -> Vec<DVector<f64>> {
        Self::unstack(&-self.objective_gradient(&Self::stack(profile)))
    }

    /// `-f` is `2μ`-strongly concave, so with unit weights the game is
    /// `2μ`-strongly monotone.
    fn modulus(&self) -> f64 {
        2.0 * self.params.mu
    }

    fn weight(&self, _player: usize) -> f64 {
        1.0
    }

    fn lipschitz(&self, _player: usize) -> f64 {
        self.smoothness + 2.0 * self.params.mu
    }

    /// The action set is unbounded.
    fn payoff_bound(&self) -> f64 {
        f64::INFINITY
    }
}

/// Stand-in for a binary classification benchmark: `m` samples whose `n`
/// features take four evenly spaced levels in `[-1, 1]`, labelled by a
/// planted logistic model.
pub fn synthetic_dataset(m: usize, n: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed, u64::MAX, 2);
    let levels = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
    let scale = 3.0 / (n.max(1) as f64).sqrt();
    let planted: DVector<f64> =
        DVector::from_fn(n, |_, _| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
    let features = DMatrix::from_fn(m, n, |_, _| levels[rng.gen_range(0..4)]);
    let labels = (0..m)
        .map(|j| {
            let p = sigmoid(features.row(j).dot(&planted.transpose()));
            if rng.gen::<f64>() < p {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Dataset { features, labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_game(mu: f64) -> LogisticGame {
        logistic_build(LogisticGameParams { dataset: synthetic_dataset(40, 5, 11), mu }).unwrap()
    }

    #[test]
    fn value_and_gradient_at_origin() {
        let g = small_game(0.01);
        let x = DVector::zeros(5);
        assert_relative_eq!(g.objective(&x), std::f64::consts::LN_2, epsilon = 1e-14);
        let d = &g.params().dataset;
        let mut expected = DVector::zeros(5);
        for j in 0..d.samples() {
            expected -= d.features.row(j).transpose() * (d.labels[j] / (2.0 * d.samples() as f64));
        }
        assert!((g.objective_gradient(&x) - expected).norm() < 1e-14);
    }

    #[test]
    fn regularizer_gradient() {
        let a = small_game(0.01);
        let b = small_game(0.51);
        let x = DVector::from_vec(vec![0.3, -0.2, 1.1, 0.0, -0.7]);
        let diff = b.objective_gradient(&x) - a.objective_gradient(&x);
        assert!((diff - &x).norm() < 1e-14);
    }

    #[test]
    fn player_gradients_are_negative_partials() {
        let g = small_game(0.05);
        let x = DVector::from_vec(vec![0.4, -1.0, 0.2, 2.0, -0.3]);
        let profile = LogisticGame::unstack(&x);
        let h = 1e-6;
        for i in 0..5 {
            let mut up = x.clone();
            up[i] += h;
            let mut down = x.clone();
            down[i] -= h;
            let fd = -(g.objective(&up) - g.objective(&down)) / (2.0 * h);
            assert_relative_eq!(g.gradient(i, &profile)[0], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_relative_eq!(softplus(800.0), 800.0);
        assert_eq!(softplus(-800.0), 0.0);
        assert_relative_eq!(softplus(0.0), std::f64::consts::LN_2);
        assert_relative_eq!(sigmoid(-800.0), 0.0);
        assert_relative_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut d = synthetic_dataset(4, 2, 0);
        d.labels[1] = 0.0;
        assert!(matches!(
            logistic_build(LogisticGameParams { dataset: d, mu: 0.1 }),
            Err(Error::Param(_))
        ));
        let d = synthetic_dataset(4, 2, 0);
        assert!(logistic_build(LogisticGameParams { dataset: d, mu: 0.0 }).is_err());
    }

    #[test]
    fn synthetic_shape() {
        let d = synthetic_dataset(1000, 60, 7);
        assert_eq!((d.samples(), d.dim()), (1000, 60));
        let pos = d.positives() as f64 / 1000.0;
        assert!(pos > 0.3 && pos < 0.7, "balance {pos}");
        assert_eq!(d, synthetic_dataset(1000, 60, 7));
    }
}
