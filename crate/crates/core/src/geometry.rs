//! Self-concordant barriers over the action sets used by the learners, the
//! local geometry they induce (Dikin ellipsoids, scaling matrices, gauge) and
//! the damped-Newton solver behind the mixed-Bregman prox-mapping.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::equilibrium::{project_ball, project_box, project_budget_simplex};
use crate::error::{Error, Result};

/// Newton iterations stop once the decrement falls below this.
pub const NEWTON_TOL: f64 = 1e-10;
/// Decrement that is still accepted when the iteration cap is hit.
pub const NEWTON_ACCEPT: f64 = 1e-6;
pub const NEWTON_MAX_ITER: usize = 100;
const ARMIJO: f64 = 1e-4;
const EIGEN_FLOOR: f64 = 1e-14;
/// Below this decrement a full Newton step stays inside the Dikin ellipsoid
/// of the objective and is taken without line search.
const PURE_NEWTON_REGION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BarrierKind {
    /// `-Σ log(x_k - lo_k) - Σ log(hi_k - x_k)`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `-Σ log(x_s) - log(B - Σ x_s)` over `{x ≥ 0, Σ x ≤ B}`.
    BudgetSimplex { budget: f64 },
    /// `-log(r² - ‖x‖²)` over the centered ball of radius `r`.
    Ball { radius: f64 },
    /// `R ≡ 0` on an unconstrained domain.
    Zero { origin: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    kind: BarrierKind,
    dim: usize,
}

impl Barrier {
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::cube(vec![lower], vec![upper])
    }

    pub fn cube(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Param("box bounds must be nonempty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Param("box requires finite lower < upper in every coordinate".into()));
        }
        let dim = lower.len();
        Ok(Self { kind: BarrierKind::Box { lower, upper }, dim })
    }

    pub fn budget_simplex(dim: usize, budget: f64) -> Result<Self> {
        if dim == 0 || !(budget > 0.0) || !budget.is_finite() {
            return Err(Error::Param("budget simplex needs dim ≥ 1 and budget > 0".into()));
        }
        Ok(Self { kind: BarrierKind::BudgetSimplex { budget }, dim })
    }

    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 || !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Param("ball needs dim ≥ 1 and radius > 0".into()));
        }
        Ok(Self { kind: BarrierKind::Ball { radius }, dim })
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::zero_at(vec![0.0; dim])
    }

    pub fn zero_at(origin: Vec<f64>) -> Result<Self> {
        if origin.is_empty() {
            return Err(Error::Param("zero barrier needs dim ≥ 1".into()));
        }
        let dim = origin.len();
        Ok(Self { kind: BarrierKind::Zero { origin }, dim })
    }

    pub fn kind(&self) -> &BarrierKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, BarrierKind::Zero { .. })
    }

    /// Barrier parameter ν (sum over the log terms).
    pub fn nu(&self) -> f64 {
        match &self.kind {
            BarrierKind::Box { .. } => 2.0 * self.dim as f64,
            BarrierKind::BudgetSimplex { .. } => self.dim as f64 + 1.0,
            BarrierKind::Ball { .. } => 1.0,
            BarrierKind::Zero { .. } => 0.0,
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Param(format!(
                "point has dimension {}, barrier expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Strict interior membership (always true for the zero barrier).
    pub fn is_interior(&self, x: &DVector<f64>) -> bool {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.kind {
            BarrierKind::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v > *l && *v < *u),
            BarrierKind::BudgetSimplex { budget } => {
                x.iter().all(|v| *v > 0.0) && budget - x.sum() > 0.0
            }
            BarrierKind::Ball { radius } => radius * radius - x.norm_squared() > 0.0,
            BarrierKind::Zero { .. } => true,
        }
    }

    /// Closed-set membership with absolute slack `tol`.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.kind {
            BarrierKind::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= *l - tol && *v <= *u + tol),
            BarrierKind::BudgetSimplex { budget } => {
                x.iter().all(|v| *v >= -tol) && x.sum() <= budget + tol
            }
            BarrierKind::Ball { radius } => x.norm() <= radius + tol,
            BarrierKind::Zero { .. } => true,
        }
    }

    fn require_interior(&self, x: &DVector<f64>) -> Result<()> {
        self.check_dim(x)?;
        if self.is_interior(x) {
            Ok(())
        } else {
            Err(Error::Boundary)
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.require_interior(x)?;
        Ok(match &self.kind {
            BarrierKind::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| -(v - l).ln() - (u - v).ln())
                .sum(),
            BarrierKind::BudgetSimplex { budget } => {
                -x.iter().map(|v| v.ln()).sum::<f64>() - (budget - x.sum()).ln()
            }
            BarrierKind::Ball { radius } => -(radius * radius - x.norm_squared()).ln(),
            BarrierKind::Zero { .. } => 0.0,
        })
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_interior(x)?;
        Ok(match &self.kind {
            BarrierKind::Box { lower, upper } => DVector::from_iterator(
                self.dim,
                x.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(v, (l, u))| -1.0 / (v - l) + 1.0 / (u - v)),
            ),
            BarrierKind::BudgetSimplex { budget } => {
                let slack = budget - x.sum();
                x.map(|v| -1.0 / v + 1.0 / slack)
            }
            BarrierKind::Ball { radius } => {
                let slack = radius * radius - x.norm_squared();
                x * (2.0 / slack)
            }
            BarrierKind::Zero { .. } => DVector::zeros(self.dim),
        })
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.require_interior(x)?;
        Ok(match &self.kind {
            BarrierKind::Box { lower, upper } => DMatrix::from_diagonal(&DVector::from_iterator(
                self.dim,
                x.iter().zip(lower.iter().zip(upper)).map(|(v, (l, u))| {
                    let a = v - l;
                    let b = u - v;
                    1.0 / (a * a) + 1.0 / (b * b)
                }),
            )),
            BarrierKind::BudgetSimplex { budget } => {
                let slack = budget - x.sum();
                let mut h = DMatrix::from_element(self.dim, self.dim, 1.0 / (slack * slack));
                for (k, v) in x.iter().enumerate() {
                    h[(k, k)] += 1.0 / (v * v);
                }
                h
            }
            BarrierKind::Ball { radius } => {
                let slack = radius * radius - x.norm_squared();
                let mut h = x * x.transpose() * (4.0 / (slack * slack));
                for k in 0..self.dim {
                    h[(k, k)] += 2.0 / slack;
                }
                h
            }
            BarrierKind::Zero { .. } => DMatrix::zeros(self.dim, self.dim),
        })
    }

    pub fn value_grad_hess(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        Ok((self.value(x)?, self.gradient(x)?, self.hessian(x)?))
    }

    /// `R(x + step) - R(x)` evaluated through `log1p` of the slack ratios so
    /// that tiny steps near the boundary keep full relative precision.
    pub fn value_delta(&self, x: &DVector<f64>, step: &DVector<f64>) -> Result<f64> {
        self.require_interior(x)?;
        self.check_dim(step)?;
        let moved = x + step;
        if !self.is_interior(&moved) {
            return Err(Error::Boundary);
        }
        Ok(match &self.kind {
            BarrierKind::Box { lower, upper } => x
                .iter()
                .zip(step.iter())
                .zip(lower.iter().zip(upper))
                .map(|((v, s), (l, u))| -(s / (v - l)).ln_1p() - (-s / (u - v)).ln_1p())
                .sum(),
            BarrierKind::BudgetSimplex { budget } => {
                let slack = budget - x.sum();
                -x.iter().zip(step.iter()).map(|(v, s)| (s / v).ln_1p()).sum::<f64>()
                    - (-step.sum() / slack).ln_1p()
            }
            BarrierKind::Ball { radius } => {
                let slack = radius * radius - x.norm_squared();
                -(-(2.0 * x.dot(step) + step.norm_squared()) / slack).ln_1p()
            }
            BarrierKind::Zero { .. } => 0.0,
        })
    }

    /// Bregman divergence `D_R(y, x) = R(y) - R(x) - ⟨∇R(x), y - x⟩`.
    pub fn bregman(&self, y: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        let step = y - x;
        Ok(self.value_delta(x, &step)? - self.gradient(x)?.dot(&step))
    }

    /// `D_R(p, new) - D_R(p, old)`. The `R(p)` terms cancel, so the result is
    /// finite even when `p` sits on the boundary of the set.
    pub fn bregman_shift(
        &self,
        p: &DVector<f64>,
        new: &DVector<f64>,
        old: &DVector<f64>,
    ) -> Result<f64> {
        self.check_dim(p)?;
        let drop = -self.value_delta(old, &(new - old))?;
        Ok(drop - self.gradient(new)?.dot(&(p - new)) + self.gradient(old)?.dot(&(p - old)))
    }

    /// `‖h‖_x = sqrt(hᵀ ∇²R(x) h)`.
    pub fn local_norm(&self, x: &DVector<f64>, h: &DVector<f64>) -> Result<f64> {
        let hess = self.hessian(x)?;
        Ok(h.dot(&(&hess * h)).max(0.0).sqrt())
    }

    /// Whether `y` lies in the closed Dikin ellipsoid `{y : ‖y - x‖_x ≤ 1}`.
    /// Non-interior `x` yields `false`.
    pub fn dikin_contains(&self, x: &DVector<f64>, y: &DVector<f64>) -> bool {
        if y.len() != self.dim {
            return false;
        }
        match self.local_norm(x, &(y - x)) {
            Ok(r) => r <= 1.0,
            Err(_) => false,
        }
    }

    /// Minkowski gauge `π_anchor(y)`: 0 at the anchor, 1 on the boundary.
    pub fn minkowski_gauge(&self, anchor: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        self.require_interior(anchor)?;
        self.check_dim(y)?;
        if !self.contains(y, 1e-12) {
            return Err(Error::Domain("gauge argument is infeasible".into()));
        }
        let d = y - anchor;
        let gauge = match &self.kind {
            BarrierKind::Box { lower, upper } => d
                .iter()
                .zip(anchor.iter())
                .zip(lower.iter().zip(upper))
                .map(|((dk, ak), (l, u))| {
                    if *dk > 0.0 {
                        dk / (u - ak)
                    } else {
                        -dk / (ak - l)
                    }
                })
                .fold(0.0, f64::max),
            BarrierKind::BudgetSimplex { budget } => {
                let faces = d
                    .iter()
                    .zip(anchor.iter())
                    .filter(|(dk, _)| **dk < 0.0)
                    .map(|(dk, ak)| -dk / ak)
                    .fold(0.0, f64::max);
                let total = d.sum();
                if total > 0.0 {
                    faces.max(total / (budget - anchor.sum()))
                } else {
                    faces
                }
            }
            BarrierKind::Ball { radius } => {
                // Largest s with ‖anchor + s d‖ = r; the gauge is 1/s.
                let dd = d.norm_squared();
                if dd == 0.0 {
                    0.0
                } else {
                    let ad = anchor.dot(&d);
                    let c = anchor.norm_squared() - radius * radius;
                    let s = (-ad + (ad * ad - dd * c).sqrt()) / dd;
                    1.0 / s
                }
            }
            BarrierKind::Zero { .. } => 0.0,
        };
        Ok(gauge)
    }

    /// Upper bound `ν log(1 + 1/ε)` on `R(x) - R(x̄)` over points whose gauge
    /// from the analytic center is at most `1/(1+ε)`.
    pub fn range_bound(&self, eps: f64) -> f64 {
        self.nu() * (1.0 + 1.0 / eps).ln()
    }

    fn canonical_interior(&self) -> DVector<f64> {
        match &self.kind {
            BarrierKind::Box { lower, upper } => DVector::from_iterator(
                self.dim,
                lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)),
            ),
            BarrierKind::BudgetSimplex { budget } => {
                DVector::from_element(self.dim, budget / (self.dim as f64 + 1.0))
            }
            BarrierKind::Ball { .. } => DVector::zeros(self.dim),
            BarrierKind::Zero { origin } => DVector::from_column_slice(origin),
        }
    }

    /// Minimizer of the barrier, found by damped Newton from a canonical
    /// interior point. The zero barrier returns its configured origin.
    pub fn analytic_center(&self) -> Result<DVector<f64>> {
        let mut x = self.canonical_interior();
        if self.is_zero() {
            return Ok(x);
        }
        for _ in 0..NEWTON_MAX_ITER {
            let grad = self.gradient(&x)?;
            if grad.norm() <= NEWTON_TOL {
                return Ok(x);
            }
            let hess = self.hessian(&x)?;
            let chol = hess.cholesky().ok_or(Error::Singularity(0.0))?;
            let step = -chol.solve(&grad);
            let decrement = (-grad.dot(&step)).max(0.0).sqrt();
            let mut s = 1.0 / (1.0 + decrement);
            while !self.is_interior(&(&x + &step * s)) {
                s *= 0.5;
            }
            x += step * s;
        }
        let residual = self.gradient(&x)?.norm();
        if residual <= NEWTON_TOL {
            Ok(x)
        } else {
            Err(Error::Convergence { iterations: NEWTON_MAX_ITER, residual })
        }
    }

    /// Euclidean projection onto the (closed) feasible set.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            BarrierKind::Box { lower, upper } => project_box(y, lower, upper),
            BarrierKind::BudgetSimplex { budget } => project_budget_simplex(y, *budget),
            BarrierKind::Ball { radius } => project_ball(y, *radius),
            BarrierKind::Zero { .. } => y.clone(),
        }
    }
}

/// `A = (H + cI)^(-1/2)` together with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    regularization: f64,
}

impl ScalingMatrix {
    pub fn new(barrier: &Barrier, x: &DVector<f64>, c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::Param("scaling regularization must be ≥ 0".into()));
        }
        if barrier.is_zero() {
            if !(c > 0.0) {
                return Err(Error::Singularity(0.0));
            }
            let n = barrier.dim();
            let a = c.sqrt().recip();
            return Ok(Self {
                matrix: DMatrix::from_diagonal_element(n, n, a),
                inverse: DMatrix::from_diagonal_element(n, n, c.sqrt()),
                regularization: c,
            });
        }
        Self::from_hessian(barrier.hessian(x)?, c)
    }

    /// Builds the scaling from an explicit symmetric matrix `H`.
    pub fn from_hessian(hessian: DMatrix<f64>, c: f64) -> Result<Self> {
        let n = hessian.nrows();
        let mut m = hessian;
        for k in 0..n {
            m[(k, k)] += c;
        }
        if n == 1 {
            let v = m[(0, 0)];
            if !(v >= EIGEN_FLOOR) {
                return Err(Error::Singularity(v));
            }
            let root = v.sqrt();
            return Ok(Self {
                matrix: DMatrix::from_element(1, 1, 1.0 / root),
                inverse: DMatrix::from_element(1, 1, root),
                regularization: c,
            });
        }
        let sym = (&m + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let smallest = eig.eigenvalues.min();
        if !(smallest >= EIGEN_FLOOR) {
            return Err(Error::Singularity(smallest));
        }
        let q = &eig.eigenvectors;
        let inv_root = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
        let root = eig.eigenvalues.map(f64::sqrt);
        let matrix = q * DMatrix::from_diagonal(&inv_root) * q.transpose();
        let inverse = q * DMatrix::from_diagonal(&root) * q.transpose();
        Ok(Self {
            matrix: (&matrix + matrix.transpose()) * 0.5,
            inverse: (&inverse + inverse.transpose()) * 0.5,
            regularization: c,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest singular value (= largest eigenvalue, A being SPD).
    pub fn sigma_max(&self) -> f64 {
        if self.dim() == 1 {
            return self.matrix[(0, 0)];
        }
        self.matrix.clone().symmetric_eigen().eigenvalues.max()
    }
}

/// The prox objective
/// `g(x') = η⟨v̂, pivot - x'⟩ + (c/2)‖pivot - x'‖² + D_R(x', pivot)`.
#[derive(Debug, Clone)]
pub struct ProxProblem<'a> {
    pub pivot: DVector<f64>,
    pub direction: DVector<f64>,
    pub eta: f64,
    pub quad_coef: f64,
    pub barrier: &'a Barrier,
    pivot_grad: DVector<f64>,
}

impl<'a> ProxProblem<'a> {
    pub fn new(
        barrier: &'a Barrier,
        pivot: DVector<f64>,
        direction: DVector<f64>,
        eta: f64,
        quad_coef: f64,
    ) -> Result<Self> {
        if !(eta > 0.0) || !(quad_coef >= 0.0) {
            return Err(Error::Param("prox needs eta > 0 and quad_coef ≥ 0".into()));
        }
        if direction.len() != barrier.dim() {
            return Err(Error::Param("direction dimension mismatch".into()));
        }
        if direction.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("direction must be finite".into()));
        }
        barrier.require_interior(&pivot)?;
        let pivot_grad = barrier.gradient(&pivot)?;
        Ok(Self { pivot, direction, eta, quad_coef, barrier, pivot_grad })
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = self.barrier.gradient(x)? - &self.pivot_grad;
        g.axpy(-self.eta, &self.direction, 1.0);
        g.axpy(self.quad_coef, &(x - &self.pivot), 1.0);
        Ok(g)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut h = self.barrier.hessian(x)?;
        for k in 0..h.nrows() {
            h[(k, k)] += self.quad_coef;
        }
        Ok(h)
    }

    /// `g(x + step) - g(x)`.
    pub fn objective_delta(&self, x: &DVector<f64>, step: &DVector<f64>) -> Result<f64> {
        let linear = -self.eta * self.direction.dot(step) - self.pivot_grad.dot(step);
        let quad = self.quad_coef * (step.dot(&(x - &self.pivot)) + 0.5 * step.norm_squared());
        Ok(linear + quad + self.barrier.value_delta(x, step)?)
    }

    /// `g(x) - g(pivot)`; `g(pivot) = 0`.
    pub fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        self.objective_delta(&self.pivot, &(x - &self.pivot))
    }

    fn newton_step(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, f64)> {
        let grad = self.gradient(x)?;
        let hess = self.hessian(x)?;
        let chol = hess.cholesky().ok_or(Error::Singularity(0.0))?;
        let step = -chol.solve(&grad);
        let decrement = (-grad.dot(&step)).max(0.0).sqrt();
        Ok((grad, step, decrement))
    }

    /// `λ(x, g) = ‖∇g(x)‖` in the dual local norm of `∇²g(x)`.
    pub fn newton_decrement(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.newton_step(x)?.2)
    }

    /// Minimizer of `g` over the set.
    pub fn solve(&self) -> Result<DVector<f64>> {
        if self.barrier.is_zero() {
            if !(self.quad_coef > 0.0) {
                return Err(Error::Singularity(0.0));
            }
            return Ok(&self.pivot + &self.direction * (self.eta / self.quad_coef));
        }
        let mut x = self.pivot.clone();
        let mut decrement = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            let (grad, step, dec) = self.newton_step(&x)?;
            decrement = dec;
            if decrement <= NEWTON_TOL {
                return Ok(x);
            }
            let slope = grad.dot(&step);
            let mut s = 1.0;
            loop {
                let trial = &step * s;
                if self.barrier.is_interior(&(&x + &trial)) {
                    if decrement < PURE_NEWTON_REGION {
                        break;
                    }
                    if self.objective_delta(&x, &trial)? <= ARMIJO * s * slope {
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-20 {
                    return Err(Error::Convergence { iterations: 0, residual: decrement });
                }
            }
            x += step * s;
        }
        let final_dec = self.newton_decrement(&x).unwrap_or(decrement);
        if final_dec <= NEWTON_ACCEPT {
            Ok(x)
        } else {
            Err(Error::Convergence { iterations: NEWTON_MAX_ITER, residual: final_dec })
        }
    }
}
