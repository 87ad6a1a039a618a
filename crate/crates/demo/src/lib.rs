//! WebAssembly bindings for the static demo page in `www/`. Each exported
//! function returns a JSON string the page draws on a canvas.

use nalgebra::DVector;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use mbg_core::games::profile_dist_sq;
use mbg_core::geometry::{Barrier, ProxProblem, ScalingMatrix};
use mbg_core::harness::{
    barrier_configs, checkpoints, fkm_config, GameSpec, ScheduleChoice,
};
use mbg_core::learners::{BarrierDynamics, BarrierLearner, FkmDynamics};
use mbg_core::sampling::{NoiseModel, RngStream};
use mbg_core::{Error, Result};

/// Longest run the page may request.
pub const MAX_HORIZON: u64 = 200_000;
const ELLIPSE_POINTS: usize = 96;

#[derive(Debug, Clone, Serialize)]
pub struct Convergence {
    pub t: Vec<u64>,
    pub barrier: Vec<f64>,
    pub fkm: Vec<f64>,
    pub x_star: Vec<f64>,
}

/// Distance to equilibrium of both learners on a random Cournot market.
pub fn cournot_convergence(n: usize, a: f64, b: f64, horizon: u64, seed: u64) -> Result<Convergence> {
    if horizon == 0 || horizon > MAX_HORIZON {
        return Err(Error::Param(format!("horizon must be in 1..={MAX_HORIZON}")));
    }
    let spec = GameSpec::random_cournot(n, a, b, seed);
    if let GameSpec::Cournot { params } = &spec {
        params.validate()?;
    }
    let built = spec.build()?;
    let game = built.game();
    let x_star = built.solve_ne()?.x_star;

    let learners = barrier_configs(&built, ScheduleChoice::Tuned, 0.0)?
        .into_iter()
        .map(BarrierLearner::new)
        .collect::<Result<Vec<_>>>()?;
    let mut barrier = BarrierDynamics::new(learners, RngStream::per_player(seed, 0, n), NoiseModel::Exact)?;
    let mut fkm = FkmDynamics::new(fkm_config(&built), RngStream::per_player(seed, 0, n), NoiseModel::Exact)?;

    let marks = checkpoints(horizon);
    let mut out = Convergence {
        t: Vec::with_capacity(marks.len()),
        barrier: Vec::with_capacity(marks.len()),
        fkm: Vec::with_capacity(marks.len()),
        x_star: x_star.iter().map(|x| x[0]).collect(),
    };
    let mut next = 0;
    for t in 1..=horizon {
        let played_b = barrier.round(game)?.played;
        let played_f = fkm.round(game)?.played;
        if marks[next] == t {
            out.t.push(t);
            out.barrier.push(profile_dist_sq(&played_b, &x_star));
            out.fkm.push(profile_dist_sq(&played_f, &x_star));
            next += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DikinView {
    pub simplex: Vec<[f64; 2]>,
    pub center: [f64; 2],
    pub ellipse: Vec<[f64; 2]>,
    /// Whether every drawn boundary point lies in the simplex.
    pub inside: bool,
}

fn simplex(budget: f64) -> Result<Barrier> {
    Barrier::budget_simplex(2, budget)
}

/// The ellipsoid `{x + A u : ‖u‖ ≤ 1}` with `A = (∇²R(x) + cI)^(-1/2)` on the
/// planar budget simplex. With `c = 0` it is the Dikin ellipsoid.
pub fn dikin_view(x: f64, y: f64, c: f64, budget: f64) -> Result<DikinView> {
    let barrier = simplex(budget)?;
    let centre = DVector::from_vec(vec![x, y]);
    let scaling = ScalingMatrix::new(&barrier, &centre, c)?;
    let ellipse: Vec<[f64; 2]> = (0..ELLIPSE_POINTS)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / ELLIPSE_POINTS as f64;
            let p = &centre + scaling.matrix() * DVector::from_vec(vec![angle.cos(), angle.sin()]);
            [p[0], p[1]]
        })
        .collect();
    let inside = ellipse
        .iter()
        .all(|p| barrier.contains(&DVector::from_vec(p.to_vec()), 1e-12));
    Ok(DikinView {
        simplex: vec![[0.0, 0.0], [budget, 0.0], [0.0, budget]],
        center: [x, y],
        ellipse,
        inside,
    })
}

/// Repeated prox steps from the analytic center along a fixed payoff
/// gradient `(gx, gy)`: the iterates drift toward the best vertex but stay
/// strictly inside.
pub fn prox_path(gx: f64, gy: f64, eta: f64, steps: usize) -> Result<Vec<[f64; 2]>> {
    let barrier = simplex(1.0)?;
    let mut x = barrier.analytic_center()?;
    let direction = DVector::from_vec(vec![gx, gy]);
    let mut path = vec![[x[0], x[1]]];
    for _ in 0..steps {
        x = ProxProblem::new(&barrier, x, direction.clone(), eta, 0.0)?.solve()?;
        path.push([x[0], x[1]]);
    }
    Ok(path)
}

fn to_js<T: Serialize>(value: Result<T>) -> std::result::Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = cournotConvergence)]
pub fn cournot_convergence_js(n: usize, a: f64, b: f64, horizon: u32, seed: u32) -> std::result::Result<String, JsError> {
    to_js(cournot_convergence(n, a, b, horizon as u64, seed as u64))
}

#[wasm_bindgen(js_name = dikinView)]
pub fn dikin_view_js(x: f64, y: f64, c: f64, budget: f64) -> std::result::Result<String, JsError> {
    to_js(dikin_view(x, y, c, budget))
}

#[wasm_bindgen(js_name = proxPath)]
pub fn prox_path_js(gx: f64, gy: f64, eta: f64, steps: usize) -> std::result::Result<String, JsError> {
    to_js(prox_path(gx, gy, eta, steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_curves_line_up() {
        let c = cournot_convergence(5, 10.0, 0.1, 2_000, 3).unwrap();
        assert_eq!(c.t, checkpoints(2_000));
        assert_eq!(c.barrier.len(), c.t.len());
        assert_eq!(c.fkm.len(), c.t.len());
        assert_eq!(c.x_star.len(), 5);
        assert!(c.barrier.last().unwrap() < c.barrier.first().unwrap());
    }

    #[test]
    fn convergence_rejects_bad_inputs() {
        assert!(cournot_convergence(5, 10.0, 0.1, 0, 3).is_err());
        assert!(cournot_convergence(5, 10.0, 0.1, MAX_HORIZON + 1, 3).is_err());
        assert!(cournot_convergence(5, 10.0, -0.1, 10, 3).is_err());
    }

    #[test]
    fn dikin_ellipse_fits_in_the_simplex() {
        for &(x, y) in &[(1.0 / 3.0, 1.0 / 3.0), (0.05, 0.9), (0.01, 0.01), (0.6, 0.39)] {
            let view = dikin_view(x, y, 0.0, 1.0).unwrap();
            assert!(view.inside, "({x}, {y})");
            assert_eq!(view.ellipse.len(), ELLIPSE_POINTS);
        }
        assert!(dikin_view(0.7, 0.7, 0.0, 1.0).is_err());
    }

    #[test]
    fn regularization_shrinks_the_ellipse() {
        let spread = |v: &DikinView| v.ellipse.iter().map(|p| (p[0] - v.center[0]).abs()).fold(0.0, f64::max);
        let wide = dikin_view(0.3, 0.3, 0.0, 1.0).unwrap();
        let narrow = dikin_view(0.3, 0.3, 100.0, 1.0).unwrap();
        assert!(spread(&narrow) < spread(&wide));
    }

    #[test]
    fn prox_path_stays_interior() {
        let path = prox_path(1.0, 0.2, 0.5, 40).unwrap();
        assert_eq!(path.len(), 41);
        let barrier = simplex(1.0).unwrap();
        for p in &path {
            assert!(barrier.is_interior(&DVector::from_vec(p.to_vec())));
        }
        assert!(path.windows(2).all(|w| w[1][0] > w[0][0]));
        assert!(path[40][0] > 0.8);
    }

    #[test]
    fn bindings_return_json() {
        let text = dikin_view_js(0.2, 0.2, 1.0, 1.0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["simplex"].as_array().unwrap().len(), 3);
        let v: serde_json::Value = serde_json::from_str(&prox_path_js(0.0, 1.0, 0.1, 3).unwrap()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 4);
    }
}
