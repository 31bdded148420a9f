//! Newton–Raphson on finite-difference derivatives.
//!
//! Variables are rescaled by their starting magnitude so a relative step is
//! the same size in every coordinate. The Hessian uses a wider step than
//! the gradient: second differences at `1e-6` are swamped by rounding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::fit::{evaluate, FitResult};
use super::objective::{ssr, LikelihoodForm, Objective};
use super::optimizer::Bound;
use crate::data::BattleSeries;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub max_iterations: usize,
    /// Stop when `‖g_i·max(|x_i|,1)‖ / max(|f|,1)` drops below this.
    pub gradient_tolerance: f64,
    pub gradient_step: f64,
    pub hessian_step: f64,
    pub max_condition: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            gradient_step: 1e-6,
            hessian_step: 1e-3,
            max_condition: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Scaled gradient norm at `x` over the coordinates not held at a bound.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Central-difference gradient of `f` in the coordinates `free`.
fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], free: &[usize], rel: f64) -> Vec<f64> {
    free.iter()
        .map(|&i| {
            let h = rel * x[i].abs().max(1.0);
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64, free: &[usize], rel: f64) -> (DMatrix<f64>, f64) {
    let k = free.len();
    let steps: Vec<f64> = free.iter().map(|&i| rel * x[i].abs().max(1.0)).collect();
    let mut h = DMatrix::zeros(k, k);
    let mut largest = fx.abs();
    let at = |moves: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, d) in moves {
            y[i] += d;
        }
        f(&y)
    };
    for a in 0..k {
        let (i, hi) = (free[a], steps[a]);
        let up = at(&[(i, hi)]);
        let dn = at(&[(i, -hi)]);
        largest = largest.max(up.abs()).max(dn.abs());
        h[(a, a)] = (up - 2.0 * fx + dn) / (hi * hi);
        for b in 0..a {
            let (j, hj) = (free[b], steps[b]);
            let pp = at(&[(i, hi), (j, hj)]);
            let pm = at(&[(i, hi), (j, -hj)]);
            let mp = at(&[(i, -hi), (j, hj)]);
            let mm = at(&[(i, -hi), (j, -hj)]);
            largest = largest.max(pp.abs()).max(pm.abs()).max(mp.abs()).max(mm.abs());
            let v = (pp - pm - mp + mm) / (4.0 * hi * hj);
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    (h, largest)
}

/// Minimizes `f` inside `bounds` from `x0`. Pinned coordinates stay put, as
/// do coordinates sitting on a bound with the gradient pushing outward.
///
/// Converged means the scaled gradient norm is below `gradient_tolerance`,
/// or the Newton decrement says `f` cannot drop by more than its own
/// rounding error.
///
/// Fails with [`Error::IllConditioned`] when the Hessian's eigenvalues
/// spread by more than `max_condition`, or the smallest cannot be told apart
/// from finite-difference rounding.
pub fn newton_minimize<F>(f: F, x0: &[f64], bounds: &[Bound], cfg: &NewtonConfig) -> Result<NewtonOutcome>
where
    F: Fn(&[f64]) -> f64,
{
    if x0.len() != bounds.len() {
        return Err(Error::InvalidConfig(format!("{} values but {} bounds", x0.len(), bounds.len())));
    }
    if let Some(i) = (0..x0.len()).find(|&i| !bounds[i].contains(x0[i]) || !x0[i].is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "start value {} of coordinate {i} is outside [{}, {}]",
            x0[i], bounds[i].lo, bounds[i].hi
        )));
    }
    // work in u = x / scale
    let scale: Vec<f64> = x0.iter().map(|v| if *v != 0.0 { v.abs() } else { 1.0 }).collect();
    let to_x = |u: &[f64]| -> Vec<f64> { u.iter().zip(&scale).map(|(u, s)| u * s).collect() };
    let g = |u: &[f64]| {
        let v = f(&to_x(u));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let ub: Vec<Bound> = bounds.iter().zip(&scale).map(|(b, s)| Bound::new(b.lo / s, b.hi / s)).collect();
    let mut u: Vec<f64> = x0.iter().zip(&scale).map(|(x, s)| x / s).collect();
    let mut fu = g(&u);
    if !fu.is_finite() {
        return Err(Error::Diverged {
            restarts: 1,
            detail: "objective is not finite at the start".into(),
        });
    }
    let movable: Vec<usize> = (0..u.len()).filter(|&i| !ub[i].is_pinned()).collect();

    let norm_of = |u: &[f64], grad: &[f64], idx: &[usize], fu: f64| -> f64 {
        let s: f64 = idx
            .iter()
            .zip(grad)
            .map(|(&i, gi)| (gi * u[i].abs().max(1.0)).powi(2))
            .sum();
        s.sqrt() / fu.abs().max(1.0)
    };
    let mut iterations = 0;
    loop {
        let full = gradient(&g, &u, &movable, cfg.gradient_step);
        let mut free = Vec::new();
        let mut grad = Vec::new();
        for (k, &i) in movable.iter().enumerate() {
            let gi = full[k];
            let blocked = (u[i] <= ub[i].lo && gi > 0.0) || (u[i] >= ub[i].hi && gi < 0.0);
            if !blocked {
                free.push(i);
                grad.push(gi);
            }
        }
        let gnorm = norm_of(&u, &grad, &free, fu);
        let done = |u: Vec<f64>, fu: f64, converged: bool, iterations: usize| NewtonOutcome {
            x: to_x(&u),
            value: fu,
            gradient_norm: gnorm,
            iterations,
            converged,
        };
        if gnorm < cfg.gradient_tolerance || free.is_empty() {
            return Ok(done(u, fu, true, iterations));
        }

        let (h, largest) = hessian(&g, &u, fu, &free, cfg.hessian_step);
        let eig = SymmetricEigen::new(h);
        let abs: Vec<f64> = eig.eigenvalues.iter().map(|l| l.abs()).collect();
        let lmax = abs.iter().cloned().fold(0.0, f64::max);
        let lmin = abs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hmin = free.iter().map(|&i| cfg.hessian_step * u[i].abs().max(1.0)).fold(f64::INFINITY, f64::min);
        let noise = 64.0 * f64::EPSILON * largest.max(1.0) / (hmin * hmin);
        let condition = if lmin <= noise || lmax == 0.0 { f64::INFINITY } else { lmax / lmin };
        if !(condition <= cfg.max_condition) {
            return Err(Error::IllConditioned {
                condition,
                iterations,
                last: to_x(&u),
            });
        }

        // Newton step on |H| so saddles are left rather than approached
        let gv = DVector::from_vec(grad.clone());
        let coef = eig.eigenvectors.transpose() * &gv;
        let scaled = DVector::from_iterator(coef.len(), coef.iter().zip(&abs).map(|(c, l)| c / l));
        let step = -(&eig.eigenvectors * scaled);
        // predicted decrease below rounding of f: no step can still help
        let decrement: f64 = -0.5 * step.dot(&gv);
        if decrement <= 4.0 * f64::EPSILON * fu.abs().max(1.0) {
            return Ok(done(u, fu, true, iterations));
        }
        if iterations >= cfg.max_iterations {
            return Ok(done(u, fu, false, iterations));
        }

        iterations += 1;
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let mut trial = u.clone();
            for (k, &i) in free.iter().enumerate() {
                trial[i] = ub[i].clamp(u[i] + alpha * step[k]);
            }
            let ft = g(&trial);
            if ft < fu || (ft == fu && alpha == 1.0) {
                u = trial;
                fu = ft;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            // no descent along the Newton direction: we are at rounding level
            let full = gradient(&g, &u, &free, cfg.gradient_step);
            let gnorm = norm_of(&u, &full, &free, fu);
            return Ok(NewtonOutcome {
                x: to_x(&u),
                value: fu,
                gradient_norm: gnorm,
                iterations,
                converged: gnorm < cfg.gradient_tolerance,
            });
        }
    }
}

/// Newton–Raphson on the SSR of `init`'s layout, over all parameters within
/// `bounds` (in [`ModelSpec::to_vector`] order; `None` leaves them free).
pub fn newton_raphson_fit(
    series: &BattleSeries,
    init: &ModelSpec,
    bounds: Option<&[Bound]>,
    cfg: &NewtonConfig,
) -> Result<FitResult> {
    init.validate()?;
    let x0 = init.to_vector();
    let open = vec![Bound::new(f64::NEG_INFINITY, f64::INFINITY); x0.len()];
    let bounds = bounds.unwrap_or(&open);
    let layout = init.layout.clone();
    let objective = |v: &[f64]| {
        ssr(&ModelSpec::from_vector(&layout, v), series).unwrap_or(f64::INFINITY)
    };
    let out = newton_minimize(objective, &x0, bounds, cfg)?;
    let model = ModelSpec::new(layout.clone(), ModelSpec::from_vector(&layout, &out.x).params)?;
    let mut result = evaluate(model, series, Objective::Ssr, LikelihoodForm::Pooled)?;
    result.converged = out.converged;
    result.iterations = out.iterations;
    Ok(result)
}
