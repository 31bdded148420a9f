//! Bounded Nelder–Mead simplex search.
//!
//! Trial points are projected onto the box. The best vertex never gets
//! worse, so the recorded best-value history is monotone non-increasing.

use serde::{Deserialize, Serialize};

/// Closed interval `[lo, hi]`. `lo == hi` pins a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn pinned(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_valid(&self) -> bool {
        !self.lo.is_nan() && !self.hi.is_nan() && self.lo <= self.hi
    }

    pub fn is_pinned(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_iterations: usize,
    /// Stop when the simplex's objective spread falls below
    /// `tolerance · |f_best| + absolute_tolerance`.
    pub tolerance: f64,
    pub absolute_tolerance: f64,
    /// Initial simplex edge, relative to `max(|x_i|, 1)`.
    pub initial_step: f64,
    /// Rebuilds of the simplex around a converged point.
    pub polish_rounds: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-10,
            absolute_tolerance: 1e-300,
            initial_step: 0.1,
            polish_rounds: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub history: Vec<f64>,
}

const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

impl NelderMead {
    pub fn minimize<F>(&self, f: F, x0: &[f64], bounds: &[Bound]) -> Minimum
    where
        F: Fn(&[f64]) -> f64,
    {
        assert_eq!(x0.len(), bounds.len());
        let mut evaluations = 0usize;
        let mut eval = |x: &[f64]| {
            evaluations += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let start: Vec<f64> = x0.iter().zip(bounds).map(|(v, b)| b.clamp(*v)).collect();

        if start.is_empty() {
            let value = eval(&start);
            return Minimum {
                x: start,
                value,
                iterations: 0,
                evaluations,
                converged: true,
                history: vec![value],
            };
        }

        let mut best_x = start;
        let mut best_v = eval(&best_x);
        let mut history = Vec::new();
        let mut iterations = 0usize;
        let mut converged = false;

        for round in 0..=self.polish_rounds {
            let budget = self.max_iterations.saturating_sub(iterations);
            if budget == 0 {
                break;
            }
            let step = if round == 0 {
                self.initial_step
            } else {
                self.initial_step * 0.1
            };
            let (x, v, its, ok) = self.run(&mut eval, &best_x, best_v, bounds, step, budget, &mut history);
            iterations += its;
            let improved = best_v - v;
            let small = improved <= self.tolerance * v.abs() + self.absolute_tolerance;
            if v <= best_v {
                best_x = x;
                best_v = v;
            }
            converged = ok;
            if !ok || (round > 0 && small) {
                break;
            }
        }

        Minimum {
            x: best_x,
            value: best_v,
            iterations,
            evaluations,
            converged,
            history,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run<E>(
        &self,
        eval: &mut E,
        x0: &[f64],
        f0: f64,
        bounds: &[Bound],
        step: f64,
        budget: usize,
        history: &mut Vec<f64>,
    ) -> (Vec<f64>, f64, usize, bool)
    where
        E: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), f0));
        for i in 0..n {
            let mut x = x0.to_vec();
            let b = bounds[i];
            let mut h = step * x0[i].abs().max(1.0);
            let width = b.hi - b.lo;
            if width.is_finite() && h > 0.5 * width {
                h = 0.5 * width;
            }
            x[i] = if x0[i] + h <= b.hi { x0[i] + h } else { x0[i] - h };
            x[i] = b.clamp(x[i]);
            let v = eval(&x);
            simplex.push((x, v));
        }

        let project = |x: Vec<f64>| -> Vec<f64> { x.into_iter().zip(bounds).map(|(v, b)| b.clamp(v)).collect() };

        for it in 0..budget {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_best = simplex[0].1;
            let f_worst = simplex[n].1;
            if f_best.is_finite() && (f_worst - f_best) <= self.tolerance * f_best.abs() + self.absolute_tolerance {
                return (simplex[0].0.clone(), f_best, it, true);
            }

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / n as f64;
                }
            }
            let toward = |coef: f64, from: &[f64]| -> Vec<f64> {
                project(centroid.iter().zip(from).map(|(c, w)| c + coef * (w - c)).collect())
            };

            let worst = simplex[n].0.clone();
            let xr = toward(-ALPHA, &worst);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = toward(-GAMMA, &worst);
                let fe = eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = toward(-RHO, &worst);
                    let fc = eval(&xc);
                    (xc, fc)
                } else {
                    let xc = toward(RHO, &worst);
                    let fc = eval(&xc);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for (x, v) in simplex.iter_mut().skip(1) {
                        *x = project(best.iter().zip(x.iter()).map(|(b, w)| b + SIGMA * (w - b)).collect());
                        *v = eval(x);
                    }
                }
            }
            let current_best = simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
            history.push(current_best);
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        (simplex[0].0.clone(), simplex[0].1, budget, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let nm = NelderMead {
            tolerance: 1e-14,
            ..Default::default()
        };
        let m = nm.minimize(f, &[-1.2, 1.0], &[Bound::new(-5.0, 5.0); 2]);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 2.0).powi(2);
        let m = NelderMead::default().minimize(f, &[0.0, 0.0], &[Bound::new(-1.0, 1.0), Bound::new(-1.0, 1.0)]);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn history_is_monotone() {
        let f = |x: &[f64]| x.iter().map(|v| v.powi(4) - 3.0 * v * v + v).sum::<f64>();
        let m = NelderMead::default().minimize(f, &[2.0, -0.5, 1.0], &[Bound::new(-3.0, 3.0); 3]);
        assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn non_finite_regions_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.5 { f64::NAN } else { (x[0] - 1.0).powi(2) };
        let m = NelderMead::default().minimize(f, &[2.0], &[Bound::new(-5.0, 5.0)]);
        assert!((m.x[0] - 1.0).abs() < 1e-5);
    }
}
