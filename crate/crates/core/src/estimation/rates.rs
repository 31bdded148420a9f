//! Inner solvers for the attrition rates at fixed exponents. Predictions are
//! linear in the rates, so both problems are convex and small (one unknown
//! per shooter category).

use nalgebra::{DMatrix, DVector};

use super::optimizer::Bound;

#[derive(Clone, Copy, PartialEq)]
enum Slot {
    Free,
    Lower,
    Upper,
}

/// Box-constrained linear least squares `min ||obs − Σ_i r_i·col_i||²`.
///
/// Exact: every free/lower/upper assignment of the variables is solved
/// and the best feasible one kept, so this is only meant for a handful of
/// categories. Returns the rates and the residual sum of squares.
pub(crate) fn box_least_squares(columns: &[Vec<f64>], obs: &[f64], bounds: &[Bound]) -> Option<(Vec<f64>, f64)> {
    let f = columns.len();
    let n = obs.len();
    if columns.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    // work with unit-norm columns so wildly different regressor scales solve cleanly
    let norms: Vec<f64> = columns.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if norms.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let scaled: Vec<Vec<f64>> = columns
        .iter()
        .zip(&norms)
        .map(|(c, &s)| if s > 0.0 { c.iter().map(|v| v / s).collect() } else { c.clone() })
        .collect();
    let zb: Vec<(f64, f64)> = bounds
        .iter()
        .zip(&norms)
        .map(|(b, &s)| if s > 0.0 { (b.lo * s, b.hi * s) } else { (b.lo, b.hi) })
        .collect();

    let mut slots = vec![Slot::Free; f];
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        if let Some(z) = solve_assignment(&scaled, obs, &zb, &norms, &slots) {
            let fitted: Vec<f64> = (0..n).map(|d| (0..f).map(|i| scaled[i][d] * z[i]).sum()).collect();
            let s: f64 = fitted.iter().zip(obs).map(|(p, o)| (o - p).powi(2)).sum();
            if s.is_finite() && best.as_ref().map_or(true, |(_, b)| s < *b) {
                best = Some((z, s));
            }
        }
        // next assignment in base 3
        let mut k = 0;
        loop {
            if k == f {
                return best.map(|(z, s)| {
                    let rates = z
                        .iter()
                        .zip(&norms)
                        .zip(bounds)
                        .map(|((z, &nrm), b)| if nrm > 0.0 { (z / nrm).clamp(b.lo, b.hi) } else { *z })
                        .collect();
                    (rates, s)
                });
            }
            slots[k] = match slots[k] {
                Slot::Free => Slot::Lower,
                Slot::Lower => Slot::Upper,
                Slot::Upper => Slot::Free,
            };
            if slots[k] != Slot::Free {
                break;
            }
            k += 1;
        }
    }
}

fn solve_assignment(cols: &[Vec<f64>], obs: &[f64], zb: &[(f64, f64)], norms: &[f64], slots: &[Slot]) -> Option<Vec<f64>> {
    let f = cols.len();
    let n = obs.len();
    let mut z = vec![0.0; f];
    let mut free = Vec::new();
    for i in 0..f {
        if norms[i] == 0.0 {
            // regressor is identically zero; the rate is irrelevant
            if slots[i] != Slot::Free {
                return None;
            }
            z[i] = 0.0_f64.clamp(zb[i].0, zb[i].1);
            continue;
        }
        match slots[i] {
            Slot::Free => free.push(i),
            Slot::Lower => z[i] = zb[i].0,
            Slot::Upper => {
                if !zb[i].1.is_finite() {
                    return None;
                }
                z[i] = zb[i].1
            }
        }
        if !z[i].is_finite() {
            return None;
        }
    }
    if free.is_empty() {
        return Some(z);
    }
    let resid: Vec<f64> = (0..n)
        .map(|d| obs[d] - (0..f).filter(|i| !free.contains(i)).map(|i| cols[i][d] * z[i]).sum::<f64>())
        .collect();
    let a = DMatrix::from_fn(n, free.len(), |d, j| cols[free[j]][d]);
    let rhs = DVector::from_vec(resid);
    let sol = a.clone().svd(true, true);
    let tol = 1e-12 * sol.singular_values.max();
    if sol.singular_values.iter().any(|s| *s <= tol) {
        return None;
    }
    let x = sol.solve(&rhs, tol).ok()?;
    let slack = 1e-12;
    for (j, &i) in free.iter().enumerate() {
        let (lo, hi) = zb[i];
        let v = x[j];
        let tol_i = slack * (1.0 + v.abs());
        if !(v >= lo - tol_i && v <= hi + tol_i) {
            return None;
        }
        z[i] = v.clamp(lo, hi);
    }
    Some(z)
}

/// Maximizes the pooled Poisson log-likelihood `Σ_t L_t·ln(Σ_i r_i g_it) − s·Σ_i r_i G_i`
/// over a box by projected Newton steps with backtracking.
pub(crate) fn poisson_rates(columns: &[Vec<f64>], counts: &[f64], step: f64, start: &[f64], bounds: &[Bound]) -> Option<Vec<f64>> {
    let f = columns.len();
    let n = counts.len();
    if columns.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    let sums: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() * step).collect();
    let total: f64 = counts.iter().sum();

    if f == 1 {
        let r = if sums[0] > 0.0 { total / sums[0] } else { bounds[0].lo };
        return Some(vec![r.clamp(bounds[0].lo, bounds[0].hi)]);
    }

    let value = |r: &[f64]| -> f64 {
        let mut ll = 0.0;
        for d in 0..n {
            let lam: f64 = (0..f).map(|i| r[i] * columns[i][d]).sum();
            if counts[d] > 0.0 {
                if !(lam > 0.0) {
                    return f64::NEG_INFINITY;
                }
                ll += counts[d] * lam.ln();
            }
        }
        ll - (0..f).map(|i| r[i] * sums[i]).sum::<f64>()
    };

    // one multiplicative (EM) step from a positive start fixes the overall scale
    let mut r: Vec<f64> = start
        .iter()
        .zip(bounds)
        .map(|(v, b)| {
            let v = if v.is_finite() && *v > 0.0 { *v } else { 1.0 };
            v.clamp(b.lo.max(f64::MIN_POSITIVE), b.hi)
        })
        .collect();
    r = em_step(columns, counts, &sums, &r, bounds);
    let mut current = value(&r);

    for _ in 0..200 {
        let lam: Vec<f64> = (0..n).map(|d| (0..f).map(|i| r[i] * columns[i][d]).sum()).collect();
        let mut grad = vec![0.0; f];
        let mut hess = DMatrix::<f64>::zeros(f, f);
        for d in 0..n {
            if counts[d] <= 0.0 || lam[d] <= 0.0 {
                continue;
            }
            for i in 0..f {
                grad[i] += counts[d] * columns[i][d] / lam[d];
                for j in 0..f {
                    hess[(i, j)] -= counts[d] * columns[i][d] * columns[j][d] / (lam[d] * lam[d]);
                }
            }
        }
        for i in 0..f {
            grad[i] -= sums[i];
        }
        let free: Vec<usize> = (0..f)
            .filter(|&i| !((r[i] <= bounds[i].lo && grad[i] < 0.0) || (r[i] >= bounds[i].hi && grad[i] > 0.0)))
            .collect();
        let proj_grad: f64 = free.iter().map(|&i| (grad[i] * r[i].abs().max(1e-300)).abs()).fold(0.0, f64::max);
        if proj_grad <= 1e-13 * current.abs().max(1.0) {
            break;
        }

        let mut dir = vec![0.0; f];
        let newton = if free.is_empty() {
            None
        } else {
            let h = DMatrix::from_fn(free.len(), free.len(), |a, b| -hess[(free[a], free[b])]);
            let g = DVector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));
            h.cholesky().map(|c| c.solve(&g))
        };
        match newton {
            Some(d) => {
                for (k, &i) in free.iter().enumerate() {
                    dir[i] = d[k];
                }
            }
            None => {
                let next = em_step(columns, counts, &sums, &r, bounds);
                for i in 0..f {
                    dir[i] = next[i] - r[i];
                }
            }
        }

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..f).map(|i| (r[i] + alpha * dir[i]).clamp(bounds[i].lo, bounds[i].hi)).collect();
            let v = value(&trial);
            if v >= current {
                let gain = v - current;
                r = trial;
                current = v;
                accepted = true;
                if gain <= 1e-15 * current.abs().max(1.0) {
                    return Some(r);
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some(r)
}

fn em_step(columns: &[Vec<f64>], counts: &[f64], sums: &[f64], r: &[f64], bounds: &[Bound]) -> Vec<f64> {
    let f = columns.len();
    let n = counts.len();
    let lam: Vec<f64> = (0..n).map(|d| (0..f).map(|i| r[i] * columns[i][d]).sum()).collect();
    (0..f)
        .map(|i| {
            if sums[i] <= 0.0 {
                return r[i];
            }
            let num: f64 = (0..n)
                .filter(|&d| counts[d] > 0.0 && lam[d] > 0.0)
                .map(|d| counts[d] * columns[i][d] / lam[d])
                .sum();
            (r[i] * num / sums[i]).clamp(bounds[i].lo, bounds[i].hi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(f: usize) -> Vec<Bound> {
        vec![Bound::new(0.0, f64::INFINITY); f]
    }

    #[test]
    fn exact_solution_recovered() {
        let c1 = vec![1.0, 2.0, 3.0, 4.0];
        let c2 = vec![1e4, 0.5e4, 2e4, 1e4];
        let obs: Vec<f64> = (0..4).map(|d| 2.5 * c1[d] + 3e-3 * c2[d]).collect();
        let (r, s) = box_least_squares(&[c1, c2], &obs, &open(2)).unwrap();
        assert!((r[0] - 2.5).abs() < 1e-9);
        assert!((r[1] - 3e-3).abs() < 1e-12);
        assert!(s < 1e-18);
    }

    #[test]
    fn nonnegativity_clamp() {
        // unconstrained optimum has a negative second rate
        let c1 = vec![1.0, 2.0, 3.0];
        let c2 = vec![1.0, 1.0, 1.0];
        let obs = vec![1.0, 3.0, 5.0];
        let (r, s) = box_least_squares(&[c1.clone(), c2], &obs, &open(2)).unwrap();
        assert_eq!(r[1], 0.0);
        // one-variable least squares on c1 alone
        let r1 = c1.iter().zip(&obs).map(|(a, b)| a * b).sum::<f64>() / c1.iter().map(|a| a * a).sum::<f64>();
        assert!((r[0] - r1).abs() < 1e-12);
        let expect: f64 = c1.iter().zip(&obs).map(|(a, b)| (b - r1 * a).powi(2)).sum();
        assert!((s - expect).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_active() {
        let c = vec![1.0, 1.0];
        let obs = vec![10.0, 10.0];
        let (r, s) = box_least_squares(&[c], &obs, &[Bound::new(0.0, 4.0)]).unwrap();
        assert_eq!(r[0], 4.0);
        assert_eq!(s, 72.0);
    }

    #[test]
    fn poisson_single_day_hits_count() {
        let cols = vec![vec![3.0], vec![40.0]];
        let r = poisson_rates(&cols, &[117.0], 1.0, &[0.5, 0.5], &open(2)).unwrap();
        let total = r[0] * 3.0 + r[1] * 40.0;
        assert!((total - 117.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn poisson_matches_stationarity() {
        let cols = vec![vec![1.0, 2.0, 3.0, 1.5], vec![2.0, 1.0, 0.5, 2.5]];
        let counts = [10.0, 12.0, 15.0, 14.0];
        let r = poisson_rates(&cols, &counts, 1.0, &[1.0, 1.0], &open(2)).unwrap();
        for i in 0..2 {
            let g: f64 = (0..4)
                .map(|d| counts[d] * cols[i][d] / (r[0] * cols[0][d] + r[1] * cols[1][d]))
                .sum::<f64>()
                - cols[i].iter().sum::<f64>();
            assert!(g.abs() < 1e-8 || r[i] == 0.0, "gradient {g} at {r:?}");
        }
    }
}
