mod common;

use common::{golden_max, raw_losses, raw_regressors, rel_err, synthetic, two_category};
use lanfit_core::estimation::{
    concentrated_rates, fit, fit_history, log_likelihood, log_likelihood_with, loglinear_fit, newton_raphson_fit, ssr,
    Bound, FitConfig, LikelihoodForm, NewtonConfig, Objective, ParamId, ParamKind, RateEstimator, RateMode,
};
use lanfit_core::{kursk_dataset, BattleSeries, CategoryParams, DayWindow, Error, ModelLayout, ModelSpec, Side};

fn days(first: u32, last: u32) -> BattleSeries {
    kursk_dataset().slice(DayWindow::new(first, last).unwrap()).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_exponent_rates_are_column_sums() {
    let k = kursk_dataset();
    let m = two_category([[1.0, 1.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0]]);
    let r = concentrated_rates(&m, &k, RateEstimator::Shared).unwrap();
    let lx: f64 = raw_losses(Side::X, 1..=14).iter().sum();
    let ly: f64 = raw_losses(Side::Y, 1..=14).iter().sum();
    assert_eq!(lx, 2276.0);
    assert_eq!(ly, 1229.0);
    for i in 0..2 {
        assert!(rel_err(r.a[i], 2276.0 / 28.0) < 1e-15);
        assert!(rel_err(r.b[i], 1229.0 / 28.0) < 1e-15);
    }
}

#[test]
fn concentrated_rates_match_raw_closed_form() {
    let k = kursk_dataset();
    let (p, q) = ([0.3, -0.4], [0.7, 0.2]);
    let m = two_category([[1.0, 1.0, p[0], q[0]], [1.0, 1.0, p[1], q[1]]]);
    for (side, got_shared, got_each) in [
        (Side::X, concentrated_rates(&m, &k, RateEstimator::Shared).unwrap().a, concentrated_rates(&m, &k, RateEstimator::PerCategory).unwrap().a),
        (Side::Y, concentrated_rates(&m, &k, RateEstimator::Shared).unwrap().b, concentrated_rates(&m, &k, RateEstimator::PerCategory).unwrap().b),
    ] {
        let g = raw_regressors(side, &p, &q, 1..=14);
        let total: f64 = raw_losses(side, 1..=14).iter().sum();
        let sums: Vec<f64> = g.iter().map(|c| c.iter().sum()).collect();
        for i in 0..2 {
            assert!(rel_err(got_shared[i], total / (sums[0] + sums[1])) < 1e-12);
            assert!(rel_err(got_each[i], total / sums[i]) < 1e-12);
        }
    }
}

#[test]
fn per_category_rates_maximize_per_component_likelihood() {
    let s = days(2, 14);
    let (p, q) = ([0.25, 0.1], [-0.3, 0.45]);
    let m = two_category([[1.0, 1.0, p[0], q[0]], [1.0, 1.0, p[1], q[1]]]);
    let r = concentrated_rates(&m, &s, RateEstimator::PerCategory).unwrap();
    for side in [Side::X, Side::Y] {
        let g = raw_regressors(side, &p, &q, 2..=14);
        let l = raw_losses(side, 2..=14);
        for i in 0..2 {
            let ll = |ln_r: f64| {
                let rate = ln_r.exp();
                g[i].iter().zip(&l).map(|(gd, ld)| ld * (rate * gd).ln() - rate * gd).sum::<f64>()
            };
            let best = golden_max(ll, -100.0, 100.0, 200).exp();
            let got = if side == Side::X { r.a[i] } else { r.b[i] };
            assert!(rel_err(got, best) < 1e-6, "{side} {i}: {got} vs {best}");
        }
    }
}

#[test]
fn loglinear_recovers_exact_power_law() {
    let k = days(2, 14);
    let truth = ModelSpec::new(ModelLayout::homogeneous("tank"), vec![CategoryParams::new(0.01, 0.01, 1.0, 1.0)]).unwrap();
    let s = synthetic(&truth, &k);
    let got = loglinear_fit(&s, "tank").unwrap();
    let c = &got.params[0];
    assert!(rel_err(c.a, 0.01) < 1e-6, "{c:?}");
    assert!(rel_err(c.b, 0.01) < 1e-6, "{c:?}");
    assert!((c.p - 1.0).abs() < 1e-6 && (c.q - 1.0).abs() < 1e-6, "{c:?}");
}

#[test]
fn loglinear_rejects_zero_losses() {
    // day 13 has no X artillery losses
    let err = loglinear_fit(&kursk_dataset(), "artillery").unwrap_err();
    assert!(matches!(err, Error::LogLinearDomain { day: 13, .. }), "{err}");
}

#[test]
fn loglinear_needs_three_days() {
    let err = loglinear_fit(&days(3, 4), "tank").unwrap_err();
    assert!(matches!(err, Error::InsufficientObservations { needed: 3, got: 2 }));
    assert!(err.to_string().contains("insufficient observations"));
}

#[test]
fn newton_is_stationary_at_the_homogeneous_optimum() {
    let s = days(2, 14);
    let cfg = FitConfig::new(ModelLayout::homogeneous("tank"), Objective::Ssr);
    let best = fit(&s, &cfg).unwrap();
    assert!(best.converged);
    let start = best.model.to_vector();
    let out = newton_raphson_fit(&s, &best.model, Some(&cfg.bound_vector()), &NewtonConfig::default()).unwrap();
    assert!(out.converged);
    let end = out.model.to_vector();
    let change = start.iter().zip(&end).map(|(a, b)| rel_err(*b, *a)).fold(0.0, f64::max);
    assert!(change < 1e-4, "moved by {change}");

    assert!(scaled_gradient_norm(&s, &out.model) < 1e-6);
}

/// Central-difference gradient of the SSR, in variables scaled by their
/// magnitude and relative to the objective.
fn scaled_gradient_norm(s: &BattleSeries, model: &ModelSpec) -> f64 {
    let v = model.to_vector();
    let f = |v: &[f64]| ssr(&ModelSpec::from_vector(&model.layout, v), s).unwrap();
    let f0 = f(&v);
    let mut norm = 0.0;
    for i in 0..v.len() {
        let scale = v[i].abs().max(1.0);
        let h = 1e-6;
        let mut up = v.clone();
        let mut down = v.clone();
        up[i] += h * scale;
        down[i] -= h * scale;
        let d = (f(&up) - f(&down)) / (2.0 * h) / f0;
        norm += d * d;
    }
    norm.sqrt()
}

#[test]
fn fit_optimum_is_stationary() {
    let s = days(2, 14);
    let r = fit(&s, &FitConfig::new(ModelLayout::homogeneous("tank"), Objective::Ssr)).unwrap();
    let g = scaled_gradient_norm(&s, &r.model);
    assert!(g < 1e-5, "{g} at {:?}", r.model.to_vector());
}

#[test]
fn newton_reports_singular_hessian() {
    let s = days(2, 14);
    let m = two_category([[0.5, 0.5, 0.0, 0.0], [0.5, 0.5, 0.0, 0.0]]);
    let mut bounds = vec![Bound::new(0.0, 100.0); 4];
    bounds.extend([Bound::pinned(0.0); 4]);
    let err = newton_raphson_fit(&s, &m, Some(&bounds), &NewtonConfig::default()).unwrap_err();
    assert!(matches!(err, Error::IllConditioned { iterations: 0, .. }), "{err}");
}

#[test]
fn fit_recovers_homogeneous_model() {
    let k = days(2, 14);
    let truth = ModelSpec::new(ModelLayout::homogeneous("tank"), vec![CategoryParams::new(1.0, 1.0, 0.5, 0.5)]).unwrap();
    let s = synthetic(&truth, &k);
    let r = fit(&s, &FitConfig::new(truth.layout.clone(), Objective::Ssr)).unwrap();
    assert!(r.objective_value < 1e-6, "{}", r.objective_value);
    assert!(max_abs_diff(&r.model.to_vector(), &truth.to_vector()) < 1e-3);
}

#[test]
fn fit_recovers_two_category_model() {
    let k = days(2, 14);
    let truth = two_category([[0.02, 0.05, 0.6, 0.3], [0.01, 0.004, 0.4, 0.7]]);
    let s = synthetic(&truth, &k);
    let r = fit(&s, &FitConfig::new(truth.layout.clone(), Objective::Ssr)).unwrap();
    assert!(r.objective_value < 1e-6, "{}", r.objective_value);
    assert!(max_abs_diff(&r.model.to_vector(), &truth.to_vector()) < 1e-3, "{:?}", r.model.to_vector());
}

#[test]
fn fit_is_deterministic() {
    let s = days(2, 14);
    let mut cfg = FitConfig::heterogeneous(&s, Objective::Ssr);
    cfg.restarts = 6;
    cfg.seed = 17;
    let a = fit(&s, &cfg).unwrap();
    let b = fit(&s, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ssr_is_the_sum_of_squared_residuals() {
    let s = days(2, 14);
    let mut cfg = FitConfig::heterogeneous(&s, Objective::Ssr);
    cfg.restarts = 4;
    let r = fit(&s, &cfg).unwrap();
    let by_hand: f64 = r.residuals.x.iter().map(|v| v * v).sum::<f64>() + r.residuals.y.iter().map(|v| v * v).sum::<f64>();
    assert_eq!(ssr(&r.model, &s).unwrap(), by_hand);
    assert_eq!(r.objective_value, by_hand);
    for (d, row) in r.breakdown.rows.iter().enumerate() {
        assert_eq!(r.residuals.x[d], r.observed.x[d] - row.x.total);
        assert_eq!(r.residuals.y[d], r.observed.y[d] - row.y.total);
    }
}

#[test]
fn history_is_monotone() {
    let s = days(2, 14);
    for objective in [Objective::Ssr, Objective::Loglik] {
        let mut cfg = FitConfig::heterogeneous(&s, objective);
        cfg.restarts = 3;
        let h = fit_history(&s, &cfg).unwrap();
        assert!(h.len() > 1);
        for w in h.windows(2) {
            match objective {
                Objective::Ssr => assert!(w[1] <= w[0]),
                Objective::Loglik => assert!(w[1] >= w[0]),
            }
        }
    }
}

fn pinned_exponents(s: &BattleSeries, objective: Objective, p: [f64; 2], q: [f64; 2]) -> FitConfig {
    let mut cfg = FitConfig::heterogeneous(s, objective);
    for i in 0..2 {
        cfg = cfg.fix(ParamId::new(ParamKind::P, i), p[i]).fix(ParamId::new(ParamKind::Q, i), q[i]);
    }
    cfg
}

#[test]
fn free_rates_agree_with_concentrated_per_component_rates() {
    let s = days(2, 14);
    let (p, q) = ([0.2, 0.05], [0.3, 0.1]);
    let mut cfg = pinned_exponents(&s, Objective::Loglik, p, q);
    cfg.likelihood = LikelihoodForm::PerComponent;
    cfg.rate_mode = RateMode::Free;
    cfg.restarts = 4;
    let free = fit(&s, &cfg).unwrap();
    let m = two_category([[1.0, 1.0, p[0], q[0]], [1.0, 1.0, p[1], q[1]]]);
    let r = concentrated_rates(&m, &s, RateEstimator::PerCategory).unwrap();
    let conc = m.with_rates(&r.a, &r.b);
    let want = log_likelihood_with(&conc, &s, LikelihoodForm::PerComponent).unwrap();
    assert!(rel_err(free.objective_value, want) < 1e-6, "{} vs {want}", free.objective_value);
}

#[test]
fn free_rates_agree_with_profiled_pooled_rates() {
    let s = days(2, 14);
    let (p, q) = ([0.21, 0.02], [0.28, 0.04]);
    let mut cfg = pinned_exponents(&s, Objective::Loglik, p, q);
    let profiled = fit(&s, &cfg).unwrap();
    cfg.rate_mode = RateMode::Free;
    cfg.restarts = 4;
    let free = fit(&s, &cfg).unwrap();
    assert!(
        rel_err(free.objective_value, profiled.objective_value) < 1e-6,
        "{} vs {}",
        free.objective_value,
        profiled.objective_value
    );
    assert_eq!(profiled.objective_value, log_likelihood(&profiled.model, &s).unwrap());
}

#[test]
fn every_single_day_fits_exactly() {
    for day in 1..=14 {
        let s = days(day, day);
        let r = fit(&s, &FitConfig::heterogeneous(&s, Objective::Ssr)).unwrap();
        assert!(r.objective_value < 1e-3, "day {day}: {}", r.objective_value);
    }
}

#[test]
fn likelihood_of_unit_rates_on_one_day() {
    let s = BattleSeries::new(
        vec![1],
        vec!["tank".into()],
        lanfit_core::data::SideSeries { on_hand: vec![vec![7.0]], losses: vec![vec![1.0]] },
        lanfit_core::data::SideSeries { on_hand: vec![vec![9.0]], losses: vec![vec![1.0]] },
    )
    .unwrap();
    let m = ModelSpec::new(ModelLayout::homogeneous("tank"), vec![CategoryParams::new(1.0, 1.0, 0.0, 0.0)]).unwrap();
    assert_eq!(log_likelihood(&m, &s).unwrap(), -2.0);
    let zero = ModelSpec::new(m.layout.clone(), vec![CategoryParams::new(0.0, 1.0, 0.0, 0.0)]).unwrap();
    assert!(matches!(log_likelihood(&zero, &s), Err(Error::LogDomain { .. })));
}
