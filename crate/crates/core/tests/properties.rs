use lanfit_core::data::{read_csv, SideSeries};
use lanfit_core::gof::{chi_square, ks_normal, r_squared, rmse, ssr, LossPair};
use lanfit_core::model::{closed_form_trajectory, loss_rates, state_ratio, ForceLevels};
use lanfit_core::{BattleSeries, CategoryParams, DayWindow, ModelLayout, ModelSpec};
use proptest::prelude::*;

fn side_series(n_cat: usize, n_days: usize) -> impl Strategy<Value = SideSeries> {
    let col = || prop::collection::vec(0.0f64..5000.0, n_days);
    (
        prop::collection::vec(col(), n_cat),
        prop::collection::vec(col(), n_cat),
    )
        .prop_map(|(on_hand, losses)| SideSeries { on_hand, losses })
}

fn battle_series() -> impl Strategy<Value = BattleSeries> {
    (1usize..4, 1usize..10, 1u32..20).prop_flat_map(|(n_cat, n_days, first)| {
        (side_series(n_cat, n_days), side_series(n_cat, n_days)).prop_map(move |(x, y)| {
            let days = (first..first + n_days as u32).collect();
            let cats = (0..n_cat).map(|c| format!("cat{c}")).collect();
            BattleSeries::new(days, cats, x, y).unwrap()
        })
    })
}

fn two_category_model() -> impl Strategy<Value = ModelSpec> {
    prop::collection::vec((0.0f64..3.0, 0.0f64..3.0, -1.5f64..1.5, -1.5f64..1.5), 2).prop_map(|rows| {
        ModelSpec::new(
            ModelLayout::new(vec!["tank".into(), "artillery".into()], "tank"),
            rows.into_iter().map(|(a, b, p, q)| CategoryParams::new(a, b, p, q)).collect(),
        )
        .unwrap()
    })
}

fn levels() -> impl Strategy<Value = ForceLevels> {
    (1.0f64..5000.0, 1.0f64..5000.0, 1.0f64..5000.0).prop_map(|(t, s1, s2)| ForceLevels {
        target: t,
        by_category: vec![s1, s2],
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(s in battle_series()) {
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn slice_is_idempotent(s in battle_series(), a in 0usize..10, len in 0usize..10) {
        let days = s.days();
        let first = days[a % days.len()];
        let last = days[((a % days.len()) + len).min(days.len() - 1)];
        let w = DayWindow::new(first, last).unwrap();
        let once = s.slice(w).unwrap();
        prop_assert_eq!(once.slice(w).unwrap(), once.clone());
        prop_assert_eq!(once.len(), (last - first + 1) as usize);
    }

    #[test]
    fn totals_are_sums_of_components(m in two_category_model(), x in levels(), y in levels()) {
        let (lx, ly) = loss_rates(&m, &x, &y).unwrap();
        for l in [lx, ly] {
            let sum: f64 = l.components.iter().sum();
            prop_assert!((l.total - sum).abs() <= 1e-9 * sum.abs().max(1e-300));
        }
    }

    #[test]
    fn stronger_shooters_never_reduce_enemy_losses(
        m in two_category_model(), x in levels(), y in levels(), cat in 0usize..2, factor in 1.0f64..3.0,
    ) {
        let mut m = m;
        for c in &mut m.params {
            c.p = c.p.abs();
            c.q = c.q.abs();
        }
        let (before_x, before_y) = loss_rates(&m, &x, &y).unwrap();
        let mut y2 = y.clone();
        y2.by_category[cat] *= factor;
        let (after_x, _) = loss_rates(&m, &x, &y2).unwrap();
        prop_assert!(after_x.total >= before_x.total);
        let mut x2 = x.clone();
        x2.by_category[cat] *= factor;
        let (_, after_y) = loss_rates(&m, &x2, &y).unwrap();
        prop_assert!(after_y.total >= before_y.total);
    }

    #[test]
    fn linear_law_scales_by_four(a in 0.0f64..2.0, b in 0.0f64..2.0, xs in 1.0f64..5000.0, ys in 1.0f64..5000.0) {
        let m = ModelSpec::new(ModelLayout::homogeneous("tank"), vec![CategoryParams::new(a, b, 1.0, 1.0)]).unwrap();
        let lv = |v: f64| ForceLevels { target: v, by_category: vec![v] };
        let (x1, y1) = loss_rates(&m, &lv(xs), &lv(ys)).unwrap();
        let (x2, y2) = loss_rates(&m, &lv(2.0 * xs), &lv(2.0 * ys)).unwrap();
        prop_assert!((x2.total - 4.0 * x1.total).abs() <= 1e-12 * x2.total.max(1e-300));
        prop_assert!((y2.total - 4.0 * y1.total).abs() <= 1e-12 * y2.total.max(1e-300));
    }

    #[test]
    fn trajectory_starts_at_powered_strengths(
        p in -2.0f64..2.0, q in -2.0f64..2.0, a in 0.01f64..5.0, b in 0.01f64..5.0, x0 in 1.0f64..5000.0, y0 in 1.0f64..5000.0,
    ) {
        let (x, y) = closed_form_trajectory(p, q, a, b, x0, y0, 0.0).unwrap();
        prop_assert_eq!(x, x0.powf(p));
        prop_assert_eq!(y, y0.powf(q));
    }

    #[test]
    fn gof_zero_identities(
        rows in prop::collection::vec(
            (10.0f64..500.0, 10.0f64..500.0, prop_oneof![Just(0.0), -5.0f64..5.0], prop_oneof![Just(0.0), -5.0f64..5.0]),
            2..15,
        ),
        exact in any::<bool>(),
    ) {
        let n = rows.len();
        let o = LossPair::new(rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect());
        let f = if exact {
            o.clone()
        } else {
            LossPair::new(rows.iter().map(|r| r.0 + r.2).collect(), rows.iter().map(|r| r.1 + r.3).collect())
        };
        let s = ssr(&o, &f).unwrap();
        let c = chi_square(&o, &f).unwrap();
        prop_assert_eq!(s == 0.0, c == 0.0);
        if let Ok(r2) = r_squared(&o, &f) {
            prop_assert!(r2 <= 1.0);
            prop_assert_eq!(r2 == 1.0, s == 0.0);
        }
        let e = rmse(s, n).unwrap();
        prop_assert!((e * e * n as f64 - s).abs() <= 1e-9 * s.max(1e-300));
    }

    #[test]
    fn ks_is_scale_invariant(sample in prop::collection::vec(-100.0f64..100.0, 2..60), k in 0.01f64..100.0, shift in -50.0f64..50.0) {
        let base = ks_normal(&sample).unwrap();
        let moved: Vec<f64> = sample.iter().map(|v| k * v + shift).collect();
        let other = ks_normal(&moved).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!((base - other).abs() < 1e-9, "{} vs {}", base, other);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn equal_exponents_give_unit_ratio(
        p in -3.0f64..3.0, x0 in 1.0f64..5000.0, y0 in 1.0f64..5000.0, xt in 0.5f64..5000.0, yt in 0.5f64..5000.0,
    ) {
        match state_ratio(p, p, x0, y0, xt, yt) {
            Ok(r) => prop_assert_eq!(r, 1.0),
            Err(_) => prop_assert_eq!(x0.powf(p) * y0.powf(p), xt.powf(p) * yt.powf(p)),
        }
    }
}
