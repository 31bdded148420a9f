#![allow(dead_code)]

use lanfit_core::model::predict_series;
use lanfit_core::{BattleSeries, CategoryParams, ModelLayout, ModelSpec, Side};

/// Copy of `base` whose target-category losses are exactly `model`'s
/// one-step predictions.
pub fn synthetic(model: &ModelSpec, base: &BattleSeries) -> BattleSeries {
    let pred = predict_series(model, base).unwrap();
    let t = base.category_index(model.target()).unwrap();
    let mut x = base.side(Side::X).clone();
    let mut y = base.side(Side::Y).clone();
    x.losses[t] = pred.totals(Side::X);
    y.losses[t] = pred.totals(Side::Y);
    BattleSeries::new(base.days().to_vec(), base.categories().to_vec(), x, y).unwrap()
}

pub fn two_category(rows: [[f64; 4]; 2]) -> ModelSpec {
    ModelSpec::new(
        ModelLayout::new(vec!["tank".into(), "artillery".into()], "tank"),
        rows.iter().map(|r| CategoryParams::new(r[0], r[1], r[2], r[3])).collect(),
    )
    .unwrap()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Maximizer of a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iterations: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iterations {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Raw Kursk columns for days 1..=14 in the order
/// `[x tank, x tank loss, y tank, y tank loss, x arty, x arty loss, y arty, y arty loss]`,
/// typed in again so oracles do not depend on the library's copy.
pub const KURSK: [[f64; 8]; 14] = [
    [2396.0, 105.0, 986.0, 198.0, 705.0, 13.0, 1166.0, 24.0],
    [2367.0, 117.0, 749.0, 248.0, 676.0, 30.0, 1161.0, 5.0],
    [2064.0, 259.0, 673.0, 121.0, 661.0, 15.0, 1154.0, 7.0],
    [1754.0, 315.0, 596.0, 108.0, 648.0, 14.0, 1213.0, 13.0],
    [1495.0, 289.0, 490.0, 139.0, 640.0, 9.0, 1210.0, 6.0],
    [1406.0, 157.0, 548.0, 36.0, 629.0, 13.0, 1199.0, 12.0],
    [1351.0, 135.0, 563.0, 63.0, 628.0, 7.0, 1206.0, 15.0],
    [977.0, 414.0, 500.0, 98.0, 613.0, 16.0, 1194.0, 12.0],
    [978.0, 117.0, 495.0, 57.0, 606.0, 10.0, 1187.0, 7.0],
    [907.0, 118.0, 480.0, 46.0, 603.0, 5.0, 1184.0, 5.0],
    [883.0, 96.0, 426.0, 79.0, 601.0, 5.0, 1183.0, 3.0],
    [985.0, 27.0, 495.0, 23.0, 600.0, 3.0, 1179.0, 4.0],
    [978.0, 42.0, 557.0, 7.0, 602.0, 0.0, 1182.0, 2.0],
    [948.0, 85.0, 588.0, 6.0, 591.0, 4.0, 1182.0, 11.0],
];

/// Unit-rate regressors `[category][day]` for the side losing tanks, straight
/// from the raw table: `own_tank^q_i · enemy_i^p_i`.
pub fn raw_regressors(side: Side, p: &[f64; 2], q: &[f64; 2], days: std::ops::RangeInclusive<usize>) -> Vec<Vec<f64>> {
    let (own_tank, enemy) = match side {
        Side::X => (0, [2, 6]),
        Side::Y => (2, [0, 4]),
    };
    (0..2)
        .map(|i| {
            days.clone()
                .map(|d| {
                    let r = &KURSK[d - 1];
                    r[own_tank].powf(q[i]) * r[enemy[i]].powf(p[i])
                })
                .collect()
        })
        .collect()
}

pub fn raw_losses(side: Side, days: std::ops::RangeInclusive<usize>) -> Vec<f64> {
    let col = match side {
        Side::X => 1,
        Side::Y => 3,
    };
    days.map(|d| KURSK[d - 1][col]).collect()
}
