mod common;

use common::rel_err;
use lanfit_core::estimation::{fit, log_likelihood_with, FitConfig, LikelihoodForm, Objective, RateEstimator};
use lanfit_core::phase::{fit_phases, make_partition, sweep, PartitionScheme, SweepAxis, SweepSpec};
use lanfit_core::reference::{model_from_row, PER_DAY_PARAMS, SINGLE_PHASE_GRID};
use lanfit_core::{kursk_dataset, BattleSeries, DayWindow, ModelSpec};

fn window(first: u32, last: u32) -> DayWindow {
    DayWindow::new(first, last).unwrap()
}

fn days(first: u32, last: u32) -> BattleSeries {
    kursk_dataset().slice(window(first, last)).unwrap()
}

fn axis(s: &str) -> SweepAxis {
    s.parse().unwrap()
}

#[test]
fn partitions_of_the_battle() {
    let five = make_partition(&PartitionScheme::FivePhase, window(2, 14)).unwrap();
    let want = [(2, 3), (4, 6), (7, 8), (9, 11), (12, 14)];
    assert_eq!(five.len(), 5);
    for (w, (a, b)) in five.windows().iter().zip(want) {
        assert_eq!(*w, window(a, b));
    }
    let per_day = make_partition(&PartitionScheme::PerDay, window(1, 14)).unwrap();
    assert_eq!(per_day.len(), 14);
    assert!(per_day.windows().iter().all(|w| w.first == w.last));
    let whole = make_partition(&PartitionScheme::Whole, window(2, 14)).unwrap();
    assert_eq!(whole.windows(), &[window(2, 14)]);
    let gap: PartitionScheme = "custom=2:3,5:14".parse().unwrap();
    assert!(make_partition(&gap, window(2, 14)).is_err());
    let overlap: PartitionScheme = "custom=2:5,5:14".parse().unwrap();
    assert!(make_partition(&overlap, window(2, 14)).is_err());
}

#[test]
fn whole_partition_is_a_single_fit() {
    let s = days(2, 14);
    let mut cfg = FitConfig::heterogeneous(&s, Objective::Ssr);
    cfg.restarts = 4;
    let single = fit(&s, &cfg).unwrap();
    let whole = make_partition(&PartitionScheme::Whole, window(2, 14)).unwrap();
    let phased = fit_phases(&s, &whole, &cfg).unwrap();
    assert_eq!(phased.phases.len(), 1);
    assert_eq!(phased.phases[0], single);
    assert_eq!(phased.total_objective, single.objective_value);
    assert_eq!(phased.fitted, single.fitted());
}

#[test]
fn more_phases_fit_at_least_as_well() {
    let s = days(2, 14);
    let cfg = FitConfig::heterogeneous(&s, Objective::Ssr);
    let total = |scheme: PartitionScheme| {
        let p = make_partition(&scheme, window(2, 14)).unwrap();
        fit_phases(&s, &p, &cfg).unwrap().total_ssr()
    };
    let whole = total(PartitionScheme::Whole);
    let five = total(PartitionScheme::FivePhase);
    let per_day = total(PartitionScheme::PerDay);
    assert!(five <= whole + 1e-9, "{five} > {whole}");
    assert!(per_day <= five + 1e-9, "{per_day} > {five}");
}

#[test]
fn per_day_likelihoods_match_the_published_column() {
    let s = days(2, 14);
    let cfg = FitConfig::heterogeneous(&s, Objective::Loglik);
    let p = make_partition(&PartitionScheme::PerDay, window(2, 14)).unwrap();
    let fitted = fit_phases(&s, &p, &cfg).unwrap();
    for (r, day) in fitted.phases.iter().zip(2u32..) {
        let want = PER_DAY_PARAMS[(day - 1) as usize][0];
        assert!(rel_err(r.objective_value, want) < 0.01, "day {day}: {} vs {want}", r.objective_value);
    }
}

#[test]
fn grid_cannot_beat_the_optimizer() {
    let s = days(2, 14);
    let layout = FitConfig::heterogeneous(&s, Objective::Ssr).layout;
    let best = fit(&s, &FitConfig::new(layout, Objective::Ssr)).unwrap();
    let (p1, q1) = (best.model.params[0].p, best.model.params[0].q);
    let lattice = |c: f64| {
        let mut v: Vec<f64> = (-4..=4).map(|k| c + 0.05 * k as f64).collect();
        v[4] = c;
        v
    };
    let spec = SweepSpec {
        axis1: SweepAxis { param: "p1".parse().unwrap(), values: lattice(p1) },
        axis2: SweepAxis { param: "q1".parse().unwrap(), values: lattice(q1) },
        base: best.model.clone(),
        objective: Objective::Ssr,
        estimator: RateEstimator::Shared,
    };
    let grid = sweep(&s, &spec).unwrap();
    let lowest = grid.best().unwrap().objective.unwrap();
    assert!(lowest >= best.objective_value - 1e-6, "{lowest} < {}", best.objective_value);
    let centre = grid.cells[4][4].objective.unwrap();
    assert!(rel_err(centre, best.objective_value) < 1e-9);
}

#[test]
fn likelihood_grid_has_625_cells() {
    let s = days(2, 14);
    let base = model_from_row(&SINGLE_PHASE_GRID);
    let spec = SweepSpec {
        axis1: axis("p1=-3:3:0.25"),
        axis2: axis("q1=-3:3:0.25"),
        base,
        objective: Objective::Loglik,
        estimator: RateEstimator::Shared,
    };
    let grid = sweep(&s, &spec).unwrap();
    assert_eq!(grid.cells.len(), 25);
    assert!(grid.cells.iter().all(|row| row.len() == 25));
    assert!(grid.iter().all(|c| c.objective.is_some_and(f64::is_finite)));
    assert_eq!(grid, sweep(&s, &spec).unwrap());
}

#[test]
fn least_squares_grid_has_2601_cells() {
    let s = days(2, 14);
    let spec = SweepSpec {
        axis1: axis("p1=0:50:1"),
        axis2: axis("q1=0:50:1"),
        base: model_from_row(&SINGLE_PHASE_GRID),
        objective: Objective::Ssr,
        estimator: RateEstimator::Shared,
    };
    let grid = sweep(&s, &spec).unwrap();
    assert_eq!(grid.iter().count(), 2601);
    for c in grid.iter() {
        match c.objective {
            Some(v) => assert!(v.is_finite() && v >= 0.0),
            None => assert!(c.note.is_some()),
        }
    }
    assert!(grid.iter().any(|c| c.is_valid()));
}

/// Relative slope of the likelihood along `ln c` where every rate of one side
/// (or one rate) is multiplied by `c`, at `c = 1`.
fn rate_slope(s: &BattleSeries, m: &ModelSpec, form: LikelihoodForm, scale: impl Fn(&mut ModelSpec, f64)) -> f64 {
    let h = 1e-6;
    let at = |c: f64| {
        let mut mm = m.clone();
        scale(&mut mm, c);
        log_likelihood_with(&mm, s, form).unwrap()
    };
    (at(1.0 + h) - at(1.0 - h)) / (2.0 * h) / at(1.0).abs()
}

#[test]
fn sampled_likelihood_cells_are_stationary_in_the_rates() {
    let s = days(2, 14);
    for (estimator, form) in [
        (RateEstimator::Shared, LikelihoodForm::Pooled),
        (RateEstimator::PerCategory, LikelihoodForm::PerComponent),
    ] {
        let spec = SweepSpec {
            axis1: axis("p1=-3:3:0.25"),
            axis2: axis("q2=-3:3:0.25"),
            base: model_from_row(&SINGLE_PHASE_GRID),
            objective: Objective::Loglik,
            estimator,
        };
        let grid = sweep(&s, &spec).unwrap();
        let cells: Vec<_> = grid.iter().collect();
        let mut checked = 0;
        for (k, cell) in cells.iter().enumerate().filter(|(k, _)| k % 20 == 0) {
            let mut v = spec.base.to_vector();
            let f = spec.base.len();
            v[spec.axis1.param.index(f).unwrap()] = cell.axis1;
            v[spec.axis2.param.index(f).unwrap()] = cell.axis2;
            let m = ModelSpec::from_vector(&spec.base.layout, &v).with_rates(&cell.a, &cell.b);
            assert!(rel_err(log_likelihood_with(&m, &s, form).unwrap(), cell.objective.unwrap()) < 1e-12);
            let slopes = match estimator {
                RateEstimator::Shared => vec![
                    rate_slope(&s, &m, form, |mm, c| mm.params.iter_mut().for_each(|p| p.a *= c)),
                    rate_slope(&s, &m, form, |mm, c| mm.params.iter_mut().for_each(|p| p.b *= c)),
                ],
                RateEstimator::PerCategory => (0..2)
                    .flat_map(|i| {
                        [
                            rate_slope(&s, &m, form, move |mm, c| mm.params[i].a *= c),
                            rate_slope(&s, &m, form, move |mm, c| mm.params[i].b *= c),
                        ]
                    })
                    .collect(),
            };
            for g in slopes {
                assert!(g.abs() < 1e-5, "cell {k}: slope {g}");
            }
            checked += 1;
        }
        assert!(checked * 20 >= cells.len());
    }
}

#[test]
fn published_point_sweep_cell_value() {
    // least-squares rates at the published single-phase exponents
    let s = days(2, 14);
    let row = SINGLE_PHASE_GRID;
    let spec = SweepSpec {
        axis1: SweepAxis { param: "p1".parse().unwrap(), values: vec![row[4]] },
        axis2: SweepAxis { param: "q1".parse().unwrap(), values: vec![row[6]] },
        base: model_from_row(&row),
        objective: Objective::Ssr,
        estimator: RateEstimator::Shared,
    };
    let grid = sweep(&s, &spec).unwrap();
    let cell = &grid.cells[0][0];
    assert!(rel_err(cell.objective.unwrap(), 192567.369303) < 1e-9, "{:?}", cell);
}
