use lanfit_core::data::{kursk_dataset, load_csv};
use lanfit_core::estimation::{
    evaluate, log_likelihood, loglinear_fit, newton_raphson_fit, ssr, FitConfig, FitResult, LikelihoodForm,
    NewtonConfig, Objective,
};
use lanfit_core::gof::{gof_bundle, GofReport, LossPair};
use lanfit_core::model::{closed_form_trajectory, predict_series, state_ratio, victory_check, ModelSpec, Preset};
use lanfit_core::phase::{fit_phases, fit_phases_with, make_partition, sweep, PartitionScheme, PhaseFit, SweepSpec};
use lanfit_core::reference;
use lanfit_core::{BattleSeries, DayWindow, Error, ModelLayout, Side};
use serde_json::{json, Map, Value};

use crate::args::{DataArgs, FitArgs, MethodArg, ReportArgs, SimulateArgs, SweepArgs, ValidateArgs};
use crate::output::{full, sig6, sig6_opt, Outputs};
use crate::{Failure, Status};

const EMBEDDED_KURSK: &str = "embedded:kursk";

fn core(e: Error) -> Failure {
    match e {
        Error::Validation(issues) => Failure::Input(
            std::iter::once(format!("{} problem(s) in the data:", issues.len()))
                .chain(issues.iter().map(|i| format!("  {i}")))
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        other => Failure::Input(other.to_string()),
    }
}

fn load(source: &str) -> Result<BattleSeries, Error> {
    if source == EMBEDDED_KURSK {
        Ok(kursk_dataset())
    } else {
        load_csv(source)
    }
}

struct Selection {
    series: BattleSeries,
    window: DayWindow,
    layout: ModelLayout,
}

fn select(args: &DataArgs) -> Result<Selection, Failure> {
    let all = load(&args.data).map_err(core)?;
    let window = args.window.unwrap_or_else(|| all.fitting_window());
    let series = all.slice(window).map_err(core)?;
    let categories = args.categories.clone().unwrap_or_else(|| series.categories().to_vec());
    let target = match &args.target {
        Some(t) => t.clone(),
        None if series.category_index("tank").is_some() => "tank".into(),
        None => series.categories()[0].clone(),
    };
    for c in categories.iter().chain(std::iter::once(&target)) {
        if series.category_index(c).is_none() {
            return Err(Failure::Input(format!(
                "category `{c}` is not in the data (have: {})",
                series.categories().join(", ")
            )));
        }
    }
    let layout = ModelLayout::new(categories, target);
    layout.validate().map_err(core)?;
    Ok(Selection { series, window, layout })
}

/// Parameters keyed `a1`, `b1`, `p1`, `q1`, ... .
fn parameters(model: &ModelSpec) -> Map<String, Value> {
    let mut m = Map::new();
    for (i, c) in model.params.iter().enumerate() {
        let k = i + 1;
        m.insert(format!("a{k}"), json!(c.a));
        m.insert(format!("b{k}"), json!(c.b));
        m.insert(format!("p{k}"), json!(c.p));
        m.insert(format!("q{k}"), json!(c.q));
        if let Some(e) = c.y_exponents {
            m.insert(format!("p{k}_y"), json!(e.p));
            m.insert(format!("q{k}_y"), json!(e.q));
        }
    }
    m
}

fn gof_json(g: &GofReport) -> Value {
    serde_json::to_value(g).unwrap_or(Value::Null)
}

fn is_kursk_layout(source: &str, layout: &ModelLayout) -> bool {
    source == EMBEDDED_KURSK && layout.categories == ["tank", "artillery"] && layout.target == "tank"
}

pub fn fit(args: &FitArgs) -> Result<Status, Failure> {
    let sel = select(&args.data)?;
    let objective: Objective = args.search.objective.into();
    let form: LikelihoodForm = args.search.likelihood.into();
    let partition = make_partition(&args.partition, sel.window).map_err(core)?;

    let mut cfg = FitConfig::new(sel.layout.clone(), objective);
    cfg.likelihood = form;
    cfg.rate_mode = args.rate_mode.into();
    cfg.restarts = args.restarts;
    cfg.seed = args.seed;
    cfg.max_iterations = args.max_iterations;
    cfg.tolerance = args.tolerance;
    for (id, b) in args.search.bounds.iter().flat_map(|l| &l.0) {
        cfg = cfg.with_bound(*id, *b);
    }
    for (id, v) in args.search.init.iter().flat_map(|l| &l.0) {
        cfg = cfg.with_init(*id, *v);
    }
    cfg.validate().map_err(core)?;

    let result = match args.method {
        MethodArg::Simplex => fit_phases(&sel.series, &partition, &cfg),
        MethodArg::Newton => {
            if objective != Objective::Ssr {
                return Err(Failure::Input("--method newton minimizes the SSR; use --objective ssr".into()));
            }
            let init = ModelSpec::from_vector(&cfg.layout, &cfg.init_vector());
            let bounds = cfg.bound_vector();
            fit_phases_with(&sel.series, &partition, |s| {
                newton_raphson_fit(s, &init, Some(&bounds), &NewtonConfig::default())
            })
        }
        MethodArg::Loglinear => {
            if sel.layout.categories != [sel.layout.target.clone()] {
                return Err(Failure::Input(format!(
                    "--method loglinear fits one category; pass --categories {0} --target {0}",
                    sel.layout.target
                )));
            }
            fit_phases_with(&sel.series, &partition, |s| {
                let m = loglinear_fit(s, &sel.layout.target)?;
                evaluate(m, s, objective, form)
            })
        }
    }
    .map_err(core)?;

    let mut out = Outputs::new(&args.out)?;
    out.json("fit.json", &fit_json(args, &sel, &result, objective))?;
    let (header, rows) = fitted_table(&sel.layout, &result);
    out.csv("fitted.csv", &header, &rows)?;
    let config = json!({
        "fit": cfg,
        "window": sel.window.to_string(),
        "partition": args.partition.to_string(),
        "method": args.method,
    });
    out.finish("fit", &args.data.data, Some(args.seed), config)?;

    print_fit(&result, objective);
    if result.converged {
        Ok(Status::Success)
    } else {
        eprintln!("warning: at least one phase did not converge");
        Ok(Status::NotConverged)
    }
}

fn phase_json(r: &FitResult) -> Value {
    json!({
        "window": r.window.to_string(),
        "parameters": parameters(&r.model),
        "objective_value": r.objective_value,
        "ssr": r.ssr(),
        "converged": r.converged,
        "iterations": r.iterations,
        "evaluations": r.evaluations,
        "best_restart": r.best_restart,
        "gof": gof_json(&r.gof),
    })
}

fn fit_json(args: &FitArgs, sel: &Selection, result: &PhaseFit, objective: Objective) -> Value {
    let published = if is_kursk_layout(&args.data.data, &sel.layout) {
        published_reference(&sel.series, result, &args.partition)
    } else {
        Value::Null
    };
    json!({
        "data": args.data.data,
        "window": sel.window.to_string(),
        "categories": sel.layout.categories,
        "target": sel.layout.target,
        "objective": objective,
        "likelihood": args.search.likelihood,
        "method": args.method,
        "partition": args.partition.to_string(),
        "phases": result.phases.iter().map(phase_json).collect::<Vec<_>>(),
        "total_objective": result.total_objective,
        "total_ssr": result.total_ssr(),
        "gof": gof_json(&result.gof),
        "converged": result.converged,
        "published_reference": published,
    })
}

/// Published values next to the same quantities computed here. Listed for
/// comparison only.
fn published_reference(series: &BattleSeries, result: &PhaseFit, partition: &PartitionScheme) -> Value {
    let fixture = |row: &[f64; 8]| {
        let m = reference::model_from_row(row);
        json!({
            "parameters": parameters(&m),
            "ssr_on_window": ssr(&m, series).ok(),
            "log_likelihood_on_window": log_likelihood(&m, series).ok(),
        })
    };
    let per_day_phases: Vec<Value> = if *partition == PartitionScheme::PerDay {
        result
            .phases
            .iter()
            .filter(|r| (1..=14).contains(&r.window.first))
            .map(|r| {
                let day = r.window.first;
                json!({
                    "day": day,
                    "published_log_likelihood": reference::PER_DAY_PARAMS[(day - 1) as usize][0],
                    "computed_objective": r.objective_value,
                })
            })
            .collect()
    } else {
        Vec::new()
    };
    json!({
        "per_day": {
            "published": {
                "log_likelihood_total": reference::PER_DAY_LOGLIK_TOTAL,
                "ks": reference::PER_DAY_KS,
                "chi_square": reference::PER_DAY_CHI_SQUARE,
                "ssr": reference::PER_DAY_SSR,
                "rmse": reference::PER_DAY_RMSE,
            },
            "phases": per_day_phases,
        },
        "single_phase": {
            "published": {
                "ssr": reference::SINGLE_PHASE_SSR,
                "rmse": reference::SINGLE_PHASE_RMSE,
            },
            "printed_equations": fixture(&reference::SINGLE_PHASE_EQUATION),
            "results_text": fixture(&reference::SINGLE_PHASE_GRID),
        },
        "this_run": {
            "ks": result.gof.ks.value(),
            "chi_square": result.gof.chi_square.value(),
            "ssr": result.total_ssr(),
            "rmse": result.gof.rmse.value(),
            "total_objective": result.total_objective,
        },
    })
}

fn fitted_table(layout: &ModelLayout, result: &PhaseFit) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["day", "side", "observed", "fitted"].iter().map(|s| s.to_string()).collect();
    header.extend(layout.categories.iter().map(|c| format!("{c}_component")));
    header.push("residual".into());
    let mut rows = Vec::new();
    for r in &result.phases {
        for (d, row) in r.breakdown.rows.iter().enumerate() {
            for side in [Side::X, Side::Y] {
                let (obs, res) = match side {
                    Side::X => (r.observed.x[d], r.residuals.x[d]),
                    Side::Y => (r.observed.y[d], r.residuals.y[d]),
                };
                let loss = row.side(side);
                let mut line = vec![row.day.to_string(), side.to_string(), full(obs), full(loss.total)];
                line.extend(loss.components.iter().map(|v| full(*v)));
                line.push(full(res));
                rows.push(line);
            }
        }
    }
    (header, rows)
}

fn print_fit(result: &PhaseFit, objective: Objective) {
    println!("{:<8} {:>14} {:>14} {:>10} {:>10}", "window", objective, "ssr", "r2", "converged");
    for r in &result.phases {
        println!(
            "{:<8} {:>14} {:>14} {:>10} {:>10}",
            r.window.to_string(),
            sig6(r.objective_value),
            sig6(r.ssr()),
            sig6_opt(r.gof.r_squared.value()),
            r.converged
        );
        let params: Vec<String> = parameters(&r.model)
            .iter()
            .map(|(k, v)| format!("{k}={}", sig6(v.as_f64().unwrap_or(f64::NAN))))
            .collect();
        println!("         {}", params.join(" "));
    }
    println!(
        "total {objective} {}  ssr {}  rmse {}  r2 {}  ks {}  chi2 {}",
        sig6(result.total_objective),
        sig6(result.total_ssr()),
        sig6_opt(result.gof.rmse.value()),
        sig6_opt(result.gof.r_squared.value()),
        sig6_opt(result.gof.ks.value()),
        sig6_opt(result.gof.chi_square.value()),
    );
}

pub fn sweep_cmd(args: &SweepArgs) -> Result<Status, Failure> {
    let sel = select(&args.data)?;
    let objective: Objective = args.objective.into();
    let mut cfg = FitConfig::new(sel.layout.clone(), objective);
    for (id, v) in args.init.iter().flat_map(|l| &l.0) {
        cfg = cfg.with_init(*id, *v);
    }
    cfg.validate().map_err(core)?;
    let base = ModelSpec::new(sel.layout.clone(), ModelSpec::from_vector(&sel.layout, &cfg.init_vector()).params).map_err(core)?;
    let spec = SweepSpec {
        axis1: args.axes.0.clone(),
        axis2: args.axes.1.clone(),
        base,
        objective,
        estimator: args.estimator.into(),
    };
    let grid = sweep(&sel.series, &spec).map_err(core)?;

    let f = sel.layout.len();
    let mut header = vec![spec.axis1.param.to_string(), spec.axis2.param.to_string(), "objective".into()];
    header.extend((1..=f).map(|k| format!("a{k}")));
    header.extend((1..=f).map(|k| format!("b{k}")));
    header.push("valid".into());
    header.push("note".into());
    let rows: Vec<Vec<String>> = grid
        .iter()
        .map(|c| {
            let mut line = vec![full(c.axis1), full(c.axis2), c.objective.map_or(String::new(), full)];
            for rates in [&c.a, &c.b] {
                line.extend((0..f).map(|k| rates.get(k).map_or(String::new(), |v| full(*v))));
            }
            line.push(c.is_valid().to_string());
            line.push(c.note.clone().unwrap_or_default());
            line
        })
        .collect();

    let mut out = Outputs::new(&args.out)?;
    out.csv("sweep.csv", &header, &rows)?;
    let config = json!({
        "window": sel.window.to_string(),
        "categories": sel.layout.categories,
        "target": sel.layout.target,
        "objective": objective,
        "estimator": args.estimator,
        "axes": [
            {"param": spec.axis1.param.to_string(), "values": spec.axis1.values},
            {"param": spec.axis2.param.to_string(), "values": spec.axis2.values},
        ],
        "fixed": parameters(&spec.base),
    });
    out.finish("sweep", &args.data.data, None, config)?;

    let valid = grid.iter().filter(|c| c.is_valid()).count();
    println!("{} cells, {valid} valid", rows.len());
    if let Some(best) = grid.best() {
        println!(
            "best {objective} {} at {}={} {}={}",
            sig6_opt(best.objective),
            spec.axis1.param,
            sig6(best.axis1),
            spec.axis2.param,
            sig6(best.axis2)
        );
    }
    Ok(Status::Success)
}

/// Exponents of the powered strengths that the closed form integrates. The
/// classical square law is `dX/dt = -aY`, which the closed form reproduces
/// with both exponents equal to one.
fn trajectory_exponents(preset: Preset) -> (f64, f64) {
    match preset {
        Preset::Square => (1.0, 1.0),
        other => {
            let m = lanfit_core::model::homogeneous_preset(other, "force");
            (m.params[0].p, m.params[0].q)
        }
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<Status, Failure> {
    let from_preset = args.preset.map(trajectory_exponents);
    let p = args.p.or(from_preset.map(|e| e.0));
    let q = args.q.or(from_preset.map(|e| e.1));
    let (Some(p), Some(q)) = (p, q) else {
        return Err(Failure::Input("give --preset or both --p and --q".into()));
    };
    let times = args.t.values();
    let mut rows = Vec::with_capacity(times.len());
    let mut depleted: Option<(&str, f64)> = None;
    let mut last = (0.0, 0.0);
    for &t in &times {
        let (x, y) = closed_form_trajectory(p, q, args.a, args.b, args.x0, args.y0, t).map_err(core)?;
        if depleted.is_none() {
            if x <= 0.0 {
                depleted = Some(("X", t));
            } else if y <= 0.0 {
                depleted = Some(("Y", t));
            }
        }
        rows.push(vec![full(t), full(x), full(y)]);
        last = (x, y);
    }

    // raw strengths at the final time for the state-equation verdict
    let raw = |powered: f64, e: f64| -> Option<f64> {
        if powered <= 0.0 {
            Some(0.0)
        } else if e != 0.0 {
            Some(powered.powf(1.0 / e))
        } else {
            None
        }
    };
    let t_end = *times.last().unwrap();
    let verdict = match (raw(last.0, p), raw(last.1, q)) {
        (Some(xt), Some(yt)) => match state_ratio(p, q, args.x0, args.y0, xt, yt) {
            Ok(ratio) => match victory_check(p, q, args.x0, args.y0, xt, yt, args.a, args.b) {
                Ok(v) => json!({"state_ratio": ratio, "rate_ratio": args.b / args.a, "victory_check": v}),
                Err(e) => json!({"state_ratio": ratio, "note": e.to_string()}),
            },
            Err(e) => json!({"note": e.to_string()}),
        },
        _ => json!({"note": "a zero exponent hides the raw strength at the final time"}),
    };

    let mut out = Outputs::new(&args.out)?;
    out.csv("trajectory.csv", &["t".into(), "x_powered".into(), "y_powered".into()], &rows)?;
    let summary = json!({
        "preset": args.preset.map(|p| p.to_string()),
        "p": p,
        "q": q,
        "a": args.a,
        "b": args.b,
        "x0": args.x0,
        "y0": args.y0,
        "points": rows.len(),
        "final": {"t": t_end, "x_powered": last.0, "y_powered": last.1},
        "first_depleted": depleted.map(|(side, t)| json!({"side": side, "t": t})),
        "state_equation": verdict,
    });
    out.json("simulate.json", &summary)?;
    out.finish("simulate", "none", None, json!({"p": p, "q": q, "a": args.a, "b": args.b, "x0": args.x0, "y0": args.y0, "t": args.t}))?;

    println!("{:>10} {:>14} {:>14}", "t", "x^p", "y^q");
    for r in rows.iter().take(20) {
        let v: Vec<f64> = r.iter().map(|s| s.parse().unwrap_or(f64::NAN)).collect();
        println!("{:>10} {:>14} {:>14}", sig6(v[0]), sig6(v[1]), sig6(v[2]));
    }
    if rows.len() > 20 {
        println!("... {} more rows in trajectory.csv", rows.len() - 20);
    }
    Ok(Status::Success)
}

pub fn validate(args: &ValidateArgs) -> Result<Status, Failure> {
    let series = match load(&args.data) {
        Ok(s) => s,
        Err(Error::Io(e)) => return Err(Failure::Input(format!("cannot read {}: {e}", args.data))),
        Err(Error::Validation(issues)) => {
            println!("{}: {} problem(s)", args.data, issues.len());
            for i in &issues {
                println!("  {i}");
            }
            return Ok(Status::Violations);
        }
        Err(e) => {
            println!("{}: {e}", args.data);
            return Ok(Status::Violations);
        }
    };
    let w = series.window();
    println!(
        "{}: ok, {} day(s) {w}, categories {}, {} row(s)",
        args.data,
        series.len(),
        series.categories().join(","),
        series.len() * series.categories().len() * 2
    );
    if let Some(path) = &args.export {
        series
            .save_csv(path)
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(Status::Success)
}

struct ReportRow {
    name: &'static str,
    fitted: LossPair,
    observed: LossPair,
    log_likelihood: Option<f64>,
    published: Value,
}

pub fn report(args: &ReportArgs) -> Result<Status, Failure> {
    let all = load(&args.data).map_err(core)?;
    let window = args.window.unwrap_or_else(|| all.fitting_window());
    let series = all.slice(window).map_err(core)?;
    if series.category_index("tank").is_none() || series.category_index("artillery").is_none() {
        return Err(Failure::Input("report needs tank and artillery categories".into()));
    }
    if window.first < 1 || window.last > 14 {
        return Err(Failure::Input(format!("report covers days 1:14, got {window}")));
    }

    let observed_of = |m: &ModelSpec, s: &BattleSeries| -> Result<(LossPair, LossPair), Failure> {
        let pred = predict_series(m, s).map_err(core)?;
        let t = s.category_index("tank").unwrap();
        Ok((
            LossPair::new(pred.totals(Side::X), pred.totals(Side::Y)),
            LossPair::new(s.losses(Side::X, t).to_vec(), s.losses(Side::Y, t).to_vec()),
        ))
    };

    let mut rows = Vec::new();
    // per-day published parameters, each applied to its own day
    let mut fitted = LossPair::new(Vec::new(), Vec::new());
    let mut observed = LossPair::new(Vec::new(), Vec::new());
    let mut ll = 0.0;
    for day in window.first..=window.last {
        let s = series.slice(DayWindow { first: day, last: day }).map_err(core)?;
        let m = reference::per_day_model(day);
        let (f, o) = observed_of(&m, &s)?;
        fitted.x.extend(f.x);
        fitted.y.extend(f.y);
        observed.x.extend(o.x);
        observed.y.extend(o.y);
        ll += log_likelihood(&m, &s).map_err(core)?;
    }
    rows.push(ReportRow {
        name: "per-day parameters",
        fitted,
        observed,
        log_likelihood: Some(ll),
        published: json!({
            "log_likelihood": reference::PER_DAY_LOGLIK_TOTAL,
            "ssr": reference::PER_DAY_SSR,
            "rmse": reference::PER_DAY_RMSE,
            "ks": reference::PER_DAY_KS,
            "chi_square": reference::PER_DAY_CHI_SQUARE,
        }),
    });
    for (name, row, published) in [
        (
            "printed equations",
            &reference::SINGLE_PHASE_EQUATION,
            json!({"ssr": reference::SINGLE_PHASE_SSR, "rmse": reference::SINGLE_PHASE_RMSE}),
        ),
        (
            "results text",
            &reference::SINGLE_PHASE_GRID,
            json!({"ssr": reference::SINGLE_PHASE_SSR, "rmse": reference::SINGLE_PHASE_RMSE}),
        ),
        (
            "likelihood grid",
            &reference::LIKELIHOOD_GRID,
            json!({"log_likelihood": reference::LIKELIHOOD_GRID_VALUE}),
        ),
    ] {
        let m = reference::model_from_row(row);
        let (f, o) = observed_of(&m, &series)?;
        rows.push(ReportRow {
            name,
            fitted: f,
            observed: o,
            log_likelihood: log_likelihood(&m, &series).ok(),
            published,
        });
    }

    println!(
        "{:<20} {:>12} {:>12} {:>10} {:>10} {:>12} {:>12}",
        "parameter set", "lnL", "ssr", "rmse", "ks", "chi2", "r2"
    );
    let mut entries = Vec::new();
    for r in &rows {
        let g = gof_bundle(&r.observed, &r.fitted);
        println!(
            "{:<20} {:>12} {:>12} {:>10} {:>10} {:>12} {:>12}",
            r.name,
            sig6_opt(r.log_likelihood),
            sig6_opt(g.ssr.value()),
            sig6_opt(g.rmse.value()),
            sig6_opt(g.ks.value()),
            sig6_opt(g.chi_square.value()),
            sig6_opt(g.r_squared.value()),
        );
        entries.push(json!({
            "name": r.name,
            "computed": {"log_likelihood": r.log_likelihood, "gof": gof_json(&g)},
            "published": r.published,
        }));
    }

    let mut out = Outputs::new(&args.out)?;
    out.json("report.json", &json!({"data": args.data, "window": window.to_string(), "rows": entries}))?;
    out.finish("report", &args.data, None, json!({"window": window.to_string()}))?;
    Ok(Status::Success)
}
