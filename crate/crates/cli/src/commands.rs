//! The subcommands. Each reads what it needs from [`Settings`] and returns
//! a table plus a JSON summary; writing is left to the caller.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fs::File;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use fringelab::io::{read_data_points, Table};
use fringelab::*;
use serde_json::{json, Value};

use crate::settings::Settings;

pub struct Output {
    pub table: Table,
    pub results: Value,
}

fn config(s: &Settings, default: &str) -> Result<InputConfig> {
    s.parse("input", default)
}

fn scheme(s: &Settings, config: InputConfig) -> Result<DetectionScheme> {
    s.parse("scheme", &config.default_scheme().to_string())
}

/// Source and network parameters: a named base set (`ideal` or `fitted`)
/// with any individual value overridden.
fn source(s: &Settings) -> Result<SourceParams> {
    let mut p = match s.string("base", "ideal").as_str() {
        "ideal" => SourceParams::ideal(),
        "fitted" => SourceParams::fitted(),
        other => bail!("`base` = `{other}`: expected ideal or fitted"),
    };
    for (key, slot) in [
        ("g2", &mut p.g2),
        ("indist", &mut p.indist),
        ("eta_c", &mut p.eta.eta_c),
        ("eta_d", &mut p.eta.eta_d),
        ("eta_e", &mut p.eta.eta_e),
        ("eta_f", &mut p.eta.eta_f),
    ] {
        if let Some(v) = s.parse_optional::<f64>(key)? {
            *slot = v;
        }
    }
    p.validate()?;
    Ok(p)
}

fn model_options(s: &Settings) -> Result<ModelOptions> {
    let truncation: usize = s.parse("truncation", &Truncation::default().get().to_string())?;
    Ok(ModelOptions {
        convention: s.parse("convention", "verbatim")?,
        renormalize: s.flag("renormalize")?,
        truncation: Truncation::new(truncation)?,
    })
}

fn phi_grid(s: &Settings, start: f64, end: f64, points: usize) -> Result<Vec<f64>> {
    let a = s.angle("phi_start", start)?;
    let b = s.angle("phi_end", end)?;
    let n: usize = s.parse("points", &points.to_string())?;
    if n < 2 {
        bail!("`points` must be at least 2");
    }
    Ok(phase_grid(a, b, n))
}

fn value_grid(s: &Settings, from: &str, to: &str, steps: &str) -> Result<Vec<f64>> {
    let a: f64 = s.parse("from", from)?;
    let b: f64 = s.parse("to", to)?;
    let n: usize = s.parse("steps", steps)?;
    if n < 2 {
        bail!("`steps` must be at least 2");
    }
    Ok(phase_grid(a, b, n))
}

fn opt(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

fn contrast_json(r: &ContrastReport) -> Value {
    json!({
        "mean_contrast": r.mean_contrast,
        "deep_contrast": r.deep_contrast,
        "shallow_contrast": r.shallow_contrast,
        "uncertainty": r.uncertainty,
        "pairs": r.pairs.len(),
    })
}

/// Closed form matching the model, when one exists for these settings.
fn analytic_overlay(
    config: InputConfig,
    scheme: &DetectionScheme,
    p: &SourceParams,
    o: &ModelOptions,
) -> Option<AnalyticKind> {
    let lossless = p.eta == Efficiencies::ideal() && p.g2 == 0.0;
    if !lossless || o.renormalize {
        return None;
    }
    use InputConfig::*;
    match (config, scheme, p.indist) {
        (Ket10, DetectionScheme::AtLeast { e: 1, f: 0 }, _) => Some(AnalyticKind::P10),
        (Ket11, DetectionScheme::AtLeast { e: 1, f: 1 }, 1.0) => Some(AnalyticKind::P11),
        (Ket11, DetectionScheme::AtLeast { e: 1, f: 1 }, 0.0) => Some(AnalyticKind::Distinguishable11),
        (Ket20, DetectionScheme::AtLeast { e: 1, f: 1 }, 1.0) => Some(AnalyticKind::P20),
        (Ket22, DetectionScheme::AtLeast { e: 3, f: 1 }, 1.0) => Some(AnalyticKind::P22),
        _ => None,
    }
}

pub fn scan(s: &Settings) -> Result<Output> {
    let config = config(s, "11")?;
    let scheme = scheme(s, config)?;
    let params = source(s)?;
    let options = model_options(s)?;
    let phis = phi_grid(s, 0.0, TAU, fringe::DEFAULT_POINTS)?;
    let model = FringeModel::with_options(config, params, scheme.clone(), options)?;
    let scan = model.scan(&phis)?;
    let overlay = analytic_overlay(config, &scheme, &params, &options);

    let mut headers = vec!["phi", "prob"];
    if overlay.is_some() {
        headers.push("analytic");
    }
    let mut table = Table::new(&headers);
    for (&phi, &p) in scan.phis.iter().zip(&scan.probs) {
        let mut row = vec![phi, p];
        if let Some(kind) = overlay {
            row.push(kind.value(phi)?);
        }
        table.push(row);
    }
    let contrast = contrast(&scan).ok().map(|r| contrast_json(&r));
    Ok(Output { table, results: json!({ "contrast": contrast, "analytic": overlay.map(|k| format!("{k:?}")) }) })
}

pub fn sweep(s: &Settings) -> Result<Output> {
    let config = config(s, "11")?;
    let scheme = scheme(s, config)?;
    let base = source(s)?;
    let var: SweepVar = s.parse("var", "indist")?;
    let grid = value_grid(s, "0", "1", "21")?;
    let reports = parameter_sweep(config, &scheme, &base, var, &grid)?;
    let mut table = Table::new(&[var.name(), "mean_contrast", "deep_contrast", "shallow_contrast"]);
    for (v, r) in grid.iter().zip(&reports) {
        table.push(vec![*v, r.mean_contrast, opt(r.deep_contrast), opt(r.shallow_contrast)]);
    }
    Ok(Output { table, results: json!({ "points": grid.len() }) })
}

pub fn sensitivity(s: &Settings) -> Result<Output> {
    let config = config(s, "22")?;
    let scheme = scheme(s, config)?;
    let base = source(s)?;
    if s.has("var") {
        let var: SweepVar = s.parse("var", "indist")?;
        let grid = value_grid(s, "0", "1", "21")?;
        let values = sensitivity_sweep(config, &scheme, &base, var, &grid)?;
        let mut table = Table::new(&[var.name(), "s_max"]);
        for (v, m) in grid.iter().zip(&values) {
            table.push(vec![*v, *m]);
        }
        return Ok(Output { table, results: json!({ "photons": config.photons(), "losses": "excluded" }) });
    }
    let curve = model_sensitivity(config, &scheme, &base)?;
    let probs = FringeModel::new(config, base.lossless(), scheme)?.probabilities(&curve.phis)?;
    let mut table = Table::new(&["phi", "prob", "s"]);
    for ((&phi, &p), &sv) in curve.phis.iter().zip(&probs).zip(&curve.s_values) {
        table.push(vec![phi, p, sv]);
    }
    Ok(Output {
        table,
        results: json!({
            "s_max": curve.s_max,
            "phi_at_max": curve.phi_at_max,
            "photons": curve.photons,
            "heisenberg_limit": f64::from(curve.photons).sqrt(),
            "losses": "excluded",
        }),
    })
}

fn read_points(path: &str) -> Result<Vec<DataPoint>> {
    let f = File::open(path).with_context(|| format!("opening data {path}"))?;
    read_data_points(f).with_context(|| format!("reading data {path}"))
}

fn estimates_json(r: &FitResult) -> Value {
    json!({
        "input": r.config.code(),
        "scheme": r.scheme.to_string(),
        "parameters": r.estimates.iter().map(|e| json!({
            "parameter": e.name,
            "value": e.value,
            "sigma": e.sigma,
            "sigma_stat": e.sigma_stat,
            "fixed": e.fixed,
        })).collect::<Vec<_>>(),
        "scale": r.scale,
        "scale_sigma": r.scale_sigma,
        "offset": r.offset,
        "offset_sigma": r.offset_sigma,
        "chi2": r.chi2,
        "reduced_chi2": r.reduced_chi2,
        "dof": r.dof,
        "iterations": r.iterations,
        "gradient_norm": r.gradient_norm,
    })
}

fn residual_rows(table: &mut Table, r: &FitResult, data: &[DataPoint], options: &ModelOptions) -> Result<()> {
    let model = FringeModel::with_options(r.config, r.params, r.scheme.clone(), *options)?;
    let code: f64 = r.config.code().parse().expect("numeric code");
    for d in data {
        let m = r.scale * model.probability(d.phi)? + r.offset;
        table.push(vec![code, d.phi, d.value, d.sigma, m, (d.value - m) / d.sigma]);
    }
    Ok(())
}

fn fit_options(s: &Settings) -> Result<FitOptions> {
    let d = FitOptions::default();
    Ok(FitOptions { max_iterations: s.parse("max_iterations", &d.max_iterations.to_string())?, ..d })
}

pub fn fit_cmd(s: &Settings) -> Result<Output> {
    let mut table = Table::new(&["input", "phi", "value", "sigma", "model", "residual"]);
    if s.flag("staged")? {
        return staged(s, table);
    }
    let config = config(s, "11")?;
    let scheme = scheme(s, config)?;
    let params = source(s)?;
    let data = read_points(&s.required("data")?)?;
    let fo = fit_options(s)?;
    let mut problem = FitProblem::new(config, data.clone(), params).with_scheme(scheme);
    problem.model = model_options(s)?;
    let free = s.string("free", "");
    for name in free.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let kind: ParamKind = name.parse()?;
        let key = kind.name();
        let lower: f64 = s.parse(&format!("lower.{key}"), "0")?;
        let upper: f64 = s.parse(&format!("upper.{key}"), "1")?;
        let mut fp = FreeParam::bounded(kind, lower, upper);
        if let Some(x) = s.parse_optional::<f64>(&format!("initial.{key}"))? {
            fp = fp.with_initial(x);
        }
        problem = problem.with_free(fp);
    }
    problem.offset_free = s.flag("offset_free")?;
    let r = fit(&problem, &fo)?;
    residual_rows(&mut table, &r, &data, &problem.model)?;
    Ok(Output { table, results: json!({ "fit": estimates_json(&r) }) })
}

fn staged(s: &Settings, mut table: Table) -> Result<Output> {
    let d = StagedOptions::default();
    let opts = StagedOptions {
        eta_c: s.parse("eta_c", &d.eta_c.to_string())?,
        g2: s.parse("g2", &d.g2.to_string())?,
        eta_e_stage2: s.parse("eta_e_stage2", &d.eta_e_stage2.to_string())?,
        g2_upper: s.parse("g2_upper", &d.g2_upper.to_string())?,
        cross_check: s.flag_or("cross_check", d.cross_check)?,
        propagate_carried: s.flag_or("propagate_carried", d.propagate_carried)?,
        fit: fit_options(s)?,
    };
    let mut datasets = BTreeMap::new();
    for config in InputConfig::ALL {
        if let Some(path) = s.optional(&format!("data.{}", config.code())) {
            datasets.insert(config, read_points(&path)?);
        }
    }
    if datasets.is_empty() {
        bail!("staged fit needs at least `data.10`");
    }
    let result = staged_workflow(&datasets, &opts)?;
    let options = ModelOptions::default();
    let mut stages = serde_json::Map::new();
    for (config, r) in &result.stages {
        residual_rows(&mut table, r, &datasets[config], &options)?;
        stages.insert(config.code().to_string(), estimates_json(r));
    }
    Ok(Output {
        table,
        results: json!({
            "stages": stages,
            "cross_check": result.cross_check.as_ref().map(estimates_json),
            "params": {
                "g2": result.params.g2,
                "indist": result.params.indist,
                "eta_c": result.params.eta.eta_c,
                "eta_d": result.params.eta.eta_d,
                "eta_e": result.params.eta.eta_e,
                "eta_f": result.params.eta.eta_f,
            },
        }),
    })
}

pub fn calibrate_cmd(s: &Settings) -> Result<Output> {
    let path = s.required("data")?;
    let deg = s.flag("deg")?;
    let t = Table::read(File::open(&path).with_context(|| format!("opening data {path}"))?)?;
    let ti = t.column_index(&["theta"]).ok_or_else(|| anyhow!("{path}: missing `theta` column"))?;
    let vi = t
        .column_index(&["counts", "intensity", "value"])
        .ok_or_else(|| anyhow!("{path}: missing `counts`, `intensity` or `value` column"))?;
    let samples: Vec<(f64, f64)> =
        t.rows.iter().map(|r| (if deg { r[ti].to_radians() } else { r[ti] }, r[vi])).collect();
    let cal = calibrate(&samples, s.flag("offset")?)?;
    let mut table = Table::new(&["theta", "phi", "fit", "residual"]);
    for (i, (&theta, &phi)) in cal.theta.iter().zip(&cal.phi).enumerate() {
        table.push(vec![theta, phi, cal.fit.predict(theta), cal.fit.residuals[i]]);
    }
    Ok(Output {
        table,
        results: json!({
            "coefficient": cal.fit.coefficient,
            "offset": cal.fit.offset,
            "rms_residual": cal.fit.rms_residual,
            "flagged": cal.fit.flagged,
            "within_flatness": cal.fit.within_flatness(),
            "flatness_bound": calib::FLATNESS_BOUND,
        }),
    })
}

pub fn overlap(s: &Settings) -> Result<Output> {
    let wp = WavepacketParams::new(s.time_ps("t1", "59ps")?, s.time_ps("wp", "8.86ps")?)?;
    let a = s.time_ps("tau_start", "0ps")?;
    let b = s.time_ps("tau_end", "300ps")?;
    let n: usize = s.parse("points", "61")?;
    if n < 2 {
        bail!("`points` must be at least 2");
    }
    let source = SourceParams { g2: s.parse("g2", "0")?, indist: s.parse("indist", "1")?, ..SourceParams::ideal() };
    source.validate()?;
    let taus = phase_grid(a, b, n);
    let curve = contrast_vs_separation(&taus, &wp, &source)?;
    let mut table = Table::new(&["tau_ps", "overlap", "contrast"]);
    for p in &curve {
        table.push(vec![p.tau_ps, p.overlap, p.contrast]);
    }
    Ok(Output { table, results: json!({ "k": wp.k() }) })
}

pub fn synthesize_cmd(s: &Settings) -> Result<Output> {
    let config = config(s, "11")?;
    let scheme = scheme(s, config)?;
    let params = source(s)?;
    let phis = phi_grid(s, -PI, PI, 101)?;
    let peak: f64 = s.parse("peak", "1e5")?;
    let seed: u64 = s.parse("seed", "0")?;
    let data = synthesize(config, &params, &scheme, &phis, peak, seed)?;
    let mut table = Table::new(&["phi", "counts", "sigma"]);
    for d in &data {
        table.push(vec![d.phi, d.value, d.sigma]);
    }
    Ok(Output { table, results: json!({ "points": data.len() }) })
}

pub fn default_out(command: &str) -> &'static Path {
    Path::new(match command {
        "scan" => "scan.csv",
        "sweep" => "sweep.csv",
        "sensitivity" => "sensitivity.csv",
        "fit" => "fit.csv",
        "calibrate" => "calibrate.csv",
        "overlap" => "overlap.csv",
        _ => "synthesize.csv",
    })
}
