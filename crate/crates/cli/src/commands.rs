use std::fmt::Write as _;

use expou::calibration::{calibrate as run_calibration, CalibrationOptions, ObjectiveConfig, PriceSeries};
use expou::edgeworth::{cumulants_closed_form, edgeworth_density, negativity};
use expou::inversion::{invert_half_axis, tail_trim, FrequencyGrid};
use expou::linear_cf::{branch_smoothness_scan, LinearCf, LogRoute};
use expou::mc::{simulate as run_simulation, InitialVol, SimConfig};
use expou::stats::{build_histogram, estimate_cumulants_with, BinRule, CiMethod, CumulantSet};
use expou::Horizon;
use serde_json::json;

use crate::output::{CliError, Context, Meta, Sink};
use crate::{
    CalibrateArgs, CalibrationArgs, CfArgs, CiArg, CumulantsArgs, DensityArgs, EdgeworthArgs,
    RouteArg, SimulateArgs, StatsArgs,
};

fn params_json(p: &expou::ModelParams) -> serde_json::Value {
    json!(p.raw())
}

fn horizon(t: f64) -> Result<Horizon, CliError> {
    Horizon::new(0.0, t).ctx("model_core", "horizon")
}

fn io_text(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).ctx("cli", "format artifact")?;
    String::from_utf8(buf).ctx("cli", "format artifact")
}

pub fn simulate(a: SimulateArgs, sink: &Sink) -> Result<(), CliError> {
    let params = a.params.resolve()?;
    let checkpoints = if a.checkpoints.is_empty() { vec![a.t] } else { a.checkpoints };
    let initial = if a.stationary { InitialVol::Stationary } else { InitialVol::Fixed };
    let cfg = SimConfig::for_horizon(a.t, a.dt, a.paths, a.seed, a.dynamics)
        .with_hidden(a.hidden)
        .with_initial(initial);
    let mut meta = Meta::new("simulate", Some(a.seed), params_json(&params));
    meta.note("config", json!(cfg));
    let ens = run_simulation(&params, &cfg, &checkpoints).ctx("mc_engine", "simulate")?;
    let mut buf = Vec::new();
    ens.write_csv(&mut buf).ctx("mc_engine", "write paths")?;
    let data = String::from_utf8(buf).ctx("cli", "format artifact")?;
    sink.csv("simulate", &meta, &data)
}

fn read_column(path: &std::path::Path, column: &str) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .ctx("stats", "open input")?;
    let headers = rdr.headers().ctx("stats", "read header")?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CliError::new("stats", "select column", format!("no column `{column}` in {headers:?}")))?;
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.ctx("stats", "read row")?;
            let field = rec.get(idx).unwrap_or("");
            field
                .parse::<f64>()
                .map_err(|e| CliError::new("stats", "parse value", format!("row {}: `{field}`: {e}", i + 1)))
        })
        .collect()
}

pub fn cumulant_header() -> &'static str {
    CumulantSet::CSV_HEADER
}

pub fn stats(a: StatsArgs, sink: &Sink) -> Result<(), CliError> {
    let sample = read_column(&a.input, &a.column)?;
    let method = match a.ci {
        CiArg::Auto => CiMethod::Auto,
        CiArg::Delta => CiMethod::DeltaMethod,
        CiArg::Bootstrap => CiMethod::Bootstrap {
            resamples: a.resamples,
            seed: a.seed,
        },
    };
    let set = estimate_cumulants_with(&sample, a.confidence, method).ctx("stats", "estimate cumulants")?;
    let mut meta = Meta::new("stats", Some(a.seed), json!(null));
    meta.note("input", json!(a.input.display().to_string()));
    meta.note("column", json!(a.column));
    meta.note("ci_method", json!(set.method));
    if let Some(path) = &a.histogram {
        let hist = build_histogram(&sample, &BinRule::FreedmanDiaconis).ctx("stats", "histogram")?;
        let data = io_text(|b| hist.write_csv(b))?;
        let hist_sink = Sink {
            out: Some(path.clone()),
            out_dir: None,
        };
        hist_sink.csv("histogram", &meta, &data)?;
    }
    let data = format!("{}\n{}\n", cumulant_header(), set.csv_row());
    sink.csv("stats", &meta, &data)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

pub fn cumulants(a: CumulantsArgs, sink: &Sink) -> Result<(), CliError> {
    let params = a.params.resolve()?;
    let mut data = String::from("t,k1,k2,k3,k4,skew,kurt\n");
    for &t in &a.t {
        let c = cumulants_closed_form(&params, &horizon(t)?);
        writeln!(
            data,
            "{t},{:e},{:e},{:e},{:e},{},{}",
            c.k1,
            c.k2,
            c.k3,
            c.k4,
            opt(c.skew),
            opt(c.kurt)
        )
        .ctx("cli", "format artifact")?;
    }
    sink.csv("cumulants", &Meta::new("cumulants", None, params_json(&params)), &data)
}

pub fn edgeworth(a: EdgeworthArgs, sink: &Sink) -> Result<(), CliError> {
    let params = a.params.resolve()?;
    let cum = cumulants_closed_form(&params, &horizon(a.t)?);
    let neg = negativity(&cum).ctx("edgeworth", "negativity scan")?;
    if a.points < 2 || !(a.width > 0.0) {
        return Err(CliError::new("edgeworth", "grid", "need at least 2 points and a positive width"));
    }
    let sd = cum.k2.sqrt();
    let mut data = String::from("x,p\n");
    for j in 0..a.points {
        let x = cum.k1 + sd * a.width * (2.0 * j as f64 / (a.points - 1) as f64 - 1.0);
        let p = edgeworth_density(x, &cum).ctx("edgeworth", "density")?;
        writeln!(data, "{x:e},{p:e}").ctx("cli", "format artifact")?;
    }
    let mut meta = Meta::new("edgeworth", None, params_json(&params));
    meta.note("t", a.t);
    meta.note("cumulants", json!(cum));
    meta.note("negativity", json!(neg));
    if neg.negative {
        eprintln!(
            "warning: Edgeworth density is negative (min/max = {:.3e} at z = {:.2})",
            neg.min_ratio, neg.z_at_min
        );
    }
    sink.csv("edgeworth", &meta, &data)
}

pub fn cf(a: CfArgs, sink: &Sink) -> Result<(), CliError> {
    let params = a.params.resolve()?;
    let cf = LinearCf::new(&params, &horizon(a.t)?, a.x0, a.z0).ctx("linear_cf", "construct")?;
    let route = match a.route {
        RouteArg::Continuous => LogRoute::Continuous,
        RouteArg::Naive => LogRoute::NaivePrincipal,
    };
    let report = branch_smoothness_scan(&cf, a.phi_max, a.points, route).ctx("linear_cf", "smoothness scan")?;
    let dphi = a.phi_max / (a.points - 1) as f64;
    let mut data = String::from("phi,re,im,re_a,im_a,re_b,im_b,re_c,im_c\n");
    for j in 0..a.points {
        let v = cf.eval_route(j as f64 * dphi, route);
        let f = v.f();
        writeln!(
            data,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            v.phi, f.re, f.im, v.a.re, v.a.im, v.b.re, v.b.im, v.c.re, v.c.im
        )
        .ctx("cli", "format artifact")?;
    }
    let mut meta = Meta::new("cf", None, params_json(&params));
    meta.note("t", a.t);
    meta.note("smoothness", json!(report));
    sink.csv("cf", &meta, &data)
}

fn parse_grid(spec: &str) -> Result<(f64, f64, usize), CliError> {
    let bad = || CliError::new("inversion", "parse grid", format!("expected lo:hi:points, got `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(bad());
    };
    Ok((
        lo.parse().map_err(|_| bad())?,
        hi.parse().map_err(|_| bad())?,
        n.parse().map_err(|_| bad())?,
    ))
}

pub fn density(a: DensityArgs, sink: &Sink) -> Result<(), CliError> {
    let params = a.params.resolve()?;
    let h = horizon(a.t)?;
    let cf = LinearCf::new(&params, &h, 0.0, None).ctx("linear_cf", "construct")?;
    let grid = FrequencyGrid::new(a.phi_max, a.n).ctx("inversion", "frequency grid")?;
    let (lo, hi, n) = match &a.x {
        Some(s) => parse_grid(s)?,
        None => {
            let c = cumulants_closed_form(&params, &h);
            let sd = c.k2.max(0.0).sqrt();
            (c.k1 - 8.0 * sd, c.k1 + 8.0 * sd, 801)
        }
    };
    if n < 2 || !(hi > lo) {
        return Err(CliError::new("inversion", "grid", "need hi > lo and at least 2 points"));
    }
    let xs: Vec<f64> = (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect();
    let mut d = invert_half_axis(|phi| cf.f(phi), grid, &xs, a.method).ctx("inversion", "invert")?;
    if let Some(threshold) = a.trim {
        d = tail_trim(&d, threshold).ctx("inversion", "tail trim")?;
    }
    let data = io_text(|b| d.write_csv(b))?;
    let mut meta = Meta::new("density", None, params_json(&params));
    meta.note("t", a.t);
    meta.note("grid", json!(grid));
    meta.note("method", json!(a.method));
    meta.note("normalization", d.normalization());
    sink.csv("density", &meta, &data)
}

pub fn calibration_options(a: &CalibrationArgs) -> Result<CalibrationOptions, CliError> {
    let fit_range = match &a.fit_range {
        Some(s) => {
            let bad = || CliError::new("calibration", "parse fit range", format!("expected lo:hi, got `{s}`"));
            let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
            Some((lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?))
        }
        None => None,
    };
    Ok(CalibrationOptions {
        window: a.window,
        fit_range,
        horizons: a.horizons,
        objective: ObjectiveConfig {
            n_paths: a.paths,
            seed: a.seed,
            ..ObjectiveConfig::default()
        },
        matching: a.matching,
        proxy_moments: !a.no_proxy_moments,
        replicas: a.replicas,
        bias_iterations: a.bias_iterations,
        ..CalibrationOptions::default()
    })
}

pub fn calibrate_series(
    command: &str,
    series: &PriceSeries,
    a: &CalibrationArgs,
    mut meta_extra: Vec<(&str, serde_json::Value)>,
    sink: &Sink,
) -> Result<(), CliError> {
    let opts = calibration_options(a)?;
    let mut meta = Meta::new(command, Some(a.seed), json!(null));
    meta.note("options", json!(opts));
    for (k, v) in meta_extra.drain(..) {
        meta.note(k, v);
    }
    let result = run_calibration(series, &opts).ctx("calibration", "calibrate")?;
    sink.json(command.rsplit(' ').next().unwrap_or(command), &meta, json!(result))
}

pub fn calibrate(a: CalibrateArgs, sink: &Sink) -> Result<(), CliError> {
    let series = PriceSeries::from_csv_path(&a.input).ctx("calibration", "read series")?;
    calibrate_series(
        "calibrate",
        &series,
        &a.options,
        vec![("input", json!(a.input.display().to_string()))],
        sink,
    )
}
