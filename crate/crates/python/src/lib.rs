//! Python bindings: `import expou`.
//!
//! Parameters are keyword arguments `m`, `alpha`, `rho`, `gamma`, `y0`,
//! `mu` and either `beta` or `k`; the defaults are `m = 0.1`, `α = 10`,
//! `β = 1%`, `ρ = −0.9`. Structured results come back as dicts.

use expou::calibration::{calibrate as run_calibration, CalibrationOptions, PriceSeries};
use expou::edgeworth::{cumulants_closed_form, negativity, TheoreticalCumulants};
use expou::inversion::{invert_half_axis, FrequencyGrid, Method};
use expou::linear_cf::{log10_negative_vol_probability, negative_vol_probability, LinearCf};
use expou::mc::{simulate as run_simulation, Dynamics, SimConfig};
use expou::stats::estimate_cumulants;
use expou::{Horizon, ModelParams};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[allow(clippy::too_many_arguments)]
fn params(
    m: f64,
    alpha: f64,
    beta: Option<f64>,
    k: Option<f64>,
    rho: f64,
    gamma: f64,
    y0: f64,
    mu: f64,
) -> PyResult<ModelParams> {
    let k = match (beta, k) {
        (Some(_), Some(_)) => return Err(value_error("give beta or k, not both")),
        (None, Some(k)) => k,
        (b, None) => {
            let b = b.unwrap_or(0.01);
            if !(b >= 0.0) {
                return Err(value_error(format!("beta must be non-negative, got {b}")));
            }
            (2.0 * alpha * b).sqrt()
        }
    };
    let raw = expou::RawParams {
        s0: 1.0,
        mu,
        m,
        y0,
        alpha,
        gamma,
        k,
        rho,
    };
    expou::model::validate(raw).map_err(value_error)
}

fn horizon(t: f64) -> PyResult<Horizon> {
    Horizon::new(0.0, t).map_err(value_error)
}

fn cumulant_dict<'py>(py: Python<'py>, c: &TheoreticalCumulants) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("k1", c.k1)?;
    d.set_item("k2", c.k2)?;
    d.set_item("k3", c.k3)?;
    d.set_item("k4", c.k4)?;
    d.set_item("skew", c.skew)?;
    d.set_item("kurt", c.kurt)?;
    Ok(d)
}

/// Closed-form cumulants of X at horizon `t`.
#[pyfunction]
#[pyo3(signature = (t, *, m=0.1, alpha=10.0, beta=None, k=None, rho=-0.9, gamma=0.0, y0=0.0, mu=0.0))]
#[allow(clippy::too_many_arguments)]
fn cumulants<'py>(
    py: Python<'py>,
    t: f64,
    m: f64,
    alpha: f64,
    beta: Option<f64>,
    k: Option<f64>,
    rho: f64,
    gamma: f64,
    y0: f64,
    mu: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params(m, alpha, beta, k, rho, gamma, y0, mu)?;
    let c = cumulants_closed_form(&p, &horizon(t)?);
    let d = cumulant_dict(py, &c)?;
    if c.k2 > 0.0 {
        d.set_item("edgeworth_negative", negativity(&c).map_err(value_error)?.negative)?;
    }
    Ok(d)
}

/// Terminal X of `paths` Monte Carlo paths.
#[pyfunction]
#[pyo3(signature = (t, *, paths=10_000, dt=1e-3, seed=1, dynamics="exponential", m=0.1, alpha=10.0, beta=None, k=None, rho=-0.9, gamma=0.0, y0=0.0, mu=0.0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    t: f64,
    paths: usize,
    dt: f64,
    seed: u64,
    dynamics: &str,
    m: f64,
    alpha: f64,
    beta: Option<f64>,
    k: Option<f64>,
    rho: f64,
    gamma: f64,
    y0: f64,
    mu: f64,
) -> PyResult<Vec<f64>> {
    let p = params(m, alpha, beta, k, rho, gamma, y0, mu)?;
    let dynamics: Dynamics = dynamics.parse().map_err(value_error)?;
    let cfg = SimConfig::for_horizon(t, dt, paths, seed, dynamics);
    let ens = py
        .detach(|| run_simulation(&p, &cfg, &[]))
        .map_err(value_error)?;
    Ok(ens.x_final)
}

/// k-statistics, skewness, excess kurtosis and CI half-widths of a sample.
#[pyfunction]
#[pyo3(signature = (sample, confidence=0.95))]
fn sample_cumulants<'py>(
    py: Python<'py>,
    sample: Vec<f64>,
    confidence: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let s = estimate_cumulants(&sample, confidence).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("n", s.n)?;
    d.set_item("k1", s.k1)?;
    d.set_item("k2", s.k2)?;
    d.set_item("k3", s.k3)?;
    d.set_item("k4", s.k4)?;
    d.set_item("skew", s.skew)?;
    d.set_item("kurt", s.kurt)?;
    let h = PyDict::new(py);
    h.set_item("k1", s.half_widths.k1)?;
    h.set_item("k2", s.half_widths.k2)?;
    h.set_item("skew", s.half_widths.skew)?;
    h.set_item("kurt", s.half_widths.kurt)?;
    d.set_item("half_widths", h)?;
    Ok(d)
}

/// Characteristic function of the linearised model as `(re, im)` pairs.
#[pyfunction]
#[pyo3(signature = (phi, t, *, x0=0.0, m=0.1, alpha=10.0, beta=None, k=None, rho=-0.9, gamma=0.0, y0=0.0))]
#[allow(clippy::too_many_arguments)]
fn cf(
    phi: Vec<f64>,
    t: f64,
    x0: f64,
    m: f64,
    alpha: f64,
    beta: Option<f64>,
    k: Option<f64>,
    rho: f64,
    gamma: f64,
    y0: f64,
) -> PyResult<Vec<(f64, f64)>> {
    let p = params(m, alpha, beta, k, rho, gamma, y0, 0.0)?;
    let f = LinearCf::new(&p, &horizon(t)?, x0, None).map_err(value_error)?;
    Ok(phi
        .iter()
        .map(|&v| {
            let z = f.f(v);
            (z.re, z.im)
        })
        .collect())
}

/// Density of X at `x` (strictly increasing) by FFT inversion.
#[pyfunction]
#[pyo3(signature = (x, t, *, phi_max=1e3, n=1 << 20, m=0.1, alpha=10.0, beta=None, k=None, rho=-0.9, gamma=0.0, y0=0.0))]
#[allow(clippy::too_many_arguments)]
fn density(
    py: Python<'_>,
    x: Vec<f64>,
    t: f64,
    phi_max: f64,
    n: usize,
    m: f64,
    alpha: f64,
    beta: Option<f64>,
    k: Option<f64>,
    rho: f64,
    gamma: f64,
    y0: f64,
) -> PyResult<Vec<f64>> {
    let p = params(m, alpha, beta, k, rho, gamma, y0, 0.0)?;
    let f = LinearCf::new(&p, &horizon(t)?, 0.0, None).map_err(value_error)?;
    let grid = FrequencyGrid::new(phi_max, n).map_err(value_error)?;
    let d = py
        .detach(|| invert_half_axis(|v| f.f(v), grid, &x, Method::Fft))
        .map_err(value_error)?;
    Ok(d.p)
}

/// `(P(Z < 0), log10 P(Z < 0))` for the linearised volatility at `t`.
#[pyfunction]
#[pyo3(signature = (t, *, m=0.1, alpha=10.0, beta=None, k=None, rho=-0.9, gamma=0.0, y0=0.0))]
#[allow(clippy::too_many_arguments)]
fn negative_vol(
    t: f64,
    m: f64,
    alpha: f64,
    beta: Option<f64>,
    k: Option<f64>,
    rho: f64,
    gamma: f64,
    y0: f64,
) -> PyResult<(f64, f64)> {
    let p = params(m, alpha, beta, k, rho, gamma, y0, 0.0)?;
    let h = horizon(t)?;
    Ok((negative_vol_probability(&p, &h), log10_negative_vol_probability(&p, &h)))
}

/// Calibrates a `date,close` CSV; returns the result as a JSON string.
#[pyfunction]
#[pyo3(signature = (path, *, seed=None, replicas=None))]
fn calibrate(py: Python<'_>, path: &str, seed: Option<u64>, replicas: Option<usize>) -> PyResult<String> {
    let series = PriceSeries::from_csv_path(path).map_err(value_error)?;
    let mut opts = CalibrationOptions::default();
    if let Some(s) = seed {
        opts = opts.with_seed(s);
    }
    if let Some(r) = replicas {
        opts.replicas = r;
    }
    let r = py
        .detach(|| run_calibration(&series, &opts))
        .map_err(value_error)?;
    Ok(r.to_json())
}

#[pymodule]
#[pyo3(name = "expou")]
fn expou_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", expou::VERSION)?;
    m.add_function(wrap_pyfunction!(cumulants, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sample_cumulants, m)?)?;
    m.add_function(wrap_pyfunction!(cf, m)?)?;
    m.add_function(wrap_pyfunction!(density, m)?)?;
    m.add_function(wrap_pyfunction!(negative_vol, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    Ok(())
}
