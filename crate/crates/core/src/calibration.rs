//! Parameter estimation from a daily close-price series.
//!
//! The pipeline runs in four stages:
//!
//! 1. `μ` from the mean simple return.
//! 2. `(m̄, β)` from a log-normal fit to a rolling-RMS volatility proxy.
//! 3. `(α, ρ)` by matching the horizon scaling of skewness and kurtosis
//!    against Monte Carlo, with common random numbers across evaluations.
//! 4. The proxy is a biased estimator of the hidden volatility: it averages
//!    over a window and carries sampling noise. Stage 2 is therefore
//!    corrected by indirect inference. Synthetic series are simulated at the
//!    current estimate and passed through the same proxy and fit, and
//!    `(m̄, β)` is shifted by the gap between the observed and simulated
//!    fits. Stage 3 is then repeated.
//!
//! `γ` and `y0` are normalised to zero throughout.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mc::{simulate, Dynamics, InitialVol, SimConfig, SimError};
use crate::model::{ModelParams, ParamError};
use crate::optimize::{principal_axis, OptimizeError, PrincipalAxisOptions};
use crate::stats::{
    build_histogram, estimate_cumulants_with, neumaier_sum, quantile_sorted, z_value, BinRule,
    CiMethod, CumulantSet, SampleMoments, StatsError,
};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid price series: {0}")]
    Series(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("degenerate data at horizon {horizon} (zero variance)")]
    Degenerate { horizon: usize },
    #[error("log-normal fit failed: {0}")]
    Fit(String),
    #[error("objective failed at alpha = {alpha}, rho = {rho}: {message}")]
    Evaluation { alpha: f64, rho: f64, message: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

/// Documented minimum series length for [`calibrate`].
pub const MIN_CALIBRATION_LEN: usize = 500;

/// Daily close prices on strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
    dt: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PriceRecord {
    date: NaiveDate,
    close: f64,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self, CalibrationError> {
        if dates.len() != closes.len() {
            return Err(CalibrationError::Series(format!(
                "{} dates but {} closes",
                dates.len(),
                closes.len()
            )));
        }
        if dates.len() < 2 {
            return Err(CalibrationError::Series("need at least two observations".into()));
        }
        if let Some(i) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(CalibrationError::Series(format!(
                "dates not strictly increasing at row {}: {} then {}",
                i + 1,
                dates[i],
                dates[i + 1]
            )));
        }
        if let Some(i) = closes.iter().position(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(CalibrationError::Series(format!(
                "non-positive close {} on {}",
                closes[i], dates[i]
            )));
        }
        let span = (dates[dates.len() - 1] - dates[0]).num_days() as f64;
        let dt = span / 365.25 / (dates.len() - 1) as f64;
        Ok(Self { dates, closes, dt })
    }

    /// Reads `date,close` CSV with ISO dates.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, CalibrationError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "date" || &headers[1] != "close" {
            return Err(CalibrationError::Series(format!(
                "expected header `date,close`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut dates, mut closes) = (Vec::new(), Vec::new());
        for rec in rdr.deserialize() {
            let rec: PriceRecord = rec?;
            dates.push(rec.date);
            closes.push(rec.close);
        }
        Self::new(dates, closes)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CalibrationError> {
        let mut w = csv::Writer::from_writer(writer);
        for (&date, &close) in self.dates.iter().zip(&self.closes) {
            w.serialize(PriceRecord { date, close })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    /// Years per observation: calendar span / 365.25 / (n − 1).
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn log_returns(&self) -> Vec<f64> {
        self.closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub mu: f64,
    /// Standard error of the sample mean, scaled by `1/Δt`.
    pub se: f64,
}

/// `Σ(ΔSᵢ/Sᵢ) / (n Δt)` over the `n` one-step returns.
pub fn estimate_mu(series: &PriceSeries) -> Result<MuEstimate, CalibrationError> {
    let c = series.closes();
    if c.len() < 2 {
        return Err(CalibrationError::Series("need at least two observations".into()));
    }
    if c.iter().any(|v| !(*v > 0.0)) {
        return Err(CalibrationError::Series("non-positive price".into()));
    }
    let r: Vec<f64> = c.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
    let n = r.len() as f64;
    let mean = neumaier_sum(r.iter().copied()) / n;
    let var = if r.len() > 1 {
        neumaier_sum(r.iter().map(|v| (v - mean).powi(2))) / (n - 1.0)
    } else {
        0.0
    };
    let dt = series.dt();
    Ok(MuEstimate {
        mu: mean / dt,
        se: (var / n).sqrt() / dt,
    })
}

/// Per-observation volatility scale (return units per observation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityProxySeries {
    pub sigma_daily: Vec<f64>,
    pub window: usize,
}

/// Centered rolling root-mean-square of demeaned log returns.
pub fn extract_vol_proxy(
    series: &PriceSeries,
    window: usize,
) -> Result<VolatilityProxySeries, CalibrationError> {
    proxy_from_returns(&series.log_returns(), window)
}

fn proxy_from_returns(
    returns: &[f64],
    window: usize,
) -> Result<VolatilityProxySeries, CalibrationError> {
    if window < 5 || window % 2 == 0 {
        return Err(CalibrationError::Input(format!(
            "proxy window must be odd and at least 5, got {window}"
        )));
    }
    if returns.len() < window {
        return Err(CalibrationError::Input(format!(
            "{} returns are fewer than the proxy window {window}",
            returns.len()
        )));
    }
    let mean = neumaier_sum(returns.iter().copied()) / returns.len() as f64;
    let sq: Vec<f64> = returns.iter().map(|r| (r - mean).powi(2)).collect();
    let sigma_daily: Vec<f64> = sq
        .windows(window)
        .map(|w| (neumaier_sum(w.iter().copied()) / window as f64).sqrt())
        .collect();
    if sigma_daily.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(CalibrationError::Input(
            "volatility proxy has zero or non-finite values (flat prices?)".into(),
        ));
    }
    Ok(VolatilityProxySeries { sigma_daily, window })
}

/// Log-normal fit `p(σ) ∝ σ⁻¹ exp(−(ln σ − ln σ₀)²/(2s²))` to a proxy
/// histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalFit {
    pub log_sigma0: f64,
    pub s: f64,
    pub se_log_sigma0: f64,
    pub se_s: f64,
    pub fit_range: (f64, f64),
    pub n_in_range: usize,
    pub n_bins: usize,
    /// Reduced weighted residual sum of squares.
    pub chi2_per_dof: f64,
}

impl LognormalFit {
    /// `σ₀ / √Δt`.
    pub fn m_bar(&self, dt: f64) -> f64 {
        self.log_sigma0.exp() / dt.sqrt()
    }

    /// `s²`.
    pub fn beta(&self) -> f64 {
        self.s * self.s
    }
}

/// Central 90% quantile band of the proxy.
pub fn default_fit_range(proxy: &VolatilityProxySeries) -> (f64, f64) {
    let mut v = proxy.sigma_daily.clone();
    v.sort_by(f64::total_cmp);
    (quantile_sorted(&v, 0.05), quantile_sorted(&v, 0.95))
}

/// Weighted least squares of `ln(p(σ)·σ)` on a quadratic in `ln σ`, over a
/// Freedman–Diaconis histogram of the proxy values inside `fit_range`
/// (default: [`default_fit_range`]).
pub fn fit_lognormal(
    proxy: &VolatilityProxySeries,
    fit_range: Option<(f64, f64)>,
) -> Result<LognormalFit, CalibrationError> {
    const MIN_IN_RANGE: usize = 100;
    const MIN_BIN_COUNT: u64 = 10;
    let (lo, hi) = fit_range.unwrap_or_else(|| default_fit_range(proxy));
    if !(lo > 0.0 && hi > lo) {
        return Err(CalibrationError::Input(format!("invalid fit range {lo}:{hi}")));
    }
    let inside: Vec<f64> = proxy
        .sigma_daily
        .iter()
        .copied()
        .filter(|s| (lo..=hi).contains(s))
        .collect();
    if inside.len() < MIN_IN_RANGE {
        return Err(CalibrationError::Fit(format!(
            "{} proxy values inside {lo}:{hi}, need {MIN_IN_RANGE}",
            inside.len()
        )));
    }
    let hist = build_histogram(&inside, &BinRule::FreedmanDiaconis)?.merge_sparse(MIN_BIN_COUNT);
    let centers = hist.centers();
    let rows: Vec<(f64, f64, f64)> = hist
        .counts
        .iter()
        .zip(&hist.densities)
        .zip(&centers)
        .filter(|((c, _), _)| **c >= MIN_BIN_COUNT)
        .map(|((&c, &p), &x)| {
            let c = c as f64;
            // ln of a Poisson count is biased low by about 1/(2c).
            (x.ln(), (p * x).ln() + 0.5 / c, c)
        })
        .collect();
    if rows.len() < 4 {
        return Err(CalibrationError::Fit(format!(
            "only {} usable histogram bins",
            rows.len()
        )));
    }
    let mut xtwx = Matrix3::<f64>::zeros();
    let mut xtwy = Vector3::<f64>::zeros();
    for &(u, y, w) in &rows {
        let b = Vector3::new(1.0, u, u * u);
        xtwx += w * b * b.transpose();
        xtwy += w * y * b;
    }
    let cov = xtwx
        .try_inverse()
        .ok_or_else(|| CalibrationError::Fit("singular normal equations".into()))?;
    let coef = cov * xtwy;
    let (c1, c2) = (coef[1], coef[2]);
    if !(c2 < 0.0) {
        return Err(CalibrationError::Fit(
            "histogram is not log-normal shaped (non-negative curvature)".into(),
        ));
    }
    let rss: f64 = rows
        .iter()
        .map(|&(u, y, w)| w * (y - coef[0] - c1 * u - c2 * u * u).powi(2))
        .sum();
    let dof = rows.len() - 3;
    let chi2_per_dof = rss / dof as f64;
    let cov = cov * chi2_per_dof.max(1.0);

    let s = (-2.0 * c2).powf(-0.5);
    let log_sigma0 = c1 * s * s;
    let g_l = Vector3::new(0.0, s * s, 2.0 * c1 * s.powi(4));
    let g_s = Vector3::new(0.0, 0.0, s.powi(3));
    Ok(LognormalFit {
        log_sigma0,
        s,
        se_log_sigma0: (g_l.transpose() * cov * g_l)[0].sqrt(),
        se_s: (g_s.transpose() * cov * g_s)[0].sqrt(),
        fit_range: (lo, hi),
        n_in_range: inside.len(),
        n_bins: rows.len(),
        chi2_per_dof,
    })
}

/// Normalised cumulants of returns over `horizon` observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonCumulants {
    pub horizon: usize,
    /// Overlapping windows were used; standard errors are then scaled to
    /// the `n/horizon` independent windows.
    pub overlapping: bool,
    pub cumulants: CumulantSet,
    pub se_skew: f64,
    pub se_kurt: f64,
    /// Number of independent windows behind the estimate.
    pub effective_n: usize,
}

/// Minimum number of non-overlapping windows before overlapping ones are
/// used instead.
pub const MIN_NON_OVERLAPPING: usize = 200;
const CONFIDENCE: f64 = 0.95;

fn horizon_cumulants(
    sample: &[f64],
    horizon: usize,
    overlapping: bool,
    effective_n: usize,
) -> Result<HorizonCumulants, CalibrationError> {
    let cumulants = estimate_cumulants_with(sample, CONFIDENCE, CiMethod::DeltaMethod)
        .map_err(|e| match e {
            StatsError::ZeroVariance => CalibrationError::Degenerate { horizon },
            e => e.into(),
        })?;
    let z = z_value(CONFIDENCE)?;
    let inflate = (sample.len() as f64 / effective_n as f64).sqrt();
    Ok(HorizonCumulants {
        horizon,
        overlapping,
        se_skew: cumulants.half_widths.skew / z * inflate,
        se_kurt: cumulants.half_widths.kurt / z * inflate,
        effective_n,
        cumulants,
    })
}

/// Cumulants of centered returns `ln S(t+iΔt)/S(t) − μ iΔt` for
/// `i = 1..=horizons`.
pub fn data_cumulants(
    series: &PriceSeries,
    mu: f64,
    horizons: usize,
) -> Result<Vec<HorizonCumulants>, CalibrationError> {
    let logs: Vec<f64> = series.closes().iter().map(|c| c.ln()).collect();
    check_horizons(logs.len() - 1, horizons)?;
    let dt = series.dt();
    (1..=horizons)
        .map(|i| {
            let (sample, overlapping, independent) = horizon_sample(&logs, i, mu * i as f64 * dt);
            horizon_cumulants(&sample, i, overlapping, independent)
        })
        .collect()
}

fn check_horizons(n_ret: usize, horizons: usize) -> Result<(), CalibrationError> {
    if horizons == 0 || horizons > n_ret / 2 {
        return Err(CalibrationError::Input(format!(
            "{horizons} horizons do not fit a series of {n_ret} returns"
        )));
    }
    Ok(())
}

/// `i`-step returns net of `drift`: non-overlapping when at least
/// [`MIN_NON_OVERLAPPING`] fit, otherwise overlapping. Also returns the
/// overlap flag and the number of independent windows.
fn horizon_sample(logs: &[f64], i: usize, drift: f64) -> (Vec<f64>, bool, usize) {
    let n_ret = logs.len() - 1;
    let independent = n_ret / i;
    let overlapping = independent < MIN_NON_OVERLAPPING;
    let stride = if overlapping { 1 } else { i };
    let sample = (0..=n_ret - i)
        .step_by(stride)
        .map(|j| logs[j + i] - logs[j] - drift)
        .collect();
    (sample, overlapping, independent)
}

/// Monte Carlo settings of the cumulant-matching objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub n_paths: usize,
    /// Euler steps per observation interval.
    pub substeps: usize,
    /// Shared by every evaluation (common random numbers).
    pub seed: u64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            substeps: 4,
            seed: 0xca11_b2a7,
        }
    }
}

/// Parameters held fixed while `(α, ρ)` are searched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    pub mu: f64,
    pub m_bar: f64,
    pub beta: f64,
}

fn model(fixed: &FixedParams, alpha: f64, rho: f64) -> Result<ModelParams, ParamError> {
    ModelParams::from_beta(fixed.m_bar, alpha, fixed.beta, rho)?.with(|r| r.mu = fixed.mu)
}

/// Exponential-dynamics cumulants at `i Δt`, `i = 1..=horizons`, from a
/// stationary initial volatility.
pub fn mc_cumulants(
    alpha: f64,
    rho: f64,
    fixed: &FixedParams,
    dt_obs: f64,
    horizons: usize,
    cfg: &ObjectiveConfig,
) -> Result<Vec<HorizonCumulants>, CalibrationError> {
    let params = model(fixed, alpha, rho)?;
    let substeps = cfg.substeps.max(1);
    let sim = SimConfig::new(
        dt_obs / substeps as f64,
        horizons * substeps,
        cfg.n_paths,
        cfg.seed,
        Dynamics::Exponential,
    )
    .with_initial(InitialVol::Stationary);
    let checkpoints: Vec<f64> = (1..=horizons).map(|i| i as f64 * dt_obs).collect();
    let ens = simulate(&params, &sim, &checkpoints)?;
    (0..horizons)
        .map(|c| horizon_cumulants(&ens.x_at(c), c + 1, false, cfg.n_paths))
        .collect()
}

/// `Σᵢ (ςᵢ − ς'ᵢ)²/(εᵢ² + ε'ᵢ²) + (κᵢ − κ'ᵢ)²/(εᵢ² + ε'ᵢ²)`.
pub fn chi2(data: &[HorizonCumulants], mc: &[HorizonCumulants]) -> Result<f64, CalibrationError> {
    if data.len() != mc.len() {
        return Err(CalibrationError::Input(format!(
            "{} data horizons against {} simulated",
            data.len(),
            mc.len()
        )));
    }
    let mut terms = Vec::with_capacity(2 * data.len());
    for (d, m) in data.iter().zip(mc) {
        let vs = d.se_skew.powi(2) + m.se_skew.powi(2);
        let vk = d.se_kurt.powi(2) + m.se_kurt.powi(2);
        if !(vs > 0.0 && vk > 0.0) {
            return Err(CalibrationError::Degenerate { horizon: d.horizon });
        }
        terms.push((d.cumulants.skew - m.cumulants.skew).powi(2) / vs);
        terms.push((d.cumulants.kurt - m.cumulants.kurt).powi(2) / vk);
    }
    Ok(neumaier_sum(terms))
}

pub fn chi2_objective(
    alpha: f64,
    rho: f64,
    fixed: &FixedParams,
    dt_obs: f64,
    data: &[HorizonCumulants],
    cfg: &ObjectiveConfig,
) -> Result<f64, CalibrationError> {
    if data.iter().any(|d| !(d.cumulants.k2 > 0.0)) {
        let h = data.iter().find(|d| !(d.cumulants.k2 > 0.0)).unwrap().horizon;
        return Err(CalibrationError::Degenerate { horizon: h });
    }
    let mc = mc_cumulants(alpha, rho, fixed, dt_obs, data.len(), cfg)?;
    chi2(data, &mc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRhoStep {
    pub alpha: f64,
    pub rho: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRhoFit {
    pub alpha: f64,
    pub rho: f64,
    pub objective: f64,
    pub evaluations: usize,
    pub trace: Vec<AlphaRhoStep>,
}

fn optimizer_defaults() -> PrincipalAxisOptions {
    PrincipalAxisOptions {
        step: 0.3,
        line_tol: 1e-3,
        ftol: 1e-6,
        xtol: 1e-3,
        max_sweeps: 30,
    }
}

/// Principal-axis search over `α > 0`, `ρ ∈ (−1, 1)`, carried out in
/// `(ln α, atanh ρ)`.
pub fn optimize_alpha_rho(
    mut objective: impl FnMut(f64, f64) -> Result<f64, CalibrationError>,
    start: (f64, f64),
    opts: &PrincipalAxisOptions,
) -> Result<AlphaRhoFit, CalibrationError> {
    let (a0, r0) = start;
    if !(a0 > 0.0) || !(r0 > -1.0 && r0 < 1.0) {
        return Err(CalibrationError::Input(format!(
            "start ({a0}, {r0}) outside alpha > 0, rho in (-1, 1)"
        )));
    }
    let back = |x: &[f64]| (x[0].exp(), x[1].tanh());
    let mut f = |x: &[f64]| -> Result<f64, String> {
        let (a, r) = back(x);
        if !(r > -1.0 && r < 1.0) || !(a > 0.0 && a.is_finite()) {
            return Ok(f64::INFINITY);
        }
        objective(a, r).map_err(|e| e.to_string())
    };
    let min = principal_axis(&mut f, &[a0.ln(), r0.atanh()], opts).map_err(|e| match e {
        OptimizeError::Evaluation { x, message } => {
            let (alpha, rho) = back(&x);
            CalibrationError::Evaluation { alpha, rho, message }
        }
        e => e.into(),
    })?;
    let (alpha, rho) = back(&min.x);
    Ok(AlphaRhoFit {
        alpha,
        rho,
        objective: min.f,
        evaluations: min.evaluations,
        trace: min
            .trace
            .iter()
            .map(|p| {
                let (alpha, rho) = back(&p.x);
                AlphaRhoStep {
                    alpha,
                    rho,
                    objective: p.f,
                }
            })
            .collect(),
    })
}

/// Model parameters of a synthetic series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub mu: f64,
    pub m_bar: f64,
    pub beta: f64,
    pub alpha: f64,
    pub rho: f64,
}

/// Consecutive weekdays starting at `start` (rolled forward to a weekday).
pub fn weekday_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

pub const SYNTHETIC_START: NaiveDate = match NaiveDate::from_ymd_opt(1960, 1, 4) {
    Some(d) => d,
    None => panic!("invalid start date"),
};

/// Log-price increments of `replicas` independent series of `n_days`
/// observations, each from a stationary volatility state.
fn synthetic_log_paths(
    spec: &SyntheticSpec,
    n_days: usize,
    dt: f64,
    replicas: usize,
    seed: u64,
    substeps: usize,
) -> Result<Vec<Vec<f64>>, CalibrationError> {
    let params = ModelParams::from_beta(spec.m_bar, spec.alpha, spec.beta, spec.rho)?;
    let substeps = substeps.max(1);
    let sim = SimConfig::new(
        dt / substeps as f64,
        (n_days - 1) * substeps,
        replicas,
        seed,
        Dynamics::Exponential,
    )
    .with_initial(InitialVol::Stationary);
    let checkpoints: Vec<f64> = (1..n_days).map(|i| i as f64 * dt).collect();
    let ens = simulate(&params, &sim, &checkpoints)?;
    Ok((0..replicas)
        .map(|p| {
            let mut x = Vec::with_capacity(n_days);
            x.push(0.0);
            x.extend(ens.path(p).iter().enumerate().map(|(i, v)| v + spec.mu * (i + 1) as f64 * dt));
            x
        })
        .collect())
}

/// Weekday-calendar close series simulated from the exponential dynamics,
/// starting at 100.
pub fn synthetic_series(
    spec: &SyntheticSpec,
    n_days: usize,
    seed: u64,
) -> Result<PriceSeries, CalibrationError> {
    if n_days < 2 {
        return Err(CalibrationError::Input("need at least two days".into()));
    }
    let dates = weekday_calendar(SYNTHETIC_START, n_days);
    let span = (dates[n_days - 1] - dates[0]).num_days() as f64;
    let dt = span / 365.25 / (n_days - 1) as f64;
    let logs = synthetic_log_paths(spec, n_days, dt, 1, seed, 4)?.remove(0);
    let closes = logs.iter().map(|x| 100.0 * x.exp()).collect();
    PriceSeries::new(dates, closes)
}

/// Lags, in observations, of the log-proxy autocorrelations.
pub const PERSISTENCE_LAGS: [usize; 7] = [1, 3, 5, 7, 10, 15, 21];
/// Leads, in observations, of the return/log-proxy correlations. Lead `L`
/// pairs the return on day `t` with the proxy window starting at `t + L`.
pub const LEVERAGE_LEADS: [usize; 4] = [1, 6, 11, 21];
/// Sample standard deviation of `ln σ` over the whole proxy.
pub fn log_spread(proxy: &VolatilityProxySeries) -> f64 {
    let logs = demeaned(proxy.sigma_daily.iter().map(|s| s.ln()));
    (neumaier_sum(logs.iter().map(|v| v * v)) / (logs.len() - 1) as f64).sqrt()
}

fn demeaned(x: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let n = x.clone().count() as f64;
    let mean = neumaier_sum(x.clone()) / n;
    x.map(|v| v - mean).collect()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ab = neumaier_sum(a.iter().zip(b).map(|(x, y)| x * y));
    let aa = neumaier_sum(a.iter().map(|x| x * x));
    let bb = neumaier_sum(b.iter().map(|x| x * x));
    ab / (aa * bb).sqrt()
}

/// Moments of the volatility proxy that carry the persistence `α` and the
/// leverage `ρ`: autocorrelations of `ln σ` at [`PERSISTENCE_LAGS`], then
/// correlations of returns with later `ln σ` at [`LEVERAGE_LEADS`].
///
/// `proxy` must come from `returns` through [`extract_vol_proxy`] with the
/// same window.
pub fn proxy_moments(
    returns: &[f64],
    proxy: &VolatilityProxySeries,
) -> Result<Vec<f64>, CalibrationError> {
    let n = proxy.sigma_daily.len();
    let max_lag = PERSISTENCE_LAGS
        .iter()
        .chain(&LEVERAGE_LEADS)
        .max()
        .copied()
        .unwrap_or(0);
    if n < 10 * max_lag || returns.len() != n + proxy.window - 1 {
        return Err(CalibrationError::Input(format!(
            "{n} proxy values are too few for proxy moments (or do not match the returns)"
        )));
    }
    let logs: Vec<f64> = proxy.sigma_daily.iter().map(|s| s.ln()).collect();
    if logs.iter().all(|v| *v == logs[0]) {
        return Err(CalibrationError::Input("constant volatility proxy".into()));
    }
    let mut out = Vec::with_capacity(PERSISTENCE_LAGS.len() + LEVERAGE_LEADS.len());
    for &l in &PERSISTENCE_LAGS {
        let a = demeaned(logs[..n - l].iter().copied());
        let b = demeaned(logs[l..].iter().copied());
        out.push(correlation(&a, &b));
    }
    for &l in &LEVERAGE_LEADS {
        let m = n - l;
        let a = demeaned(returns[..m].iter().copied());
        let b = demeaned(logs[l..].iter().copied());
        out.push(correlation(&a, &b));
    }
    Ok(out)
}

/// How the model side of the `(α, ρ)` objective is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Cumulants from independent paths against data cumulants with their
    /// own delta-method errors ([`chi2_objective`]).
    Paths,
    /// Synthetic series of the data's length passed through the same
    /// estimators, with errors from the replica spread.
    Replicas,
    /// Replicas matched on the proxy moments only.
    #[default]
    Proxy,
}

impl std::str::FromStr for Matching {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paths" => Ok(Self::Paths),
            "replicas" => Ok(Self::Replicas),
            "proxy" => Ok(Self::Proxy),
            _ => Err(format!("unknown matching `{s}` (expected paths, replicas or proxy)")),
        }
    }
}

/// Skewness at horizons `1..=horizons`, then kurtosis at the same
/// horizons, then (optionally) [`proxy_moments`], for one log-price path.
pub fn series_moments(
    log_prices: &[f64],
    horizons: usize,
    window: usize,
    with_proxy: bool,
) -> Result<Vec<f64>, CalibrationError> {
    check_horizons(log_prices.len() - 1, horizons)?;
    let mut skew = Vec::with_capacity(horizons);
    let mut kurt = Vec::with_capacity(horizons);
    for i in 1..=horizons {
        let (sample, _, _) = horizon_sample(log_prices, i, 0.0);
        let m = SampleMoments::from_sample(&sample)
            .map_err(|_| CalibrationError::Degenerate { horizon: i })?;
        let [_, k2, k3, k4] = m.k_statistics();
        if !(k2 > 0.0) {
            return Err(CalibrationError::Degenerate { horizon: i });
        }
        skew.push(k3 / k2.powf(1.5));
        kurt.push(k4 / (k2 * k2));
    }
    let mut out = skew;
    out.extend(kurt);
    if with_proxy {
        let r: Vec<f64> = log_prices.windows(2).map(|w| w[1] - w[0]).collect();
        let p = proxy_from_returns(&r, window)?;
        out.extend(proxy_moments(&r, &p)?);
    }
    Ok(out)
}

/// Replica statistics at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaStats {
    /// Mean log-normal fit of the replica proxies.
    pub log_sigma0: f64,
    pub s: f64,
    /// Mean [`log_spread`] of the replica proxies.
    pub spread: f64,
    /// Mean of [`series_moments`] over the replicas.
    pub moments: Vec<f64>,
    /// Replica-to-replica standard deviation of each moment.
    pub moments_sd: Vec<f64>,
}

struct Replicas {
    n_days: usize,
    dt: f64,
    count: usize,
    seed: u64,
    substeps: usize,
    window: usize,
    fit_range: Option<(f64, f64)>,
    horizons: usize,
    with_cumulants: bool,
    with_proxy: bool,
}

impl Replicas {
    fn paths(&self, spec: &SyntheticSpec) -> Result<Vec<Vec<f64>>, CalibrationError> {
        synthetic_log_paths(spec, self.n_days, self.dt, self.count, self.seed, self.substeps)
    }

    fn moments_of(&self, logs: &[f64]) -> Result<Vec<f64>, CalibrationError> {
        if self.with_cumulants {
            series_moments(logs, self.horizons, self.window, self.with_proxy)
        } else if self.with_proxy {
            let r: Vec<f64> = logs.windows(2).map(|w| w[1] - w[0]).collect();
            proxy_moments(&r, &proxy_from_returns(&r, self.window)?)
        } else {
            Ok(Vec::new())
        }
    }

    fn moments_mean(&self, spec: &SyntheticSpec) -> Result<Vec<f64>, CalibrationError> {
        let rows = self
            .paths(spec)?
            .par_iter()
            .map(|x| self.moments_of(x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(column_means(&rows))
    }

    fn stats(&self, spec: &SyntheticSpec) -> Result<ReplicaStats, CalibrationError> {
        let paths = self.paths(spec)?;
        let per_path = paths
            .par_iter()
            .map(|x| {
                let r: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
                let proxy = proxy_from_returns(&r, self.window)?;
                let fit = fit_lognormal(&proxy, self.fit_range)?;
                Ok((fit.log_sigma0, fit.s, log_spread(&proxy), self.moments_of(x)?))
            })
            .collect::<Result<Vec<_>, CalibrationError>>()?;
        let n = per_path.len() as f64;
        let rows: Vec<Vec<f64>> = per_path.iter().map(|p| p.3.clone()).collect();
        let moments = column_means(&rows);
        let moments_sd = (0..moments.len())
            .map(|j| {
                let ss = neumaier_sum(rows.iter().map(|a| (a[j] - moments[j]).powi(2)));
                (ss / (n - 1.0).max(1.0)).sqrt()
            })
            .collect();
        Ok(ReplicaStats {
            log_sigma0: neumaier_sum(per_path.iter().map(|p| p.0)) / n,
            s: neumaier_sum(per_path.iter().map(|p| p.1)) / n,
            spread: neumaier_sum(per_path.iter().map(|p| p.2)) / n,
            moments,
            moments_sd,
        })
    }
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    (0..rows.first().map_or(0, |r| r.len()))
        .map(|j| neumaier_sum(rows.iter().map(|r| r[j])) / n)
        .collect()
}

/// `Σ (oⱼ − mⱼ)² / (σⱼ² (1 + 1/R))`: observed moments `o` against the mean
/// `m` of `R` replicas whose single-series spread is `σ`.
pub fn moment_chi2(
    observed: &[f64],
    simulated: &[f64],
    sd: &[f64],
    replicas: usize,
) -> Result<f64, CalibrationError> {
    if observed.len() != simulated.len() || observed.len() != sd.len() {
        return Err(CalibrationError::Input("moment vector lengths differ".into()));
    }
    let inflate = 1.0 + 1.0 / replicas.max(1) as f64;
    let mut terms = Vec::with_capacity(observed.len());
    for (j, ((o, m), s)) in observed.iter().zip(simulated).zip(sd).enumerate() {
        if !(*s > 0.0) {
            return Err(CalibrationError::Input(format!("zero replica spread of moment {j}")));
        }
        terms.push((o - m).powi(2) / (s * s * inflate));
    }
    Ok(neumaier_sum(terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub window: usize,
    pub fit_range: Option<(f64, f64)>,
    pub horizons: usize,
    pub objective: ObjectiveConfig,
    pub matching: Matching,
    /// Adds the [`proxy_moments`] to the objective.
    pub proxy_moments: bool,
    pub start: (f64, f64),
    /// Indirect-inference rounds correcting the proxy bias of `(m̄, β)`.
    pub bias_iterations: usize,
    /// Synthetic series per round and per replica evaluation.
    pub replicas: usize,
    pub optimizer: PrincipalAxisOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            window: 21,
            fit_range: None,
            horizons: 100,
            objective: ObjectiveConfig::default(),
            matching: Matching::Proxy,
            proxy_moments: true,
            start: (10.0, -0.3),
            bias_iterations: 3,
            replicas: 16,
            optimizer: optimizer_defaults(),
        }
    }
}

impl CalibrationOptions {
    /// Options for the classic procedure: independent-path
    /// cumulants only.
    pub fn paths_only() -> Self {
        Self {
            matching: Matching::Paths,
            proxy_moments: false,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.objective.seed = seed;
        self
    }
}

/// One indirect-inference round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRound {
    pub m_bar: f64,
    pub beta: f64,
    pub alpha: f64,
    pub rho: f64,
    pub objective: f64,
    pub simulated_log_sigma0: f64,
    pub simulated_s: f64,
    pub simulated_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDiagnostics {
    pub n_observations: usize,
    pub dt: f64,
    pub mu_se: f64,
    pub window: usize,
    /// Fit to the observed proxy, before bias correction.
    pub proxy_fit: LognormalFit,
    pub horizons: usize,
    /// First horizon estimated from overlapping windows, if any.
    pub overlapping_from: Option<usize>,
    pub matching: Matching,
    /// Observed [`proxy_moments`], when used.
    pub proxy_moments: Option<Vec<f64>>,
    pub objective: f64,
    /// Independent-path cumulant objective at the optimum.
    pub cumulant_chi2: f64,
    pub evaluations: usize,
    pub seed: u64,
    pub rounds: Vec<BiasRound>,
    pub trace: Vec<AlphaRhoStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub mu: f64,
    pub m_bar: f64,
    pub beta: f64,
    pub alpha: f64,
    pub rho: f64,
    pub y0: f64,
    pub gamma: f64,
    pub k: f64,
    pub diagnostics: CalibrationDiagnostics,
}

impl CalibrationResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration result serialises")
    }

    pub fn model(&self) -> Result<ModelParams, ParamError> {
        ModelParams::from_beta(self.m_bar, self.alpha, self.beta, self.rho)?.with(|r| r.mu = self.mu)
    }
}

/// Full pipeline: `μ`, then `(m̄, β)`, then `(α, ρ)`, with proxy-bias
/// correction rounds.
pub fn calibrate(
    series: &PriceSeries,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult, CalibrationError> {
    if series.len() < MIN_CALIBRATION_LEN {
        return Err(CalibrationError::Series(format!(
            "{} observations, calibration needs at least {MIN_CALIBRATION_LEN}",
            series.len()
        )));
    }
    if opts.matching == Matching::Proxy && !opts.proxy_moments {
        return Err(CalibrationError::Input(
            "proxy matching needs the proxy moments enabled".into(),
        ));
    }
    let dt = series.dt();
    let mu = estimate_mu(series)?;
    let proxy = extract_vol_proxy(series, opts.window)?;
    let observed = fit_lognormal(&proxy, opts.fit_range)?;
    let observed_spread = log_spread(&proxy);
    let data = data_cumulants(series, mu.mu, opts.horizons)?;
    let observed_proxy = if opts.proxy_moments {
        Some(proxy_moments(&series.log_returns(), &proxy)?)
    } else {
        None
    };
    let replicas = Replicas {
        n_days: series.len(),
        dt,
        count: opts.replicas.max(2),
        seed: opts.objective.seed ^ 0x0b1a_5c0e,
        substeps: opts.objective.substeps,
        window: opts.window,
        fit_range: opts.fit_range,
        horizons: opts.horizons,
        with_cumulants: opts.matching == Matching::Replicas,
        with_proxy: opts.proxy_moments,
    };
    let logs: Vec<f64> = series.closes().iter().map(|c| c.ln()).collect();
    let observed_moments = replicas.moments_of(&logs)?;

    let mut fixed = FixedParams {
        mu: mu.mu,
        m_bar: observed.m_bar(dt),
        beta: observed.beta(),
    };
    let spec_at = |fixed: &FixedParams, alpha: f64, rho: f64| SyntheticSpec {
        mu: 0.0,
        m_bar: fixed.m_bar,
        beta: fixed.beta,
        alpha,
        rho,
    };
    // Replica errors are frozen per round so the search cannot lower the
    // objective by inflating them.
    // Beyond this the Euler substeps stop resolving the mean reversion.
    let alpha_max = 0.5 * opts.objective.substeps as f64 / dt;
    let fit_ar = |fixed: &FixedParams, sd: &[f64], start: (f64, f64)| {
        optimize_alpha_rho(
            |a, r| {
                if a > alpha_max {
                    return Ok(f64::INFINITY);
                }
                let mut f = 0.0;
                if opts.matching == Matching::Paths {
                    f += chi2_objective(a, r, fixed, dt, &data, &opts.objective)?;
                }
                if !observed_moments.is_empty() {
                    let sim = replicas.moments_mean(&spec_at(fixed, a, r))?;
                    f += moment_chi2(&observed_moments, &sim, sd, replicas.count)?;
                }
                Ok(f)
            },
            start,
            &opts.optimizer,
        )
    };

    let mut stats = replicas.stats(&spec_at(&fixed, opts.start.0, opts.start.1))?;
    let mut ar = fit_ar(&fixed, &stats.moments_sd, opts.start)?;
    let mut evaluations = ar.evaluations;
    let mut trace = ar.trace.clone();
    let mut rounds = Vec::with_capacity(opts.bias_iterations);
    for _ in 0..opts.bias_iterations {
        stats = replicas.stats(&spec_at(&fixed, ar.alpha, ar.rho))?;
        rounds.push(BiasRound {
            m_bar: fixed.m_bar,
            beta: fixed.beta,
            alpha: ar.alpha,
            rho: ar.rho,
            objective: ar.objective,
            simulated_log_sigma0: stats.log_sigma0,
            simulated_s: stats.s,
            simulated_spread: stats.spread,
        });
        let s = fixed.beta.sqrt() * observed_spread / stats.spread;
        fixed.m_bar *= (observed.log_sigma0 - stats.log_sigma0).exp();
        fixed.beta = s * s;
        ar = fit_ar(&fixed, &stats.moments_sd, (ar.alpha, ar.rho))?;
        evaluations += ar.evaluations;
        trace.extend(ar.trace.iter().cloned());
    }
    let cumulant_chi2 = chi2_objective(ar.alpha, ar.rho, &fixed, dt, &data, &opts.objective)?;

    let result = CalibrationResult {
        mu: mu.mu,
        m_bar: fixed.m_bar,
        beta: fixed.beta,
        alpha: ar.alpha,
        rho: ar.rho,
        y0: 0.0,
        gamma: 0.0,
        k: (2.0 * ar.alpha * fixed.beta).sqrt(),
        diagnostics: CalibrationDiagnostics {
            n_observations: series.len(),
            dt,
            mu_se: mu.se,
            window: opts.window,
            proxy_fit: observed,
            horizons: opts.horizons,
            overlapping_from: data.iter().find(|d| d.overlapping).map(|d| d.horizon),
            matching: opts.matching,
            proxy_moments: observed_proxy,
            objective: ar.objective,
            cumulant_chi2,
            evaluations,
            seed: opts.objective.seed,
            rounds,
            trace,
        },
    };
    result.model()?;
    Ok(result)
}
