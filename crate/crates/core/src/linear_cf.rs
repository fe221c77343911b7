//! Exact characteristic function of the linearised model
//!
//! ```text
//! dX = -1/2 m̄² (2Z - 1) dt + m̄ Z dW₁
//! dZ = α(1 - Z) dt + k dW_Z,    d⟨W₁, W_Z⟩ = ρ dt
//! ```
//!
//! `f(φ; x0, z0) = exp(A(τ,φ) + B(τ,φ) z0 + C(τ,φ) z0² + iφx0)`, `τ = t - t0`,
//! where `C` solves a Riccati equation and `A`, `B` follow by quadrature.
//!
//! Auxiliary variables:
//! `b = 2(α - ikm̄ρφ)`, `d = 2√(k²m̄²φ² + (α - ikm̄ρφ)²)`, `g = (b-d)/(b+d)`,
//! `h = im̄²φ`, `n = α(b-d)/(2k²)`.
//!
//! With the principal root, `Re d > 0` and `|g| < 1` for every real `φ`, so
//! `1 - g e^{-dτ}` and `1 ± √g e^{-dτ/2}` stay in the right half-plane and
//! their logarithms never cross the cut. The `√g` pairs are combined into
//! an `atanh` difference that is even in `√g`, so the root's sign is
//! irrelevant. Small `|g|` and small `dτ` use series forms.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::cmath::{continuous_ln, expm1};
use crate::model::{Horizon, ModelParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearCfError {
    #[error("vol-of-vol k must be positive for the linear characteristic function")]
    ZeroVolOfVol,
    #[error("frequency must be finite, got {0}")]
    NonFinite(f64),
    #[error("scan needs at least 2 points, got {0}")]
    TooFewPoints(usize),
}

/// Auxiliary variables at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxVars {
    pub b: Complex64,
    pub d: Complex64,
    pub g: Complex64,
    pub h: Complex64,
    pub n: Complex64,
    /// `b - d`, computed without cancellation.
    pub b_minus_d: Complex64,
}

impl AuxVars {
    pub fn new(phi: f64, params: &ModelParams) -> Self {
        let (mb, a, k, rho) = (params.m_bar(), params.alpha(), params.k(), params.rho());
        let w = Complex64::new(a, -k * mb * rho * phi);
        let q = k * k * mb * mb * phi * phi;
        let b = 2.0 * w;
        let d = 2.0 * (q + w * w).sqrt();
        // b² - d² = -4k²m̄²φ²
        let b_minus_d = if phi == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            -4.0 * q / (b + d)
        };
        let g = b_minus_d / (b + d);
        let h = Complex64::new(0.0, mb * mb * phi);
        let n = a / (2.0 * k * k) * b_minus_d;
        Self {
            b,
            d,
            g,
            h,
            n,
            b_minus_d,
        }
    }
}

/// Characteristic-function value with its exponent components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfValue {
    pub phi: f64,
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    /// `A + B z0 + C z0² + iφx0`.
    pub exponent: Complex64,
}

impl CfValue {
    pub fn f(&self) -> Complex64 {
        self.exponent.exp()
    }
}

/// How the logarithms in `A` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogRoute {
    /// Stable arrangement described in the module docs.
    Continuous,
    /// Original Heston arrangement with `1/g` and `e^{+dτ}` and principal
    /// logarithms; discontinuous at long horizons.
    NaivePrincipal,
}

/// Characteristic function of `X(t)` for fixed parameters, horizon and
/// starting point.
#[derive(Debug, Clone, Copy)]
pub struct LinearCf {
    params: ModelParams,
    tau: f64,
    x0: f64,
    z0: f64,
}

impl LinearCf {
    /// `z0` defaults to `y0 - γ + 1` when `None`.
    pub fn new(
        params: &ModelParams,
        h: &Horizon,
        x0: f64,
        z0: Option<f64>,
    ) -> Result<Self, LinearCfError> {
        if !(params.k() > 0.0) {
            return Err(LinearCfError::ZeroVolOfVol);
        }
        Ok(Self {
            params: *params,
            tau: h.length(),
            x0,
            z0: z0.unwrap_or_else(|| params.z0()),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn eval(&self, phi: f64) -> CfValue {
        self.eval_route(phi, LogRoute::Continuous)
    }

    pub fn eval_route(&self, phi: f64, route: LogRoute) -> CfValue {
        let (a, b, c) = abc(phi, self.tau, &self.params, route);
        let exponent = a + b * self.z0 + c * self.z0 * self.z0 + Complex64::new(0.0, phi * self.x0);
        CfValue {
            phi,
            a,
            b,
            c,
            exponent,
        }
    }

    /// `f(φ)`.
    pub fn f(&self, phi: f64) -> Complex64 {
        self.eval(phi).f()
    }
}

/// `f(φ; x0, z0)` of the linearised model; `z0 = None` uses `y0 - γ + 1`.
pub fn cf_linear(
    phi: f64,
    params: &ModelParams,
    h: &Horizon,
    x0: f64,
    z0: Option<f64>,
) -> Result<CfValue, LinearCfError> {
    if !phi.is_finite() {
        return Err(LinearCfError::NonFinite(phi));
    }
    Ok(LinearCf::new(params, h, x0, z0)?.eval(phi))
}

const SMALL_G: f64 = 0.1;
const SMALL_ARG: f64 = 0.1;
const MAX_TERMS: usize = 60;

/// `1 - e^{-x}`.
fn one_minus_exp(x: Complex64) -> Complex64 {
    -expm1(-x)
}

fn ln_1p(w: Complex64) -> Complex64 {
    if w.norm() < 1e-3 {
        w * (1.0 - w * (0.5 - w * (1.0 / 3.0 - w * (0.25 - w / 5.0))))
    } else {
        (1.0 + w).ln()
    }
}

fn atanh(w: Complex64) -> Complex64 {
    if w.norm() < SMALL_ARG {
        let w2 = w * w;
        let mut p = w;
        let mut sum = w;
        for j in 1..MAX_TERMS {
            p *= w2;
            let term = p / (2 * j + 1) as f64;
            sum += term;
            if term.norm() <= 1e-18 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        0.5 * (ln_1p(w) - ln_1p(-w))
    }
}

/// Building blocks of `∫B` and `∫B²` (see [`abc`]).
struct Pieces {
    /// `[ln(1 - g e) - ln(1 - g)] / g`
    g1: Complex64,
    /// `[atanh(√g) - atanh(√g u)] / √g`
    s: Complex64,
    /// `(Q + G1) / g`
    m: Complex64,
    /// `(W + S) / g`
    v: Complex64,
    /// `ln(1 - g e) - ln(1 - g)`
    lg: Complex64,
}

/// Series in `g` of [`Pieces`], for small `|g|`.
fn pieces_series(g: Complex64, dtau: Complex64) -> Pieces {
    let u = (-0.5 * dtau).exp();
    let u2 = u * u;
    let um1 = expm1(-0.5 * dtau);
    let zero = Complex64::new(0.0, 0.0);
    let (mut g1, mut s, mut m, mut v) = (zero, one_minus_exp(0.5 * dtau), zero, zero);
    let mut gp = Complex64::new(1.0, 0.0); // g^{j-1}
    let mut sigma_prev = Complex64::new(1.0, 0.0); // σ_{j-1}
    let mut u2j = Complex64::new(1.0, 0.0); // u^{2j}
    for j in 1..MAX_TERMS {
        let jf = j as f64;
        u2j *= u2;
        let sigma = sigma_prev + u2j;
        let omega = sigma + u * sigma_prev;
        let odd = one_minus_exp((jf + 0.5) * dtau) / (2.0 * jf + 1.0);
        let tg1 = gp * one_minus_exp(jf * dtau) / jf;
        let tm = -gp * one_minus_exp((jf + 1.0) * dtau) * (jf / (jf + 1.0));
        let tv = gp * (um1 * omega + odd);
        let ts = gp * g * odd;
        g1 += tg1;
        m += tm;
        v += tv;
        s += ts;
        sigma_prev = sigma;
        let scale = tg1.norm().max(tm.norm()).max(tv.norm());
        if j > 3 && scale <= 1e-18 * (g1.norm() + m.norm() + v.norm()) {
            break;
        }
        gp *= g;
    }
    Pieces {
        g1,
        s,
        m,
        v,
        lg: g * g1,
    }
}

fn pieces_direct(g: Complex64, dtau: Complex64, route: LogRoute) -> Pieces {
    let e = (-dtau).exp();
    let u = (-0.5 * dtau).exp();
    let em1 = expm1(-dtau);
    let um1 = expm1(-0.5 * dtau);
    let one = Complex64::new(1.0, 0.0);
    let denom = (one - g) * (one - g * e);
    let q = em1 / denom;
    let w = um1 * (one + g * u) / denom;

    let lg = match route {
        LogRoute::Continuous => {
            // (1 - g e)/(1 - g) = 1 + g(1 - e)/(1 - g). Far from τ = 0 the
            // log of 1 - g e is taken on the sheet continued from its value
            // ln(1 - g) at τ = 0.
            let ratio_m1 = -g * em1 / (one - g);
            if ratio_m1.norm() < 1e-3 {
                ln_1p(ratio_m1)
            } else {
                let l0 = (one - g).ln();
                continuous_ln(one - g * e, l0.im) - l0
            }
        }
        LogRoute::NaivePrincipal => {
            let gt = one / g;
            ((one - gt * dtau.exp()) / (one - gt)).ln() - dtau
        }
    };
    let sg = g.sqrt();
    // atanh(√g) - atanh(√g u) = atanh(√g (1-u) / (1 - g u)) near τ = 0.
    let arg = sg * (-um1) / (one - g * u);
    let s = if arg.norm() < SMALL_ARG {
        atanh(arg) / sg
    } else {
        (atanh(sg) - atanh(sg * u)) / sg
    };
    let g1 = lg / g;
    Pieces {
        g1,
        s,
        m: (q + g1) / g,
        v: (w + s) / g,
        lg,
    }
}

/// `A`, `B`, `C` at `(τ, φ)`.
///
/// `A = hτ/2 + α∫B + (k²/2)∫B² + k²∫C`, with, writing `e = e^{-dτ}`,
/// `u = e^{-dτ/2}`, `P = (g+1)h - 2n`, `a0 = n - h`, `a2 = n - gh`,
/// `Q = (e-1)/((1-g)(1-ge))`, `W = (u-1)(1+gu)/((1-g)(1-ge))`:
///
/// ```text
/// ∫B  = 2[a0 τ/d + (n(g+1) - 2gh) G1/d² + 2P S/d²]
/// ∫B² = 4a0²(dτ + Lg - gQ)/d³ - 4a2² M/d³ - 4(P² + 2a0 a2) Q/d³
///       - 8P [a0 (W - S) + a2 V]/d³
/// k²∫C = (b - d)/4 · (τ + (g - 1) G1/d)
/// ```
fn abc(phi: f64, tau: f64, params: &ModelParams, route: LogRoute) -> (Complex64, Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    if phi == 0.0 || tau == 0.0 {
        return (zero, zero, zero);
    }
    let aux = AuxVars::new(phi, params);
    let AuxVars { d, g, h, n, .. } = aux;
    let (alpha, k) = (params.alpha(), params.k());
    let one = Complex64::new(1.0, 0.0);
    let dtau = d * tau;
    let e = (-dtau).exp();
    let u = (-0.5 * dtau).exp();
    let em1 = expm1(-dtau);
    let um1 = expm1(-0.5 * dtau);
    let one_ge = one - g * e;

    let c = aux.b_minus_d / (4.0 * k * k) * (-em1) / one_ge;
    // e^{-dτ/2}((g+1)h - 2n) + n + e^{-dτ}(n - gh) - h, regrouped to avoid
    // cancellation at small τ.
    let p = (g + 1.0) * h - 2.0 * n;
    let a0 = n - h;
    let a2 = n - g * h;
    let num_b = um1 * p + em1 * a2;
    let b = 2.0 * num_b / (d * one_ge);

    let pc = if g.norm() < SMALL_G && route == LogRoute::Continuous {
        pieces_series(g, dtau)
    } else {
        pieces_direct(g, dtau, route)
    };
    let q = em1 / ((one - g) * one_ge);
    let w = um1 * (one + g * u) / ((one - g) * one_ge);
    let d2 = d * d;
    let d3 = d2 * d;
    let int_b = 2.0 * (a0 * tau / d + (n * (g + 1.0) - 2.0 * g * h) * pc.g1 / d2 + 2.0 * p * pc.s / d2);
    let int_b2 = 4.0 * a0 * a0 * (dtau + pc.lg - g * q) / d3 - 4.0 * a2 * a2 * pc.m / d3
        - 4.0 * (p * p + 2.0 * a0 * a2) * q / d3
        - 8.0 * p * (a0 * (w - pc.s) + a2 * pc.v) / d3;
    let k2_int_c = aux.b_minus_d / 4.0 * (tau + (g - 1.0) * pc.g1 / d);
    let a = h * tau / 2.0 + alpha * int_b + 0.5 * k * k * int_b2 + k2_int_c;
    (a, b, c)
}

/// Maximum moduli of the residuals of
///
/// ```text
/// dC/dτ = -[m̄²φ²/2 + 2αC - 2k²C² - 2iρkm̄φ C]
/// dB/dτ = -[im̄²φ - 2αC + αB - 2k²BC - iρkm̄φ B]
/// dA/dτ = -[-im̄²φ/2 - αB - k²(B² + 2C)/2]
/// ```
///
/// with time derivatives from central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiccatiResiduals {
    pub c: f64,
    pub b: f64,
    pub a: f64,
}

impl RiccatiResiduals {
    pub fn max(&self) -> f64 {
        self.a.max(self.b).max(self.c)
    }
}

/// Right-hand sides `(dA/dτ, dB/dτ, dC/dτ)` of the exponent ODEs.
pub fn riccati_rhs(
    phi: f64,
    params: &ModelParams,
    a_b_c: (Complex64, Complex64, Complex64),
) -> (Complex64, Complex64, Complex64) {
    let (_, b, c) = a_b_c;
    let i = Complex64::i();
    let (mb, al, k, rho) = (params.m_bar(), params.alpha(), params.k(), params.rho());
    let k2 = k * k;
    let cross = i * rho * k * mb * phi;
    let dc = -(mb * mb * phi * phi / 2.0 + 2.0 * al * c - 2.0 * k2 * c * c - 2.0 * cross * c);
    let db = -(i * mb * mb * phi - 2.0 * al * c + al * b - 2.0 * k2 * b * c - cross * b);
    let da = -(-i * mb * mb * phi / 2.0 - al * b - k2 / 2.0 * (b * b + 2.0 * c));
    (da, db, dc)
}

/// Substitutes finite-difference time derivatives of the closed forms into
/// the exponent ODEs. `rel_step` is relative to `τ` (floored at `τ = 1e-3`).
pub fn riccati_residual_check(
    phi: f64,
    params: &ModelParams,
    h: &Horizon,
    rel_step: f64,
) -> Result<RiccatiResiduals, LinearCfError> {
    if !(params.k() > 0.0) {
        return Err(LinearCfError::ZeroVolOfVol);
    }
    let tau = h.length();
    let step = rel_step * tau.max(1e-3);
    let (lo, hi) = if tau > step { (tau - step, tau + step) } else { (tau, tau + 2.0 * step) };
    let mid_t = 0.5 * (lo + hi);
    let route = LogRoute::Continuous;
    let l = abc(phi, lo, params, route);
    let r = abc(phi, hi, params, route);
    let mid = abc(phi, mid_t, params, route);
    let span = hi - lo;
    let (da, db, dc) = riccati_rhs(phi, params, mid);
    Ok(RiccatiResiduals {
        a: ((r.0 - l.0) / span - da).norm(),
        b: ((r.1 - l.1) / span - db).norm(),
        c: ((r.2 - l.2) / span - dc).norm(),
    })
}

/// Result of a continuity scan of `f` along `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub route: LogRoute,
    pub phi_max: f64,
    pub n_pts: usize,
    /// Frequencies `φ_j` at the left end of each flagged interval.
    pub flagged: Vec<f64>,
    /// Largest anomaly score over the grid.
    pub max_score: f64,
}

impl SmoothnessReport {
    pub fn is_smooth(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Relative and absolute slack of the smoothness test.
pub const SMOOTHNESS_REL: f64 = 1.0;
pub const SMOOTHNESS_ABS: f64 = 1e-3;

/// Samples `f` on `φ_j = j φ_max/(n_pts - 1)` and flags intervals where the
/// increment of `ln|f|` or of the (wrapped) phase of `f` departs from the
/// average of its neighbours by more than
/// `SMOOTHNESS_REL·mean(|neighbours|) + SMOOTHNESS_ABS`.
/// A jump of `2π` in the phase is invisible in `f` and is not flagged.
pub fn branch_smoothness_scan(
    cf: &LinearCf,
    phi_max: f64,
    n_pts: usize,
    route: LogRoute,
) -> Result<SmoothnessReport, LinearCfError> {
    if n_pts < 2 {
        return Err(LinearCfError::TooFewPoints(n_pts));
    }
    if !phi_max.is_finite() {
        return Err(LinearCfError::NonFinite(phi_max));
    }
    let dphi = phi_max / (n_pts - 1) as f64;
    let ex: Vec<Complex64> = (0..n_pts)
        .into_par_iter()
        .map(|j| cf.eval_route(j as f64 * dphi, route).exponent)
        .collect();
    let wrap = |x: f64| x - (2.0 * std::f64::consts::PI) * (x / (2.0 * std::f64::consts::PI)).round();
    let inc: Vec<(f64, f64)> = ex
        .windows(2)
        .map(|w| (w[1].re - w[0].re, wrap(w[1].im - w[0].im)))
        .collect();
    let mut flagged = Vec::new();
    let mut max_score = 0.0f64;
    for j in 1..inc.len().saturating_sub(1) {
        let mut worst = 0.0f64;
        for part in [|p: (f64, f64)| p.0, |p: (f64, f64)| p.1] {
            let (l, c, r) = (part(inc[j - 1]), part(inc[j]), part(inc[j + 1]));
            let tol = SMOOTHNESS_REL * 0.5 * (l.abs() + r.abs()) + SMOOTHNESS_ABS;
            worst = worst.max((c - 0.5 * (l + r)).abs() / tol);
        }
        if !worst.is_finite() || worst > 1.0 {
            flagged.push(j as f64 * dphi);
        }
        if worst.is_finite() {
            max_score = max_score.max(worst);
        } else {
            max_score = f64::INFINITY;
        }
    }
    Ok(SmoothnessReport {
        route,
        phi_max,
        n_pts,
        flagged,
        max_score,
    })
}

/// Argument of the complementary error function in
/// `P(Z(t) < 0) ≈ ½ erfc(x)`,
/// `x = (1 + γ + (y0 - γ)e^{-αΔt}) / √(β(1 - e^{-2αΔt}))`.
fn negative_vol_arg(params: &ModelParams, h: &Horizon) -> Option<f64> {
    let dt = h.length();
    let var = -params.beta() * (-2.0 * params.alpha() * dt).exp_m1();
    if !(var > 0.0) {
        return None;
    }
    let g = params.gamma();
    let num = 1.0 + g + (params.y0() - g) * (-params.alpha() * dt).exp();
    Some(num / var.sqrt())
}

/// Probability that the linearised volatility `Z` is negative at `t`.
/// Zero at `Δt = 0` or `β = 0`.
pub fn negative_vol_probability(params: &ModelParams, h: &Horizon) -> f64 {
    match negative_vol_arg(params, h) {
        Some(x) => 0.5 * erfc(x),
        None => 0.0,
    }
}

/// `log₁₀` of [`negative_vol_probability`], accurate where the probability
/// underflows; `-∞` when it is exactly zero.
pub fn log10_negative_vol_probability(params: &ModelParams, h: &Horizon) -> f64 {
    match negative_vol_arg(params, h) {
        Some(x) => ln_half_erfc(x) / std::f64::consts::LN_10,
        None => f64::NEG_INFINITY,
    }
}

/// `ln(½ erfc(x))`, asymptotic expansion for large `x`.
fn ln_half_erfc(x: f64) -> f64 {
    if x < 20.0 {
        return (0.5 * erfc(x)).ln();
    }
    let x2 = x * x;
    let inv = 1.0 / (2.0 * x2);
    // erfc(x) ~ e^{-x²}/(x√π) · Σ (-1)^j (2j-1)!! / (2x²)^j
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..8 {
        term *= -((2 * j - 1) as f64) * inv;
        sum += term;
    }
    -x2 - (x * std::f64::consts::PI.sqrt()).ln() + sum.ln() + 0.5f64.ln()
}
