//! Large vol-of-vol regime (`λ = k/m ≫ 1`): closed-form cumulants of `X`,
//! the first-order exponent `C` of its characteristic function and the
//! Edgeworth density.
//!
//! Notation: `τ = k²(t - t0)`, `ζ = α(t - t0)`, `θ(ω₁) = 1/(2β) - iρω₁`.
//! The joint characteristic function of `(λX, λY)` is approximated by
//! `exp(-A ω₂² - B ω₂ - C)`, so the marginal characteristic function of `X`
//! at frequency `ω` is `exp(-C(ω/λ, y0, τ))`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::cmath::expm1;
use crate::model::{Horizon, ModelParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EdgeworthError {
    #[error("k2 must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("β must be positive for the characteristic-function exponent (k = {k})")]
    ZeroBeta { k: f64 },
}

/// Closed-form cumulants of `X(t)` to first order in `1/λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalCumulants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    /// `k3 / k2^{3/2}`; `None` when `k2 ≤ 0` (e.g. at `ζ = 0`).
    pub skew: Option<f64>,
    /// Excess kurtosis `k4 / k2²`; `None` when `k2 ≤ 0`.
    pub kurt: Option<f64>,
}

impl TheoreticalCumulants {
    /// Builds the normalised set from raw cumulants.
    pub fn from_cumulants(k1: f64, k2: f64, k3: f64, k4: f64) -> Self {
        let (skew, kurt) = if k2 > 0.0 {
            (Some(k3 / k2.powf(1.5)), Some(k4 / (k2 * k2)))
        } else {
            (None, None)
        };
        Self {
            k1,
            k2,
            k3,
            k4,
            skew,
            kurt,
        }
    }
}

/// Linear combination of `ζ, 1-e^{-ζ}, 1-e^{-2ζ}, ζe^{-ζ}, ζ²e^{-ζ}`.
///
/// The brackets of `k3` and `k4` cancel to `O(ζ²)` and `O(ζ³)` for small
/// `ζ`; below `SERIES_BELOW` they are summed as a power series instead.
#[derive(Debug, Clone, Copy, Default)]
struct Basis {
    z: f64,
    e1: f64,
    e2: f64,
    ze: f64,
    z2e: f64,
}

const SERIES_BELOW: f64 = 0.5;

impl Basis {
    fn eval(&self, zeta: f64) -> f64 {
        if zeta < SERIES_BELOW {
            return self.series(zeta);
        }
        let e = (-zeta).exp();
        self.z * zeta
            + self.e1 * -(-zeta).exp_m1()
            + self.e2 * -(-2.0 * zeta).exp_m1()
            + self.ze * zeta * e
            + self.z2e * zeta * zeta * e
    }

    fn series(&self, zeta: f64) -> f64 {
        // Coefficient of ζ^j for j ≥ 1, with f = 1/j!.
        let mut sum = self.z * zeta;
        let mut fact = 1.0; // j!
        let mut pow = 1.0; // ζ^j
        let mut prev_fact = 1.0; // (j-1)!
        let mut prev2_fact = 1.0; // (j-2)!
        for j in 1..40usize {
            fact *= j as f64;
            pow *= zeta;
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            let mut c = self.e1 * sign / fact + self.e2 * sign * 2f64.powi(j as i32) / fact;
            c += self.ze * sign / prev_fact;
            if j >= 2 {
                c -= self.z2e * sign / prev2_fact;
            }
            let term = c * pow;
            sum += term;
            if j > 6 && term.abs() <= 1e-18 * sum.abs().max(1e-300) {
                break;
            }
            if j >= 2 {
                prev2_fact = prev_fact;
            }
            prev_fact = fact;
        }
        sum
    }
}

/// Cumulants `k1..k4`, skewness and excess kurtosis of `X(t)` in closed form.
pub fn cumulants_closed_form(params: &ModelParams, h: &Horizon) -> TheoreticalCumulants {
    let zeta = h.zeta(params);
    let (m, a, k, rho) = (params.m(), params.alpha(), params.k(), params.rho());
    let (y0, g) = (params.y0(), params.gamma());
    if zeta == 0.0 {
        return TheoreticalCumulants::from_cumulants(0.0, 0.0, 0.0, 0.0);
    }
    let k1 = -m * m / (2.0 * a) * zeta;
    let b2 = Basis {
        z: 1.0 + 2.0 * g,
        e1: 2.0 * (y0 - g),
        ..Basis::default()
    };
    let b3 = Basis {
        z: 1.0 + g,
        e1: y0 - (1.0 + 2.0 * g),
        ze: -(y0 - g),
        ..Basis::default()
    };
    let r2 = 4.0 * rho * rho;
    let b4 = Basis {
        z: 2.0 + r2 + r2 * g,
        e1: -4.0 - 2.0 * r2 + r2 * y0 - 3.0 * r2 * g,
        e2: 1.0,
        ze: r2 - r2 * y0 + 2.0 * r2 * g,
        z2e: -0.5 * r2 * y0 + 0.5 * r2 * g,
    };
    let k2 = m * m / a * b2.eval(zeta);
    let k3 = 6.0 * rho * m.powi(3) * k / (a * a) * b3.eval(zeta);
    let k4 = 6.0 * m.powi(4) * k * k / a.powi(3) * b4.eval(zeta);
    TheoreticalCumulants::from_cumulants(k1, k2, k3, k4)
}

/// `A`, `B`, `C` of the large-`λ` ansatz at raw argument `ω₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOneAbc {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
}

fn theta(omega1: f64, params: &ModelParams) -> Complex64 {
    Complex64::new(1.0 / (2.0 * params.beta()), -params.rho() * omega1)
}

/// `1 - e^{-x}`.
fn one_minus_exp(x: Complex64) -> Complex64 {
    -expm1(-x)
}

/// `Σ_{j≥j0} c_j x^j`, `c_j = coef(j) / j!`, for small `|x|`.
fn small_series(x: Complex64, j0: usize, coef: impl Fn(usize) -> f64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut pow = Complex64::new(1.0, 0.0);
    let mut fact = 1.0;
    for j in 1..60usize {
        pow *= x;
        fact *= j as f64;
        if j < j0 {
            continue;
        }
        let term = pow * (coef(j) / fact);
        sum += term;
        if j > j0 + 4 && term.norm() <= 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

/// `x - (1 - e^{-x})`.
fn g_fn(x: Complex64) -> Complex64 {
    if x.norm() < SERIES_BELOW {
        small_series(x, 2, |j| if j % 2 == 0 { 1.0 } else { -1.0 })
    } else {
        x - one_minus_exp(x)
    }
}

/// `x - 2(1 - e^{-x}) + (1 - e^{-2x})/2`.
fn f_fn(x: Complex64) -> Complex64 {
    if x.norm() < SERIES_BELOW {
        small_series(x, 3, |j| {
            let s = if j % 2 == 1 { 1.0 } else { -1.0 };
            s * (2f64.powi(j as i32 - 1) - 2.0)
        })
    } else {
        x - 2.0 * one_minus_exp(x) + 0.5 * one_minus_exp(2.0 * x)
    }
}

/// Closed-form `A`, `B`, `C` at raw `ω₁` and `τ`.
fn abc_at_tau(omega1: f64, tau: f64, params: &ModelParams) -> LimitOneAbc {
    let i = Complex64::i();
    let lam = params.lambda();
    let beta = params.beta();
    let (rho, y0, g) = (params.rho(), params.y0(), params.gamma());
    let th = theta(omega1, params);
    let x = th * tau;
    let e1 = one_minus_exp(x);
    let w2 = omega1 * omega1;
    let drift = Complex64::new(rho * omega1, -g / (2.0 * beta));

    let a = lam * lam / (4.0 * th) * one_minus_exp(2.0 * x);
    let b = lam
        * (-i * y0 * (-x).exp() + i * w2 / (2.0 * th * th) * e1 * e1 + drift / th * e1);
    let c = i * omega1 / (2.0 * lam) * tau
        + w2 / 2.0 * tau
        + i * w2
            * (-i * y0 * e1 / th
                + i * w2 / (2.0 * th * th) * f_fn(x) / th
                + drift / th * g_fn(x) / th);
    LimitOneAbc { a, b, c }
}

/// `A`, `B`, `C` at raw `ω₁` for the horizon `h`.
pub fn abc(omega1: f64, params: &ModelParams, h: &Horizon) -> Result<LimitOneAbc, EdgeworthError> {
    if !(params.beta() > 0.0) {
        return Err(EdgeworthError::ZeroBeta { k: params.k() });
    }
    let tau = params.k() * params.k() * h.length();
    Ok(abc_at_tau(omega1, tau, params))
}

/// `C(ω/λ, y0, τ)`; the approximate characteristic function of `X` at
/// frequency `ω` is `exp(-C)`.
#[allow(non_snake_case)]
pub fn exponent_C(omega: f64, params: &ModelParams, h: &Horizon) -> Result<Complex64, EdgeworthError> {
    Ok(abc(omega / params.lambda(), params, h)?.c)
}

/// Maximum moduli of the ODE residuals of `A`, `B`, `C`, with derivatives in
/// `τ` from central differences of step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeResiduals {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Residual of the `τ = 0` conditions `A = 0`, `B = -iλy0`, `C = 0`.
    pub initial: f64,
}

impl OdeResiduals {
    pub fn max(&self) -> f64 {
        self.a.max(self.b).max(self.c).max(self.initial)
    }
}

/// Substitutes the closed forms into their defining ODEs
///
/// ```text
/// dA/dτ = -2θA + λ²/2
/// dB/dτ = -θB + (2iω₁²/λ) A - iαγλ/k² + λρω₁
/// dC/dτ = (iω₁²/λ) B + ω₁²/2 + iω₁/(2λ)
/// ```
///
/// and returns the residuals at `τ = k²(t - t0)`.
pub fn limit1_ode_check(
    omega1: f64,
    params: &ModelParams,
    h: &Horizon,
    step: f64,
) -> Result<OdeResiduals, EdgeworthError> {
    let at = abc(omega1, params, h)?;
    let tau = params.k() * params.k() * h.length();
    let (lo, hi) = if tau > step {
        (tau - step, tau + step)
    } else {
        (tau, tau + 2.0 * step)
    };
    let mid = if tau > step { at } else { abc_at_tau(omega1, tau + step, params) };
    let (l, r) = (abc_at_tau(omega1, lo, params), abc_at_tau(omega1, hi, params));
    let span = hi - lo;
    let d = |f: fn(&LimitOneAbc) -> Complex64| (f(&r) - f(&l)) / span;
    let (da, db, dc) = (d(|v| v.a), d(|v| v.b), d(|v| v.c));

    let i = Complex64::i();
    let lam = params.lambda();
    let th = theta(omega1, params);
    let w2 = omega1 * omega1;
    let k2 = params.k() * params.k();
    let res_a = da - (-2.0 * th * mid.a + lam * lam / 2.0);
    let res_b = db
        - (-th * mid.b + 2.0 * i * w2 / lam * mid.a
            - i * params.alpha() * params.gamma() * lam / k2
            + lam * params.rho() * omega1);
    let res_c = dc - (i * w2 / lam * mid.b + w2 / 2.0 + i * omega1 / (2.0 * lam));

    let zero = abc_at_tau(omega1, 0.0, params);
    let initial = zero
        .a
        .norm()
        .max((zero.b + i * lam * params.y0()).norm())
        .max(zero.c.norm());
    Ok(OdeResiduals {
        a: res_a.norm(),
        b: res_b.norm(),
        c: res_c.norm(),
        initial,
    })
}

/// Edgeworth density
/// `φ(z)/√k2 · [1 + ς/6 He₃(z) + κ/24 He₄(z)]`, `z = (x - k1)/√k2`,
/// with `He₃ = z³ - 3z`, `He₄ = z⁴ - 6z² + 3`. Values can be negative.
pub fn edgeworth_density(x: f64, cum: &TheoreticalCumulants) -> Result<f64, EdgeworthError> {
    if !(cum.k2 > 0.0) {
        return Err(EdgeworthError::NonPositiveVariance(cum.k2));
    }
    let sd = cum.k2.sqrt();
    let z = (x - cum.k1) / sd;
    Ok(gauss_bracket(z, cum) / sd)
}

fn gauss_bracket(z: f64, cum: &TheoreticalCumulants) -> f64 {
    let skew = cum.skew.unwrap_or(0.0);
    let kurt = cum.kurt.unwrap_or(0.0);
    let z2 = z * z;
    let he3 = z * (z2 - 3.0);
    let he4 = z2 * (z2 - 6.0) + 3.0;
    (-0.5 * z2).exp() / (2.0 * PI).sqrt() * (1.0 + skew / 6.0 * he3 + kurt / 24.0 * he4)
}

/// Tail-negativity diagnostic of the Edgeworth density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Negativity {
    /// `min p / max p` over the scanned standardised range.
    pub min_ratio: f64,
    /// Standardised abscissa of the minimum.
    pub z_at_min: f64,
    /// Whether `min_ratio < -NEGATIVITY_TOLERANCE`.
    pub negative: bool,
}

/// Relative depth below zero that counts as a negative density.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-3;
/// Half-width of the scanned range in standard deviations.
pub const NEGATIVITY_SCAN_SD: f64 = 12.0;

/// Scans `z ∈ [-12, 12]` for negative density relative to the peak.
///
/// The cubic and quartic corrections always turn the bracket negative
/// somewhere for nonzero skewness, usually where the Gaussian factor makes
/// the dip invisible; the relative tolerance ignores those.
pub fn negativity(cum: &TheoreticalCumulants) -> Result<Negativity, EdgeworthError> {
    if !(cum.k2 > 0.0) {
        return Err(EdgeworthError::NonPositiveVariance(cum.k2));
    }
    let n = 4801;
    let (mut max, mut min, mut zmin) = (f64::NEG_INFINITY, f64::INFINITY, 0.0);
    for j in 0..n {
        let z = -NEGATIVITY_SCAN_SD + 2.0 * NEGATIVITY_SCAN_SD * j as f64 / (n - 1) as f64;
        let p = gauss_bracket(z, cum);
        max = max.max(p);
        if p < min {
            min = p;
            zmin = z;
        }
    }
    let min_ratio = min / max;
    Ok(Negativity {
        min_ratio,
        z_at_min: zmin,
        negative: min_ratio < -NEGATIVITY_TOLERANCE,
    })
}

/// Cumulants `k1..k4` of the Edgeworth density recovered by composite
/// Simpson quadrature over `k1 ± 12√k2` with `intervals` (even) panels.
pub fn quadrature_cumulants(
    cum: &TheoreticalCumulants,
    intervals: usize,
) -> Result<[f64; 5], EdgeworthError> {
    if !(cum.k2 > 0.0) {
        return Err(EdgeworthError::NonPositiveVariance(cum.k2));
    }
    let n = intervals + intervals % 2;
    let sd = cum.k2.sqrt();
    let (lo, hi) = (cum.k1 - 12.0 * sd, cum.k1 + 12.0 * sd);
    let hstep = (hi - lo) / n as f64;
    let mut raw = [0.0f64; 5];
    for j in 0..=n {
        let x = lo + j as f64 * hstep;
        let w = if j == 0 || j == n {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let p = edgeworth_density(x, cum)? * w;
        let d = x - cum.k1;
        raw[0] += p;
        raw[1] += p * x;
        raw[2] += p * d * d;
        raw[3] += p * d * d * d;
        raw[4] += p * d * d * d * d;
    }
    for r in &mut raw {
        *r *= hstep / 3.0;
    }
    let mass = raw[0];
    let mean = raw[1];
    // Central moments about k1, shifted to the quadrature mean.
    let s = mean - cum.k1;
    let c2 = raw[2] - s * s * mass;
    let c3 = raw[3] - 3.0 * s * raw[2] + 2.0 * s.powi(3) * mass;
    let c4 = raw[4] - 4.0 * s * raw[3] + 6.0 * s * s * raw[2] - 3.0 * s.powi(4) * mass;
    Ok([mass, mean, c2, c3, c4 - 3.0 * c2 * c2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, RawParams};

    fn table1(beta: f64) -> ModelParams {
        ModelParams::from_beta(0.1, 10.0, beta, -0.9).unwrap()
    }

    fn general() -> ModelParams {
        validate(RawParams {
            s0: 1.0,
            mu: 0.0,
            m: 0.13,
            y0: 0.35,
            alpha: 7.0,
            gamma: 0.2,
            k: 0.9,
            rho: -0.6,
        })
        .unwrap()
    }

    #[test]
    fn table_one_point() {
        let c = cumulants_closed_form(&table1(0.005), &Horizon::elapsed(1.0).unwrap());
        assert!((c.k1 + 0.005).abs() < 1e-15);
        assert!((c.k2 - 0.01).abs() < 1e-9);
        assert!((c.skew.unwrap() + 0.154).abs() < 0.0015);
        assert!((c.kurt.unwrap() - 0.026).abs() < 0.0005);
    }

    #[test]
    fn zero_correlation_has_no_third_cumulant() {
        let p = ModelParams::from_beta(0.1, 10.0, 0.02, 0.0).unwrap();
        for t in [0.01, 0.3, 2.0] {
            assert_eq!(cumulants_closed_form(&p, &Horizon::elapsed(t).unwrap()).k3, 0.0);
        }
    }

    #[test]
    fn zero_horizon_flags_shape_cumulants() {
        let c = cumulants_closed_form(&table1(0.01), &Horizon::elapsed(0.0).unwrap());
        assert_eq!((c.k1, c.k2, c.skew, c.kurt), (0.0, 0.0, None, None));
    }

    #[test]
    fn series_and_direct_brackets_agree_at_switch() {
        let p = general();
        let a = cumulants_closed_form(&p, &Horizon::elapsed((SERIES_BELOW - 1e-12) / 7.0).unwrap());
        let b = cumulants_closed_form(&p, &Horizon::elapsed((SERIES_BELOW + 1e-12) / 7.0).unwrap());
        for (x, y) in [(a.k2, b.k2), (a.k3, b.k3), (a.k4, b.k4)] {
            assert!((x - y).abs() <= 1e-10 * y.abs(), "{x} vs {y}");
        }
    }

    #[test]
    fn short_time_scaling() {
        let p = table1(0.05);
        let c = cumulants_closed_form(&p, &Horizon::elapsed(1e-7).unwrap());
        assert!(c.skew.unwrap().is_finite() && c.kurt.unwrap().is_finite());
        let z = 1e-6;
        // k3 ≈ 6ρ m³k/α² · ζ²/2, k4 ≈ 6 m⁴k²/α³ · (4ρ²/6 + 4/3 ... ) ζ³ leading orders.
        assert!((c.k3 / (6.0 * -0.9 * 1e-3 * 1.0 / 100.0 * z * z / 2.0) - 1.0).abs() < 1e-5);
        assert!(c.k4 > 0.0);
    }

    #[test]
    fn exponent_vanishes_at_zero_and_is_hermitian() {
        let p = general();
        let h = Horizon::elapsed(0.4).unwrap();
        assert_eq!(exponent_C(0.0, &p, &h).unwrap(), Complex64::new(0.0, 0.0));
        for w in [0.5, 3.0, 17.0] {
            let a = exponent_C(w, &p, &h).unwrap();
            let b = exponent_C(-w, &p, &h).unwrap();
            assert!((a - b.conj()).norm() < 1e-12 * a.norm().max(1.0));
        }
    }

    #[test]
    fn derivatives_of_exponent_give_cumulants() {
        for p in [general(), table1(0.02)] {
            for t in [0.01, 0.37, 1.0] {
                let h = Horizon::elapsed(t).unwrap();
                let cum = cumulants_closed_form(&p, &h);
                let sd = cum.k2.sqrt();
                let step = 0.05 / sd;
                let c = |j: i32| exponent_C(j as f64 * step, &p, &h).unwrap();
                let v: Vec<Complex64> = (-3..=3).map(c).collect();
                let d1 = (v[1] - 8.0 * v[2] + 8.0 * v[4] - v[5]) / (12.0 * step);
                let d2 = (-v[1] + 16.0 * v[2] - 30.0 * v[3] + 16.0 * v[4] - v[5])
                    / (12.0 * step * step);
                let d3 = (v[0] - 8.0 * v[1] + 13.0 * v[2] - 13.0 * v[4] + 8.0 * v[5] - v[6])
                    / (8.0 * step.powi(3));
                let d4 = (-v[0] + 12.0 * v[1] - 39.0 * v[2] + 56.0 * v[3] - 39.0 * v[4]
                    + 12.0 * v[5]
                    - v[6])
                    / (6.0 * step.powi(4));
                let mi = -Complex64::i();
                let k = [
                    -(mi * d1).re,
                    -(mi * mi * d2).re,
                    -(mi.powi(3) * d3).re,
                    -(mi.powi(4) * d4).re,
                ];
                let want = [cum.k1, cum.k2, cum.k3, cum.k4];
                let scale = [sd, cum.k2, sd.powi(3), cum.k2 * cum.k2];
                for j in 0..4 {
                    assert!(
                        (k[j] - want[j]).abs() < 1e-6 * scale[j],
                        "t={t} k{}: {} vs {}",
                        j + 1,
                        k[j],
                        want[j]
                    );
                }
            }
        }
    }

    #[test]
    fn closed_forms_solve_their_odes() {
        let p = general();
        for w1 in [0.0, 0.3, 2.0, 9.0] {
            for t in [0.0, 0.05, 0.5, 2.0] {
                let r = limit1_ode_check(w1, &p, &Horizon::elapsed(t).unwrap(), 1e-6).unwrap();
                assert!(r.max() < 1e-5, "ω₁={w1} t={t}: {r:?}");
            }
        }
        assert_eq!(theta(0.0, &p).re, 1.0 / (2.0 * p.beta()));
    }

    #[test]
    fn gaussian_limit_of_density() {
        let c = TheoreticalCumulants::from_cumulants(0.1, 0.04, 0.0, 0.0);
        let x = 0.3;
        let want = (-(x - 0.1f64).powi(2) / 0.08).exp() / (2.0 * PI * 0.04).sqrt();
        assert!((edgeworth_density(x, &c).unwrap() - want).abs() < 1e-15);
        assert!(edgeworth_density(0.0, &TheoreticalCumulants::from_cumulants(0.0, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn quadrature_recovers_cumulants() {
        let c = cumulants_closed_form(&table1(0.1), &Horizon::elapsed(1.0).unwrap());
        let q = quadrature_cumulants(&c, 20_000).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-10);
        assert!((q[1] - c.k1).abs() < 1e-10);
        assert!((q[2] - c.k2).abs() < 1e-10);
        assert!((q[3] - c.k3).abs() < 1e-10);
        assert!((q[4] - c.k4).abs() < 1e-10);
    }

    #[test]
    fn negativity_flag() {
        let h = Horizon::elapsed(1.0).unwrap();
        let big = negativity(&cumulants_closed_form(&table1(0.5), &h)).unwrap();
        let small = negativity(&cumulants_closed_form(&table1(0.005), &h)).unwrap();
        assert!(big.negative, "{big:?}");
        assert!(!small.negative, "{small:?}");
    }
}
