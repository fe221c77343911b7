//! Model parameters and the exact Gaussian moments of the hidden OU process.
//!
//! The dynamics are
//!
//! ```text
//! dX = -1/2 m² e^{2Y} dt + m e^{Y} dW₁,                 X(t0) = 0
//! dY = α(γ - Y) dt + kρ dW₁ + k√(1-ρ²) dW₂,             Y(t0) = y0
//! ```
//!
//! with `X` the centered log-return `ln S(t) - ln S(t0) - μ(t - t0)`.
//! Times are in years throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid parameter `{field}` = {value}: {reason}")]
    Invalid {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid horizon: t = {t} precedes t0 = {t0}")]
    Horizon { t0: f64, t: f64 },
}

/// Unvalidated flat parameter record, as stored in parameter files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    #[serde(default = "default_s0")]
    pub s0: f64,
    #[serde(default)]
    pub mu: f64,
    pub m: f64,
    #[serde(default)]
    pub y0: f64,
    pub alpha: f64,
    #[serde(default)]
    pub gamma: f64,
    pub k: f64,
    pub rho: f64,
}

fn default_s0() -> f64 {
    1.0
}

/// Validated model constants.
///
/// Construct through [`validate`] (or [`ModelParams::from_beta`]); fields are
/// read-only afterwards so derived quantities always stay consistent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    raw: RawParams,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = ParamError;

    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        validate(raw)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        p.raw
    }
}

/// Checks a raw parameter record and returns the validated parameters.
pub fn validate(raw: RawParams) -> Result<ModelParams, ParamError> {
    let check = |field: &'static str, value: f64, ok: bool, reason: &'static str| {
        if !value.is_finite() {
            Err(ParamError::Invalid {
                field,
                value,
                reason: "must be finite",
            })
        } else if !ok {
            Err(ParamError::Invalid {
                field,
                value,
                reason,
            })
        } else {
            Ok(())
        }
    };
    check("s0", raw.s0, raw.s0 > 0.0, "initial price must be positive")?;
    check("mu", raw.mu, true, "")?;
    check("m", raw.m, raw.m > 0.0, "volatility normal level must be positive")?;
    check("y0", raw.y0, true, "")?;
    check("alpha", raw.alpha, raw.alpha > 0.0, "mean-reversion rate must be positive")?;
    check("gamma", raw.gamma, true, "")?;
    check("k", raw.k, raw.k >= 0.0, "vol-of-vol must be non-negative")?;
    check(
        "rho",
        raw.rho,
        (-1.0..=1.0).contains(&raw.rho),
        "correlation must lie in [-1, 1]",
    )?;
    Ok(ModelParams { raw })
}

impl ModelParams {
    /// Parameters from `(m, α, β, ρ)` with
    /// `γ = y0 = 0`, `μ = 0`, `s0 = 1`; `k = √(2αβ)`.
    pub fn from_beta(m: f64, alpha: f64, beta: f64, rho: f64) -> Result<Self, ParamError> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(ParamError::Invalid {
                field: "beta",
                value: beta,
                reason: "stationary variance must be non-negative",
            });
        }
        validate(RawParams {
            s0: 1.0,
            mu: 0.0,
            m,
            y0: 0.0,
            alpha,
            gamma: 0.0,
            k: (2.0 * alpha * beta).sqrt(),
            rho,
        })
    }

    pub fn raw(&self) -> RawParams {
        self.raw
    }

    /// Returns a copy with some fields replaced, re-validated.
    pub fn with(&self, f: impl FnOnce(&mut RawParams)) -> Result<Self, ParamError> {
        let mut raw = self.raw;
        f(&mut raw);
        validate(raw)
    }

    pub fn s0(&self) -> f64 {
        self.raw.s0
    }
    pub fn mu(&self) -> f64 {
        self.raw.mu
    }
    pub fn m(&self) -> f64 {
        self.raw.m
    }
    pub fn y0(&self) -> f64 {
        self.raw.y0
    }
    pub fn alpha(&self) -> f64 {
        self.raw.alpha
    }
    pub fn gamma(&self) -> f64 {
        self.raw.gamma
    }
    pub fn k(&self) -> f64 {
        self.raw.k
    }
    pub fn rho(&self) -> f64 {
        self.raw.rho
    }

    /// Stationary variance of `Y`, `k²/(2α)`.
    pub fn beta(&self) -> f64 {
        self.raw.k * self.raw.k / (2.0 * self.raw.alpha)
    }

    /// `k/m`, large in the Edgeworth regime.
    pub fn lambda(&self) -> f64 {
        self.raw.k / self.raw.m
    }

    /// Effective normal volatility `m e^γ`.
    pub fn m_bar(&self) -> f64 {
        self.raw.m * self.raw.gamma.exp()
    }

    /// Initial value of the linearised variable `Z = Y - γ + 1`.
    pub fn z0(&self) -> f64 {
        self.raw.y0 - self.raw.gamma + 1.0
    }
}

/// Time window `[t0, t]`, in years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    t0: f64,
    t: f64,
}

impl Horizon {
    pub fn new(t0: f64, t: f64) -> Result<Self, ParamError> {
        if !t0.is_finite() || !t.is_finite() || t < t0 {
            return Err(ParamError::Horizon { t0, t });
        }
        Ok(Self { t0, t })
    }

    /// Horizon starting at zero with the given length.
    pub fn elapsed(dt: f64) -> Result<Self, ParamError> {
        Self::new(0.0, dt)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn t(&self) -> f64 {
        self.t
    }

    /// `t - t0`.
    pub fn length(&self) -> f64 {
        self.t - self.t0
    }

    /// The dimensionless time `ζ = α (t - t0)`.
    pub fn zeta(&self, params: &ModelParams) -> f64 {
        params.alpha() * self.length()
    }
}

/// Mean of `Y(t)` given `Y(t0) = y0`.
pub fn ou_mean(params: &ModelParams, h: &Horizon) -> f64 {
    let decay = (-params.alpha() * h.length()).exp();
    (params.y0() - params.gamma()) * decay + params.gamma()
}

/// Variance of `Y(t)` given `Y(t0) = y0`: `β (1 - e^{-2α(t - t0)})`.
pub fn ou_variance(params: &ModelParams, h: &Horizon) -> f64 {
    -params.beta() * (-2.0 * params.alpha() * h.length()).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(m: f64, alpha: f64, k: f64, rho: f64) -> RawParams {
        RawParams {
            s0: 1.0,
            mu: 0.0,
            m,
            y0: 0.0,
            alpha,
            gamma: 0.0,
            k,
            rho,
        }
    }

    #[test]
    fn derived_quantities() {
        let p = validate(raw(0.1, 10.0, 1.0, -0.9)).unwrap();
        assert!((p.beta() - 0.05).abs() < 1e-15);
        assert!((p.lambda() - 10.0).abs() < 1e-12);
        assert!((p.m_bar() - 0.1).abs() < 1e-15);

        let p = validate(raw(0.1, 10.0, 0.0, 0.3)).unwrap();
        assert_eq!(p.beta(), 0.0);
        assert_eq!(p.lambda(), 0.0);
    }

    #[test]
    fn lambda_squared_relation() {
        // λ² = 2·10³ β for m = 0.1, α = 10.
        for beta in [0.005, 0.01, 0.02, 0.05, 0.1, 0.25, 0.5] {
            let p = ModelParams::from_beta(0.1, 10.0, beta, -0.9).unwrap();
            assert!((p.lambda().powi(2) - 2e3 * beta).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_fields() {
        let err = validate(raw(-0.1, 10.0, 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, ParamError::Invalid { field: "m", .. }));
        assert!(err.to_string().contains("`m`"));
        assert!(matches!(
            validate(raw(0.1, 0.0, 1.0, 0.0)),
            Err(ParamError::Invalid { field: "alpha", .. })
        ));
        assert!(matches!(
            validate(raw(0.1, 1.0, -1.0, 0.0)),
            Err(ParamError::Invalid { field: "k", .. })
        ));
        assert!(matches!(
            validate(raw(0.1, 1.0, 1.0, 1.5)),
            Err(ParamError::Invalid { field: "rho", .. })
        ));
        let mut r = raw(0.1, 1.0, 1.0, 0.0);
        r.s0 = 0.0;
        assert!(matches!(validate(r), Err(ParamError::Invalid { field: "s0", .. })));
        assert!(Horizon::new(1.0, 0.5).is_err());
    }

    #[test]
    fn ou_moments_examples() {
        let mut r = raw(0.1, 10.0, 1.0, 0.0);
        r.y0 = 1.0;
        let p = validate(r).unwrap();
        let h = Horizon::elapsed(0.1).unwrap();
        assert!((ou_mean(&p, &h) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((ou_variance(&p, &h) - 0.05 * (1.0 - (-2.0f64).exp())).abs() < 1e-12);
        assert!((ou_variance(&p, &h) - 0.043233).abs() < 1e-6);

        let h0 = Horizon::elapsed(0.0).unwrap();
        assert_eq!(ou_variance(&p, &h0), 0.0);
        let far = Horizon::elapsed(1e3).unwrap();
        assert!((ou_variance(&p, &far) - p.beta()).abs() < 1e-15);
        assert!((ou_mean(&p, &far) - p.gamma()).abs() < 1e-15);

        let fixed = p.with(|r| r.gamma = r.y0).unwrap();
        for t in [0.0, 0.3, 7.0] {
            let h = Horizon::elapsed(t).unwrap();
            assert!((ou_mean(&fixed, &h) - fixed.gamma()).abs() < 1e-15);
        }
    }

    #[test]
    fn serde_round_trip_uses_flat_names() {
        let p = ModelParams::from_beta(0.1, 10.0, 0.01, -0.9).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        for key in ["\"s0\"", "\"mu\"", "\"m\"", "\"y0\"", "\"alpha\"", "\"gamma\"", "\"k\"", "\"rho\""] {
            assert!(s.contains(key), "{s}");
        }
        let back: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let bad = r#"{"m": -1, "alpha": 1, "k": 0.1, "rho": 0}"#;
        assert!(serde_json::from_str::<ModelParams>(bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn variance_monotone_and_bounded(
                alpha in 0.1f64..50.0, k in 0.0f64..3.0, t1 in 0.0f64..2.0, dt in 0.0f64..2.0
            ) {
                let p = validate(raw(0.1, alpha, k, 0.0)).unwrap();
                let a = ou_variance(&p, &Horizon::elapsed(t1).unwrap());
                let b = ou_variance(&p, &Horizon::elapsed(t1 + dt).unwrap());
                prop_assert!(a >= 0.0);
                prop_assert!(b >= a);
                prop_assert!(b <= p.beta() * (1.0 + 1e-12));
            }

            #[test]
            fn mean_decays_at_rate_alpha(
                alpha in 0.1f64..20.0, y0 in -2.0f64..2.0, gamma in -1.0f64..1.0,
                t1 in 0.0f64..1.0, t2 in 0.0f64..1.0
            ) {
                prop_assume!((y0 - gamma).abs() > 1e-3);
                let mut r = raw(0.1, alpha, 0.5, 0.0);
                r.y0 = y0;
                r.gamma = gamma;
                let p = validate(r).unwrap();
                let l1 = (ou_mean(&p, &Horizon::elapsed(t1).unwrap()) - gamma).abs().ln();
                let l2 = (ou_mean(&p, &Horizon::elapsed(t2).unwrap()) - gamma).abs().ln();
                prop_assume!((t2 - t1).abs() > 1e-3);
                let slope = (l2 - l1) / (t2 - t1);
                prop_assert!((slope + alpha).abs() < 1e-6 * alpha.max(1.0));
            }
        }
    }
}
