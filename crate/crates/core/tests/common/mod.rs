#![allow(dead_code)]

use expou::{Complex64, ModelParams};

pub type Abc = (Complex64, Complex64, Complex64);

/// `d(A, B, C)/dτ` for `f = exp(A + B z + C z² + iφx)`, read off the
/// generator of `(X, Z)` coefficient by coefficient in `z`.
pub fn generator_rhs(phi: f64, p: &ModelParams, (_, b, c): Abc) -> Abc {
    let i = Complex64::i();
    let (mb, al, k, rho) = (p.m_bar(), p.alpha(), p.k(), p.rho());
    let x_drift = |z_power: u8| match z_power {
        0 => 0.5 * mb * mb * i * phi,
        1 => -mb * mb * i * phi,
        _ => Complex64::new(0.0, 0.0),
    };
    // z²
    let dc = -0.5 * mb * mb * phi * phi - 2.0 * al * c + 2.0 * k * k * c * c
        + 2.0 * i * rho * k * mb * phi * c;
    // z¹
    let db = x_drift(1) + 2.0 * al * c - al * b + 2.0 * k * k * b * c + i * rho * k * mb * phi * b;
    // z⁰
    let da = x_drift(0) + al * b + 0.5 * k * k * (b * b + 2.0 * c);
    (da, db, dc)
}

/// Classical RK4 from `(0, 0, 0)` at `τ = 0` to `tau` in `steps` steps.
pub fn rk4_abc(phi: f64, p: &ModelParams, tau: f64, steps: usize) -> Abc {
    let h = tau / steps as f64;
    let add = |y: Abc, k: Abc, s: f64| (y.0 + k.0 * s, y.1 + k.1 * s, y.2 + k.2 * s);
    let zero = Complex64::new(0.0, 0.0);
    let mut y = (zero, zero, zero);
    for _ in 0..steps {
        let k1 = generator_rhs(phi, p, y);
        let k2 = generator_rhs(phi, p, add(y, k1, 0.5 * h));
        let k3 = generator_rhs(phi, p, add(y, k2, 0.5 * h));
        let k4 = generator_rhs(phi, p, add(y, k3, h));
        y = (
            y.0 + (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) * (h / 6.0),
            y.1 + (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) * (h / 6.0),
            y.2 + (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2) * (h / 6.0),
        );
    }
    y
}

/// Steps that keep RK4 well inside its accuracy region for this `(φ, τ)`.
pub fn rk4_steps(phi: f64, p: &ModelParams, tau: f64) -> usize {
    let rate = p.alpha() + p.k() * p.m_bar() * phi.abs() + p.k() * p.k() + 1.0;
    ((tau * rate * 400.0).ceil() as usize).clamp(200, 2_000_000)
}

/// `max |closed − ode| / (1 + |closed|)` over the three exponent pieces.
pub fn oracle_error(phi: f64, p: &ModelParams, tau: f64) -> f64 {
    let h = expou::Horizon::new(0.0, tau).unwrap();
    let cf = expou::linear_cf::LinearCf::new(p, &h, 0.0, None).unwrap();
    let v = cf.eval(phi);
    let (a, b, c) = rk4_abc(phi, p, tau, rk4_steps(phi, p, tau));
    [(v.a, a), (v.b, b), (v.c, c)]
        .iter()
        .map(|(closed, ode)| (closed - ode).norm() / (1.0 + closed.norm()))
        .fold(0.0, f64::max)
}
