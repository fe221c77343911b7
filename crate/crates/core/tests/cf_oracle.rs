mod common;

use common::{generator_rhs, oracle_error};
use expou::linear_cf::{riccati_rhs, riccati_residual_check};
use expou::{Complex64, Horizon, ModelParams};

fn params(beta: f64, rho: f64) -> ModelParams {
    ModelParams::from_beta(0.1, 10.0, beta, rho).unwrap()
}

#[test]
fn closed_forms_match_ode_integration() {
    for &(beta, rho) in &[(0.01, -0.9), (0.1, -0.5), (0.5, 0.3), (0.02, 0.0)] {
        let p = params(beta, rho);
        for &tau in &[0.01, 0.1, 1.0, 5.0] {
            for &phi in &[0.0, 0.5, 3.0, 20.0, 150.0] {
                let e = oracle_error(phi, &p, tau);
                assert!(e < 1e-8, "beta {beta} rho {rho} tau {tau} phi {phi}: {e:e}");
            }
        }
    }
}

#[test]
fn crate_rhs_agrees_with_generator() {
    let p = ModelParams::from_beta(0.2, 3.0, 0.3, -0.6)
        .unwrap()
        .with(|r| r.gamma = 0.4)
        .unwrap();
    let y = (Complex64::new(0.3, -1.0), Complex64::new(-0.2, 0.5), Complex64::new(-0.7, 0.1));
    for phi in [0.0, 1.0, -7.5, 40.0] {
        let (a, b, c) = riccati_rhs(phi, &p, y);
        let (ga, gb, gc) = generator_rhs(phi, &p, y);
        for (u, v) in [(a, ga), (b, gb), (c, gc)] {
            assert!((u - v).norm() < 1e-12 * (1.0 + v.norm()), "{u} {v}");
        }
    }
}

#[test]
fn residuals_on_a_grid() {
    let p = params(0.01, -0.9);
    for &t in &[0.05, 0.3, 1.0, 3.0] {
        for &phi in &[0.1, 2.0, 10.0, 60.0] {
            let r = riccati_residual_check(phi, &p, &Horizon::new(0.0, t).unwrap(), 1e-4).unwrap();
            assert!(r.max() < 1e-6, "t {t} phi {phi}: {r:?}");
        }
    }
}

#[test]
fn non_zero_start_time_uses_elapsed_time() {
    let p = params(0.05, -0.4);
    let cf = |t0: f64, t: f64| {
        expou::linear_cf::LinearCf::new(&p, &Horizon::new(t0, t).unwrap(), 0.0, None)
            .unwrap()
            .f(4.0)
    };
    assert!((cf(0.0, 0.7) - cf(2.0, 2.7)).norm() < 1e-13);
}
