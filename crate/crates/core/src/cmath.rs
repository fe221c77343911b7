//! Small complex-arithmetic helpers shared by the analytic modules.

use num_complex::Complex64;
use std::f64::consts::PI;

/// `e^z - 1` without cancellation for small `|z|`.
pub fn expm1(z: Complex64) -> Complex64 {
    let (s, c) = z.im.sin_cos();
    let h = (0.5 * z.im).sin();
    Complex64::new(z.re.exp_m1() * c - 2.0 * h * h, z.re.exp() * s)
}

/// Natural log on the branch closest to `reference` (rotation-count
/// correction of the principal value).
pub fn continuous_ln(z: Complex64, reference: f64) -> Complex64 {
    let mut l = z.ln();
    let turns = ((reference - l.im) / (2.0 * PI)).round();
    l.im += turns * 2.0 * PI;
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm1_matches_series_and_direct_evaluation() {
        for z in [Complex64::new(1e-6, 2e-6), Complex64::new(-3e-4, 1e-4)] {
            let taylor = z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)));
            assert!((expm1(z) - taylor).norm() <= 1e-15 * taylor.norm());
        }
        let z = Complex64::new(0.7, -1.2);
        assert!((expm1(z) - (z.exp() - 1.0)).norm() < 1e-15);
    }

    #[test]
    fn continuous_ln_picks_nearest_sheet() {
        let z = Complex64::from_polar(2.0, 3.0);
        let l = continuous_ln(z, 3.0 + 2.0 * PI);
        assert!((l.im - (3.0 + 2.0 * PI)).abs() < 1e-12);
        assert!((l.re - 2f64.ln()).abs() < 1e-15);
    }
}
