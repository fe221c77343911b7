use expou::edgeworth::{cumulants_closed_form, edgeworth_density, quadrature_cumulants};
use expou::inversion::{tail_trim, DensityGrid, FrequencyGrid, Method};
use expou::linear_cf::{negative_vol_probability, LinearCf};
use expou::stats::{build_histogram, estimate_cumulants_with, BinRule, CiMethod, SampleMoments};
use expou::{Horizon, ModelParams, RawParams};
use proptest::prelude::*;

fn model() -> impl Strategy<Value = ModelParams> {
    (0.02..0.5f64, 0.5..40.0f64, 0.001..0.5f64, -0.99..0.99f64, -0.5..0.5f64, -0.5..0.5f64).prop_map(
        |(m, alpha, beta, rho, gamma, y0)| {
            ModelParams::from_beta(m, alpha, beta, rho)
                .unwrap()
                .with(|r| {
                    r.gamma = gamma;
                    r.y0 = y0;
                })
                .unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cf_is_hermitian_bounded_and_normalised(p in model(), t in 0.001..3.0f64, phi in -200.0..200.0f64) {
        let cf = LinearCf::new(&p, &Horizon::new(0.0, t).unwrap(), 0.0, None).unwrap();
        let f = cf.f(phi);
        prop_assert!(f.norm() <= 1.0 + 1e-9);
        prop_assert!((cf.f(-phi) - f.conj()).norm() < 1e-9 * (1.0 + f.norm()));
        prop_assert!((cf.f(0.0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_cumulants_have_model_signs(p in model(), t in 0.01..3.0f64) {
        let c = cumulants_closed_form(&p, &Horizon::new(0.0, t).unwrap());
        prop_assert!(c.k1 < 0.0 && c.k2 > 0.0);
        if p.y0() == 0.0 && p.gamma() == 0.0 {
            prop_assert!(c.k3 * p.rho() >= 0.0);
        }
    }

    #[test]
    fn edgeworth_quadrature_returns_inputs(p in model(), t in 0.05..2.0f64) {
        let c = cumulants_closed_form(&p, &Horizon::new(0.0, t).unwrap());
        let q = quadrature_cumulants(&c, 4000).unwrap();
        let scale = [1.0, c.k2.sqrt(), c.k2, c.k2.powf(1.5), c.k2 * c.k2];
        prop_assert!((q[0] - 1.0).abs() < 1e-8);
        for (j, want) in [c.k1, c.k2, c.k3, c.k4].iter().enumerate() {
            prop_assert!((q[j + 1] - want).abs() < 1e-8 * scale[j + 1], "k{} {} vs {}", j + 1, q[j + 1], want);
        }
        prop_assert!(edgeworth_density(c.k1, &c).unwrap() > 0.0);
    }

    #[test]
    fn k_statistics_are_shift_and_scale_equivariant(
        xs in prop::collection::vec(-5.0..5.0f64, 20..200),
        shift in -100.0..100.0f64,
        scale in 0.1..10.0f64,
    ) {
        let base = SampleMoments::from_sample(&xs);
        prop_assume!(base.is_ok());
        let [k1, k2, k3, k4] = base.unwrap().k_statistics();
        prop_assume!(k2 > 1e-6);
        let ys: Vec<f64> = xs.iter().map(|x| shift + scale * x).collect();
        let [l1, l2, l3, l4] = SampleMoments::from_sample(&ys).unwrap().k_statistics();
        let tol = 1e-7;
        prop_assert!((l1 - (shift + scale * k1)).abs() < tol * (1.0 + l1.abs()));
        prop_assert!((l2 - scale.powi(2) * k2).abs() < tol * l2);
        prop_assert!((l3 - scale.powi(3) * k3).abs() < tol * scale.powi(3) * k2.powf(1.5) * 10.0);
        prop_assert!((l4 - scale.powi(4) * k4).abs() < tol * scale.powi(4) * k2 * k2 * 10.0);
    }

    #[test]
    fn delta_and_bootstrap_intervals_are_positive(xs in prop::collection::vec(-3.0..3.0f64, 30..120)) {
        for method in [CiMethod::DeltaMethod, CiMethod::Bootstrap { resamples: 50, seed: 1 }] {
            if let Ok(s) = estimate_cumulants_with(&xs, 0.95, method) {
                prop_assert!(s.half_widths.k1 > 0.0 && s.half_widths.k2 > 0.0);
            }
        }
    }

    #[test]
    fn histogram_keeps_every_point(xs in prop::collection::vec(-1e3..1e3f64, 1..500)) {
        let h = build_histogram(&xs, &BinRule::FreedmanDiaconis).unwrap();
        prop_assert_eq!(h.total(), xs.len() as u64);
        let merged = h.merge_sparse(5);
        prop_assert_eq!(merged.total(), xs.len() as u64);
        let mass: f64 = h.densities.iter().zip(h.widths()).map(|(d, w)| d * w).sum();
        prop_assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tail_trim_keeps_mode_and_threshold(
        ps in prop::collection::vec(-0.1..1.0f64, 3..100),
        threshold in 0.0..0.9f64,
    ) {
        let x: Vec<f64> = (0..ps.len()).map(|i| i as f64).collect();
        let d = DensityGrid { x, p: ps.clone(), method: Method::Fft, grid: FrequencyGrid::new(1.0, 2).unwrap() };
        let peak = ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        match tail_trim(&d, threshold) {
            Ok(t) => {
                prop_assert!(t.p.iter().all(|v| *v >= threshold));
                prop_assert!(t.p.contains(&peak));
                prop_assert!(t.x.windows(2).all(|w| w[1] - w[0] == 1.0));
            }
            Err(_) => prop_assert!(peak < threshold),
        }
    }

    #[test]
    fn negative_vol_probability_grows_with_beta(b1 in 0.001..0.5f64, db in 0.001..0.5f64, t in 0.01..5.0f64) {
        let h = Horizon::new(0.0, t).unwrap();
        let lo = negative_vol_probability(&ModelParams::from_beta(0.1, 10.0, b1, -0.5).unwrap(), &h);
        let hi = negative_vol_probability(&ModelParams::from_beta(0.1, 10.0, b1 + db, -0.5).unwrap(), &h);
        prop_assert!(hi >= lo && hi <= 0.5);
    }

    #[test]
    fn parameter_json_round_trips(p in model()) {
        let text = serde_json::to_string(&p).unwrap();
        let raw: RawParams = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(raw, p.raw());
        let back: ModelParams = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, p);
    }
}
