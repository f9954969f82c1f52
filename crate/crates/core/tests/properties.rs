use noise_lab::analysis::prop_a1_identity;
use noise_lab::noise::{search_direction_noise, tail_stats, TAIL_SIGMAS};
use noise_lab::optimizers::trajectory_divergence;
use noise_lab::smoothing::{
    adaptive_sharpness, degree_of_smoothing, smoothed_value, PNorm, Perturbation, SharpnessMethod, SharpnessSpec,
    SmoothingSpec,
};
use noise_lab::sweep::{analytic_critical_batch, analytic_sfo, analytic_steps, AnalyticCurveParams};
use noise_lab::{run, Objective, OptimizerConfig, RngStream, TraceOptions};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn convex_combination_identity(x in vec3(), y in vec3(), alpha in 0.0..=1.0f64) {
        let c = prop_a1_identity(&x, &y, alpha).unwrap();
        let scale = 1.0 + x.iter().chain(&y).map(|v| v * v).sum::<f64>();
        prop_assert!(c.abs_diff <= 1e-12 * scale, "{c:?}");
    }
}

/// Curve parameters with `ε² > Z`, plus a batch size above the pole.
fn curve() -> impl Strategy<Value = (AnalyticCurveParams, f64)> {
    (0.1..1e3f64, 0.01..100.0f64, 0.0..0.2f64, 0.25..4.0f64, 1.01..50.0f64).prop_map(|(x, y, zf, e2, above)| {
        let p = AnalyticCurveParams::new(x, y, zf * e2, e2);
        let pole = p.pole().unwrap();
        (p, pole * above)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn steps_decrease_and_are_convex((p, b) in curve()) {
        let h = 1e-3 * b;
        let t = |v: f64| analytic_steps(&p, v).unwrap();
        prop_assert!(t(b + h) < t(b));
        if b - h > p.pole().unwrap() {
            prop_assert!(t(b + h) - 2.0 * t(b) + t(b - h) > -1e-9 * t(b));
        }
    }

    #[test]
    fn sfo_is_minimal_at_the_critical_batch((p, b) in curve()) {
        let star = analytic_critical_batch(&p).unwrap();
        let at_star = analytic_sfo(&p, star).unwrap();
        prop_assert!(at_star <= analytic_sfo(&p, b).unwrap() * (1.0 + 1e-12));
        // twice the pole
        prop_assert!((star - 2.0 * p.pole().unwrap()).abs() <= 1e-9 * star);
    }

    #[test]
    fn critical_batch_exceeds_noise_scale(eta in 1e-3..1.0f64, c_sq in 0.1..1e4f64, k_sq in 1e-3..10.0f64, eps in 0.1..3.0f64) {
        let z = eta * k_sq / 2.0;
        prop_assume!(eps * eps > z);
        let p = AnalyticCurveParams::new(1.0, eta * c_sq / 2.0, z, eps * eps);
        prop_assert!(analytic_critical_batch(&p).unwrap() > eta * c_sq / (eps * eps));
    }

    #[test]
    fn degree_of_smoothing_shrinks_with_batch(eta in 1e-3..1.0f64, c_sq in 0.0..1e3f64, b in 1usize..4096) {
        prop_assert!(degree_of_smoothing(eta, c_sq, 2 * b) <= degree_of_smoothing(eta, c_sq, b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shb_matches_nshb_under_shared_noise(
        gamma in 0.001..0.2f64,
        beta_bar in 0.0..0.95f64,
        b in 1usize..16,
        seed in any::<u64>(),
        x0 in prop::collection::vec(-5.0..5.0f64, 2),
    ) {
        let obj = Objective::noisy_quadratic(vec![1.0, 0.3], 2.0).unwrap();
        let stream = RngStream::new(seed);
        let opts = TraceOptions::full();
        let shb = run(&obj, &OptimizerConfig::shb(gamma, beta_bar, b), &x0, None, 200, &stream, &opts).unwrap();
        let nshb = run(
            &obj,
            &OptimizerConfig::nshb(gamma / (1.0 - beta_bar), beta_bar, b),
            &x0, None, 200, &stream, &opts,
        ).unwrap();
        prop_assert!(trajectory_divergence(&shb, &nshb) <= 1e-10);
    }

    #[test]
    fn sgd_search_noise_is_gradient_noise(eta in 0.01..0.5f64, b in 1usize..8, seed in any::<u64>()) {
        let obj = Objective::noisy_quadratic(vec![1.0, 2.0], 3.0).unwrap();
        let trace = run(&obj, &OptimizerConfig::sgd(eta, b), &[1.0, 1.0], None, 150, &RngStream::new(seed), &TraceOptions::records())
            .unwrap();
        let rep = search_direction_noise(&trace, &obj, Some(0)).unwrap();
        for s in &rep.per_step {
            prop_assert_eq!(s.omega_sq, s.grad_noise_sq);
        }
    }

    #[test]
    fn random_search_sharpness_monotone_in_rho(rho in 0.01..2.0f64, extra in 0.0..2.0f64, seed in any::<u64>()) {
        let obj = Objective::noisy_quadratic(vec![1.0, 4.0], 0.0).unwrap();
        let stream = RngStream::new(seed);
        let at = |r: f64| {
            let spec = SharpnessSpec::new(r, PNorm::Two, SharpnessMethod::RandomSearch, 20);
            adaptive_sharpness(&obj, &[0.3, -0.2], &spec, &stream).unwrap().value
        };
        prop_assert!(at(rho + extra) >= at(rho));
    }

    #[test]
    fn sharpness_monotone_in_iters(iters in 1usize..40, extra in 0usize..40, seed in any::<u64>(), sign in any::<bool>()) {
        let obj = Objective::sine_bowl(2, 0.5, 3.0, 0.0, None).unwrap();
        let method = if sign { SharpnessMethod::SignAscent } else { SharpnessMethod::RandomSearch };
        let stream = RngStream::new(seed);
        let at = |n: usize| {
            let spec = SharpnessSpec::new(0.5, PNorm::Inf, method, n);
            adaptive_sharpness(&obj, &[0.1, 0.4], &spec, &stream).unwrap().value
        };
        let (a, b) = (at(iters), at(iters + extra));
        prop_assert!(b >= a && a >= 0.0);
    }

    #[test]
    fn smoothing_at_minimizer_grows_with_delta(d in 0.0..2.0f64, extra in 0.0..2.0f64, seed in any::<u64>(), gauss in any::<bool>()) {
        let obj = Objective::noisy_quadratic(vec![1.0, 2.0, 0.5], 1.0).unwrap();
        let dist = if gauss { Perturbation::GaussianScaled } else { Perturbation::UnitSphere };
        let stream = RngStream::new(seed);
        let at = |delta: f64| smoothed_value(&obj, &[0.0; 3], &SmoothingSpec::new(delta, dist, 2000), &stream).unwrap().estimate;
        prop_assert!(at(d + extra) >= at(d) - 1e-15);
    }

    #[test]
    fn tail_stats_invariants(samples in prop::collection::vec(-1e3..1e3f64, 30..400)) {
        let s = tail_stats(&samples).unwrap();
        prop_assert_eq!(s.sample_count, samples.len());
        prop_assert!(s.variance >= 0.0);
        // excess kurtosis is bounded below by -2
        prop_assert!(s.excess_kurtosis >= -2.0 - 1e-9);
        for w in s.tail_mass_beyond_k_sigma.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for (m, k) in s.tail_mass_beyond_k_sigma.iter().zip(TAIL_SIGMAS) {
            // Chebyshev
            prop_assert!(*m <= 1.0 / (k * k) + 1e-12);
        }
        prop_assert!((s.kurtosis_std_error - (24.0 / samples.len() as f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn substreams_are_reproducible(seed in any::<u64>(), path in prop::collection::vec(any::<u64>(), 0..4)) {
        use rand::Rng;
        let a: u64 = RngStream::new(seed).children(&path).rng().random();
        let b: u64 = RngStream::new(seed).children(&path).rng().random();
        let c: u64 = RngStream::new(seed).children(&path).child(0).rng().random();
        prop_assert_eq!(a, b);
        prop_assert_ne!(a, c);
    }
}
