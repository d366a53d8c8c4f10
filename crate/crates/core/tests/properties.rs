use proptest::prelude::*;
use shb_core::exact::{bias_product_route, coordinate_trajectory};
use shb_core::momentum::{max_certified_beta, real_regime_radius_bound};
use shb_core::rates::fit_series;
use shb_core::{
    build_optimum, build_spectrum, effective_dimension, exact_bias_variance, hard_instance_coords,
    lower_bound_thm32, spectral_info, MomentumMatrix, OptimumProfile, QuadraticProblem, SpectrumProfile,
    StepSchedule,
};

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn spectrum_strategy() -> impl Strategy<Value = SpectrumProfile> {
    prop_oneof![
        (0.5f64..4.0, 0.1f64..10.0).prop_map(|(a, c)| SpectrumProfile::PowerLaw { a, c }),
        (0.0f64..3.0).prop_map(|c| SpectrumProfile::LogAdjusted { c }),
        Just(SpectrumProfile::Exponential),
    ]
}

fn power_law_problem(dim: usize, a: f64, b: f64, sigma_sq: f64) -> QuadraticProblem {
    QuadraticProblem::from_profiles(
        &SpectrumProfile::PowerLaw { a, c: 1.0 },
        &OptimumProfile::SourceCondition { b },
        dim,
        sigma_sq,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectra_are_positive_and_descending(profile in spectrum_strategy(), dim in 1usize..600) {
        let lam = build_spectrum(&profile, dim).unwrap();
        prop_assert_eq!(lam.len(), dim);
        prop_assert!(lam.iter().all(|&l| l > 0.0 && l.is_finite()));
        prop_assert!(lam.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn source_condition_is_met(a in 1.05f64..4.0, b in 0.5f64..5.0, dim in 1usize..2000) {
        let lam = build_spectrum(&SpectrumProfile::PowerLaw { a, c: 1.0 }, dim).unwrap();
        let w = build_optimum(&OptimumProfile::SourceCondition { b }, &lam).unwrap();
        for (i, (&l, &x)) in lam.iter().zip(&w).enumerate() {
            let target = ((i + 1) as f64).powf(-b);
            prop_assert!(rel_close(l * x * x, target, 1e-12), "i = {}: {} vs {}", i + 1, l * x * x, target);
        }
    }

    #[test]
    fn noiseless_gradient_is_deterministic(dim in 1usize..40, seed in any::<u64>(), shift in -2.0f64..2.0) {
        use rand::SeedableRng;
        let p = power_law_problem(dim, 2.0, 3.0, 0.0);
        let w: Vec<f64> = p.optimum().iter().map(|x| x + shift).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = p.sample_gradient_coords(&w, &mut rng).unwrap();
        for j in 0..dim {
            prop_assert_eq!(g[j], p.eigenvalues()[j] * (w[j] - p.optimum()[j]));
        }
    }

    #[test]
    fn companion_matrix_identities(beta in 0.0f64..1.0, el in 0.0f64..2.0) {
        let m = MomentumMatrix::new(beta, el);
        let info = spectral_info(beta, el).unwrap();
        prop_assert_eq!(m.det(), beta);
        prop_assert_eq!(m.trace(), 1.0 + beta - el);
        let [l1, l2] = info.eigenvalues;
        // Vieta
        let prod_re = l1.re * l2.re - l1.im * l2.im;
        prop_assert!((prod_re - beta).abs() <= 1e-12);
        prop_assert!((l1.re + l2.re - m.trace()).abs() <= 1e-12);
    }

    #[test]
    fn complex_regime_radius_is_sqrt_beta(beta in 0.01f64..0.999, frac in 0.0f64..1.0) {
        let lo = (1.0 - beta.sqrt()).powi(2);
        let hi = (1.0 + beta.sqrt()).powi(2);
        let el = lo + (hi - lo) * (0.01 + 0.98 * frac);
        let info = spectral_info(beta, el).unwrap();
        prop_assume!(!info.is_real());
        prop_assert!((info.spectral_radius - beta.sqrt()).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn real_regime_radius_bound_holds(beta in 0.0f64..0.999, frac in 0.0f64..=1.0) {
        let el = frac * (1.0 - beta.sqrt()).powi(2);
        let info = spectral_info(beta, el).unwrap();
        prop_assert!(info.spectral_radius <= real_regime_radius_bound(beta, el) + 1e-12);
    }

    #[test]
    fn certified_momentum_contracts(log2_t in 20u32..40, frac in 0.0f64..=1.0, el in 1e-9f64..=1.0) {
        let t = 1u64 << log2_t;
        let beta = frac * max_certified_beta(t);
        prop_assert!(spectral_info(beta, el).unwrap().spectral_radius < 1.0);
    }

    #[test]
    fn bias_routes_agree(
        dim in 1usize..30,
        a in 1.2f64..3.0,
        b in 1.2f64..4.0,
        log2_t in 1u32..12,
        beta in prop_oneof![Just(0.0), 0.0f64..0.95],
        eta_frac in 0.05f64..1.0,
    ) {
        let p = power_law_problem(dim, a, b, 0.0);
        let schedule = StepSchedule::new(eta_frac / p.lambda_max(), 2u64 << log2_t).unwrap();
        let exact = exact_bias_variance(&p, &schedule, beta).unwrap();
        let product = bias_product_route(&p, &schedule, beta).unwrap();
        let scale = exact.bias.max(f64::MIN_POSITIVE);
        for (c, q) in exact.per_coordinate.iter().zip(&product) {
            prop_assert!((c.bias - q).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn sgd_bias_matches_scalar_product(lambda in 1e-4f64..1.0, dev in -3.0f64..3.0, log2_t in 1u32..13, eta0 in 0.05f64..1.0) {
        let schedule = StepSchedule::new(eta0, 2u64 << log2_t).unwrap();
        let traj = coordinate_trajectory(lambda, dev, 0.0, &schedule, 0.0);
        let prod: f64 = schedule.step_sizes().map(|eta| 1.0 - eta * lambda).product();
        let last = traj.last().unwrap();
        prop_assert!((last.bias_vec[0] - prod * dev).abs() <= 1e-10 * (prod * dev).abs().max(1e-300));
    }

    #[test]
    fn covariance_stays_psd(lambda in 1e-3f64..1.0, sigma_sq in 0.0f64..1.0, beta in 0.0f64..0.99, log2_t in 2u32..11) {
        let schedule = StepSchedule::new(1.0, 1u64 << log2_t).unwrap();
        let traj = coordinate_trajectory(lambda, 1.0, sigma_sq, &schedule, beta);
        for m in &traj {
            prop_assert!(m.cov_is_psd());
            prop_assert!(m.cov[0] >= 0.0);
        }
    }

    #[test]
    fn lower_bound_cross_route(dim in 1usize..300, a in 1.1f64..4.0, b in 1.1f64..4.0, sigma_sq in 0.0f64..2.0, log2_t in 1u32..30) {
        let t = 1u64 << log2_t;
        let lam = build_spectrum(&SpectrumProfile::PowerLaw { a, c: 1.0 }, dim).unwrap();
        let wbar: Vec<f64> = build_optimum(&OptimumProfile::SourceCondition { b }, &lam).unwrap().iter().map(|x| x.abs()).collect();
        let lb = lower_bound_thm32(&lam, &wbar, sigma_sq, t).unwrap();
        let hard = hard_instance_coords(&lam, &wbar, sigma_sq, t).unwrap();
        let by_coords = 0.125 * lam.iter().zip(&hard.coords).map(|(l, w)| l * w * w).sum::<f64>();
        let by_split = 0.125
            * (hard.informative.len() as f64 * sigma_sq / t as f64
                + (1..=dim).filter(|i| !hard.informative.contains(i)).map(|i| lam[i - 1] * wbar[i - 1] * wbar[i - 1]).sum::<f64>());
        prop_assert!(rel_close(lb, by_coords, 1e-12));
        prop_assert!(rel_close(lb, by_split, 1e-12));
    }

    #[test]
    fn lower_bound_monotonicity(
        dim in 1usize..300,
        b in 1.1f64..4.0,
        s1 in 0.0f64..2.0,
        s2 in 0.0f64..2.0,
        t1 in 1u64..1_000_000,
        t2 in 1u64..1_000_000,
    ) {
        let lam = build_spectrum(&SpectrumProfile::PowerLaw { a: 2.0, c: 1.0 }, dim).unwrap();
        let wbar: Vec<f64> = build_optimum(&OptimumProfile::SourceCondition { b }, &lam).unwrap().iter().map(|x| x.abs()).collect();
        let (tlo, thi) = (t1.min(t2), t1.max(t2));
        let (slo, shi) = (s1.min(s2), s1.max(s2));
        prop_assert!(lower_bound_thm32(&lam, &wbar, s1, thi).unwrap() <= lower_bound_thm32(&lam, &wbar, s1, tlo).unwrap());
        prop_assert!(lower_bound_thm32(&lam, &wbar, slo, t1).unwrap() <= lower_bound_thm32(&lam, &wbar, shi, t1).unwrap());
    }

    #[test]
    fn effective_dimension_monotone(
        dim in 1usize..2000,
        a in 1.1f64..3.0,
        b1 in 0.0f64..0.99,
        b2 in 0.0f64..0.99,
        e1 in 1e-3f64..1.0,
        e2 in 1e-3f64..1.0,
        t1 in 16u64..1_000_000,
        t2 in 16u64..1_000_000,
    ) {
        let lam = build_spectrum(&SpectrumProfile::PowerLaw { a, c: 1.0 }, dim).unwrap();
        let k = |eta: f64, beta: f64, t: u64| effective_dimension(&lam, eta, beta, t);
        prop_assert!(k(e1, b1.min(b2), t1) <= k(e1, b1.max(b2), t1));
        prop_assert!(k(e1.min(e2), b1, t1) <= k(e1.max(e2), b1, t1));
        prop_assert!(k(e1, b1, t1.min(t2)) <= k(e1, b1, t1.max(t2)));
    }

    #[test]
    fn fit_recovers_power_law(slope in -3.0f64..0.5, scale in 1e-6f64..1e3, n in 3usize..12) {
        let series: Vec<(u64, f64)> = (0..n).map(|i| {
            let t = 1u64 << (4 + i);
            (t, scale * (t as f64).powf(slope))
        }).collect();
        let fit = fit_series(&series, 1.0).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-10);
    }
}
