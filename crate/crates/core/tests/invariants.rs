use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use swipt_core::channel::{complex_gaussian, generate_scenario, path_loss, FadingConfig};
use swipt_core::experiment::ScenarioParams;
use swipt_core::linalg::{min_eig, outer, psd_project, quad_form, wrap_phase, CMat, CVec};
use swipt_core::sdr::{rank_one_extract, Projection};
use swipt_core::system_model::{effective_channels, lifted_channel, ReflectionState};
use swipt_core::wpt::sca_surrogate;

fn gaussian_vec(seed: u64, n: usize) -> CVec {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    CVec::from_fn(n, |_, _| complex_gaussian(&mut rng))
}

fn gaussian_mat(seed: u64, r: usize, c: usize) -> CMat {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    CMat::from_fn(r, c, |_, _| complex_gaussian(&mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wrapped_phase_is_in_one_turn(theta in -100.0f64..100.0) {
        let w = wrap_phase(theta);
        prop_assert!((0.0..std::f64::consts::TAU).contains(&w));
        let k = ((theta - w) / std::f64::consts::TAU).round();
        prop_assert!((theta - w - k * std::f64::consts::TAU).abs() < 1e-9);
    }

    #[test]
    fn psd_projection_is_psd_and_idempotent(seed in any::<u64>(), n in 1usize..6) {
        let a = gaussian_mat(seed, n, n);
        let h = (&a + a.adjoint()) * swipt_core::linalg::cr(0.5);
        let p = psd_project(&h);
        prop_assert!(min_eig(&p) >= -1e-10 * (1.0 + p.norm()));
        prop_assert!((psd_project(&p) - &p).norm() <= 1e-9 * (1.0 + p.norm()));
    }

    #[test]
    fn rank_one_round_trip(seed in any::<u64>(), n in 1usize..6) {
        let x = gaussian_vec(seed, n);
        let y = rank_one_extract(&outer(&x, &x), 1e-6).unwrap();
        prop_assert!((outer(&y, &y) - outer(&x, &x)).norm() <= 1e-9 * x.norm_squared());
    }

    #[test]
    fn surrogate_is_a_tight_minorant(seed in any::<u64>(), n in 2usize..8) {
        let a = gaussian_mat(seed, n, 3);
        let k = &a * a.adjoint();
        let at = gaussian_vec(seed ^ 1, n);
        let other = gaussian_vec(seed ^ 2, n);
        let exact = quad_form(&k, &other);
        prop_assert!(sca_surrogate(&k, &at, &other) <= exact + 1e-10 * (1.0 + exact.abs()));
        prop_assert!((sca_surrogate(&k, &at, &at) - quad_form(&k, &at)).abs() <= 1e-10 * (1.0 + quad_form(&k, &at)));
    }

    #[test]
    fn lifted_channel_matches_cascade(seed in any::<u64>(), n in 1usize..6, m in 1usize..4) {
        let f = gaussian_mat(seed, n, m);
        let r = gaussian_vec(seed ^ 3, n);
        let d = gaussian_vec(seed ^ 4, m);
        let w = gaussian_vec(seed ^ 5, m);
        let u = gaussian_vec(seed ^ 6, n);
        let refl = ReflectionState::new(u);
        let ub = refl.lifted();
        let direct = (r.adjoint() * refl.theta() * &f * &w)[(0, 0)] + d.dotc(&w);
        let lifted = ub.dotc(&(lifted_channel(&f, &r, &d) * &w));
        prop_assert!((direct - lifted).norm() <= 1e-10 * (1.0 + direct.norm()));
    }

    #[test]
    fn projections_land_on_their_sets(seed in any::<u64>(), n in 1usize..8, beta in 0.1f64..3.0, budget in 0.1f64..10.0) {
        let mut ub = gaussian_vec(seed, n + 1);
        ub[n] = swipt_core::linalg::cr(1.0);
        let mut unit = ub.clone();
        Projection::UnitModulus.apply(&mut unit);
        let mut fixed = ub.clone();
        Projection::FixedModulus(beta).apply(&mut fixed);
        for k in 0..n {
            prop_assert!((unit[k].norm() - 1.0).abs() < 1e-12);
            prop_assert!((fixed[k].norm() - beta).abs() < 1e-12);
        }
        let mut kernel = CMat::zeros(n + 1, n + 1);
        for k in 0..n {
            kernel[(k, k)] = swipt_core::linalg::cr(1.0 + k as f64);
        }
        let mut backed = ub.clone();
        Projection::AmplitudeBackoff { kernel: kernel.clone(), budget }.apply(&mut backed);
        prop_assert!(quad_form(&kernel, &backed) <= budget * (1.0 + 1e-12));
        prop_assert_eq!(backed[n], ub[n]);
    }

    #[test]
    fn path_loss_falls_with_distance(d in 1.0f64..200.0, extra in 0.1f64..50.0, alpha in 2.0f64..4.0) {
        let fading = FadingConfig::default();
        prop_assert!(path_loss(d + extra, alpha, &fading).unwrap() < path_loss(d, alpha, &fading).unwrap());
    }

    #[test]
    fn scenarios_are_seed_deterministic(seed in any::<u64>()) {
        let params = ScenarioParams { m: 2, n: 4, ..ScenarioParams::default() };
        let cfg = params.config();
        let a = generate_scenario(&cfg, &params.geometry, &FadingConfig::default(), seed).unwrap();
        let b = generate_scenario(&cfg, &params.geometry, &FadingConfig::default(), seed).unwrap();
        prop_assert_eq!(&a.f, &b.f);
        prop_assert_eq!(&a.h_d, &b.h_d);
        prop_assert_eq!(&a.g_r, &b.g_r);
        let (h, g) = effective_channels(&a, &ReflectionState::off(cfg.n)).unwrap();
        prop_assert_eq!(&h, &a.h_d);
        prop_assert_eq!(&g, &a.g_d);
    }
}
