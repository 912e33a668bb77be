use ifpt_core::bench::rise_then_fall;
use ifpt_core::boundaries::{Boundary, PiecewiseLinearBoundary};
use ifpt_core::bridge::PathEnsemble;
use ifpt_core::densities::{fpt_cdf_linear, FptDensity};
use ifpt_core::direct::direct_fpt_mc;
use ifpt_core::plmc::{plmc_solve, plmc_step1, plmc_step_n, PlmcConfig, Startup};
use ifpt_core::Error;
use proptest::prelude::*;

#[test]
fn first_step_recovers_a_line() {
    let k1 = fpt_cdf_linear(0.2, 1.0, 0.3);
    assert!((plmc_step1(k1, 1.0, 0.2, 1e-10).unwrap() - 0.3).abs() <= 1e-9);
    assert!(plmc_step1(1e-12, 1.0, 0.2, 1e-10).unwrap() > 10.0);
    assert!(matches!(plmc_step1(1.0, 1.0, 0.2, 1e-10), Err(Error::InfeasibleMass { .. })));
}

#[test]
fn two_segment_truth_is_covered() {
    // knots (0, 1), (0.2, 1.1), (0.4, 0.9)
    let (beta1, beta2, h) = (0.5, -1.0, 0.2);
    let truth = PiecewiseLinearBoundary::new(vec![0.0, 0.2, 0.4], vec![1.0, 1.1, 0.9]).unwrap();
    let target = direct_fpt_mc(&Boundary::PiecewiseLinear(truth), &[0.2, 0.4], 1_000_000, 777).unwrap();
    let k1 = fpt_cdf_linear(h, 1.0, beta1);
    let k2 = target.interval_masses[1];
    let mut covered = 0;
    for seed in 0..20 {
        let b1 = plmc_step1(k1, 1.0, h, 1e-10).unwrap();
        let c1 = 1.0 + b1 * h;
        let mut ens = PathEnsemble::new(10_000, seed);
        ens.extend(1.0, c1, h);
        let out = plmc_step_n(&ens, c1, b1, k2, h, 0.95, 1e-10).unwrap();
        assert!(out.ci.0 <= out.beta && out.beta <= out.ci.1);
        if out.ci.0 <= beta2 && beta2 <= out.ci.1 {
            covered += 1;
        }
    }
    assert!(covered >= 16, "covered {covered}/20");
}

#[test]
fn vanishing_target_pushes_slope_up() {
    let mut ens = PathEnsemble::new(10_000, 3);
    ens.extend(1.0, 1.0, 0.2);
    let scale = ens.survival();
    // Paths ending a distance d below the chord keep weight ∝ d and cross a
    // steep line with probability ≈ e^{−2βd}, so the left side decays like
    // 1/β² until the closest path is out of reach.
    let ratio = |b: f64| ens.crossing_mass(b, 1.0, 0.2) / scale;
    assert!(ratio(50.0) < 1e-3);
    assert!(ratio(1e3) < ratio(50.0) && ratio(1e4) < 1e-8);
}

#[test]
fn daniels_target_recovered() {
    let d = FptDensity::daniels(1.0, 0.5, 0.5).unwrap();
    let r = plmc_solve(&d, &PlmcConfig::new(0.2, 10, 10_000, Some(0.5))).unwrap();
    let truth = Boundary::Daniels(ifpt_core::boundaries::DanielsBoundary::new(1.0, 0.5, 0.5).unwrap());
    let t = r.boundary.times();
    let sigma: f64 = t
        .iter()
        .zip(r.boundary.levels())
        .map(|(t, c)| {
            let b = if *t == 0.0 { truth.initial_level() } else { truth.eval(*t).unwrap() };
            (b - c).powi(2)
        })
        .sum::<f64>()
        / 10.0;
    assert!(sigma < 5e-4, "σ = {sigma}");
}

#[test]
fn exponential_target_rises_then_falls() {
    let d = FptDensity::exponential(1.0).unwrap();
    let mut cfg = PlmcConfig::new(0.01, 100, 10_000, None);
    cfg.startup = Startup::PeskirG;
    let r = plmc_solve(&d, &cfg).unwrap();
    let levels = &r.boundary.levels()[1..];
    assert!(levels.iter().all(|c| *c > 0.0));
    assert!(rise_then_fall(levels));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let d = FptDensity::daniels(1.0, 1.0, 0.5).unwrap();
    let cfg = PlmcConfig::new(0.2, 10, 20_000, Some(0.5));
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| plmc_solve(&d, &cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, plmc_solve(&d, &cfg).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn returned_slope_matches_target_mass(seed in 0u64..10_000, beta1 in -0.5f64..1.0) {
        let h = 0.2;
        let mut ens = PathEnsemble::new(5000, seed);
        let c1 = 1.0 + beta1 * h;
        ens.extend(1.0, c1, h);
        let k = 0.5 * ens.crossing_mass(0.0, c1, h);
        let out = plmc_step_n(&ens, c1, beta1, k, h, 0.95, 1e-10).unwrap();
        prop_assert!((ens.crossing_mass(out.beta, c1, h) - k).abs() <= 1e-10);
    }

    #[test]
    fn crossing_estimate_nonincreasing(seed in 0u64..10_000, lo in -20.0f64..20.0, steps in proptest::collection::vec(0.0f64..2.0, 1..30)) {
        let mut ens = PathEnsemble::new(3000, seed);
        ens.extend(1.0, 0.9, 0.1);
        let mut beta = lo;
        let mut prev = ens.crossing_mass(beta, 0.9, 0.1);
        for s in steps {
            beta += s;
            let v = ens.crossing_mass(beta, 0.9, 0.1);
            prop_assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn continuity_and_determinism(seed in 0u64..10_000) {
        let d = FptDensity::linear_boundary(1.0, 0.3).unwrap();
        let mut cfg = PlmcConfig::new(0.1, 8, 2000, Some(1.0));
        cfg.seed = seed;
        let r = plmc_solve(&d, &cfg).unwrap();
        let t = r.boundary.times();
        for n in 1..r.slopes.len() {
            let rhs = r.intercepts[n - 1] + (r.slopes[n - 1] - r.slopes[n]) * t[n];
            prop_assert!((r.intercepts[n] - rhs).abs() <= 1e-12);
        }
        for (ci, b) in r.ci.iter().zip(&r.slopes) {
            prop_assert!(ci.0 <= *b && *b <= ci.1);
        }
        prop_assert_eq!(r, plmc_solve(&d, &cfg).unwrap());
    }
}
