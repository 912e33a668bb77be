use ifpt_core::bench::max_error_after;
use ifpt_core::boundaries::{Boundary, DanielsBoundary, LinearBoundary};
use ifpt_core::densities::FptDensity;
use ifpt_core::numerics::{survival, uniform_grid};
use ifpt_core::vie::{vie_first_knot, vie_residual, vie_solve, Scheme, VieConfig};
use proptest::prelude::*;

/// The discretized equation at knot `i`, written out term by term.
fn residual_by_hand(d: &FptDensity, h: f64, scheme: Scheme, b0: f64, b: &[f64], i: usize) -> f64 {
    let t = |j: usize| (j + 1) as f64 * h;
    let f = |j: usize| d.eval(t(j)).unwrap();
    let ti = t(i);
    let mut g = survival(b[i] / ti.sqrt());
    for j in 0..i {
        g -= h * survival((b[i] - b[j]) / (ti - t(j)).sqrt()) * f(j);
    }
    match scheme {
        Scheme::Euler => g -= 0.5 * h * f(i),
        Scheme::Trapezoid => {
            g -= 0.25 * h * f(i);
            let f0 = d.value_at_zero();
            if f0 > 0.0 {
                g -= 0.5 * h * survival((b[i] - b0) / ti.sqrt()) * f0;
            }
        }
    }
    g
}

#[test]
fn residual_matches_written_out_equation() {
    let cases = [
        (FptDensity::daniels(1.0, 0.5, 0.5).unwrap(), Scheme::Euler, None),
        (FptDensity::daniels(1.0, 1.0, 0.5).unwrap(), Scheme::Trapezoid, None),
        (FptDensity::exponential(1.0).unwrap(), Scheme::Trapezoid, Some(0.05)),
    ];
    for (d, scheme, b0) in cases {
        let mut cfg = VieConfig::new(0.02, 40, scheme);
        cfg.b0 = b0;
        let r = vie_solve(&d, &cfg).unwrap();
        for i in 0..cfg.n {
            let lib = vie_residual(&d, &cfg, &r.b_star, i).unwrap();
            let hand = residual_by_hand(&d, cfg.h, scheme, b0.unwrap_or(0.0), &r.b_star, i);
            assert!((lib - hand).abs() < 1e-13, "{scheme:?} knot {i}: {lib} vs {hand}");
        }
    }
}

#[test]
fn first_knot_for_unit_exponential() {
    let t1 = 0.01f64;
    let p = t1 * (-t1).exp() / 2.0;
    let b = vie_first_knot((-t1).exp(), t1).unwrap();
    assert!((survival(b / t1.sqrt()) - p).abs() < 1e-12);
    assert!((b - 0.2577).abs() < 5e-4);
    assert_eq!(vie_first_knot(100.0, 0.01).unwrap(), 0.0);
    assert!(vie_first_knot(240.0, 0.01).is_err());
}

#[test]
fn daniels_second_parameter_set() {
    let db = DanielsBoundary::new(1.0, 1.0, 0.5).unwrap();
    let r = vie_solve(&FptDensity::Daniels(db), &VieConfig::new(0.01, 200, Scheme::Euler)).unwrap();
    let sigma = r
        .grid
        .iter()
        .zip(&r.b_star)
        .map(|(t, b)| (db.eval(*t).unwrap() - b).powi(2))
        .sum::<f64>()
        / 200.0;
    assert!(sigma > 4.6e-5 / 3.0 && sigma < 4.6e-5 * 3.0, "σ = {sigma}");
}

#[test]
fn linear_target_halving_ratio() {
    let d = FptDensity::linear_boundary(1.0, 0.3).unwrap();
    let truth = Boundary::Linear(LinearBoundary::new(1.0, 0.3).unwrap());
    let err = |h: f64| {
        let n = (1.0 / h).round() as usize;
        let r = vie_solve(&d, &VieConfig::new(h, n, Scheme::Euler)).unwrap();
        max_error_after(&truth, &r.grid, &r.b_star, 0.5).unwrap()
    };
    let ratio = err(0.01) / err(0.005);
    assert!((1.5..=2.8).contains(&ratio), "ratio {ratio}");
}

#[test]
fn flux_correction_lifts_early_knots() {
    let d = FptDensity::exponential(1.0).unwrap();
    let mut cfg = VieConfig::new(0.01, 100, Scheme::Euler);
    let plain = vie_solve(&d, &cfg).unwrap();
    cfg.flux_correction_knots = 2;
    let corrected = vie_solve(&d, &cfg).unwrap();
    assert!(corrected.b_star[0] > plain.b_star[0] && corrected.b_star[1] > plain.b_star[1]);
    assert_eq!(corrected.corrected_knots, 2);
    // knots after the corrected ones still satisfy the discretized equation
    for i in 2..cfg.n {
        assert!(corrected.residuals[i].abs() <= cfg.root_tol);
    }
    cfg.flux_correction_knots = 5;
    assert!(vie_solve(&d, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residual_contract(h in 0.005f64..0.05, beta in 0.2f64..1.0, trapezoid in proptest::bool::ANY) {
        let d = FptDensity::daniels(1.0, beta, 0.5).unwrap();
        let scheme = if trapezoid { Scheme::Trapezoid } else { Scheme::Euler };
        let cfg = VieConfig::new(h, (1.5 / h) as usize, scheme);
        let r = vie_solve(&d, &cfg).unwrap();
        for (i, g) in r.residuals.iter().enumerate() {
            prop_assert!(g.abs() <= cfg.root_tol);
            prop_assert!(vie_residual(&d, &cfg, &r.b_star, i).unwrap().abs() <= cfg.root_tol);
        }
    }

    #[test]
    fn knots_depend_only_on_earlier_knots(n in 2usize..60, cut in 1usize..60) {
        let cut = cut.min(n);
        let d = FptDensity::daniels(1.0, 0.5, 0.5).unwrap();
        let full = vie_solve(&d, &VieConfig::new(0.02, n, Scheme::Euler)).unwrap();
        let head = vie_solve(&d, &VieConfig::new(0.02, cut, Scheme::Euler)).unwrap();
        prop_assert_eq!(&full.b_star[..cut], &head.b_star[..]);
        prop_assert_eq!(&full.grid[..cut], &uniform_grid(0.02, cut)[..]);
    }
}
