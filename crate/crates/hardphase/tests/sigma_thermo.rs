mod common;

use common::*;
use hardphase::iteration::{compatible_data, run_until_converged, DataFamily, SolverParams};
use hardphase::sigma_thermo::*;
use nalgebra::DVector;
use proptest::prelude::*;

#[test]
fn thermodynamic_examples() {
    assert_eq!(pressure(1.0, 1.0), 0.0);
    assert_eq!(pressure(16.0, 2.0), 0.0);
    assert!((pressure(2.0, 1.0) - 0.5).abs() < 1e-15);
    assert!((density(2.0, 1.0) - 1.5).abs() < 1e-15);
    assert_eq!(enthalpy_h(4.0, 2.0), 0.0);
}

proptest! {
    #[test]
    fn thermodynamic_identities(c in 0.1f64..10.0, h in -0.5f64..5.0) {
        let sigma = c * c + h;
        let s2 = sigma * sigma;
        let c4 = c.powi(4);
        prop_assert!((density(s2, c) - pressure(s2, c) - c4).abs() <= 1e-14 * c4.max(s2));
        prop_assert!((density(s2, c) + pressure(s2, c) - s2).abs() <= 1e-14 * c4.max(s2));
        let hh = enthalpy_h(sigma, c);
        prop_assert!((c4 + 2.0 * c * c * hh + hh * hh - s2).abs() <= 1e-13 * c4.max(s2));
    }
}

#[test]
fn transport_examples() {
    let d = disc();
    let sigma = proj(&d.h1, |y| 1.0 + 0.3 * (1.0 - r2(y)));
    let one = proj(&d.h1, |_| 1.0);
    let zero = DVector::zeros(d.h10.m);
    let s = update_sigma(d, &sigma, &|_| zero.clone(), &|_| one.clone(), 0.0, 0.1).unwrap();
    assert_eq!(s, sigma);
    // Lambda = l0 (1 - r^2), Theta^0 = 1: linear growth
    let l0 = 0.7;
    let lam = proj(&d.h10, |y| l0 * (1.0 - r2(y)));
    let mut s = sigma.clone();
    for n in 0..10 {
        s = update_sigma(d, &s, &|_| lam.clone(), &|_| one.clone(), n as f64 * 0.05, 0.05).unwrap();
    }
    let want = proj(&d.h1, |y| 1.0 + 0.3 * (1.0 - r2(y)) + 0.5 * l0 * (1.0 - r2(y)));
    assert!((&s - want).amax() < 1e-12);
    assert!(boundary_drift(d, &s, 1.0) < 1e-12);
    let bad = proj(&d.h1, |y| y[0]);
    assert!(matches!(sigma_rate(d, &lam, &bad), Err(hardphase::Error::NotFutureDirected)));
}

#[test]
fn monitor_examples() {
    let d = disc();
    let floors = Floors::default();
    let rep = taylor_sign_monitor(d, &rest_state(1.0, 0.25, 1), &floors).unwrap();
    assert!((rep.min_abar - 0.5).abs() < 1e-10);
    assert!(!rep.flagged);
    let rep = taylor_sign_monitor(d, &rest_state(1.0, 0.0, 1), &floors).unwrap();
    assert!(rep.min_abar < 1e-12);
    assert!(rep.flagged);
    let rep = taylor_sign_monitor(d, &rest_state(3.0, 0.5, 1), &floors).unwrap();
    assert!((rep.min_theta0 - 3.0).abs() < 1e-10);
    assert!(rep.min_velocity_ratio.is_infinite());
    let json = serde_json::to_value(rep).unwrap();
    assert!(json["min_velocity_ratio"].is_null());
}

#[test]
fn solver_run_keeps_the_boundary_value() {
    let d = disc();
    for c in [1.0, 2.0] {
        let data = compatible_data(d, asm(), &DataFamily::radial(c, 0.1 * c.powi(4)), 1).unwrap();
        let p = SolverParams { dt: 1e-3, t_final: 0.01, depth: 1, c_cfl: 1.0, tol: 1e-8, max_iter: 20 };
        let (b, _) = run_until_converged(d, asm(), &data, &p, |_, _| {}).unwrap();
        let drift = b.states.iter().map(|s| boundary_drift(d, &s.sigma, c)).fold(0.0, f64::max);
        assert!(drift <= 1e-8 * c.powi(4), "c = {c}: {drift:e}");
        let lam: f64 = b.states.iter().map(|s| d.h10.trace(&s.lambda.coeff[0]).amax()).fold(0.0, f64::max);
        assert!(lam <= 1e-12);
    }
}
