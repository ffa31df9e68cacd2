mod common;
use common::*;
use hardphase::error::Error;
use hardphase::iteration::{compatible_data, DataFamily, SolverParams};
use hardphase::newtonian::*;
use hardphase::state::Ladder;
use proptest::prelude::*;

fn bar() -> DataFamily {
    DataFamily {
        psi_hessian: [[0.3, 0.0, 0.0], [0.0, -0.3, 0.0], [0.0, 0.0, 0.0]],
        ..DataFamily::radial(1.0, 0.06)
    }
}

#[test]
fn rescale_examples() {
    for c in [0.5, 1.0, 3.0] {
        let (v, s) = rescale([c, 0.0, 0.0, 0.0], c.powi(4), c);
        assert_eq!(v, [1.0, 0.0, 0.0, 0.0]);
        assert!(s.abs() <= 1e-15 * c.powi(2));
    }
    let (_, s) = rescale([0.0; 4], 17.0, 2.0);
    assert!(close(s, 0.25, 1e-15));
}

proptest! {
    #[test]
    fn rescale_round_trip(v in prop::array::uniform4(-10.0f64..10.0), s in 0.0f64..100.0, c in 0.1f64..20.0) {
        let (vb, sb) = rescale(v, s, c);
        let (v2, s2) = unrescale(vb, sb, c);
        for i in 0..4 {
            prop_assert!((v2[i] - v[i]).abs() <= 1e-12 * (1.0 + v[i].abs()));
        }
        prop_assert!((s2 - s).abs() <= 1e-12 * (1.0 + s.abs() + c.powi(4)));
    }

    #[test]
    fn loglog_slope_recovers_power_laws(a in 0.1f64..10.0, p in -3.0f64..3.0) {
        let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|x| (*x, a * x.powf(p))).collect();
        let got = loglog_slope(&pts).unwrap();
        prop_assert!((got - p).abs() <= 1e-12);
    }
}

#[test]
fn loglog_slope_needs_two_points() {
    assert_eq!(loglog_slope(&[]), None);
    assert_eq!(loglog_slope(&[(1.0, 2.0)]), None);
    assert_eq!(loglog_slope(&[(1.0, 2.0), (1.0, 3.0)]), None);
    assert_eq!(loglog_slope(&[(1.0, 2.0), (2.0, 0.0)]), None);
}

#[test]
fn family_at_scales_amplitude_and_potential() {
    let f = family_at(&bar(), 4.0);
    assert_eq!(f.c, 4.0);
    assert!(close(f.amplitude, 0.96, 1e-15));
    assert!(close(f.psi_hessian[0][0], 1.2, 1e-15));
}

#[test]
fn rest_state_is_static() {
    for c in [1.0, 2.0] {
        let st = rest_state(c, 0.1 * c * c, 1);
        let (v, _) = newtonian_fields(disc(), &st, c).unwrap();
        for comp in &v {
            assert!(comp.iter().all(|x| x.abs() <= 1e-12));
        }
        let r = newtonian_residual(disc(), &st, c).unwrap();
        assert!(r.boundary_h <= 1e-9 * c * c, "{r:?}");
        assert!(r.divergence <= 1e-12 && r.curl <= 1e-12);
    }
}

#[test]
fn velocity_is_c_times_ratio() {
    let d = disc();
    let c = 3.0;
    let mut st = rest_state(2.0, 0.0, 1);
    st.theta[1] = Ladder::from_derivs(1, &[proj(&d.h1, |_| 1.0)]);
    let (v, _) = newtonian_fields(d, &st, c).unwrap();
    assert!(v[0].iter().all(|x| close(*x, c / 2.0, 1e-12)));
    assert!(v[1].iter().all(|x| x.abs() <= 1e-12));
}

#[test]
fn enthalpy_example() {
    let c = 2.0;
    let mut st = rest_state(c, 0.0, 1);
    st.sigma = proj(&disc().h1, |_| c.powi(4) + 0.2 * c * c + 0.01);
    let (_, h) = newtonian_fields(disc(), &st, c).unwrap();
    assert!(h.iter().all(|x| close(*x, 0.1, 1e-12)));
}

#[test]
fn nonpositive_theta0_is_rejected() {
    let st = rest_state(0.0, 0.0, 1);
    assert!(matches!(newtonian_fields(disc(), &st, 1.0), Err(Error::NotFutureDirected)));
}

#[test]
fn initial_energy_is_quadratic_in_amplitude() {
    let energy = |l: f64| {
        let fam = DataFamily {
            amplitude: l * 0.1,
            psi_hessian: bar().psi_hessian.map(|r| r.map(|x| x * l)),
            ..DataFamily::radial(1.0, 0.1)
        };
        let data = compatible_data(disc(), asm(), &fam, 1).unwrap();
        renormalized_initial_energy(disc(), &data.truncated_state(1), 1.0, 1).unwrap()
    };
    let (e1, e2) = (energy(1e-3), energy(2e-3));
    assert!(e1 > 0.0);
    assert!(close(e2 / e1, 4.0, 4e-2), "{}", e2 / e1);
}

#[test]
fn newtonian_curl_decays_with_c() {
    // V is curl free; v = c V^i / V^0 picks up O(c^-2) vorticity from grad V^0
    let curl = |c: f64| {
        let data = compatible_data(disc(), asm(), &family_at(&bar(), c), 1).unwrap();
        newtonian_residual(disc(), &data.truncated_state(1), c).unwrap().curl
    };
    let (a, b) = (curl(4.0), curl(8.0));
    assert!(close(a / b, 4.0, 0.4), "{a} {b}");
    let data = compatible_data(disc(), asm(), &DataFamily::radial(1.0, 0.1), 1).unwrap();
    assert!(newtonian_residual(disc(), &data.truncated_state(1), 1.0).unwrap().curl <= 1e-9);
}

#[test]
fn axis_slice_spans_the_diameter() {
    let s = axis_slice(disc(), &rest_state(1.0, 0.1, 1), 1.0);
    assert_eq!(s.s.len(), SLICE_POINTS);
    assert_eq!((s.s[0], s.s[SLICE_POINTS - 1]), (-1.0, 1.0));
    assert!(close(s.h[SLICE_POINTS / 2], (1.1f64).sqrt() - 1.0, 1e-9));
    assert!(s.h[0].abs() <= 1e-9);
}

#[test]
fn single_speed_sweep_has_no_slope() {
    let p = SolverParams { dt: 1e-3, t_final: 0.0, depth: 1, c_cfl: 1.0, tol: 1e-8, max_iter: 20 };
    let sw = limit_sweep(disc(), asm(), &bar(), &[1.0], 0.004, 2, &p).unwrap();
    assert!(sw.differences.is_empty());
    assert_eq!(sw.slope_v, None);
    assert_eq!(sw.slope_h, None);
    assert_eq!(sw.slope_v0, None);
    assert_eq!(sw.runs.len(), 1);
    assert!(sw.runs[0].error.is_none(), "{:?}", sw.runs[0].error);
    assert_eq!(sw.runs[0].residuals.len(), 2);
}

#[test]
fn sweep_rejects_bad_input() {
    let p = SolverParams { dt: 1e-3, t_final: 0.0, depth: 1, c_cfl: 1.0, tol: 1e-8, max_iter: 20 };
    assert!(matches!(limit_sweep(disc(), asm(), &bar(), &[], 0.002, 2, &p), Err(Error::Config(_))));
    assert!(matches!(limit_sweep(disc(), asm(), &bar(), &[-1.0], 0.002, 2, &p), Err(Error::Config(_))));
    assert!(matches!(limit_sweep(disc(), asm(), &bar(), &[1.0], 0.0015, 1, &p), Err(Error::Config(_))));
    assert!(matches!(limit_sweep(disc(), asm(), &bar(), &[1.0], 0.002, 0, &p), Err(Error::Config(_))));
}
