mod common;

use common::*;
use hardphase::iteration::*;
use hardphase::sigma_thermo::Floors;
use hardphase::Error;
use nalgebra::DVector;
use proptest::prelude::*;

fn params(depth: usize, t_final: f64) -> SolverParams {
    SolverParams { dt: 1e-3, t_final, depth, c_cfl: 1.0, tol: 1e-8, max_iter: 20 }
}

fn radial_data(depth: usize) -> DataLadder {
    compatible_data(disc(), asm(), &DataFamily::radial(1.0, 0.1), depth).unwrap()
}

#[test]
fn zeroth_iterate_is_linear_in_time() {
    let mut data = radial_data(1);
    let p = params(1, 0.01);
    let b = zeroth_iterate(disc(), asm(), &data, &p).unwrap();
    assert_eq!(b.index, 0);
    assert_eq!(b.states.len(), 11);
    for nu in 0..4 {
        assert_eq!(b.states[0].theta[nu].coeff[0], data.theta[0][nu]);
        let mid = &b.states[5];
        let want = &data.theta[0][nu] + &data.theta[1][nu] * mid.t;
        assert!((&mid.theta[nu].coeff[0] - want).amax() < 1e-15);
    }
    // no rate: Theta frozen
    for nu in 0..4 {
        data.theta[1][nu] = DVector::zeros(disc().h1.m);
    }
    let b = zeroth_iterate(disc(), asm(), &data, &p).unwrap();
    for s in &b.states {
        for nu in 0..4 {
            assert_eq!(s.theta[nu].coeff[0], data.theta[0][nu]);
        }
    }
}

#[test]
fn loose_tolerance_converges_at_once() {
    let data = radial_data(1);
    let p = SolverParams { tol: 1e3, ..params(1, 0.005) };
    let (b, rep) = run_until_converged(disc(), asm(), &data, &p, |_, _| {}).unwrap();
    assert!(rep.converged);
    assert_eq!(rep.iterations, 1);
    assert_eq!(b.index, 1);
}

#[test]
fn zero_iterations_returns_zeroth_iterate() {
    let data = radial_data(1);
    let p = SolverParams { max_iter: 0, ..params(1, 0.005) };
    let (b, rep) = run_until_converged(disc(), asm(), &data, &p, |_, _| {}).unwrap();
    assert!(!rep.converged);
    assert_eq!(rep.iterations, 0);
    assert_eq!(b.index, 0);
    let bad = SolverParams { tol: 0.0, ..p };
    assert!(matches!(run_until_converged(disc(), asm(), &data, &bad, |_, _| {}), Err(Error::Config(_))));
}

#[test]
fn degenerate_amplitude_rejected() {
    let r = compatible_data(disc(), asm(), &DataFamily::radial(1.0, 0.0), 1);
    assert!(matches!(r, Err(Error::TaylorSign(_))));
    let mut f = DataFamily::radial(1.0, 0.1);
    f.psi_hessian[0][1] = 0.2;
    assert!(matches!(f.validate(), Err(Error::Config(_))));
    assert!(DataFamily::radial(-1.0, 0.1).validate().is_err());
}

#[test]
fn step_count_validation() {
    assert_eq!(params(1, 0.1).steps().unwrap(), 100);
    assert!(params(1, 0.0105).steps().is_err());
    assert!(params(1, 0.002).steps().is_err());
    assert!(SolverParams { dt: -1.0, ..params(1, 0.1) }.steps().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn data_satisfies_the_mass_shell(
        c in 0.5f64..4.0,
        a in 0.01f64..1.0,
        q in -0.5f64..0.5,
        l in prop::array::uniform3(-0.3f64..0.3),
        h in prop::array::uniform3(-0.3f64..0.3),
        y in prop::array::uniform3(-0.57f64..0.57),
        radial in any::<bool>(),
    ) {
        let mut f = DataFamily { c, amplitude: a, q_amp: q, psi_linear: l, psi_hessian: [[0.0; 3]; 3] };
        for i in 0..3 {
            f.psi_hessian[i][i] = h[i];
        }
        if radial {
            f.psi_linear = [0.0; 3];
            f.psi_hessian = [[0.0; 3]; 3];
        }
        let p = f.point_data(&y);
        let v = p.theta0;
        let shell = v[0] * v[0] - v[1] * v[1] - v[2] * v[2] - v[3] * v[3];
        prop_assert!((shell - p.sigma2).abs() <= 1e-12 * p.sigma2);
        prop_assert!(p.sigma2 >= c.powi(4) - 1e-12);
        if radial {
            prop_assert!(v[1] == 0.0 && v[2] == 0.0 && v[3] == 0.0);
            prop_assert!((v[0] - p.sigma2.sqrt()).abs() < 1e-14 * v[0]);
        }
    }

    #[test]
    fn cubic_lagrange_reproduces_cubics(s in -1.0f64..4.0, c in prop::array::uniform4(-2.0f64..2.0)) {
        let w = lagrange4(s);
        let f = |x: f64| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
        let interp: f64 = (0..4).map(|i| w[i] * f(i as f64)).sum();
        prop_assert!((interp - f(s)).abs() < 1e-11);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }
}

#[test]
fn data_traces_match_closed_form() {
    // the level-1 rate absorbs the boundary datum theta~_1 = tr theta_1
    let d = disc();
    let fam = DataFamily::radial(1.0, 0.1);
    let data = radial_data(2);
    assert_eq!(data.depth(), 2);
    for nu in 0..4 {
        let tr0 = d.h1.trace(&data.theta[0][nu]);
        let tr1 = d.h1.trace(&data.theta[1][nu]);
        for (p, y) in d.h1.bnd.nodes.iter().enumerate() {
            let pd = fam.point_data(y);
            // level 0 is a plain L2 projection of sqrt(sigma_0^2)
            assert!((tr0[p] - pd.theta0[nu]).abs() < 1e-5, "level 0 nu {nu}");
            assert!((tr1[p] - pd.theta1[nu]).abs() < 1e-6, "level 1 nu {nu}");
        }
    }
    // the Lambda ladder vanishes on the boundary at every level
    for l in &data.lambda {
        assert!(d.h10.trace(l).amax() < 1e-12);
    }
}

#[test]
fn picard_converges_and_keeps_data() {
    let d = disc();
    let data = radial_data(1);
    let p = params(1, 0.02);
    let mut firsts = Vec::new();
    let (b, rep) = run_until_converged(d, asm(), &data, &p, |b, _| firsts.push(b.states[0].clone())).unwrap();
    assert!(rep.converged, "{rep:?}");
    assert!(rep.c.windows(2).skip(1).all(|w| w[1] < w[0]));
    let t0 = data.truncated_state(1);
    for s in &firsts {
        for nu in 0..4 {
            for k in 0..=1 {
                assert!((&s.theta[nu].coeff[k] - &t0.theta[nu].coeff[k]).amax() < 1e-10);
            }
        }
        assert!((&s.sigma - &t0.sigma).amax() < 1e-10);
    }
    // no monitor floor is crossed
    let floors = Floors::default();
    for m in b.monitors() {
        assert!(m.min_abar > floors.a0 && m.min_theta0 > floors.theta0 && m.min_velocity_ratio > floors.velocity_ratio);
    }
    // one more Picard step stays within twice the tolerance
    let again = picard_step(d, asm(), &b, &data, &p).unwrap();
    assert!(consecutive_difference(d, &again, &b) <= 2.0 * p.tol);
    // ladder consistency of the converged iterate
    for s in &b.states {
        for nu in 0..4 {
            assert!(s.theta[nu].consistency() < 1e-6, "{}", s.theta[nu].consistency());
        }
    }
}
