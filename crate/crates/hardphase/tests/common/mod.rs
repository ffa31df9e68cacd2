#![allow(dead_code)]
use hardphase::basis_ball::{project, BasisSet, Discretization};
use hardphase::geometry::LagrangianMap;
use hardphase::state::{FieldState, Ladder};
use hardphase::weak_forms::Assembler;
use nalgebra::DVector;
use std::sync::OnceLock;

pub fn disc() -> &'static Discretization {
    static D: OnceLock<Discretization> = OnceLock::new();
    D.get_or_init(|| Discretization::with_degree(5).unwrap())
}

pub fn asm() -> &'static Assembler {
    static A: OnceLock<Assembler> = OnceLock::new();
    A.get_or_init(|| Assembler::new(disc()))
}

/// L2 projection of a closed-form function.
pub fn proj(basis: &BasisSet, f: impl Fn([f64; 3]) -> f64) -> DVector<f64> {
    let v: Vec<f64> = basis.vol.nodes.iter().map(|p| f(*p)).collect();
    project(&v, basis)
}

pub fn r2(y: [f64; 3]) -> f64 {
    y[0] * y[0] + y[1] * y[1] + y[2] * y[2]
}

/// Fluid at rest with Theta = (c, 0, 0, 0), Lambda = 0 and Sigma = c^4 + A (1 - r^2).
pub fn rest_state(c: f64, a: f64, depth: usize) -> FieldState {
    let d = disc();
    let m1 = d.h1.m;
    let ladder = |v: DVector<f64>| Ladder::from_derivs(depth, &[v]);
    FieldState {
        t: 0.0,
        theta: [
            ladder(proj(&d.h1, |_| c)),
            Ladder::zeros(depth, m1),
            Ladder::zeros(depth, m1),
            Ladder::zeros(depth, m1),
        ],
        lambda: Ladder::zeros(depth, d.h10.m),
        sigma: proj(&d.h1, |y| c.powi(4) + a * (1.0 - r2(y))),
        map: LagrangianMap::identity(&d.h1),
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
