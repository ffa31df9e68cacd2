//! Sigma transport, hard-phase thermodynamics and the Taylor-sign monitor.
use crate::basis_ball::{project, Discretization};
use crate::error::{Error, Result};
use crate::state::FieldState;
use crate::theta_solver::rk4_step;
use crate::weak_forms::{boundary_series, NodeJets};
use nalgebra::DVector;
use serde::Serialize;

/// p = (sigma^2 - c^4) / 2
pub fn pressure(sigma2: f64, c: f64) -> f64 {
    0.5 * (sigma2 - c.powi(4))
}

/// rho = (sigma^2 + c^4) / 2
pub fn density(sigma2: f64, c: f64) -> f64 {
    0.5 * (sigma2 + c.powi(4))
}

/// Non-relativistic enthalpy h = sigma - c^2.
pub fn enthalpy_h(sigma: f64, c: f64) -> f64 {
    sigma - c * c
}

/// H1 coefficients of d_t Sigma = Lambda / Theta^0. The quotient vanishes on the
/// boundary, so it is projected onto H1_0 and embedded, which keeps tr Sigma fixed.
pub fn sigma_rate(disc: &Discretization, lambda: &DVector<f64>, theta0: &DVector<f64>) -> Result<DVector<f64>> {
    let l = disc.h10.reconstruct(lambda);
    let t0 = disc.h1.reconstruct(theta0);
    if t0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NotFutureDirected);
    }
    let r: Vec<f64> = l.iter().zip(t0.iter()).map(|(a, b)| a / b).collect();
    Ok(&disc.embed * project(&r, &disc.h10))
}

/// One RK4 step of the Sigma transport with Lambda and Theta^0 given as functions of time.
pub fn update_sigma(
    disc: &Discretization,
    sigma: &DVector<f64>,
    lambda: &dyn Fn(f64) -> DVector<f64>,
    theta0: &dyn Fn(f64) -> DVector<f64>,
    t: f64,
    dt: f64,
) -> Result<DVector<f64>> {
    rk4_step(sigma, t, dt, |s, _, _| sigma_rate(disc, &lambda(s), &theta0(s)))
}

/// max |tr Sigma - c^4| over the boundary nodes.
pub fn boundary_drift(disc: &Discretization, sigma: &DVector<f64>, c: f64) -> f64 {
    let c4 = c.powi(4);
    disc.h1.trace(sigma).iter().fold(0.0, |m, v| m.max((v - c4).abs()))
}

/// Lower bounds the monitored quantities must respect.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Floors {
    pub a0: f64,
    pub theta0: f64,
    pub velocity_ratio: f64,
}

impl Default for Floors {
    fn default() -> Self {
        Floors { a0: 1e-6, theta0: 1e-6, velocity_ratio: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TaylorReport {
    pub min_abar: f64,
    pub min_theta0: f64,
    /// infinite at rest; serialized as null
    pub min_velocity_ratio: f64,
    pub flagged: bool,
}

/// Monitored infima of abar on the boundary, Theta^0 and (Theta^0)^2 / |Theta|^2 in the volume.
pub fn taylor_sign_monitor(disc: &Discretization, state: &FieldState, floors: &Floors) -> Result<TaylorReport> {
    let bj = NodeJets::new(state, 2, &disc.h1.at_bnd, &disc.h10.at_bnd);
    let mut min_abar = f64::INFINITY;
    for (p, y) in disc.h1.bnd.nodes.iter().enumerate() {
        let ng = bj.geom(p)?;
        let a = match boundary_series(&ng, y, &bj.theta_at(p), &bj.lambda[p], &bj.sigma[p]) {
            Ok(bs) => bs.abar.c[0],
            Err(Error::TaylorSign(_)) => 0.0,
            Err(e) => return Err(e),
        };
        min_abar = min_abar.min(a);
    }
    let th: [DVector<f64>; 4] = std::array::from_fn(|nu| disc.h1.reconstruct(&state.theta[nu].coeff[0]));
    let mut min_theta0 = f64::INFINITY;
    let mut min_ratio = f64::INFINITY;
    for q in 0..th[0].len() {
        let t0 = th[0][q];
        min_theta0 = min_theta0.min(t0);
        let v2: f64 = (1..4).map(|i| th[i][q] * th[i][q]).sum();
        if v2 > 0.0 {
            min_ratio = min_ratio.min(t0 * t0 / v2);
        }
    }
    let flagged = !(min_abar > floors.a0 && min_theta0 > floors.theta0 && min_ratio > floors.velocity_ratio);
    Ok(TaylorReport { min_abar, min_theta0, min_velocity_ratio: min_ratio, flagged })
}
