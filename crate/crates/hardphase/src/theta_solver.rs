//! Galerkin ODE for the commuted velocity ladder.
//!
//! Level k satisfies
//! (I + G) Theta_k'' + B Theta_k + C Theta_k' = b^{(k)} + F_k,
//! where F_k collects the time derivatives of the forms acting on lower levels
//! (see [`crate::weak_forms::commutator_terms`]). The own-level rate enters F_k
//! through the G' term, so each level only needs its own state and the levels below.
use crate::basis_ball::{project, BasisSet};
use crate::error::{Error, Result};
use crate::weak_forms::{commutator_terms, FormSet, Snapshot};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Initial position and rate coefficients of one level.
///
/// The rate solves (I + G~) x = <theta_{k+1}, e> + <theta~_{k+1}, tr e> with the
/// unweighted trace Gram G~.
pub fn project_initial_data(
    theta_k: &[f64],
    theta_k1: &[f64],
    theta_tilde_k1: &[f64],
    basis: &BasisSet,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let pos = project(theta_k, basis);
    let rhs = project(theta_k1, basis) + crate::basis_ball::pair_boundary(theta_tilde_k1, basis);
    let sys = &basis.mass + &basis.boundary_gram;
    let ch = Cholesky::new(sys).ok_or_else(|| Error::Solve("I + G~ not positive definite".into()))?;
    Ok((pos, ch.solve(&rhs)))
}

/// Applies the commuted source F_k: `lev(i)` returns the coefficient vector of Theta_i.
pub fn commuted_source(
    k: usize,
    forms: &[FormSet],
    with_g: bool,
    lambda_forms: bool,
    lev: &dyn Fn(usize) -> DVector<f64>,
) -> Option<DVector<f64>> {
    let mut acc: Option<DVector<f64>> = None;
    for (w, j, i) in commutator_terms(k) {
        let f = &forms[j];
        let (b, c) = if lambda_forms { (&f.lb, &f.lc) } else { (&f.b, &f.c) };
        let mut t = b * lev(i) + c * lev(i + 1);
        if with_g {
            t += &f.g * lev(i + 2);
        }
        t *= w;
        match acc.as_mut() {
            Some(a) => *a += t,
            None => acc = Some(t),
        }
    }
    acc
}

/// System matrix I + G and right-hand side of level k.
pub fn assemble_ode(
    snap: &Snapshot,
    k: usize,
    nu: usize,
    lev: &dyn Fn(usize) -> DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let f0 = &snap.forms[0];
    let m = f0.b.nrows();
    let sys = DMatrix::identity(m, m) + &f0.g;
    let mut rhs = snap.theta_src[k][nu].clone() - &f0.b * lev(k) - &f0.c * lev(k + 1);
    if let Some(s) = commuted_source(k, &snap.forms, true, false, lev) {
        rhs += s;
    }
    (sys, rhs)
}

pub type Chol = Cholesky<f64, Dyn>;

pub fn factor_system(snap: &Snapshot) -> Result<Chol> {
    let f0 = &snap.forms[0];
    let m = f0.b.nrows();
    Cholesky::new(DMatrix::identity(m, m) + &f0.g).ok_or_else(|| Error::Solve("I + G not positive definite".into()))
}

/// Acceleration of level k given the system factorization.
pub fn level_accel(chol: &Chol, snap: &Snapshot, k: usize, nu: usize, lev: &dyn Fn(usize) -> DVector<f64>) -> DVector<f64> {
    let (_, rhs) = assemble_ode(snap, k, nu, lev);
    chol.solve(&rhs)
}

/// Largest stable step for the configured CFL constant.
pub fn cfl_limit(basis: &BasisSet, c_cfl: f64) -> f64 {
    c_cfl / basis.max_stiffness_eigenvalue().sqrt()
}

pub fn check_cfl(dt: f64, basis: &BasisSet, c_cfl: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Invalid("dt must be positive".into()));
    }
    let lim = cfl_limit(basis, c_cfl);
    if dt > lim {
        return Err(Error::Cfl(format!("dt = {dt} exceeds {lim:.6e}")));
    }
    Ok(())
}

/// 1/2 (v^T (I + G) v + x^T Bf x) with Bf the symmetric g^{ab} part of B.
pub fn discrete_energy(x: &DVector<f64>, v: &DVector<f64>, g: &DMatrix<f64>, bf: &DMatrix<f64>) -> f64 {
    0.5 * (v.dot(v) + v.dot(&(g * v)) + x.dot(&(bf * x)))
}

/// Time derivative of [`discrete_energy`] along the ODE, from the frozen forms and their first derivatives.
pub fn energy_rate(x: &DVector<f64>, v: &DVector<f64>, a: &DVector<f64>, f0: &FormSet, f1: &FormSet) -> f64 {
    let m = x.len();
    let sys = DMatrix::identity(m, m) + &f0.g;
    v.dot(&(&sys * a)) + 0.5 * v.dot(&(&f1.g * v)) + x.dot(&(&f0.bf * v)) + 0.5 * x.dot(&(&f1.bf * x))
}

/// One RK4 step of a general first-order system.
pub fn rk4_step<F>(y: &DVector<f64>, t: f64, dt: f64, mut rhs: F) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>, usize) -> Result<DVector<f64>>,
{
    let k1 = rhs(t, y, 0)?;
    let k2 = rhs(t + 0.5 * dt, &(y + &k1 * (0.5 * dt)), 1)?;
    let k3 = rhs(t + 0.5 * dt, &(y + &k2 * (0.5 * dt)), 1)?;
    let k4 = rhs(t + dt, &(y + &k3 * dt), 2)?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Flat-coefficient single-level oscillator (I + G) x'' + B x + C x' = b, used for
/// the energy identity and for stand-alone tests.
#[derive(Clone, Debug)]
pub struct LinearWave {
    pub sys: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub src: DVector<f64>,
    chol: Chol,
}

impl LinearWave {
    pub fn new(g: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, src: DVector<f64>) -> Result<Self> {
        let m = b.nrows();
        let sys = DMatrix::identity(m, m) + g;
        let chol = Cholesky::new(sys.clone()).ok_or_else(|| Error::Solve("I + G not positive definite".into()))?;
        Ok(LinearWave { sys, b, c, src, chol })
    }

    pub fn accel(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&(&self.src - &self.b * x - &self.c * v))
    }

    pub fn step(&self, x: &DVector<f64>, v: &DVector<f64>, dt: f64) -> (DVector<f64>, DVector<f64>) {
        let m = x.len();
        let mut y = DVector::zeros(2 * m);
        y.rows_mut(0, m).copy_from(x);
        y.rows_mut(m, m).copy_from(v);
        let out = rk4_step(&y, 0.0, dt, |_, z, _| {
            let xs = z.rows(0, m).into_owned();
            let vs = z.rows(m, m).into_owned();
            let a = self.accel(&xs, &vs);
            let mut d = DVector::zeros(2 * m);
            d.rows_mut(0, m).copy_from(&vs);
            d.rows_mut(m, m).copy_from(&a);
            Ok(d)
        })
        .expect("linear rhs is infallible");
        (out.rows(0, m).into_owned(), out.rows(m, m).into_owned())
    }

    pub fn energy(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        0.5 * (v.dot(&(&self.sys * v)) + x.dot(&(&self.b * x)))
    }

    /// dE/dt = v^T (b - C v) + 1/2 x^T (B - B^T) v for frozen coefficients.
    pub fn energy_rate(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let skew = 0.5 * (x.dot(&(&self.b * v)) - v.dot(&(&self.b * x)));
        v.dot(&self.src) - v.dot(&(&self.c * v)) + skew
    }
}

/// Per-step residual |E_{n+1} - E_n - int rate dt|, with the rate integrated by Simpson's
/// rule on a cubic Hermite midpoint.
pub fn energy_identity_residual(w: &LinearWave, traj: &[(DVector<f64>, DVector<f64>)], dt: f64) -> Vec<f64> {
    traj.windows(2)
        .map(|p| {
            let (x0, v0) = &p[0];
            let (x1, v1) = &p[1];
            let a0 = w.accel(x0, v0);
            let a1 = w.accel(x1, v1);
            let xm = (x0 + x1) * 0.5 + (v0 - v1) * (dt / 8.0);
            let vm = (v0 + v1) * 0.5 + (&a0 - &a1) * (dt / 8.0);
            let integral = dt / 6.0 * (w.energy_rate(x0, v0) + 4.0 * w.energy_rate(&xm, &vm) + w.energy_rate(x1, v1));
            (w.energy(x1, v1) - w.energy(x0, v0) - integral).abs()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exact_on_cubic() {
        // y' = 3t^2 integrates exactly
        let y0 = DVector::from_vec(vec![1.0]);
        let y = rk4_step(&y0, 0.5, 0.3, |t, _, _| Ok(DVector::from_vec(vec![3.0 * t * t]))).unwrap();
        assert!((y[0] - (1.0 + 0.8f64.powi(3) - 0.5f64.powi(3))).abs() < 1e-14);
    }
}
