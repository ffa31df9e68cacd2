//! Dirichlet wave equation for Lambda and its weak normal derivative.
//!
//! The H1_0 basis is orthonormal, so the Galerkin mass matrix is the identity and
//! the acceleration is the right-hand side itself.
use crate::basis_ball::{BasisSet, Discretization};
use crate::error::{Error, Result};
use crate::state::FieldState;
use crate::theta_solver::commuted_source;
use crate::weak_forms::{assemble_volume_form, source_series, NodeJets, Snapshot, Stacked, VolCoeff};
use nalgebra::DVector;

/// Acceleration of Lambda level k under frozen forms; `lev(i)` gives Lambda_i.
pub fn level_accel(snap: &Snapshot, k: usize, lev: &dyn Fn(usize) -> DVector<f64>) -> DVector<f64> {
    let f0 = &snap.forms[0];
    let mut a = snap.lambda_src[k].clone() - &f0.lb * lev(k) - &f0.lc * lev(k + 1);
    if let Some(s) = commuted_source(k, &snap.forms, false, true, lev) {
        a += s;
    }
    a
}

/// S(Theta, Sigma) at the volume nodes, at the state's time.
pub fn source_s(disc: &Discretization, state: &FieldState) -> Result<Vec<f64>> {
    let jets = NodeJets::new(state, 2, &disc.h1.at_vol, &disc.h10.at_vol);
    (0..disc.h1.vol.len())
        .map(|p| {
            let ng = jets.geom(p)?;
            Ok(source_series(&ng, &jets.theta_at(p), &jets.sigma[p]).c[0])
        })
        .collect()
}

/// Weak normal derivative N of Lambda at the boundary nodes, defined by
/// `oint v N = <Lambda'', v> + B(Lambda, v) + C(Lambda', v) + <S, v>` for all H1 test functions v.
///
/// `x`, `v`, `a` are the H1_0 coefficients of Lambda and its first two time
/// derivatives, `b`/`c` the pointwise form coefficients and `s` the source at volume nodes.
/// The trace Gram of the H1 basis is singular (traces of degree-d polynomials span
/// a smaller space), so the system is solved in the least-squares sense.
#[allow(clippy::too_many_arguments)]
pub fn weak_normal_derivative(
    h1: &BasisSet,
    h10: &BasisSet,
    x: &DVector<f64>,
    v: &DVector<f64>,
    a: &DVector<f64>,
    b: &[VolCoeff],
    c: &[VolCoeff],
    s: &[f64],
) -> Result<Vec<f64>> {
    let st = Stacked::new(&h1.at_vol);
    let w = &h1.vol.weights;
    let (bf, bv) = assemble_volume_form(&st, &h10.at_vol, w, b);
    let (cf, cv) = assemble_volume_form(&st, &h10.at_vol, w, c);
    let acc = &h10.at_vol.values * a;
    let ws: Vec<f64> = (0..w.len()).map(|q| w[q] * (acc[q] + s[q])).collect();
    let r = st.val_t.clone() * DVector::from_vec(ws) + (bf + bv) * x + (cf + cv) * v;
    let svd = h1.boundary_gram.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    let n = svd.solve(&r, tol).map_err(|e| Error::Solve(e.to_string()))?;
    Ok((&h1.at_bnd.values * n).iter().copied().collect())
}

/// Radial derivative of the reconstructed Lambda at the boundary nodes.
pub fn gradient_trace(h10: &BasisSet, x: &DVector<f64>) -> Vec<f64> {
    let g: [DVector<f64>; 3] = std::array::from_fn(|a| &h10.at_bnd.grads[a] * x);
    h10.bnd
        .nodes
        .iter()
        .enumerate()
        .map(|(q, y)| y[0] * g[0][q] + y[1] * g[1][q] + y[2] * g[2][q])
        .collect()
}

/// (L2 norm, flat gradient L2 norm) of a Lambda level.
pub fn norms(h10: &BasisSet, x: &DVector<f64>) -> (f64, f64) {
    (x.norm(), x.dot(&(&h10.stiffness * x)).max(0.0).sqrt())
}
