//! Quadrature on the unit ball and sphere, and polynomial Galerkin bases.
//!
//! Volume rules are Gauss–Legendre in the radius (with the r^2 Jacobian folded
//! into the weights) times a product rule on the sphere: Gauss–Legendre in
//! cos(theta) and the uniform trapezoid rule in phi. Bases are built from
//! Cartesian monomials of bounded total degree and orthonormalized by the
//! generalized symmetric eigenproblem (stiffness, mass), so the returned modes
//! are L2-orthonormal and H1-orthogonal. The H1_0 family multiplies the raw
//! monomials by the bubble 1 - r^2.
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const MAX_QUAD_ORDER: usize = 80;

/// Index of the (a, b) entry in the packed symmetric layout xx, xy, xz, yy, yz, zz.
pub const fn hidx(a: usize, b: usize) -> usize {
    let (i, j) = if a <= b { (a, b) } else { (b, a) };
    match (i, j) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadKind {
    Volume,
    Boundary,
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub order: usize,
    pub kind: QuadKind,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([f64; 3]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(p, w)| w * f(*p)).sum()
    }

    /// Weighted sum of nodal values.
    pub fn sum(&self, vals: &[f64]) -> f64 {
        vals.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] (Golub–Welsch), nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Symmetrize to remove eigensolver asymmetry in the last bits.
    let mut x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let xm = 0.5 * (x[j] - x[i]);
        let wm = 0.5 * (w[i] + w[j]);
        x[i] = -xm;
        x[j] = xm;
        w[i] = wm;
        w[j] = wm;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn sphere_product(order: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let nt = order / 2 + 1;
    let np = order + 1;
    let (z, wz) = gauss_legendre(nt);
    let mut nodes = Vec::with_capacity(nt * np);
    let mut weights = Vec::with_capacity(nt * np);
    for (zi, wi) in z.iter().zip(&wz) {
        let s = (1.0 - zi * zi).max(0.0).sqrt();
        for k in 0..np {
            let phi = 2.0 * PI * (k as f64 + 0.5) / np as f64;
            nodes.push([s * phi.cos(), s * phi.sin(), *zi]);
            weights.push(wi * 2.0 * PI / np as f64);
        }
    }
    (nodes, weights)
}

pub fn build_boundary_quadrature(order: usize) -> Result<QuadratureRule> {
    if order < 1 {
        return Err(Error::Invalid("quadrature order must be at least 1".into()));
    }
    if order > MAX_QUAD_ORDER {
        return Err(Error::QuadOrder(order, MAX_QUAD_ORDER));
    }
    let (nodes, weights) = sphere_product(order);
    Ok(QuadratureRule { nodes, weights, order, kind: QuadKind::Boundary })
}

pub fn build_volume_quadrature(order: usize) -> Result<QuadratureRule> {
    if order < 1 {
        return Err(Error::Invalid("quadrature order must be at least 1".into()));
    }
    if order > MAX_QUAD_ORDER {
        return Err(Error::QuadOrder(order, MAX_QUAD_ORDER));
    }
    // radial integrand r^{order+2}
    let nr = (order + 3).div_ceil(2);
    let (x, wx) = gauss_legendre(nr);
    let (sn, sw) = sphere_product(order);
    let mut nodes = Vec::with_capacity(nr * sn.len());
    let mut weights = Vec::with_capacity(nr * sn.len());
    for (xi, wi) in x.iter().zip(&wx) {
        let r = 0.5 * (xi + 1.0);
        let wr = 0.5 * wi * r * r;
        for (p, w) in sn.iter().zip(&sw) {
            nodes.push([r * p[0], r * p[1], r * p[2]]);
            weights.push(wr * w);
        }
    }
    Ok(QuadratureRule { nodes, weights, order, kind: QuadKind::Volume })
}

/// Exponent triples of total degree at most `d`, ordered by degree then lexicographically.
pub fn monomials(d: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for tot in 0..=d {
        for a in (0..=tot).rev() {
            for b in (0..=tot - a).rev() {
                out.push([a, b, tot - a - b]);
            }
        }
    }
    out
}

pub fn poly_dim(d: usize) -> usize {
    (d + 1) * (d + 2) * (d + 3) / 6
}

fn ipow(x: f64, k: usize) -> f64 {
    let mut r = 1.0;
    for _ in 0..k {
        r *= x;
    }
    r
}

/// Value, gradient and packed Hessian of x^a y^b z^c at p.
fn monomial_jet(e: [usize; 3], p: [f64; 3]) -> (f64, [f64; 3], [f64; 6]) {
    let pw = |i: usize, k: isize| -> f64 {
        if k < 0 {
            0.0
        } else {
            ipow(p[i], k as usize)
        }
    };
    let ex = [e[0] as isize, e[1] as isize, e[2] as isize];
    let f = |d: [isize; 3]| -> f64 {
        let mut c = 1.0;
        for i in 0..3 {
            for j in 0..d[i] {
                c *= (ex[i] - j) as f64;
            }
        }
        if c == 0.0 {
            return 0.0;
        }
        c * pw(0, ex[0] - d[0]) * pw(1, ex[1] - d[1]) * pw(2, ex[2] - d[2])
    };
    let v = f([0, 0, 0]);
    let g = [f([1, 0, 0]), f([0, 1, 0]), f([0, 0, 1])];
    let h = [
        f([2, 0, 0]),
        f([1, 1, 0]),
        f([1, 0, 1]),
        f([0, 2, 0]),
        f([0, 1, 1]),
        f([0, 0, 2]),
    ];
    (v, g, h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    NeumannH1,
    DirichletH10,
}

/// Nodal tables of a set of functions at a point set.
#[derive(Clone, Debug)]
pub struct NodeTable {
    pub values: DMatrix<f64>,
    pub grads: [DMatrix<f64>; 3],
    pub hess: [DMatrix<f64>; 6],
}

impl NodeTable {
    pub fn nodes(&self) -> usize {
        self.values.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct BasisSet {
    pub m: usize,
    pub degree: usize,
    pub family: BasisFamily,
    pub exps: Vec<[usize; 3]>,
    /// raw function -> mode coefficients (raw x m)
    pub coef: DMatrix<f64>,
    pub vol: QuadratureRule,
    pub bnd: QuadratureRule,
    pub at_vol: NodeTable,
    pub at_bnd: NodeTable,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub boundary_gram: DMatrix<f64>,
    /// eigenvalues of the generalized problem, ascending
    pub eigenvalues: Vec<f64>,
}

fn raw_table(exps: &[[usize; 3]], family: BasisFamily, pts: &[[f64; 3]]) -> NodeTable {
    let n = pts.len();
    let r = exps.len();
    let mut values = DMatrix::zeros(n, r);
    let mut grads = [DMatrix::zeros(n, r), DMatrix::zeros(n, r), DMatrix::zeros(n, r)];
    let mut hess: [DMatrix<f64>; 6] = std::array::from_fn(|_| DMatrix::zeros(n, r));
    for (i, p) in pts.iter().enumerate() {
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        for (j, e) in exps.iter().enumerate() {
            let (v, g, h) = monomial_jet(*e, *p);
            match family {
                BasisFamily::NeumannH1 => {
                    values[(i, j)] = v;
                    for a in 0..3 {
                        grads[a][(i, j)] = g[a];
                    }
                    for k in 0..6 {
                        hess[k][(i, j)] = h[k];
                    }
                }
                BasisFamily::DirichletH10 => {
                    // (1 - r^2) * m
                    let b = 1.0 - r2;
                    values[(i, j)] = b * v;
                    for a in 0..3 {
                        grads[a][(i, j)] = b * g[a] - 2.0 * p[a] * v;
                    }
                    for a in 0..3 {
                        for c in a..3 {
                            let k = hidx(a, c);
                            let delta = if a == c { 1.0 } else { 0.0 };
                            hess[k][(i, j)] = b * h[k] - 2.0 * p[a] * g[c] - 2.0 * p[c] * g[a]
                                - 2.0 * delta * v;
                        }
                    }
                }
            }
        }
    }
    NodeTable { values, grads, hess }
}

fn weighted_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut bw = b.clone();
    for (i, wi) in w.iter().enumerate() {
        bw.row_mut(i).scale_mut(*wi);
    }
    a.transpose() * bw
}

fn apply_coef(t: &NodeTable, c: &DMatrix<f64>) -> NodeTable {
    NodeTable {
        values: &t.values * c,
        grads: std::array::from_fn(|a| &t.grads[a] * c),
        hess: std::array::from_fn(|k| &t.hess[k] * c),
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    m.scale_mut(0.5);
}

/// Builds the first `m` modes of the given family on polynomials of total degree `degree`.
///
/// For the Dirichlet family the raw space is (1 - r^2) times polynomials of degree
/// `degree - 2`, so both families live in the same polynomial space.
pub fn build_basis(
    m: usize,
    degree: usize,
    family: BasisFamily,
    vol: &QuadratureRule,
    bnd: &QuadratureRule,
) -> Result<BasisSet> {
    let inner = match family {
        BasisFamily::NeumannH1 => degree,
        BasisFamily::DirichletH10 => {
            if degree < 2 {
                return Err(Error::Invalid("dirichlet basis needs degree >= 2".into()));
            }
            degree - 2
        }
    };
    let exps = monomials(inner);
    let dim = exps.len();
    if m == 0 || m > dim {
        return Err(Error::Invalid(format!("m = {m} outside 1..={dim} for this space")));
    }
    if 2 * degree > vol.order {
        return Err(Error::Invalid(format!(
            "volume quadrature order {} cannot integrate degree-{degree} products",
            vol.order
        )));
    }
    let raw_v = raw_table(&exps, family, &vol.nodes);
    let raw_b = raw_table(&exps, family, &bnd.nodes);

    let mut mass = weighted_gram(&raw_v.values, &raw_v.values, &vol.weights);
    let mut stiff = DMatrix::zeros(dim, dim);
    for a in 0..3 {
        stiff += weighted_gram(&raw_v.grads[a], &raw_v.grads[a], &vol.weights);
    }
    symmetrize(&mut mass);
    symmetrize(&mut stiff);

    let ev = SymmetricEigen::new(mass.clone()).eigenvalues;
    let (mn, mx) = ev.iter().fold((f64::MAX, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    if mn <= 1e-13 * mx {
        return Err(Error::SingularMass(mn / mx));
    }
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMass(mn / mx))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Solve("triangular inverse of mass factor".into()))?;
    let mut a = &linv * &stiff * linv.transpose();
    symmetrize(&mut a);
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap()
            .then(i.cmp(&j))
    });
    let mut q = DMatrix::zeros(dim, m);
    let mut lams = Vec::with_capacity(m);
    for (col, &i) in order.iter().take(m).enumerate() {
        let mut v = eig.eigenvectors.column(i).clone_owned();
        // deterministic sign: largest-magnitude entry positive
        let (imax, _) = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (k, x)| if x.abs() > bv + 1e-12 { (k, x.abs()) } else { (bi, bv) });
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        q.set_column(col, &v);
        lams.push(eig.eigenvalues[i].max(0.0));
    }
    let coef = linv.transpose() * q;
    let at_vol = apply_coef(&raw_v, &coef);
    let at_bnd = apply_coef(&raw_b, &coef);

    let mut mass_m = weighted_gram(&at_vol.values, &at_vol.values, &vol.weights);
    let mut stiff_m = DMatrix::zeros(m, m);
    for a in 0..3 {
        stiff_m += weighted_gram(&at_vol.grads[a], &at_vol.grads[a], &vol.weights);
    }
    symmetrize(&mut mass_m);
    symmetrize(&mut stiff_m);
    let mut bg = weighted_gram(&at_bnd.values, &at_bnd.values, &bnd.weights);
    symmetrize(&mut bg);
    Ok(BasisSet {
        m,
        degree,
        family,
        exps,
        coef,
        vol: vol.clone(),
        bnd: bnd.clone(),
        at_vol,
        at_bnd,
        mass: mass_m,
        stiffness: stiff_m,
        boundary_gram: bg,
        eigenvalues: lams,
    })
}

impl BasisSet {
    /// Tables of the modes at arbitrary points.
    pub fn table_at(&self, pts: &[[f64; 3]]) -> NodeTable {
        apply_coef(&raw_table(&self.exps, self.family, pts), &self.coef)
    }

    pub fn max_stiffness_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(0.0, f64::max)
    }

    /// Nodal values at volume nodes of the field with coefficients `c`.
    pub fn reconstruct(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.at_vol.values * c
    }

    pub fn trace(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.at_bnd.values * c
    }
}

/// Weighted boundary Gram matrix <weight tr e_i, tr e_j>.
pub fn boundary_gram(basis: &BasisSet, weight: &[f64]) -> Result<DMatrix<f64>> {
    if weight.len() != basis.bnd.len() {
        return Err(Error::Invalid("weight length does not match boundary nodes".into()));
    }
    if let Some(w) = weight.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::TaylorSign(format!("nonpositive boundary weight {w:e}")));
    }
    let w: Vec<f64> = weight.iter().zip(&basis.bnd.weights).map(|(a, b)| a * b).collect();
    let mut g = weighted_gram(&basis.at_bnd.values, &basis.at_bnd.values, &w);
    symmetrize(&mut g);
    Ok(g)
}

/// L2 projection of nodal values at volume nodes onto the (orthonormal) basis.
pub fn project(f: &[f64], basis: &BasisSet) -> DVector<f64> {
    let fw = DVector::from_iterator(f.len(), f.iter().zip(&basis.vol.weights).map(|(a, b)| a * b));
    basis.at_vol.values.tr_mul(&fw)
}

/// Pairing <f, tr e_l> of boundary nodal values with the mode traces.
pub fn pair_boundary(f: &[f64], basis: &BasisSet) -> DVector<f64> {
    let fw = DVector::from_iterator(f.len(), f.iter().zip(&basis.bnd.weights).map(|(a, b)| a * b));
    basis.at_bnd.values.tr_mul(&fw)
}

/// Default volume order for a basis of total degree `d`.
pub fn default_volume_order(d: usize) -> usize {
    2 * d + 4
}

/// Volume and boundary rules plus both bases for one resolution.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub h1: BasisSet,
    pub h10: BasisSet,
    /// exact embedding of H1_0 coefficients into H1 coefficients
    pub embed: DMatrix<f64>,
}

impl Discretization {
    pub fn new(degree: usize, vol_order: usize, bnd_order: usize) -> Result<Self> {
        let vol = build_volume_quadrature(vol_order)?;
        let bnd = build_boundary_quadrature(bnd_order)?;
        let h1 = build_basis(poly_dim(degree), degree, BasisFamily::NeumannH1, &vol, &bnd)?;
        let h10 = build_basis(poly_dim(degree - 2), degree, BasisFamily::DirichletH10, &vol, &bnd)?;
        let embed = weighted_gram(&h1.at_vol.values, &h10.at_vol.values, &h1.vol.weights);
        Ok(Discretization { h1, h10, embed })
    }

    pub fn with_degree(degree: usize) -> Result<Self> {
        let o = default_volume_order(degree);
        Self::new(degree, o, o)
    }

    /// Matrix T with T[i][j] = <d_j, e_i>: Dirichlet coefficients to H1 coefficients.
    pub fn h10_to_h1(&self) -> DMatrix<f64> {
        self.embed.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_degree_2n_minus_1() {
        let (x, w) = gauss_legendre(6);
        for k in 0..12 {
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn monomial_count() {
        assert_eq!(monomials(5).len(), 56);
        assert_eq!(poly_dim(3), 20);
    }

    #[test]
    fn bubble_hessian_matches_finite_difference() {
        let exps = vec![[1, 0, 1]];
        let p = [0.3, -0.2, 0.4];
        let t = raw_table(&exps, BasisFamily::DirichletH10, &[p]);
        let h = 1e-5;
        let mut pp = p;
        pp[0] += h;
        let tp = raw_table(&exps, BasisFamily::DirichletH10, &[pp]);
        let mut pm = p;
        pm[0] -= h;
        let tm = raw_table(&exps, BasisFamily::DirichletH10, &[pm]);
        let fd = (tp.grads[2][(0, 0)] - tm.grads[2][(0, 0)]) / (2.0 * h);
        assert!((fd - t.hess[hidx(0, 2)][(0, 0)]).abs() < 1e-8);
    }
}
