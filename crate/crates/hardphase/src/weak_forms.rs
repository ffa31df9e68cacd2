//! Weak forms on the Galerkin bases.
//!
//! Volume forms are assembled as `T^T Y` where `T` stacks the test-function
//! gradients and values at the quadrature nodes and `Y` the weighted trial side,
//! so each form costs one matrix product. Snapshots carry the j-th time
//! derivatives of every form, which the commuted ladder needs.
use crate::basis_ball::{BasisSet, Discretization, NodeTable};
use crate::error::{Error, Result};
use crate::geometry::{jets_from_ladder, MapJet, NodeGeom};
use crate::par;
use crate::series::{binomial, factorial, SJet, Ser};
use crate::state::FieldState;
use nalgebra::{DMatrix, DVector};

/// Pointwise coefficients of a volume form
/// `sum_q w [A^{ab} d_b u d_a v + beta^a d_a u v + phi^a u d_a v + s u v]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct VolCoeff {
    pub a: [[f64; 3]; 3],
    pub beta: [f64; 3],
    pub phi: [f64; 3],
    pub s: f64,
}

/// Stacked test-side tables of one basis.
#[derive(Clone, Debug)]
pub struct Stacked {
    /// m x 3nq: transposed gradients
    pub grad_t: DMatrix<f64>,
    /// m x nq: transposed values
    pub val_t: DMatrix<f64>,
}

impl Stacked {
    pub fn new(table: &NodeTable) -> Self {
        let nq = table.nodes();
        let m = table.values.ncols();
        let mut grad_t = DMatrix::zeros(m, 3 * nq);
        for a in 0..3 {
            grad_t.columns_mut(a * nq, nq).copy_from(&table.grads[a].transpose());
        }
        Stacked { grad_t, val_t: table.values.transpose() }
    }
}

/// Splits a volume form into its flux part (A, phi) and its zeroth-order-test part (beta, s).
pub fn assemble_volume_form(
    st: &Stacked,
    table: &NodeTable,
    weights: &[f64],
    coeffs: &[VolCoeff],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let nq = table.nodes();
    let m = table.values.ncols();
    let mut yg = DMatrix::zeros(3 * nq, m);
    let mut yv = DMatrix::zeros(nq, m);
    for q in 0..nq {
        let c = &coeffs[q];
        let w = weights[q];
        for k in 0..m {
            let g = [table.grads[0][(q, k)], table.grads[1][(q, k)], table.grads[2][(q, k)]];
            let e = table.values[(q, k)];
            for a in 0..3 {
                let v = c.a[a][0] * g[0] + c.a[a][1] * g[1] + c.a[a][2] * g[2] + c.phi[a] * e;
                yg[(a * nq + q, k)] = w * v;
            }
            yv[(q, k)] = w * (c.beta[0] * g[0] + c.beta[1] * g[1] + c.beta[2] * g[2] + c.s * e);
        }
    }
    (&st.grad_t * yg, &st.val_t * yv)
}

/// `sum_q w coef tr e_i tr e_k` over boundary nodes.
pub fn boundary_mass(table: &NodeTable, weights: &[f64], coef: &[f64]) -> DMatrix<f64> {
    let mut ew = table.values.clone();
    for (q, (w, c)) in weights.iter().zip(coef).enumerate() {
        ew.row_mut(q).scale_mut(w * c);
    }
    let mut g = table.values.transpose() * ew;
    let t = g.transpose();
    g += t;
    g.scale_mut(0.5);
    g
}

/// Boundary-augmented mass matrix: identity plus the trace Gram weighted by 1/gamma.
pub fn assemble_phi(basis: &BasisSet, gamma: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(g) = gamma.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::TaylorSign(format!("gamma = {g:e} on the boundary")));
    }
    let inv: Vec<f64> = gamma.iter().map(|g| 1.0 / g).collect();
    Ok(&basis.mass + crate::basis_ball::boundary_gram(basis, &inv)?)
}

/// Metric data entering the bilinear forms at volume and boundary nodes.
#[derive(Clone, Debug)]
pub struct FormInputs {
    /// g^{ab}
    pub gab: Vec<[[f64; 3]; 3]>,
    /// g^{ta}
    pub gta: Vec<[f64; 3]>,
    /// (d_t, d_1, d_2, d_3) log|g|
    pub dlog: Vec<[f64; 4]>,
    /// d_t g^{ta}
    pub dt_gta: Vec<[f64; 3]>,
    /// d_a g^{ta}
    pub div_gta: Vec<f64>,
    /// g^{tr} at boundary nodes
    pub gtr: Vec<f64>,
    /// (1/gamma)' and (1/gamma)'' at boundary nodes
    pub dinvgamma: Vec<f64>,
    pub ddinvgamma: Vec<f64>,
}

impl FormInputs {
    /// Static Euclidean metric with constant gamma.
    pub fn euclidean(nv: usize, nb: usize) -> Self {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        FormInputs {
            gab: vec![id; nv],
            gta: vec![[0.0; 3]; nv],
            dlog: vec![[0.0; 4]; nv],
            dt_gta: vec![[0.0; 3]; nv],
            div_gta: vec![0.0; nv],
            gtr: vec![0.0; nb],
            dinvgamma: vec![0.0; nb],
            ddinvgamma: vec![0.0; nb],
        }
    }

    pub fn b_coeffs(&self) -> Vec<VolCoeff> {
        (0..self.gab.len())
            .map(|q| {
                let mut c = VolCoeff { a: self.gab[q], ..Default::default() };
                for a in 0..3 {
                    let pa = self.gta[q][a] * self.dlog[q][0]
                        + (0..3).map(|b| self.gab[q][a][b] * self.dlog[q][b + 1]).sum::<f64>();
                    c.beta[a] = -0.5 * pa - self.dt_gta[q][a];
                }
                c
            })
            .collect()
    }

    pub fn c_coeffs(&self) -> Vec<VolCoeff> {
        (0..self.gab.len())
            .map(|q| {
                let pt = -self.dlog[q][0] + (0..3).map(|b| self.gta[q][b] * self.dlog[q][b + 1]).sum::<f64>();
                VolCoeff {
                    phi: [2.0 * self.gta[q][0], 2.0 * self.gta[q][1], 2.0 * self.gta[q][2]],
                    s: -0.5 * pt + self.div_gta[q],
                    ..Default::default()
                }
            })
            .collect()
    }
}

/// Matrices of the forms B, C, D, E and the Phi map at one time.
#[derive(Clone, Debug)]
pub struct BilinearOps {
    pub phi: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
}

pub fn assemble_bcde(basis: &BasisSet, inp: &FormInputs, gamma: &[f64]) -> Result<BilinearOps> {
    let st = Stacked::new(&basis.at_vol);
    let (bf, bv) = assemble_volume_form(&st, &basis.at_vol, &basis.vol.weights, &inp.b_coeffs());
    let (cf, cv) = assemble_volume_form(&st, &basis.at_vol, &basis.vol.weights, &inp.c_coeffs());
    let dcoef: Vec<f64> = inp.gtr.iter().zip(&inp.dinvgamma).map(|(g, d)| -g - 2.0 * d).collect();
    let ecoef: Vec<f64> = inp.ddinvgamma.iter().map(|d| -d).collect();
    Ok(BilinearOps {
        phi: assemble_phi(basis, gamma)?,
        b: bf + bv,
        c: cf + cv,
        d: boundary_mass(&basis.at_bnd, &basis.bnd.weights, &dcoef),
        e: boundary_mass(&basis.at_bnd, &basis.bnd.weights, &ecoef),
    })
}

/// Terms `(weight, j, i)` of the commuted source F_k, each standing for
/// `weight * Op^{(j)}(Theta_i)` with `Op^{(j)}(Theta_i) = G^{(j)} Theta_{i+2} + B^{(j)} Theta_i + C^{(j)} Theta_{i+1}`.
/// Built by the recursion F_k = d_t F_{k-1} - Op^{(1)}(Theta_{k-1}).
pub fn commutator_terms(k: usize) -> Vec<(f64, usize, usize)> {
    let mut terms: Vec<(f64, usize, usize)> = Vec::new();
    for level in 1..=k {
        let mut next: Vec<(f64, usize, usize)> = Vec::new();
        for &(w, j, i) in &terms {
            next.push((w, j + 1, i));
            next.push((w, j, i + 1));
        }
        next.push((-1.0, 1, level - 1));
        terms = merge_terms(next);
    }
    terms
}

fn merge_terms(mut t: Vec<(f64, usize, usize)>) -> Vec<(f64, usize, usize)> {
    t.sort_by_key(|x| (x.1, x.2));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for x in t {
        match out.last_mut() {
            Some(l) if l.1 == x.1 && l.2 == x.2 => l.0 += x.0,
            _ => out.push(x),
        }
    }
    out.retain(|x| x.0 != 0.0);
    out
}

/// Closed form of the same source: -sum_{j=1}^k binom(k, j) Op^{(j)}(Theta_{k-j}).
pub fn commutator_terms_explicit(k: usize) -> Vec<(f64, usize, usize)> {
    (1..=k).map(|j| (-binomial(k, j), j, k - j)).collect()
}

/// Forms of derivative order j at one time.
#[derive(Clone, Debug)]
pub struct FormSet {
    /// Theta forms on the H1 basis: B, its flux part, C + D (g^{tr} part), boundary G
    pub b: DMatrix<f64>,
    pub bf: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// Lambda forms on the H1_0 basis
    pub lb: DMatrix<f64>,
    pub lc: DMatrix<f64>,
}

impl FormSet {
    fn lerp(sets: &[&FormSet], w: &[f64]) -> FormSet {
        let comb = |f: &dyn Fn(&FormSet) -> &DMatrix<f64>| {
            let mut acc = f(sets[0]) * w[0];
            for (s, wi) in sets.iter().zip(w).skip(1) {
                acc += f(s) * *wi;
            }
            acc
        };
        FormSet {
            b: comb(&|s| &s.b),
            bf: comb(&|s| &s.bf),
            c: comb(&|s| &s.c),
            g: comb(&|s| &s.g),
            lb: comb(&|s| &s.lb),
            lc: comb(&|s| &s.lc),
        }
    }
}

/// Monitored infima at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct Monitor {
    pub min_abar: f64,
    pub min_theta0: f64,
    /// min (Theta^0)^2 / sum (Theta^i)^2; infinite at rest
    pub min_velocity_ratio: f64,
    pub min_gamma: f64,
}

/// Frozen coefficients at one grid time: forms for j = 0..=K and the level sources.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub forms: Vec<FormSet>,
    /// boundary source pairing <(gamma_w^{-1} f^nu)^{(k)}, tr e> per level
    pub theta_src: Vec<[DVector<f64>; 4]>,
    /// -<S^{(k)}, d> per level
    pub lambda_src: Vec<DVector<f64>>,
    pub monitor: Monitor,
}

impl Snapshot {
    pub fn depth(&self) -> usize {
        self.forms.len() - 1
    }

    /// Weighted combination of snapshots (used for Lagrange interpolation in time).
    pub fn combine(snaps: &[&Snapshot], w: &[f64], t: f64) -> Snapshot {
        let depth = snaps.iter().map(|s| s.depth()).min().unwrap();
        let forms = (0..=depth)
            .map(|j| {
                let sets: Vec<&FormSet> = snaps.iter().map(|s| &s.forms[j]).collect();
                FormSet::lerp(&sets, w)
            })
            .collect();
        let vec_comb = |f: &dyn Fn(&Snapshot) -> &DVector<f64>| {
            let mut acc = f(snaps[0]) * w[0];
            for (s, wi) in snaps.iter().zip(w).skip(1) {
                acc += f(s) * *wi;
            }
            acc
        };
        let theta_src = (0..=depth)
            .map(|k| std::array::from_fn(|nu| vec_comb(&|s| &s.theta_src[k][nu])))
            .collect();
        let lambda_src = (0..=depth).map(|k| vec_comb(&|s| &s.lambda_src[k])).collect();
        Snapshot { t, forms, theta_src, lambda_src, monitor: snaps[0].monitor }
    }
}

/// Immutable per-resolution data used by every snapshot assembly.
#[derive(Clone, Debug)]
pub struct Assembler {
    pub h1_st: Stacked,
    pub h10_st: Stacked,
}

impl Assembler {
    pub fn new(disc: &Discretization) -> Self {
        Assembler { h1_st: Stacked::new(&disc.h1.at_vol), h10_st: Stacked::new(&disc.h10.at_vol) }
    }
}

/// Per-node outputs at volume nodes: form coefficients per derivative order and S series.
struct VolOut {
    b: Vec<VolCoeff>,
    c: Vec<VolCoeff>,
    s: Ser,
    theta0: f64,
    ratio: f64,
}

struct BndOut {
    gw: Vec<f64>,
    gtr: Vec<f64>,
    src: [Ser; 4],
    abar: f64,
    gamma: f64,
}

/// Eulerian first derivatives of a field given by its value series and spatial gradient series.
pub fn euler1(ng: &NodeGeom, v: &Ser, g: &[Ser; 3]) -> [Ser; 4] {
    let mut d0 = v.dt();
    for a in 0..3 {
        d0 -= ng.u[a] * g[a];
    }
    let d: [Ser; 3] = std::array::from_fn(|i| {
        let mut s = ng.k[0][i] * g[0];
        s += ng.k[1][i] * g[1];
        s += ng.k[2][i] * g[2];
        s
    });
    [d0, d[0], d[1], d[2]]
}

/// Eulerian first derivatives of a jet together with their spatial gradients.
pub fn euler2(ng: &NodeGeom, f: &SJet) -> [(Ser, [Ser; 3]); 4] {
    let d = euler1(ng, &f.v, &f.g);
    let g0: [Ser; 3] = std::array::from_fn(|c| {
        let mut s = f.g[c].dt();
        for a in 0..3 {
            s -= ng.du[c][a] * f.g[a] + ng.u[a] * f.h[a][c];
        }
        s
    });
    let gi = |i: usize| -> [Ser; 3] {
        std::array::from_fn(|c| {
            let mut s = ng.dk[c][0][i] * f.g[0];
            for a in 0..3 {
                if a > 0 {
                    s += ng.dk[c][a][i] * f.g[a];
                }
                s += ng.k[a][i] * f.h[a][c];
            }
            s
        })
    };
    [(d[0], g0), (d[1], gi(0)), (d[2], gi(1)), (d[3], gi(2))]
}

const ETA: [f64; 4] = [-1.0, 1.0, 1.0, 1.0];

/// The Lambda source S(Theta, Sigma) as a time series at one node.
pub fn source_series(ng: &NodeGeom, theta: &[SJet; 4], sigma: &SJet) -> Ser {
    let dth: [[Ser; 4]; 4] = std::array::from_fn(|nu| ng.eulerian_grad(&theta[nu]));
    let e = euler2(ng, sigma);
    let de: [[Ser; 4]; 4] = std::array::from_fn(|nu| euler1(ng, &e[nu].0, &e[nu].1));
    let n = dth[0][0].n.min(de[0][0].n);
    let mut s = Ser::zero(n);
    for l in 0..4 {
        for nu in 0..4 {
            s += (dth[nu][l] * de[nu][l]) * (4.0 * ETA[l]);
        }
    }
    for l in 0..4 {
        for nu in 0..4 {
            for mu in 0..4 {
                s += (dth[nu][l] * dth[mu][l] * dth[mu][nu]) * (4.0 * ETA[l] * ETA[mu]);
            }
        }
    }
    s
}

/// Sigma jet: value, gradient and Hessian at the current time, advanced by d_t Sigma = Lambda / Theta^0.
pub fn sigma_jet(s0: &(f64, [f64; 3], [[f64; 3]; 3]), lambda: &SJet, theta0: &SJet) -> SJet {
    lambda.div(theta0).integral(s0.0, s0.1, s0.2)
}

fn sigma_nodes(table: &NodeTable, c: &DVector<f64>) -> Vec<(f64, [f64; 3], [[f64; 3]; 3])> {
    let v = &table.values * c;
    let g: [DVector<f64>; 3] = std::array::from_fn(|a| &table.grads[a] * c);
    let h: [DVector<f64>; 6] = std::array::from_fn(|k| &table.hess[k] * c);
    (0..table.nodes())
        .map(|p| {
            let hm = std::array::from_fn(|a| std::array::from_fn(|b| h[crate::basis_ball::hidx(a, b)][p]));
            (v[p], [g[0][p], g[1][p], g[2][p]], hm)
        })
        .collect()
}

/// Per-node input jets at one node set.
pub struct NodeJets {
    pub theta: [Vec<SJet>; 4],
    pub map: Vec<MapJet>,
    pub lambda: Vec<SJet>,
    pub sigma: Vec<SJet>,
}

impl NodeJets {
    pub fn new(state: &FieldState, len: usize, h1: &NodeTable, h10: &NodeTable) -> NodeJets {
        let theta: [Vec<SJet>; 4] =
            std::array::from_fn(|nu| jets_from_ladder(h1, &state.theta[nu].derivs(len)));
        let lambda = jets_from_ladder(h10, &state.lambda.derivs(len));
        let s0 = sigma_nodes(h1, &state.sigma);
        let sigma = (0..h1.nodes()).map(|p| sigma_jet(&s0[p], &lambda[p], &theta[0][p])).collect();
        NodeJets { theta, map: state.map.jets(h1), lambda, sigma }
    }

    pub fn geom(&self, p: usize) -> Result<NodeGeom> {
        let th = [self.theta[0][p], self.theta[1][p], self.theta[2][p], self.theta[3][p]];
        let ng = NodeGeom::new(&th, &self.map[p])?;
        if !(ng.detmag() > 1e-14) {
            return Err(Error::MetricDegenerate);
        }
        Ok(ng)
    }

    pub fn theta_at(&self, p: usize) -> [SJet; 4] {
        [self.theta[0][p], self.theta[1][p], self.theta[2][p], self.theta[3][p]]
    }
}

fn vol_node(j: &NodeJets, p: usize, depth: usize) -> Result<VolOut> {
    let ng = j.geom(p)?;
    let pa = ng.p_spatial();
    let pt = ng.p_time();
    let q = ng.q();
    let r = ng.r();
    let mut b = Vec::with_capacity(depth + 1);
    let mut c = Vec::with_capacity(depth + 1);
    for d in 0..=depth {
        let mut bc = VolCoeff::default();
        for a in 0..3 {
            for e in 0..3 {
                bc.a[a][e] = ng.gab[a][e].deriv(d);
            }
            bc.beta[a] = -0.5 * pa[a].deriv(d) - q[a].deriv(d);
        }
        b.push(bc);
        c.push(VolCoeff {
            phi: std::array::from_fn(|a| 2.0 * ng.u[a].deriv(d)),
            s: -0.5 * pt.deriv(d) + r.deriv(d),
            ..Default::default()
        });
    }
    let th = j.theta_at(p);
    let s = source_series(&ng, &th, &j.sigma[p]);
    let t0 = th[0].v.c[0];
    let v2: f64 = (1..4).map(|i| th[i].v.c[0].powi(2)).sum();
    let ratio = if v2 > 0.0 { t0 * t0 / v2 } else { f64::INFINITY };
    Ok(VolOut { b, c, s, theta0: t0, ratio })
}

/// Boundary series: g^{tr}, 1/gamma_w, abar and the source f^nu.
pub struct BoundarySeries {
    pub gtr: Ser,
    pub grr: Ser,
    pub abar: Ser,
    pub inv_gamma_w: Ser,
    pub f: [Ser; 4],
}

pub fn boundary_series(ng: &NodeGeom, y: &[f64; 3], theta: &[SJet; 4], lambda: &SJet, sigma: &SJet) -> Result<BoundarySeries> {
    let n = ng.len();
    let mut gtr = Ser::zero(n);
    let mut grr = Ser::zero(n);
    for a in 0..3 {
        gtr += ng.u[a] * y[a];
        for b in 0..3 {
            grr += ng.gab[a][b] * (y[a] * y[b]);
        }
    }
    let st = sigma.v.dt();
    let mut a2 = -(st * st);
    for a in 0..3 {
        a2 += (ng.u[a] * st * sigma.g[a]) * 2.0;
        for b in 0..3 {
            a2 += ng.gab[a][b] * sigma.g[a] * sigma.g[b];
        }
    }
    if !(a2.c[0] > 0.0) {
        return Err(Error::TaylorSign(format!("abar^2 = {:e} at y = {y:?}", a2.c[0])));
    }
    if !(grr.c[0] > 0.0) {
        return Err(Error::MetricDegenerate);
    }
    let abar = a2.sqrt();
    let t0 = theta[0].v;
    let inv_gamma_w = (t0 * t0 * grr.sqrt()).div(&abar) * 2.0;
    let dl = ng.eulerian_grad(lambda);
    let t0t = t0.dt();
    let inv2t2 = (t0 * t0).recip() * 0.5;
    let f: [Ser; 4] = std::array::from_fn(|nu| {
        let a = dl[nu] * inv2t2 * (-ETA[nu]);
        let b = (t0t * theta[nu].v.dt()).div(&t0);
        a - b
    });
    Ok(BoundarySeries { gtr, grr, abar, inv_gamma_w, f })
}

fn bnd_node(j: &NodeJets, p: usize, y: &[f64; 3], depth: usize) -> Result<BndOut> {
    let ng = j.geom(p)?;
    let th = j.theta_at(p);
    let bs = boundary_series(&ng, y, &th, &j.lambda[p], &j.sigma[p])?;
    let src = std::array::from_fn(|nu| bs.inv_gamma_w * bs.f[nu]);
    let abar = bs.abar.c[0];
    let t0 = th[0].v.c[0];
    Ok(BndOut {
        gw: (0..=depth).map(|d| bs.inv_gamma_w.deriv(d)).collect(),
        gtr: (0..=depth).map(|d| bs.gtr.deriv(d)).collect(),
        src,
        abar,
        gamma: abar / (2.0 * t0 * t0),
    })
}

/// Assembles the frozen forms and sources of derivative orders 0..=depth from one state.
pub fn assemble_snapshot(disc: &Discretization, asm: &Assembler, state: &FieldState, depth: usize) -> Result<Snapshot> {
    let len = depth + 2;
    let h1 = &disc.h1;
    let h10 = &disc.h10;
    let vj = NodeJets::new(state, len, &h1.at_vol, &h10.at_vol);
    let bj = NodeJets::new(state, len, &h1.at_bnd, &h10.at_bnd);
    let vol: Vec<VolOut> = par::map_range(h1.vol.len(), |p| vol_node(&vj, p, depth)).into_iter().collect::<Result<_>>()?;
    let bnd: Vec<BndOut> = par::map_range(h1.bnd.len(), |p| bnd_node(&bj, p, &h1.bnd.nodes[p], depth))
        .into_iter()
        .collect::<Result<_>>()?;

    let forms: Vec<FormSet> = par::map_range(depth + 1, |d| {
        let bc: Vec<VolCoeff> = vol.iter().map(|o| o.b[d]).collect();
        let cc: Vec<VolCoeff> = vol.iter().map(|o| o.c[d]).collect();
        let (bf, bv) = assemble_volume_form(&asm.h1_st, &h1.at_vol, &h1.vol.weights, &bc);
        let (cf, cv) = assemble_volume_form(&asm.h1_st, &h1.at_vol, &h1.vol.weights, &cc);
        let (lbf, lbv) = assemble_volume_form(&asm.h10_st, &h10.at_vol, &h10.vol.weights, &bc);
        let (lcf, lcv) = assemble_volume_form(&asm.h10_st, &h10.at_vol, &h10.vol.weights, &cc);
        let gw: Vec<f64> = bnd.iter().map(|o| o.gw[d]).collect();
        let gtr: Vec<f64> = bnd.iter().map(|o| -o.gtr[d]).collect();
        let dg = boundary_mass(&h1.at_bnd, &h1.bnd.weights, &gtr);
        FormSet {
            b: &bf + bv,
            bf,
            c: cf + cv + dg,
            g: boundary_mass(&h1.at_bnd, &h1.bnd.weights, &gw),
            lb: lbf + lbv,
            lc: lcf + lcv,
        }
    });

    let theta_src = (0..=depth)
        .map(|k| {
            std::array::from_fn(|nu| {
                let f: Vec<f64> = bnd.iter().map(|o| o.src[nu].c[k] * factorial(k)).collect();
                crate::basis_ball::pair_boundary(&f, h1)
            })
        })
        .collect();
    let lambda_src = (0..=depth)
        .map(|k| {
            let f: Vec<f64> = vol.iter().map(|o| -o.s.c[k] * factorial(k)).collect();
            crate::basis_ball::project(&f, h10)
        })
        .collect();

    let monitor = Monitor {
        min_abar: bnd.iter().map(|o| o.abar).fold(f64::INFINITY, f64::min),
        min_theta0: vol.iter().map(|o| o.theta0).fold(f64::INFINITY, f64::min),
        min_velocity_ratio: vol.iter().map(|o| o.ratio).fold(f64::INFINITY, f64::min),
        min_gamma: bnd.iter().map(|o| o.gamma).fold(f64::INFINITY, f64::min),
    };
    Ok(Snapshot { t: state.t, forms, theta_src, lambda_src, monitor })
}
