//! Exact identities on manufactured fields, constraint residuals and energies of a run.
use crate::basis_ball::{build_volume_quadrature, Discretization};
use crate::error::Result;
use crate::iteration::IterateBundle;
use crate::poly::{box_op, eta, Poly};
use crate::series::SJet;
use crate::state::FieldState;
use crate::weak_forms::{euler1, euler2, NodeJets};
use rand::Rng;
use serde::Serialize;

/// The checked identities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Identity {
    Multiplier,
    Commutator1,
    Commutator2,
    Commutator3,
    Commutator4,
    AbarSplit,
    AbarTimeTime,
    AbarTimeSpace,
}

impl Identity {
    pub const ALL: [Identity; 8] = [
        Identity::Multiplier,
        Identity::Commutator1,
        Identity::Commutator2,
        Identity::Commutator3,
        Identity::Commutator4,
        Identity::AbarSplit,
        Identity::AbarTimeTime,
        Identity::AbarTimeSpace,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Identity::Multiplier => "multiplier",
            Identity::Commutator1 => "commutator_1",
            Identity::Commutator2 => "commutator_2",
            Identity::Commutator3 => "commutator_3",
            Identity::Commutator4 => "commutator_4",
            Identity::AbarSplit => "abar_split",
            Identity::AbarTimeTime => "abar_aux_tt",
            Identity::AbarTimeSpace => "abar_aux_ti",
        }
    }

    pub fn from_name(s: &str) -> Option<Identity> {
        Identity::ALL.into_iter().find(|i| i.name() == s)
    }
}

/// Manufactured polynomial fields: velocity V, scalar Theta, sigma^2 and a multiplier Q.
#[derive(Clone, Debug)]
pub struct FieldSet {
    pub v: [Poly; 4],
    pub theta: Poly,
    pub sigma2: Poly,
    pub q: [Poly; 4],
}

impl FieldSet {
    /// Random fields of degree <= `deg`. V is made to satisfy Box V = 0 by
    /// subtracting (Box V) x1^2 / 2, which is exact for degree <= 2.
    pub fn random<R: Rng>(deg: usize, rng: &mut R) -> Self {
        let half_x1sq = Poly::monomial([0, 2, 0, 0], 0.5);
        let v = std::array::from_fn(|_| {
            let p = Poly::random(deg, rng);
            let b = box_op(&p);
            if deg <= 2 {
                &p - &(&b * &half_x1sq)
            } else {
                p
            }
        });
        FieldSet {
            v,
            theta: Poly::random(deg, rng),
            sigma2: Poly::random(deg, rng),
            q: std::array::from_fn(|_| Poly::random(deg, rng)),
        }
    }
}

/// D_V f = V^mu d_mu f
fn dv(v: &[Poly; 4], f: &Poly) -> Poly {
    let mut r = Poly::zero();
    for mu in 0..4 {
        r = r + &v[mu] * &f.d(mu);
    }
    r
}

/// nabla f . nabla g
fn dot_grad(f: &Poly, g: &Poly) -> Poly {
    let mut r = Poly::zero();
    for mu in 0..4 {
        r = r + (&f.d(mu) * &g.d(mu)).scale(eta(mu));
    }
    r
}

/// Residual polynomials of one identity; `flip` corrupts the sign of a correction term.
pub fn identity_residuals(id: Identity, f: &FieldSet, flip: bool) -> Vec<Poly> {
    let s = if flip { -1.0 } else { 1.0 };
    let th = &f.theta;
    let v = &f.v;
    match id {
        Identity::Multiplier => {
            let q = &f.q;
            let qth = dv(q, th);
            let gg = dot_grad(th, th);
            let lhs = &box_op(th) * &qth;
            let mut rhs = Poly::zero();
            for mu in 0..4 {
                let flux = (&qth * &th.d(mu)).scale(eta(mu)) - (&q[mu] * &gg).scale(0.5);
                rhs = rhs + flux.d(mu);
            }
            let mut divq = Poly::zero();
            for mu in 0..4 {
                divq = divq + q[mu].d(mu);
            }
            rhs = rhs + (&divq * &gg).scale(0.5 * s);
            for mu in 0..4 {
                for nu in 0..4 {
                    rhs = rhs - (&q[nu].d(mu) * &(&th.d(mu) * &th.d(nu))).scale(eta(mu));
                }
            }
            vec![lhs - rhs]
        }
        Identity::Commutator1 => (0..4)
            .map(|mu| {
                let mut r = dv(v, &th.d(mu)) - dv(v, th).d(mu);
                for nu in 0..4 {
                    r = r + (&v[nu].d(mu) * &th.d(nu)).scale(s);
                }
                r
            })
            .collect(),
        Identity::Commutator2 => {
            let mut out = Vec::new();
            for nu in 0..4 {
                for la in 0..4 {
                    let mut r = dv(v, &th.d(nu).d(la)) - dv(v, th).d(nu).d(la);
                    for ka in 0..4 {
                        r = r + &v[ka].d(la) * &th.d(ka).d(nu);
                        r = r + &v[ka].d(nu) * &th.d(ka).d(la);
                        r = r + (&v[ka].d(nu).d(la) * &th.d(ka)).scale(s);
                    }
                    out.push(r);
                }
            }
            out
        }
        Identity::Commutator3 => {
            let mut r = dv(v, &box_op(th)) - box_op(&dv(v, th));
            for mu in 0..4 {
                for nu in 0..4 {
                    r = r + (&v[nu].d(mu) * &th.d(mu).d(nu)).scale(2.0 * eta(mu) * s);
                }
            }
            vec![r]
        }
        Identity::Commutator4 => {
            let s2 = &f.sigma2;
            // L = D^2 - 1/2 grad sigma^2 . grad
            let l = |p: &Poly| dv(v, &dv(v, p)) - dot_grad(s2, p).scale(0.5);
            let mut r = dv(v, &l(th)) - l(&dv(v, th));
            let dsig = dv(v, s2);
            for la in 0..4 {
                for nu in 0..4 {
                    r = r - (&s2.d(la) * &(&v[nu].d(la) * &th.d(nu))).scale(0.5 * eta(la));
                    r = r - (&s2.d(la) * &(&v[la].d(nu) * &th.d(nu))).scale(0.5 * eta(nu) * s);
                }
            }
            for nu in 0..4 {
                r = r + (&dsig.d(nu) * &th.d(nu)).scale(0.5 * eta(nu));
            }
            vec![r]
        }
        Identity::AbarSplit => {
            // multiplied through by (V^0)^2
            let v0 = &v[0];
            let v02 = v0 * v0;
            let dth = dv(v, th);
            let mut lhs = Poly::zero();
            for i in 1..4 {
                lhs = lhs + &v02 * &th.d(i).d(i);
                for j in 1..4 {
                    lhs = lhs - &(&v[i] * &v[j]) * &th.d(i).d(j);
                }
            }
            let mut rhs = &v02 * &box_op(th) + v0 * &dth.d(0);
            for i in 1..4 {
                rhs = rhs - &v[i] * &dth.d(i);
                rhs = rhs + (&(&v[i] * &v0.d(i)) * &th.d(0)).scale(s);
                for j in 1..4 {
                    rhs = rhs + &(&v[i] * &v[j].d(i)) * &th.d(j);
                }
            }
            rhs = rhs - &(v0 * &v0.d(0)) * &th.d(0);
            for j in 1..4 {
                rhs = rhs - &(v0 * &v[j].d(0)) * &th.d(j);
            }
            vec![lhs - rhs]
        }
        Identity::AbarTimeTime => {
            let mut lap = Poly::zero();
            for i in 1..4 {
                lap = lap + th.d(i).d(i);
            }
            vec![th.d(0).d(0) - (lap - box_op(th).scale(s))]
        }
        Identity::AbarTimeSpace => {
            let dth = dv(v, th);
            (1..4)
                .map(|i| {
                    let mut r = dth.d(i) - (&v[0].d(i) * &th.d(0)).scale(s);
                    for j in 1..4 {
                        r = r - &v[j] * &th.d(i).d(j) - &v[j].d(i) * &th.d(j);
                    }
                    &v[0] * &th.d(0).d(i) - r
                })
                .collect()
        }
    }
}

/// Points (t, y) at which residual polynomials are sampled: volume nodes of a
/// degree-6 ball rule at three times.
pub fn sample_points() -> Vec<[f64; 4]> {
    let q = build_volume_quadrature(6).expect("order 6 is supported");
    let mut out = Vec::new();
    for t in [-0.5, 0.0, 0.5] {
        for y in &q.nodes {
            out.push([t, y[0], y[1], y[2]]);
        }
    }
    out
}

fn max_at(ps: &[Poly], pts: &[[f64; 4]]) -> f64 {
    let mut m: f64 = 0.0;
    for p in ps {
        for x in pts {
            m = m.max(p.eval(*x).abs());
        }
    }
    m
}

/// Max-node residual of one identity.
pub fn identity_residual(id: Identity, f: &FieldSet, flip: bool, pts: &[[f64; 4]]) -> f64 {
    max_at(&identity_residuals(id, f, flip), pts)
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityRow {
    pub identity: &'static str,
    pub max_residual: f64,
}

/// Worst residual of every identity over `sets` random field sets of degree `deg`.
/// `corrupt` flips the sign of one correction term of the named identity.
pub fn verify_identities<R: Rng>(rng: &mut R, sets: usize, deg: usize, corrupt: Option<Identity>) -> Vec<IdentityRow> {
    let pts = sample_points();
    let fields: Vec<FieldSet> = (0..sets).map(|_| FieldSet::random(deg, rng)).collect();
    Identity::ALL
        .iter()
        .map(|id| {
            let flip = corrupt == Some(*id);
            let r = crate::par::map_slice(&fields, |f| identity_residual(*id, f, flip, &pts));
            IdentityRow { identity: id.name(), max_residual: r.into_iter().fold(0.0, f64::max) }
        })
        .collect()
}

/// Pointwise evaluation of Eulerian first and second derivatives on the Lagrangian grid.
struct EulerNode {
    /// d_mu V^nu
    dv: [[f64; 4]; 4],
    /// d_mu d_la V^nu, indexed [nu][mu][la]
    ddv: [[[f64; 4]; 4]; 4],
    dsig: [f64; 4],
    ddsig: [[f64; 4]; 4],
}

fn second(ng: &crate::geometry::NodeGeom, f: &SJet) -> ([f64; 4], [[f64; 4]; 4]) {
    let e = euler2(ng, f);
    let mut d = [0.0; 4];
    let mut dd = [[0.0; 4]; 4];
    for mu in 0..4 {
        d[mu] = e[mu].0.c[0];
        let inner = euler1(ng, &e[mu].0, &e[mu].1);
        for la in 0..4 {
            dd[la][mu] = inner[la].c[0];
        }
    }
    (d, dd)
}

fn euler_node(jets: &NodeJets, p: usize) -> Result<EulerNode> {
    let ng = jets.geom(p)?;
    let th = jets.theta_at(p);
    let mut dv = [[0.0; 4]; 4];
    let mut ddv = [[[0.0; 4]; 4]; 4];
    for nu in 0..4 {
        let (d, dd) = second(&ng, &th[nu]);
        for mu in 0..4 {
            dv[mu][nu] = d[mu];
        }
        ddv[nu] = dd;
    }
    let (dsig, ddsig) = second(&ng, &jets.sigma[p]);
    Ok(EulerNode { dv, ddv, dsig, ddsig })
}

/// L2 norms over the reference ball of the constraint quantities at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ConstraintRow {
    pub t: f64,
    /// V^a V_a + sigma^2
    pub b: f64,
    /// D_V V_a + d_a sigma^2 / 2
    pub x: f64,
    /// all six components of dV
    pub omega: f64,
    /// the three spatial components of dV
    pub omega_space: f64,
    pub box_v: f64,
    /// Box sigma^2 + 2 (grad^mu V^nu)(grad_mu V_nu)
    pub sigma_wave: f64,
}

pub fn constraint_row(disc: &Discretization, state: &FieldState) -> Result<ConstraintRow> {
    let h1 = &disc.h1;
    let len = (state.depth() + 3).min(4);
    let jets = NodeJets::new(state, len, &h1.at_vol, &disc.h10.at_vol);
    let rows = crate::par::map_range(h1.vol.len(), |p| -> Result<[f64; 6]> {
        let en = euler_node(&jets, p)?;
        let th = jets.theta_at(p);
        let v: [f64; 4] = std::array::from_fn(|nu| th[nu].v.c[0]);
        let dt: [f64; 4] = std::array::from_fn(|nu| th[nu].v.c[1]);
        let sig = jets.sigma[p].v.c[0];
        let b = -v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3] + sig;
        let mut x = 0.0;
        for a in 0..4 {
            let r = eta(a) * v[0] * dt[a] + 0.5 * en.dsig[a];
            x += r * r;
        }
        let mut om = 0.0;
        let mut om_s = 0.0;
        for mu in 0..4 {
            for nu in (mu + 1)..4 {
                let r = eta(nu) * en.dv[mu][nu] - eta(mu) * en.dv[nu][mu];
                om += r * r;
                if mu > 0 {
                    om_s += r * r;
                }
            }
        }
        let mut bv = 0.0;
        for nu in 0..4 {
            let r: f64 = (0..4).map(|mu| eta(mu) * en.ddv[nu][mu][mu]).sum();
            bv += r * r;
        }
        let mut sw: f64 = (0..4).map(|mu| eta(mu) * en.ddsig[mu][mu]).sum();
        for mu in 0..4 {
            for nu in 0..4 {
                sw += 2.0 * eta(mu) * eta(nu) * en.dv[mu][nu] * en.dv[mu][nu];
            }
        }
        Ok([b * b, x, om, om_s, bv, sw * sw])
    });
    let mut acc = [0.0; 6];
    for (r, w) in rows.into_iter().zip(&h1.vol.weights) {
        let r = r?;
        for i in 0..6 {
            acc[i] += w * r[i];
        }
    }
    let s: [f64; 6] = std::array::from_fn(|i| acc[i].sqrt());
    Ok(ConstraintRow { t: state.t, b: s[0], x: s[1], omega: s[2], omega_space: s[3], box_v: s[4], sigma_wave: s[5] })
}

pub fn constraint_residuals(disc: &Discretization, bundle: &IterateBundle) -> Result<Vec<ConstraintRow>> {
    bundle.states.iter().map(|s| constraint_row(disc, s)).collect()
}

/// Energies of the barred fields: E_j[V] per time, underline E_j[sigma^2] and the unified energy.
#[derive(Clone, Debug, Default, Serialize)]
pub struct EnergyReport {
    pub t: Vec<f64>,
    /// e_v[n][j] = E_j[Vbar, t_n]
    pub e_v: Vec<Vec<f64>>,
    /// under_sigma[n][j] = underline E_j[sigma bar^2, t_n]
    pub under_sigma: Vec<Vec<f64>>,
    /// unified[n][k'] for k' = 0..=k
    pub unified: Vec<Vec<f64>>,
}

/// Spacetime gradient energy densities of D^j f for j = 0..=jmax at one node:
/// (|d_{t,x} D^j f|^2, (D^j_V f)^2 after one more D).
fn ladder_grads(ng: &crate::geometry::NodeGeom, theta0: &SJet, f: &SJet, jmax: usize, c: f64) -> Vec<(f64, f64)> {
    let mut g = *f;
    let mut out = Vec::with_capacity(jmax + 1);
    let dbar = |h: &SJet| theta0.mul(&h.dt()).scale(1.0 / c);
    for j in 0..=jmax {
        let d = ng.eulerian_grad(&g);
        let grad2: f64 = (0..4).map(|mu| d[mu].c[0] * d[mu].c[0]).sum();
        let next = dbar(&g);
        out.push((grad2, next.v.c[0] * next.v.c[0]));
        if j < jmax {
            g = next;
        }
    }
    out
}

/// Moving-domain volume element |det J| and boundary element |det J| |J^{-T} y| at a node.
fn measures(ng: &crate::geometry::NodeGeom, y: Option<&[f64; 3]>) -> f64 {
    let j: crate::geometry::Mat3 = std::array::from_fn(|i| std::array::from_fn(|b| ng.j[i][b].c[0]));
    let det = crate::geometry::det3(&j).abs();
    match y {
        None => det,
        Some(y) => {
            let n: f64 = (0..3)
                .map(|i| {
                    let s: f64 = (0..3).map(|a| ng.k[a][i].c[0] * y[a]).sum();
                    s * s
                })
                .sum();
            det * n.sqrt()
        }
    }
}

/// E_j[Vbar] (summed over components) and the volume and boundary integrands of
/// underline E_j[sigma bar^2] at one state.
pub fn energies_at(disc: &Discretization, state: &FieldState, k: usize, c: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let h1 = &disc.h1;
    let len = jet_len(state.depth());
    let vj = NodeJets::new(state, len, &h1.at_vol, &disc.h10.at_vol);
    let bj = NodeJets::new(state, len, &h1.at_bnd, &disc.h10.at_bnd);
    let shift = c * c;
    let sbar = |s: &SJet| {
        let mut r = s.scale(1.0 / (c * c));
        r.v.c[0] -= shift;
        r
    };
    let mut ev = vec![0.0; k + 1];
    let mut vol_s = vec![0.0; k + 2];
    let mut bnd_s = vec![0.0; k + 2];
    for p in 0..h1.vol.len() {
        let ng = vj.geom(p)?;
        let w = h1.vol.weights[p] * measures(&ng, None);
        let th = vj.theta_at(p);
        for nu in 0..4 {
            for (j, (g2, _)) in ladder_grads(&ng, &th[0], &th[nu].scale(1.0 / c), k, c).into_iter().enumerate() {
                ev[j] += w * g2;
            }
        }
        for (j, (g2, _)) in ladder_grads(&ng, &th[0], &sbar(&vj.sigma[p]), k + 1, c).into_iter().enumerate() {
            vol_s[j] += w * g2;
        }
    }
    for (p, y) in h1.bnd.nodes.iter().enumerate() {
        let ng = bj.geom(p)?;
        let w = h1.bnd.weights[p] * measures(&ng, Some(y));
        let th = bj.theta_at(p);
        for nu in 0..4 {
            for (j, (_, d2)) in ladder_grads(&ng, &th[0], &th[nu].scale(1.0 / c), k, c).into_iter().enumerate() {
                ev[j] += w * d2;
            }
        }
        for (j, (g2, _)) in ladder_grads(&ng, &th[0], &sbar(&bj.sigma[p]), k + 1, c).into_iter().enumerate() {
            bnd_s[j] += w * g2;
        }
    }
    Ok((ev, vol_s, bnd_s))
}

fn jet_len(depth: usize) -> usize {
    (depth + 3).min(crate::series::MAX_SER - 1)
}

/// Energy tables of a bundle up to order k; every commuted quantity must keep a
/// time derivative in the jets, which bounds k by the commutation depth.
pub fn energy_functionals(disc: &Discretization, bundle: &IterateBundle, k: usize, c: f64) -> Result<EnergyReport> {
    let len = jet_len(bundle.states[0].depth());
    if k + 2 > len {
        return Err(crate::Error::Invalid(format!("energy order {k} exceeds the available commuted ladder")));
    }
    let per = crate::par::map_slice(&bundle.states, |s| energies_at(disc, s, k, c));
    let mut rep = EnergyReport::default();
    let mut sup_vol = vec![0.0f64; k + 2];
    let mut bnd_int = vec![0.0f64; k + 2];
    let mut prev_bnd: Option<Vec<f64>> = None;
    let mut sup_ev = vec![0.0f64; k + 1];
    for (s, r) in bundle.states.iter().zip(per) {
        let (ev, vol_s, bnd_s) = r?;
        if let Some(pb) = &prev_bnd {
            for j in 0..k + 2 {
                bnd_int[j] += 0.5 * bundle.dt * (pb[j] + bnd_s[j]);
            }
        }
        for j in 0..k + 2 {
            sup_vol[j] = sup_vol[j].max(vol_s[j]);
        }
        let under: Vec<f64> = (0..k + 2).map(|j| sup_vol[j] + bnd_int[j] / c).collect();
        let mut acc = 0.0;
        let esum: Vec<f64> = ev
            .iter()
            .map(|e| {
                acc += e;
                acc
            })
            .collect();
        for j in 0..=k {
            sup_ev[j] = sup_ev[j].max(esum[j]);
        }
        let unified = (0..=k).map(|kk| under[..=kk + 1].iter().sum::<f64>() + sup_ev[kk]).collect();
        rep.t.push(s.t);
        rep.e_v.push(ev);
        rep.under_sigma.push(under);
        rep.unified.push(unified);
        prev_bnd = Some(bnd_s);
    }
    Ok(rep)
}
