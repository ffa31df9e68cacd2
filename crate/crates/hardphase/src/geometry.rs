//! Lagrangian map, pullback metric and boundary coefficients.
//!
//! With w = (Theta^1, Theta^2, Theta^3) / Theta^0 and J = dX/dy the pullback of
//! Minkowski is g = F^T eta F for F = [[1, 0], [w, J]]. Hence g^{tt} = -1,
//! g^{ta} = u^a with u = J^{-1} w, g^{ab} = (J^{-1} J^{-T})^{ab} - u^a u^b, and
//! |g| = det(J)^2. All time derivatives are carried as truncated Taylor series
//! built from the commuted ladder, never by differencing in time.
use crate::basis_ball::{hidx, BasisSet, NodeTable};
use crate::error::{Error, Result};
use crate::series::{Ser, SJet};
use nalgebra::{DMatrix, DVector};

pub type Mat3 = [[f64; 3]; 3];
pub type Mat4 = [[f64; 4]; 4];

/// Builds per-node spatial jets from a ladder of coefficient vectors,
/// `ladder[j]` holding the j-th time derivative.
pub fn jets_from_ladder(table: &NodeTable, ladder: &[DVector<f64>]) -> Vec<SJet> {
    let n = table.nodes();
    let l = ladder.len();
    assert!(l >= 1);
    let m = ladder[0].len();
    let mut c = DMatrix::zeros(m, l);
    let mut fact = 1.0;
    for (j, v) in ladder.iter().enumerate() {
        if j > 0 {
            fact *= j as f64;
        }
        c.set_column(j, &(v / fact));
    }
    let vals = &table.values * &c;
    let grads: [DMatrix<f64>; 3] = std::array::from_fn(|a| &table.grads[a] * &c);
    let hess: [DMatrix<f64>; 6] = std::array::from_fn(|k| &table.hess[k] * &c);
    let mut out = vec![SJet::zero(l); n];
    for (p, jet) in out.iter_mut().enumerate() {
        for j in 0..l {
            jet.v.c[j] = vals[(p, j)];
            for a in 0..3 {
                jet.g[a].c[j] = grads[a][(p, j)];
                for b in 0..3 {
                    jet.h[a][b].c[j] = hess[hidx(a, b)][(p, j)];
                }
            }
        }
    }
    out
}

/// Spatial map X(t, .) stored as H1 coefficients of its three components.
#[derive(Clone, Debug)]
pub struct LagrangianMap {
    pub x: [DVector<f64>; 3],
}

/// Value, Jacobian J[i][b] = dX^i/dy^b and second derivatives dj[a][i][b] = d_a J[i][b].
#[derive(Clone, Copy, Debug)]
pub struct MapJet {
    pub x: [f64; 3],
    pub j: Mat3,
    pub dj: [Mat3; 3],
}

impl LagrangianMap {
    pub fn identity(basis: &BasisSet) -> Self {
        let x = std::array::from_fn(|i| {
            let f: Vec<f64> = basis.vol.nodes.iter().map(|p| p[i]).collect();
            crate::basis_ball::project(&f, basis)
        });
        LagrangianMap { x }
    }

    pub fn jets(&self, table: &NodeTable) -> Vec<MapJet> {
        let n = table.nodes();
        let mut out = vec![MapJet { x: [0.0; 3], j: [[0.0; 3]; 3], dj: [[[0.0; 3]; 3]; 3] }; n];
        for i in 0..3 {
            let v = &table.values * &self.x[i];
            let g: [DVector<f64>; 3] = std::array::from_fn(|a| &table.grads[a] * &self.x[i]);
            let h: [DVector<f64>; 6] = std::array::from_fn(|k| &table.hess[k] * &self.x[i]);
            for (p, mj) in out.iter_mut().enumerate() {
                mj.x[i] = v[p];
                for b in 0..3 {
                    mj.j[i][b] = g[b][p];
                    for a in 0..3 {
                        mj.dj[a][i][b] = h[hidx(a, b)][p];
                    }
                }
            }
        }
        out
    }

    /// Minimum Jacobian determinant over the volume nodes.
    pub fn min_jacobian(&self, basis: &BasisSet) -> f64 {
        self.jets(&basis.at_vol).iter().map(|m| det3(&m.j)).fold(f64::INFINITY, f64::min)
    }
}

pub fn det3(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn inv3(a: &Mat3) -> Option<Mat3> {
    let d = det3(a);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (i1, i2) = ((j + 1) % 3, (j + 2) % 3);
            let (j1, j2) = ((i + 1) % 3, (i + 2) % 3);
            r[i][j] = (a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]) / d;
        }
    }
    Some(r)
}

/// Velocity ratio w^i = Theta^i / Theta^0 at the volume nodes, with the causality guard.
pub fn velocity_ratio(theta: &[DVector<f64>; 4], basis: &BasisSet) -> Result<[Vec<f64>; 3]> {
    let t0 = basis.reconstruct(&theta[0]);
    if t0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NotFutureDirected);
    }
    Ok(std::array::from_fn(|i| {
        let ti = basis.reconstruct(&theta[i + 1]);
        ti.iter().zip(t0.iter()).map(|(a, b)| a / b).collect()
    }))
}

/// Time derivative of the map coefficients, P_m(Theta^i / Theta^0).
pub fn map_velocity(theta: &[DVector<f64>; 4], basis: &BasisSet) -> Result<[DVector<f64>; 3]> {
    let w = velocity_ratio(theta, basis)?;
    Ok(std::array::from_fn(|i| crate::basis_ball::project(&w[i], basis)))
}

/// Advances X by one step with Theta held fixed over the step.
pub fn advance_map(
    map: &LagrangianMap,
    theta: &[DVector<f64>; 4],
    dt: f64,
    basis: &BasisSet,
) -> Result<LagrangianMap> {
    if !(dt > 0.0) {
        return Err(Error::Invalid("dt must be positive".into()));
    }
    let v = map_velocity(theta, basis)?;
    let out = LagrangianMap { x: std::array::from_fn(|i| &map.x[i] + &v[i] * dt) };
    if out.min_jacobian(basis) <= 0.0 {
        return Err(Error::MapDegenerate);
    }
    Ok(out)
}

/// Geometric series at one node: everything the weak forms need, with exact
/// time derivatives up to the ladder length.
#[derive(Clone, Copy, Debug)]
pub struct NodeGeom {
    pub theta0: SJet,
    pub w: [SJet; 3],
    pub j: [[Ser; 3]; 3],
    pub dj: [[[Ser; 3]; 3]; 3],
    pub k: [[Ser; 3]; 3],
    pub dk: [[[Ser; 3]; 3]; 3],
    pub u: [Ser; 3],
    pub du: [[Ser; 3]; 3],
    pub gab: [[Ser; 3]; 3],
    pub lt: Ser,
    pub lb: [Ser; 3],
}

fn matmul_ser(a: &[[Ser; 3]; 3], b: &[[Ser; 3]; 3]) -> [[Ser; 3]; 3] {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let mut s = a[i][0] * b[0][j];
            s += a[i][1] * b[1][j];
            s += a[i][2] * b[2][j];
            s
        })
    })
}

fn inv_ser(a: &[[Ser; 3]; 3]) -> Option<[[Ser; 3]; 3]> {
    let n = a[0][0].n;
    let a0: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| a[i][j].c[0]));
    let k0 = inv3(&a0)?;
    let mut k = [[Ser::zero(n); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j].c[0] = k0[i][j];
        }
    }
    for p in 1..n {
        // K_p = -K_0 sum_{q=1}^{p} A_q K_{p-q}
        let mut s = [[0.0; 3]; 3];
        for q in 1..=p {
            for i in 0..3 {
                for j in 0..3 {
                    let mut acc = 0.0;
                    for l in 0..3 {
                        acc += a[i][l].c[q] * k[l][j].c[p - q];
                    }
                    s[i][j] += acc;
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for l in 0..3 {
                    acc += k0[i][l] * s[l][j];
                }
                k[i][j].c[p] = -acc;
            }
        }
    }
    Some(k)
}

impl NodeGeom {
    /// `theta` are the four velocity jets; `map` the map at the expansion time.
    pub fn new(theta: &[SJet; 4], map: &MapJet) -> Result<NodeGeom> {
        let n = theta[0].len();
        if !(theta[0].v.c[0] > 0.0) {
            return Err(Error::NotFutureDirected);
        }
        let w: [SJet; 3] = std::array::from_fn(|i| theta[i + 1].div(&theta[0]));
        let j: [[Ser; 3]; 3] =
            std::array::from_fn(|i| std::array::from_fn(|b| w[i].g[b].integral(map.j[i][b]).truncate(n)));
        let dj: [[[Ser; 3]; 3]; 3] = std::array::from_fn(|a| {
            std::array::from_fn(|i| {
                std::array::from_fn(|b| w[i].h[a][b].integral(map.dj[a][i][b]).truncate(n))
            })
        });
        if det3(&map.j) <= 0.0 {
            return Err(Error::MapDegenerate);
        }
        // K[a][i]: inverse of J[i][b]
        let k = inv_ser(&j).ok_or(Error::MapDegenerate)?;
        let dk: [[[Ser; 3]; 3]; 3] = std::array::from_fn(|c| {
            let kdj = matmul_ser(&k, &dj[c]);
            let mut r = matmul_ser(&kdj, &k);
            for row in r.iter_mut() {
                for e in row.iter_mut() {
                    *e = -*e;
                }
            }
            r
        });
        let u: [Ser; 3] = std::array::from_fn(|a| {
            let mut s = k[a][0] * w[0].v;
            s += k[a][1] * w[1].v;
            s += k[a][2] * w[2].v;
            s
        });
        let du: [[Ser; 3]; 3] = std::array::from_fn(|c| {
            std::array::from_fn(|a| {
                let mut s = Ser::zero(n);
                for i in 0..3 {
                    s += dk[c][a][i] * w[i].v + k[a][i] * w[i].g[c];
                }
                s
            })
        });
        let gab: [[Ser; 3]; 3] = std::array::from_fn(|a| {
            std::array::from_fn(|b| {
                let mut s = Ser::zero(n);
                for i in 0..3 {
                    s += k[a][i] * k[b][i];
                }
                s - u[a] * u[b]
            })
        });
        let mut lt = Ser::zero(n);
        for a in 0..3 {
            for i in 0..3 {
                lt += k[a][i] * w[i].g[a];
            }
        }
        lt = lt * 2.0;
        let lb: [Ser; 3] = std::array::from_fn(|b| {
            let mut s = Ser::zero(n);
            for a in 0..3 {
                for i in 0..3 {
                    s += k[a][i] * dj[b][i][a];
                }
            }
            s * 2.0
        });
        Ok(NodeGeom { theta0: theta[0], w, j, dj, k, dk, u, du, gab, lt, lb })
    }

    pub fn len(&self) -> usize {
        self.u[0].n
    }

    /// g^{a alpha} d_alpha log|g|
    pub fn p_spatial(&self) -> [Ser; 3] {
        std::array::from_fn(|a| {
            let mut s = self.u[a] * self.lt;
            for b in 0..3 {
                s += self.gab[a][b] * self.lb[b];
            }
            s
        })
    }

    /// g^{t alpha} d_alpha log|g|
    pub fn p_time(&self) -> Ser {
        let mut s = -self.lt;
        for b in 0..3 {
            s += self.u[b] * self.lb[b];
        }
        s
    }

    /// d_t g^{ta}; one term shorter than the ladder.
    pub fn q(&self) -> [Ser; 3] {
        std::array::from_fn(|a| self.u[a].dt())
    }

    /// d_a g^{ta}
    pub fn r(&self) -> Ser {
        self.du[0][0] + self.du[1][1] + self.du[2][2]
    }

    /// Lower-index metric at the expansion time.
    pub fn metric(&self) -> Mat4 {
        let w: [f64; 3] = std::array::from_fn(|i| self.w[i].v.c[0]);
        let j: Mat3 = std::array::from_fn(|i| std::array::from_fn(|b| self.j[i][b].c[0]));
        lower_metric(&w, &j)
    }

    pub fn metric_inverse(&self) -> Mat4 {
        let mut g = [[0.0; 4]; 4];
        g[0][0] = -1.0;
        for a in 0..3 {
            g[0][a + 1] = self.u[a].c[0];
            g[a + 1][0] = self.u[a].c[0];
            for b in 0..3 {
                g[a + 1][b + 1] = self.gab[a][b].c[0];
            }
        }
        g
    }

    pub fn detmag(&self) -> f64 {
        let j: Mat3 = std::array::from_fn(|i| std::array::from_fn(|b| self.j[i][b].c[0]));
        det3(&j).powi(2)
    }

    /// Eulerian partial derivatives d_{x^mu} of a jet f at the expansion time,
    /// as series: mu = 0 is d_t - u.grad, mu = i is K[a][i] d_a.
    pub fn eulerian_grad(&self, f: &SJet) -> [Ser; 4] {
        let n = self.len().min(f.len());
        let ft = f.v.dt();
        let mut d0 = ft;
        for a in 0..3 {
            d0 -= self.u[a] * f.g[a];
        }
        let mut out = [d0, Ser::zero(n), Ser::zero(n), Ser::zero(n)];
        for i in 0..3 {
            let mut s = Ser::zero(n);
            for a in 0..3 {
                s += self.k[a][i] * f.g[a];
            }
            out[i + 1] = s;
        }
        out
    }
}

pub fn lower_metric(w: &[f64; 3], j: &Mat3) -> Mat4 {
    let mut g = [[0.0; 4]; 4];
    g[0][0] = -(1.0 - (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]));
    for b in 0..3 {
        let s: f64 = (0..3).map(|i| w[i] * j[i][b]).sum();
        g[0][b + 1] = s;
        g[b + 1][0] = s;
        for c in 0..3 {
            g[b + 1][c + 1] = (0..3).map(|i| j[i][b] * j[i][c]).sum();
        }
    }
    g
}

/// Pullback metric at a node set, with first derivatives.
#[derive(Clone, Debug)]
pub struct Metric {
    pub g: Vec<Mat4>,
    pub ginv: Vec<Mat4>,
    pub detmag: Vec<f64>,
    pub dg_dt: Vec<Mat4>,
    pub dg_dy: Vec<[Mat4; 3]>,
}

/// Metric at the nodes of `table` from Theta, d_t Theta and the map.
pub fn pullback_metric(
    theta: &[DVector<f64>; 4],
    dtheta: &[DVector<f64>; 4],
    map: &LagrangianMap,
    table: &NodeTable,
) -> Result<Metric> {
    let tj: [Vec<SJet>; 4] =
        std::array::from_fn(|nu| jets_from_ladder(table, &[theta[nu].clone(), dtheta[nu].clone()]));
    let mj = map.jets(table);
    let n = table.nodes();
    let mut out = Metric {
        g: Vec::with_capacity(n),
        ginv: Vec::with_capacity(n),
        detmag: Vec::with_capacity(n),
        dg_dt: Vec::with_capacity(n),
        dg_dy: Vec::with_capacity(n),
    };
    for p in 0..n {
        let th = [tj[0][p], tj[1][p], tj[2][p], tj[3][p]];
        let ng = NodeGeom::new(&th, &mj[p])?;
        let det = ng.detmag();
        if !(det > 1e-14) {
            return Err(Error::MetricDegenerate);
        }
        let g = ng.metric();
        let w0: [f64; 3] = std::array::from_fn(|i| ng.w[i].v.c[0]);
        let w1: [f64; 3] = std::array::from_fn(|i| ng.w[i].v.c[1]);
        let j0: Mat3 = std::array::from_fn(|i| std::array::from_fn(|b| ng.j[i][b].c[0]));
        let j1: Mat3 = std::array::from_fn(|i| std::array::from_fn(|b| ng.j[i][b].c[1]));
        let dgt = metric_derivative(&w0, &j0, &w1, &j1);
        let dgy: [Mat4; 3] = std::array::from_fn(|a| {
            let wa: [f64; 3] = std::array::from_fn(|i| ng.w[i].g[a].c[0]);
            let ja: Mat3 = std::array::from_fn(|i| std::array::from_fn(|b| ng.dj[a][i][b].c[0]));
            metric_derivative(&w0, &j0, &wa, &ja)
        });
        out.g.push(g);
        out.ginv.push(ng.metric_inverse());
        out.detmag.push(det);
        out.dg_dt.push(dgt);
        out.dg_dy.push(dgy);
    }
    Ok(out)
}

/// Directional derivative of the lower metric along (dw, dJ).
fn metric_derivative(w: &[f64; 3], j: &Mat3, dw: &[f64; 3], dj: &Mat3) -> Mat4 {
    let mut g = [[0.0; 4]; 4];
    g[0][0] = 2.0 * (0..3).map(|i| w[i] * dw[i]).sum::<f64>();
    for b in 0..3 {
        let s: f64 = (0..3).map(|i| dw[i] * j[i][b] + w[i] * dj[i][b]).sum();
        g[0][b + 1] = s;
        g[b + 1][0] = s;
        for c in 0..3 {
            g[b + 1][c + 1] = (0..3).map(|i| dj[i][b] * j[i][c] + j[i][b] * dj[i][c]).sum();
        }
    }
    g
}

/// Boundary data derived from Sigma: gamma, outward normal and the Taylor-sign scalar.
#[derive(Clone, Debug)]
pub struct BoundaryCoeffs {
    pub gamma: Vec<f64>,
    pub normal: Vec<[f64; 4]>,
    pub a_bar: Vec<f64>,
    /// sqrt(g^{rr}): ratio between the conormal flux g^{r beta} d_beta and the unit normal derivative
    pub conormal: Vec<f64>,
}

/// `dsigma[p]` holds (d_t Sigma, d_1 Sigma, d_2 Sigma, d_3 Sigma) at boundary node p.
pub fn boundary_coeffs(
    theta0: &[f64],
    dsigma: &[[f64; 4]],
    metric: &Metric,
    nodes: &[[f64; 3]],
) -> Result<BoundaryCoeffs> {
    let n = nodes.len();
    let mut out = BoundaryCoeffs {
        gamma: Vec::with_capacity(n),
        normal: Vec::with_capacity(n),
        a_bar: Vec::with_capacity(n),
        conormal: Vec::with_capacity(n),
    };
    for p in 0..n {
        let gi = &metric.ginv[p];
        let ds = &dsigma[p];
        let mut up = [0.0; 4];
        for mu in 0..4 {
            up[mu] = (0..4).map(|nu| gi[mu][nu] * ds[nu]).sum();
        }
        let a2: f64 = (0..4).map(|mu| up[mu] * ds[mu]).sum();
        if !(a2 > 0.0) {
            return Err(Error::TaylorSign(format!("a_bar^2 = {a2:e} at boundary node {p}")));
        }
        let a = a2.sqrt();
        if !(theta0[p] > 0.0) {
            return Err(Error::NotFutureDirected);
        }
        let y = nodes[p];
        let grr: f64 = (0..3).map(|i| (0..3).map(|j| y[i] * y[j] * gi[i + 1][j + 1]).sum::<f64>()).sum();
        out.gamma.push(a / (2.0 * theta0[p] * theta0[p]));
        out.normal.push(std::array::from_fn(|mu| -up[mu] / a));
        out.a_bar.push(a);
        out.conormal.push(grr.max(0.0).sqrt());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_series_matches_direct_inverse_derivative() {
        // A(t) = A0 + t A1, d/dt A^{-1} = -A^{-1} A1 A^{-1}
        let a0 = [[2.0, 0.1, 0.0], [0.0, 1.5, 0.2], [0.3, 0.0, 1.0]];
        let a1 = [[0.1, 0.0, 0.2], [0.0, -0.3, 0.0], [0.5, 0.1, 0.0]];
        let a: [[Ser; 3]; 3] =
            std::array::from_fn(|i| std::array::from_fn(|j| Ser::from_derivs(&[a0[i][j], a1[i][j], 0.0])));
        let k = inv_ser(&a).unwrap();
        let k0 = inv3(&a0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut d = 0.0;
                for l in 0..3 {
                    for m in 0..3 {
                        d -= k0[i][l] * a1[l][m] * k0[m][j];
                    }
                }
                assert!((k[i][j].deriv(1) - d).abs() < 1e-13);
                assert!((k[i][j].c[0] - k0[i][j]).abs() < 1e-14);
            }
        }
    }
}
