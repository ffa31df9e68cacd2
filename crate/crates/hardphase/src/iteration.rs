//! Picard iteration, compatible initial data and the coupled time march.
//!
//! Iterate m+1 solves linear Galerkin ODEs whose forms and sources are frozen
//! from iterate m (snapshots at the grid times, cubic Lagrange in between);
//! Sigma and the map are transported with the new Theta and Lambda.
use crate::basis_ball::{project, Discretization};
use crate::error::{Error, Result};
use crate::geometry::{map_velocity, LagrangianMap};
use crate::lambda_solver;
use crate::par;
use crate::sigma_thermo::sigma_rate;
use crate::state::{FieldState, Ladder};
use crate::theta_solver::{self, check_cfl, factor_system, project_initial_data, rk4_step, Chol};
use crate::weak_forms::{assemble_snapshot, Assembler, Monitor, Snapshot};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Initial-data family: sigma_0^2 = c^4 + A (1 - r^2)(1 + q y^1), V^i = d_i psi,
/// psi(y) = l . y + y^T H y / 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFamily {
    pub c: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub q_amp: f64,
    #[serde(default)]
    pub psi_linear: [f64; 3],
    #[serde(default)]
    pub psi_hessian: [[f64; 3]; 3],
}

impl DataFamily {
    pub fn radial(c: f64, amplitude: f64) -> Self {
        DataFamily { c, amplitude, q_amp: 0.0, psi_linear: [0.0; 3], psi_hessian: [[0.0; 3]; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        if !(self.q_amp.abs() < 1.0) {
            return Err(Error::Config(format!("|q_amp| must be below 1, got {}", self.q_amp)));
        }
        if !(self.amplitude > 0.0) {
            return Err(Error::TaylorSign(format!("amplitude A = {} gives no pressure gradient at the boundary", self.amplitude)));
        }
        for i in 0..3 {
            for j in 0..3 {
                if self.psi_hessian[i][j] != self.psi_hessian[j][i] {
                    return Err(Error::Config("psi_hessian must be symmetric".into()));
                }
            }
        }
        Ok(())
    }

    /// sigma_0^2 with its gradient and Hessian.
    pub fn sigma2(&self, y: &[f64; 3]) -> (f64, [f64; 3], [[f64; 3]; 3]) {
        let a = self.amplitude;
        let q = self.q_amp;
        let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
        let qq = 1.0 + q * y[0];
        let d1 = |j: usize| if j == 0 { 1.0 } else { 0.0 };
        let v = self.c.powi(4) + a * (1.0 - r2) * qq;
        let g = std::array::from_fn(|j| a * (-2.0 * y[j] * qq + (1.0 - r2) * q * d1(j)));
        let h = std::array::from_fn(|j| {
            std::array::from_fn(|k| {
                let djk = if j == k { 1.0 } else { 0.0 };
                a * (-2.0 * djk * qq - 2.0 * y[j] * q * d1(k) - 2.0 * y[k] * q * d1(j))
            })
        });
        (v, g, h)
    }

    pub fn grad_psi(&self, y: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| self.psi_linear[i] + (0..3).map(|j| self.psi_hessian[i][j] * y[j]).sum::<f64>())
    }

    /// Exact t = 0 values of (theta_0, theta_1) per component and (lambda_0, lambda_1) at one point.
    pub fn point_data(&self, y: &[f64; 3]) -> PointData {
        let (s2, ds2, hs2) = self.sigma2(y);
        let h = self.psi_hessian;
        let v = self.grad_psi(y);
        let p = s2 + v.iter().map(|x| x * x).sum::<f64>();
        let v0 = p.sqrt();
        let dp: [f64; 3] = std::array::from_fn(|j| ds2[j] + 2.0 * (0..3).map(|k| v[k] * h[k][j]).sum::<f64>());
        let ddp: [[f64; 3]; 3] = std::array::from_fn(|j| {
            std::array::from_fn(|k| hs2[j][k] + 2.0 * (0..3).map(|l| h[k][l] * h[l][j]).sum::<f64>())
        });
        let dv0: [f64; 3] = std::array::from_fn(|j| dp[j] / (2.0 * v0));
        let ddv0: [[f64; 3]; 3] =
            std::array::from_fn(|j| std::array::from_fn(|k| ddp[j][k] / (2.0 * v0) - dp[j] * dp[k] / (4.0 * v0 * v0 * v0)));
        let lap_psi = h[0][0] + h[1][1] + h[2][2];
        // time derivatives from div V = 0 and curl V = 0
        let s1 = -2.0 * v0 * lap_psi + 2.0 * (0..3).map(|i| v[i] * dv0[i]).sum::<f64>();
        let ds1: [f64; 3] = std::array::from_fn(|j| {
            -2.0 * dv0[j] * lap_psi + 2.0 * (0..3).map(|i| h[i][j] * dv0[i] + v[i] * ddv0[i][j]).sum::<f64>()
        });
        // d_mu V^nu
        let mut dv = [[0.0; 4]; 4];
        dv[0][0] = -lap_psi;
        for i in 0..3 {
            dv[0][i + 1] = -dv0[i];
            dv[i + 1][0] = dv0[i];
            for j in 0..3 {
                dv[j + 1][i + 1] = h[i][j];
            }
        }
        let eta = [-1.0, 1.0, 1.0, 1.0];
        let mut quad = 0.0;
        for mu in 0..4 {
            for nu in 0..4 {
                quad += eta[mu] * eta[nu] * dv[mu][nu] * dv[mu][nu];
            }
        }
        let s2tt = hs2[0][0] + hs2[1][1] + hs2[2][2] + 2.0 * quad;
        let theta0 = [v0, v[0], v[1], v[2]];
        let theta1 = [s1 / (2.0 * v0), -ds2[0] / (2.0 * v0), -ds2[1] / (2.0 * v0), -ds2[2] / (2.0 * v0)];
        let lambda0 = v0 * s1 + (0..3).map(|i| v[i] * ds2[i]).sum::<f64>();
        let grad2 = -s1 * s1 + ds2.iter().map(|x| x * x).sum::<f64>();
        let mut vv = v0 * v0 * s2tt;
        for i in 0..3 {
            vv += 2.0 * v0 * v[i] * ds1[i];
            for j in 0..3 {
                vv += v[i] * v[j] * hs2[i][j];
            }
        }
        let lambda1 = (-0.5 * grad2 + vv) / v0;
        PointData { sigma2: s2, theta0, theta1, lambda0, lambda1 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PointData {
    pub sigma2: f64,
    pub theta0: [f64; 4],
    pub theta1: [f64; 4],
    pub lambda0: f64,
    pub lambda1: f64,
}

/// Initial ladders on the Galerkin bases: theta[k][nu] and lambda[k] for k = 0..=K+1.
#[derive(Clone, Debug)]
pub struct DataLadder {
    pub theta: Vec<[DVector<f64>; 4]>,
    pub lambda: Vec<DVector<f64>>,
    pub sigma: DVector<f64>,
    pub map: LagrangianMap,
}

impl DataLadder {
    pub fn depth(&self) -> usize {
        self.theta.len() - 2
    }

    /// State at t = 0 holding levels 0..=k and the rate of level k; acceleration zero.
    pub fn truncated_state(&self, k: usize) -> FieldState {
        let lad = |d: &[DVector<f64>]| Ladder::from_derivs(k, &d[..(k + 2).min(d.len())]);
        FieldState {
            t: 0.0,
            theta: std::array::from_fn(|nu| {
                let d: Vec<DVector<f64>> = self.theta.iter().map(|l| l[nu].clone()).collect();
                lad(&d)
            }),
            lambda: lad(&self.lambda),
            sigma: self.sigma.clone(),
            map: self.map.clone(),
        }
    }
}

/// Builds the compatible data ladder: closed forms for levels 0 and 1, then each
/// level k + 2 from the level-k Galerkin equation at t = 0.
pub fn compatible_data(disc: &Discretization, asm: &Assembler, fam: &DataFamily, depth: usize) -> Result<DataLadder> {
    fam.validate()?;
    let h1 = &disc.h1;
    let h10 = &disc.h10;
    let pv: Vec<PointData> = h1.vol.nodes.iter().map(|y| fam.point_data(y)).collect();
    let pb: Vec<PointData> = h1.bnd.nodes.iter().map(|y| fam.point_data(y)).collect();
    let mut theta0 = Vec::new();
    let mut theta1 = Vec::new();
    for nu in 0..4 {
        let f0: Vec<f64> = pv.iter().map(|p| p.theta0[nu]).collect();
        let f1: Vec<f64> = pv.iter().map(|p| p.theta1[nu]).collect();
        let b1: Vec<f64> = pb.iter().map(|p| p.theta1[nu]).collect();
        let (x, v) = project_initial_data(&f0, &f1, &b1, h1)?;
        theta0.push(x);
        theta1.push(v);
    }
    let sigma = project(&pv.iter().map(|p| p.sigma2).collect::<Vec<_>>(), h1);
    let l0 = project(&pv.iter().map(|p| p.lambda0).collect::<Vec<_>>(), h10);
    let l1 = project(&pv.iter().map(|p| p.lambda1).collect::<Vec<_>>(), h10);
    let mut data = DataLadder {
        theta: vec![to4(theta0), to4(theta1)],
        lambda: vec![l0, l1],
        sigma,
        map: LagrangianMap::identity(h1),
    };
    for k in 0..depth {
        let st = data.truncated_state(k);
        let snap = assemble_snapshot(disc, asm, &st, k)?;
        let (th, la) = next_level(&snap, &data, k)?;
        data.theta.push(th);
        data.lambda.push(la);
    }
    Ok(data)
}

fn to4(v: Vec<DVector<f64>>) -> [DVector<f64>; 4] {
    let mut it = v.into_iter();
    std::array::from_fn(|_| it.next().unwrap())
}

fn next_level(snap: &Snapshot, data: &DataLadder, k: usize) -> Result<([DVector<f64>; 4], DVector<f64>)> {
    let chol = factor_system(snap)?;
    let th = std::array::from_fn(|nu| {
        let lev = |i: usize| data.theta[i][nu].clone();
        theta_solver::level_accel(&chol, snap, k, nu, &lev)
    });
    let lev = |i: usize| data.lambda[i].clone();
    Ok((th, lambda_solver::level_accel(snap, k, &lev)))
}

/// Time grid and solver settings of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    pub dt: f64,
    pub t_final: f64,
    pub depth: usize,
    pub c_cfl: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { dt: 1e-3, t_final: 0.1, depth: 4, c_cfl: 1.0, tol: 1e-8, max_iter: 20 }
    }
}

impl SolverParams {
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config("dt and t_final must be positive".into()));
        }
        let n = (self.t_final / self.dt).round();
        if (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(Error::Config(format!("t_final = {} is not a multiple of dt = {}", self.t_final, self.dt)));
        }
        if n < 3.0 {
            return Err(Error::Config("at least 3 time steps are required".into()));
        }
        Ok(n as usize)
    }
}

/// One Picard iterate: states and frozen coefficient snapshots at every grid time.
#[derive(Clone, Debug)]
pub struct IterateBundle {
    pub index: usize,
    pub dt: f64,
    pub states: Vec<FieldState>,
    pub snaps: Vec<Snapshot>,
}

impl IterateBundle {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn monitors(&self) -> Vec<Monitor> {
        self.snaps.iter().map(|s| s.monitor).collect()
    }
}

fn polynomial_ladder(depth: usize, x0: &DVector<f64>, x1: &DVector<f64>, t: f64) -> Ladder {
    Ladder::from_derivs(depth, &[x0 + x1 * t, x1.clone()])
}

/// Theta = theta_0 + t theta_1, Lambda = lambda_0 + t lambda_1; Sigma and X transported with them.
pub fn zeroth_iterate(disc: &Discretization, asm: &Assembler, data: &DataLadder, p: &SolverParams) -> Result<IterateBundle> {
    let n = p.steps()?;
    let k = p.depth;
    let at = |t: f64| -> ([DVector<f64>; 4], DVector<f64>) {
        (
            std::array::from_fn(|nu| &data.theta[0][nu] + &data.theta[1][nu] * t),
            &data.lambda[0] + &data.lambda[1] * t,
        )
    };
    let m1 = disc.h1.m;
    let mut y = DVector::zeros(4 * m1);
    for i in 0..3 {
        y.rows_mut(i * m1, m1).copy_from(&data.map.x[i]);
    }
    y.rows_mut(3 * m1, m1).copy_from(&data.sigma);
    let mut states = Vec::with_capacity(n + 1);
    for s in 0..=n {
        let t = s as f64 * p.dt;
        let map = LagrangianMap { x: std::array::from_fn(|i| y.rows(i * m1, m1).into_owned()) };
        states.push(FieldState {
            t,
            theta: std::array::from_fn(|nu| polynomial_ladder(k, &data.theta[0][nu], &data.theta[1][nu], t)),
            lambda: polynomial_ladder(k, &data.lambda[0], &data.lambda[1], t),
            sigma: y.rows(3 * m1, m1).into_owned(),
            map,
        });
        if s < n {
            y = rk4_step(&y, t, p.dt, |tt, _, _| {
                let (th, la) = at(tt);
                transport_rate(disc, &th, &la)
            })?;
            check_map(disc, &y)?;
        }
    }
    finish_bundle(disc, asm, 0, p, states)
}

fn transport_rate(disc: &Discretization, theta: &[DVector<f64>; 4], lambda: &DVector<f64>) -> Result<DVector<f64>> {
    let m1 = disc.h1.m;
    let v = map_velocity(theta, &disc.h1)?;
    let s = sigma_rate(disc, lambda, &theta[0])?;
    let mut out = DVector::zeros(4 * m1);
    for i in 0..3 {
        out.rows_mut(i * m1, m1).copy_from(&v[i]);
    }
    out.rows_mut(3 * m1, m1).copy_from(&s);
    Ok(out)
}

fn check_map(disc: &Discretization, y: &DVector<f64>) -> Result<()> {
    let m1 = disc.h1.m;
    let off = y.len() - 4 * m1;
    let map = LagrangianMap { x: std::array::from_fn(|i| y.rows(off + i * m1, m1).into_owned()) };
    if !(map.min_jacobian(&disc.h1) > 0.0) {
        return Err(Error::MapDegenerate);
    }
    Ok(())
}

fn finish_bundle(
    disc: &Discretization,
    asm: &Assembler,
    index: usize,
    p: &SolverParams,
    states: Vec<FieldState>,
) -> Result<IterateBundle> {
    let snaps = states.iter().map(|s| assemble_snapshot(disc, asm, s, p.depth)).collect::<Result<Vec<_>>>()?;
    Ok(IterateBundle { index, dt: p.dt, states, snaps })
}

/// Offsets into the flat state vector: Theta lanes, Lambda lanes, then X and Sigma.
#[derive(Clone, Copy, Debug)]
struct Layout {
    k: usize,
    m1: usize,
    m0: usize,
}

impl Layout {
    fn th(&self, nu: usize, lvl: usize, rate: bool) -> usize {
        ((nu * (self.k + 1) + lvl) * 2 + rate as usize) * self.m1
    }
    fn lam(&self, lvl: usize, rate: bool) -> usize {
        4 * (self.k + 1) * 2 * self.m1 + (lvl * 2 + rate as usize) * self.m0
    }
    fn tail(&self) -> usize {
        self.lam(self.k + 1, false)
    }
    fn len(&self) -> usize {
        self.tail() + 4 * self.m1
    }

    fn pack(&self, s: &FieldState) -> DVector<f64> {
        let mut y = DVector::zeros(self.len());
        for nu in 0..4 {
            for l in 0..=self.k {
                y.rows_mut(self.th(nu, l, false), self.m1).copy_from(&s.theta[nu].coeff[l]);
                y.rows_mut(self.th(nu, l, true), self.m1).copy_from(&s.theta[nu].dcoeff[l]);
            }
        }
        for l in 0..=self.k {
            y.rows_mut(self.lam(l, false), self.m0).copy_from(&s.lambda.coeff[l]);
            y.rows_mut(self.lam(l, true), self.m0).copy_from(&s.lambda.dcoeff[l]);
        }
        for i in 0..3 {
            y.rows_mut(self.tail() + i * self.m1, self.m1).copy_from(&s.map.x[i]);
        }
        y.rows_mut(self.tail() + 3 * self.m1, self.m1).copy_from(&s.sigma);
        y
    }

    fn unpack(&self, y: &DVector<f64>, t: f64) -> FieldState {
        let seg = |o: usize, m: usize| y.rows(o, m).into_owned();
        let lad = |pos: &dyn Fn(usize) -> usize, rate: &dyn Fn(usize) -> usize, m: usize| Ladder {
            coeff: (0..=self.k).map(|l| seg(pos(l), m)).collect(),
            dcoeff: (0..=self.k).map(|l| seg(rate(l), m)).collect(),
            accel: DVector::zeros(m),
        };
        FieldState {
            t,
            theta: std::array::from_fn(|nu| lad(&|l| self.th(nu, l, false), &|l| self.th(nu, l, true), self.m1)),
            lambda: lad(&|l| self.lam(l, false), &|l| self.lam(l, true), self.m0),
            sigma: seg(self.tail() + 3 * self.m1, self.m1),
            map: LagrangianMap { x: std::array::from_fn(|i| seg(self.tail() + i * self.m1, self.m1)) },
        }
    }
}

/// Accelerations of every Theta lane (nu, level) and Lambda level under one snapshot.
fn accels(lay: &Layout, snap: &Snapshot, chol: &Chol, y: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let k = lay.k;
    let th = par::map_range(4 * (k + 1), |lane| {
        let (nu, lvl) = (lane / (k + 1), lane % (k + 1));
        let lev = |i: usize| -> DVector<f64> {
            if i <= lvl {
                y.rows(lay.th(nu, i, false), lay.m1).into_owned()
            } else {
                debug_assert_eq!(i, lvl + 1);
                y.rows(lay.th(nu, lvl, true), lay.m1).into_owned()
            }
        };
        theta_solver::level_accel(chol, snap, lvl, nu, &lev)
    });
    let la = (0..=k)
        .map(|lvl| {
            let lev = |i: usize| -> DVector<f64> {
                if i <= lvl {
                    y.rows(lay.lam(i, false), lay.m0).into_owned()
                } else {
                    y.rows(lay.lam(lvl, true), lay.m0).into_owned()
                }
            };
            lambda_solver::level_accel(snap, lvl, &lev)
        })
        .collect();
    (th, la)
}

fn coupled_rate(disc: &Discretization, lay: &Layout, snap: &Snapshot, chol: &Chol, y: &DVector<f64>) -> Result<DVector<f64>> {
    let k = lay.k;
    let (th, la) = accels(lay, snap, chol, y);
    let mut d = DVector::zeros(lay.len());
    for nu in 0..4 {
        for l in 0..=k {
            let v = y.rows(lay.th(nu, l, true), lay.m1).into_owned();
            d.rows_mut(lay.th(nu, l, false), lay.m1).copy_from(&v);
            d.rows_mut(lay.th(nu, l, true), lay.m1).copy_from(&th[nu * (k + 1) + l]);
        }
    }
    for l in 0..=k {
        let v = y.rows(lay.lam(l, true), lay.m0).into_owned();
        d.rows_mut(lay.lam(l, false), lay.m0).copy_from(&v);
        d.rows_mut(lay.lam(l, true), lay.m0).copy_from(&la[l]);
    }
    let theta: [DVector<f64>; 4] = std::array::from_fn(|nu| y.rows(lay.th(nu, 0, false), lay.m1).into_owned());
    let lambda = y.rows(lay.lam(0, false), lay.m0).into_owned();
    let tr = transport_rate(disc, &theta, &lambda)?;
    d.rows_mut(lay.tail(), 4 * lay.m1).copy_from(&tr);
    Ok(d)
}

/// Cubic Lagrange weights at `s` for nodes 0, 1, 2, 3.
pub fn lagrange4(s: f64) -> [f64; 4] {
    std::array::from_fn(|i| {
        let mut w = 1.0;
        for j in 0..4 {
            if j != i {
                w *= (s - j as f64) / (i as f64 - j as f64);
            }
        }
        w
    })
}

/// Coefficients from `snaps` interpolated to the midpoint of step n.
pub fn midpoint_snapshot(snaps: &[Snapshot], n: usize, dt: f64) -> Snapshot {
    let last = snaps.len() - 1;
    let i0 = n.saturating_sub(1).min(last - 3);
    let w = lagrange4(n as f64 + 0.5 - i0 as f64);
    let refs: Vec<&Snapshot> = snaps[i0..i0 + 4].iter().collect();
    Snapshot::combine(&refs, &w, (n as f64 + 0.5) * dt)
}

/// Marches the linearized system with the coefficients of `prev` from the data at t = 0.
pub fn march(disc: &Discretization, prev: &IterateBundle, data: &DataLadder, p: &SolverParams) -> Result<Vec<FieldState>> {
    let n = p.steps()?;
    if prev.snaps.len() != n + 1 {
        return Err(Error::History(format!("{} snapshots for {} steps", prev.snaps.len(), n)));
    }
    check_cfl(p.dt, &disc.h1, p.c_cfl)?;
    check_cfl(p.dt, &disc.h10, p.c_cfl)?;
    let lay = Layout { k: p.depth, m1: disc.h1.m, m0: disc.h10.m };
    let chols: Vec<Chol> = prev.snaps.iter().map(factor_system).collect::<Result<_>>()?;
    let mut y = lay.pack(&data.truncated_state(p.depth));
    let mut states = Vec::with_capacity(n + 1);
    for s in 0..=n {
        let t = s as f64 * p.dt;
        let mut st = lay.unpack(&y, t);
        let (th, la) = accels(&lay, &prev.snaps[s], &chols[s], &y);
        for nu in 0..4 {
            st.theta[nu].accel = th[nu * (p.depth + 1) + p.depth].clone();
        }
        st.lambda.accel = la[p.depth].clone();
        states.push(st);
        if s == n {
            break;
        }
        let mid = midpoint_snapshot(&prev.snaps, s, p.dt);
        let mid_chol = factor_system(&mid)?;
        y = rk4_step(&y, t, p.dt, |_, z, stage| match stage {
            0 => coupled_rate(disc, &lay, &prev.snaps[s], &chols[s], z),
            1 => coupled_rate(disc, &lay, &mid, &mid_chol, z),
            _ => coupled_rate(disc, &lay, &prev.snaps[s + 1], &chols[s + 1], z),
        })?;
        check_map(disc, &y)?;
    }
    Ok(states)
}

pub fn picard_step(
    disc: &Discretization,
    asm: &Assembler,
    prev: &IterateBundle,
    data: &DataLadder,
    p: &SolverParams,
) -> Result<IterateBundle> {
    let states = march(disc, prev, data, p)?;
    finish_bundle(disc, asm, prev.index + 1, p, states)
}

/// Difference energy of two states at one time: rates, flat gradients and the
/// boundary traces of the rates, over levels up to min(5, K), plus Lambda.
pub fn difference_energy(disc: &Discretization, a: &FieldState, b: &FieldState) -> f64 {
    let lmax = a.depth().min(5);
    let mut e = 0.0;
    let sq = |x: &DVector<f64>, m: &nalgebra::DMatrix<f64>| x.dot(&(m * x));
    for nu in 0..4 {
        for l in 0..=lmax {
            let dx = &a.theta[nu].coeff[l] - &b.theta[nu].coeff[l];
            let dv = &a.theta[nu].dcoeff[l] - &b.theta[nu].dcoeff[l];
            e += dv.norm_squared() + sq(&dx, &disc.h1.stiffness) + sq(&dv, &disc.h1.boundary_gram);
        }
    }
    for l in 0..=lmax {
        let dx = &a.lambda.coeff[l] - &b.lambda.coeff[l];
        let dv = &a.lambda.dcoeff[l] - &b.lambda.dcoeff[l];
        e += dv.norm_squared() + sq(&dx, &disc.h10.stiffness);
    }
    e
}

/// |grad (Lambda_a - Lambda_b)|^2 integrated over the boundary, summed over levels.
fn boundary_lambda_gradient(disc: &Discretization, a: &FieldState, b: &FieldState) -> f64 {
    let lmax = a.depth().min(5);
    let h10 = &disc.h10;
    let mut e = 0.0;
    for l in 0..=lmax {
        let d = &a.lambda.coeff[l] - &b.lambda.coeff[l];
        let g: [DVector<f64>; 3] = std::array::from_fn(|i| &h10.at_bnd.grads[i] * &d);
        for q in 0..h10.bnd.len() {
            e += h10.bnd.weights[q] * (g[0][q].powi(2) + g[1][q].powi(2) + g[2][q].powi(2));
        }
    }
    e
}

/// C_m: sup over the grid of the difference energy plus the time integral of the
/// boundary Lambda gradient difference.
pub fn consecutive_difference(disc: &Discretization, a: &IterateBundle, b: &IterateBundle) -> f64 {
    let n = a.states.len();
    let bl: Vec<f64> = (0..n).map(|s| boundary_lambda_gradient(disc, &a.states[s], &b.states[s])).collect();
    let mut integral = 0.0;
    let mut sup: f64 = 0.0;
    for s in 0..n {
        if s > 0 {
            integral += 0.5 * a.dt * (bl[s] + bl[s - 1]);
        }
        sup = sup.max(difference_energy(disc, &a.states[s], &b.states[s]) + integral);
    }
    sup
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub c: Vec<f64>,
    pub ratios: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Picard loop from the zeroth iterate until C_m <= tol or `max_iter` iterates.
/// `on_iterate` sees every bundle as it is produced.
pub fn run_until_converged(
    disc: &Discretization,
    asm: &Assembler,
    data: &DataLadder,
    p: &SolverParams,
    mut on_iterate: impl FnMut(&IterateBundle, Option<f64>),
) -> Result<(IterateBundle, ConvergenceReport)> {
    if !(p.tol > 0.0) {
        return Err(Error::Config("tol must be positive".into()));
    }
    let mut cur = zeroth_iterate(disc, asm, data, p)?;
    on_iterate(&cur, None);
    let mut rep = ConvergenceReport::default();
    while rep.iterations < p.max_iter {
        let next = picard_step(disc, asm, &cur, data, p)?;
        let c = consecutive_difference(disc, &next, &cur);
        on_iterate(&next, Some(c));
        if let Some(prev) = rep.c.last() {
            rep.ratios.push(c / prev);
        }
        rep.c.push(c);
        rep.iterations += 1;
        cur = next;
        if c <= p.tol {
            rep.converged = true;
            break;
        }
    }
    Ok((cur, rep))
}
