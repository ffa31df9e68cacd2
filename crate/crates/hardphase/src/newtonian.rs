//! Newtonian variables and the c -> infinity sweep.
//!
//! Comparisons between speeds of light use identical Lagrangian labels, so the
//! Newtonian flow map is realized by the relativistic one at t = c t'.
use crate::basis_ball::Discretization;
use crate::diagnostics::energies_at;
use crate::error::{Error, Result};
use crate::iteration::{compatible_data, run_until_converged, ConvergenceReport, DataFamily, IterateBundle, SolverParams};
use crate::state::FieldState;
use crate::weak_forms::{Assembler, NodeJets};
use serde::Serialize;

/// (V / c, sigma^2 / c^2 - c^2)
pub fn rescale(v: [f64; 4], sigma2: f64, c: f64) -> ([f64; 4], f64) {
    (v.map(|x| x / c), sigma2 / (c * c) - c * c)
}

pub fn unrescale(vbar: [f64; 4], sigma2bar: f64, c: f64) -> ([f64; 4], f64) {
    (vbar.map(|x| x * c), (sigma2bar + c * c) * c * c)
}

/// Family at speed of light c from a barred family: A = c^2 Abar, psi = c psibar.
pub fn family_at(bar: &DataFamily, c: f64) -> DataFamily {
    DataFamily {
        c,
        amplitude: bar.amplitude * c * c,
        q_amp: bar.q_amp,
        psi_linear: bar.psi_linear.map(|x| x * c),
        psi_hessian: bar.psi_hessian.map(|r| r.map(|x| x * c)),
    }
}

/// Newtonian velocity v^i = c Theta^i / Theta^0 and enthalpy h = sqrt(Sigma) - c^2 at the volume nodes.
pub fn newtonian_fields(disc: &Discretization, state: &FieldState, c: f64) -> Result<([Vec<f64>; 3], Vec<f64>)> {
    let h1 = &disc.h1;
    let t0 = h1.reconstruct(&state.theta[0].coeff[0]);
    if t0.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::NotFutureDirected);
    }
    let v = std::array::from_fn(|i| {
        let ti = h1.reconstruct(&state.theta[i + 1].coeff[0]);
        ti.iter().zip(t0.iter()).map(|(a, b)| c * a / b).collect()
    });
    let h = h1.reconstruct(&state.sigma).iter().map(|s| s.max(0.0).sqrt() - c * c).collect();
    Ok((v, h))
}

/// Renormalized initial energy: sum over k <= K of the gradient energy of D^k Vbar,
/// the boundary energy of D^{k+1} Vbar and the gradient energy of D^{k+1} sigma bar^2.
pub fn renormalized_initial_energy(disc: &Discretization, state: &FieldState, c: f64, k: usize) -> Result<f64> {
    let (ev, vol_s, _) = energies_at(disc, state, k, c)?;
    Ok((0..=k).map(|j| ev[j] + vol_s[j + 1]).sum())
}

/// Reference-ball L2 norms of the Newtonian residuals at one state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NewtonianResidual {
    pub t_prime: f64,
    /// d_t' v + v . grad v + grad h
    pub momentum: f64,
    pub divergence: f64,
    pub curl: f64,
    /// max |h| on the boundary
    pub boundary_h: f64,
}

pub fn newtonian_residual(disc: &Discretization, state: &FieldState, c: f64) -> Result<NewtonianResidual> {
    let h1 = &disc.h1;
    let vj = NodeJets::new(state, 2, &h1.at_vol, &disc.h10.at_vol);
    let mut acc = [0.0; 3];
    for p in 0..h1.vol.len() {
        let ng = vj.geom(p)?;
        let th = vj.theta_at(p);
        let w: [crate::series::SJet; 3] = std::array::from_fn(|i| th[i + 1].div(&th[0]).scale(c));
        let sig = vj.sigma[p];
        let root = sig.v.c[0].max(0.0).sqrt();
        let dsig = ng.eulerian_grad(&sig);
        let dw: [[f64; 4]; 3] = std::array::from_fn(|i| ng.eulerian_grad(&w[i]).map(|s| s.c[0]));
        let mut mom = 0.0;
        for i in 0..3 {
            // Lagrangian d/dt' = c d/dt at fixed label
            let r = c * w[i].v.c[1] + dsig[i + 1].c[0] / (2.0 * root);
            mom += r * r;
        }
        let div = dw[0][1] + dw[1][2] + dw[2][3];
        let curl = (dw[2][2] - dw[1][3]).powi(2) + (dw[0][3] - dw[2][1]).powi(2) + (dw[1][1] - dw[0][2]).powi(2);
        let wq = h1.vol.weights[p];
        acc[0] += wq * mom;
        acc[1] += wq * div * div;
        acc[2] += wq * curl;
    }
    let boundary_h = h1.trace(&state.sigma).iter().map(|s| (s.max(0.0).sqrt() - c * c).abs()).fold(0.0, f64::max);
    Ok(NewtonianResidual {
        t_prime: state.t / c,
        momentum: acc[0].sqrt(),
        divergence: acc[1].sqrt(),
        curl: acc[2].sqrt(),
        boundary_h,
    })
}

fn l2(disc: &Discretization, a: &[f64], b: Option<&[f64]>) -> f64 {
    let w = &disc.h1.vol.weights;
    let s: f64 = (0..a.len()).map(|q| w[q] * (a[q] - b.map_or(0.0, |b| b[q])).powi(2)).sum();
    s.sqrt()
}

/// v and h along the label axis y = (s, 0, 0) at one sampled t'.
#[derive(Clone, Debug, Serialize)]
pub struct Slice {
    pub t_prime: f64,
    pub s: Vec<f64>,
    pub v: [Vec<f64>; 3],
    pub h: Vec<f64>,
}

pub const SLICE_POINTS: usize = 21;

pub fn axis_slice(disc: &Discretization, state: &FieldState, c: f64) -> Slice {
    let s: Vec<f64> = (0..SLICE_POINTS).map(|i| -1.0 + 2.0 * i as f64 / (SLICE_POINTS - 1) as f64).collect();
    let pts: Vec<[f64; 3]> = s.iter().map(|x| [*x, 0.0, 0.0]).collect();
    let tab = disc.h1.table_at(&pts);
    let t0 = &tab.values * &state.theta[0].coeff[0];
    let v = std::array::from_fn(|i| {
        let ti = &tab.values * &state.theta[i + 1].coeff[0];
        ti.iter().zip(t0.iter()).map(|(a, b)| c * a / b).collect()
    });
    let h = (&tab.values * &state.sigma).iter().map(|x| x.max(0.0).sqrt() - c * c).collect();
    Slice { t_prime: state.t / c, s, v, h }
}

/// One speed of light in a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRun {
    pub c: f64,
    pub error: Option<String>,
    pub convergence: Option<ConvergenceReport>,
    /// max over sampled t' of ||V^0 / c - c||
    pub v0_deviation: Option<f64>,
    pub initial_energy: Option<f64>,
    pub residuals: Vec<NewtonianResidual>,
    pub max_boundary_h: Option<f64>,
    pub slices: Vec<Slice>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitSweep {
    pub t1: f64,
    pub samples: Vec<f64>,
    pub runs: Vec<SweepRun>,
    /// (c, max over samples of ||v_{2c} - v_c||, same for h)
    pub differences: Vec<(f64, f64, f64)>,
    pub slope_v: Option<f64>,
    pub slope_h: Option<f64>,
    pub slope_v0: Option<f64>,
}

/// Least-squares slope of log y against log x; None with fewer than two usable points.
pub fn loglog_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let p: Vec<(f64, f64)> = pts.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if p.len() < 2 {
        return None;
    }
    let n = p.len() as f64;
    let mx = p.iter().map(|q| q.0).sum::<f64>() / n;
    let my = p.iter().map(|q| q.1).sum::<f64>() / n;
    let sxx: f64 = p.iter().map(|q| (q.0 - mx).powi(2)).sum();
    let sxy: f64 = p.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

fn state_at(b: &IterateBundle, t: f64) -> Result<&FieldState> {
    let n = (t / b.dt).round() as usize;
    let s = b.states.get(n).ok_or_else(|| Error::History(format!("no state at t = {t}")))?;
    if (s.t - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::Invalid(format!("t = {t} is not on the time grid")));
    }
    Ok(s)
}

type SweepFields = Vec<([Vec<f64>; 3], Vec<f64>)>;

fn sweep_one(
    disc: &Discretization,
    asm: &Assembler,
    bar: &DataFamily,
    c: f64,
    t1: f64,
    samples: &[f64],
    base: &SolverParams,
) -> Result<(SweepRun, SweepFields)> {
    let fam = family_at(bar, c);
    let p = SolverParams { t_final: c * t1, ..base.clone() };
    let data = compatible_data(disc, asm, &fam, p.depth)?;
    let (bundle, rep) = run_until_converged(disc, asm, &data, &p, |_, _| {})?;
    let mut fields = Vec::new();
    let mut dev: f64 = 0.0;
    let mut residuals = Vec::new();
    let mut slices = Vec::new();
    for &tp in samples {
        let s = state_at(&bundle, c * tp)?;
        let t0 = disc.h1.reconstruct(&s.theta[0].coeff[0]);
        let d: Vec<f64> = t0.iter().map(|x| x / c - c).collect();
        dev = dev.max(l2(disc, &d, None));
        fields.push(newtonian_fields(disc, s, c)?);
        residuals.push(newtonian_residual(disc, s, c)?);
        slices.push(axis_slice(disc, s, c));
    }
    let max_h = bundle
        .states
        .iter()
        .map(|s| disc.h1.trace(&s.sigma).iter().map(|x| (x.max(0.0).sqrt() - c * c).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let e0 = renormalized_initial_energy(disc, &bundle.states[0], c, p.depth.min(2))?;
    Ok((
        SweepRun {
            c,
            error: None,
            convergence: Some(rep),
            v0_deviation: Some(dev),
            initial_energy: Some(e0),
            residuals,
            max_boundary_h: Some(max_h),
            slices,
        },
        fields,
    ))
}

/// Runs every c of the ladder to t = c t1 and compares Newtonian fields at the sampled t'.
pub fn limit_sweep(
    disc: &Discretization,
    asm: &Assembler,
    bar: &DataFamily,
    ladder: &[f64],
    t1: f64,
    n_samples: usize,
    base: &SolverParams,
) -> Result<LimitSweep> {
    if ladder.is_empty() || ladder.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Config("c ladder must be nonempty with positive entries".into()));
    }
    if !(t1 > 0.0) || n_samples == 0 {
        return Err(Error::Config("t1 and the sample count must be positive".into()));
    }
    let samples: Vec<f64> = (1..=n_samples).map(|j| t1 * j as f64 / n_samples as f64).collect();
    for &c in ladder {
        for &tp in &samples {
            let n = c * tp / base.dt;
            if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
                return Err(Error::Config(format!("sample t' = {tp} at c = {c} is not on the time grid of dt = {}", base.dt)));
            }
        }
    }
    let out = crate::par::map_slice(ladder, |&c| sweep_one(disc, asm, bar, c, t1, &samples, base));
    let mut runs = Vec::new();
    let mut fields: Vec<Option<SweepFields>> = Vec::new();
    for (c, r) in ladder.iter().zip(out) {
        match r {
            Ok((run, f)) => {
                runs.push(run);
                fields.push(Some(f));
            }
            Err(e) => {
                runs.push(SweepRun {
                    c: *c,
                    error: Some(e.to_string()),
                    convergence: None,
                    v0_deviation: None,
                    initial_energy: None,
                    residuals: Vec::new(),
                    max_boundary_h: None,
                    slices: Vec::new(),
                });
                fields.push(None);
            }
        }
    }
    let mut differences = Vec::new();
    for i in 0..ladder.len() {
        for j in 0..ladder.len() {
            if (ladder[j] - 2.0 * ladder[i]).abs() > 1e-12 * ladder[i] {
                continue;
            }
            if let (Some(a), Some(b)) = (&fields[i], &fields[j]) {
                let mut dvv: f64 = 0.0;
                let mut dh: f64 = 0.0;
                for s in 0..samples.len() {
                    let v2: f64 = (0..3).map(|k| l2(disc, &b[s].0[k], Some(&a[s].0[k])).powi(2)).sum();
                    dvv = dvv.max(v2.sqrt());
                    dh = dh.max(l2(disc, &b[s].1, Some(&a[s].1)));
                }
                differences.push((ladder[i], dvv, dh));
            }
        }
    }
    let slope_v = loglog_slope(&differences.iter().map(|d| (d.0, d.1)).collect::<Vec<_>>());
    let slope_h = loglog_slope(&differences.iter().map(|d| (d.0, d.2)).collect::<Vec<_>>());
    let slope_v0 = loglog_slope(&runs.iter().filter_map(|r| r.v0_deviation.map(|d| (r.c, d))).collect::<Vec<_>>());
    Ok(LimitSweep { t1, samples, runs, differences, slope_v, slope_h, slope_v0 })
}
