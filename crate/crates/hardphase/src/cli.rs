//! Command-line front end: simulate, verify-identities, limit-sweep, gen-data.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 guard abort,
//! 3 non-convergence or solver failure, 4 identity failure.
use crate::basis_ball::Discretization;
use crate::config::SimConfig;
use crate::diagnostics::{constraint_residuals, energy_functionals, verify_identities, ConstraintRow, EnergyReport, Identity, IdentityRow};
use crate::error::Error;
use crate::io::{fmt17, write_checkpoint, write_csv, write_json, REPORT_SCHEMA};
use crate::iteration::{compatible_data, run_until_converged, ConvergenceReport, IterateBundle};
use crate::newtonian::{family_at, limit_sweep, LimitSweep};
use crate::sigma_thermo::boundary_drift;
use crate::state::FieldState;
use crate::weak_forms::{Assembler, Monitor};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use serde::Serialize;
use std::path::{Path, PathBuf};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_GUARD: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_IDENTITY: i32 = 4;

/// Identity residual ceiling for verify-identities.
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "hardphase", version, about = "Hard-phase free-boundary fluid on the unit ball")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Picard iteration to convergence with energy, constraint and monitor reports.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Exact identities on random polynomial fields.
    VerifyIdentities {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long, default_value_t = 100)]
        sets: usize,
        /// flip one sign in the named identity (negative test)
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
    /// Runs over a ladder of speeds of light and fits the decay of the differences.
    LimitSweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Writes the compatible initial-data ladder.
    GenData {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let out = match cli.command {
        Command::Simulate { config } => simulate(&config),
        Command::VerifyIdentities { seed, degree, sets, corrupt } => identities(seed, degree, sets, corrupt.as_deref()),
        Command::LimitSweep { config } => sweep(&config),
        Command::GenData { config } => gen_data(&config),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            let kind = match code {
                EXIT_GUARD => "guard abort",
                EXIT_CONFIG => "config error",
                _ => "solver failure",
            };
            let msg = match &e {
                Error::Config(m) => m.clone(),
                e => e.to_string(),
            };
            eprintln!("{kind}: {msg}");
            code
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_guard() {
        return EXIT_GUARD;
    }
    match e {
        Error::Config(_) | Error::Io(_) | Error::QuadOrder(..) | Error::SingularMass(_) | Error::Invalid(_) => EXIT_CONFIG,
        _ => EXIT_NONCONVERGENCE,
    }
}

fn setup(path: &Path) -> crate::Result<(SimConfig, Discretization, Assembler, PathBuf)> {
    let cfg = SimConfig::load(path)?;
    let (qv, qb) = cfg.quad_orders();
    let disc = Discretization::new(cfg.basis_degree, qv, qb)?;
    let asm = Assembler::new(&disc);
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    Ok((cfg, disc, asm, dir))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: u32,
    command: &'a str,
    #[serde(flatten)]
    body: T,
}

fn envelope<T: Serialize>(command: &str, body: T) -> Envelope<'_, T> {
    Envelope { schema: REPORT_SCHEMA, command, body }
}

#[derive(Serialize)]
struct BasisInfo {
    degree: usize,
    m_h1: usize,
    m_h10: usize,
    quad_volume: usize,
    quad_boundary: usize,
}

#[derive(Serialize)]
struct MonitorSummary {
    min_abar: f64,
    min_theta0: f64,
    min_velocity_ratio: f64,
    min_gamma: f64,
    max_boundary_drift: f64,
    /// grid times at which a monitored infimum fell below its floor
    flagged_times: Vec<f64>,
}

#[derive(Serialize)]
struct SimReport<'a> {
    config: &'a SimConfig,
    basis: BasisInfo,
    convergence: &'a ConvergenceReport,
    t_final: f64,
    constraints_t0: ConstraintRow,
    constraints_sup: ConstraintRow,
    monitors: MonitorSummary,
    energy_order: usize,
    energy: EnergyReport,
}

fn row(vals: &[f64]) -> Vec<String> {
    vals.iter().map(|v| fmt17(*v)).collect()
}

fn level_row(t: f64, k: usize, vals: &[f64]) -> Vec<String> {
    let mut r = vec![fmt17(t), k.to_string()];
    r.extend(row(vals));
    r
}

/// Per-level discrete Theta energies and the per-step defect of the energy identity.
fn energy_rows(bundle: &IterateBundle) -> Vec<Vec<String>> {
    let depth = bundle.states[0].depth();
    let level = |s: &FieldState, n: usize, k: usize| -> (f64, f64) {
        let f = &bundle.snaps[n].forms;
        let mut e = 0.0;
        let mut r = 0.0;
        for l in &s.theta {
            let a = if k < depth { &l.dcoeff[k + 1] } else { &l.accel };
            e += crate::theta_solver::discrete_energy(&l.coeff[k], &l.dcoeff[k], &f[0].g, &f[0].bf);
            r += crate::theta_solver::energy_rate(&l.coeff[k], &l.dcoeff[k], a, &f[0], &f[1]);
        }
        (e, r)
    };
    let mut rows = Vec::new();
    for k in 0..=depth {
        let mut prev: Option<(f64, f64)> = None;
        for (n, s) in bundle.states.iter().enumerate() {
            let (e, r) = level(s, n, k);
            let res = prev.map_or(0.0, |(pe, pr)| (e - pe - 0.5 * bundle.dt * (pr + r)).abs());
            rows.push(level_row(s.t, k, &[e, res]));
            prev = Some((e, r));
        }
    }
    rows
}

fn lambda_rows(disc: &Discretization, bundle: &IterateBundle) -> Vec<Vec<String>> {
    let depth = bundle.states[0].depth();
    let w = &disc.h10.bnd.weights;
    let mut rows = Vec::new();
    for k in 0..=depth {
        for s in &bundle.states {
            let x = &s.lambda.coeff[k];
            let (l2, g) = crate::lambda_solver::norms(&disc.h10, x);
            let dn = crate::lambda_solver::gradient_trace(&disc.h10, x);
            let bn = dn.iter().zip(w).map(|(d, w)| w * d * d).sum::<f64>().sqrt();
            rows.push(level_row(s.t, k, &[l2, g, bn]));
        }
    }
    rows
}

fn simulate(path: &Path) -> crate::Result<i32> {
    let (cfg, disc, asm, dir) = setup(path)?;
    let fam = cfg.family();
    fam.validate()?;
    let p = cfg.solver();
    let data = compatible_data(&disc, &asm, &fam, p.depth)?;
    let (bundle, conv) = run_until_converged(&disc, &asm, &data, &p, |b, c| match c {
        Some(c) => eprintln!("iterate {}: C = {c:.3e}", b.index),
        None => eprintln!("iterate 0"),
    })?;

    let cons = constraint_residuals(&disc, &bundle)?;
    let mut sup = cons[0];
    for r in &cons {
        sup.b = sup.b.max(r.b);
        sup.x = sup.x.max(r.x);
        sup.omega = sup.omega.max(r.omega);
        sup.omega_space = sup.omega_space.max(r.omega_space);
        sup.box_v = sup.box_v.max(r.box_v);
        sup.sigma_wave = sup.sigma_wave.max(r.sigma_wave);
    }
    sup.t = bundle.states.last().map_or(0.0, |s| s.t);

    let mons: Vec<Monitor> = bundle.monitors();
    let drift: Vec<f64> = bundle.states.iter().map(|s| boundary_drift(&disc, &s.sigma, cfg.c)).collect();
    let floors = cfg.floors();
    let fold = |f: &dyn Fn(&Monitor) -> f64| mons.iter().map(f).fold(f64::INFINITY, f64::min);
    let monitors = MonitorSummary {
        min_abar: fold(&|m| m.min_abar),
        min_theta0: fold(&|m| m.min_theta0),
        min_velocity_ratio: fold(&|m| m.min_velocity_ratio),
        min_gamma: fold(&|m| m.min_gamma),
        max_boundary_drift: drift.iter().cloned().fold(0.0, f64::max),
        flagged_times: bundle
            .states
            .iter()
            .zip(&mons)
            .filter(|(_, m)| {
                !(m.min_abar > floors.a0 && m.min_theta0 > floors.theta0 && m.min_velocity_ratio > floors.velocity_ratio)
            })
            .map(|(s, _)| s.t)
            .collect(),
    };
    let energy_order = p.depth.min(2);
    let energy = energy_functionals(&disc, &bundle, energy_order, cfg.c)?;

    let times = bundle.times();
    write_csv(
        &dir.join("monitor.csv"),
        &["t", "min_a_bar", "min_Theta0", "boundary_drift"],
        &times.iter().zip(&mons).zip(&drift).map(|((t, m), d)| row(&[*t, m.min_abar, m.min_theta0, *d])).collect::<Vec<_>>(),
    )?;
    write_csv(&dir.join("energy.csv"), &["t", "k", "energy", "identity_residual"], &energy_rows(&bundle))?;
    write_csv(&dir.join("lambda.csv"), &["t", "k", "lambda_l2", "grad_lambda_l2", "normal_derivative_l2"], &lambda_rows(&disc, &bundle))?;
    write_csv(
        &dir.join("constraints.csv"),
        &["t", "b", "x", "omega", "omega_space", "box_v", "sigma_wave"],
        &cons.iter().map(|r| row(&[r.t, r.b, r.x, r.omega, r.omega_space, r.box_v, r.sigma_wave])).collect::<Vec<_>>(),
    )?;
    write_json(&dir.join("constraints.json"), &envelope("simulate", serde_json::json!({ "rows": cons })))?;
    write_json(&dir.join("convergence.json"), &envelope("simulate", &conv))?;
    let report = SimReport {
        config: &cfg,
        basis: BasisInfo {
            degree: cfg.basis_degree,
            m_h1: disc.h1.m,
            m_h10: disc.h10.m,
            quad_volume: cfg.quad_orders().0,
            quad_boundary: cfg.quad_orders().1,
        },
        convergence: &conv,
        t_final: p.t_final,
        constraints_t0: cons[0],
        constraints_sup: sup,
        monitors,
        energy_order,
        energy,
    };
    write_json(&dir.join("report.json"), &envelope("simulate", report))?;
    write_bundle_checkpoint(&dir.join("checkpoint.bin"), &disc, &bundle)?;

    if !conv.converged {
        eprintln!("not converged after {} iterates (last C = {:e})", conv.iterations, conv.c.last().copied().unwrap_or(f64::NAN));
        return Ok(EXIT_NONCONVERGENCE);
    }
    println!("converged in {} iterates; reports in {}", conv.iterations, dir.display());
    Ok(0)
}

/// Every state of a bundle as one row of a [n_times, flat_len] checkpoint.
pub fn write_bundle_checkpoint(path: &Path, disc: &Discretization, bundle: &IterateBundle) -> crate::Result<()> {
    let len = FieldState::flat_len(bundle.states[0].depth(), disc.h1.m, disc.h10.m);
    let mut data = Vec::with_capacity(len * bundle.states.len());
    for s in &bundle.states {
        data.extend(s.to_flat());
    }
    write_checkpoint(path, &[bundle.states.len(), len], &data)
}

/// States of a bundle checkpoint written with the same basis sizes and depth.
pub fn read_bundle_checkpoint(path: &Path, depth: usize, m1: usize, m0: usize) -> crate::Result<Vec<FieldState>> {
    let (dims, data) = crate::io::read_checkpoint(path)?;
    let len = FieldState::flat_len(depth, m1, m0);
    if dims.len() != 2 || dims[1] != len {
        return Err(Error::Invalid(format!("checkpoint shape {dims:?} does not match depth {depth}, m = ({m1}, {m0})")));
    }
    data.chunks(len)
        .map(|c| FieldState::from_flat(depth, m1, m0, c).ok_or_else(|| Error::Invalid("bad checkpoint row".into())))
        .collect()
}

fn identities(seed: u64, degree: usize, sets: usize, corrupt: Option<&str>) -> crate::Result<i32> {
    let corrupt = match corrupt {
        None => None,
        Some(n) => Some(Identity::from_name(n).ok_or_else(|| Error::Config(format!("unknown identity `{n}`")))?),
    };
    if degree > 4 {
        return Err(Error::Config(format!("degree must be at most 4, got {degree}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<IdentityRow> = verify_identities(&mut rng, sets, degree, corrupt);
    println!("{:<14} {:>24}", "identity", "max_residual");
    for r in &rows {
        println!("{:<14} {:>24}", r.identity, fmt17(r.max_residual));
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !(r.max_residual <= IDENTITY_TOL)).map(|r| r.identity).collect();
    if failed.is_empty() {
        Ok(0)
    } else {
        eprintln!("identity failure: {}", failed.join(", "));
        Ok(EXIT_IDENTITY)
    }
}

#[derive(Serialize)]
struct SweepReport<'a> {
    config: &'a SimConfig,
    note: Option<String>,
    sweep: &'a LimitSweep,
}

/// gnuplot script for the log-log decay curves in `sweep_differences.csv`.
pub fn plot_script() -> String {
    [
        "set datafile separator ','",
        "set logscale xy",
        "set key top right",
        "set xlabel 'c'",
        "set ylabel 'L2 difference'",
        "set title 'Newtonian limit: successive differences'",
        "set terminal pngcairo size 800,600",
        "set output 'sweep.png'",
        "plot 'sweep_differences.csv' skip 1 using 1:2 with linespoints title '|v_{2c} - v_c|', \\",
        "     'sweep_differences.csv' skip 1 using 1:3 with linespoints title '|h_{2c} - h_c|', \\",
        "     'sweep_v0.csv' skip 1 using 1:2 with linespoints title '|V^0/c - c|', \\",
        "     x**(-1) with lines dashtype 2 title 'c^{-1}'",
        "",
    ]
    .join("\n")
}

fn sweep(path: &Path) -> crate::Result<i32> {
    let (cfg, disc, asm, dir) = setup(path)?;
    let bar = cfg.family();
    family_at(&bar, 1.0).validate()?;
    let sw = limit_sweep(&disc, &asm, &bar, &cfg.ladder, cfg.t1, cfg.samples, &cfg.sweep_solver())?;
    let note = if sw.slope_v.is_none() { Some("slope undefined: fewer than two (c, 2c) pairs".to_string()) } else { None };
    if let Some(n) = &note {
        println!("{n}");
    }
    write_json(&dir.join("sweep.json"), &envelope("limit-sweep", SweepReport { config: &cfg, note: note.clone(), sweep: &sw }))?;
    let mut rows = Vec::new();
    for r in &sw.runs {
        for sl in &r.slices {
            for i in 0..sl.s.len() {
                rows.push(row(&[r.c, sl.t_prime, sl.s[i], sl.v[0][i], sl.v[1][i], sl.v[2][i], sl.h[i]]));
            }
        }
    }
    write_csv(&dir.join("sweep.csv"), &["c", "t_prime", "s", "v1", "v2", "v3", "h"], &rows)?;
    write_csv(
        &dir.join("sweep_differences.csv"),
        &["c", "v_difference", "h_difference"],
        &sw.differences.iter().map(|d| row(&[d.0, d.1, d.2])).collect::<Vec<_>>(),
    )?;
    write_csv(
        &dir.join("sweep_v0.csv"),
        &["c", "v0_deviation"],
        &sw.runs.iter().filter_map(|r| r.v0_deviation.map(|d| row(&[r.c, d]))).collect::<Vec<_>>(),
    )?;
    std::fs::write(dir.join("plot.gp"), plot_script())?;
    for r in &sw.runs {
        if let Some(e) = &r.error {
            eprintln!("c = {}: {e}", r.c);
        }
    }
    println!(
        "slopes: v {} h {} v0 {}",
        sw.slope_v.map_or("undefined".into(), fmt17),
        sw.slope_h.map_or("undefined".into(), fmt17),
        sw.slope_v0.map_or("undefined".into(), fmt17)
    );
    if sw.runs.iter().all(|r| r.error.is_some()) {
        return Ok(EXIT_GUARD);
    }
    Ok(0)
}

fn gen_data(path: &Path) -> crate::Result<i32> {
    let (cfg, disc, asm, dir) = setup(path)?;
    let fam = cfg.family();
    fam.validate()?;
    let data = compatible_data(&disc, &asm, &fam, cfg.depth)?;
    let names = ["theta0", "theta1", "theta2", "theta3", "lambda"];
    let mut rows = Vec::new();
    let mut norms = Vec::new();
    for k in 0..data.theta.len() {
        let fields: Vec<&nalgebra::DVector<f64>> = data.theta[k].iter().chain(std::iter::once(&data.lambda[k])).collect();
        let mut nk = Vec::new();
        for (f, v) in names.iter().zip(&fields) {
            for (i, x) in v.iter().enumerate() {
                rows.push(vec![k.to_string(), f.to_string(), i.to_string(), fmt17(*x)]);
            }
            nk.push(v.norm());
        }
        norms.push(nk);
    }
    write_csv(&dir.join("data.csv"), &["level", "field", "mode", "value"], &rows)?;
    write_json(
        &dir.join("data.json"),
        &envelope("gen-data", serde_json::json!({ "config": cfg, "fields": names, "level_norms": norms })),
    )?;
    let st = data.truncated_state(cfg.depth);
    write_checkpoint(&dir.join("data.bin"), &[1, FieldState::flat_len(cfg.depth, disc.h1.m, disc.h10.m)], &st.to_flat())?;
    println!("wrote {} levels to {}", data.theta.len(), dir.display());
    Ok(0)
}
