//! Run configuration read from TOML.
use crate::error::{Error, Result};
use crate::iteration::{DataFamily, SolverParams};
use crate::sigma_thermo::Floors;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "HARDPHASE_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    /// psi = 0: data at rest
    #[default]
    Radial,
    /// psi = l . y + y^T H y / 2
    Potential,
}

fn d_family() -> FamilyKind {
    FamilyKind::Radial
}
fn d_amplitude() -> f64 {
    0.1
}
fn d_depth() -> usize {
    4
}
fn d_degree() -> usize {
    5
}
fn d_dt() -> f64 {
    1e-3
}
fn d_t_final() -> f64 {
    0.1
}
fn d_t1() -> f64 {
    0.05
}
fn d_tol() -> f64 {
    1e-8
}
fn d_max_iter() -> usize {
    20
}
fn d_cfl() -> f64 {
    1.0
}
fn d_a0() -> f64 {
    1e-6
}
fn d_theta0_floor() -> f64 {
    1e-6
}
fn d_velocity_floor() -> f64 {
    1.0
}
fn d_ladder() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}
fn d_samples() -> usize {
    5
}
fn d_sweep_depth() -> usize {
    1
}
fn d_seed() -> u64 {
    42
}
fn d_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub c: f64,
    #[serde(default = "d_family")]
    pub family: FamilyKind,
    /// A in sigma_0^2 = c^4 + A (1 - r^2)(1 + q y^1); for sweeps, the barred amplitude
    #[serde(default = "d_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub q_amp: f64,
    #[serde(default)]
    pub psi_linear: [f64; 3],
    #[serde(default)]
    pub psi_hessian: [[f64; 3]; 3],
    /// commutation depth K
    #[serde(default = "d_depth")]
    pub depth: usize,
    #[serde(default = "d_degree")]
    pub basis_degree: usize,
    #[serde(default)]
    pub quad_volume: Option<usize>,
    #[serde(default)]
    pub quad_boundary: Option<usize>,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_t_final")]
    pub t_final: f64,
    #[serde(default = "d_t1")]
    pub t1: f64,
    #[serde(default = "d_tol")]
    pub picard_tol: f64,
    #[serde(default = "d_max_iter")]
    pub max_iter: usize,
    #[serde(default = "d_cfl")]
    pub c_cfl: f64,
    #[serde(default = "d_a0")]
    pub a0: f64,
    #[serde(default = "d_theta0_floor")]
    pub theta0_floor: f64,
    #[serde(default = "d_velocity_floor")]
    pub velocity_ratio_floor: f64,
    #[serde(default = "d_ladder")]
    pub ladder: Vec<f64>,
    #[serde(default = "d_samples")]
    pub samples: usize,
    /// commutation depth used by limit-sweep
    #[serde(default = "d_sweep_depth")]
    pub sweep_depth: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_output")]
    pub output_dir: PathBuf,
}

impl SimConfig {
    pub fn default_with_c(c: f64) -> Self {
        toml::from_str(&format!("c = {c:?}")).expect("defaults parse")
    }

    /// Parses and validates; every failure is a single-line `Error::Config`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(one_line(e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.c > 0.0) || !self.c.is_finite() {
            return bad(format!("c must be positive and finite, got {}", self.c));
        }
        if !self.amplitude.is_finite() {
            return bad("amplitude must be finite".into());
        }
        if self.family == FamilyKind::Radial && (self.psi_linear != [0.0; 3] || self.psi_hessian != [[0.0; 3]; 3]) {
            return bad("family radial takes no psi_linear or psi_hessian".into());
        }
        if !(2..=8).contains(&self.basis_degree) {
            return bad(format!("basis_degree must lie in 2..=8, got {}", self.basis_degree));
        }
        for (name, d) in [("depth", self.depth), ("sweep_depth", self.sweep_depth)] {
            if d == 0 || d > 5 {
                return bad(format!("{name} must lie in 1..=5, got {d}"));
            }
        }
        for (name, v) in [
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("t1", self.t1),
            ("picard_tol", self.picard_tol),
            ("c_cfl", self.c_cfl),
            ("a0", self.a0),
            ("theta0_floor", self.theta0_floor),
            ("velocity_ratio_floor", self.velocity_ratio_floor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if self.ladder.is_empty() || self.ladder.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return bad("ladder must be a nonempty list of positive speeds".into());
        }
        self.solver().steps()?;
        Ok(())
    }

    pub fn family(&self) -> DataFamily {
        DataFamily {
            c: self.c,
            amplitude: self.amplitude,
            q_amp: self.q_amp,
            psi_linear: self.psi_linear,
            psi_hessian: self.psi_hessian,
        }
    }

    pub fn solver(&self) -> SolverParams {
        SolverParams {
            dt: self.dt,
            t_final: self.t_final,
            depth: self.depth,
            c_cfl: self.c_cfl,
            tol: self.picard_tol,
            max_iter: self.max_iter,
        }
    }

    pub fn sweep_solver(&self) -> SolverParams {
        SolverParams { depth: self.sweep_depth, t_final: self.t1, ..self.solver() }
    }

    pub fn floors(&self) -> Floors {
        Floors { a0: self.a0, theta0: self.theta0_floor, velocity_ratio: self.velocity_ratio_floor }
    }

    pub fn quad_orders(&self) -> (usize, usize) {
        let d = crate::basis_ball::default_volume_order(self.basis_degree);
        (self.quad_volume.unwrap_or(d), self.quad_boundary.unwrap_or(d))
    }

    /// `output_dir`, unless the environment override is set.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.output_dir.clone(),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
