//! Lagrangian spectral-Galerkin solver for the relativistic hard-phase fluid
//! with a free boundary, posed on the unit ball.
pub mod basis_ball;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod iteration;
pub mod lambda_solver;
pub mod newtonian;
pub mod par;
pub mod poly;
pub mod series;
pub mod sigma_thermo;
pub mod state;
pub mod theta_solver;
pub mod weak_forms;

pub use error::{Error, Result};
