use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature order {0} exceeds the supported maximum {1}")]
    QuadOrder(usize, usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("mass matrix of the raw polynomial space is numerically singular (min/max eigenvalue {0:e})")]
    SingularMass(f64),
    #[error("Taylor sign violated: {0}")]
    TaylorSign(String),
    #[error("velocity not future-directed")]
    NotFutureDirected,
    #[error("map degenerate")]
    MapDegenerate,
    #[error("metric degenerate")]
    MetricDegenerate,
    #[error("time step too large: {0}")]
    Cfl(String),
    #[error("insufficient commuted history: {0}")]
    History(String),
    #[error("linear solve failed: {0}")]
    Solve(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors raised by the run-time guards (Taylor sign, causality, degeneracy, CFL).
    pub fn is_guard(&self) -> bool {
        matches!(
            self,
            Error::TaylorSign(_)
                | Error::NotFutureDirected
                | Error::MapDegenerate
                | Error::MetricDegenerate
                | Error::Cfl(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
