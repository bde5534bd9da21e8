//! revlab — a numerical laboratory for information revelation in a zero-noise
//! binary-asset market.
//!
//! The market has K groups of expected-utility agents (CARA or CRRA), each
//! observing a private Gaussian signal about a binary payoff. The crate
//! computes the no-learning equilibrium (agents trade on private posteriors
//! only), the rational-expectations equilibrium in which agents also condition
//! on the equilibrium price via a contour-integration fixed point, and the
//! economics built on top: revelation deficits, trade volume, the value of
//! private information, and the Grossman–Stiglitz acquisition equilibrium.

pub mod clearing;
pub mod econ;
pub mod grid;
pub mod mechanisms;
pub mod metrics;
pub mod numerics;
pub mod preferences;
pub mod ree;
pub mod runner;

/// Concrete scalar used by the lattice and solver layers. The kernels in
/// [`numerics`] are generic over [`numerics::Scalar`]; everything above them
/// is instantiated at this alias.
pub type Real = f64;

/// Probability-typed alias, documentation only.
pub type Prob = Real;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no equilibrium: {0}")]
    NoEquilibrium(String),
    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),
    #[error("aborted iteration: {0}")]
    AbortedIteration(String),
    #[error("empty contour: {0}")]
    EmptyContour(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
