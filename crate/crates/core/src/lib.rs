//! Optimal deployment of component-based applications on priced virtual machine offers.
//!
//! The pipeline runs: validate the application, merge colocated components,
//! estimate instance counts and machine count, generate symmetry breakers,
//! build the constraint IR, solve it, and check the resulting plan.

pub mod confgraph;
pub mod encode;
pub mod estimator;
pub mod fixtures;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod smtlib;
pub mod solver;
pub mod symbreak;

pub use model::*;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Load(#[from] io::LoadError),
    #[error(transparent)]
    Validation(#[from] ValidationErrors),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Preprocess(#[from] preprocess::PreprocessError),
    #[error(transparent)]
    Estimate(#[from] estimator::EstimateError),
    #[error(transparent)]
    Breaker(#[from] symbreak::BreakerError),
    #[error(transparent)]
    Encode(#[from] encode::EncodeError),
    #[error(transparent)]
    Solve(#[from] solver::SolveError),
    #[error(transparent)]
    Smt(#[from] smtlib::SmtError),
}
