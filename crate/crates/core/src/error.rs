use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { what: &'static str, iterations: usize, residual: f64 },
    #[error("grid too coarse: {detail} (ratio {ratio:.3e})")]
    GridTooCoarse { detail: String, ratio: f64 },
    #[error("non-finite value at z = {z}, t = {t}")]
    NotFinite { z: f64, t: f64 },
    #[error("bisection bracket failure: {0}")]
    Bracket(String),
    #[error("target too fast: |control| exceeds the cap on t in [{t0}, {t1}]")]
    ShapingTooFast { t0: f64, t1: f64 },
    #[error("efficiency decreased from {before} to {after} at iteration {iteration}")]
    EfficiencyDecrease { iteration: usize, before: f64, after: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
