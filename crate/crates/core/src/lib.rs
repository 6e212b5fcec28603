//! Storage and retrieval of photons in a free-space Lambda-type atomic
//! ensemble: exact solver, retrieval kernels, optimal modes, adiabatic and
//! fast closed forms, and control shaping.

pub mod adiabatic;
pub mod bessel;
pub mod error;
pub mod fast;
pub mod kernels;
pub mod model;
pub mod optimizer;
pub mod quad;
pub mod solver;

pub use error::{Error, Result};
pub use kernels::KernelMatrix;
pub use model::{ControlField, DecaylessMode, FieldMode, Grid, Params, SpinWave};
pub use num_complex::Complex64 as C64;
pub use optimizer::{Direction, ModeKind, ModeOptions, OptimResult};
pub use solver::{SimResult, StageKind, StageSpec};
