//! Stationary workload correlation of queues fed by Lévy and Markov-additive
//! input.
//!
//! The crate covers four routes to `r(t) = Corr(Q_0, Q_t)`:
//!
//! * closed forms and matrix-analytic formulas for the transform
//!   `γ(ϑ) = Cov(Q_0, Q_T)`, `T ~ Exp(ϑ)`, of Markov-modulated fluid queues
//!   ([`fluid`]);
//! * numerical Laplace inversion of `γ(ϑ)/ϑ` and decay-rate extraction
//!   ([`transform`]);
//! * exact and Euler path simulation with one- and two-sided reflection
//!   ([`sim`]) feeding Monte Carlo covariance estimators ([`estimate`]);
//! * executable shape and monotonicity checks ([`properties`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::type_complexity)]

pub mod error;
pub mod estimate;
pub mod fluid;
pub mod linalg;
pub mod model;
pub mod properties;
pub mod quad;
pub mod sim;
pub mod transform;

pub use error::{Error, Result};
pub use estimate::{CorrelationCurve, CurveMethod, SimConfig, StartMethod};
pub use fluid::{
    FluidView, ModeExpansion, StationaryWorkloadFluid, TwoStateFluidParams,
};
pub use model::{
    GeneratorMatrix, JumpDist, LevyComponent, MapModel, SpectralFlag, ValidationReport,
};
pub use num_complex::Complex64;
pub use properties::{ShapeProperty, ShapeReport, Verdict};
pub use sim::{Discretization, PathGrid, ReflectedPath, RngStreamSpec};
pub use transform::{DecayFit, FitMode, InversionParams, TransformEvaluator};
