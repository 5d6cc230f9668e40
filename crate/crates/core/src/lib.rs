#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Kinetic and macroscopic chemotaxis models and the Bayesian inverse problem
//! that recovers tumbling kernels from density measurements.

pub mod bayes;
pub mod cache;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod kinetic;
pub mod ks;
pub mod macro_coeffs;
pub mod measurement;
pub mod spatial;
pub mod velocity;

pub use error::{Error, Result};
pub use kernel::{KernelFamily, KernelParams, SymmetricBasis};
pub use kinetic::{macro_density, KernelField, KineticSolver, KineticState};
pub use ks::{restrict_initial, CoefficientField, KsSolver, MacroState};
pub use measurement::{DataSet, ForwardModel, GMatrix, MeasurementSetup, Model, TestFunction};
pub use macro_coeffs::{compute_macro, MacroCoefficients};
pub use spatial::{SpatialGrid, SpatialProfile};
pub use velocity::VelocityGrid;
