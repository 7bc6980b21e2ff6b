//! Controlled polyhedral sweeping processes: a projection kernel for moving
//! polyhedra, catching-up simulation, Slater and error-bound checks, discrete
//! optimal control with a derivative-free solver, and recovery of discrete
//! optimality multipliers.
//!
//! The numeric kernels are generic over [`scalar::Scalar`]; the aliases below
//! fix them at `f64`.

// `!(a > b)` is used on purpose so NaN falls on the rejecting side; index
// loops mirror the component formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod builtin;
pub mod control;
pub mod discopt;
pub mod format;
pub mod geometry;
pub mod linalg;
pub mod lp;
pub mod optimality;
pub mod scalar;
pub mod scenario;
pub mod sweep;

pub type Polyhedron = geometry::Polyhedron<f64>;
pub type ProjectionResult = geometry::ProjectionResult<f64>;
pub type SlaterCertificate = geometry::SlaterCertificate<f64>;
pub type Mesh = control::Mesh<f64>;
pub type ControlPath = control::ControlPath<f64>;
pub type SlaterReport = control::SlaterReport<f64>;
pub type ReparamResult = control::ReparamResult<f64>;
pub type Trajectory = sweep::Trajectory<f64>;
pub type ConvergenceTable = sweep::ConvergenceTable<f64>;
pub type StabilityReport = sweep::StabilityReport<f64>;
pub type VelocityLog = sweep::VelocityLog<f64>;
pub type Tolerances = scalar::Tolerances<f64>;
