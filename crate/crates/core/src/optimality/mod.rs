//! Coderivative of the polyhedral normal-cone map and the discrete
//! necessary optimality conditions: multiplier recovery for a computed
//! triple and an independent residual check of every condition family.

mod coderivative;
mod recovery;

use thiserror::Error;

use crate::discopt::DiscoptError;
use crate::geometry::GeometryError;

pub use coderivative::{
    coderivative_member, p_set_element, q_pattern, CoderivativeCandidate,
    CoderivativeCertificate, Membership, PatternKind,
};
pub use recovery::{
    recover_multipliers, residual_report, MultiplierSet, Nontriviality, Recovery,
    RecoveryOptions, ResidualReport,
};

/// Slack or inner product magnitudes up to this count as zero when
/// evaluating the strict-inequality premises.
pub const PREMISE_BAND: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimalityError {
    #[error("x violates constraint {index} by {violation}")]
    NotFeasible { index: usize, violation: f64 },
    #[error("v is not in the normal cone (distance {distance})")]
    NotInNormalCone { distance: f64 },
    #[error("p_{index} > 0 but <u_{index}, y> = {inner} is not zero")]
    InconsistentInput { index: usize, inner: f64 },
    #[error("no admissible multipliers: {0}")]
    Infeasible(String),
    #[error("active normals at node {node} are not positively linearly independent")]
    PlicqViolated { node: usize },
    #[error("triple fails the feasibility precondition: {0:?}")]
    Precondition(Vec<String>),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Discopt(#[from] DiscoptError),
}
