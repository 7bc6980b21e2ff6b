//! Convex polyhedra `{x : <u_i, x> <= b_i}` and the queries the rest of the
//! crate needs: membership, residuals, projection, truncated distances,
//! Slater margins, Hoffman ratios, active sets and PLICQ.

mod bounds;
mod cone;
mod projection;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, norm};
use crate::lp::{LinearProgram, LpError, RowKind};
use crate::scalar::{Scalar, Tolerances};

pub use bounds::{plicq_check, SlaterCertificate};
pub use cone::{conic_fit, ConicFit};
pub use projection::ProjectionResult;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid polyhedron: {0}")]
    InvalidPolyhedron(String),
    #[error("polyhedron is empty")]
    EmptyPolyhedron,
    #[error("polyhedron does not meet the ball of radius {radius}")]
    EmptyTruncation { radius: f64 },
    #[error("point violates constraint {index} by {violation}")]
    NotFeasible { index: usize, violation: f64 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

impl From<LpError> for GeometryError {
    fn from(e: LpError) -> Self {
        GeometryError::NumericalFailure(format!("auxiliary LP: {e}"))
    }
}

/// The polyhedron `C(u, b) = {x : <u_i, x> <= b_i, i = 1..m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Polyhedron<S: Scalar> {
    normals: Vec<Vec<S>>,
    offsets: Vec<S>,
}

impl<S: Scalar> Polyhedron<S> {
    pub fn new(normals: Vec<Vec<S>>, offsets: Vec<S>) -> Result<Self, GeometryError> {
        if normals.is_empty() {
            return Err(GeometryError::InvalidPolyhedron("no constraints".into()));
        }
        if normals.len() != offsets.len() {
            return Err(GeometryError::InvalidPolyhedron(format!(
                "{} normals but {} offsets",
                normals.len(),
                offsets.len()
            )));
        }
        let n = normals[0].len();
        if n == 0 {
            return Err(GeometryError::InvalidPolyhedron("dimension 0".into()));
        }
        for (i, u) in normals.iter().enumerate() {
            if u.len() != n {
                return Err(GeometryError::InvalidPolyhedron(format!(
                    "normal {i} has length {} instead of {n}",
                    u.len()
                )));
            }
            if !u.iter().all(|v| v.is_finite()) || !offsets[i].is_finite() {
                return Err(GeometryError::InvalidPolyhedron(format!(
                    "constraint {i} has non-finite data"
                )));
            }
        }
        Ok(Polyhedron { normals, offsets })
    }

    /// A single halfspace `<u, x> <= b`.
    pub fn halfspace(u: Vec<S>, b: S) -> Result<Self, GeometryError> {
        Self::new(vec![u], vec![b])
    }

    pub fn dim(&self) -> usize {
        self.normals[0].len()
    }

    pub fn num_constraints(&self) -> usize {
        self.normals.len()
    }

    pub fn normals(&self) -> &[Vec<S>] {
        &self.normals
    }

    pub fn offsets(&self) -> &[S] {
        &self.offsets
    }

    /// The same normals with every offset lowered by `delta`.
    pub fn tightened(&self, delta: S) -> Self {
        Polyhedron {
            normals: self.normals.clone(),
            offsets: self.offsets.iter().map(|&b| b - delta).collect(),
        }
    }

    /// Offsets raised by `xi * |u_i|`, an outer polyhedral cover of `P + xi B`.
    pub fn inflated(&self, xi: S) -> Self {
        Polyhedron {
            normals: self.normals.clone(),
            offsets: self
                .normals
                .iter()
                .zip(&self.offsets)
                .map(|(u, &b)| b + xi * norm(u))
                .collect(),
        }
    }

    pub(crate) fn check_dim(&self, x: &[S]) -> Result<(), GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `<u_i, x> - b_i` for every constraint.
    pub fn slacks(&self, x: &[S]) -> Result<Vec<S>, GeometryError> {
        self.check_dim(x)?;
        Ok(self
            .normals
            .iter()
            .zip(&self.offsets)
            .map(|(u, &b)| dot(u, x) - b)
            .collect())
    }

    pub fn contains(&self, x: &[S], tol: S) -> Result<bool, GeometryError> {
        Ok(self.slacks(x)?.iter().all(|&s| s <= tol))
    }

    /// `(max_i (<u_i,x> - b_i), [<u_i,x> - b_i]_+ per constraint)`.
    pub fn residual(&self, x: &[S]) -> Result<(S, Vec<S>), GeometryError> {
        let s = self.slacks(x)?;
        let value = s.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
        let plus = s.iter().map(|&v| v.max(S::zero())).collect();
        Ok((value, plus))
    }

    pub fn active_indices(&self, x: &[S], tol: S) -> Result<Vec<usize>, GeometryError> {
        let s = self.slacks(x)?;
        if let Some((i, &v)) = s
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > tol)
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        {
            return Err(GeometryError::NotFeasible {
                index: i,
                violation: v.as_f64(),
            });
        }
        Ok(s.iter()
            .enumerate()
            .filter(|(_, &v)| v.abs() <= tol)
            .map(|(i, _)| i)
            .collect())
    }

    /// Decides emptiness with a phase-1 LP.
    pub fn is_empty(&self) -> Result<bool, GeometryError> {
        let n = self.dim();
        let mut lp = LinearProgram::<S>::new(n);
        for j in 0..n {
            lp.set_free(j);
        }
        for (u, &b) in self.normals.iter().zip(&self.offsets) {
            lp.add_row(u.clone(), RowKind::Le, b);
        }
        match lp.solve() {
            Ok(_) => Ok(false),
            Err(LpError::Infeasible) => Ok(true),
            Err(e) => Err(e.into()),
        }
    }

    /// Euclidean projection with the default tolerances.
    pub fn project(&self, x: &[S]) -> Result<ProjectionResult<S>, GeometryError> {
        self.project_with(x, &Tolerances::default())
    }

    pub fn distance(&self, x: &[S]) -> Result<S, GeometryError> {
        Ok(self.project(x)?.distance)
    }
}
