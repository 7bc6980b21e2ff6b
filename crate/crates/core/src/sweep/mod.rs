//! Time stepping for the sweeping process `-x' ∈ N(x; C(u(t), b(t)))`.

mod csv;
mod oracle;
mod study;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlError, ControlPath, Mesh};
use crate::geometry::{GeometryError, Polyhedron};
use crate::linalg::{axpy, dot, norm, sub};
use crate::scalar::{Scalar, Tolerances};

pub use csv::trajectory_csv;
pub use oracle::{analytic_oracle, oracle_branch, OracleBranch};
pub use study::{
    convergence_study, stability_experiment, velocity_bound_log, ConvergenceReference,
    ConvergenceTable, StabilityReport, VelocityLog,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("initial state violates the constraints at t = 0 by {violation}")]
    InfeasibleStart { violation: f64 },
    #[error("empty polyhedron at node {node} (t = {t})")]
    EmptyPolyhedronAtNode { node: usize, t: f64 },
    #[error("initial state is outside the domain of the closed-form solution: {0}")]
    OutOfDomain(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which nodal data a step projects onto.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// `x_{j+1} = P_{C(u(t_{j+1}), b(t_{j+1}))}(x_j)`.
    #[default]
    Implicit,
    /// `x_{j+1} = P_{C(u(t_j), b(t_{j+1}))}(x_j)`: normals from node `j`, so
    /// the step is a normal-cone step at `x_j` for the contact offsets.
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Trajectory<S: Scalar> {
    pub mesh: Mesh<S>,
    pub scheme: Scheme,
    pub states: Vec<Vec<S>>,
    /// Per step, `eta_j >= 0` with `-(x_{j+1} - x_j)/h_j = sum_i eta_ij u_ij`.
    pub step_multipliers: Vec<Vec<S>>,
    /// Per step, constraints active at `x_{j+1}` for the step polyhedron.
    pub active_sets: Vec<Vec<usize>>,
    /// Explicit scheme only: offsets `b_j` for which `x_j ∈ C(u_j, b_j)` and
    /// every constraint carrying a positive multiplier is active at `x_j`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_offsets: Option<Vec<Vec<S>>>,
}

/// One projection step with the data needed downstream.
#[derive(Clone, Debug, PartialEq)]
pub struct Step<S: Scalar> {
    pub next: Vec<S>,
    /// Multipliers of the projection, `x - next = sum_i mu_i u_i`.
    pub mu: Vec<S>,
    pub active: Vec<usize>,
}

/// Projects `x` onto `poly`, mapping emptiness to a node-tagged error.
pub fn step<S: Scalar>(
    poly: &Polyhedron<S>,
    x: &[S],
    node: usize,
    t: S,
) -> Result<Step<S>, SweepError> {
    match poly.project(x) {
        Ok(r) => Ok(Step {
            next: r.point,
            mu: r.multipliers,
            active: r.active,
        }),
        Err(GeometryError::EmptyPolyhedron) => Err(SweepError::EmptyPolyhedronAtNode {
            node,
            t: t.as_f64(),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Offsets at node `j` that make a projection step from `x` a normal-cone
/// step at `x`: constraints with positive multiplier get `<u_i, x>`, the
/// others `max(b_i, <u_i, x>)`.
pub fn contact_offsets<S: Scalar>(normals: &[Vec<S>], offsets: &[S], x: &[S], mu: &[S]) -> Vec<S> {
    normals
        .iter()
        .zip(offsets)
        .zip(mu)
        .map(|((u, &b), &m)| {
            let ux = dot(u, x);
            if m > S::zero() {
                ux
            } else {
                b.max(ux)
            }
        })
        .collect()
}

/// Discrete catching-up scheme on `mesh` for the moving set of `path`.
pub fn catching_up<S: Scalar>(
    path: &ControlPath<S>,
    x0: &[S],
    mesh: &Mesh<S>,
    scheme: Scheme,
) -> Result<Trajectory<S>, SweepError> {
    let tol = Tolerances::<S>::default();
    if x0.len() != path.dim() {
        return Err(SweepError::Invalid(format!(
            "x0 has length {} but the path lives in R^{}",
            x0.len(),
            path.dim()
        )));
    }
    let c0 = path.polyhedron_at(S::zero())?;
    let (v0, _) = c0.residual(x0)?;
    if v0 > tol.feasibility * (S::one() + norm(x0)) {
        return Err(SweepError::InfeasibleStart {
            violation: v0.as_f64(),
        });
    }
    let nodes = mesh.nodes();
    let mut states = Vec::with_capacity(nodes.len());
    states.push(x0.to_vec());
    let mut etas = Vec::with_capacity(mesh.steps());
    let mut actives = Vec::with_capacity(mesh.steps());
    let mut contacts = Vec::new();
    for j in 0..mesh.steps() {
        let (u_next, b_next) = path.eval(nodes[j + 1])?;
        let normals = match scheme {
            Scheme::Implicit => u_next,
            Scheme::Explicit => path.eval(nodes[j])?.0,
        };
        let poly = Polyhedron::new(normals, b_next)?;
        let x = &states[j];
        let st = step(&poly, x, j + 1, nodes[j + 1])?;
        let h = mesh.h(j);
        etas.push(st.mu.iter().map(|&m| m / h).collect());
        actives.push(st.active);
        if scheme == Scheme::Explicit {
            contacts.push(contact_offsets(poly.normals(), poly.offsets(), x, &st.mu));
        }
        states.push(st.next);
    }
    Ok(Trajectory {
        mesh: mesh.clone(),
        scheme,
        states,
        step_multipliers: etas,
        active_sets: actives,
        contact_offsets: (scheme == Scheme::Explicit).then_some(contacts),
    })
}

impl<S: Scalar> Trajectory<S> {
    pub fn endpoint(&self) -> &[S] {
        &self.states[self.states.len() - 1]
    }

    /// Normals used by step `j` under this trajectory's scheme.
    pub fn step_normals(&self, path: &ControlPath<S>, j: usize) -> Result<Vec<Vec<S>>, SweepError> {
        let t = match self.scheme {
            Scheme::Implicit => self.mesh.node(j + 1),
            Scheme::Explicit => self.mesh.node(j),
        };
        Ok(path.eval(t)?.0)
    }

    /// Per step, `|-(x_{j+1} - x_j) - h_j sum_i eta_ij u_ij|`.
    pub fn stationarity_residuals(&self, path: &ControlPath<S>) -> Result<Vec<S>, SweepError> {
        (0..self.mesh.steps())
            .map(|j| {
                let normals = self.step_normals(path, j)?;
                let mut r = sub(&self.states[j], &self.states[j + 1]);
                let h = self.mesh.h(j);
                for (e, u) in self.step_multipliers[j].iter().zip(&normals) {
                    axpy(-*e * h, u, &mut r);
                }
                Ok(norm(&r))
            })
            .collect()
    }

    /// Per node `j >= 1`, the largest violation of the polyhedron `x_j` was
    /// projected onto.
    pub fn feasibility_residuals(&self, path: &ControlPath<S>) -> Result<Vec<S>, SweepError> {
        (0..self.mesh.steps())
            .map(|j| {
                let normals = self.step_normals(path, j)?;
                let (_, b) = path.eval(self.mesh.node(j + 1))?;
                let p = Polyhedron::new(normals, b)?;
                Ok(p.residual(&self.states[j + 1])?.0.max(S::zero()))
            })
            .collect()
    }
}
