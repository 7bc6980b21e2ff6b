//! Convergence, stability and velocity-bound experiments.

use serde::{Deserialize, Serialize};

use super::{catching_up, Scheme, SweepError, Trajectory};
use crate::control::{ControlPath, Mesh};
use crate::linalg::{dist, lerp, norm, norm_sq, sub};
use crate::scalar::Scalar;

/// What the discrete runs are compared against.
pub enum ConvergenceReference<'a, S: Scalar> {
    /// Exact solution as a function of time.
    Function(&'a dyn Fn(S) -> Result<Vec<S>, SweepError>),
    /// A trajectory on a (usually finer) mesh, read by linear interpolation.
    Trajectory(&'a Trajectory<S>),
}

impl<S: Scalar> ConvergenceReference<'_, S> {
    fn value(&self, t: S) -> Result<Vec<S>, SweepError> {
        match self {
            ConvergenceReference::Function(f) => f(t),
            ConvergenceReference::Trajectory(tr) => {
                let (j, w) = tr.mesh.locate(t)?;
                Ok(lerp(&tr.states[j], &tr.states[j + 1], w))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ConvergenceTable<S: Scalar> {
    /// Largest step of each level.
    pub h: Vec<S>,
    /// Largest nodal error of each level.
    pub sup_error: Vec<S>,
    /// `sup_error[k] / sup_error[k + 1]`; `None` when the denominator is 0.
    pub ratios: Vec<Option<S>>,
}

/// Runs the scheme on `base_mesh` refined by `2^k`, `k = 0..levels`, and
/// records the nodal sup error against `reference`.
pub fn convergence_study<S: Scalar>(
    path: &ControlPath<S>,
    x0: &[S],
    base_mesh: &Mesh<S>,
    levels: usize,
    reference: &ConvergenceReference<'_, S>,
    scheme: Scheme,
) -> Result<ConvergenceTable<S>, SweepError> {
    let mut h = Vec::with_capacity(levels);
    let mut errs = Vec::with_capacity(levels);
    for k in 0..levels {
        let mesh = base_mesh.refine(1 << k);
        let tr = catching_up(path, x0, &mesh, scheme)?;
        let mut e = S::zero();
        for (x, &t) in tr.states.iter().zip(mesh.nodes()) {
            e = e.max(dist(x, &reference.value(t)?));
        }
        h.push(
            mesh.step_sizes()
                .into_iter()
                .fold(S::zero(), |a, v| a.max(v)),
        );
        errs.push(e);
    }
    let ratios = errs
        .windows(2)
        .map(|w| (w[1] > S::zero()).then(|| w[0] / w[1]))
        .collect();
    Ok(ConvergenceTable {
        h,
        sup_error: errs,
        ratios,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StabilityReport<S: Scalar> {
    /// `max_j |x_j - x'_j|^2`.
    pub sup_dx_sq: S,
    /// `|x0 - x0'|^2`.
    pub dx0_sq: S,
    /// `|(u - u', b - b')|_∞`.
    pub control_diff: S,
    /// `(sup_dx_sq - dx0_sq)_+ / control_diff`, absent when the controls agree.
    pub empirical_k: Option<S>,
    /// `sup_dx_sq / control_diff`, absent when the controls agree.
    pub ratio: Option<S>,
}

/// Simulates both inputs on `mesh` and compares them.
pub fn stability_experiment<S: Scalar>(
    path1: &ControlPath<S>,
    path2: &ControlPath<S>,
    x0_1: &[S],
    x0_2: &[S],
    mesh: &Mesh<S>,
) -> Result<StabilityReport<S>, SweepError> {
    let a = catching_up(path1, x0_1, mesh, Scheme::Implicit)?;
    let b = catching_up(path2, x0_2, mesh, Scheme::Implicit)?;
    let sup_dx_sq = a
        .states
        .iter()
        .zip(&b.states)
        .fold(S::zero(), |m, (x, y)| m.max(norm_sq(&sub(x, y))));
    let dx0_sq = norm_sq(&sub(x0_1, x0_2));
    let control_diff = path1.sup_norm_diff(path2)?;
    let (empirical_k, ratio) = if control_diff > S::zero() {
        (
            Some((sup_dx_sq - dx0_sq).max(S::zero()) / control_diff),
            Some(sup_dx_sq / control_diff),
        )
    } else {
        (None, None)
    };
    Ok(StabilityReport {
        sup_dx_sq,
        dx0_sq,
        control_diff,
        empirical_k,
        ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct VelocityLog<S: Scalar> {
    pub delta: S,
    /// `∫|y_δ'| + sqrt((∫|y_δ'|)^2 + |x(0) - x̂(0)|^2)`.
    pub alpha_delta: S,
    /// `max_t |x̂(t)|` of the nodal Slater selection.
    pub selection_sup: S,
    /// `max_t |y_δ(t)|`.
    pub y_delta_sup: S,
    /// Per step, `|x_{j+1} - x_j| / h_j`.
    pub speeds: Vec<S>,
    /// Per step, the right-hand side of the velocity estimate.
    pub bounds: Vec<S>,
}

/// Discrete analog of the velocity estimate. `x̂` is the nodal Slater
/// selection (searched in the box of half-width `radius`, margin must reach
/// `delta`), `y_δ` the catching-up run on the offsets lowered by `delta`.
pub fn velocity_bound_log<S: Scalar>(
    path: &ControlPath<S>,
    traj: &Trajectory<S>,
    delta: S,
    radius: S,
) -> Result<VelocityLog<S>, SweepError> {
    if !(delta > S::zero()) {
        return Err(SweepError::Invalid("delta must be positive".into()));
    }
    let mesh = &traj.mesh;
    let mut selection = Vec::with_capacity(mesh.len());
    for &t in mesh.nodes() {
        let cert = path.polyhedron_at(t)?.slater_margin(radius)?;
        if cert.margin < delta {
            return Err(SweepError::Invalid(format!(
                "Slater margin {} at t = {t} is below delta = {delta}",
                cert.margin
            )));
        }
        selection.push(cert.point);
    }
    let tightened = ControlPath::new(
        path.mesh().clone(),
        path.u_knots().to_vec(),
        path.b_knots()
            .iter()
            .map(|b| b.iter().map(|&v| v - delta).collect())
            .collect(),
    )?;
    let y = catching_up(&tightened, &selection[0], mesh, Scheme::Implicit)?;
    let var: S = y
        .states
        .windows(2)
        .fold(S::zero(), |a, w| a + dist(&w[0], &w[1]));
    let x0 = &traj.states[0];
    let alpha = var + (var * var + norm_sq(&sub(x0, &selection[0]))).sqrt();
    let sel_sup = selection.iter().fold(S::zero(), |m, x| m.max(norm(x)));
    let y_sup = y.states.iter().fold(S::zero(), |m, x| m.max(norm(x)));
    let factor = (sel_sup + y_sup + alpha) * (S::one() + y_sup + alpha) / delta;
    let resampled = path.resample(mesh)?;
    let rates: Vec<S> = resampled
        .increments()
        .into_iter()
        .enumerate()
        .map(|(j, inc)| inc / mesh.h(j))
        .collect();
    let speeds = (0..mesh.steps())
        .map(|j| dist(&traj.states[j + 1], &traj.states[j]) / mesh.h(j))
        .collect();
    Ok(VelocityLog {
        delta,
        alpha_delta: alpha,
        selection_sup: sel_sup,
        y_delta_sup: y_sup,
        speeds,
        bounds: rates.into_iter().map(|r| factor * r).collect(),
    })
}
