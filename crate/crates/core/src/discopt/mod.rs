//! Discrete approximations of the Mayer problem
//! `minimize phi(x(T))` over controls `(u, b)` of the polyhedral sweeping
//! process, with the endpoint constraint `x(T) ∈ Ω`.
//!
//! Each level `k` uses the uniform mesh with `nu0 * 2^k` intervals. The cost
//! adds to `phi(x_nu)` half the squared `L2` deviation of the discrete
//! velocities from the reference velocities. The reference is piecewise
//! linear on a mesh every level mesh nests in, so all integrals are exact.

mod solver;
mod steering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlError, ControlPath, Mesh};
use crate::geometry::{conic_fit, GeometryError, Polyhedron};
use crate::linalg::{dot, norm, norm_sq, sub};
use crate::sweep::{catching_up, contact_offsets, Scheme, SweepError};

pub use solver::{solve, RoundLog, SolveDiagnostics, SolveOptions, Solution};
pub use steering::{steering_scenario, steering_reference};

/// Band under which a slack counts as zero.
pub const ACTIVE_BAND: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscoptError {
    #[error("reference is not available on the level-{level} mesh: {reason}")]
    ReferenceMissing { level: usize, reason: String },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no feasible starting point: {0}")]
    NoFeasibleStart(String),
    #[error("evaluation budget exhausted (best cost so far {})", .0.cost)]
    BudgetExhausted(Box<Solution>),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

/// Smooth terminal cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalCost {
    /// `<c, x>`.
    Linear { c: Vec<f64> },
    /// `|x - target|^2 / 2`.
    Quadratic { target: Vec<f64> },
}

impl TerminalCost {
    pub fn dim(&self) -> usize {
        match self {
            TerminalCost::Linear { c } => c.len(),
            TerminalCost::Quadratic { target } => target.len(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TerminalCost::Linear { c } => dot(c, x),
            TerminalCost::Quadratic { target } => 0.5 * norm_sq(&sub(x, target)),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TerminalCost::Linear { c } => c.clone(),
            TerminalCost::Quadratic { target } => sub(x, target),
        }
    }
}

/// Reference controls and trajectory, piecewise linear on `control.mesh()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub control: ControlPath<f64>,
    /// State at every node of the control mesh.
    pub states: Vec<Vec<f64>>,
}

impl Reference {
    /// Node values flattened as `(u, b, x)`.
    fn flat(&self, j: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.control.u_knots()[j].iter().flatten().copied().collect();
        v.extend_from_slice(&self.control.b_knots()[j]);
        v.extend_from_slice(&self.states[j]);
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOCP {
    pub terminal_cost: TerminalCost,
    /// The endpoint set `Ω`.
    pub target_set: Polyhedron<f64>,
    pub reference: Reference,
    /// Localization radius of the two integral constraints.
    pub epsilon: f64,
    /// Control-norm slack at level 0; level `k` uses `delta0 / 2^k`.
    pub delta0: f64,
    /// Intervals of the level-0 mesh.
    pub nu0: usize,
    pub x0: Vec<f64>,
}

impl SweepOCP {
    pub fn new(
        terminal_cost: TerminalCost,
        target_set: Polyhedron<f64>,
        reference: Reference,
        epsilon: f64,
        delta0: f64,
        nu0: usize,
    ) -> Result<Self, DiscoptError> {
        let ocp = SweepOCP {
            terminal_cost,
            target_set,
            x0: reference.states.first().cloned().unwrap_or_default(),
            reference,
            epsilon,
            delta0,
            nu0,
        };
        ocp.validate()?;
        Ok(ocp)
    }

    pub fn validate(&self) -> Result<(), DiscoptError> {
        let c = &self.reference.control;
        let n = c.dim();
        if !(self.epsilon > 0.0) {
            return Err(DiscoptError::Invalid("epsilon must be positive".into()));
        }
        if !(self.delta0 >= 0.0) {
            return Err(DiscoptError::Invalid("delta0 must be nonnegative".into()));
        }
        if self.nu0 == 0 {
            return Err(DiscoptError::Invalid("nu0 must be positive".into()));
        }
        if self.terminal_cost.dim() != n || self.target_set.dim() != n || self.x0.len() != n {
            return Err(DiscoptError::ShapeMismatch(format!(
                "state dimension is {n}; terminal cost, target set and x0 must agree"
            )));
        }
        if self.reference.states.len() != c.mesh().len()
            || self.reference.states.iter().any(|x| x.len() != n)
        {
            return Err(DiscoptError::ShapeMismatch(
                "reference states must give one n-vector per reference node".into(),
            ));
        }
        let (viol, _) = c.polyhedron_at_node(0)?.residual(&self.x0)?;
        if viol > 1e-9 * (1.0 + norm(&self.x0)) {
            return Err(DiscoptError::Invalid(format!(
                "x0 violates the initial constraints by {viol}"
            )));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.reference.control.mesh().horizon()
    }

    pub fn delta(&self, level: usize) -> f64 {
        self.delta0 / (1u64 << level) as f64
    }

    pub fn level_mesh(&self, level: usize) -> Result<Mesh<f64>, DiscoptError> {
        Ok(Mesh::uniform(self.horizon(), self.nu0 << level)?)
    }
}

/// Exact quadrature data of one level interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalQuadrature {
    /// `∫ w dt` and `∫ |w|^2 dt` for the reference node values
    /// `w = (ū, b̄, x̄)` over the interval.
    pub first_moment: Vec<f64>,
    pub second_moment: f64,
    /// Reference increment over the interval.
    pub increment: Vec<f64>,
    /// `∫ |r - increment / h|^2` with `r` the reference velocity.
    pub velocity_spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub level: usize,
    pub mesh: Mesh<f64>,
    pub delta: f64,
    pub xi: f64,
    pub epsilon: f64,
    pub terminal_cost: TerminalCost,
    pub target_set: Polyhedron<f64>,
    /// `Ω` with offsets raised by `xi |a_i|`.
    pub target_inflated: Polyhedron<f64>,
    pub x0: Vec<f64>,
    /// Reference values at the level nodes.
    pub u_ref: Vec<Vec<Vec<f64>>>,
    pub b_ref: Vec<Vec<f64>>,
    pub x_ref: Vec<Vec<f64>>,
    pub quadrature: Vec<IntervalQuadrature>,
}

/// `(u_j, b_j, x_j)` at every node of a mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteTriple {
    pub mesh: Mesh<f64>,
    pub u: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
}

impl DiscreteTriple {
    fn flat(&self, j: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.u[j].iter().flatten().copied().collect();
        v.extend_from_slice(&self.b[j]);
        v.extend_from_slice(&self.x[j]);
        v
    }

    pub fn check_shape(&self, m: usize, n: usize) -> Result<(), DiscoptError> {
        let len = self.mesh.len();
        let ok = self.u.len() == len
            && self.b.len() == len
            && self.x.len() == len
            && self.u.iter().all(|uj| uj.len() == m && uj.iter().all(|ui| ui.len() == n))
            && self.b.iter().all(|bj| bj.len() == m)
            && self.x.iter().all(|xj| xj.len() == n);
        if ok {
            Ok(())
        } else {
            Err(DiscoptError::ShapeMismatch(format!(
                "triple does not have {len} nodes of {m} constraints in R^{n}"
            )))
        }
    }

    /// `∫ (Δx_j / h_j - x̄') dt` over interval `j`, given the reference
    /// increment of `x`.
    pub fn x_deviation(&self, j: usize, ref_increment: &[f64]) -> Vec<f64> {
        sub(&sub(&self.x[j + 1], &self.x[j]), ref_increment)
    }
}

/// Builds level `k`. The level mesh must nest in the reference mesh.
pub fn build_problem(ocp: &SweepOCP, level: usize) -> Result<ProblemInstance, DiscoptError> {
    ocp.validate()?;
    let mesh = ocp.level_mesh(level)?;
    let rmesh = ocp.reference.control.mesh();
    if !mesh.is_nested_in(rmesh) {
        return Err(DiscoptError::ReferenceMissing {
            level,
            reason: format!(
                "{} level intervals do not nest in the {} reference intervals",
                mesh.steps(),
                rmesh.steps()
            ),
        });
    }
    let rnodes = rmesh.nodes();
    let index_of = |t: f64| -> usize {
        let (j, w) = rmesh.locate(t).expect("nested node lies in the horizon");
        if w > 0.5 {
            j + 1
        } else {
            j
        }
    };
    let idx: Vec<usize> = mesh.nodes().iter().map(|&t| index_of(t)).collect();
    let c = &ocp.reference.control;
    let u_ref: Vec<_> = idx.iter().map(|&r| c.u_knots()[r].clone()).collect();
    let b_ref: Vec<_> = idx.iter().map(|&r| c.b_knots()[r].clone()).collect();
    let x_ref: Vec<_> = idx.iter().map(|&r| ocp.reference.states[r].clone()).collect();

    let mut quadrature = Vec::with_capacity(mesh.steps());
    for j in 0..mesh.steps() {
        let (r0, r1) = (idx[j], idx[j + 1]);
        let sub_values: Vec<Vec<f64>> = (r0..=r1).map(|r| ocp.reference.flat(r)).collect();
        let sub_times = rnodes[r0..=r1].to_vec();
        let h = mesh.h(j);
        let increment = sub(&sub_values[sub_values.len() - 1], &sub_values[0]);
        let mean: Vec<f64> = increment.iter().map(|v| v / h).collect();
        let mut spread = 0.0;
        let mut first_moment = vec![0.0; increment.len()];
        let mut second_moment = 0.0;
        for s in 0..sub_values.len() - 1 {
            let len = sub_times[s + 1] - sub_times[s];
            let (w0, w1) = (&sub_values[s], &sub_values[s + 1]);
            for (f, (a, b)) in first_moment.iter_mut().zip(w0.iter().zip(w1)) {
                *f += 0.5 * len * (a + b);
            }
            second_moment += len * (norm_sq(w0) + dot(w0, w1) + norm_sq(w1)) / 3.0;
            let vel: Vec<f64> = sub(&sub_values[s + 1], &sub_values[s])
                .into_iter()
                .map(|v| v / len)
                .collect();
            spread += len * norm_sq(&sub(&vel, &mean));
        }
        quadrature.push(IntervalQuadrature {
            first_moment,
            second_moment,
            increment,
            velocity_spread: spread,
        });
    }

    let mut inst = ProblemInstance {
        level,
        mesh,
        delta: ocp.delta(level),
        xi: 0.0,
        epsilon: ocp.epsilon,
        terminal_cost: ocp.terminal_cost.clone(),
        target_set: ocp.target_set.clone(),
        target_inflated: ocp.target_set.clone(),
        x0: ocp.x0.clone(),
        u_ref,
        b_ref,
        x_ref,
        quadrature,
    };
    // Endpoint perturbation: distance between the discrete run on the
    // sampled reference controls and the reference endpoint.
    let approx = inst.reference_triple()?;
    let nu = inst.mesh.steps();
    inst.xi = crate::linalg::dist(&approx.x[nu], &inst.x_ref[nu]);
    inst.target_inflated = inst.target_set.inflated(inst.xi);
    Ok(inst)
}

/// Triple plus the step multipliers of the projections that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Reduced {
    pub triple: DiscreteTriple,
    /// Per step, `mu` with `x_j - x_{j+1} = sum_i mu_i u_ij`.
    pub mu: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub tol: f64,
    /// Per step, the larger of the violation of `x_j ∈ C(u_j, b_j)` and the
    /// distance from `-Δx_j / h_j` to the cone of active normals.
    pub dynamics: Vec<f64>,
    /// Largest deviation of `(u_0, b_0, x_0)` from the pinned data.
    pub initial: f64,
    /// Violation of the inflated endpoint polyhedron.
    pub endpoint: f64,
    /// `d(x_nu, Ω) - xi`.
    pub endpoint_exact: f64,
    /// Largest violation of `1 - delta <= |u_ij| <= 1 + delta`.
    pub u_norm: f64,
    /// Value of `∫ |(u, b, x)_j - (ū, b̄, x̄)|^2`.
    pub localization_state: f64,
    /// Value of `∫ |Δ(u, b, x)_j / h_j - (ū', b̄', x̄')|^2`.
    pub localization_velocity: f64,
    /// `epsilon / 2`.
    pub localization_bound: f64,
    /// Families whose residual exceeds `tol`.
    pub flagged: Vec<String>,
    pub max_residual: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.flagged.is_empty()
    }
}

impl ProblemInstance {
    pub fn num_constraints(&self) -> usize {
        self.u_ref[0].len()
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn steps(&self) -> usize {
        self.mesh.steps()
    }

    /// Decision variables per free node: `u_j` then the projection offsets.
    pub fn block_len(&self) -> usize {
        let (m, n) = (self.num_constraints(), self.dim());
        m * n + m
    }

    /// Nodes `1..=nu` are free; node 0 is pinned.
    pub fn decision_len(&self) -> usize {
        self.steps() * self.block_len()
    }

    /// The reference controls at the level nodes as a decision vector.
    pub fn reference_decision(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.decision_len());
        for j in 1..=self.steps() {
            for ui in &self.u_ref[j] {
                z.extend_from_slice(ui);
            }
            z.extend_from_slice(&self.b_ref[j]);
        }
        z
    }

    /// Runs the reduced map on the reference decision.
    pub fn reference_triple(&self) -> Result<DiscreteTriple, DiscoptError> {
        Ok(self.reduce(&self.reference_decision())?.triple)
    }

    /// The triple sampled from the reference at the level nodes.
    pub fn sampled_reference(&self) -> DiscreteTriple {
        DiscreteTriple {
            mesh: self.mesh.clone(),
            u: self.u_ref.clone(),
            b: self.b_ref.clone(),
            x: self.x_ref.clone(),
        }
    }

    fn clamp_normal(&self, u: &[f64], fallback: &[f64]) -> Vec<f64> {
        let r = norm(u);
        let (lo, hi) = (1.0 - self.delta, 1.0 + self.delta);
        if r == 0.0 {
            let f = norm(fallback);
            return fallback.iter().map(|v| v * lo.max(0.0) / f).collect();
        }
        let s = if r > hi {
            hi / r
        } else if r < lo {
            lo / r
        } else {
            return u.to_vec();
        };
        u.iter().map(|v| v * s).collect()
    }

    /// Decision vector to triple: each step projects `x_j` onto
    /// `C(u_j, c_j)` with `c_j` the decision offsets, and records `b_j` as
    /// the contact offsets at `x_j`, so `-Δx_j / h_j ∈ N(x_j; C(u_j, b_j))`
    /// holds exactly.
    pub fn reduce(&self, z: &[f64]) -> Result<Reduced, DiscoptError> {
        if z.len() != self.decision_len() {
            return Err(DiscoptError::ShapeMismatch(format!(
                "decision vector has length {} instead of {}",
                z.len(),
                self.decision_len()
            )));
        }
        let (m, n) = (self.num_constraints(), self.dim());
        let nu = self.steps();
        let bl = self.block_len();
        let mut u = Vec::with_capacity(nu + 1);
        let mut c = Vec::with_capacity(nu + 1);
        u.push(self.u_ref[0].clone());
        c.push(self.b_ref[0].clone());
        for j in 1..=nu {
            let blk = &z[(j - 1) * bl..j * bl];
            let uj: Vec<Vec<f64>> = (0..m)
                .map(|i| self.clamp_normal(&blk[i * n..(i + 1) * n], &self.u_ref[j][i]))
                .collect();
            u.push(uj);
            c.push(blk[m * n..].to_vec());
        }
        let mut x = Vec::with_capacity(nu + 1);
        let mut b = Vec::with_capacity(nu + 1);
        let mut mu = Vec::with_capacity(nu);
        x.push(self.x0.clone());
        for j in 0..nu {
            let poly = Polyhedron::new(u[j].clone(), c[j].clone())?;
            let pr = poly.project(&x[j])?;
            b.push(contact_offsets(&u[j], &c[j], &x[j], &pr.multipliers));
            mu.push(pr.multipliers);
            x.push(pr.point);
        }
        b.push(
            u[nu]
                .iter()
                .zip(&c[nu])
                .map(|(ui, &ci)| ci.max(dot(ui, &x[nu])))
                .collect(),
        );
        Ok(Reduced {
            triple: DiscreteTriple {
                mesh: self.mesh.clone(),
                u,
                b,
                x,
            },
            mu,
        })
    }

    /// `phi(x_nu) + ½ Σ_j ∫ |Δ(u, b, x)_j / h_j - (ū', b̄', x̄')|^2 dt`.
    pub fn evaluate_cost(&self, triple: &DiscreteTriple) -> Result<f64, DiscoptError> {
        self.check_triple(triple)?;
        Ok(self.terminal_cost.value(&triple.x[self.steps()])
            + 0.5 * self.velocity_integral(triple))
    }

    pub fn check_triple(&self, triple: &DiscreteTriple) -> Result<(), DiscoptError> {
        triple.check_shape(self.num_constraints(), self.dim())?;
        if triple.mesh != self.mesh {
            return Err(DiscoptError::ShapeMismatch(
                "triple lives on a different mesh".into(),
            ));
        }
        Ok(())
    }

    fn velocity_integral(&self, triple: &DiscreteTriple) -> f64 {
        let mut total = 0.0;
        let mut prev = triple.flat(0);
        for (j, q) in self.quadrature.iter().enumerate() {
            let next = triple.flat(j + 1);
            let h = self.mesh.h(j);
            // h |Δ/h - R/h|^2 = |Δ - R|^2 / h
            let d = sub(&sub(&next, &prev), &q.increment);
            total += norm_sq(&d) / h + q.velocity_spread;
            prev = next;
        }
        total
    }

    fn state_integral(&self, triple: &DiscreteTriple) -> f64 {
        let mut total = 0.0;
        for (j, q) in self.quadrature.iter().enumerate() {
            let c = triple.flat(j);
            let h = self.mesh.h(j);
            // ∫ |c - w|^2 = h |c|^2 - 2 <c, ∫ w> + ∫ |w|^2
            total += (h * norm_sq(&c) - 2.0 * dot(&c, &q.first_moment) + q.second_moment).max(0.0);
        }
        total
    }

    /// `θ^x_j = ∫ (Δx_j / h_j - x̄') dt` for every step.
    pub fn theta_x(&self, triple: &DiscreteTriple) -> Vec<Vec<f64>> {
        let n = self.dim();
        self.quadrature
            .iter()
            .enumerate()
            .map(|(j, q)| triple.x_deviation(j, &q.increment[q.increment.len() - n..]))
            .collect()
    }

    pub fn feasibility_report(&self, triple: &DiscreteTriple, tol: f64) -> FeasibilityReport {
        let m = self.num_constraints();
        let bound = 0.5 * self.epsilon;
        let shape_ok = self.check_triple(triple).is_ok();
        if !shape_ok {
            return FeasibilityReport {
                tol,
                dynamics: Vec::new(),
                initial: f64::INFINITY,
                endpoint: f64::INFINITY,
                endpoint_exact: f64::INFINITY,
                u_norm: f64::INFINITY,
                localization_state: f64::INFINITY,
                localization_velocity: f64::INFINITY,
                localization_bound: bound,
                flagged: vec!["shape".into()],
                max_residual: f64::INFINITY,
            };
        }
        let nu = self.steps();
        let mut dynamics = Vec::with_capacity(nu);
        for j in 0..nu {
            dynamics.push(step_residual(
                &triple.u[j],
                &triple.b[j],
                &triple.x[j],
                &triple.x[j + 1],
                self.mesh.h(j),
            ));
        }
        let mut initial: f64 = norm(&sub(&triple.x[0], &self.x0));
        for i in 0..m {
            initial = initial.max(norm(&sub(&triple.u[0][i], &self.u_ref[0][i])));
            initial = initial.max((triple.b[0][i] - self.b_ref[0][i]).abs());
        }
        let xe = &triple.x[nu];
        let endpoint = self
            .target_inflated
            .residual(xe)
            .map(|(v, _)| v.max(0.0))
            .unwrap_or(f64::INFINITY);
        let endpoint_exact = self
            .target_set
            .distance(xe)
            .map(|d| d - self.xi)
            .unwrap_or(f64::INFINITY);
        let mut u_norm: f64 = 0.0;
        for uj in &triple.u {
            for ui in uj {
                let r = norm(ui);
                u_norm = u_norm.max(r - (1.0 + self.delta)).max((1.0 - self.delta) - r);
            }
        }
        let u_norm = u_norm.max(0.0);
        let ls = self.state_integral(triple);
        let lv = self.velocity_integral(triple);
        let mut flagged = Vec::new();
        let dmax = dynamics.iter().fold(0.0f64, |a, &v| a.max(v));
        let families = [
            ("dynamics", dmax),
            ("initial", initial),
            ("endpoint", endpoint),
            ("u_norm", u_norm),
            ("localization_state", (ls - bound).max(0.0)),
            ("localization_velocity", (lv - bound).max(0.0)),
        ];
        let mut max_residual: f64 = 0.0;
        for (name, v) in families {
            if !(v <= tol) {
                flagged.push(name.to_string());
            }
            max_residual = max_residual.max(v);
        }
        FeasibilityReport {
            tol,
            dynamics,
            initial,
            endpoint,
            endpoint_exact,
            u_norm,
            localization_state: ls,
            localization_velocity: lv,
            localization_bound: bound,
            flagged,
            max_residual,
        }
    }
}

/// Residual of `-(x1 - x0)/h ∈ N(x0; C(u, b))`.
pub fn step_residual(u: &[Vec<f64>], b: &[f64], x0: &[f64], x1: &[f64], h: f64) -> f64 {
    let mut viol: f64 = 0.0;
    let mut active = Vec::new();
    for (ui, &bi) in u.iter().zip(b) {
        let s = dot(ui, x0) - bi;
        viol = viol.max(s);
        if s >= -ACTIVE_BAND {
            active.push(ui.clone());
        }
    }
    let w: Vec<f64> = sub(x0, x1).into_iter().map(|v| v / h).collect();
    let cone = conic_fit(&active, &w)
        .map(|f| f.residual)
        .unwrap_or(f64::INFINITY);
    viol.max(0.0).max(cone)
}

/// Reference trajectory for a control path by a fine implicit run.
pub fn simulated_reference(control: ControlPath<f64>, x0: &[f64]) -> Result<Reference, DiscoptError> {
    let tr = catching_up(&control, x0, control.mesh(), Scheme::Implicit)?;
    Ok(Reference {
        control,
        states: tr.states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One halfspace `x2 <= 1` with the state at rest below it.
    fn resting_ocp(nu_ref: usize, nu0: usize) -> SweepOCP {
        let mesh = Mesh::uniform(1.0, nu_ref).unwrap();
        let control = ControlPath::constant(mesh, vec![vec![0.0, 1.0]], vec![1.0]).unwrap();
        let reference = simulated_reference(control, &[0.0, 0.0]).unwrap();
        SweepOCP::new(
            TerminalCost::Quadratic {
                target: vec![0.0, 0.5],
            },
            Polyhedron::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![1.0, 1.0]).unwrap(),
            reference,
            10.0,
            0.1,
            nu0,
        )
        .unwrap()
    }

    #[test]
    fn instance_shape_and_pinning() {
        let ocp = resting_ocp(40, 10);
        let inst = build_problem(&ocp, 0).unwrap();
        assert_eq!(inst.steps(), 10);
        assert_eq!(inst.decision_len(), 10 * 3);
        let tr = inst.reference_triple().unwrap();
        assert_eq!(tr.x[0], vec![0.0, 0.0]);
        assert_eq!(tr.u[0], vec![vec![0.0, 1.0]]);
        assert_eq!(tr.b[0], vec![1.0]);
        assert_eq!(inst.xi, 0.0);
        assert!((inst.delta - 0.1).abs() < 1e-15);
        assert!((build_problem(&ocp, 2).unwrap().delta - 0.025).abs() < 1e-15);
    }

    #[test]
    fn missing_reference() {
        let ocp = resting_ocp(40, 10);
        assert!(matches!(
            build_problem(&ocp, 3),
            Err(DiscoptError::ReferenceMissing { level: 3, .. })
        ));
        let ocp = resting_ocp(15, 10);
        assert!(matches!(
            build_problem(&ocp, 0),
            Err(DiscoptError::ReferenceMissing { .. })
        ));
    }

    #[test]
    fn zero_deviation_cost_is_terminal_cost() {
        let ocp = resting_ocp(20, 10);
        let inst = build_problem(&ocp, 0).unwrap();
        let tr = inst.reference_triple().unwrap();
        assert_eq!(inst.evaluate_cost(&tr).unwrap(), 0.125);
    }

    #[test]
    fn velocity_perturbation_adds_half_h_v_squared() {
        let ocp = resting_ocp(10, 10);
        let inst = build_problem(&ocp, 0).unwrap();
        let base = inst.sampled_reference();
        let c0 = inst.evaluate_cost(&base).unwrap();
        // shifting x on nodes 4.. by w changes only the velocity on step 3
        let w = [0.01, -0.02];
        let mut tr = base.clone();
        for j in 4..tr.x.len() {
            tr.x[j][0] += w[0];
            tr.x[j][1] += w[1];
        }
        let h = 0.1;
        let v = [w[0] / h, w[1] / h];
        let phi_change = inst.terminal_cost.value(&tr.x[10]) - inst.terminal_cost.value(&base.x[10]);
        let c1 = inst.evaluate_cost(&tr).unwrap();
        let expect = c0 + phi_change + 0.5 * h * (v[0] * v[0] + v[1] * v[1]);
        assert!((c1 - expect).abs() < 1e-14, "{c1} vs {expect}");
    }

    #[test]
    fn cost_rejects_wrong_shape() {
        let ocp = resting_ocp(10, 10);
        let inst = build_problem(&ocp, 0).unwrap();
        let mut tr = inst.sampled_reference();
        tr.b.pop();
        assert!(inst.evaluate_cost(&tr).is_err());
        assert_eq!(inst.feasibility_report(&tr, 1e-8).flagged, vec!["shape"]);
    }

    #[test]
    fn report_flags_norm_and_endpoint() {
        let ocp = resting_ocp(10, 10);
        let inst = build_problem(&ocp, 0).unwrap();
        let tr = inst.reference_triple().unwrap();
        let rep = inst.feasibility_report(&tr, 1e-8);
        assert!(rep.is_feasible(), "{rep:?}");

        let mut bad = tr.clone();
        bad.u[5][0] = vec![0.0, 1.5];
        bad.b[5][0] = 1.5;
        let rep = inst.feasibility_report(&bad, 1e-8);
        assert!(rep.flagged.contains(&"u_norm".to_string()));
        assert!((rep.u_norm - 0.4).abs() < 1e-12);

        let mut far = tr.clone();
        far.x[10] = vec![3.0, 0.0];
        let rep = inst.feasibility_report(&far, 1e-8);
        assert!(rep.flagged.contains(&"endpoint".to_string()));
        assert!((rep.endpoint - 2.0).abs() < 1e-12);
        assert!((rep.endpoint_exact - 2.0).abs() < 1e-12);
        assert!(rep.flagged.contains(&"dynamics".to_string()));
    }

    #[test]
    fn reduced_map_satisfies_dynamics() {
        let ocp = resting_ocp(10, 10);
        let inst = build_problem(&ocp, 0).unwrap();
        let mut z = inst.reference_decision();
        // lower the offset at node 3 below the state: the next step is pushed down
        let bl = inst.block_len();
        z[2 * bl + 2] = -0.3;
        let red = inst.reduce(&z).unwrap();
        assert_eq!(red.triple.x[4], vec![0.0, -0.3]);
        assert!((red.mu[3][0] - 0.3).abs() < 1e-15);
        assert_eq!(red.triple.b[3], vec![0.0]);
        let rep = inst.feasibility_report(&red.triple, 1e-10);
        assert!(rep.dynamics.iter().all(|&r| r <= 1e-12), "{:?}", rep.dynamics);
    }

    #[test]
    fn clamping_keeps_norms_in_band() {
        let ocp = resting_ocp(10, 10);
        let inst = build_problem(&ocp, 0).unwrap();
        let mut z = inst.reference_decision();
        z[0] = 0.0;
        z[1] = 5.0;
        z[3] = 0.0;
        z[4] = 0.1;
        let tr = inst.reduce(&z).unwrap().triple;
        assert!((norm(&tr.u[1][0]) - 1.1).abs() < 1e-15);
        assert!((norm(&tr.u[2][0]) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn state_integral_is_exact() {
        // constant triple against a linear reference: ∫_0^1 (1 - t)^2 = 1/3
        let mesh = Mesh::uniform(1.0, 4).unwrap();
        let control = ControlPath::constant(mesh.clone(), vec![vec![0.0, 1.0]], vec![1.0]).unwrap();
        let states = mesh.nodes().iter().map(|&t| vec![t, 0.0]).collect();
        let ocp = SweepOCP::new(
            TerminalCost::Linear { c: vec![0.0, 0.0] },
            Polyhedron::halfspace(vec![1.0, 0.0], 5.0).unwrap(),
            Reference { control, states },
            10.0,
            0.0,
            1,
        )
        .unwrap();
        let inst = build_problem(&ocp, 0).unwrap();
        let mut tr = inst.sampled_reference();
        tr.x = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        assert!((inst.state_integral(&tr) - 1.0 / 3.0).abs() < 1e-15);
        // velocity: Δx/h = 0 against x̄' = 1
        assert!((inst.velocity_integral(&tr) - 1.0).abs() < 1e-15);
    }
}
