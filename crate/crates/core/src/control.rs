//! Time meshes and piecewise-linear control pairs `(u(t), b(t))`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Polyhedron, SlaterCertificate};
use crate::linalg::{dist, norm};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("time {t} outside [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },
    #[error("|u_{index}| = {norm} at node {node} violates the normalization band")]
    NotNormalized { node: usize, index: usize, norm: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Strictly increasing nodes `0 = t_0 < ... < t_nu = T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", try_from = "Vec<S>", into = "Vec<S>")]
pub struct Mesh<S: Scalar> {
    nodes: Vec<S>,
}

impl<S: Scalar> TryFrom<Vec<S>> for Mesh<S> {
    type Error = ControlError;
    fn try_from(v: Vec<S>) -> Result<Self, Self::Error> {
        Mesh::from_nodes(v)
    }
}

impl<S: Scalar> From<Mesh<S>> for Vec<S> {
    fn from(m: Mesh<S>) -> Self {
        m.nodes
    }
}

impl<S: Scalar> Mesh<S> {
    pub fn from_nodes(nodes: Vec<S>) -> Result<Self, ControlError> {
        if nodes.len() < 2 {
            return Err(ControlError::InvalidMesh("need at least two nodes".into()));
        }
        if nodes[0] != S::zero() {
            return Err(ControlError::InvalidMesh("first node must be 0".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(ControlError::InvalidMesh("nodes must increase strictly".into()));
            }
        }
        Ok(Mesh { nodes })
    }

    /// `nu` equal steps on `[0, horizon]`.
    pub fn uniform(horizon: S, nu: usize) -> Result<Self, ControlError> {
        if nu == 0 || !(horizon > S::zero()) {
            return Err(ControlError::InvalidMesh(
                "uniform mesh needs nu >= 1 and positive horizon".into(),
            ));
        }
        let nf = S::from_usize(nu).unwrap();
        let mut nodes: Vec<S> = (0..=nu)
            .map(|j| horizon * S::from_usize(j).unwrap() / nf)
            .collect();
        nodes[nu] = horizon;
        Self::from_nodes(nodes)
    }

    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of intervals.
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> S {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn node(&self, j: usize) -> S {
        self.nodes[j]
    }

    pub fn h(&self, j: usize) -> S {
        self.nodes[j + 1] - self.nodes[j]
    }

    pub fn step_sizes(&self) -> Vec<S> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Interval index `j` and weight `w` with `t = (1 - w) t_j + w t_{j+1}`.
    pub fn locate(&self, t: S) -> Result<(usize, S), ControlError> {
        let tt = self.horizon();
        let slack = S::epsilon() * S::c(16.0) * (S::one() + tt);
        if !(t >= -slack && t <= tt + slack) {
            return Err(ControlError::OutOfDomain {
                t: t.as_f64(),
                horizon: tt.as_f64(),
            });
        }
        let t = t.max(S::zero()).min(tt);
        let j = match self
            .nodes
            .binary_search_by(|v| v.partial_cmp(&t).unwrap())
        {
            Ok(k) => return Ok(if k == self.steps() { (k - 1, S::one()) } else { (k, S::zero()) }),
            Err(k) => k - 1,
        };
        let w = (t - self.nodes[j]) / self.h(j);
        Ok((j, w))
    }

    /// Splits every interval into `k` equal parts.
    pub fn refine(&self, k: usize) -> Self {
        let k = k.max(1);
        let kf = S::from_usize(k).unwrap();
        let mut nodes = Vec::with_capacity(self.steps() * k + 1);
        for j in 0..self.steps() {
            let h = self.h(j);
            for s in 0..k {
                nodes.push(self.nodes[j] + h * S::from_usize(s).unwrap() / kf);
            }
        }
        nodes.push(self.horizon());
        Mesh { nodes }
    }

    /// Union of the node sets of two meshes over the same horizon.
    pub fn merge(&self, other: &Self) -> Result<Self, ControlError> {
        let tol = S::epsilon() * S::c(64.0) * (S::one() + self.horizon());
        if (self.horizon() - other.horizon()).abs() > tol {
            return Err(ControlError::InvalidMesh("horizons differ".into()));
        }
        let mut all: Vec<S> = self.nodes.iter().chain(&other.nodes).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut nodes: Vec<S> = Vec::with_capacity(all.len());
        for v in all {
            match nodes.last() {
                Some(&l) if (v - l).abs() <= tol => {}
                _ => nodes.push(v),
            }
        }
        let last = nodes.len() - 1;
        nodes[last] = self.horizon();
        Self::from_nodes(nodes)
    }

    /// True when every node of `self` is (to round-off) a node of `fine`.
    pub fn is_nested_in(&self, fine: &Self) -> bool {
        let tol = S::epsilon() * S::c(64.0) * (S::one() + self.horizon());
        (self.horizon() - fine.horizon()).abs() <= tol
            && self.nodes.iter().all(|&t| {
                fine.nodes
                    .iter()
                    .any(|&s| (s - t).abs() <= tol)
            })
    }
}

/// Piecewise-linear control pair on a mesh: `m` normals in `R^n` and `m`
/// offsets at every node, linearly interpolated in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ControlPath<S: Scalar> {
    mesh: Mesh<S>,
    u_knots: Vec<Vec<Vec<S>>>,
    b_knots: Vec<Vec<S>>,
    /// Declared normalization slack: `|u_i| in [1 - delta, 1 + delta]` at nodes.
    #[serde(default)]
    normalized: Option<S>,
}

impl<S: Scalar> ControlPath<S> {
    pub fn new(
        mesh: Mesh<S>,
        u_knots: Vec<Vec<Vec<S>>>,
        b_knots: Vec<Vec<S>>,
    ) -> Result<Self, ControlError> {
        let p = ControlPath {
            mesh,
            u_knots,
            b_knots,
            normalized: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Samples a control pair given as a function of time at the mesh nodes.
    pub fn sample<F>(mesh: Mesh<S>, f: F) -> Result<Self, ControlError>
    where
        F: Fn(S) -> (Vec<Vec<S>>, Vec<S>),
    {
        let (u, b): (Vec<_>, Vec<_>) = mesh.nodes().iter().map(|&t| f(t)).unzip();
        Self::new(mesh, u, b)
    }

    pub fn constant(mesh: Mesh<S>, u: Vec<Vec<S>>, b: Vec<S>) -> Result<Self, ControlError> {
        let k = mesh.len();
        Self::new(mesh, vec![u; k], vec![b; k])
    }

    fn validate(&self) -> Result<(), ControlError> {
        let k = self.mesh.len();
        if self.u_knots.len() != k || self.b_knots.len() != k {
            return Err(ControlError::ShapeMismatch(format!(
                "{} nodes but {} u-knots and {} b-knots",
                k,
                self.u_knots.len(),
                self.b_knots.len()
            )));
        }
        let m = self.u_knots[0].len();
        if m == 0 {
            return Err(ControlError::ShapeMismatch("no constraints".into()));
        }
        let n = self.u_knots[0][0].len();
        if n == 0 {
            return Err(ControlError::ShapeMismatch("dimension 0".into()));
        }
        for (j, (u, b)) in self.u_knots.iter().zip(&self.b_knots).enumerate() {
            if u.len() != m || b.len() != m || u.iter().any(|ui| ui.len() != n) {
                return Err(ControlError::ShapeMismatch(format!("knot {j} has wrong shape")));
            }
            if !u.iter().flatten().chain(b).all(|v| v.is_finite()) {
                return Err(ControlError::ShapeMismatch(format!("knot {j} is not finite")));
            }
        }
        Ok(())
    }

    /// Declares and verifies the normalization band `[1 - delta, 1 + delta]`.
    pub fn with_normalization(mut self, delta: S) -> Result<Self, ControlError> {
        self.normalized = Some(delta);
        self.verify_normalization()?;
        Ok(self)
    }

    pub fn normalization(&self) -> Option<S> {
        self.normalized
    }

    pub fn verify_normalization(&self) -> Result<(), ControlError> {
        let Some(delta) = self.normalized else {
            return Ok(());
        };
        let slack = S::epsilon() * S::c(16.0);
        for (j, u) in self.u_knots.iter().enumerate() {
            for (i, ui) in u.iter().enumerate() {
                let nu = norm(ui);
                if nu < S::one() - delta - slack || nu > S::one() + delta + slack {
                    return Err(ControlError::NotNormalized {
                        node: j,
                        index: i,
                        norm: nu.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn mesh(&self) -> &Mesh<S> {
        &self.mesh
    }

    pub fn num_constraints(&self) -> usize {
        self.u_knots[0].len()
    }

    pub fn dim(&self) -> usize {
        self.u_knots[0][0].len()
    }

    pub fn u_knots(&self) -> &[Vec<Vec<S>>] {
        &self.u_knots
    }

    pub fn b_knots(&self) -> &[Vec<S>] {
        &self.b_knots
    }

    pub fn eval(&self, t: S) -> Result<(Vec<Vec<S>>, Vec<S>), ControlError> {
        let (j, w) = self.mesh.locate(t)?;
        if w == S::zero() {
            return Ok((self.u_knots[j].clone(), self.b_knots[j].clone()));
        }
        if w == S::one() {
            return Ok((self.u_knots[j + 1].clone(), self.b_knots[j + 1].clone()));
        }
        let u = self.u_knots[j]
            .iter()
            .zip(&self.u_knots[j + 1])
            .map(|(a, b)| crate::linalg::lerp(a, b, w))
            .collect();
        let b = crate::linalg::lerp(&self.b_knots[j], &self.b_knots[j + 1], w);
        Ok((u, b))
    }

    pub fn polyhedron_at(&self, t: S) -> Result<Polyhedron<S>, ControlError> {
        let (u, b) = self.eval(t)?;
        Ok(Polyhedron::new(u, b)?)
    }

    pub fn polyhedron_at_node(&self, j: usize) -> Result<Polyhedron<S>, ControlError> {
        Ok(Polyhedron::new(
            self.u_knots[j].clone(),
            self.b_knots[j].clone(),
        )?)
    }

    /// The path evaluated at the nodes of another mesh over the same horizon.
    pub fn resample(&self, mesh: &Mesh<S>) -> Result<Self, ControlError> {
        let tol = S::epsilon() * S::c(64.0) * (S::one() + self.mesh.horizon());
        if (mesh.horizon() - self.mesh.horizon()).abs() > tol {
            return Err(ControlError::InvalidMesh("horizons differ".into()));
        }
        let mut p = Self::sample(mesh.clone(), |t| self.eval(t).expect("node inside horizon"))?;
        p.normalized = self.normalized;
        Ok(p)
    }

    /// Adds `c` to offset `i` at every node.
    pub fn shift_offset(&self, i: usize, c: S) -> Self {
        let mut p = self.clone();
        for b in &mut p.b_knots {
            b[i] += c;
        }
        p
    }

    /// `max_{i,t} |u_i(t)| + max_{i,t} |b_i(t)|`. Both maxima of a
    /// piecewise-linear path are attained at knots.
    pub fn sup_norm(&self) -> S {
        let umax = self
            .u_knots
            .iter()
            .flatten()
            .fold(S::zero(), |m, ui| m.max(norm(ui)));
        let bmax = self
            .b_knots
            .iter()
            .flatten()
            .fold(S::zero(), |m, &v| m.max(v.abs()));
        umax + bmax
    }

    /// Sup norm of the difference, evaluated on the merged mesh.
    pub fn sup_norm_diff(&self, other: &Self) -> Result<S, ControlError> {
        if self.num_constraints() != other.num_constraints() || self.dim() != other.dim() {
            return Err(ControlError::ShapeMismatch("paths have different shapes".into()));
        }
        let merged = self.mesh.merge(&other.mesh)?;
        let mut umax = S::zero();
        let mut bmax = S::zero();
        for &t in merged.nodes() {
            let (u1, b1) = self.eval(t)?;
            let (u2, b2) = other.eval(t)?;
            for (a, b) in u1.iter().zip(&u2) {
                umax = umax.max(dist(a, b));
            }
            for (a, b) in b1.iter().zip(&b2) {
                bmax = bmax.max((*a - *b).abs());
            }
        }
        Ok(umax + bmax)
    }

    /// Per interval, `sum_i (|Δu_i| + |Δb_i|)`.
    pub fn increments(&self) -> Vec<S> {
        (0..self.mesh.steps())
            .map(|j| {
                let mut s = S::zero();
                for i in 0..self.num_constraints() {
                    s += dist(&self.u_knots[j + 1][i], &self.u_knots[j][i]);
                    s += (self.b_knots[j + 1][i] - self.b_knots[j][i]).abs();
                }
                s
            })
            .collect()
    }

    /// `sum_i |u_i(0)| + sum_i ∫|u_i'| + sum_i |b_i(0)| + sum_i ∫|b_i'|`, exact.
    pub fn w11_norm(&self) -> S {
        let init = self.u_knots[0]
            .iter()
            .fold(S::zero(), |a, ui| a + norm(ui))
            + self.b_knots[0].iter().fold(S::zero(), |a, &b| a + b.abs());
        init + self.increments().into_iter().fold(S::zero(), |a, v| a + v)
    }

    /// Minimum Slater margin over the mesh refined `refine` times.
    pub fn check_uniform_slater(
        &self,
        radius: S,
        refine: usize,
    ) -> Result<SlaterReport<S>, ControlError> {
        let refine = refine.max(1);
        let grid = self.mesh.refine(refine);
        let mut margins = Vec::with_capacity(grid.len());
        let mut certs: Vec<SlaterCertificate<S>> = Vec::with_capacity(grid.len());
        for &t in grid.nodes() {
            let c = self.polyhedron_at(t)?.slater_margin(radius)?;
            margins.push(c.margin);
            certs.push(c);
        }
        let epsilon = margins.iter().fold(S::infinity(), |m, &v| m.min(v));
        let band = S::epsilon() * S::c(64.0) * (S::one() + epsilon.abs());
        let witness_times = grid
            .nodes()
            .iter()
            .zip(&margins)
            .filter(|(_, &v)| v <= epsilon + band)
            .map(|(&t, _)| t)
            .collect();

        // margin of the nearer grid point's certificate can drop at most by
        // max_i (|b_i'| + |u_i'| |x|) times the distance in time
        let rates = self.rates();
        let mut inter_node_bound = S::infinity();
        for k in 0..grid.steps() {
            let half = grid.h(k) * S::c(0.5);
            let mid = grid.node(k) + half;
            let (j, _) = self.mesh.locate(mid)?;
            for c in [&certs[k], &certs[k + 1]] {
                let xn = norm(&c.point);
                let lip = rates[j]
                    .iter()
                    .fold(S::zero(), |m, &(du, db)| m.max(db + du * xn));
                inter_node_bound = inter_node_bound.min(c.margin - lip * half);
            }
        }
        Ok(SlaterReport {
            epsilon,
            witness_times,
            inter_node_bound,
            grid_times: grid.nodes().to_vec(),
            margins,
            radius,
        })
    }

    /// Per interval and constraint, `(|u_i'|, |b_i'|)`.
    fn rates(&self) -> Vec<Vec<(S, S)>> {
        (0..self.mesh.steps())
            .map(|j| {
                let h = self.mesh.h(j);
                (0..self.num_constraints())
                    .map(|i| {
                        (
                            dist(&self.u_knots[j + 1][i], &self.u_knots[j][i]) / h,
                            (self.b_knots[j + 1][i] - self.b_knots[j][i]).abs() / h,
                        )
                    })
                    .collect()
            })
            .collect()
    }

    /// Arc-length style time change `γ(t) = t + ∫ sum_i (|u_i'| + |b_i'|)`.
    /// The returned path has the original knots placed at `γ(t_j)`.
    pub fn reparameterize(&self) -> Result<ReparamResult<S>, ControlError> {
        let mut gamma = Vec::with_capacity(self.mesh.len());
        gamma.push(S::zero());
        for (j, inc) in self.increments().into_iter().enumerate() {
            let g = gamma[j] + self.mesh.h(j) + inc;
            gamma.push(g);
        }
        let inverse_mesh = Mesh::from_nodes(gamma.clone())?;
        let path = ControlPath {
            mesh: inverse_mesh.clone(),
            u_knots: self.u_knots.clone(),
            b_knots: self.b_knots.clone(),
            normalized: self.normalized,
        };
        Ok(ReparamResult {
            gamma_knots: gamma,
            inverse_mesh,
            path,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SlaterReport<S: Scalar> {
    /// Minimum margin over the grid.
    pub epsilon: S,
    /// Grid times attaining the minimum.
    pub witness_times: Vec<S>,
    /// Lower bound on the margin valid between grid points as well.
    pub inter_node_bound: S,
    pub grid_times: Vec<S>,
    pub margins: Vec<S>,
    pub radius: S,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ReparamResult<S: Scalar> {
    pub gamma_knots: Vec<S>,
    pub inverse_mesh: Mesh<S>,
    pub path: ControlPath<S>,
}

impl<S: Scalar> ReparamResult<S> {
    /// `max_j (sum_i (|Δu_i| + |Δb_i|) - Δτ_j)`; nonpositive for a 1-Lipschitz path.
    pub fn lipschitz_excess(&self) -> S {
        self.path
            .increments()
            .into_iter()
            .enumerate()
            .fold(S::neg_infinity(), |m, (j, inc)| {
                m.max(inc - self.inverse_mesh.h(j))
            })
    }
}
