//! Multiplier recovery for a discrete triple and the residuals of the
//! discrete necessary conditions.
//!
//! Given the triple, `η_j` (`j < ν`) is fixed by the dynamics. The
//! remaining unknowns `γ, η_ν, ω, α` enter the adjoint recursion linearly,
//! and the orthogonality conditions `<u_ij, y_j> = 0` for `η_ij > 0` form a
//! linear program. `λ = 1` is tried first, then `λ = 0`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{OptimalityError, PREMISE_BAND};
use crate::discopt::{DiscreteTriple, ProblemInstance};
use crate::geometry::{conic_fit, plicq_check};
use crate::linalg::{dot, norm, sub};
use crate::lp::{LinearProgram, RowKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryOptions {
    /// Threshold on every residual family.
    pub tol: f64,
    /// Tolerance of the feasibility precondition.
    pub feasibility_tol: f64,
    /// Band on the orthogonality rows of the linear program, before
    /// normalization.
    pub orthogonality_band: f64,
    /// Cap on sign-branch linear programs.
    pub max_branches: usize,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions {
            tol: 1e-6,
            feasibility_tol: 1e-8,
            orthogonality_band: 1e-7,
            max_branches: 256,
        }
    }
}

/// Multipliers and adjoint arcs. Node-indexed fields have `ν + 1` entries,
/// `gamma` has `ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSet {
    pub lambda: f64,
    pub alpha_upper: Vec<Vec<f64>>,
    pub alpha_lower: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    /// One entry per constraint of the endpoint polyhedron.
    pub omega: Vec<f64>,
    pub p_x: Vec<Vec<f64>>,
    pub p_u: Vec<Vec<Vec<f64>>>,
    pub p_b: Vec<Vec<f64>>,
    /// Per step, `∫ (Δw_j / h_j - w̄') dt` split into its `u`, `b`, `x`
    /// parts. Inputs, cached for inspection.
    pub theta_u: Vec<Vec<Vec<f64>>>,
    pub theta_b: Vec<Vec<f64>>,
    pub theta_x: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nontriviality {
    pub initial: f64,
    pub terminal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub tol: f64,
    pub families: BTreeMap<String, f64>,
    pub flagged: Vec<String>,
    pub max_residual: f64,
    pub nontriviality: Nontriviality,
    /// `λ + |α¹ - α²| + |η_ν| + |γ| + Σ_j (|p^x_j| + |p^u_j| + |p^b_j|)`.
    pub normalization: f64,
}

impl ResidualReport {
    pub fn passes(&self) -> bool {
        self.flagged.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub multipliers: MultiplierSet,
    pub report: ResidualReport,
    /// `λ > 0`.
    pub normal: bool,
    /// Nodes with a nonempty active set; PLICQ held at each.
    pub plicq_nodes: Vec<usize>,
    /// Linear programs solved, including sign branches.
    pub programs: usize,
}

fn frob(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().map(|a| a * a).sum::<f64>().sqrt()
}

fn diff2(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| sub(x, y)).collect()
}

/// `α¹ - α²` across all nodes.
fn alpha_net(ms: &MultiplierSet) -> Vec<Vec<f64>> {
    diff2(&ms.alpha_upper, &ms.alpha_lower)
}

fn normalization(ms: &MultiplierSet) -> f64 {
    let nu = ms.gamma.len();
    let mut s = ms.lambda + frob(&alpha_net(ms)) + norm(&ms.eta[nu]) + frob(&ms.gamma);
    for j in 0..=nu {
        s += norm(&ms.p_x[j]) + frob(&ms.p_u[j]) + norm(&ms.p_b[j]);
    }
    s
}

fn nontriviality(ms: &MultiplierSet) -> Nontriviality {
    let nu = ms.gamma.len();
    let a = frob(&alpha_net(ms));
    let mut initial = ms.lambda + a + norm(&ms.eta[nu]) + frob(&ms.p_u[0]) + norm(&ms.p_b[0]);
    for j in 0..nu {
        initial += norm(&ms.p_x[j]);
    }
    let terminal = ms.lambda + a + frob(&ms.gamma) + frob(&ms.p_u[nu]) + norm(&ms.p_b[nu]);
    Nontriviality { initial, terminal }
}

/// Slack `<u_ij, x_j> - b_ij`.
fn slack(triple: &DiscreteTriple, j: usize, i: usize) -> f64 {
    dot(&triple.u[j][i], &triple.x[j]) - triple.b[j][i]
}

fn is_active(triple: &DiscreteTriple, j: usize, i: usize) -> bool {
    slack(triple, j, i) >= -PREMISE_BAND
}

/// `y_j = -λ θ^x_j / h_j + p^x_{j+1}`.
fn y_arg(lambda: f64, theta: &[f64], h: f64, p_next: &[f64]) -> Vec<f64> {
    theta
        .iter()
        .zip(p_next)
        .map(|(t, p)| -lambda * t / h + p)
        .collect()
}

/// Runs the adjoint recursion from the multipliers.
#[allow(clippy::too_many_arguments)]
fn assemble(
    inst: &ProblemInstance,
    triple: &DiscreteTriple,
    theta: &[Vec<f64>],
    lambda: f64,
    gamma: Vec<Vec<f64>>,
    alpha_upper: Vec<Vec<f64>>,
    alpha_lower: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
    omega: Vec<f64>,
) -> MultiplierSet {
    let (m, n, nu) = (inst.num_constraints(), inst.dim(), inst.steps());
    let xe = &triple.x[nu];
    let grad = inst.terminal_cost.gradient(xe);
    let mut px_end: Vec<f64> = grad.iter().map(|g| -lambda * g).collect();
    for (l, a) in inst.target_inflated.normals().iter().enumerate() {
        for r in 0..n {
            px_end[r] -= omega[l] * a[r];
        }
    }
    for i in 0..m {
        for r in 0..n {
            px_end[r] -= eta[nu][i] * triple.u[nu][i][r];
        }
    }
    let mut p_x = vec![vec![0.0; n]; nu + 1];
    let mut p_u = vec![vec![vec![0.0; n]; m]; nu + 1];
    let mut p_b = vec![vec![0.0; m]; nu + 1];
    let (theta_u, theta_b) = control_thetas(inst, triple);
    p_x[nu] = px_end;
    p_b[nu] = eta[nu].clone();
    for i in 0..m {
        let a = alpha_upper[nu][i] - alpha_lower[nu][i];
        for r in 0..n {
            p_u[nu][i][r] = -2.0 * a * triple.u[nu][i][r] - eta[nu][i] * xe[r];
        }
    }
    for j in (0..nu).rev() {
        let h = inst.mesh.h(j);
        let y = y_arg(lambda, &theta[j], h, &p_x[j + 1]);
        let mut px = p_x[j + 1].clone();
        let mut pb = p_b[j + 1].clone();
        let mut pu = p_u[j + 1].clone();
        for i in 0..m {
            let g = gamma[j][i];
            let a = alpha_upper[j][i] - alpha_lower[j][i];
            pb[i] += h * g;
            for r in 0..n {
                px[r] -= h * g * triple.u[j][i][r];
                pu[i][r] -= 2.0 * a * triple.u[j][i][r]
                    + h * (g * triple.x[j][r] + eta[j][i] * y[r]);
            }
        }
        p_x[j] = px;
        p_b[j] = pb;
        p_u[j] = pu;
    }
    MultiplierSet {
        lambda,
        alpha_upper,
        alpha_lower,
        eta,
        gamma,
        omega,
        p_x,
        p_u,
        p_b,
        theta_u,
        theta_b,
        theta_x: theta.to_vec(),
    }
}

/// `u` and `b` parts of the deviation integrals.
fn control_thetas(
    inst: &ProblemInstance,
    triple: &DiscreteTriple,
) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    let (m, n) = (inst.num_constraints(), inst.dim());
    let mut tu = Vec::with_capacity(inst.steps());
    let mut tb = Vec::with_capacity(inst.steps());
    for (j, q) in inst.quadrature.iter().enumerate() {
        let r = &q.increment;
        tu.push(
            (0..m)
                .map(|i| {
                    (0..n)
                        .map(|c| triple.u[j + 1][i][c] - triple.u[j][i][c] - r[i * n + c])
                        .collect()
                })
                .collect(),
        );
        tb.push(
            (0..m)
                .map(|i| triple.b[j + 1][i] - triple.b[j][i] - r[m * n + i])
                .collect(),
        );
    }
    (tu, tb)
}

/// Keeps the largest value per family; NaN stays visible.
fn put(fam: &mut BTreeMap<String, f64>, name: &str, v: f64) {
    let e = fam.entry(name.to_string()).or_insert(0.0);
    if !(v <= *e) {
        *e = v;
    }
}

/// Residual of every condition family, recomputed from scratch.
pub fn residual_report(
    inst: &ProblemInstance,
    triple: &DiscreteTriple,
    ms: &MultiplierSet,
    tol: f64,
) -> Result<ResidualReport, OptimalityError> {
    inst.check_triple(triple)?;
    let (m, n, nu) = (inst.num_constraints(), inst.dim(), inst.steps());
    let l_omega = inst.target_inflated.num_constraints();
    let shape_ok = ms.alpha_upper.len() == nu + 1
        && ms.alpha_lower.len() == nu + 1
        && ms.eta.len() == nu + 1
        && ms.gamma.len() == nu
        && ms.omega.len() == l_omega
        && ms.p_x.len() == nu + 1
        && ms.p_u.len() == nu + 1
        && ms.p_b.len() == nu + 1
        && ms.alpha_upper.iter().chain(&ms.alpha_lower).chain(&ms.eta).chain(&ms.gamma).chain(&ms.p_b)
            .all(|v| v.len() == m)
        && ms.p_x.iter().all(|v| v.len() == n)
        && ms.p_u.iter().all(|pj| pj.len() == m && pj.iter().all(|v| v.len() == n));
    if !shape_ok {
        return Err(OptimalityError::ShapeMismatch("multiplier set".into()));
    }
    let theta = inst.theta_x(triple);
    let lambda = ms.lambda;
    let mut fam: BTreeMap<String, f64> = BTreeMap::new();

    let mut nonneg = (-lambda).max(0.0);
    for j in 0..=nu {
        for i in 0..m {
            nonneg = nonneg.max(-ms.alpha_upper[j][i]).max(-ms.alpha_lower[j][i]);
            nonneg = nonneg.max(-ms.eta[j][i]);
        }
    }
    for &w in &ms.omega {
        nonneg = nonneg.max(-w);
    }
    put(&mut fam, "nonnegativity", nonneg);

    for j in 0..nu {
        let h = inst.mesh.h(j);
        // -Δx / h = Σ η u
        let mut r: Vec<f64> = (0..n)
            .map(|c| -(triple.x[j + 1][c] - triple.x[j][c]) / h)
            .collect();
        for i in 0..m {
            for c in 0..n {
                r[c] -= ms.eta[j][i] * triple.u[j][i][c];
            }
            if !is_active(triple, j, i) {
                put(&mut fam, "eta_inactive", ms.eta[j][i].abs());
            }
        }
        put(&mut fam, "dynamics", norm(&r));

        let y = y_arg(lambda, &theta[j], h, &ms.p_x[j + 1]);
        // (p^x_{j+1} - p^x_j) / h = Σ γ u
        let mut rx: Vec<f64> = (0..n).map(|c| (ms.p_x[j + 1][c] - ms.p_x[j][c]) / h).collect();
        let mut ru = 0.0f64;
        let mut rb = 0.0f64;
        for i in 0..m {
            let g = ms.gamma[j][i];
            let a = ms.alpha_upper[j][i] - ms.alpha_lower[j][i];
            for c in 0..n {
                rx[c] -= g * triple.u[j][i][c];
                let lhs = (ms.p_u[j + 1][i][c] - ms.p_u[j][i][c]) / h
                    - 2.0 / h * a * triple.u[j][i][c];
                let rhs = g * triple.x[j][c] + ms.eta[j][i] * y[c];
                ru = ru.max((lhs - rhs).abs());
            }
            rb = rb.max(((ms.p_b[j + 1][i] - ms.p_b[j][i]) / h + g).abs());

            let uy = dot(&triple.u[j][i], &y);
            let eta = ms.eta[j][i];
            let gsign = if !is_active(triple, j, i) {
                g.abs()
            } else if eta > PREMISE_BAND {
                put(&mut fam, "eta_orthogonality", uy.abs());
                0.0
            } else if uy < -PREMISE_BAND {
                g.abs()
            } else {
                (-g).max(0.0)
            };
            put(&mut fam, "gamma_sign", gsign);
        }
        put(&mut fam, "adjoint_x", norm(&rx));
        put(&mut fam, "adjoint_u", ru);
        put(&mut fam, "adjoint_b", rb);
    }
    fam.entry("eta_orthogonality".into()).or_insert(0.0);
    fam.entry("eta_inactive".into()).or_insert(0.0);

    let delta = inst.delta;
    for j in 0..=nu {
        for i in 0..m {
            let r = norm(&triple.u[j][i]);
            put(&mut fam, "slack_upper", (ms.alpha_upper[j][i] * (r - (1.0 + delta))).abs());
            put(&mut fam, "slack_lower", (ms.alpha_lower[j][i] * (r - (1.0 - delta))).abs());
        }
    }

    let xe = &triple.x[nu];
    let grad = inst.terminal_cost.gradient(xe);
    let mut tx: Vec<f64> = (0..n).map(|c| ms.p_x[nu][c] + lambda * grad[c]).collect();
    let mut tcomp = 0.0f64;
    let slacks = inst.target_inflated.slacks(xe)?;
    for (l, a) in inst.target_inflated.normals().iter().enumerate() {
        for c in 0..n {
            tx[c] += ms.omega[l] * a[c];
        }
        if slacks[l] < -PREMISE_BAND {
            tcomp = tcomp.max(ms.omega[l].abs());
        }
    }
    put(&mut fam, "target_complementarity", tcomp);
    let mut tu = 0.0f64;
    let mut tb = 0.0f64;
    let mut eterm = 0.0f64;
    for i in 0..m {
        for c in 0..n {
            tx[c] += ms.eta[nu][i] * triple.u[nu][i][c];
            let a = ms.alpha_upper[nu][i] - ms.alpha_lower[nu][i];
            let v = ms.p_u[nu][i][c] + 2.0 * a * triple.u[nu][i][c] + ms.eta[nu][i] * xe[c];
            tu = tu.max(v.abs());
        }
        tb = tb.max((ms.p_b[nu][i] - ms.eta[nu][i]).abs());
        if !is_active(triple, nu, i) {
            eterm = eterm.max(ms.eta[nu][i].abs());
        }
    }
    put(&mut fam, "terminal_x", norm(&tx));
    put(&mut fam, "terminal_u", tu);
    put(&mut fam, "terminal_b", tb);
    put(&mut fam, "eta_terminal", eterm);

    let total = normalization(ms);
    put(&mut fam, "normalization", (total - 1.0).abs());
    let ntc = nontriviality(ms);

    let mut flagged = Vec::new();
    let mut max_residual: f64 = 0.0;
    for (k, &v) in &fam {
        if !(v <= tol) {
            flagged.push(k.clone());
        }
        max_residual = max_residual.max(v);
    }
    Ok(ResidualReport {
        tol,
        families: fam,
        flagged,
        max_residual,
        nontriviality: ntc,
        normalization: total,
    })
}

/// Sign mode of `γ_ij` inside one linear program.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum GammaMode {
    Zero,
    Nonneg,
    Free,
}

/// Affine map `const + coef · v` into `R^n`.
#[derive(Clone)]
struct Affine {
    constant: Vec<f64>,
    coef: Vec<Vec<f64>>,
}

impl Affine {
    fn dot(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let c = dot(&self.constant, w);
        let nv = self.coef[0].len();
        let mut row = vec![0.0; nv];
        for (r, wr) in w.iter().enumerate() {
            for k in 0..nv {
                row[k] += wr * self.coef[r][k];
            }
        }
        (c, row)
    }
}

struct Layout {
    nvars: usize,
    /// `(j, i, plus, minus)`; `minus` absent for nonnegative modes.
    gamma: Vec<(usize, usize, usize, Option<usize>)>,
    eta_end: Vec<(usize, usize)>,
    omega: Vec<(usize, usize)>,
    alpha_upper: Vec<(usize, usize, usize)>,
    alpha_lower: Vec<(usize, usize, usize)>,
}

struct Setup<'a> {
    inst: &'a ProblemInstance,
    triple: &'a DiscreteTriple,
    theta: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
    band: f64,
}

impl Setup<'_> {
    fn layout(&self, modes: &[Vec<GammaMode>]) -> Layout {
        let (m, nu) = (self.inst.num_constraints(), self.inst.steps());
        let tr = self.triple;
        let mut k = 0;
        let mut next = || {
            k += 1;
            k - 1
        };
        let mut gamma = Vec::new();
        for (j, mj) in modes.iter().enumerate() {
            for (i, &mode) in mj.iter().enumerate() {
                match mode {
                    GammaMode::Zero => {}
                    GammaMode::Nonneg => gamma.push((j, i, next(), None)),
                    GammaMode::Free => {
                        let p = next();
                        gamma.push((j, i, p, Some(next())));
                    }
                }
            }
        }
        let eta_end = (0..m)
            .filter(|&i| is_active(tr, nu, i))
            .map(|i| (i, next()))
            .collect();
        let xe = &tr.x[nu];
        let slacks = self.inst.target_inflated.slacks(xe).unwrap_or_default();
        let omega = (0..slacks.len())
            .filter(|&l| slacks[l] >= -PREMISE_BAND)
            .map(|l| (l, next()))
            .collect();
        let delta = self.inst.delta;
        let mut alpha_upper = Vec::new();
        let mut alpha_lower = Vec::new();
        for j in 0..=nu {
            for i in 0..m {
                let r = norm(&tr.u[j][i]);
                if (r - (1.0 + delta)).abs() <= PREMISE_BAND {
                    alpha_upper.push((j, i, next()));
                }
                if (r - (1.0 - delta)).abs() <= PREMISE_BAND {
                    alpha_lower.push((j, i, next()));
                }
            }
        }
        Layout {
            nvars: k,
            gamma,
            eta_end,
            omega,
            alpha_upper,
            alpha_lower,
        }
    }

    /// `p^x_j` as affine maps of the LP variables, `j = 0..=ν`.
    fn adjoint_x(&self, lay: &Layout, lambda: f64) -> Vec<Affine> {
        let (n, nu) = (self.inst.dim(), self.inst.steps());
        let tr = self.triple;
        let nv = lay.nvars.max(1);
        let grad = self.inst.terminal_cost.gradient(&tr.x[nu]);
        let mut end = Affine {
            constant: grad.iter().map(|g| -lambda * g).collect(),
            coef: vec![vec![0.0; nv]; n],
        };
        for &(i, k) in &lay.eta_end {
            for r in 0..n {
                end.coef[r][k] -= tr.u[nu][i][r];
            }
        }
        let normals = self.inst.target_inflated.normals();
        for &(l, k) in &lay.omega {
            for r in 0..n {
                end.coef[r][k] -= normals[l][r];
            }
        }
        let mut out = vec![end; nu + 1];
        for j in (0..nu).rev() {
            let h = self.inst.mesh.h(j);
            let mut a = out[j + 1].clone();
            for &(jj, i, kp, km) in &lay.gamma {
                if jj != j {
                    continue;
                }
                for r in 0..n {
                    let v = h * tr.u[j][i][r];
                    a.coef[r][kp] -= v;
                    if let Some(km) = km {
                        a.coef[r][km] += v;
                    }
                }
            }
            out[j] = a;
        }
        out
    }

    /// Solves one program; `None` when infeasible.
    fn solve(&self, modes: &[Vec<GammaMode>], lambda: f64) -> Option<MultiplierSet> {
        let (m, nu) = (self.inst.num_constraints(), self.inst.steps());
        let tr = self.triple;
        let lay = self.layout(modes);
        let nv = lay.nvars;
        if nv == 0 && lambda == 0.0 {
            return None;
        }
        let px = self.adjoint_x(&lay, lambda);
        let mut lp = LinearProgram::new(nv.max(1));
        let mut cost = vec![1.0; nv.max(1)];
        if nv == 0 {
            cost[0] = 0.0;
            lp.set_bounds(0, 0.0, 0.0);
        }
        lp.set_objective(cost);
        for j in 0..nu {
            let h = self.inst.mesh.h(j);
            for i in 0..m {
                let needs_orth = self.eta[j][i] > PREMISE_BAND;
                let needs_sign = modes[j][i] == GammaMode::Nonneg;
                if !needs_orth && !needs_sign {
                    continue;
                }
                // <u, y> = <u, -λθ/h> + <u, p^x_{j+1}>
                let u = &tr.u[j][i];
                let (c, mut row) = px[j + 1].dot(u);
                let c = c - lambda * dot(u, &self.theta[j]) / h;
                row.resize(nv.max(1), 0.0);
                if needs_orth {
                    lp.add_row(row.clone(), RowKind::Le, self.band - c);
                    lp.add_row(row, RowKind::Ge, -self.band - c);
                } else {
                    lp.add_row(row, RowKind::Ge, -c);
                }
            }
        }
        if lambda == 0.0 {
            lp.add_row(vec![1.0; nv], RowKind::Eq, 1.0);
        }
        let sol = lp.solve().ok()?;
        let x = &sol.x;
        let mut gamma = vec![vec![0.0; m]; nu];
        for &(j, i, kp, km) in &lay.gamma {
            gamma[j][i] = x[kp] - km.map_or(0.0, |k| x[k]);
        }
        let mut eta = self.eta.clone();
        eta.push(vec![0.0; m]);
        for &(i, k) in &lay.eta_end {
            eta[nu][i] = x[k];
        }
        let mut omega = vec![0.0; self.inst.target_inflated.num_constraints()];
        for &(l, k) in &lay.omega {
            omega[l] = x[k];
        }
        let mut au = vec![vec![0.0; m]; nu + 1];
        let mut al = vec![vec![0.0; m]; nu + 1];
        for &(j, i, k) in &lay.alpha_upper {
            au[j][i] = x[k];
        }
        for &(j, i, k) in &lay.alpha_lower {
            al[j][i] = x[k];
        }
        let raw = assemble(self.inst, tr, &self.theta, lambda, gamma, au, al, eta, omega);
        let scale = normalization(&raw);
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        let s = 1.0 / scale;
        let sc = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            v.iter().map(|r| r.iter().map(|a| a * s).collect()).collect()
        };
        let mut eta = raw.eta.clone();
        eta[nu] = raw.eta[nu].iter().map(|a| a * s).collect();
        Some(assemble(
            self.inst,
            tr,
            &self.theta,
            lambda * s,
            sc(&raw.gamma),
            sc(&raw.alpha_upper),
            sc(&raw.alpha_lower),
            eta,
            raw.omega.iter().map(|a| a * s).collect(),
        ))
    }
}

/// Recovers normalized multipliers for a feasible triple and checks every
/// condition family.
///
/// Fails with `Infeasible` when the dynamics admit no nonnegative `η` or no
/// sign branch of `γ` admits a solution, and with `PlicqViolated` when
/// some node has positively dependent active normals.
pub fn recover_multipliers(
    inst: &ProblemInstance,
    triple: &DiscreteTriple,
    opts: &RecoveryOptions,
) -> Result<Recovery, OptimalityError> {
    inst.check_triple(triple)?;
    let (m, nu) = (inst.num_constraints(), inst.steps());
    let rep = inst.feasibility_report(triple, opts.feasibility_tol);
    if rep.flagged.iter().any(|f| f == "dynamics") {
        let (j, r) = rep
            .dynamics
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (j, &r)| if r > acc.1 { (j, r) } else { acc });
        return Err(OptimalityError::Infeasible(format!(
            "dynamics at step {j} have residual {r:e}"
        )));
    }
    if !rep.is_feasible() {
        return Err(OptimalityError::Precondition(rep.flagged));
    }
    let mut plicq_nodes = Vec::new();
    for j in 0..=nu {
        let normals: Vec<Vec<f64>> = (0..m)
            .filter(|&i| is_active(triple, j, i))
            .map(|i| triple.u[j][i].clone())
            .collect();
        if normals.is_empty() {
            continue;
        }
        if !plicq_check(&normals)? {
            return Err(OptimalityError::PlicqViolated { node: j });
        }
        plicq_nodes.push(j);
    }
    let mut eta = Vec::with_capacity(nu);
    for j in 0..nu {
        let h = inst.mesh.h(j);
        let active: Vec<usize> = (0..m).filter(|&i| is_active(triple, j, i)).collect();
        let gens: Vec<Vec<f64>> = active.iter().map(|&i| triple.u[j][i].clone()).collect();
        let w: Vec<f64> = sub(&triple.x[j], &triple.x[j + 1]).iter().map(|v| v / h).collect();
        let fit = conic_fit(&gens, &w)?;
        if fit.residual > opts.feasibility_tol * (1.0 + norm(&w)) {
            return Err(OptimalityError::Infeasible(format!(
                "dynamics at step {j} have residual {:e}",
                fit.residual
            )));
        }
        let mut e = vec![0.0; m];
        for (&i, &c) in active.iter().zip(&fit.coefficients) {
            e[i] = c;
        }
        eta.push(e);
    }
    let setup = Setup {
        inst,
        triple,
        theta: inst.theta_x(triple),
        eta,
        band: opts.orthogonality_band,
    };

    let base: Vec<Vec<GammaMode>> = (0..nu)
        .map(|j| {
            (0..m)
                .map(|i| {
                    if !is_active(triple, j, i) {
                        GammaMode::Zero
                    } else if setup.eta[j][i] > PREMISE_BAND {
                        GammaMode::Free
                    } else {
                        GammaMode::Zero
                    }
                })
                .collect()
        })
        .collect();
    let optional: Vec<(usize, usize)> = (0..nu)
        .flat_map(|j| (0..m).map(move |i| (j, i)))
        .filter(|&(j, i)| is_active(triple, j, i) && setup.eta[j][i] <= PREMISE_BAND)
        .collect();

    let mut programs = 0;
    for lambda in [1.0, 0.0] {
        // subsets of the optional nonnegative γ, smallest first
        let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
        while let Some(subset) = frontier.first().cloned() {
            frontier.remove(0);
            if programs >= opts.max_branches {
                break;
            }
            let mut modes = base.clone();
            for &k in &subset {
                let (j, i) = optional[k];
                modes[j][i] = GammaMode::Nonneg;
            }
            programs += 1;
            if let Some(ms) = setup.solve(&modes, lambda) {
                let report = residual_report(inst, triple, &ms, opts.tol)?;
                let ntc = report.nontriviality;
                if ntc.initial > 0.0 && ntc.terminal > 0.0 {
                    return Ok(Recovery {
                        normal: ms.lambda > 0.0,
                        multipliers: ms,
                        report,
                        plicq_nodes,
                        programs,
                    });
                }
            }
            let start = subset.last().map_or(0, |&k| k + 1);
            for k in start..optional.len() {
                let mut s = subset.clone();
                s.push(k);
                frontier.push(s);
            }
        }
    }
    Err(OptimalityError::Infeasible(format!(
        "no multiplier set found after {programs} linear programs"
    )))
}
