//! Upper estimate of the coderivative of `F(u, b, x) = N(x; C(u, b))`.
//!
//! For `x ∈ C`, `v ∈ N(x; C)` and a direction `y ∈ R^n`, elements have the
//! form `(Aᵀq, (p_i y + q_i x)_i, -q)` with `p ∈ P(y)`, `q ∈ Q(p)`:
//! `P(y)` collects `p >= 0` supported on active rows with `Aᵀp = v` and
//! `<u_i, y> = 0` wherever `p_i > 0`, and `Q(p)` restricts the signs of `q`.

use serde::{Deserialize, Serialize};

use super::{OptimalityError, PREMISE_BAND};
use crate::geometry::conic_fit;
use crate::linalg::{dot, norm, norm_sq};
use crate::lp::{LinearProgram, RowKind};

/// Sign restriction on one component of `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Zero,
    Nonneg,
    Free,
}

impl PatternKind {
    /// How far `q` is from satisfying the restriction.
    pub fn violation(self, q: f64) -> f64 {
        match self {
            PatternKind::Zero => q.abs(),
            PatternKind::Nonneg => (-q).max(0.0),
            PatternKind::Free => 0.0,
        }
    }
}

/// Candidate element `(x-part, u-part, b-part)` of the coderivative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoderivativeCandidate {
    pub x: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoderivativeCertificate {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub pattern: Vec<PatternKind>,
    /// `(Aᵀq, (p_i y + q_i x)_i, -q)`.
    pub reconstructed: CoderivativeCandidate,
    /// Largest componentwise gap between candidate and reconstruction.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub certificate: Option<CoderivativeCertificate>,
    /// Why the candidate was rejected.
    pub reason: Option<String>,
}

/// Gap tolerance for accepting a reconstruction.
const RECONSTRUCTION_TOL: f64 = 1e-10;

fn check_point(u: &[Vec<f64>], b: &[f64], x: &[f64]) -> Result<Vec<f64>, OptimalityError> {
    if u.len() != b.len() || u.iter().any(|ui| ui.len() != x.len()) {
        return Err(OptimalityError::ShapeMismatch(format!(
            "{} normals, {} offsets, point in R^{}",
            u.len(),
            b.len(),
            x.len()
        )));
    }
    let slacks: Vec<f64> = u.iter().zip(b).map(|(ui, &bi)| bi - dot(ui, x)).collect();
    for (i, &s) in slacks.iter().enumerate() {
        if s < -PREMISE_BAND {
            return Err(OptimalityError::NotFeasible {
                index: i,
                violation: -s,
            });
        }
    }
    Ok(slacks)
}

/// Per-index restriction on `q` for given `p` and `y`.
pub fn q_pattern(
    u: &[Vec<f64>],
    b: &[f64],
    x: &[f64],
    p: &[f64],
    y: &[f64],
) -> Result<Vec<PatternKind>, OptimalityError> {
    let slacks = check_point(u, b, x)?;
    if p.len() != u.len() || y.len() != x.len() {
        return Err(OptimalityError::ShapeMismatch("p or y has the wrong length".into()));
    }
    let mut kinds = Vec::with_capacity(u.len());
    for (i, ui) in u.iter().enumerate() {
        let uy = dot(ui, y);
        let kind = if slacks[i] > PREMISE_BAND {
            PatternKind::Zero
        } else if p[i] > PREMISE_BAND {
            if uy.abs() > PREMISE_BAND {
                return Err(OptimalityError::InconsistentInput { index: i, inner: uy });
            }
            PatternKind::Free
        } else if uy < -PREMISE_BAND {
            PatternKind::Zero
        } else {
            // <u_i, y> > 0, and by convention also the biactive case = 0
            PatternKind::Nonneg
        };
        kinds.push(kind);
    }
    Ok(kinds)
}

fn active_rows(slacks: &[f64]) -> Vec<usize> {
    (0..slacks.len()).filter(|&i| slacks[i] <= PREMISE_BAND).collect()
}

fn check_normal_cone(u: &[Vec<f64>], active: &[usize], v: &[f64]) -> Result<(), OptimalityError> {
    let gens: Vec<Vec<f64>> = active.iter().map(|&i| u[i].clone()).collect();
    let fit = conic_fit(&gens, v)?;
    if fit.residual > 1e-9 * (1.0 + norm(v)) {
        return Err(OptimalityError::NotInNormalCone {
            distance: fit.residual,
        });
    }
    Ok(())
}

/// The minimum-sum element of `P(y)`.
pub fn p_set_element(
    u: &[Vec<f64>],
    b: &[f64],
    x: &[f64],
    v: &[f64],
    y: &[f64],
) -> Result<Vec<f64>, OptimalityError> {
    let slacks = check_point(u, b, x)?;
    if v.len() != x.len() || y.len() != x.len() {
        return Err(OptimalityError::ShapeMismatch("v or y has the wrong length".into()));
    }
    let active = active_rows(&slacks);
    check_normal_cone(u, &active, v)?;
    let allowed: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&i| dot(&u[i], y).abs() <= PREMISE_BAND)
        .collect();
    let gens: Vec<Vec<f64>> = allowed.iter().map(|&i| u[i].clone()).collect();
    let fit = conic_fit(&gens, v)?;
    if fit.residual > 1e-9 * (1.0 + norm(v)) {
        return Err(OptimalityError::Infeasible(format!(
            "v is not a nonnegative combination of the active normals orthogonal to y \
             (distance {})",
            fit.residual
        )));
    }
    let mut p = vec![0.0; u.len()];
    for (&i, &c) in allowed.iter().zip(&fit.coefficients) {
        p[i] = c;
    }
    Ok(p)
}

/// Element of `P(0)` that is positive on `must`, if one exists.
fn p_positive_on(
    u: &[Vec<f64>],
    active: &[usize],
    v: &[f64],
    must: &[usize],
) -> Option<Vec<f64>> {
    let k = active.len();
    let n = v.len();
    // variables: p over active rows, then t
    let mut lp = LinearProgram::new(k + 1);
    let mut c = vec![0.0; k + 1];
    c[k] = -1.0;
    lp.set_objective(c);
    lp.set_bounds(k, 0.0, 1.0);
    for r in 0..n {
        let mut row: Vec<f64> = active.iter().map(|&i| u[i][r]).collect();
        row.push(0.0);
        lp.add_row(row, RowKind::Eq, v[r]);
    }
    for &i in must {
        let pos = active.iter().position(|&a| a == i)?;
        lp.add_sparse_row(&[(pos, 1.0), (k, -1.0)], RowKind::Ge, 0.0);
    }
    let sol = lp.solve().ok()?;
    if sol.x[k] <= PREMISE_BAND {
        return None;
    }
    let mut p = vec![0.0; u.len()];
    for (pos, &i) in active.iter().enumerate() {
        p[i] = sol.x[pos].max(0.0);
    }
    Some(p)
}

fn reject(reason: String) -> Membership {
    Membership {
        member: false,
        certificate: None,
        reason: Some(reason),
    }
}

/// Decides whether `candidate` has the form `(Aᵀq, (p_i y + q_i x)_i, -q)`
/// with `p ∈ P(y)` and `q ∈ Q(p)`.
///
/// `q` is read off the `b`-part. For `y != 0` each `p_i` is read off the
/// `u`-part; for `y = 0` an element of `P(0)` positive wherever `q` needs
/// a free sign is searched by LP. A `y` shorter than the premise band
/// counts as zero, since `p` cannot be read off it reliably.
pub fn coderivative_member(
    u: &[Vec<f64>],
    b: &[f64],
    x: &[f64],
    v: &[f64],
    y: &[f64],
    candidate: &CoderivativeCandidate,
) -> Result<Membership, OptimalityError> {
    // P(y) must be nonempty; this also validates the inputs
    let p_min = p_set_element(u, b, x, v, y)?;
    let m = u.len();
    let n = x.len();
    if candidate.x.len() != n
        || candidate.b.len() != m
        || candidate.u.len() != m
        || candidate.u.iter().any(|ci| ci.len() != n)
    {
        return Err(OptimalityError::ShapeMismatch("candidate has the wrong shape".into()));
    }
    let slacks = check_point(u, b, x)?;
    let active = active_rows(&slacks);
    let q: Vec<f64> = candidate.b.iter().map(|v| -v).collect();
    let yy = norm_sq(y);

    let p = if yy.sqrt() > PREMISE_BAND {
        (0..m)
            .map(|i| {
                let r: Vec<f64> = candidate.u[i]
                    .iter()
                    .zip(x)
                    .map(|(c, xv)| c - q[i] * xv)
                    .collect();
                let pi = dot(&r, y) / yy;
                if pi.abs() <= PREMISE_BAND * 1e-3 {
                    0.0
                } else {
                    pi
                }
            })
            .collect::<Vec<f64>>()
    } else {
        let must: Vec<usize> = (0..m).filter(|&i| q[i] < -PREMISE_BAND).collect();
        if must.is_empty() {
            p_min
        } else {
            match p_positive_on(u, &active, v, &must) {
                Some(p) => p,
                None => {
                    return Ok(reject(
                        "no element of P(0) is positive where q is negative".into(),
                    ))
                }
            }
        }
    };

    // p ∈ P(y)
    for i in 0..m {
        if p[i] < -PREMISE_BAND {
            return Ok(reject(format!("p_{i} = {} is negative", p[i])));
        }
        if p[i] > PREMISE_BAND && !active.contains(&i) {
            return Ok(reject(format!("p_{i} > 0 on an inactive constraint")));
        }
    }
    let mut atp = vec![0.0; n];
    for i in 0..m {
        for r in 0..n {
            atp[r] += p[i] * u[i][r];
        }
    }
    let vgap = atp.iter().zip(v).fold(0.0f64, |a, (s, t)| a.max((s - t).abs()));
    if vgap > 1e-9 * (1.0 + norm(v)) {
        return Ok(reject(format!("Aᵀp misses v by {vgap}")));
    }
    let pattern = match q_pattern(u, b, x, &p, y) {
        Ok(k) => k,
        Err(OptimalityError::InconsistentInput { index, inner }) => {
            return Ok(reject(format!(
                "p_{index} > 0 while <u_{index}, y> = {inner}"
            )))
        }
        Err(e) => return Err(e),
    };
    for i in 0..m {
        let viol = pattern[i].violation(q[i]);
        if viol > PREMISE_BAND {
            return Ok(reject(format!(
                "q_{i} = {} violates its {:?} restriction",
                q[i], pattern[i]
            )));
        }
    }

    let mut rx = vec![0.0; n];
    for i in 0..m {
        for r in 0..n {
            rx[r] += q[i] * u[i][r];
        }
    }
    let ru: Vec<Vec<f64>> = (0..m)
        .map(|i| y.iter().zip(x).map(|(yv, xv)| p[i] * yv + q[i] * xv).collect())
        .collect();
    let rb: Vec<f64> = q.iter().map(|v| -v).collect();
    let mut gap: f64 = 0.0;
    for (a, c) in rx.iter().zip(&candidate.x) {
        gap = gap.max((a - c).abs());
    }
    for (ri, ci) in ru.iter().zip(&candidate.u) {
        for (a, c) in ri.iter().zip(ci) {
            gap = gap.max((a - c).abs());
        }
    }
    for (a, c) in rb.iter().zip(&candidate.b) {
        gap = gap.max((a - c).abs());
    }
    if gap > RECONSTRUCTION_TOL {
        return Ok(reject(format!("reconstruction misses the candidate by {gap}")));
    }
    Ok(Membership {
        member: true,
        certificate: Some(CoderivativeCertificate {
            p,
            q,
            pattern,
            reconstructed: CoderivativeCandidate {
                x: rx,
                u: ru,
                b: rb,
            },
            gap,
        }),
        reason: None,
    })
}
