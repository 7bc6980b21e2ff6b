//! Euclidean projection by a dual active-set method (Goldfarb-Idnani with an
//! identity Hessian), and the ball-truncated distance built on it.

use serde::{Deserialize, Serialize};

use super::{GeometryError, Polyhedron};
use crate::linalg::{axpy, dot, gram, norm, norm_sq, solve, sub};
use crate::scalar::{Scalar, Tolerances};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ProjectionResult<S: Scalar> {
    pub point: Vec<S>,
    /// Multipliers with `input - point = sum_i multipliers[i] * u_i`.
    pub multipliers: Vec<S>,
    pub active: Vec<usize>,
    pub distance: S,
}

/// Constraint data rescaled to unit normals.
struct Unit<S> {
    idx: Vec<usize>,
    a: Vec<Vec<S>>,
    c: Vec<S>,
    scale: Vec<S>,
}

impl<S: Scalar> Polyhedron<S> {
    fn unit_rows(&self) -> Result<Unit<S>, GeometryError> {
        let mut u = Unit {
            idx: Vec::new(),
            a: Vec::new(),
            c: Vec::new(),
            scale: Vec::new(),
        };
        for (i, (ui, &bi)) in self.normals.iter().zip(&self.offsets).enumerate() {
            let nu = norm(ui);
            if nu == S::zero() {
                if bi < S::zero() {
                    return Err(GeometryError::EmptyPolyhedron);
                }
                continue;
            }
            u.idx.push(i);
            u.a.push(ui.iter().map(|&v| v / nu).collect());
            u.c.push(bi / nu);
            u.scale.push(nu);
        }
        Ok(u)
    }

    pub fn project_with(
        &self,
        x: &[S],
        tol: &Tolerances<S>,
    ) -> Result<ProjectionResult<S>, GeometryError> {
        self.check_dim(x)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidArgument("non-finite point".into()));
        }
        let unit = self.unit_rows()?;
        let n = self.dim();
        let m = unit.a.len();
        let xscale = S::one() + norm(x);
        let viol_tol = |k: usize| S::epsilon() * S::c(1e3) * (xscale + unit.c[k].abs());

        let mut y = x.to_vec();
        let mut act: Vec<usize> = Vec::new();
        let mut eta: Vec<S> = Vec::new();
        let mut skipped = vec![false; m];
        let cap = 50 * (self.num_constraints() + n) + 10;
        let mut iter = 0;

        loop {
            // pick the violated constraint with the smallest index
            let mut pick = None;
            for k in 0..m {
                if skipped[k] || act.contains(&k) {
                    continue;
                }
                if dot(&unit.a[k], &y) - unit.c[k] > viol_tol(k) {
                    pick = Some(k);
                    break;
                }
            }
            let Some(p) = pick else { break };
            let mut eta_p = S::zero();
            loop {
                iter += 1;
                if iter > cap {
                    return Err(GeometryError::NumericalFailure(
                        "projection iteration budget exhausted".into(),
                    ));
                }
                let s_p = dot(&unit.a[p], &y) - unit.c[p];
                if s_p <= viol_tol(p) {
                    break;
                }
                // r = G^{-1} A_J a_p,  z = -(a_p - A_J^T r)
                let (r, z) = if act.is_empty() {
                    (Vec::new(), unit.a[p].iter().map(|&v| -v).collect::<Vec<S>>())
                } else {
                    let rows: Vec<&[S]> = act.iter().map(|&k| unit.a[k].as_slice()).collect();
                    let g = gram(&rows);
                    let rhs: Vec<S> = rows.iter().map(|r| dot(r, &unit.a[p])).collect();
                    let r = solve(&g, &rhs, S::epsilon() * S::c(1e3)).ok_or_else(|| {
                        GeometryError::NumericalFailure("singular active Gram matrix".into())
                    })?;
                    let mut z: Vec<S> = unit.a[p].iter().map(|&v| -v).collect();
                    for (ri, row) in r.iter().zip(&rows) {
                        axpy(*ri, row, &mut z);
                    }
                    (r, z)
                };
                let zz = norm_sq(&z);
                // partial step limit from multipliers that would turn negative
                let mut t1 = S::infinity();
                let mut drop = None;
                for (q, &rq) in r.iter().enumerate() {
                    if rq > S::epsilon() * S::c(1e2) {
                        let lim = eta[q] / rq;
                        if lim < t1 {
                            t1 = lim;
                            drop = Some(q);
                        }
                    }
                }
                let dependent = zz <= S::epsilon() * S::c(1e4);
                if dependent {
                    match drop {
                        None => {
                            if s_p * unit.scale[p] <= tol.feasibility {
                                skipped[p] = true;
                                break;
                            }
                            return Err(if self.is_empty()? {
                                GeometryError::EmptyPolyhedron
                            } else {
                                GeometryError::NumericalFailure(
                                    "dual active-set step stalled on a feasible set".into(),
                                )
                            });
                        }
                        Some(q) => {
                            for (e, &rq) in eta.iter_mut().zip(&r) {
                                *e -= t1 * rq;
                            }
                            eta_p += t1;
                            act.remove(q);
                            eta.remove(q);
                            continue;
                        }
                    }
                }
                let t2 = s_p / zz;
                if t2 <= t1 {
                    axpy(t2, &z, &mut y);
                    for (e, &rq) in eta.iter_mut().zip(&r) {
                        *e -= t2 * rq;
                    }
                    eta_p += t2;
                    act.push(p);
                    eta.push(eta_p);
                    break;
                } else {
                    let q = drop.expect("finite partial step has a blocking index");
                    axpy(t1, &z, &mut y);
                    for (e, &rq) in eta.iter_mut().zip(&r) {
                        *e -= t1 * rq;
                    }
                    eta_p += t1;
                    act.remove(q);
                    eta.remove(q);
                }
            }
        }

        // polish on the identified active set
        if !act.is_empty() {
            let rows: Vec<&[S]> = act.iter().map(|&k| unit.a[k].as_slice()).collect();
            let g = gram(&rows);
            let rhs: Vec<S> = act
                .iter()
                .map(|&k| dot(&unit.a[k], x) - unit.c[k])
                .collect();
            if let Some(e2) = solve(&g, &rhs, S::epsilon() * S::c(1e3)) {
                let mut y2 = x.to_vec();
                for (ek, row) in e2.iter().zip(&rows) {
                    axpy(-*ek, row, &mut y2);
                }
                let ok_sign = e2.iter().all(|&v| v >= -S::epsilon() * S::c(1e4) * xscale);
                let worst = |pt: &[S]| {
                    (0..m).fold(S::zero(), |w, k| {
                        w.max((dot(&unit.a[k], pt) - unit.c[k]) * unit.scale[k])
                    })
                };
                if ok_sign && worst(&y2) <= worst(&y).max(tol.feasibility) {
                    y = y2;
                    eta = e2.into_iter().map(|v| v.max(S::zero())).collect();
                }
            }
        }

        let mut multipliers = vec![S::zero(); self.num_constraints()];
        for (&k, &e) in act.iter().zip(&eta) {
            multipliers[unit.idx[k]] = e / unit.scale[k];
        }
        let slacks = self.slacks(&y)?;
        let active: Vec<usize> = slacks
            .iter()
            .enumerate()
            .filter(|(_, &s)| s.abs() <= tol.active)
            .map(|(i, _)| i)
            .collect();
        for (i, mu) in multipliers.iter_mut().enumerate() {
            if !active.contains(&i) {
                *mu = S::zero();
            }
        }
        let distance = norm(&sub(x, &y));
        Ok(ProjectionResult {
            point: y,
            multipliers,
            active,
            distance,
        })
    }

    /// Distance from `x` to `P ∩ B(0, r)`. Requires `|x| <= r`.
    pub fn truncated_distance(&self, x: &[S], r: S) -> Result<S, GeometryError> {
        Ok(self.truncated_projection(x, r)?.1)
    }

    /// Closest point of `P ∩ B(0, r)` to `x` and its distance.
    pub fn truncated_projection(&self, x: &[S], r: S) -> Result<(Vec<S>, S), GeometryError> {
        self.check_dim(x)?;
        if !(r > S::zero()) {
            return Err(GeometryError::InvalidArgument("radius must be positive".into()));
        }
        if norm(x) > r * (S::one() + S::epsilon() * S::c(1e3)) {
            return Err(GeometryError::InvalidArgument(
                "point lies outside the truncation ball".into(),
            ));
        }
        let tol = Tolerances::default();
        let origin = vec![S::zero(); self.dim()];
        let d0 = match self.project_with(&origin, &tol) {
            Ok(p) => p.distance,
            Err(GeometryError::EmptyPolyhedron) => {
                return Err(GeometryError::EmptyTruncation { radius: r.as_f64() })
            }
            Err(e) => return Err(e),
        };
        if d0 > r {
            return Err(GeometryError::EmptyTruncation { radius: r.as_f64() });
        }
        let full = self.project_with(x, &tol)?;
        if norm(&full.point) <= r {
            return Ok((full.point, full.distance));
        }
        // The minimizer is P_P(s x) for the s in (0, 1] where |P_P(s x)| = r.
        let scaled = |s: S| -> Result<ProjectionResult<S>, GeometryError> {
            let sx: Vec<S> = x.iter().map(|&v| v * s).collect();
            self.project_with(&sx, &tol)
        };
        let (mut lo, mut hi) = (S::zero(), S::one());
        let mut best = full;
        for _ in 0..200 {
            let mid = (lo + hi) * S::c(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            let p = scaled(mid)?;
            if norm(&p.point) > r {
                hi = mid;
            } else {
                lo = mid;
                best = p;
            }
        }
        if norm(&best.point) > r {
            best = scaled(lo)?;
        }
        let mut y = best.point.clone();
        // closed-form correction on the affine hull of the active constraints:
        // y(s) = y0 + s M x with y0 in range(A^T) and M x in null(A)
        let unit = self.unit_rows()?;
        let act: Vec<usize> = best
            .active
            .iter()
            .filter_map(|i| unit.idx.iter().position(|k| k == i))
            .collect();
        let rows: Vec<&[S]> = act.iter().map(|&k| unit.a[k].as_slice()).collect();
        let (y0, mx) = if rows.is_empty() {
            (vec![S::zero(); self.dim()], x.to_vec())
        } else {
            let g = gram(&rows);
            let cj: Vec<S> = act.iter().map(|&k| unit.c[k]).collect();
            let ax: Vec<S> = rows.iter().map(|r| dot(r, x)).collect();
            match (
                solve(&g, &cj, S::epsilon() * S::c(1e3)),
                solve(&g, &ax, S::epsilon() * S::c(1e3)),
            ) {
                (Some(wc), Some(wx)) => {
                    let mut y0 = vec![S::zero(); self.dim()];
                    let mut mx = x.to_vec();
                    for ((row, a), b) in rows.iter().zip(&wc).zip(&wx) {
                        axpy(*a, row, &mut y0);
                        axpy(-*b, row, &mut mx);
                    }
                    (y0, mx)
                }
                _ => (Vec::new(), Vec::new()),
            }
        };
        let mm = norm_sq(&mx);
        if !y0.is_empty() && mm > S::epsilon() {
            let rem = r * r - norm_sq(&y0);
            if rem > S::zero() {
                let s = (rem / mm).sqrt();
                let mut cand = y0.clone();
                axpy(s, &mx, &mut cand);
                let feasible = self.contains(&cand, tol.feasibility)?;
                let near = crate::linalg::dist(&cand, &y) <= S::c(1e-6) * (S::one() + r);
                if feasible && near && s <= S::one() + S::epsilon() * S::c(1e3) {
                    y = cand;
                }
            }
        }
        let d = norm(&sub(x, &y));
        Ok((y, d))
    }
}
