//! Slater margins, error-bound estimates, Hoffman ratios and PLICQ.

use serde::{Deserialize, Serialize};

use super::{GeometryError, Polyhedron};
use crate::linalg::{dist, dot};
use crate::lp::{LinearProgram, LpError, RowKind};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SlaterCertificate<S: Scalar> {
    pub point: Vec<S>,
    /// `min_i (b_i - <u_i, point>)`, recomputed from `point`.
    pub margin: S,
    /// Half-width of the coordinate box the point was searched in.
    pub radius: S,
}

impl<S: Scalar> Polyhedron<S> {
    /// `min_i (b_i - <u_i, x>)`.
    pub fn margin_at(&self, x: &[S]) -> Result<S, GeometryError> {
        let s = self.slacks(x)?;
        Ok(s.iter().fold(S::infinity(), |m, &v| m.min(-v)))
    }

    /// Largest uniform margin over the box `[-R, R]^n`. Among maximizers the
    /// point of least l1 norm is returned.
    pub fn slater_margin(&self, radius: S) -> Result<SlaterCertificate<S>, GeometryError> {
        if !(radius > S::zero()) {
            return Err(GeometryError::InvalidArgument("radius must be positive".into()));
        }
        let n = self.dim();
        // variables: x (n), s
        let mut lp = LinearProgram::<S>::new(n + 1);
        for j in 0..n {
            lp.set_bounds(j, -radius, radius);
        }
        lp.set_free(n);
        lp.set_cost(n, -S::one());
        for (u, &b) in self.normals.iter().zip(&self.offsets) {
            let mut row = u.clone();
            row.push(S::one());
            lp.add_row(row, RowKind::Le, b);
        }
        let sol = lp.solve()?;
        let s_star = sol.x[n];

        // second stage: least l1 norm among maximizers; variables x, t
        let point = self
            .least_norm_at_margin(radius, s_star)
            .or_else(|| {
                let relaxed = s_star - S::c(1e-12) * (S::one() + s_star.abs());
                self.least_norm_at_margin(radius, relaxed)
            })
            .unwrap_or_else(|| sol.x[..n].to_vec());
        let margin = self.margin_at(&point)?;
        Ok(SlaterCertificate {
            point,
            margin,
            radius,
        })
    }

    fn least_norm_at_margin(&self, radius: S, s: S) -> Option<Vec<S>> {
        let n = self.dim();
        let mut lp2 = LinearProgram::<S>::new(2 * n);
        for j in 0..n {
            lp2.set_bounds(j, -radius, radius);
            lp2.set_cost(n + j, S::one());
            lp2.add_sparse_row(&[(n + j, S::one()), (j, -S::one())], RowKind::Ge, S::zero());
            lp2.add_sparse_row(&[(n + j, S::one()), (j, S::one())], RowKind::Ge, S::zero());
        }
        for (u, &b) in self.normals.iter().zip(&self.offsets) {
            let mut row = u.clone();
            row.extend(std::iter::repeat_n(S::zero(), n));
            lp2.add_row(row, RowKind::Le, b - s);
        }
        lp2.solve().ok().map(|s2| s2.x[..n].to_vec())
    }

    /// Upper bound `f(x)/(f(x) - f(xh)) * |x - xh|` on `d(x, P)`, where `f` is
    /// the max-residual and `xh` the certificate point.
    pub fn distance_upper_bound(
        &self,
        x: &[S],
        cert: &SlaterCertificate<S>,
    ) -> Result<S, GeometryError> {
        self.check_dim(&cert.point)?;
        let (fx, _) = self.residual(x)?;
        if !(fx > S::zero()) {
            return Err(GeometryError::NotApplicable("point lies in the polyhedron".into()));
        }
        let fh = -self.margin_at(&cert.point)?;
        if !(fh < S::zero()) {
            return Err(GeometryError::NotApplicable(
                "certificate has no positive margin".into(),
            ));
        }
        let lambda = fx / (fx - fh);
        Ok(lambda * dist(x, &cert.point))
    }

    /// `d(x, P) / max_i [<u_i,x> - b_i]_+`.
    pub fn hoffman_ratio(&self, x: &[S]) -> Result<S, GeometryError> {
        let (fx, _) = self.residual(x)?;
        if !(fx > S::zero()) {
            return Err(GeometryError::NotApplicable("point lies in the polyhedron".into()));
        }
        Ok(self.distance(x)? / fx)
    }
}

/// True iff the only `alpha >= 0` with `sum alpha_i u_i = 0` is zero.
pub fn plicq_check<S: Scalar>(normals: &[Vec<S>]) -> Result<bool, GeometryError> {
    let k = normals.len();
    if k == 0 {
        return Ok(true);
    }
    let n = normals[0].len();
    if normals.iter().any(|u| u.len() != n) {
        return Err(GeometryError::InvalidArgument("ragged normals".into()));
    }
    let mut lp = LinearProgram::<S>::new(k);
    for i in 0..k {
        lp.set_bounds(i, S::zero(), S::one());
        lp.set_cost(i, -S::one());
    }
    for c in 0..n {
        let row: Vec<S> = normals.iter().map(|u| u[c]).collect();
        lp.add_row(row, RowKind::Eq, S::zero());
    }
    match lp.solve() {
        Ok(sol) => {
            // re-verify from the returned point to avoid trusting the tableau
            let total = sol.x.iter().fold(S::zero(), |a, &v| a + v);
            let mut comb = vec![S::zero(); n];
            for (a, u) in sol.x.iter().zip(normals) {
                for (cj, &uj) in comb.iter_mut().zip(u) {
                    *cj += *a * uj;
                }
            }
            let scale = normals
                .iter()
                .flatten()
                .fold(S::one(), |m, &v| m.max(v.abs()));
            let resid = dot(&comb, &comb).sqrt();
            let tiny = S::c(1e-9).max(S::epsilon() * S::c(1e3));
            Ok(!(total > tiny && resid <= tiny * scale * S::c(1e2)))
        }
        Err(LpError::Infeasible) => Err(GeometryError::NumericalFailure(
            "PLICQ LP reported infeasible at alpha = 0".into(),
        )),
        Err(e) => Err(e.into()),
    }
}
