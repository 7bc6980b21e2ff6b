//! Nonnegative combinations of a few generators.

use serde::{Deserialize, Serialize};

use super::{GeometryError, Polyhedron};
use crate::linalg::{axpy, norm, sub};
use crate::lp::{LinearProgram, RowKind};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ConicFit<S: Scalar> {
    /// `c >= 0`, minimal in sum among the combinations hitting the projection.
    pub coefficients: Vec<S>,
    /// `|w - sum_i c_i g_i|`.
    pub residual: S,
}

/// Projects `w` onto the cone generated by `generators` and returns the
/// cheapest nonnegative combination reproducing the projection.
///
/// The projection is computed through the polar polyhedron
/// `{z : <g_i, z> <= 0}`: `w - P_polar(w)` is the nearest cone point.
pub fn conic_fit<S: Scalar>(generators: &[Vec<S>], w: &[S]) -> Result<ConicFit<S>, GeometryError> {
    let k = generators.len();
    if k == 0 {
        return Ok(ConicFit {
            coefficients: Vec::new(),
            residual: norm(w),
        });
    }
    for g in generators {
        if g.len() != w.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: w.len(),
                got: g.len(),
            });
        }
    }
    let polar = Polyhedron::new(generators.to_vec(), vec![S::zero(); k])?;
    let pr = polar.project(w)?;
    let target = sub(w, &pr.point);
    let mut coefficients = pr.multipliers;

    let n = w.len();
    let mut lp = LinearProgram::new(k);
    lp.set_objective(vec![S::one(); k]);
    for r in 0..n {
        lp.add_row(generators.iter().map(|g| g[r]).collect(), RowKind::Eq, target[r]);
    }
    if let Ok(sol) = lp.solve() {
        let mut rec = w.to_vec();
        for (c, g) in sol.x.iter().zip(generators) {
            axpy(-*c, g, &mut rec);
        }
        let mut old = w.to_vec();
        for (c, g) in coefficients.iter().zip(generators) {
            axpy(-*c, g, &mut old);
        }
        if norm(&rec) <= norm(&old) + S::c(1e-12) * (S::one() + norm(w)) {
            coefficients = sol.x.iter().map(|&c| c.max(S::zero())).collect();
        }
    }
    let mut r = w.to_vec();
    for (c, g) in coefficients.iter().zip(generators) {
        axpy(-*c, g, &mut r);
    }
    Ok(ConicFit {
        coefficients,
        residual: norm(&r),
    })
}
