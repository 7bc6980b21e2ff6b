//! Built-in control data.

use crate::control::{ControlPath, Mesh};
use crate::scalar::Scalar;

/// `u_1 = (0, 1), b_1 = 1, u_2(t) = (t, -1), b_2 = 0`. Linear in `t`, so the
/// piecewise-linear path is exact on any mesh.
pub fn example21_path<S: Scalar>(mesh: &Mesh<S>) -> ControlPath<S> {
    ControlPath::sample(mesh.clone(), |t| {
        (
            vec![vec![S::zero(), S::one()], vec![t, -S::one()]],
            vec![S::one(), S::zero()],
        )
    })
    .expect("example21 knots are well formed")
}

/// Same moving set as [`example21_path`] with the second normal scaled to
/// unit length, `u_2(t) = (t, -1)/sqrt(1 + t^2)`, sampled at the mesh nodes.
pub fn example21_unit_path<S: Scalar>(mesh: &Mesh<S>) -> ControlPath<S> {
    ControlPath::sample(mesh.clone(), |t| {
        let r = (S::one() + t * t).sqrt();
        (
            vec![vec![S::zero(), S::one()], vec![t / r, -S::one() / r]],
            vec![S::one(), S::zero()],
        )
    })
    .expect("example21 knots are well formed")
}
