//! Steering problem on the moving set `{x2 <= 1, <(t, -1), x> <= 0}`.

use super::{DiscoptError, Reference, SweepOCP, TerminalCost};
use crate::builtin::example21_unit_path;
use crate::control::Mesh;
use crate::geometry::Polyhedron;
use crate::sweep::analytic_oracle;

/// Unit-normal controls and the exact trajectory from `(2, 0.5)`, sampled on
/// the uniform mesh with `nu` intervals.
pub fn steering_reference(nu: usize) -> Result<Reference, DiscoptError> {
    let mesh = Mesh::uniform(1.0, nu)?;
    let control = example21_unit_path(&mesh);
    let states = mesh
        .nodes()
        .iter()
        .map(|&t| analytic_oracle(&[2.0, 0.5], t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Reference { control, states })
}

/// Quadratic terminal cost towards `(1, 1)`, endpoint box
/// `[0.75, 1.25]^2`, `epsilon = 10`, `delta0 = 0.1`. The reference lives on
/// `nu0 * 2^ref_levels` intervals, so levels `0..=ref_levels` can be built.
pub fn steering_scenario(nu0: usize, ref_levels: u32) -> Result<SweepOCP, DiscoptError> {
    let reference = steering_reference(nu0 << ref_levels)?;
    let omega = Polyhedron::new(
        vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ],
        vec![1.25, -0.75, 1.25, -0.75],
    )?;
    SweepOCP::new(
        TerminalCost::Quadratic {
            target: vec![1.0, 1.0],
        },
        omega,
        reference,
        10.0,
        0.1,
        nu0,
    )
}
