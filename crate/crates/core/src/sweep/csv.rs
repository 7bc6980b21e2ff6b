//! Trajectory CSV: `t, x_1..x_n, eta_1..eta_m, active`.

use super::{SweepError, Trajectory};
use crate::format::fmt_f64;
use crate::scalar::Scalar;

/// One row per node. The multipliers and active set on row `j >= 1` belong to
/// the step arriving at node `j`; row 0 carries zeros. The active set is a
/// bitmask with bit `i` for constraint `i`.
pub fn trajectory_csv<S: Scalar>(traj: &Trajectory<S>) -> Result<String, SweepError> {
    let n = traj.states[0].len();
    let m = traj.step_multipliers.first().map_or(0, |e| e.len());
    if m > 128 {
        return Err(SweepError::Invalid(
            "active-set bitmask supports at most 128 constraints".into(),
        ));
    }
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",x_{i}"));
    }
    for i in 1..=m {
        out.push_str(&format!(",eta_{i}"));
    }
    out.push_str(",active\n");
    for (j, x) in traj.states.iter().enumerate() {
        let mut row = vec![fmt_f64(traj.mesh.node(j).as_f64())];
        row.extend(x.iter().map(|v| fmt_f64(v.as_f64())));
        let mut mask: u128 = 0;
        if j == 0 {
            row.extend(std::iter::repeat_n(fmt_f64(0.0), m));
        } else {
            row.extend(traj.step_multipliers[j - 1].iter().map(|v| fmt_f64(v.as_f64())));
            for &i in &traj.active_sets[j - 1] {
                mask |= 1u128 << i;
            }
        }
        row.push(mask.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::example21_path;
    use crate::control::Mesh;
    use crate::sweep::{catching_up, Scheme};

    #[test]
    fn layout_and_determinism() {
        let mesh = Mesh::<f64>::uniform(1.0, 20).unwrap();
        let p = example21_path(&mesh);
        let tr = catching_up(&p, &[2.0, 0.5], &mesh, Scheme::Implicit).unwrap();
        let a = trajectory_csv(&tr).unwrap();
        let b = trajectory_csv(&catching_up(&p, &[2.0, 0.5], &mesh, Scheme::Implicit).unwrap()).unwrap();
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines[0], "t,x_1,x_2,eta_1,eta_2,active");
        assert_eq!(lines.len(), 22);
        // the last step sits at the vertex: both constraints active
        assert!(lines[21].ends_with(",3"));
        assert!(lines[1].starts_with("0.0000000000000000e0,2.0000000000000000e0,5.0000000000000000e-1"));
    }
}
