//! Closed-form trajectory for the moving set
//! `{x2 <= 1, t x1 - x2 <= 0}` on `[0, 1]`.

use super::SweepError;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleBranch<S> {
    /// `x0_2 >= x0_1`: the state never moves.
    Stationary,
    /// `x0_2 < x0_1`: rest until `t1`, slide along the moving facet until
    /// `t2` (infinite if the top facet is never reached), then follow the
    /// vertex `(1/t, 1)`.
    Sliding { t1: S, t2: S },
}

pub fn oracle_branch<S: Scalar>(x0: &[S]) -> Result<OracleBranch<S>, SweepError> {
    if x0.len() != 2 {
        return Err(SweepError::OutOfDomain("state must be two-dimensional".into()));
    }
    let (a, c) = (x0[0], x0[1]);
    let tol = S::epsilon() * S::c(16.0);
    if !(c >= -tol && c <= S::one() + tol) {
        return Err(SweepError::OutOfDomain(format!(
            "x0 = ({a}, {c}) is not in the initial set 0 <= x2 <= 1"
        )));
    }
    if c >= a {
        return Ok(OracleBranch::Stationary);
    }
    let r2 = a * a + c * c;
    let t2 = if r2 >= S::c(2.0) {
        S::one() / (r2 - S::one()).sqrt()
    } else {
        S::infinity()
    };
    Ok(OracleBranch::Sliding { t1: c / a, t2 })
}

/// Exact solution at time `t ∈ [0, 1]` started from `x0`.
pub fn analytic_oracle<S: Scalar>(x0: &[S], t: S) -> Result<Vec<S>, SweepError> {
    let branch = oracle_branch(x0)?;
    let tol = S::epsilon() * S::c(16.0);
    if !(t >= -tol && t <= S::one() + tol) {
        return Err(SweepError::OutOfDomain(format!("t = {t} outside [0, 1]")));
    }
    let t = t.max(S::zero()).min(S::one());
    Ok(match branch {
        OracleBranch::Stationary => x0.to_vec(),
        OracleBranch::Sliding { t1, t2 } => {
            if t <= t1 {
                x0.to_vec()
            } else if t < t2 {
                let r = (x0[0] * x0[0] + x0[1] * x0[1]).sqrt();
                let s = r / (S::one() + t * t).sqrt();
                vec![s, s * t]
            } else {
                vec![S::one() / t, S::one()]
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn switching_times() {
        match oracle_branch(&[2.0, 0.5]).unwrap() {
            OracleBranch::Sliding { t1, t2 } => {
                assert_eq!(t1, 0.25);
                assert!((t2 - 1.0 / 3.25f64.sqrt()).abs() < 1e-15);
                assert!((t2 - 0.554700).abs() < 1e-6);
            }
            b => panic!("unexpected {b:?}"),
        }
        assert_eq!(oracle_branch(&[0.2, 0.5]).unwrap(), OracleBranch::Stationary);
    }

    #[test]
    fn values() {
        let x = analytic_oracle(&[2.0, 0.5], 0.4).unwrap();
        let s = 4.25f64.sqrt() / 1.16f64.sqrt();
        assert!((x[0] - s).abs() < 1e-15 && (x[1] - 0.4 * s).abs() < 1e-15);
        assert!((x[0] - 1.914104).abs() < 1e-6 && (x[1] - 0.765641).abs() < 1e-6);
        assert_eq!(analytic_oracle(&[2.0, 0.5], 1.0).unwrap(), vec![1.0, 1.0]);
        assert_eq!(analytic_oracle(&[2.0, 0.5], 0.1).unwrap(), vec![2.0, 0.5]);
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(analytic_oracle(&[0.2, 0.5], t).unwrap(), vec![0.2, 0.5]);
        }
    }

    #[test]
    fn continuity_at_switches() {
        let x0 = [2.0, 0.5];
        let OracleBranch::Sliding { t1, t2 } = oracle_branch::<f64>(&x0).unwrap() else {
            unreachable!()
        };
        for ts in [t1, t2] {
            let a = analytic_oracle(&x0, ts - 1e-9).unwrap();
            let b = analytic_oracle(&x0, ts + 1e-9).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-7 && (a[1] - b[1]).abs() < 1e-7);
        }
    }

    #[test]
    fn short_start_never_reaches_top() {
        // |x0|^2 = 1.25 < 2
        let x0 = [1.0, 0.5];
        let OracleBranch::Sliding { t2, .. } = oracle_branch::<f64>(&x0).unwrap() else {
            unreachable!()
        };
        assert!(t2.is_infinite());
        let x = analytic_oracle(&x0, 1.0).unwrap();
        let r = 1.25f64.sqrt() / 2f64.sqrt();
        assert!((x[0] - r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(analytic_oracle(&[0.0, 1.5], 0.5).is_err());
        assert!(analytic_oracle(&[1.0, -0.5], 0.5).is_err());
        assert!(analytic_oracle(&[2.0, 0.5], 1.5).is_err());
        assert!(analytic_oracle(&[2.0, 0.5, 1.0], 0.5).is_err());
    }
}
