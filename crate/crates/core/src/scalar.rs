//! Floating-point abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used throughout the kernels. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("literal out of range for scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Tolerances used by the geometry kernel and everything built on it.
///
/// The defaults are tuned for `f64`. For `f32` they are floored at a small
/// multiple of machine epsilon so that the predicates stay meaningful.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(bound = "")]
pub struct Tolerances<S: Scalar> {
    /// Slack allowed when testing membership `<u_i, x> <= b_i`.
    pub feasibility: S,
    /// Band within which a constraint counts as active.
    pub active: S,
    /// Residual allowed in projection stationarity.
    pub stationarity: S,
}

impl<S: Scalar> Default for Tolerances<S> {
    fn default() -> Self {
        let floor = S::epsilon() * S::c(64.0);
        Tolerances {
            feasibility: S::c(1e-9).max(floor),
            active: S::c(1e-7).max(floor * S::c(4.0)),
            stationarity: S::c(1e-8).max(floor),
        }
    }
}
