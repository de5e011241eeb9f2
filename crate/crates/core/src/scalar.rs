//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the simulator can run on.
///
/// Implemented for `f32` and `f64`. Everything generic in the crate is
/// written against this bound so the same code paths can be exercised at
/// either precision.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`; used for literals and configuration values.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Real")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable in every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Smallest integer not below `v`, as a pull count.
///
/// Negative and NaN inputs map to zero.
pub fn ceil_count<T: Real>(v: T) -> u64 {
    let c = v.ceil();
    if c.is_nan() || c <= T::zero() {
        0
    } else {
        c.to_u64().unwrap_or(u64::MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_count_endpoints() {
        assert_eq!(ceil_count(0.0f64), 0);
        assert_eq!(ceil_count(-0.0f64), 0);
        assert_eq!(ceil_count(5.803f64), 6);
        assert_eq!(ceil_count(58.03f32), 59);
        assert_eq!(ceil_count(3.0f64), 3);
        assert_eq!(ceil_count(f64::NAN), 0);
    }

    #[test]
    fn conversions_round_trip() {
        assert_eq!(f32::of(0.5).as_f64(), 0.5);
        assert_eq!(f64::of_usize(7), 7.0);
    }
}
