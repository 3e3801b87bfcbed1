//! Scalar abstraction shared by every table in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real number type a factor table can be stored in.
///
/// Besides the usual float arithmetic, sharedness needs a bit-exact view of
/// every value so that tables can be interned and compared without tolerance.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Bit pattern of the value, widened to 64 bits.
    fn bit_pattern(self) -> u64;

    /// Number of significant decimal digits needed for a lossless text round trip.
    const ROUND_TRIP_DIGITS: usize;
}

impl Scalar for f64 {
    fn bit_pattern(self) -> u64 {
        self.to_bits()
    }

    const ROUND_TRIP_DIGITS: usize = 17;
}

impl Scalar for f32 {
    fn bit_pattern(self) -> u64 {
        u64::from(self.to_bits())
    }

    const ROUND_TRIP_DIGITS: usize = 9;
}

/// Formats `value` in scientific notation with `T::ROUND_TRIP_DIGITS` significant digits.
pub fn format_round_trip<T: Scalar>(value: T) -> String {
    format!("{:.*e}", T::ROUND_TRIP_DIGITS - 1, value)
}
