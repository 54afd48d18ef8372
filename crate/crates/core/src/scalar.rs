//! Floating-point scalar abstraction shared by the model, the preference
//! objective and the metric code.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// f32 or f64.
///
/// Besides the arithmetic bounds, every scalar knows how to render itself
/// as the hex of its IEEE-754 bit pattern. Checkpoint files use that encoding
/// so that a write/read cycle is bit-exact on every platform.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Name written into checkpoint headers.
    const NAME: &'static str;

    fn to_bits_hex(self) -> String;

    fn from_bits_hex(s: &str) -> Option<Self>;

    /// Lossy conversion from f64 used for hyperparameters and initialisation.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn to_bits_hex(self) -> String {
        format!("{:08x}", self.to_bits())
    }

    fn from_bits_hex(s: &str) -> Option<Self> {
        if s.len() != 8 {
            return None;
        }
        u32::from_str_radix(s, 16).ok().map(f32::from_bits)
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn to_bits_hex(self) -> String {
        format!("{:016x}", self.to_bits())
    }

    fn from_bits_hex(s: &str) -> Option<Self> {
        if s.len() != 16 {
            return None;
        }
        u64::from_str_radix(s, 16).ok().map(f64::from_bits)
    }
}
