//! Scalar abstraction for the solver stack.
//!
//! Everything downstream is generic over [`Real`] so the same code runs in
//! f32 and f64. The crate root exports f64 aliases for the common types;
//! f64 is what the reference tolerances are calibrated for.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar used by all fields, trajectories and solvers.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Sum + Debug + Display + LowerExp + 'static
{
    /// Lossy conversion from a literal. Panics only for values no float can
    /// represent, which cannot happen for the constants used here.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("constant not representable")
    }

    /// Conversion from an index or count.
    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("count not representable")
    }

    /// Widening view for error reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
