//! Scalar abstraction for the numeric kernels.
//!
//! Entropy, NDCG and the simplex search only need floating-point arithmetic,
//! so they are written against this trait and instantiated with `f32` or
//! `f64` (the crate-level [`crate::Real`] alias picks `f64`).

use num_traits::{Float, FromPrimitive};

pub trait Scalar:
    Float + FromPrimitive + std::fmt::Debug + std::fmt::Display + std::iter::Sum + Send + Sync + 'static
{
    /// Lossy conversion from `usize`, used for counts and list lengths.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + std::fmt::Debug
        + std::fmt::Display
        + std::iter::Sum
        + Send
        + Sync
        + 'static
{
}
