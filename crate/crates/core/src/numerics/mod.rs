//! Dense linear algebra, activations, losses, seeded randomness and the
//! finite-difference gradient oracle.
//!
//! Every reduction in this module accumulates left to right over its input,
//! so results are bitwise reproducible for a given precision.

mod fd;
mod linalg;
mod rng;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

pub use fd::finite_difference_grad;
pub use linalg::{
    add_assign, add_outer, argmax, cross_entropy, cross_entropy_logits, dot, matvec, matvec_into, matvec_t_acc, relu,
    relu_backward, softmax, softmax_backward, Matrix, ReluOutput,
};
pub use rng::Rng;

/// Floating-point scalar used throughout the model.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    const PRECISION: Precision;

    fn from_f64_lossy(x: f64) -> Self;
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Standard;

    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Extended;

    fn from_f64_lossy(x: f64) -> Self {
        x
    }
}

/// Arithmetic precision of a run. Gradient checks always use `Extended`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Precision {
    /// 32-bit floats.
    #[default]
    Standard,
    /// 64-bit floats.
    Extended,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Standard => "standard",
            Precision::Extended => "extended",
        }
    }
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" | "f32" => Ok(Precision::Standard),
            "extended" | "f64" => Ok(Precision::Extended),
            other => Err(Error::invalid(format!("unknown precision `{other}`"))),
        }
    }
}

/// Fails if any entry of `values` is NaN or infinite.
pub fn ensure_finite<T: Real>(values: &[T], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFinite(format!("{what}[{i}] = {}", values[i]))),
    }
}
