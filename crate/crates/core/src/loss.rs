//! Loss functions `ℓ(y, t)` and their gradients in the prediction `t`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub trait Loss {
    /// `ℓ(y, t)` for target `y` and prediction `t`.
    fn value(&self, y: &Tensor, t: &Tensor) -> Result<f64>;

    /// Gradient of `t ↦ ℓ(y, t)`, shaped like `t`. This is what seeds the
    /// backward pass.
    fn gradient(&self, y: &Tensor, t: &Tensor) -> Result<Tensor>;
}

/// `ℓ(y, t) = ‖y − t‖²` with gradient `2 (t − y)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LeastSquares;

impl Loss for LeastSquares {
    fn value(&self, y: &Tensor, t: &Tensor) -> Result<f64> {
        let r = t.sub(y)?;
        r.inner(&r)
    }

    fn gradient(&self, y: &Tensor, t: &Tensor) -> Result<Tensor> {
        t.zip_with(y, "loss gradient", |t, y| 2.0 * (t - y))
    }
}

/// Losses selectable by name from configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LossKind {
    #[default]
    LeastSquares,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::LeastSquares => "least_squares",
        }
    }
}

impl Loss for LossKind {
    fn value(&self, y: &Tensor, t: &Tensor) -> Result<f64> {
        match self {
            LossKind::LeastSquares => LeastSquares.value(y, t),
        }
    }

    fn gradient(&self, y: &Tensor, t: &Tensor) -> Result<Tensor> {
        match self {
            LossKind::LeastSquares => LeastSquares.gradient(y, t),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "least_squares" => Ok(LossKind::LeastSquares),
            _ => Err(Error::InvalidArgument(format!("unknown loss \"{s}\""))),
        }
    }
}
