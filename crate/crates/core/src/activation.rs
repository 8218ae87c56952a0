//! Pointwise nonlinearities and their derivatives.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Identity,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// `σ'(x)`. The ReLU derivative at exactly zero is zero.
    pub fn eval_derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            // Routed through the output so both tape modes agree bit-for-bit.
            Activation::Sigmoid | Activation::Tanh => self.derivative_at_output(self.eval(x)),
        }
    }

    /// `σ'(a)` recovered from `f = σ(a)` alone. Only meaningful for `f` in
    /// the range of the activation.
    pub fn derivative_at_output(self, f: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if f > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => f * (1.0 - f),
            Activation::Tanh => 1.0 - f * f,
        }
    }

    pub fn apply(self, t: &Tensor) -> Tensor {
        match self {
            Activation::Identity => t.clone(),
            _ => t.map(|x| self.eval(x)),
        }
    }

    pub fn derivative(self, t: &Tensor) -> Tensor {
        t.map(|x| self.eval_derivative(x))
    }

    pub fn derivative_from_output(self, f: &Tensor) -> Tensor {
        f.map(|y| self.derivative_at_output(y))
    }

    /// Whether the derivative has a kink that finite differences must avoid.
    pub fn has_kink(self) -> bool {
        matches!(self, Activation::Relu)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown activation \"{s}\"")))
    }
}
