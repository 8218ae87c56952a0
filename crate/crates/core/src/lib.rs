//! Gradient engine for feedforward networks whose layers are bilinear maps
//! followed by a bias injection and a pointwise nonlinearity.
//!
//! Two backward passes are provided. [`Network::backward_dense`] is the
//! matrix fast path for networks made only of dense layers, and
//! [`Network::backward_general`] works for any mix of [`LayerOp`]s by
//! applying the partial adjoints of each layer's bilinear map. Both are
//! checked against independent oracles in [`gradcheck`] and
//! [`linops::brute_force_adjoint`].

pub mod activation;
pub mod error;
pub mod gradcheck;
pub mod linops;
pub mod loss;
pub mod network;
pub mod rng;
pub mod tensor;
pub mod train;

pub use activation::Activation;
pub use error::{Error, Result};
pub use linops::{BiasInjector, BilinearMap, ConvOp, DenseOp, LayerOp};
pub use loss::{LeastSquares, Loss, LossKind};
pub use network::{
    Algorithm, BackwardOptions, ForwardTape, Gradients, Layer, LayerGradient, LayerSpec, Network,
    TapeMode, WeightGrad, WeightGradForm,
};
pub use rng::SplitMix64;
pub use tensor::{Shape, Tensor};
pub use train::{sgd_step, train, EpochLoss, SgdConfig};
