use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid shape {dims:?}: every axis length must be at least 1")]
    InvalidShape { dims: Vec<usize> },

    #[error("data length {len} does not match shape {shape} (size {size})")]
    DataLength { shape: Shape, len: usize, size: usize },

    #[error("{context}: shape mismatch, expected {expected} but found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: Shape,
        found: Shape,
    },

    #[error("index {index:?} is out of bounds for shape {shape}")]
    IndexOutOfBounds { shape: Shape, index: Vec<usize> },

    #[error("{context}: expected a rank-1 tensor, found shape {found}")]
    NotRank1 { context: &'static str, found: Shape },

    #[error("invalid convolution: kernel {kernel_h}x{kernel_w} does not fit input {in_h}x{in_w}")]
    KernelTooLarge {
        in_h: usize,
        in_w: usize,
        kernel_h: usize,
        kernel_w: usize,
    },

    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("network must have at least one layer")]
    EmptyNetwork,

    #[error("layer {layer} is not a dense layer with an identity bias; use the general backward pass")]
    NotDense { layer: usize },

    #[error("tape does not belong to this network: {reason}")]
    TapeMismatch { reason: String },

    #[error("gradients do not match the network: {reason}")]
    GradientMismatch { reason: String },

    #[error("non-finite loss {value} at epoch {epoch}, sample {sample}")]
    NonFiniteLoss {
        epoch: usize,
        sample: usize,
        value: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn at_layer(self, layer: usize) -> Error {
        Error::Layer {
            layer,
            source: Box::new(self),
        }
    }
}
