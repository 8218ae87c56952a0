//! Layered networks `F_k = σ_k(C_k(F_{k−1}, W_k) + ι_k(b_k))`, the forward
//! pass that records a tape, and the two backward passes.
//!
//! Layers are numbered from 1 in errors and reports; `F_0` is the input.
//!
//! The dense backward pass propagates the error vector
//! `g_k = σ_k'(a_k) ⊙ (W_{k+1}ᵀ g_{k+1})` and forms `G_k = g_k F_{k−1}ᵀ`.
//! The general pass carries a cotangent `T` through the partial adjoints of
//! each layer's bilinear map:
//!
//! ```text
//! g_k = ι_k*(T),   G_k = C_k††(F_{k−1}, T),   T ← C_k†(T, W_k) ⊙ σ_{k−1}'(a_{k−1})
//! ```
//!
//! On dense networks the two coincide.

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::linops::{BiasInjector, BilinearMap, ConvOp, DenseOp, LayerOp};
use crate::loss::Loss;
use crate::rng::SplitMix64;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    op: LayerOp,
    weight: Tensor,
    injector: BiasInjector,
    bias: Tensor,
    activation: Activation,
}

impl Layer {
    pub fn new(
        op: impl Into<LayerOp>,
        weight: Tensor,
        injector: BiasInjector,
        bias: Tensor,
        activation: Activation,
    ) -> Result<Self> {
        let op = op.into();
        weight.ensure_shape(op.weight_shape(), "layer weights")?;
        bias.ensure_shape(injector.bias_shape(), "layer bias")?;
        if injector.out_shape() != op.out_shape() {
            return Err(Error::ShapeMismatch {
                context: "bias injector output",
                expected: op.out_shape().clone(),
                found: injector.out_shape().clone(),
            });
        }
        Ok(Layer {
            op,
            weight,
            injector,
            bias,
            activation,
        })
    }

    /// Dense layer `σ(W x + b)` from a `[out, in]` weight matrix.
    pub fn dense(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        let (out_dim, in_dim) = match *weight.dims() {
            [o, i] => (o, i),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "dense weights must be a matrix, found shape {}",
                    weight.shape()
                )))
            }
        };
        let op = DenseOp::new(in_dim, out_dim)?;
        let injector = BiasInjector::identity(op.out_shape().clone());
        Layer::new(op, weight, injector, bias, activation)
    }

    /// Convolution layer with one bias per output channel.
    pub fn conv(op: ConvOp, kernel: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        let op = LayerOp::Conv(op);
        let injector = op.default_injector();
        Layer::new(op, kernel, injector, bias, activation)
    }

    pub fn op(&self) -> &LayerOp {
        &self.op
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn injector(&self) -> &BiasInjector {
        &self.injector
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_shape(&self) -> &Shape {
        self.op.in_shape()
    }

    pub fn out_shape(&self) -> &Shape {
        self.op.out_shape()
    }

    /// Weight entries, row-major. The shape is fixed.
    pub fn weight_data_mut(&mut self) -> &mut [f64] {
        self.weight.data_mut()
    }

    pub fn bias_data_mut(&mut self) -> &mut [f64] {
        self.bias.data_mut()
    }

    /// Dense layer with an identity injector, the precondition of the dense
    /// backward pass.
    pub fn is_dense(&self) -> bool {
        matches!(self.op, LayerOp::Dense(_)) && self.injector.is_identity()
    }

    /// `a = C(x, W) + ι(b)`.
    pub fn preactivation(&self, x: &Tensor) -> Result<Tensor> {
        self.op
            .forward(x, &self.weight)?
            .add(&self.injector.inject(&self.bias)?)
    }
}

/// Layer description used to build randomly initialised networks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    },
    Conv2d {
        in_h: usize,
        in_w: usize,
        in_c: usize,
        k_h: usize,
        k_w: usize,
        out_c: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv2d { activation, .. } => activation,
        }
    }

    /// The bilinear map this spec describes. A dense layer takes over the
    /// shape of `previous` when the flat sizes agree, so it can follow a
    /// convolution.
    pub fn build_op(&self, previous: Option<&Shape>) -> Result<LayerOp> {
        match *self {
            LayerSpec::Dense {
                in_dim, out_dim, ..
            } => {
                let in_shape = match previous {
                    Some(prev) if prev.size() == in_dim => prev.clone(),
                    _ => Shape::vector(in_dim)?,
                };
                Ok(DenseOp::with_input_shape(in_shape, out_dim)?.into())
            }
            LayerSpec::Conv2d {
                in_h,
                in_w,
                in_c,
                k_h,
                k_w,
                out_c,
                ..
            } => Ok(ConvOp::new(in_h, in_w, in_c, k_h, k_w, out_c)?.into()),
        }
    }
}

/// How the forward pass records per-layer values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TapeMode {
    /// Keep pre-activations `a_k`; outputs are recomputed during backward.
    #[default]
    StorePreactivations,
    /// Keep outputs `F_k`; derivatives are recovered from them.
    StoreOutputs,
}

/// Values recorded by [`Network::forward`]. Entry 0 is the input, entry `k`
/// belongs to layer `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    mode: TapeMode,
    values: Vec<Tensor>,
}

impl ForwardTape {
    pub fn mode(&self) -> TapeMode {
        self.mode
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn input(&self) -> &Tensor {
        &self.values[0]
    }
}

/// Which backward pass to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    Dense,
    General,
    /// Dense when every layer qualifies, general otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightGradForm {
    #[default]
    Full,
    /// Keep dense weight gradients as their two outer-product factors.
    RankOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BackwardOptions {
    pub weight_form: WeightGradForm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightGrad {
    Full(Tensor),
    /// `left · rightᵀ`; `right` is the flattened layer input.
    RankOne { left: Tensor, right: Tensor },
}

impl WeightGrad {
    pub fn materialize(&self) -> Tensor {
        match self {
            WeightGrad::Full(t) => t.clone(),
            WeightGrad::RankOne { left, right } => {
                Tensor::outer(left, right).expect("rank-one factors are vectors")
            }
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            WeightGrad::Full(t) => t.shape().clone(),
            WeightGrad::RankOne { left, right } => {
                Shape::new(vec![left.len(), right.len()]).expect("nonempty factors")
            }
        }
    }

    /// Entry at a flat row-major offset.
    pub fn at(&self, offset: usize) -> f64 {
        match self {
            WeightGrad::Full(t) => t.data()[offset],
            WeightGrad::RankOne { left, right } => {
                let n = right.len();
                left.data()[offset / n] * right.data()[offset % n]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weight: WeightGrad,
    pub bias: Tensor,
}

impl LayerGradient {
    /// `W ← W − η G`, `b ← b − η g`. Rank-one gradients are applied entry by
    /// entry without forming the matrix.
    pub(crate) fn apply_to(&self, layer: &mut Layer, eta: f64) -> Result<()> {
        let ws = self.weight.shape();
        if &ws != layer.weight.shape() {
            return Err(Error::ShapeMismatch {
                context: "weight gradient",
                expected: layer.weight.shape().clone(),
                found: ws,
            });
        }
        let step = -eta;
        match &self.weight {
            WeightGrad::Full(g) => layer.weight.axpy_in_place(step, g)?,
            WeightGrad::RankOne { left, right } => {
                let n = right.len();
                let w = layer.weight.data_mut();
                for (i, &l) in left.data().iter().enumerate() {
                    for (j, &r) in right.data().iter().enumerate() {
                        w[i * n + j] += step * (l * r);
                    }
                }
            }
        }
        layer.bias.axpy_in_place(step, &self.bias)
    }
}

/// Per-layer gradients, layer 1 first.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn new(layers: Vec<LayerGradient>) -> Self {
        Gradients { layers }
    }

    pub fn layers(&self) -> &[LayerGradient] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Gradient of layer `k`, counting from 1.
    pub fn layer(&self, k: usize) -> Option<&LayerGradient> {
        k.checked_sub(1).and_then(|i| self.layers.get(i))
    }

    /// Every weight gradient in full matrix form.
    pub fn materialize(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|g| LayerGradient {
                    weight: WeightGrad::Full(g.weight.materialize()),
                    bias: g.bias.clone(),
                })
                .collect(),
        }
    }

    /// Largest entrywise relative difference, with denominator
    /// `max(|a|, |b|, floor)`. NaN if any entry compares as NaN.
    pub fn max_relative_difference(&self, other: &Gradients, floor: f64) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::GradientMismatch {
                reason: format!("{} layers vs {}", self.len(), other.len()),
            });
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.materialize().layers.iter().zip(&other.materialize().layers) {
            let WeightGrad::Full(wa) = &a.weight else { unreachable!() };
            let WeightGrad::Full(wb) = &b.weight else { unreachable!() };
            for (x, y) in [(wa, wb), (&a.bias, &b.bias)] {
                if x.shape() != y.shape() {
                    return Err(Error::GradientMismatch {
                        reason: format!("shape {} vs {}", x.shape(), y.shape()),
                    });
                }
                for (&p, &q) in x.data().iter().zip(y.data()) {
                    let rel = (p - q).abs() / p.abs().max(q.abs()).max(floor);
                    if rel.is_nan() {
                        return Ok(f64::NAN);
                    }
                    worst = worst.max(rel);
                }
            }
        }
        Ok(worst)
    }
}

/// One layer's contribution during backward, plus the cotangent for the layer
/// below (absent at layer 1).
struct StepOutput {
    gradient: LayerGradient,
    next: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        for k in 1..layers.len() {
            let (prev, next) = (layers[k - 1].out_shape(), layers[k].in_shape());
            if prev != next {
                return Err(Error::ShapeMismatch {
                    context: "layer input",
                    expected: prev.clone(),
                    found: next.clone(),
                }
                .at_layer(k + 1));
            }
        }
        Ok(Network { layers })
    }

    /// Builds a network from specs with seeded initial weights: uniform on
    /// `[−1/√fan_in, 1/√fan_in)` where fan_in counts the inputs feeding one
    /// output entry, biases zero. Each layer draws from its own SplitMix64
    /// stream forked from `seed`.
    pub fn init(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut master = SplitMix64::new(seed);
        let mut layers: Vec<Layer> = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let mut rng = master.fork();
            let layer = init_layer(spec, layers.last().map(Layer::out_shape), &mut rng)
                .map_err(|e| e.at_layer(i + 1))?;
            layers.push(layer);
        }
        Network::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Layer `k`, counting from 1.
    pub fn layer(&self, k: usize) -> Option<&Layer> {
        k.checked_sub(1).and_then(|i| self.layers.get(i))
    }

    pub fn layer_mut(&mut self, k: usize) -> Option<&mut Layer> {
        k.checked_sub(1).and_then(move |i| self.layers.get_mut(i))
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn in_shape(&self) -> &Shape {
        self.layers[0].in_shape()
    }

    pub fn out_shape(&self) -> &Shape {
        self.layers[self.layers.len() - 1].out_shape()
    }

    pub fn is_dense(&self) -> bool {
        self.layers.iter().all(Layer::is_dense)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Runs the layer recursion, returning `F_n` and the tape.
    pub fn forward(&self, x: &Tensor, mode: TapeMode) -> Result<(Tensor, ForwardTape)> {
        x.ensure_shape(self.in_shape(), "network input")
            .map_err(|e| e.at_layer(1))?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.clone());
        let mut current = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let a = layer.preactivation(&current).map_err(|e| e.at_layer(i + 1))?;
            current = layer.activation.apply(&a);
            values.push(match mode {
                TapeMode::StorePreactivations => a,
                TapeMode::StoreOutputs => current.clone(),
            });
        }
        Ok((current, ForwardTape { mode, values }))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x, TapeMode::StoreOutputs)?.0)
    }

    /// Smallest `|a_i|` over the pre-activations of ReLU layers, or infinity
    /// when there are none.
    pub fn relu_margin(&self, x: &Tensor) -> Result<f64> {
        let (_, tape) = self.forward(x, TapeMode::StorePreactivations)?;
        Ok(self
            .layers
            .iter()
            .zip(&tape.values[1..])
            .filter(|(l, _)| l.activation.has_kink())
            .flat_map(|(_, a)| a.data().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min))
    }

    /// Dense fast path. Every layer must be a dense layer with identity bias.
    pub fn backward_dense(
        &self,
        tape: ForwardTape,
        l_grad: &Tensor,
        options: BackwardOptions,
    ) -> Result<Gradients> {
        self.require_dense()?;
        self.collect(tape, l_grad, |layer, t, input, d| {
            dense_step(layer, t, input, d, options.weight_form)
        })
    }

    /// General adjoint path for any layer mix.
    pub fn backward_general(&self, tape: ForwardTape, l_grad: &Tensor) -> Result<Gradients> {
        self.collect(tape, l_grad, general_step)
    }

    pub fn backward(
        &self,
        tape: ForwardTape,
        l_grad: &Tensor,
        algorithm: Algorithm,
        options: BackwardOptions,
    ) -> Result<Gradients> {
        if self.resolve(algorithm) == Algorithm::Dense {
            self.backward_dense(tape, l_grad, options)
        } else {
            self.backward_general(tape, l_grad)
        }
    }

    /// Backward pass that applies `W_k ← W_k − η G_k`, `b_k ← b_k − η g_k`
    /// as soon as layer `k` is done, so no gradient outlives its layer.
    /// Gives the same weights as [`Network::backward`] followed by
    /// [`crate::sgd_step`].
    pub fn backward_and_update(
        &mut self,
        tape: ForwardTape,
        l_grad: &Tensor,
        algorithm: Algorithm,
        eta: f64,
    ) -> Result<()> {
        let dense = self.resolve(algorithm) == Algorithm::Dense;
        if dense {
            self.require_dense()?;
        }
        let mut walk = self.begin_backward(tape, l_grad)?;
        while let Some((k, t, input, d)) = walk.next_layer(self) {
            let layer = &self.layers[k - 1];
            let step = if dense {
                dense_step(layer, t, &input, d.as_ref(), WeightGradForm::RankOne)
            } else {
                general_step(layer, t, &input, d.as_ref())
            }
            .map_err(|e| e.at_layer(k))?;
            step.gradient
                .apply_to(&mut self.layers[k - 1], eta)
                .map_err(|e| e.at_layer(k))?;
            walk.cotangent = step.next;
        }
        Ok(())
    }

    /// Loss at `(x, y)` and its gradients in one call.
    pub fn loss_and_gradients(
        &self,
        loss: &dyn Loss,
        x: &Tensor,
        y: &Tensor,
        algorithm: Algorithm,
        mode: TapeMode,
        options: BackwardOptions,
    ) -> Result<(f64, Gradients)> {
        let (out, tape) = self.forward(x, mode)?;
        let value = loss.value(y, &out)?;
        let l_grad = loss.gradient(y, &out)?;
        Ok((value, self.backward(tape, &l_grad, algorithm, options)?))
    }

    fn resolve(&self, algorithm: Algorithm) -> Algorithm {
        match algorithm {
            Algorithm::Auto if self.is_dense() => Algorithm::Dense,
            Algorithm::Auto => Algorithm::General,
            other => other,
        }
    }

    fn require_dense(&self) -> Result<()> {
        match self.layers.iter().position(|l| !l.is_dense()) {
            Some(i) => Err(Error::NotDense { layer: i + 1 }),
            None => Ok(()),
        }
    }

    fn collect<F>(&self, tape: ForwardTape, l_grad: &Tensor, mut step: F) -> Result<Gradients>
    where
        F: FnMut(&Layer, Tensor, &Tensor, Option<&Tensor>) -> Result<StepOutput>,
    {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut walk = self.begin_backward(tape, l_grad)?;
        while let Some((k, t, input, d)) = walk.next_layer(self) {
            let out = step(&self.layers[k - 1], t, &input, d.as_ref()).map_err(|e| e.at_layer(k))?;
            grads.push(out.gradient);
            walk.cotangent = out.next;
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    fn begin_backward(&self, tape: ForwardTape, l_grad: &Tensor) -> Result<BackwardWalk> {
        self.validate_tape(&tape)?;
        l_grad
            .ensure_shape(self.out_shape(), "loss gradient")
            .map_err(|e| e.at_layer(self.depth()))?;
        let mode = tape.mode;
        let mut values = tape.values;
        let top = values.pop().expect("validated tape is nonempty");
        let seed = self.derivative_at(self.depth(), &top, mode).hadamard(l_grad)?;
        Ok(BackwardWalk {
            mode,
            values,
            cotangent: Some(seed),
        })
    }

    fn validate_tape(&self, tape: &ForwardTape) -> Result<()> {
        if tape.values.len() != self.layers.len() + 1 {
            return Err(Error::TapeMismatch {
                reason: format!(
                    "{} recorded values for a {}-layer network",
                    tape.values.len(),
                    self.layers.len()
                ),
            });
        }
        let expected = std::iter::once(self.in_shape()).chain(self.layers.iter().map(Layer::out_shape));
        for (j, (value, shape)) in tape.values.iter().zip(expected).enumerate() {
            if value.shape() != shape {
                return Err(Error::TapeMismatch {
                    reason: format!("value {j} has shape {}, expected {shape}", value.shape()),
                });
            }
        }
        Ok(())
    }

    /// Activation producing tape value `j`; the input uses the identity.
    fn activation_of(&self, j: usize) -> Activation {
        if j == 0 {
            Activation::Identity
        } else {
            self.layers[j - 1].activation
        }
    }

    /// `F_j` from tape value `j`.
    fn output_at(&self, j: usize, value: &Tensor, mode: TapeMode) -> Tensor {
        match mode {
            TapeMode::StorePreactivations => self.activation_of(j).apply(value),
            TapeMode::StoreOutputs => value.clone(),
        }
    }

    /// `σ_j'(a_j)` from tape value `j`.
    fn derivative_at(&self, j: usize, value: &Tensor, mode: TapeMode) -> Tensor {
        let act = self.activation_of(j);
        match mode {
            TapeMode::StorePreactivations => act.derivative(value),
            TapeMode::StoreOutputs => act.derivative_from_output(value),
        }
    }
}

fn init_layer(spec: &LayerSpec, previous: Option<&Shape>, rng: &mut SplitMix64) -> Result<Layer> {
    let op = spec.build_op(previous)?;
    let r = 1.0 / (op.fan_in() as f64).sqrt();
    let weight = Tensor::from_fn(op.weight_shape().clone(), || rng.uniform(-r, r));
    let injector = op.default_injector();
    let bias = Tensor::zeros(injector.bias_shape().clone());
    Layer::new(op, weight, injector, bias, spec.activation())
}

/// Walks the tape from the top, releasing each value once its layer is done.
struct BackwardWalk {
    mode: TapeMode,
    values: Vec<Tensor>,
    cotangent: Option<Tensor>,
}

impl BackwardWalk {
    /// Next layer index `k` with its incoming cotangent, its input `F_{k−1}`
    /// and, for `k > 1`, the derivative `σ_{k−1}'(a_{k−1})`.
    fn next_layer(&mut self, net: &Network) -> Option<(usize, Tensor, Tensor, Option<Tensor>)> {
        let t = self.cotangent.take()?;
        let below = self.values.pop()?;
        let j = self.values.len();
        let input = net.output_at(j, &below, self.mode);
        let d = (j > 0).then(|| net.derivative_at(j, &below, self.mode));
        Some((j + 1, t, input, d))
    }
}

/// One step of the dense recursion: `g_k = t`, `G_k = g_k F_{k−1}ᵀ`, and
/// `g_{k−1} = d ⊙ (W_kᵀ g_k)`.
fn dense_step(
    layer: &Layer,
    g: Tensor,
    input: &Tensor,
    d: Option<&Tensor>,
    form: WeightGradForm,
) -> Result<StepOutput> {
    let flat_input = input.clone().reshape(Shape::vector(input.len())?)?;
    let next = match d {
        Some(d) => {
            let cols = input.len();
            let w = layer.weight.data();
            let mut back = Vec::with_capacity(cols);
            for j in 0..cols {
                back.push(g.data().iter().enumerate().map(|(i, &gi)| w[i * cols + j] * gi).sum());
            }
            Some(Tensor::new(d.shape().clone(), back)?.hadamard(d)?)
        }
        None => None,
    };
    let weight = match form {
        WeightGradForm::Full => WeightGrad::Full(Tensor::outer(&g, &flat_input)?),
        WeightGradForm::RankOne => WeightGrad::RankOne {
            left: g.clone(),
            right: flat_input,
        },
    };
    Ok(StepOutput {
        gradient: LayerGradient { weight, bias: g },
        next,
    })
}

fn general_step(layer: &Layer, t: Tensor, input: &Tensor, d: Option<&Tensor>) -> Result<StepOutput> {
    let bias = layer.injector.inject_adjoint(&t)?;
    let weight = WeightGrad::Full(layer.op.adjoint_weight(input, &t)?);
    let next = match d {
        Some(d) => Some(layer.op.adjoint_input(&t, &layer.weight)?.hadamard(d)?),
        None => None,
    };
    Ok(StepOutput {
        gradient: LayerGradient { weight, bias },
        next,
    })
}
