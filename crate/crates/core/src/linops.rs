//! Bilinear layer maps `C(x, W)` and bias injectors `ι(b)`, each with the
//! explicit adjoints the general backward pass needs.
//!
//! For a bilinear map `C: R^I × R^J → R^O` the two partial adjoints are
//! characterised by
//!
//! ```text
//! ⟨C(h, W), u⟩ = ⟨h, C†(u, W)⟩     for all h ∈ R^I
//! ⟨C(x, H), u⟩ = ⟨H, C††(x, u)⟩    for all H ∈ R^J
//! ```
//!
//! and [`brute_force_adjoint`] rebuilds any adjoint column by column from
//! forward applications on basis vectors, which is what the test suites
//! compare the fast formulas against.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// A map that is linear in the input `x` and, separately, in the weights `W`.
///
/// Implementations must satisfy both adjoint identities above. New kinds are
/// expected to pass the oracle-equivalence checks in
/// [`crate::gradcheck::check_adjoints`] before they are used in a network.
pub trait BilinearMap {
    fn in_shape(&self) -> &Shape;
    fn weight_shape(&self) -> &Shape;
    fn out_shape(&self) -> &Shape;

    /// `C(x, W)`.
    fn forward(&self, x: &Tensor, w: &Tensor) -> Result<Tensor>;

    /// `C†(u, W)`, the adjoint in the first argument.
    fn adjoint_input(&self, u: &Tensor, w: &Tensor) -> Result<Tensor>;

    /// `C††(x, u)`, the adjoint in the second argument.
    fn adjoint_weight(&self, x: &Tensor, u: &Tensor) -> Result<Tensor>;
}

/// Matrix-vector product `W · x`.
///
/// The input may carry any shape; it is read as a flat row-major vector, so a
/// dense layer can follow a convolution directly.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOp {
    in_shape: Shape,
    weight_shape: Shape,
    out_shape: Shape,
}

impl DenseOp {
    pub fn new(in_dim: usize, out_dim: usize) -> Result<Self> {
        DenseOp::with_input_shape(Shape::vector(in_dim)?, out_dim)
    }

    pub fn with_input_shape(in_shape: Shape, out_dim: usize) -> Result<Self> {
        Ok(DenseOp {
            weight_shape: Shape::new(vec![out_dim, in_shape.size()])?,
            out_shape: Shape::vector(out_dim)?,
            in_shape,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_shape.size()
    }

    pub fn out_dim(&self) -> usize {
        self.out_shape.size()
    }
}

impl BilinearMap for DenseOp {
    fn in_shape(&self) -> &Shape {
        &self.in_shape
    }

    fn weight_shape(&self) -> &Shape {
        &self.weight_shape
    }

    fn out_shape(&self) -> &Shape {
        &self.out_shape
    }

    fn forward(&self, x: &Tensor, w: &Tensor) -> Result<Tensor> {
        x.ensure_shape(&self.in_shape, "dense forward input")?;
        w.ensure_shape(&self.weight_shape, "dense forward weights")?;
        Tensor::new(self.out_shape.clone(), matvec(w.data(), x.data(), self.out_dim()))
    }

    fn adjoint_input(&self, u: &Tensor, w: &Tensor) -> Result<Tensor> {
        u.ensure_shape(&self.out_shape, "dense adjoint cotangent")?;
        w.ensure_shape(&self.weight_shape, "dense adjoint weights")?;
        Tensor::new(
            self.in_shape.clone(),
            matvec_transposed(w.data(), u.data(), self.in_dim()),
        )
    }

    fn adjoint_weight(&self, x: &Tensor, u: &Tensor) -> Result<Tensor> {
        x.ensure_shape(&self.in_shape, "dense weight adjoint input")?;
        u.ensure_shape(&self.out_shape, "dense weight adjoint cotangent")?;
        let mut data = Vec::with_capacity(self.weight_shape.size());
        for &ui in u.data() {
            data.extend(x.data().iter().map(|&xj| ui * xj));
        }
        Tensor::new(self.weight_shape.clone(), data)
    }
}

/// `W x` for a row-major `rows × (w.len()/rows)` matrix.
pub(crate) fn matvec(w: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|i| {
            w[i * cols..(i + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// `Wᵀ u` for a row-major `u.len() × cols` matrix.
pub(crate) fn matvec_transposed(w: &[f64], u: &[f64], cols: usize) -> Vec<f64> {
    (0..cols)
        .map(|j| u.iter().enumerate().map(|(i, &ui)| w[i * cols + j] * ui).sum())
        .collect()
}

/// Stride-1, unpadded 2-D cross-correlation summed over input channels.
///
/// Layout is channels-last: input `[H, W, c_in]`, kernel
/// `[k_h, k_w, c_in, c_out]`, output `[H - k_h + 1, W - k_w + 1, c_out]`.
///
/// ```text
/// y[p, q, o] = Σ_{u, v, c} x[p + u, q + v, c] · K[u, v, c, o]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ConvOp {
    in_shape: Shape,
    weight_shape: Shape,
    out_shape: Shape,
}

impl ConvOp {
    pub fn new(
        in_h: usize,
        in_w: usize,
        in_c: usize,
        k_h: usize,
        k_w: usize,
        out_c: usize,
    ) -> Result<Self> {
        let in_shape = Shape::new(vec![in_h, in_w, in_c])?;
        let weight_shape = Shape::new(vec![k_h, k_w, in_c, out_c])?;
        if k_h > in_h || k_w > in_w {
            return Err(Error::KernelTooLarge {
                in_h,
                in_w,
                kernel_h: k_h,
                kernel_w: k_w,
            });
        }
        let out_shape = Shape::new(vec![in_h - k_h + 1, in_w - k_w + 1, out_c])?;
        Ok(ConvOp {
            in_shape,
            weight_shape,
            out_shape,
        })
    }

    fn geometry(&self) -> ConvGeometry {
        let i = self.in_shape.dims();
        let k = self.weight_shape.dims();
        let o = self.out_shape.dims();
        ConvGeometry {
            in_w: i[1],
            in_c: i[2],
            k_h: k[0],
            k_w: k[1],
            out_h: o[0],
            out_w: o[1],
            out_c: o[2],
        }
    }
}

#[derive(Clone, Copy)]
struct ConvGeometry {
    in_w: usize,
    in_c: usize,
    k_h: usize,
    k_w: usize,
    out_h: usize,
    out_w: usize,
    out_c: usize,
}

impl ConvGeometry {
    fn x_at(&self, row: usize, col: usize, c: usize) -> usize {
        (row * self.in_w + col) * self.in_c + c
    }

    fn k_at(&self, u: usize, v: usize, c: usize, o: usize) -> usize {
        ((u * self.k_w + v) * self.in_c + c) * self.out_c + o
    }

    fn y_at(&self, p: usize, q: usize, o: usize) -> usize {
        (p * self.out_w + q) * self.out_c + o
    }

    /// Visits every `(x offset, kernel offset, y offset)` triple that
    /// contributes to the correlation.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        for p in 0..self.out_h {
            for q in 0..self.out_w {
                for u in 0..self.k_h {
                    for v in 0..self.k_w {
                        for c in 0..self.in_c {
                            let xi = self.x_at(p + u, q + v, c);
                            for o in 0..self.out_c {
                                f(xi, self.k_at(u, v, c, o), self.y_at(p, q, o));
                            }
                        }
                    }
                }
            }
        }
    }
}

impl BilinearMap for ConvOp {
    fn in_shape(&self) -> &Shape {
        &self.in_shape
    }

    fn weight_shape(&self) -> &Shape {
        &self.weight_shape
    }

    fn out_shape(&self) -> &Shape {
        &self.out_shape
    }

    fn forward(&self, x: &Tensor, w: &Tensor) -> Result<Tensor> {
        x.ensure_shape(&self.in_shape, "conv forward input")?;
        w.ensure_shape(&self.weight_shape, "conv forward kernel")?;
        let (xd, wd) = (x.data(), w.data());
        let mut y = vec![0.0; self.out_shape.size()];
        self.geometry()
            .for_each_tap(|xi, ki, yi| y[yi] += xd[xi] * wd[ki]);
        Tensor::new(self.out_shape.clone(), y)
    }

    /// Transposed convolution: every output cotangent is scattered back
    /// through the kernel taps that produced it.
    fn adjoint_input(&self, u: &Tensor, w: &Tensor) -> Result<Tensor> {
        u.ensure_shape(&self.out_shape, "conv adjoint cotangent")?;
        w.ensure_shape(&self.weight_shape, "conv adjoint kernel")?;
        let (ud, wd) = (u.data(), w.data());
        let mut dx = vec![0.0; self.in_shape.size()];
        self.geometry()
            .for_each_tap(|xi, ki, yi| dx[xi] += ud[yi] * wd[ki]);
        Tensor::new(self.in_shape.clone(), dx)
    }

    fn adjoint_weight(&self, x: &Tensor, u: &Tensor) -> Result<Tensor> {
        x.ensure_shape(&self.in_shape, "conv kernel adjoint input")?;
        u.ensure_shape(&self.out_shape, "conv kernel adjoint cotangent")?;
        let (xd, ud) = (x.data(), u.data());
        let mut dk = vec![0.0; self.weight_shape.size()];
        self.geometry()
            .for_each_tap(|xi, ki, yi| dk[ki] += xd[xi] * ud[yi]);
        Tensor::new(self.weight_shape.clone(), dk)
    }
}

/// The layer kinds a [`crate::Network`] can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp {
    Dense(DenseOp),
    Conv(ConvOp),
}

impl LayerOp {
    fn inner(&self) -> &dyn BilinearMap {
        match self {
            LayerOp::Dense(op) => op,
            LayerOp::Conv(op) => op,
        }
    }

    pub fn as_dense(&self) -> Option<&DenseOp> {
        match self {
            LayerOp::Dense(op) => Some(op),
            LayerOp::Conv(_) => None,
        }
    }

    /// The injector a layer of this kind uses by default: identity for dense
    /// layers, one bias per output channel for convolutions.
    pub fn default_injector(&self) -> BiasInjector {
        match self {
            LayerOp::Dense(op) => BiasInjector::identity(op.out_shape.clone()),
            LayerOp::Conv(op) => {
                let d = op.out_shape.dims();
                BiasInjector::channel_broadcast(d[0], d[1], d[2])
                    .expect("conv output shape is valid")
            }
        }
    }

    /// Number of inputs feeding each output entry.
    pub fn fan_in(&self) -> usize {
        match self {
            LayerOp::Dense(op) => op.in_dim(),
            LayerOp::Conv(op) => {
                let k = op.weight_shape.dims();
                k[0] * k[1] * k[2]
            }
        }
    }
}

impl From<DenseOp> for LayerOp {
    fn from(op: DenseOp) -> Self {
        LayerOp::Dense(op)
    }
}

impl From<ConvOp> for LayerOp {
    fn from(op: ConvOp) -> Self {
        LayerOp::Conv(op)
    }
}

impl BilinearMap for LayerOp {
    fn in_shape(&self) -> &Shape {
        self.inner().in_shape()
    }

    fn weight_shape(&self) -> &Shape {
        self.inner().weight_shape()
    }

    fn out_shape(&self) -> &Shape {
        self.inner().out_shape()
    }

    fn forward(&self, x: &Tensor, w: &Tensor) -> Result<Tensor> {
        self.inner().forward(x, w)
    }

    fn adjoint_input(&self, u: &Tensor, w: &Tensor) -> Result<Tensor> {
        self.inner().adjoint_input(u, w)
    }

    fn adjoint_weight(&self, x: &Tensor, u: &Tensor) -> Result<Tensor> {
        self.inner().adjoint_weight(x, u)
    }
}

/// Linear embedding of a bias vector into a layer's output space.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasInjector {
    /// One bias per output entry.
    Identity { shape: Shape },
    /// One bias per channel of a `[h, w, c]` output, repeated over every
    /// spatial position.
    ChannelBroadcast { out_shape: Shape, bias_shape: Shape },
}

impl BiasInjector {
    pub fn identity(shape: Shape) -> Self {
        BiasInjector::Identity { shape }
    }

    pub fn channel_broadcast(height: usize, width: usize, channels: usize) -> Result<Self> {
        Ok(BiasInjector::ChannelBroadcast {
            out_shape: Shape::new(vec![height, width, channels])?,
            bias_shape: Shape::vector(channels)?,
        })
    }

    pub fn bias_shape(&self) -> &Shape {
        match self {
            BiasInjector::Identity { shape } => shape,
            BiasInjector::ChannelBroadcast { bias_shape, .. } => bias_shape,
        }
    }

    pub fn out_shape(&self) -> &Shape {
        match self {
            BiasInjector::Identity { shape } => shape,
            BiasInjector::ChannelBroadcast { out_shape, .. } => out_shape,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, BiasInjector::Identity { .. })
    }

    /// The indicator tensor `β^(k)` of channel `k`: ones on every spatial
    /// position of that channel, zeros elsewhere. `inject(b) = Σ_k b_k β^(k)`.
    pub fn channel_indicator(&self, channel: usize) -> Result<Tensor> {
        let out = self.out_shape();
        let b = Tensor::basis(self.bias_shape().clone(), &[channel])?;
        match self {
            BiasInjector::Identity { .. } => Err(Error::InvalidArgument(format!(
                "channel indicators are defined for channel broadcasts, not identity on {out}"
            ))),
            BiasInjector::ChannelBroadcast { .. } => self.inject(&b),
        }
    }

    pub fn inject(&self, b: &Tensor) -> Result<Tensor> {
        b.ensure_shape(self.bias_shape(), "bias injection")?;
        match self {
            BiasInjector::Identity { .. } => Ok(b.clone()),
            BiasInjector::ChannelBroadcast { out_shape, .. } => {
                let c = b.len();
                let data = (0..out_shape.size()).map(|i| b.data()[i % c]).collect();
                Tensor::new(out_shape.clone(), data)
            }
        }
    }

    /// `ι*`: identity, or a per-channel sum over spatial positions.
    pub fn inject_adjoint(&self, h: &Tensor) -> Result<Tensor> {
        h.ensure_shape(self.out_shape(), "bias injection adjoint")?;
        match self {
            BiasInjector::Identity { .. } => Ok(h.clone()),
            BiasInjector::ChannelBroadcast { bias_shape, .. } => {
                let c = bias_shape.size();
                let mut sums = vec![0.0; c];
                for (i, &v) in h.data().iter().enumerate() {
                    sums[i % c] += v;
                }
                Tensor::new(bias_shape.clone(), sums)
            }
        }
    }
}

/// Adjoint of a linear map by explicit construction over the standard basis
/// of its domain: `T* y = Σ_i ⟨y, T e_i⟩ e_i`.
///
/// Costs one application of `map` per domain entry. Intended for tests and
/// checks only; `map` must be linear.
pub fn brute_force_adjoint<F>(map: F, domain: &Shape, y: &Tensor) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let mut out = Tensor::zeros(domain.clone());
    for i in 0..domain.size() {
        let column = map(&Tensor::basis_flat(domain.clone(), i))?;
        out.data_mut()[i] = y.inner(&column)?;
    }
    Ok(out)
}

/// `f(A+H1, B+H2) − f(A, B) − (A·H2 + H1·B)` for `f(A, B) = A·B`.
///
/// The linear part of the expansion cancels, leaving the second order term
/// `H1·H2`. The result equals it exactly whenever every intermediate is
/// representable, e.g. for small dyadic entries.
pub fn matrix_product_residual(a: &Tensor, b: &Tensor, h1: &Tensor, h2: &Tensor) -> Result<Tensor> {
    let perturbed = a.add(h1)?.matmul(&b.add(h2)?)?;
    let linear = a.matmul(h2)?.add(&h1.matmul(b)?)?;
    perturbed.sub(&a.matmul(b)?)?.sub(&linear)
}
