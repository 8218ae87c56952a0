//! Real tensors over rectangular index sets, stored row-major.
//!
//! A [`Tensor`] is an element of the Hilbert space `R^I` where `I` is the
//! product of the axis ranges in its [`Shape`]. The slowest axis comes first
//! in the flat layout.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.contains(&0) {
            return Err(Error::InvalidShape { dims });
        }
        Ok(Shape(dims))
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn vector(len: usize) -> Result<Self> {
        Shape::new(vec![len])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn size(&self) -> usize {
        self.0.iter().product()
    }

    /// Flat row-major offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.rank() || index.iter().zip(&self.0).any(|(&i, &d)| i >= d) {
            return Err(Error::IndexOutOfBounds {
                shape: self.clone(),
                index: index.to_vec(),
            });
        }
        Ok(index
            .iter()
            .zip(&self.0)
            .fold(0, |acc, (&i, &d)| acc * d + i))
    }

    /// Inverse of [`Shape::offset`]. `offset` must be below `size()`.
    pub fn unravel(&self, mut offset: usize) -> Vec<usize> {
        let mut index = vec![0; self.rank()];
        for (slot, &d) in index.iter_mut().zip(&self.0).rev() {
            *slot = offset % d;
            offset /= d;
        }
        index
    }

    /// All multi-indices in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.size()).map(move |o| self.unravel(o))
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.size() {
            return Err(Error::DataLength {
                size: shape.size(),
                len: data.len(),
                shape,
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_dims(dims: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape::new(dims)?, data)
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape::vector(data.len())?, data)
    }

    /// Row-major matrix from nested rows. Rows must have equal, nonzero length.
    pub fn matrix(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged matrix rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::from_dims(vec![rows.len(), cols], data)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        let data = vec![value; shape.size()];
        Tensor { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor::filled(shape, 0.0)
    }

    pub fn ones(shape: Shape) -> Self {
        Tensor::filled(shape, 1.0)
    }

    /// Standard basis element `e_i`: one at `index`, zero elsewhere.
    pub fn basis(shape: Shape, index: &[usize]) -> Result<Self> {
        let offset = shape.offset(index)?;
        Ok(Tensor::basis_flat(shape, offset))
    }

    pub(crate) fn basis_flat(shape: Shape, offset: usize) -> Self {
        let mut t = Tensor::zeros(shape);
        t.data[offset] = 1.0;
        t
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut() -> f64) -> Self {
        let data = (0..shape.size()).map(|_| f()).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.shape.offset(index)?])
    }

    /// Same data viewed under a different shape of equal size.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub(crate) fn ensure_shape(&self, expected: &Shape, context: &'static str) -> Result<()> {
        if &self.shape != expected {
            return Err(Error::ShapeMismatch {
                context,
                expected: expected.clone(),
                found: self.shape.clone(),
            });
        }
        Ok(())
    }

    fn ensure_same(&self, other: &Tensor, context: &'static str) -> Result<()> {
        other.ensure_shape(&self.shape, context)
    }

    /// `⟨a, b⟩ = Σ_i a_i b_i`.
    pub fn inner(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same(other, "inner product")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "hadamard product", |a, b| a * b)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "addition", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "subtraction", |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &Tensor,
        context: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        self.ensure_same(other, context)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `u vᵀ` for rank-1 `u` (length m) and `v` (length n), shape `[m, n]`.
    pub fn outer(u: &Tensor, v: &Tensor) -> Result<Tensor> {
        for t in [u, v] {
            if t.shape.rank() != 1 {
                return Err(Error::NotRank1 {
                    context: "outer product",
                    found: t.shape.clone(),
                });
            }
        }
        let mut data = Vec::with_capacity(u.len() * v.len());
        for &ui in &u.data {
            data.extend(v.data.iter().map(|&vj| ui * vj));
        }
        Tensor::from_dims(vec![u.len(), v.len()], data)
    }

    /// `self ← self + coefficient · source`.
    pub fn axpy_in_place(&mut self, coefficient: f64, source: &Tensor) -> Result<()> {
        self.ensure_same(source, "axpy")?;
        for (t, &s) in self.data.iter_mut().zip(&source.data) {
            *t += coefficient * s;
        }
        Ok(())
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.matrix_dims("matmul")?;
        let (k2, n) = other.matrix_dims("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                context: "matmul inner dimension",
                expected: Shape(vec![k, n]),
                found: other.shape.clone(),
            });
        }
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] = (0..k)
                    .map(|l| self.data[i * k + l] * other.data[l * n + j])
                    .sum();
            }
        }
        Tensor::from_dims(vec![m, n], data)
    }

    fn matrix_dims(&self, context: &'static str) -> Result<(usize, usize)> {
        match *self.shape.dims() {
            [m, n] => Ok((m, n)),
            _ => Err(Error::InvalidArgument(format!(
                "{context}: expected a matrix, found shape {}",
                self.shape
            ))),
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
