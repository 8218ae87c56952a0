//! Binary weights file.
//!
//! Layout, all little-endian: magic `FBNW`, version `u32` = 1, layer count
//! `u32`, then per layer the weight tensor followed by the bias tensor. A
//! tensor is its rank `u32`, its dims as `u32`s and its entries as
//! row-major `f64`s.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use fbnet_core::{Network, Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"FBNW";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("weights io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a weights file (bad magic)")]
    BadMagic,
    #[error("unsupported weights version {0}")]
    Version(u32),
    #[error("weights file has {found} layers, network has {expected}")]
    LayerCount { expected: usize, found: usize },
    #[error("layer {layer} {what}: file has shape {found}, network expects {expected}")]
    Shape {
        layer: usize,
        what: &'static str,
        expected: Shape,
        found: Shape,
    },
    #[error("malformed tensor: {0}")]
    Tensor(#[from] fbnet_core::Error),
    #[error("dimension {0} does not fit in u32")]
    TooLarge(usize),
    #[error("trailing bytes after last layer")]
    Trailing,
}

fn write_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn to_u32(v: usize) -> Result<u32, WeightsError> {
    u32::try_from(v).map_err(|_| WeightsError::TooLarge(v))
}

fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<(), WeightsError> {
    write_u32(w, to_u32(t.shape().rank())?)?;
    for &d in t.dims() {
        write_u32(w, to_u32(d)?)?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor(r: &mut impl Read) -> Result<Tensor, WeightsError> {
    let rank = read_u32(r)? as usize;
    let dims = (0..rank)
        .map(|_| read_u32(r).map(|d| d as usize))
        .collect::<std::io::Result<Vec<_>>>()?;
    let shape = Shape::new(dims)?;
    let mut data = Vec::with_capacity(shape.size());
    let mut buf = [0u8; 8];
    for _ in 0..shape.size() {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok(Tensor::new(shape, data)?)
}

pub fn write_weights(w: &mut impl Write, net: &Network) -> Result<(), WeightsError> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, to_u32(net.depth())?)?;
    for layer in net.layers() {
        write_tensor(w, layer.weight())?;
        write_tensor(w, layer.bias())?;
    }
    Ok(())
}

/// Reads every `(weight, bias)` pair without checking it against a network.
pub fn read_weights(r: &mut impl Read) -> Result<Vec<(Tensor, Tensor)>, WeightsError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(WeightsError::Version(version));
    }
    let count = read_u32(r)? as usize;
    let mut layers = Vec::new();
    for _ in 0..count {
        let w = read_tensor(r)?;
        let b = read_tensor(r)?;
        layers.push((w, b));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(WeightsError::Trailing);
    }
    Ok(layers)
}

/// Overwrites the parameters of `net`, whose architecture must match the file.
pub fn apply_weights(net: &mut Network, layers: &[(Tensor, Tensor)]) -> Result<(), WeightsError> {
    if layers.len() != net.depth() {
        return Err(WeightsError::LayerCount {
            expected: net.depth(),
            found: layers.len(),
        });
    }
    for (k, (w, b)) in layers.iter().enumerate() {
        let layer = net.layer(k + 1).expect("depth checked");
        for (what, have, want) in [
            ("weight", w.shape(), layer.weight().shape()),
            ("bias", b.shape(), layer.bias().shape()),
        ] {
            if have != want {
                return Err(WeightsError::Shape {
                    layer: k + 1,
                    what,
                    expected: want.clone(),
                    found: have.clone(),
                });
            }
        }
    }
    for (k, (w, b)) in layers.iter().enumerate() {
        let layer = net.layer_mut(k + 1).expect("depth checked");
        layer.weight_data_mut().copy_from_slice(w.data());
        layer.bias_data_mut().copy_from_slice(b.data());
    }
    Ok(())
}

pub fn save_weights(path: impl AsRef<Path>, net: &Network) -> Result<(), WeightsError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_weights(&mut w, net)?;
    w.flush()?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>, net: &mut Network) -> Result<(), WeightsError> {
    let mut r = BufReader::new(File::open(path)?);
    let layers = read_weights(&mut r)?;
    apply_weights(net, &layers)
}
