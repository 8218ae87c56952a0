//! Experiment configuration: one JSON document describing the network, the
//! loss, SGD settings and the training data.
//!
//! ```json
//! {"seed": 7,
//!  "layers": [{"type": "dense", "in": 2, "out": 4, "activation": "tanh"},
//!             {"type": "dense", "in": 4, "out": 1, "activation": "identity"}],
//!  "loss": "least_squares",
//!  "sgd": {"eta": 0.05, "epochs": 5000, "record_loss_every": 100},
//!  "data": {"train": "xor.csv", "input_size": 2, "target_size": 1}}
//! ```
//!
//! Unknown keys are rejected. Missing `seed`, `loss` and `sgd` fields take
//! defaults; `data` is only needed by `train` and `eval`.

use std::path::PathBuf;

use fbnet_core::{Activation, LayerSpec, LossKind, Network, SgdConfig, Shape};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("layer {layer}: unknown layer type \"{name}\"")]
    UnknownLayerType { layer: usize, name: String },
    #[error("layer {layer}: unknown activation \"{name}\"")]
    UnknownActivation { layer: usize, name: String },
    #[error("unknown loss \"{0}\"")]
    UnknownLoss(String),
    #[error("layer {layer}: {message}")]
    LayerField { layer: usize, message: String },
    #[error("layer {layer}: shape chain broken, previous layer outputs {expected} but this layer expects {found}")]
    ShapeChain {
        layer: usize,
        expected: Shape,
        found: Shape,
    },
    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        source: fbnet_core::Error,
    },
    #[error("config needs at least one layer")]
    NoLayers,
    #[error("invalid sgd settings: {0}")]
    Sgd(String),
}

pub const DEFAULT_ETA: f64 = 0.1;
pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_RECORD_EVERY: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub layers: Vec<LayerConfig>,
    pub loss: LossKind,
    pub sgd: SgdSettings,
    pub data: Option<DataConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerConfig {
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

#[derive(Debug, Clone, PartialEq)]
pub struct SgdSettings {
    pub eta: f64,
    pub epochs: usize,
    pub record_loss_every: usize,
}

impl Default for SgdSettings {
    fn default() -> Self {
        SgdSettings {
            eta: DEFAULT_ETA,
            epochs: DEFAULT_EPOCHS,
            record_loss_every: DEFAULT_RECORD_EVERY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: PathBuf,
    pub input_size: usize,
    pub target_size: usize,
}

impl LayerConfig {
    pub fn to_spec(&self) -> LayerSpec {
        match *self {
            LayerConfig::Dense {
                in_dim,
                out_dim,
                activation,
            } => LayerSpec::Dense {
                in_dim,
                out_dim,
                activation,
            },
            LayerConfig::Conv2d {
                in_h,
                in_w,
                in_c,
                k_h,
                k_w,
                out_c,
                activation,
            } => LayerSpec::Conv2d {
                in_h,
                in_w,
                in_c,
                k_h,
                k_w,
                out_c,
                activation,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(LayerConfig::to_spec).collect()
    }

    /// Network with seeded initial weights.
    pub fn build_network(&self) -> fbnet_core::Result<Network> {
        Network::init(&self.specs(), self.seed)
    }

    pub fn sgd_config(&self) -> SgdConfig {
        SgdConfig {
            eta: self.sgd.eta,
            epochs: self.sgd.epochs,
            record_loss_every: self.sgd.record_loss_every,
            shuffle_seed: self.seed,
            ..SgdConfig::default()
        }
    }

    /// Canonical JSON with every field written out.
    pub fn to_json(&self) -> String {
        let raw = RawConfig {
            seed: Some(self.seed),
            layers: self.layers.iter().map(RawLayer::from).collect(),
            loss: Some(self.loss.name().to_string()),
            sgd: Some(RawSgd {
                eta: Some(self.sgd.eta),
                epochs: Some(self.sgd.epochs),
                record_loss_every: Some(self.sgd.record_loss_every),
            }),
            data: self.data.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("config serialises")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    layers: Vec<RawLayer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loss: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sgd: Option<RawSgd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<DataConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSgd {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    record_loss_every: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    #[serde(rename = "type")]
    kind: String,
    #[serde(rename = "in", default, skip_serializing_if = "Option::is_none")]
    in_dim: Option<usize>,
    #[serde(rename = "out", default, skip_serializing_if = "Option::is_none")]
    out_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_c: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k_h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k_w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_c: Option<usize>,
    activation: String,
}

impl From<&LayerConfig> for RawLayer {
    fn from(layer: &LayerConfig) -> Self {
        match *layer {
            LayerConfig::Dense {
                in_dim,
                out_dim,
                activation,
            } => RawLayer {
                kind: "dense".into(),
                in_dim: Some(in_dim),
                out_dim: Some(out_dim),
                activation: activation.name().into(),
                ..RawLayer::default()
            },
            LayerConfig::Conv2d {
                in_h,
                in_w,
                in_c,
                k_h,
                k_w,
                out_c,
                activation,
            } => RawLayer {
                kind: "conv2d".into(),
                in_h: Some(in_h),
                in_w: Some(in_w),
                in_c: Some(in_c),
                k_h: Some(k_h),
                k_w: Some(k_w),
                out_c: Some(out_c),
                activation: activation.name().into(),
                ..RawLayer::default()
            },
        }
    }
}

impl RawLayer {
    fn into_layer(self, layer: usize) -> Result<LayerConfig, ConfigError> {
        let activation = self
            .activation
            .parse::<Activation>()
            .map_err(|_| ConfigError::UnknownActivation {
                layer,
                name: self.activation.clone(),
            })?;
        let fields = [
            ("in", self.in_dim),
            ("out", self.out_dim),
            ("in_h", self.in_h),
            ("in_w", self.in_w),
            ("in_c", self.in_c),
            ("k_h", self.k_h),
            ("k_w", self.k_w),
            ("out_c", self.out_c),
        ];
        let allowed: &[&str] = match self.kind.as_str() {
            "dense" => &["in", "out"],
            "conv2d" => &["in_h", "in_w", "in_c", "k_h", "k_w", "out_c"],
            _ => {
                return Err(ConfigError::UnknownLayerType {
                    layer,
                    name: self.kind,
                })
            }
        };
        for (name, value) in fields {
            let wanted = allowed.contains(&name);
            let message = match value {
                Some(_) if !wanted => format!("field \"{name}\" does not apply to {}", self.kind),
                None if wanted => format!("missing field \"{name}\""),
                Some(0) => format!("field \"{name}\" must be positive"),
                _ => continue,
            };
            return Err(ConfigError::LayerField { layer, message });
        }
        let get = |v: Option<usize>| v.expect("presence checked");
        Ok(match self.kind.as_str() {
            "dense" => LayerConfig::Dense {
                in_dim: get(self.in_dim),
                out_dim: get(self.out_dim),
                activation,
            },
            _ => LayerConfig::Conv2d {
                in_h: get(self.in_h),
                in_w: get(self.in_w),
                in_c: get(self.in_c),
                k_h: get(self.k_h),
                k_w: get(self.k_w),
                out_c: get(self.out_c),
                activation,
            },
        })
    }
}

/// Strict parse plus shape-chain validation.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text)?;
    if raw.layers.is_empty() {
        return Err(ConfigError::NoLayers);
    }
    let layers = raw
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.into_layer(i + 1))
        .collect::<Result<Vec<_>, _>>()?;
    validate_chain(&layers)?;

    let loss = match raw.loss {
        None => LossKind::default(),
        Some(name) => name
            .parse::<LossKind>()
            .map_err(|_| ConfigError::UnknownLoss(name))?,
    };
    let sgd = raw.sgd.map_or_else(SgdSettings::default, |s| SgdSettings {
        eta: s.eta.unwrap_or(DEFAULT_ETA),
        epochs: s.epochs.unwrap_or(DEFAULT_EPOCHS),
        record_loss_every: s.record_loss_every.unwrap_or(DEFAULT_RECORD_EVERY),
    });
    let config = ExperimentConfig {
        seed: raw.seed.unwrap_or(0),
        layers,
        loss,
        sgd,
        data: raw.data,
    };
    config
        .sgd_config()
        .validate()
        .map_err(|e| ConfigError::Sgd(e.to_string()))?;
    Ok(config)
}

fn validate_chain(layers: &[LayerConfig]) -> Result<(), ConfigError> {
    let mut previous: Option<Shape> = None;
    for (i, layer) in layers.iter().enumerate() {
        let index = i + 1;
        let op = layer
            .to_spec()
            .build_op(previous.as_ref())
            .map_err(|source| ConfigError::Layer {
                layer: index,
                source,
            })?;
        let op_in = fbnet_core::BilinearMap::in_shape(&op);
        if let Some(prev) = &previous {
            if prev != op_in {
                return Err(ConfigError::ShapeChain {
                    layer: index,
                    expected: prev.clone(),
                    found: op_in.clone(),
                });
            }
        }
        previous = Some(fbnet_core::BilinearMap::out_shape(&op).clone());
    }
    Ok(())
}
