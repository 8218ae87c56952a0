//! Online SGD: one forward pass, one backward pass and an immediate update
//! per sample.

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::network::{Algorithm, BackwardOptions, Gradients, Network, TapeMode, WeightGradForm};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub eta: f64,
    pub epochs: usize,
    pub shuffle_seed: u64,
    /// Record the mean loss of every `record_loss_every`-th epoch. The last
    /// epoch is always recorded.
    pub record_loss_every: usize,
    pub algorithm: Algorithm,
    pub mode: TapeMode,
    /// Apply each layer's update inside the backward pass.
    pub fused: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            eta: 0.1,
            epochs: 100,
            shuffle_seed: 0,
            record_loss_every: 1,
            algorithm: Algorithm::Auto,
            mode: TapeMode::StorePreactivations,
            fused: false,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.eta
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.record_loss_every == 0 {
            return Err(Error::InvalidArgument(
                "record_loss_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Mean per-sample loss over one epoch, measured before each sample's update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

/// `W_k ← W_k − η G_k`, `b_k ← b_k − η g_k` for every layer.
pub fn sgd_step(net: &mut Network, grads: &Gradients, eta: f64) -> Result<()> {
    if grads.len() != net.depth() {
        return Err(Error::GradientMismatch {
            reason: format!("{} gradients for {} layers", grads.len(), net.depth()),
        });
    }
    for (k, g) in grads.layers().iter().enumerate() {
        let layer = net.layer_mut(k + 1).expect("depth checked");
        g.apply_to(layer, eta).map_err(|e| e.at_layer(k + 1))?;
    }
    Ok(())
}

/// Trains in place and returns the recorded epoch losses. Epochs count from 1.
pub fn train(
    net: &mut Network,
    dataset: &[(Tensor, Tensor)],
    loss: &dyn Loss,
    cfg: &SgdConfig,
) -> Result<Vec<EpochLoss>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Ok(Vec::new());
    }
    for (i, (x, y)) in dataset.iter().enumerate() {
        if x.shape() != net.in_shape() || y.shape() != net.out_shape() {
            return Err(Error::InvalidArgument(format!(
                "sample {i} has shapes {} -> {}, network expects {} -> {}",
                x.shape(),
                y.shape(),
                net.in_shape(),
                net.out_shape()
            )));
        }
    }

    let mut rng = SplitMix64::new(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::new();
    let options = BackwardOptions {
        weight_form: WeightGradForm::RankOne,
    };

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for &sample in &order {
            let (x, y) = &dataset[sample];
            let (out, tape) = net.forward(x, cfg.mode)?;
            let value = loss.value(y, &out)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    sample,
                    value,
                });
            }
            total += value;
            let l_grad = loss.gradient(y, &out)?;
            if cfg.fused {
                net.backward_and_update(tape, &l_grad, cfg.algorithm, cfg.eta)?;
            } else {
                let grads = net.backward(tape, &l_grad, cfg.algorithm, options)?;
                sgd_step(net, &grads, cfg.eta)?;
            }
        }
        if epoch % cfg.record_loss_every == 0 || epoch == cfg.epochs {
            history.push(EpochLoss {
                epoch,
                loss: total / dataset.len() as f64,
            });
        }
    }
    Ok(history)
}
