//! The `gradcheck`, `train` and `eval` commands. Output goes to any writer so
//! tests can capture it.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fbnet_core::gradcheck::{self, format_float, CheckReport};
use fbnet_core::{Algorithm, EpochLoss, Loss, Network, SplitMix64, TapeMode};

use crate::config::ExperimentConfig;
use crate::data::{load_csv, Sample};
use crate::weights::{load_weights, save_weights};

/// Draws allowed when looking for a sample point clear of ReLU kinks.
pub const SAMPLE_ATTEMPTS: usize = 1000;
pub const ADJOINT_TRIALS: usize = 10;
pub const ADJOINT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub epsilon: f64,
    pub tolerance: f64,
    pub mode: TapeMode,
    pub algorithm: Algorithm,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            epsilon: gradcheck::DEFAULT_EPSILON,
            tolerance: gradcheck::DEFAULT_TOLERANCE,
            mode: TapeMode::StorePreactivations,
            algorithm: Algorithm::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOutcome {
    pub gradients: CheckReport,
    /// One adjoint report per layer.
    pub adjoints: Vec<CheckReport>,
}

impl GradcheckOutcome {
    pub fn adjoint_max_rel_err(&self) -> f64 {
        self.adjoints.iter().map(|r| r.max_rel_err).fold(0.0, f64::max)
    }

    pub fn adjoint_pass(&self) -> bool {
        self.adjoints.iter().all(|r| r.pass)
    }

    pub fn pass(&self) -> bool {
        self.gradients.pass && self.adjoint_pass()
    }
}

/// Builds the seeded network, checks its gradients at one random point and
/// every layer's adjoints, and writes both reports.
pub fn gradcheck(
    config: &ExperimentConfig,
    options: &RunOptions,
    out: &mut dyn Write,
) -> Result<GradcheckOutcome> {
    let mut net = config.build_network()?;
    let mut rng = SplitMix64::new(config.seed.wrapping_add(1));
    let (x, y) = gradcheck::sample_point(&net, &mut rng, SAMPLE_ATTEMPTS)?;
    let gradients = gradcheck::gradient_check(
        &mut net,
        &config.loss,
        &x,
        &y,
        options.epsilon,
        options.tolerance,
        options.algorithm,
        options.mode,
    )?;
    write!(out, "{gradients}")?;

    let mut adjoints = Vec::with_capacity(net.depth());
    for (k, layer) in net.layers().iter().enumerate() {
        let report = gradcheck::check_adjoints(
            layer.op(),
            layer.injector(),
            ADJOINT_TRIALS,
            rng.next_u64(),
            ADJOINT_TOLERANCE,
        )?;
        for r in &report.records {
            writeln!(out, "layer={} {r}", k + 1)?;
        }
        adjoints.push(report);
    }
    let outcome = GradcheckOutcome {
        gradients,
        adjoints,
    };
    writeln!(
        out,
        "adjoint_summary max_rel_err={} pass={}",
        format_float(outcome.adjoint_max_rel_err()),
        outcome.adjoint_pass()
    )?;
    Ok(outcome)
}

/// Loads the configured CSV and reshapes each row to the network's input and
/// output shapes.
pub fn load_dataset(
    config: &ExperimentConfig,
    net: &Network,
    override_path: Option<&Path>,
) -> Result<Vec<Sample>> {
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| anyhow!("config has no \"data\" section"))?;
    if data.input_size != net.in_shape().size() || data.target_size != net.out_shape().size() {
        bail!(
            "data sizes {} -> {} do not match network {} -> {}",
            data.input_size,
            data.target_size,
            net.in_shape(),
            net.out_shape()
        );
    }
    let path: PathBuf = override_path.map_or_else(|| data.train.clone(), Path::to_path_buf);
    let rows = load_csv(&path, data.input_size, data.target_size)
        .with_context(|| format!("loading {}", path.display()))?;
    rows.into_iter()
        .map(|(x, y)| {
            Ok((
                x.reshape(net.in_shape().clone())?,
                y.reshape(net.out_shape().clone())?,
            ))
        })
        .collect()
}

/// Trains from seeded initial weights, prints the loss history as
/// `epoch,<k>,loss,<v>` lines and saves the final weights.
pub fn train(
    config: &ExperimentConfig,
    options: &RunOptions,
    weights_out: &Path,
    out: &mut dyn Write,
) -> Result<(Network, Vec<EpochLoss>)> {
    let mut net = config.build_network()?;
    let dataset = load_dataset(config, &net, None)?;
    let sgd = fbnet_core::SgdConfig {
        algorithm: options.algorithm,
        mode: options.mode,
        ..config.sgd_config()
    };
    let history = fbnet_core::train(&mut net, &dataset, &config.loss, &sgd)?;
    for e in &history {
        writeln!(out, "epoch,{},loss,{}", e.epoch, format_float(e.loss))?;
    }
    save_weights(weights_out, &net)
        .with_context(|| format!("writing {}", weights_out.display()))?;
    Ok((net, history))
}

/// Loads weights into the configured architecture and prints
/// `sample,<i>,loss,<v>` per row and `mean,loss,<v>`. Returns the mean.
pub fn eval(
    config: &ExperimentConfig,
    weights: &Path,
    data_override: Option<&Path>,
    out: &mut dyn Write,
) -> Result<f64> {
    let mut net = config.build_network()?;
    load_weights(weights, &mut net).with_context(|| format!("reading {}", weights.display()))?;
    let dataset = load_dataset(config, &net, data_override)?;
    if dataset.is_empty() {
        bail!("dataset is empty");
    }
    let mut total = 0.0;
    for (i, (x, y)) in dataset.iter().enumerate() {
        let value = config.loss.value(y, &net.predict(x)?)?;
        if !value.is_finite() {
            bail!("non-finite loss {value} at sample {i}");
        }
        writeln!(out, "sample,{i},loss,{}", format_float(value))?;
        total += value;
    }
    let mean = total / dataset.len() as f64;
    writeln!(out, "mean,loss,{}", format_float(mean))?;
    Ok(mean)
}
