//! Independent oracles for the backward passes: central finite differences
//! of the loss and adjoint-identity checks for layer maps.
//!
//! Reports serialise to one line per record followed by a summary line,
//! with floats printed to 17 significant digits so reruns can be diffed
//! byte for byte.

use std::fmt;

use crate::error::{Error, Result};
use crate::linops::{brute_force_adjoint, BiasInjector, BilinearMap};
use crate::loss::Loss;
use crate::network::{
    Algorithm, BackwardOptions, Gradients, LayerGradient, Network, TapeMode, WeightGrad,
};
use crate::rng::SplitMix64;
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Floor of the relative-error denominator.
pub const RELATIVE_FLOOR: f64 = 1e-8;
/// Sample points with a ReLU pre-activation closer to zero than this are
/// rejected.
pub const KINK_GUARD: f64 = 1e-3;

/// `{:.16e}`: 17 significant digits, enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

impl ParamKind {
    pub fn symbol(self) -> &'static str {
        match self {
            ParamKind::Weight => "W",
            ParamKind::Bias => "b",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord {
    /// Layer number, from 1.
    pub layer: usize,
    pub param: ParamKind,
    pub index: Vec<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_err: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjointCheck {
    /// `⟨C(h, W), u⟩ = ⟨h, C†(u, W)⟩`
    Input,
    /// `⟨C(x, H), u⟩ = ⟨H, C††(x, u)⟩`
    Weight,
    /// `⟨ι(b), v⟩ = ⟨b, ι*(v)⟩`
    Bias,
    /// `C†` against the explicit basis construction.
    OracleInput,
    /// `C††` against the explicit basis construction.
    OracleWeight,
    /// `ι*` against the explicit basis construction.
    OracleBias,
}

impl AdjointCheck {
    pub fn name(self) -> &'static str {
        match self {
            AdjointCheck::Input => "input",
            AdjointCheck::Weight => "weight",
            AdjointCheck::Bias => "bias",
            AdjointCheck::OracleInput => "oracle_input",
            AdjointCheck::OracleWeight => "oracle_weight",
            AdjointCheck::OracleBias => "oracle_bias",
        }
    }
}

/// For identity checks `lhs`/`rhs` are the two inner products and
/// `rel_err = abs_err / (1 + |lhs|)`. For oracle checks they are the largest
/// entries of the fast and explicit adjoints, `abs_err` is the largest
/// entrywise difference and `rel_err = abs_err / (1 + |rhs|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointRecord {
    pub check: AdjointCheck,
    pub trial: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckRecord {
    Gradient(GradientRecord),
    Adjoint(AdjointRecord),
}

impl CheckRecord {
    pub fn abs_err(&self) -> f64 {
        match self {
            CheckRecord::Gradient(r) => r.abs_err,
            CheckRecord::Adjoint(r) => r.abs_err,
        }
    }

    pub fn rel_err(&self) -> f64 {
        match self {
            CheckRecord::Gradient(r) => r.rel_err,
            CheckRecord::Adjoint(r) => r.rel_err,
        }
    }
}

impl fmt::Display for CheckRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckRecord::Gradient(r) => {
                let index: Vec<String> = r.index.iter().map(usize::to_string).collect();
                write!(
                    f,
                    "layer={} param={} index={} analytic={} numeric={} abs_err={} rel_err={}",
                    r.layer,
                    r.param.symbol(),
                    index.join(","),
                    format_float(r.analytic),
                    format_float(r.numeric),
                    format_float(r.abs_err),
                    format_float(r.rel_err),
                )
            }
            CheckRecord::Adjoint(r) => write!(
                f,
                "check={} trial={} lhs={} rhs={} abs_err={} rel_err={}",
                r.check.name(),
                r.trial,
                format_float(r.lhs),
                format_float(r.rhs),
                format_float(r.abs_err),
                format_float(r.rel_err),
            ),
        }
    }
}

/// Like `f64::max`, but a NaN wins so it cannot hide a failure.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Records plus the summary. `pass` holds exactly when the largest relative
/// error is within `tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub records: Vec<CheckRecord>,
    pub tolerance: f64,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(records: Vec<CheckRecord>, tolerance: f64) -> Self {
        let max_abs_err = records.iter().map(CheckRecord::abs_err).fold(0.0, nan_max);
        let max_rel_err = records.iter().map(CheckRecord::rel_err).fold(0.0, nan_max);
        CheckReport {
            pass: max_rel_err <= tolerance,
            records,
            tolerance,
            max_abs_err,
            max_rel_err,
        }
    }

    /// Records whose relative error exceeds the tolerance.
    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records
            .iter()
            .filter(move |r| r.rel_err().is_nan() || r.rel_err() > self.tolerance)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "summary max_rel_err={} pass={}",
            format_float(self.max_rel_err),
            self.pass
        )
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.records {
            writeln!(f, "{r}")?;
        }
        writeln!(f, "{}", self.summary_line())
    }
}

fn loss_at(net: &Network, loss: &dyn Loss, x: &Tensor, y: &Tensor) -> Result<f64> {
    loss.value(y, &net.predict(x)?)
}

/// Central differences `(ℓ(θ + ε) − ℓ(θ − ε)) / 2ε` for every weight and bias
/// entry. Each entry is restored to its exact original value afterwards.
pub fn finite_diff_gradients(
    net: &mut Network,
    loss: &dyn Loss,
    x: &Tensor,
    y: &Tensor,
    epsilon: f64,
) -> Result<Gradients> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    x.ensure_shape(net.in_shape(), "finite difference input")?;
    y.ensure_shape(net.out_shape(), "finite difference target")?;

    let mut layers = Vec::with_capacity(net.depth());
    for k in 1..=net.depth() {
        let layer = net.layer(k).expect("k within depth");
        let weight_shape = layer.weight().shape().clone();
        let bias_shape = layer.bias().shape().clone();

        let mut dw = Tensor::zeros(weight_shape);
        for i in 0..dw.len() {
            dw.data_mut()[i] = probe(net, loss, x, y, epsilon, |n| {
                &mut n.layer_mut(k).expect("k within depth").weight_data_mut()[i]
            })?;
        }
        let mut db = Tensor::zeros(bias_shape);
        for i in 0..db.len() {
            db.data_mut()[i] = probe(net, loss, x, y, epsilon, |n| {
                &mut n.layer_mut(k).expect("k within depth").bias_data_mut()[i]
            })?;
        }
        layers.push(LayerGradient {
            weight: WeightGrad::Full(dw),
            bias: db,
        });
    }
    Ok(Gradients::new(layers))
}

fn probe<F>(
    net: &mut Network,
    loss: &dyn Loss,
    x: &Tensor,
    y: &Tensor,
    epsilon: f64,
    mut slot: F,
) -> Result<f64>
where
    F: FnMut(&mut Network) -> &mut f64,
{
    let original = *slot(net);
    *slot(net) = original + epsilon;
    let plus = loss_at(net, loss, x, y);
    *slot(net) = original - epsilon;
    let minus = loss_at(net, loss, x, y);
    *slot(net) = original;
    Ok((plus? - minus?) / (2.0 * epsilon))
}

/// Entrywise comparison in layer order, weights before bias, row-major
/// within each tensor.
pub fn compare(analytic: &Gradients, numeric: &Gradients, tolerance: f64) -> Result<CheckReport> {
    if analytic.len() != numeric.len() {
        return Err(Error::GradientMismatch {
            reason: format!("{} layers vs {}", analytic.len(), numeric.len()),
        });
    }
    let mut records = Vec::new();
    for (k, (a, n)) in analytic.layers().iter().zip(numeric.layers()).enumerate() {
        let pairs = [
            (ParamKind::Weight, a.weight.materialize(), n.weight.materialize()),
            (ParamKind::Bias, a.bias.clone(), n.bias.clone()),
        ];
        for (param, at, nt) in pairs {
            if at.shape() != nt.shape() {
                return Err(Error::GradientMismatch {
                    reason: format!(
                        "layer {} {}: shape {} vs {}",
                        k + 1,
                        param.symbol(),
                        at.shape(),
                        nt.shape()
                    ),
                });
            }
            for (offset, (&av, &nv)) in at.data().iter().zip(nt.data()).enumerate() {
                let abs_err = (av - nv).abs();
                records.push(CheckRecord::Gradient(GradientRecord {
                    layer: k + 1,
                    param,
                    index: at.shape().unravel(offset),
                    analytic: av,
                    numeric: nv,
                    abs_err,
                    rel_err: relative_error(av, nv),
                }));
            }
        }
    }
    Ok(CheckReport::new(records, tolerance))
}

/// Analytic gradients at `(x, y)` checked against finite differences.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    net: &mut Network,
    loss: &dyn Loss,
    x: &Tensor,
    y: &Tensor,
    epsilon: f64,
    tolerance: f64,
    algorithm: Algorithm,
    mode: TapeMode,
) -> Result<CheckReport> {
    let (_, analytic) =
        net.loss_and_gradients(loss, x, y, algorithm, mode, BackwardOptions::default())?;
    let numeric = finite_diff_gradients(net, loss, x, y, epsilon)?;
    compare(&analytic, &numeric, tolerance)
}

/// Draws an input and target uniform on `[−1, 1)` whose ReLU pre-activations
/// all clear [`KINK_GUARD`]. Gives up after `attempts` draws.
pub fn sample_point(
    net: &Network,
    rng: &mut SplitMix64,
    attempts: usize,
) -> Result<(Tensor, Tensor)> {
    for _ in 0..attempts {
        let x = Tensor::from_fn(net.in_shape().clone(), || rng.symmetric());
        let y = Tensor::from_fn(net.out_shape().clone(), || rng.symmetric());
        if net.relu_margin(&x)? > KINK_GUARD {
            return Ok((x, y));
        }
    }
    Err(Error::InvalidArgument(format!(
        "no sample point clear of ReLU kinks after {attempts} attempts"
    )))
}

/// `(⟨C(h, W), u⟩, ⟨h, C†(u, W)⟩)`.
pub fn input_adjoint_pair(
    op: &dyn BilinearMap,
    h: &Tensor,
    w: &Tensor,
    u: &Tensor,
) -> Result<(f64, f64)> {
    Ok((op.forward(h, w)?.inner(u)?, h.inner(&op.adjoint_input(u, w)?)?))
}

/// `(⟨C(x, H), u⟩, ⟨H, C††(x, u)⟩)`.
pub fn weight_adjoint_pair(
    op: &dyn BilinearMap,
    x: &Tensor,
    h: &Tensor,
    u: &Tensor,
) -> Result<(f64, f64)> {
    Ok((op.forward(x, h)?.inner(u)?, h.inner(&op.adjoint_weight(x, u)?)?))
}

/// `(⟨ι(b), v⟩, ⟨b, ι*(v)⟩)`.
pub fn injector_adjoint_pair(inj: &BiasInjector, b: &Tensor, v: &Tensor) -> Result<(f64, f64)> {
    Ok((inj.inject(b)?.inner(v)?, b.inner(&inj.inject_adjoint(v)?)?))
}

fn identity_record(check: AdjointCheck, trial: usize, (lhs, rhs): (f64, f64)) -> CheckRecord {
    let abs_err = (lhs - rhs).abs();
    CheckRecord::Adjoint(AdjointRecord {
        check,
        trial,
        lhs,
        rhs,
        abs_err,
        rel_err: abs_err / (1.0 + lhs.abs()),
    })
}

fn oracle_record(check: AdjointCheck, trial: usize, fast: &Tensor, slow: &Tensor) -> Result<CheckRecord> {
    let abs_err = fast.sub(slow)?.max_abs();
    Ok(CheckRecord::Adjoint(AdjointRecord {
        check,
        trial,
        lhs: fast.max_abs(),
        rhs: slow.max_abs(),
        abs_err,
        rel_err: abs_err / (1.0 + slow.max_abs()),
    }))
}

fn random(shape: &Shape, rng: &mut SplitMix64) -> Tensor {
    Tensor::from_fn(shape.clone(), || rng.symmetric())
}

/// Seeded adjoint-identity trials for a layer map and a bias injector, then
/// one comparison of each fast adjoint against [`brute_force_adjoint`].
pub fn check_adjoints(
    op: &dyn BilinearMap,
    injector: &BiasInjector,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let mut records = Vec::with_capacity(3 * trials + 3);
    for trial in 0..trials {
        let h = random(op.in_shape(), &mut rng);
        let w = random(op.weight_shape(), &mut rng);
        let u = random(op.out_shape(), &mut rng);
        records.push(identity_record(
            AdjointCheck::Input,
            trial,
            input_adjoint_pair(op, &h, &w, &u)?,
        ));

        let x = random(op.in_shape(), &mut rng);
        let dw = random(op.weight_shape(), &mut rng);
        records.push(identity_record(
            AdjointCheck::Weight,
            trial,
            weight_adjoint_pair(op, &x, &dw, &u)?,
        ));

        let b = random(injector.bias_shape(), &mut rng);
        let v = random(injector.out_shape(), &mut rng);
        records.push(identity_record(
            AdjointCheck::Bias,
            trial,
            injector_adjoint_pair(injector, &b, &v)?,
        ));
    }

    let x = random(op.in_shape(), &mut rng);
    let w = random(op.weight_shape(), &mut rng);
    let u = random(op.out_shape(), &mut rng);
    let v = random(injector.out_shape(), &mut rng);
    let slow = brute_force_adjoint(|h| op.forward(h, &w), op.in_shape(), &u)?;
    records.push(oracle_record(
        AdjointCheck::OracleInput,
        trials,
        &op.adjoint_input(&u, &w)?,
        &slow,
    )?);
    let slow = brute_force_adjoint(|h| op.forward(&x, h), op.weight_shape(), &u)?;
    records.push(oracle_record(
        AdjointCheck::OracleWeight,
        trials,
        &op.adjoint_weight(&x, &u)?,
        &slow,
    )?);
    let slow = brute_force_adjoint(|b| injector.inject(b), injector.bias_shape(), &v)?;
    records.push(oracle_record(
        AdjointCheck::OracleBias,
        trials,
        &injector.inject_adjoint(&v)?,
        &slow,
    )?);

    Ok(CheckReport::new(records, tolerance))
}
