//! Graph network over the scheduled users.
//!
//! Each scheduled user is a vertex. One small dense network, shared across
//! vertices, maps `(w_min_norm_k, surplus_norm)` to a scalar feature; the
//! features are concatenated, pushed through a softmax, and the readout
//! `w = y * surplus + w_min` turns the shares into a feasible allocation.
//! The output width follows the number of scheduled users.
//!
//! Backpropagation is written out by hand for both training losses.

mod checkpoint;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use train::{
    moving_average, train, EpochRecord, StepRecord, TrainConfig, TrainMode, TrainingHistory, TrainingSample,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complexity::OpCount;
use crate::error::{Error, Result};
use crate::model::{rate_gap_deriv_fast, secrecy_rate_fast, ChannelSample, SystemParams, UserChannel};
use crate::scheduling::Schedule;

pub const LAYER_WIDTHS: [usize; 4] = [2, 16, 8, 1];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation's output `a`.
    fn slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Parameters of the shared per-vertex network. `weights[l]` is row-major
/// `widths[l+1] x widths[l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnParams {
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Same layout as [`FnnParams`], holding partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(params: &FnnParams) -> Self {
        Gradient {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.biases).flatten().copied().collect()
    }
}

impl FnnParams {
    /// Uniform fan-in initialization, `U(-sqrt(3/fan_in), sqrt(3/fan_in))`,
    /// zero biases.
    pub fn init(seed: u64) -> Self {
        Self::init_with(&LAYER_WIDTHS, Activation::default(), seed)
    }

    pub fn init_with(widths: &[usize], hidden_activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = widths
            .windows(2)
            .map(|w| {
                let bound = (3.0 / w[0] as f64).sqrt();
                (0..w[0] * w[1]).map(|_| rng.random_range(-bound..=bound)).collect()
            })
            .collect();
        let biases = widths[1..].iter().map(|&n| vec![0.0; n]).collect();
        FnnParams {
            layer_widths: widths.to_vec(),
            hidden_activation,
            weights,
            biases,
        }
    }

    pub fn zeros() -> Self {
        let mut p = Self::init(0);
        for w in &mut p.weights {
            w.fill(0.0);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let widths = &self.layer_widths;
        if widths.len() < 2 || widths[0] != 2 || *widths.last().unwrap() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "layer widths must run from 2 inputs to 1 output, got {widths:?}"
            )));
        }
        if self.weights.len() != widths.len() - 1 || self.biases.len() != widths.len() - 1 {
            return Err(Error::ShapeMismatch("layer count differs from widths".into()));
        }
        for (l, pair) in widths.windows(2).enumerate() {
            if self.weights[l].len() != pair[0] * pair[1] || self.biases[l].len() != pair[1] {
                return Err(Error::ShapeMismatch(format!("layer {l} has the wrong size")));
            }
        }
        if self.weights.iter().chain(&self.biases).flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.biases).flatten().copied().collect()
    }

    /// Inverse of [`FnnParams::flatten`] for a network of this shape.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for slot in out.weights.iter_mut().chain(out.biases.iter_mut()) {
            for v in slot.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        Ok(out)
    }
}

/// Activations of one vertex's forward pass; `layers[0]` is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnTrace {
    layers: Vec<Vec<f64>>,
}

fn dense_forward(params: &FnnParams, input: [f64; 2], muls: &mut u64) -> (f64, FnnTrace) {
    let depth = params.weights.len();
    let mut layers = Vec::with_capacity(depth + 1);
    layers.push(input.to_vec());
    for l in 0..depth {
        let (n_in, n_out) = (params.layer_widths[l], params.layer_widths[l + 1]);
        let w = &params.weights[l];
        let prev = &layers[l];
        let mut next = params.biases[l].clone();
        for (o, z) in next.iter_mut().enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            *z += row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
        }
        *muls += (n_in * n_out) as u64;
        if l + 1 < depth {
            for z in &mut next {
                *z = params.hidden_activation.apply(*z);
            }
        }
        layers.push(next);
    }
    let out = layers[depth][0];
    (out, FnnTrace { layers })
}

/// Accumulates `upstream * d(output)/d(theta)` into `grad`.
fn dense_backward(params: &FnnParams, trace: &FnnTrace, upstream: f64, grad: &mut Gradient) {
    let depth = params.weights.len();
    let mut delta = vec![upstream];
    for l in (0..depth).rev() {
        let n_in = params.layer_widths[l];
        let prev = &trace.layers[l];
        let w = &params.weights[l];
        for (o, &d) in delta.iter().enumerate() {
            grad.biases[l][o] += d;
            let row = &mut grad.weights[l][o * n_in..(o + 1) * n_in];
            for (g, &a) in row.iter_mut().zip(prev) {
                *g += d * a;
            }
        }
        if l == 0 {
            break;
        }
        let mut back = vec![0.0; n_in];
        for (o, &d) in delta.iter().enumerate() {
            for (i, b) in back.iter_mut().enumerate() {
                *b += d * w[o * n_in + i];
            }
        }
        for (b, &a) in back.iter_mut().zip(prev) {
            *b *= params.hidden_activation.slope_from_output(a);
        }
        delta = back;
    }
}

/// Per-vertex feature for inputs `(w_min_norm_k, surplus_norm)`.
pub fn fnn_forward(w_min_norm_k: f64, surplus_norm: f64, params: &FnnParams) -> Result<(f64, FnnTrace)> {
    params.validate()?;
    let mut muls = 0;
    Ok(dense_forward(params, [w_min_norm_k, surplus_norm], &mut muls))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnOutput {
    pub features: Vec<f64>,
    pub softmax: Vec<f64>,
    pub w_norm: Vec<f64>,
    pub w_hz: Vec<f64>,
    pub surplus_norm: f64,
    traces: Vec<FnnTrace>,
}

fn softmax(x: &[f64], muls: &mut u64) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    *muls += x.len() as u64;
    e.into_iter().map(|v| v / s).collect()
}

fn forward_impl(sched: &Schedule, params: &FnnParams, ops: &mut OpCount) -> Result<GnnOutput> {
    if sched.is_empty() {
        return Err(Error::EmptySchedule);
    }
    params.validate()?;
    let surplus = sched.surplus_norm;
    let mut muls = 0;
    let (features, traces): (Vec<f64>, Vec<FnnTrace>) = sched
        .w_min_norm
        .iter()
        .map(|&wn| dense_forward(params, [wn, surplus], &mut muls))
        .unzip();
    let softmax = softmax(&features, &mut muls);
    let surplus_hz = sched.surplus_hz();
    let w_hz: Vec<f64> = softmax
        .iter()
        .zip(&sched.w_min_hz)
        .map(|(y, w_min)| w_min + y * surplus_hz)
        .collect();
    muls += softmax.len() as u64;
    let w_norm = softmax
        .iter()
        .zip(&sched.w_min_norm)
        .map(|(y, wn)| y * surplus + wn)
        .collect();
    ops.multiplications += muls;
    Ok(GnnOutput {
        features,
        softmax,
        w_norm,
        w_hz,
        surplus_norm: surplus,
        traces,
    })
}

pub fn gnn_forward(sched: &Schedule, params: &FnnParams) -> Result<GnnOutput> {
    forward_impl(sched, params, &mut OpCount::new(crate::alloc::Policy::GnnUsl))
}

pub(crate) fn gnn_forward_counted(sched: &Schedule, params: &FnnParams, ops: &mut OpCount) -> Result<GnnOutput> {
    forward_impl(sched, params, ops)
}

/// Mean squared error between the normalized allocation and a label.
pub fn sl_loss(output: &GnnOutput, label_w_norm: &[f64]) -> Result<f64> {
    if label_w_norm.len() != output.w_norm.len() {
        return Err(Error::LengthMismatch {
            expected: output.w_norm.len(),
            got: label_w_norm.len(),
        });
    }
    let k = label_w_norm.len() as f64;
    Ok(output
        .w_norm
        .iter()
        .zip(label_w_norm)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / k)
}

/// Negative batch-mean sum secrecy rate in bit/s, using the unclamped rate
/// gap on each scheduled user.
pub fn usl_loss(batch: &[(&Schedule, &ChannelSample, &GnnOutput)], params: &SystemParams) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for (sched, sample, out) in batch {
        if sched.is_empty() {
            return Err(Error::EmptySchedule);
        }
        let chs = sched.channels(sample)?;
        total += sample_objective(&out.w_hz, &chs, params);
    }
    Ok(-total / batch.len() as f64)
}

fn sample_objective(w_hz: &[f64], chs: &[UserChannel], params: &SystemParams) -> f64 {
    w_hz.iter()
        .zip(chs)
        .map(|(&w, ch)| crate::model::rate_gap_expr(w, ch, params))
        .sum()
}

/// Pushes `dL/dy` back through softmax and the shared network.
fn backprop_from_shares(out: &GnnOutput, params: &FnnParams, d_softmax: &[f64], grad: &mut Gradient) {
    let mean: f64 = out.softmax.iter().zip(d_softmax).map(|(y, g)| y * g).sum();
    for ((trace, &y), &g) in out.traces.iter().zip(&out.softmax).zip(d_softmax) {
        dense_backward(params, trace, y * (g - mean), grad);
    }
}

/// Supervised loss and its parameter gradient for one schedule.
pub fn sl_loss_grad(sched: &Schedule, label_w_norm: &[f64], params: &FnnParams) -> Result<(f64, Gradient, GnnOutput)> {
    let out = gnn_forward(sched, params)?;
    let loss = sl_loss(&out, label_w_norm)?;
    let k = out.w_norm.len() as f64;
    let d_softmax: Vec<f64> = out
        .w_norm
        .iter()
        .zip(label_w_norm)
        .map(|(w, l)| 2.0 * (w - l) / k * out.surplus_norm)
        .collect();
    let mut grad = Gradient::zeros_like(params);
    backprop_from_shares(&out, params, &d_softmax, &mut grad);
    Ok((loss, grad, out))
}

/// Unsupervised loss for one schedule, in units of the budget
/// (`-sum R / W_max`, so bit/s/Hz), with its parameter gradient.
pub fn usl_loss_grad(
    sched: &Schedule,
    chs: &[UserChannel],
    params: &FnnParams,
    system: &SystemParams,
) -> Result<(f64, Gradient, GnnOutput)> {
    if chs.len() != sched.k() {
        return Err(Error::LengthMismatch {
            expected: sched.k(),
            got: chs.len(),
        });
    }
    let out = gnn_forward(sched, params)?;
    let scale = 1.0 / system.total_bandwidth_hz;
    let loss = -sample_objective(&out.w_hz, chs, system) * scale;
    // dW_k/dy_k = surplus_hz, so after scaling the chain factor is surplus_norm
    let d_softmax: Vec<f64> = out
        .w_hz
        .iter()
        .zip(chs)
        .map(|(&w, ch)| {
            let (xb, xe) = ch.snr_scales(system);
            -rate_gap_deriv_fast(w, xb, xe) * sched.surplus_hz() * scale
        })
        .collect();
    let mut grad = Gradient::zeros_like(params);
    backprop_from_shares(&out, params, &d_softmax, &mut grad);
    Ok((loss, grad, out))
}

/// `theta - learning_rate * gradient`.
pub fn sgd_step(params: &FnnParams, gradient: &Gradient, learning_rate: f64) -> Result<FnnParams> {
    let shapes_match = params.weights.len() == gradient.weights.len()
        && params.biases.len() == gradient.biases.len()
        && params.weights.iter().zip(&gradient.weights).all(|(a, b)| a.len() == b.len())
        && params.biases.iter().zip(&gradient.biases).all(|(a, b)| a.len() == b.len());
    if !shapes_match {
        return Err(Error::ShapeMismatch("gradient does not match parameters".into()));
    }
    if gradient.weights.iter().chain(&gradient.biases).flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let mut next = params.clone();
    for (p, g) in next.weights.iter_mut().zip(&gradient.weights) {
        for (x, d) in p.iter_mut().zip(g) {
            *x -= learning_rate * d;
        }
    }
    for (p, g) in next.biases.iter_mut().zip(&gradient.biases) {
        for (x, d) in p.iter_mut().zip(g) {
            *x -= learning_rate * d;
        }
    }
    Ok(next)
}

/// Secrecy rates realized by a GNN allocation on the given channels.
pub fn realized_sum_rate(out: &GnnOutput, chs: &[UserChannel], params: &SystemParams) -> f64 {
    out.w_hz.iter().zip(chs).map(|(&w, ch)| secrecy_rate_fast(w, ch, params)).sum()
}
