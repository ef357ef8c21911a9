//! Small differentiable classifiers with hand-written gradients.
//!
//! Two architectures are supported: an affine map into a softmax head, and a
//! one-hidden-layer tanh network. Both expose exact analytic gradients of the
//! mean negative log-likelihood over a batch, plus the two optimizers the
//! federation uses: plain mini-batch SGD for the shared cluster models and
//! AdamW (decoupled weight decay) for the per-client local and gating models.
//!
//! All arithmetic is in `f64` and parameters are immutable values; every
//! update returns a new [`ModelParams`].

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::Sample;

/// Floor applied to probabilities inside the negative log-likelihood so a
/// vanishing probability never produces an infinite loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    /// Affine map straight into the softmax head.
    LinearSoftmax,
    /// One tanh hidden layer of the given width, then the softmax head.
    MlpOneHidden { width: usize },
}

/// Architecture descriptor shared by every model in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub kind: ArchKind,
    pub input_dim: usize,
    pub n_outputs: usize,
}

impl ArchSpec {
    pub fn linear(input_dim: usize, n_outputs: usize) -> Self {
        ArchSpec {
            kind: ArchKind::LinearSoftmax,
            input_dim,
            n_outputs,
        }
    }

    pub fn mlp(input_dim: usize, width: usize, n_outputs: usize) -> Self {
        ArchSpec {
            kind: ArchKind::MlpOneHidden { width },
            input_dim,
            n_outputs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("arch input_dim must be at least 1"));
        }
        if self.n_outputs < 2 {
            return Err(Error::config("arch n_outputs must be at least 2"));
        }
        if let ArchKind::MlpOneHidden { width } = self.kind {
            if width == 0 {
                return Err(Error::config("mlp hidden width must be at least 1"));
            }
        }
        Ok(())
    }

    /// Total number of parameters in the flat layout.
    ///
    /// Linear: `[W (n_outputs x input_dim, row-major), b (n_outputs)]`.
    /// MLP: `[W1 (width x input_dim), b1 (width), W2 (n_outputs x width),
    /// b2 (n_outputs)]`.
    pub fn param_count(&self) -> usize {
        match self.kind {
            ArchKind::LinearSoftmax => self.n_outputs * (self.input_dim + 1),
            ArchKind::MlpOneHidden { width } => {
                width * (self.input_dim + 1) + self.n_outputs * (width + 1)
            }
        }
    }
}

/// Flat parameter vector plus its architecture descriptor. The unit exchanged
/// between clients and the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub values: Vec<f64>,
    pub arch: ArchSpec,
}

impl ModelParams {
    /// All-zero parameters (softmax output is uniform for any input).
    pub fn zeros(arch: ArchSpec) -> Self {
        ModelParams {
            values: vec![0.0; arch.param_count()],
            arch,
        }
    }

    /// Seeded initialization, uniform in `±1/sqrt(fan_in)` per layer.
    pub fn init(arch: ArchSpec, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(arch.param_count());
        let mut fill = |n: usize, fan_in: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..n {
                values.push(rng.gen_range(-bound..bound));
            }
        };
        match arch.kind {
            ArchKind::LinearSoftmax => {
                fill(arch.n_outputs * (arch.input_dim + 1), arch.input_dim, &mut rng);
            }
            ArchKind::MlpOneHidden { width } => {
                fill(width * (arch.input_dim + 1), arch.input_dim, &mut rng);
                fill(arch.n_outputs * (width + 1), width, &mut rng);
            }
        }
        ModelParams { values, arch }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Intermediate activations kept from a forward pass for backpropagation.
pub(crate) struct ForwardTrace {
    /// Post-tanh hidden activations; `None` for the linear architecture.
    pub hidden: Option<Vec<f64>>,
    pub probs: Vec<f64>,
}

fn check_input(params: &ModelParams, features: &[f64]) -> Result<()> {
    if features.len() != params.arch.input_dim {
        return Err(Error::Shape {
            context: "model input",
            expected: params.arch.input_dim,
            got: features.len(),
        });
    }
    Ok(())
}

/// `out[i] = sum_j w[i*cols + j] * x[j] + b[i]`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        let mut acc = b[i];
        for (wij, xj) in row.iter().zip(x) {
            acc += wij * xj;
        }
        *o = acc;
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub(crate) fn forward_trace(params: &ModelParams, features: &[f64]) -> Result<ForwardTrace> {
    check_input(params, features)?;
    let arch = &params.arch;
    let d = arch.input_dim;
    let m = arch.n_outputs;
    match arch.kind {
        ArchKind::LinearSoftmax => {
            let (w, b) = params.values.split_at(m * d);
            let mut logits = vec![0.0; m];
            affine(w, b, features, &mut logits);
            softmax_in_place(&mut logits);
            Ok(ForwardTrace {
                hidden: None,
                probs: logits,
            })
        }
        ArchKind::MlpOneHidden { width } => {
            let (w1, rest) = params.values.split_at(width * d);
            let (b1, rest) = rest.split_at(width);
            let (w2, b2) = rest.split_at(m * width);
            let mut hidden = vec![0.0; width];
            affine(w1, b1, features, &mut hidden);
            for h in hidden.iter_mut() {
                *h = h.tanh();
            }
            let mut logits = vec![0.0; m];
            affine(w2, b2, &hidden, &mut logits);
            softmax_in_place(&mut logits);
            Ok(ForwardTrace {
                hidden: Some(hidden),
                probs: logits,
            })
        }
    }
}

/// Class probability vector for one input (softmax head, entries sum to 1).
pub fn forward(params: &ModelParams, features: &[f64]) -> Result<Vec<f64>> {
    forward_trace(params, features).map(|t| t.probs)
}

/// Negative log-likelihood of `label` under `probs`, floored at
/// [`PROB_FLOOR`] to avoid `-log 0`.
pub fn nll_loss(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_FLOOR).ln()
}

/// Sum of per-sample NLL of `params` over `samples`.
pub fn dataset_loss(params: &ModelParams, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += nll_loss(&forward(params, &s.features)?, s.label);
    }
    Ok(total)
}

/// Mean per-sample NLL of `params` over `samples`.
pub fn mean_loss(params: &ModelParams, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::config("mean_loss requires a non-empty sample set"));
    }
    Ok(dataset_loss(params, samples)? / samples.len() as f64)
}

/// Backpropagates a gradient w.r.t. the logits into the parameter gradient
/// accumulator. Shared by NLL training and the gating-model objective.
pub(crate) fn accumulate_grad_from_dlogits(
    params: &ModelParams,
    features: &[f64],
    trace: &ForwardTrace,
    dlogits: &[f64],
    grad: &mut [f64],
) {
    let arch = &params.arch;
    let d = arch.input_dim;
    let m = arch.n_outputs;
    match arch.kind {
        ArchKind::LinearSoftmax => {
            let w_len = m * d;
            for i in 0..m {
                let dl = dlogits[i];
                for (j, xj) in features.iter().enumerate() {
                    grad[i * d + j] += dl * xj;
                }
                grad[w_len + i] += dl;
            }
        }
        ArchKind::MlpOneHidden { width } => {
            let hidden = trace.hidden.as_ref().expect("mlp trace has hidden layer");
            let w1_len = width * d;
            let w2_off = w1_len + width;
            let w2 = &params.values[w2_off..w2_off + m * width];
            // Output layer.
            for i in 0..m {
                let dl = dlogits[i];
                for (j, hj) in hidden.iter().enumerate() {
                    grad[w2_off + i * width + j] += dl * hj;
                }
                grad[w2_off + m * width + i] += dl;
            }
            // Hidden layer through the tanh nonlinearity.
            for j in 0..width {
                let mut dh = 0.0;
                for i in 0..m {
                    dh += dlogits[i] * w2[i * width + j];
                }
                let dpre = dh * (1.0 - hidden[j] * hidden[j]);
                for (k, xk) in features.iter().enumerate() {
                    grad[j * d + k] += dpre * xk;
                }
                grad[w1_len + j] += dpre;
            }
        }
    }
}

/// Exact analytic gradient of the mean NLL over `batch`.
pub fn gradient(params: &ModelParams, batch: &[Sample]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::config("gradient requires a non-empty batch"));
    }
    let mut grad = vec![0.0; params.values.len()];
    let mut dlogits = vec![0.0; params.arch.n_outputs];
    for s in batch {
        let trace = forward_trace(params, &s.features)?;
        for (i, dl) in dlogits.iter_mut().enumerate() {
            *dl = trace.probs[i];
        }
        dlogits[s.label] -= 1.0;
        accumulate_grad_from_dlogits(params, &s.features, &trace, &dlogits, &mut grad);
    }
    let scale = 1.0 / batch.len() as f64;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    Ok(grad)
}

/// One mini-batch gradient-descent step: `w - lr * mean_gradient(batch)`.
pub fn sgd_step(params: &ModelParams, lr: f64, batch: &[Sample]) -> Result<ModelParams> {
    let grad = gradient(params, batch)?;
    let values = params
        .values
        .iter()
        .zip(&grad)
        .map(|(w, g)| w - lr * g)
        .collect();
    Ok(ModelParams {
        values,
        arch: params.arch,
    })
}

/// AdamW hyperparameters (decoupled weight decay).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::config("adamw lr must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("adamw {name} must be in [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("adamw eps must be positive"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("adamw weight_decay must be non-negative"));
        }
        Ok(())
    }
}

/// First/second moment buffers and step counter for AdamW.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamWState {
    pub fn new(param_count: usize) -> Self {
        AdamWState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Applies one AdamW update in place. Weight decay acts directly on the
/// parameters, not through the gradient.
pub(crate) fn adamw_update_in_place(
    values: &mut [f64],
    grad: &[f64],
    state: &mut AdamWState,
    cfg: &AdamWConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..values.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps) + cfg.lr * cfg.weight_decay * values[i];
    }
}

/// One AdamW step on a mini-batch; returns the updated parameters and state.
pub fn adamw_step(
    params: &ModelParams,
    state: &AdamWState,
    cfg: &AdamWConfig,
    batch: &[Sample],
) -> Result<(ModelParams, AdamWState)> {
    let grad = gradient(params, batch)?;
    let mut values = params.values.clone();
    let mut state = state.clone();
    adamw_update_in_place(&mut values, &grad, &mut state, cfg);
    Ok((
        ModelParams {
            values,
            arch: params.arch,
        },
        state,
    ))
}

/// Optimizer selection for [`local_update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalOptimizer {
    Sgd { lr: f64 },
    AdamW(AdamWConfig),
}

/// Epochs of shuffled mini-batch training starting from `params`.
///
/// Each epoch shuffles the sample order with `rng` and walks batches of
/// `batch_size`; the final batch of an epoch may be smaller. The result is a
/// pure function of `(params, train, epochs, batch_size, optimizer, rng state)`.
pub fn local_update<R: Rng>(
    params: &ModelParams,
    train: &[Sample],
    epochs: usize,
    batch_size: usize,
    optimizer: &LocalOptimizer,
    rng: &mut R,
) -> Result<ModelParams> {
    if train.is_empty() {
        return Err(Error::config("local_update requires a non-empty train set"));
    }
    if epochs == 0 {
        return Err(Error::config("local_update requires at least one epoch"));
    }
    if batch_size == 0 {
        return Err(Error::config("local_update requires batch_size >= 1"));
    }
    let mut current = params.clone();
    let mut adamw_state = AdamWState::new(params.values.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch: Vec<Sample> = Vec::with_capacity(batch_size.min(train.len()));
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            match optimizer {
                LocalOptimizer::Sgd { lr } => {
                    current = sgd_step(&current, *lr, &batch)?;
                }
                LocalOptimizer::AdamW(cfg) => {
                    let (next, next_state) = adamw_step(&current, &adamw_state, cfg, &batch)?;
                    current = next;
                    adamw_state = next_state;
                }
            }
        }
    }
    Ok(current)
}
