//! A small fully connected VAE with hand-written backpropagation.
//!
//! Encoder: `x → ReLU(hidden) → (μ, log s)`; decoder: `z → ReLU(hidden) →
//! logits`, Bernoulli likelihood. Latents are drawn as `z = μ + s ⊙ ε` with
//! `ε ~ N(0, Σ(σ))`. The optimized KL is always the diagonal closed form;
//! the correlated posterior only shifts it by a constant.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::ToyDataset;
use crate::gaussian::{diagonal_kl, CorrelatedNoiseSpec, GaussianError, GaussianPosterior};
use crate::metrics::{self, MetricsError, RepresentationDump};
use crate::tc::{self, PosteriorBatch, TcError, TcEstimate};

/// Bounds applied to the log-scale head before exponentiation.
pub const LOG_SCALE_MIN: f64 = -6.0;
pub const LOG_SCALE_MAX: f64 = 4.0;

/// Total-correlation weight commonly used with FactorVAE. Not implemented
/// as an objective; kept for reference alongside [`BETA_TCVAE_WEIGHT`].
pub const FACTOR_VAE_WEIGHT: f64 = 35.0;
/// Total-correlation weight commonly used with β-TCVAE. Not implemented as
/// an objective.
pub const BETA_TCVAE_WEIGHT: f64 = 6.0;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Epoch loss above this multiple of the first epoch's loss counts towards
/// divergence.
const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_PATIENCE: usize = 3;

// RNG streams derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_EVAL: u64 = 2;

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite {what} for row {row}")]
    NonFinite { what: &'static str, row: usize },
    #[error("NaN loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
    #[error("input has {actual} pixels, model expects {expected}")]
    InputSize { expected: usize, actual: usize },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tc(#[from] TcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VaeError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub sigma: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 10,
            hidden: 128,
            lr: 1e-3,
            epochs: 60,
            batch_size: 16,
            sigma: 0.0,
            beta: 1.0,
            seed: 0,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(VaeError::InvalidConfig(m.to_string()));
        if self.latent_dim < 2 {
            return bad("latent_dim must be >= 2");
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be > 0");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2");
        }
        if !(0.0..1.0).contains(&self.sigma) {
            return bad("sigma must lie in [0, 1)");
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad("beta must be >= 0");
        }
        Ok(())
    }

    pub fn noise_spec(&self) -> Result<CorrelatedNoiseSpec> {
        Ok(CorrelatedNoiseSpec::new(self.latent_dim, self.sigma)?)
    }
}

/// Sizes of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub input: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl Layout {
    /// Tensor sizes in storage order: encoder weight/bias, μ head, log-s
    /// head, decoder hidden, decoder output. Weights are `out × in`
    /// row-major.
    fn sizes(&self) -> [usize; 10] {
        let (d, h, j) = (self.input, self.hidden, self.latent);
        [h * d, h, j * h, j, j * h, j, h * j, h, d * h, d]
    }

    pub fn param_count(&self) -> usize {
        self.sizes().iter().sum()
    }

    fn ranges(&self) -> [Range<usize>; 10] {
        let mut start = 0;
        self.sizes().map(|n| {
            let r = start..start + n;
            start += n;
            r
        })
    }

    /// `(fan_in, fan_out)` of each weight tensor in storage order.
    fn weight_fans(&self) -> [(usize, usize); 5] {
        let (d, h, j) = (self.input, self.hidden, self.latent);
        [(d, h), (h, j), (h, j), (j, h), (h, d)]
    }
}

/// Named views into a flat parameter (or gradient) buffer.
#[derive(Debug)]
pub struct Tensors<T> {
    pub enc_w: T,
    pub enc_b: T,
    pub mu_w: T,
    pub mu_b: T,
    pub ls_w: T,
    pub ls_b: T,
    pub dec_w: T,
    pub dec_b: T,
    pub out_w: T,
    pub out_b: T,
}

fn views<'a>(layout: &Layout, buf: &'a [f64]) -> Tensors<&'a [f64]> {
    let r = layout.ranges();
    Tensors {
        enc_w: &buf[r[0].clone()],
        enc_b: &buf[r[1].clone()],
        mu_w: &buf[r[2].clone()],
        mu_b: &buf[r[3].clone()],
        ls_w: &buf[r[4].clone()],
        ls_b: &buf[r[5].clone()],
        dec_w: &buf[r[6].clone()],
        dec_b: &buf[r[7].clone()],
        out_w: &buf[r[8].clone()],
        out_b: &buf[r[9].clone()],
    }
}

fn views_mut<'a>(layout: &Layout, buf: &'a mut [f64]) -> Tensors<&'a mut [f64]> {
    let s = layout.sizes();
    let (enc_w, rest) = buf.split_at_mut(s[0]);
    let (enc_b, rest) = rest.split_at_mut(s[1]);
    let (mu_w, rest) = rest.split_at_mut(s[2]);
    let (mu_b, rest) = rest.split_at_mut(s[3]);
    let (ls_w, rest) = rest.split_at_mut(s[4]);
    let (ls_b, rest) = rest.split_at_mut(s[5]);
    let (dec_w, rest) = rest.split_at_mut(s[6]);
    let (dec_b, rest) = rest.split_at_mut(s[7]);
    let (out_w, out_b) = rest.split_at_mut(s[8]);
    Tensors {
        enc_w,
        enc_b,
        mu_w,
        mu_b,
        ls_w,
        ls_b,
        dec_w,
        dec_b,
        out_w,
        out_b,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layout: Layout,
    values: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            values: vec![0.0; layout.param_count()],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(layout: Layout, rng: &mut R) -> Self {
        let mut p = Self::zeros(layout);
        let ranges = layout.ranges();
        for (k, &(fan_in, fan_out)) in layout.weight_fans().iter().enumerate() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut p.values[ranges[2 * k].clone()] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        p
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.param_count() {
            return Err(VaeError::Checkpoint(format!(
                "expected {} parameters, got {}",
                layout.param_count(),
                values.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn tensors(&self) -> Tensors<&[f64]> {
        views(&self.layout, &self.values)
    }

    pub fn tensors_mut(&mut self) -> Tensors<&mut [f64]> {
        views_mut(&self.layout, &mut self.values)
    }

    /// Largest admissible |w| under Glorot init, per weight tensor.
    pub fn glorot_bounds(layout: &Layout) -> [f64; 5] {
        layout.weight_fans().map(|(i, o)| (6.0 / (i + o) as f64).sqrt())
    }
}

/// Initializes parameters for `config` and images of `input` pixels.
pub fn init(config: &VaeConfig, input: usize) -> Result<MlpParams> {
    config.validate()?;
    let layout = Layout {
        input,
        hidden: config.hidden,
        latent: config.latent_dim,
    };
    Ok(MlpParams::glorot(layout, &mut stream_rng(config.seed, STREAM_INIT)))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `y = W x + b` with `W` stored `out × in`; zero inputs are skipped.
fn affine(w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    y.copy_from_slice(b);
    let n_in = x.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, yo) in y.iter_mut().enumerate() {
            *yo += w[o * n_in + i] * xi;
        }
    }
}

/// Accumulates `dW += dy xᵀ`, `db += dy` and optionally `dx = Wᵀ dy`.
fn affine_backward(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64], dx: Option<&mut [f64]>) {
    let n_in = x.len();
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db[o] += g;
        let row = &mut dw[o * n_in..(o + 1) * n_in];
        for (r, &xi) in row.iter_mut().zip(x) {
            *r += g * xi;
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (d, &wi) in dx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *d += g * wi;
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli negative log-likelihood of `x` under `logits`.
pub fn bernoulli_nll(x: &[f64], logits: &[f64]) -> f64 {
    x.iter().zip(logits).map(|(&xi, &l)| softplus(l) - xi * l).sum()
}

/// Per-example activations, reused across a batch.
#[derive(Debug, Clone)]
struct Workspace {
    h1: Vec<f64>,
    mu: Vec<f64>,
    ls_raw: Vec<f64>,
    ls: Vec<f64>,
    scale: Vec<f64>,
    z: Vec<f64>,
    h2: Vec<f64>,
    logits: Vec<f64>,
    d_logits: Vec<f64>,
    d_h2: Vec<f64>,
    d_z: Vec<f64>,
    d_mu: Vec<f64>,
    d_ls: Vec<f64>,
    d_h1: Vec<f64>,
    tmp_h: Vec<f64>,
}

impl Workspace {
    fn new(layout: &Layout) -> Self {
        let (d, h, j) = (layout.input, layout.hidden, layout.latent);
        Self {
            h1: vec![0.0; h],
            mu: vec![0.0; j],
            ls_raw: vec![0.0; j],
            ls: vec![0.0; j],
            scale: vec![0.0; j],
            z: vec![0.0; j],
            h2: vec![0.0; h],
            logits: vec![0.0; d],
            d_logits: vec![0.0; d],
            d_h2: vec![0.0; h],
            d_z: vec![0.0; j],
            d_mu: vec![0.0; j],
            d_ls: vec![0.0; j],
            d_h1: vec![0.0; h],
            tmp_h: vec![0.0; h],
        }
    }
}

fn encoder_forward(p: &Tensors<&[f64]>, x: &[f64], ws: &mut Workspace) {
    affine(p.enc_w, p.enc_b, x, &mut ws.h1);
    ws.h1.iter_mut().for_each(|v| *v = v.max(0.0));
    affine(p.mu_w, p.mu_b, &ws.h1, &mut ws.mu);
    affine(p.ls_w, p.ls_b, &ws.h1, &mut ws.ls_raw);
    for ((ls, s), &raw) in ws.ls.iter_mut().zip(&mut ws.scale).zip(&ws.ls_raw) {
        *ls = raw.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX);
        *s = ls.exp();
    }
}

fn decoder_forward(p: &Tensors<&[f64]>, ws: &mut Workspace) {
    affine(p.dec_w, p.dec_b, &ws.z, &mut ws.h2);
    ws.h2.iter_mut().for_each(|v| *v = v.max(0.0));
    affine(p.out_w, p.out_b, &ws.h2, &mut ws.logits);
}

/// Backpropagates `d_mu` and `d_ls` (w.r.t. the clamped log-scale) through
/// the encoder, accumulating into `g`. Writes the input gradient if asked.
fn encoder_backward(
    p: &Tensors<&[f64]>,
    x: &[f64],
    ws: &mut Workspace,
    g: &mut Tensors<&mut [f64]>,
    dx: Option<&mut [f64]>,
) {
    for (d, &raw) in ws.d_ls.iter_mut().zip(&ws.ls_raw) {
        if !(LOG_SCALE_MIN..=LOG_SCALE_MAX).contains(&raw) {
            *d = 0.0;
        }
    }
    affine_backward(p.mu_w, &ws.h1, &ws.d_mu, g.mu_w, g.mu_b, Some(&mut ws.d_h1));
    affine_backward(p.ls_w, &ws.h1, &ws.d_ls, g.ls_w, g.ls_b, Some(&mut ws.tmp_h));
    for ((d, &t), &h) in ws.d_h1.iter_mut().zip(&ws.tmp_h).zip(&ws.h1) {
        *d = if h > 0.0 { *d + t } else { 0.0 };
    }
    affine_backward(p.enc_w, x, &ws.d_h1, g.enc_w, g.enc_b, dx);
}

/// Loss and gradients of one batch.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Mean of `recon + β · kl` over the batch.
    pub loss: f64,
    /// Summed reconstruction NLL over the batch.
    pub recon_sum: f64,
    /// Summed diagonal KL over the batch.
    pub kl_sum: f64,
    /// Gradient of `loss`, laid out like the parameters.
    pub grads: Vec<f64>,
}

/// ELBO loss and gradients with the reparameterization noise supplied.
pub fn elbo_with_noise(params: &MlpParams, batch: &[&[f64]], noise: &[Vec<f64>], beta: f64) -> Result<StepOutput> {
    let layout = params.layout;
    assert_eq!(batch.len(), noise.len(), "one noise vector per example");
    let p = params.tensors();
    let mut grads = vec![0.0; layout.param_count()];
    let mut g = views_mut(&layout, &mut grads);
    let mut ws = Workspace::new(&layout);
    let inv_b = 1.0 / batch.len() as f64;
    let (mut recon_sum, mut kl_sum) = (0.0, 0.0);

    for (row, (x, eps)) in batch.iter().zip(noise).enumerate() {
        if x.len() != layout.input {
            return Err(VaeError::InputSize {
                expected: layout.input,
                actual: x.len(),
            });
        }
        encoder_forward(&p, x, &mut ws);
        for (((z, m), s), e) in ws.z.iter_mut().zip(&ws.mu).zip(&ws.scale).zip(eps) {
            *z = m + s * e;
        }
        decoder_forward(&p, &mut ws);
        let recon = bernoulli_nll(x, &ws.logits);
        let kl = diagonal_kl(&ws.mu, &ws.scale);
        if !recon.is_finite() || !kl.is_finite() {
            return Err(VaeError::NonFinite { what: "loss", row });
        }
        recon_sum += recon;
        kl_sum += kl;

        for ((d, &l), &xi) in ws.d_logits.iter_mut().zip(&ws.logits).zip(x.iter()) {
            *d = (sigmoid(l) - xi) * inv_b;
        }
        affine_backward(p.out_w, &ws.h2, &ws.d_logits, g.out_w, g.out_b, Some(&mut ws.d_h2));
        for (d, &h) in ws.d_h2.iter_mut().zip(&ws.h2) {
            if h <= 0.0 {
                *d = 0.0;
            }
        }
        affine_backward(p.dec_w, &ws.z, &ws.d_h2, g.dec_w, g.dec_b, Some(&mut ws.d_z));
        for k in 0..layout.latent {
            let (m, s, e, dz) = (ws.mu[k], ws.scale[k], eps[k], ws.d_z[k]);
            ws.d_mu[k] = dz + beta * m * inv_b;
            // d/d(log s) of s·e·dz and of β·½(s² − 2 log s).
            ws.d_ls[k] = dz * e * s + beta * (s * s - 1.0) * inv_b;
        }
        encoder_backward(&p, x, &mut ws, &mut g, None);
    }
    let loss = (recon_sum + beta * kl_sum) * inv_b;
    Ok(StepOutput {
        loss,
        recon_sum,
        kl_sum,
        grads,
    })
}

/// One stochastic ELBO evaluation with `ε ~ N(0, Σ)` drawn from `rng`.
pub fn elbo_step<R: Rng + ?Sized>(
    params: &MlpParams,
    batch: &[&[f64]],
    config: &VaeConfig,
    noise: &CorrelatedNoiseSpec,
    rng: &mut R,
) -> Result<StepOutput> {
    let eps = noise.sample(batch.len(), rng);
    elbo_with_noise(params, batch, &eps, config.beta)
}

/// Posterior mean and standard deviation for one input.
pub fn encode_one(params: &MlpParams, x: &[f64]) -> Result<GaussianPosterior> {
    if x.len() != params.layout.input {
        return Err(VaeError::InputSize {
            expected: params.layout.input,
            actual: x.len(),
        });
    }
    let mut ws = Workspace::new(&params.layout);
    encoder_forward(&params.tensors(), x, &mut ws);
    if ws.mu.iter().chain(&ws.scale).any(|v| !v.is_finite()) {
        return Err(VaeError::NonFinite {
            what: "encoder output",
            row: 0,
        });
    }
    Ok(GaussianPosterior::new(ws.mu, ws.scale)?)
}

/// Per-row posterior means and standard deviations.
pub type Encoded = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Encodes a batch into per-row `(μ, s)`.
pub fn encode(params: &MlpParams, x_batch: &[&[f64]]) -> Result<Encoded> {
    let mut mus = Vec::with_capacity(x_batch.len());
    let mut scales = Vec::with_capacity(x_batch.len());
    for (row, x) in x_batch.iter().enumerate() {
        let post = encode_one(params, x).map_err(|e| match e {
            VaeError::NonFinite { what, .. } => VaeError::NonFinite { what, row },
            other => other,
        })?;
        mus.push(post.mu().to_vec());
        scales.push(post.scale().to_vec());
    }
    Ok((mus, scales))
}

/// Vector-Jacobian product of the encoder: given cotangents on `μ` and on
/// the clamped `log s`, returns `(parameter gradient, input gradient)`.
pub fn encoder_vjp(params: &MlpParams, x: &[f64], d_mu: &[f64], d_log_scale: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let layout = params.layout;
    let p = params.tensors();
    let mut grads = vec![0.0; layout.param_count()];
    let mut g = views_mut(&layout, &mut grads);
    let mut ws = Workspace::new(&layout);
    encoder_forward(&p, x, &mut ws);
    ws.d_mu.copy_from_slice(d_mu);
    ws.d_ls.copy_from_slice(d_log_scale);
    let mut dx = vec![0.0; layout.input];
    encoder_backward(&p, x, &mut ws, &mut g, Some(&mut dx));
    (grads, dx)
}

/// Draws `z ~ q(z | x)` through the same noise and reparameterization path
/// the trainer uses.
pub fn sample_posterior<R: Rng + ?Sized>(
    params: &MlpParams,
    x: &[f64],
    noise: &CorrelatedNoiseSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let post = encode_one(params, x)?;
    let mut eps = vec![0.0; noise.latent_dim()];
    noise.sample_into(rng, &mut eps);
    Ok(post.reparameterize(&eps)?)
}

/// Posterior means for every dataset row, in dataset order.
pub fn dump_representations(params: &MlpParams, dataset: &ToyDataset) -> Result<RepresentationDump> {
    let inputs = dataset_inputs(dataset);
    let rows: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let (mus, _) = encode(params, &rows)?;
    Ok(RepresentationDump::new(
        mus,
        dataset.factors().to_vec(),
        dataset.factor_cardinalities(),
    )?)
}

fn dataset_inputs(dataset: &ToyDataset) -> Vec<Vec<f64>> {
    (0..dataset.len())
        .map(|i| dataset.image(i).iter().map(|&p| p as f64).collect())
        .collect()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Ok,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub sigma: f64,
    pub latent_dim: usize,
    /// Per-epoch mean reconstruction NLL.
    pub recon: Vec<f64>,
    /// Per-epoch mean diagonal KL.
    pub kl: Vec<f64>,
    /// Constant KL gap of the correlated posterior, reported separately.
    pub kl_offset: f64,
    pub final_mig: f64,
    pub final_tc: TcEstimate,
    pub seconds: f64,
    pub status: TrainStatus,
}

impl TrainReport {
    pub fn final_recon(&self) -> Option<f64> {
        self.recon.last().copied()
    }

    pub fn final_kl(&self) -> Option<f64> {
        self.kl.last().copied()
    }
}

/// Trains on the full dataset with shuffled minibatches and Adam, then
/// scores MIG on posterior means and estimates TC on a random batch.
pub fn train(config: &VaeConfig, dataset: &ToyDataset) -> Result<(MlpParams, TrainReport)> {
    let started = Instant::now();
    config.validate()?;
    let noise = config.noise_spec()?;
    let mut params = init(config, dataset.pixels())?;
    let inputs = dataset_inputs(dataset);
    let mut rng = stream_rng(config.seed, STREAM_TRAIN);
    let mut adam = Adam::new(params.values.len(), config.lr);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut recon_series = Vec::with_capacity(config.epochs);
    let mut kl_series = Vec::with_capacity(config.epochs);
    let mut status = TrainStatus::Ok;
    let mut first_loss = None;
    let mut over = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut recon, mut kl) = (0.0, 0.0);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i].as_slice()).collect();
            let out = elbo_step(&params, &batch, config, &noise, &mut rng)?;
            if out.loss.is_nan() {
                return Err(VaeError::NanLoss { epoch, batch: b });
            }
            adam.step(&mut params.values, &out.grads);
            recon += out.recon_sum;
            kl += out.kl_sum;
        }
        let summary = metrics::reconstruction_and_kl(recon, kl, inputs.len(), noise.kl_offset())?;
        recon_series.push(summary.recon);
        kl_series.push(summary.kl);

        let loss = summary.recon + config.beta * summary.kl;
        let first = *first_loss.get_or_insert(loss);
        over = if loss > DIVERGENCE_FACTOR * first { over + 1 } else { 0 };
        if over >= DIVERGENCE_PATIENCE {
            log::warn!("seed {} sigma {}: diverged at epoch {epoch}", config.seed, config.sigma);
            status = TrainStatus::Diverged;
            break;
        }
    }

    let dump = dump_representations(&params, dataset)?;
    let final_mig = metrics::mig(&dump, metrics::DEFAULT_BINS)?.score;
    let final_tc = estimate_tc_for(&params, &inputs, &noise, &mut stream_rng(config.seed, STREAM_EVAL))?;
    let report = TrainReport {
        seed: config.seed,
        sigma: config.sigma,
        latent_dim: config.latent_dim,
        recon: recon_series,
        kl: kl_series,
        kl_offset: noise.kl_offset(),
        final_mig,
        final_tc,
        seconds: started.elapsed().as_secs_f64(),
        status,
    };
    Ok((params, report))
}

/// TC estimate on `tc::DEFAULT_BATCH` rows drawn without replacement.
fn estimate_tc_for(
    params: &MlpParams,
    inputs: &[Vec<f64>],
    noise: &CorrelatedNoiseSpec,
    rng: &mut ChaCha8Rng,
) -> Result<TcEstimate> {
    let b = tc::DEFAULT_BATCH.min(inputs.len());
    let picks = rand::seq::index::sample(rng, inputs.len(), b);
    let posteriors = picks
        .iter()
        .map(|i| encode_one(params, &inputs[i]))
        .collect::<Result<Vec<_>>>()?;
    let batch = PosteriorBatch::new(posteriors)?;
    Ok(tc::estimate_tc(&batch, tc::DEFAULT_SAMPLES_PER_POSTERIOR, noise, rng)?)
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: VaeConfig,
    epoch: usize,
    layout: Layout,
    param_count: usize,
}

/// Writes a checkpoint: one line of JSON header, then the parameters as
/// little-endian `f64` in storage order.
pub fn save_checkpoint<W: Write>(mut w: W, params: &MlpParams, config: &VaeConfig, epoch: usize) -> Result<()> {
    let header = CheckpointHeader {
        config: *config,
        epoch,
        layout: params.layout,
        param_count: params.values.len(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in &params.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<(VaeConfig, usize, MlpParams)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| VaeError::Checkpoint("missing header line".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..nl])?;
    let body = &bytes[nl + 1..];
    if header.param_count != header.layout.param_count() || body.len() != header.param_count * 8 {
        return Err(VaeError::Checkpoint(format!(
            "parameter block has {} bytes, expected {}",
            body.len(),
            header.layout.param_count() * 8
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((
        header.config,
        header.epoch,
        MlpParams::from_values(header.layout, values)?,
    ))
}

pub fn save_checkpoint_file(path: &Path, params: &MlpParams, config: &VaeConfig, epoch: usize) -> Result<()> {
    let f = std::fs::File::create(path)?;
    save_checkpoint(std::io::BufWriter::new(f), params, config, epoch)
}

pub fn load_checkpoint_file(path: &Path) -> Result<(VaeConfig, usize, MlpParams)> {
    load_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}
