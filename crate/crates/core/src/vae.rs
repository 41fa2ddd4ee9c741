//! Gaussian-encoder / Gaussian-decoder VAE with a learned isotropic decoder
//! variance γ, trained by Adam on the negative ELBO.
//!
//! The encoder maps an image to the mean and diagonal log-variance of
//! `q(z|x)`; the decoder maps a latent to the mean of `p(x|z)` whose
//! covariance is `γ·I` with `γ = exp(log_gamma)` shared across pixels and
//! independent of `z`.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{MlpGrads, MlpParams, Tape};
use crate::optim::{AdamConfig, AdamState};
use crate::rng;

pub const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    encoder: MlpParams,
    decoder: MlpParams,
    log_gamma: f64,
}

impl VaeModel {
    /// Wrap existing networks. The encoder must emit `2·z_dim` values
    /// (`[μ | log-variance]`) and the decoder must invert the dimensions.
    pub fn new(encoder: MlpParams, decoder: MlpParams, log_gamma: f64) -> Result<Self> {
        if encoder.out_dim() != 2 * decoder.in_dim() {
            return Err(Error::shape(format!(
                "encoder outputs {} values but decoder takes z of dim {}",
                encoder.out_dim(),
                decoder.in_dim()
            )));
        }
        if encoder.in_dim() != decoder.out_dim() {
            return Err(Error::shape(format!(
                "encoder input dim {} != decoder output dim {}",
                encoder.in_dim(),
                decoder.out_dim()
            )));
        }
        if !log_gamma.is_finite() {
            return Err(Error::numeric("log_gamma must be finite".to_string()));
        }
        Ok(VaeModel {
            encoder,
            decoder,
            log_gamma,
        })
    }

    /// Glorot-initialized model: encoder `x → hidden… → 2·z`, decoder
    /// `z → reversed hidden… → x`, `log γ = 0`.
    pub fn init(x_dim: usize, hidden: &[usize], z_dim: usize, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let mut enc_dims = vec![x_dim];
        enc_dims.extend_from_slice(hidden);
        enc_dims.push(2 * z_dim);
        let mut dec_dims = vec![z_dim];
        dec_dims.extend(hidden.iter().rev());
        dec_dims.push(x_dim);
        let encoder = MlpParams::glorot(&enc_dims, &mut r);
        let decoder = MlpParams::glorot(&dec_dims, &mut r);
        VaeModel::new(encoder, decoder, 0.0).unwrap()
    }

    /// The 784 → 500 → 500 → (12+12) / 12 → 500 → 500 → 784 architecture.
    pub fn standard(seed: u64) -> Self {
        VaeModel::init(784, &[500, 500], 12, seed)
    }

    pub fn x_dim(&self) -> usize {
        self.decoder.out_dim()
    }

    pub fn z_dim(&self) -> usize {
        self.decoder.in_dim()
    }

    pub fn encoder(&self) -> &MlpParams {
        &self.encoder
    }

    pub fn decoder(&self) -> &MlpParams {
        &self.decoder
    }

    pub fn log_gamma(&self) -> f64 {
        self.log_gamma
    }

    /// Decoder variance `γ = exp(log_gamma)`, strictly positive by construction.
    pub fn gamma(&self) -> f64 {
        self.log_gamma.exp()
    }

    /// Posterior parameters `(μφ(x), log diag Σφ(x))`.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (out, _) = self.encoder.forward(x)?;
        let k = self.z_dim();
        Ok((out[..k].to_vec(), out[k..].to_vec()))
    }

    /// Decoder mean `μθ(z)`.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decoder.forward(z)?.0)
    }

    pub(crate) fn decode_with_tape(&self, z: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.decoder.forward(z)
    }
}

/// `KL(N(μ, diag(exp(logvar))) ‖ N(0, I))`, in closed form.
///
/// Non-negative, zero exactly when `μ = 0` and `logvar = 0`.
pub fn kl_gaussian(mu: &[f64], logvar: &[f64]) -> f64 {
    assert_eq!(mu.len(), logvar.len(), "kl_gaussian length mismatch");
    let mut acc = 0.0;
    for (&m, &lv) in mu.iter().zip(logvar) {
        acc += m * m + lv.exp() - lv - 1.0;
    }
    0.5 * acc
}

/// Gradients of the per-sample ELBO loss.
#[derive(Debug, Clone)]
pub struct ElboGrads {
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
    pub d_log_gamma: f64,
}

impl ElboGrads {
    pub fn zeros_like(model: &VaeModel) -> Self {
        ElboGrads {
            encoder: MlpGrads::zeros_like(&model.encoder),
            decoder: MlpGrads::zeros_like(&model.decoder),
            d_log_gamma: 0.0,
        }
    }

    fn zero(&mut self) {
        self.encoder.zero();
        self.decoder.zero();
        self.d_log_gamma = 0.0;
    }

    fn scale(&mut self, s: f64) {
        self.encoder.scale(s);
        self.decoder.scale(s);
        self.d_log_gamma *= s;
    }
}

/// Negative ELBO of one sample with the reparameterization draw `noise`
/// supplied by the caller:
///
/// `loss = ½(n ln 2π + n ln γ + ‖x − μθ(z)‖²/γ) + KL(qφ(z|x) ‖ N(0,I))`
///
/// with `z = μφ(x) + exp(logvar/2) ⊙ noise`. Gradients cover encoder,
/// decoder and `log_gamma`, backpropagated through the reparameterization.
pub fn elbo_loss(model: &VaeModel, x: &[f64], noise: &[f64]) -> Result<(f64, ElboGrads)> {
    let mut grads = ElboGrads::zeros_like(model);
    let loss = elbo_loss_into(model, x, noise, &mut grads)?;
    Ok((loss, grads))
}

/// Same as [`elbo_loss`], accumulating into existing buffers (for batching).
pub fn elbo_loss_into(
    model: &VaeModel,
    x: &[f64],
    noise: &[f64],
    grads: &mut ElboGrads,
) -> Result<f64> {
    let k = model.z_dim();
    let n = model.x_dim();
    if noise.len() != k {
        return Err(Error::shape(format!(
            "noise length {} != z dim {k}",
            noise.len()
        )));
    }

    let (enc_out, enc_tape) = model.encoder.forward(x)?;
    let (mu, logvar) = enc_out.split_at(k);

    let mut z = vec![0.0; k];
    let mut sigma = vec![0.0; k];
    for i in 0..k {
        sigma[i] = (0.5 * logvar[i]).exp();
        z[i] = mu[i] + sigma[i] * noise[i];
    }

    let (xhat, dec_tape) = model.decoder.forward(&z)?;
    let gamma = model.gamma();

    let mut residual = 0.0;
    let mut d_xhat = vec![0.0; n];
    for i in 0..n {
        let r = xhat[i] - x[i];
        residual += r * r;
        d_xhat[i] = r / gamma;
    }

    let reconstruction = 0.5 * (n as f64 * (LN_2PI + model.log_gamma) + residual / gamma);
    let kl = kl_gaussian(mu, logvar);
    let loss = reconstruction + kl;
    if !loss.is_finite() {
        return Err(Error::numeric(format!(
            "ELBO loss diverged (reconstruction {reconstruction}, kl {kl})"
        )));
    }

    // ∂/∂log γ of ½(n log γ + r/γ) = ½(n − r/γ).
    grads.d_log_gamma += 0.5 * (n as f64 - residual / gamma);

    let d_z = model
        .decoder
        .backward_into(&dec_tape, &d_xhat, &mut grads.decoder)?;

    // Through z = μ + σ ⊙ ε plus the KL terms.
    let mut d_enc_out = vec![0.0; 2 * k];
    for i in 0..k {
        d_enc_out[i] = d_z[i] + mu[i];
        d_enc_out[k + i] = d_z[i] * noise[i] * 0.5 * sigma[i] + 0.5 * (logvar[i].exp() - 1.0);
    }
    model
        .encoder
        .backward_into(&enc_tape, &d_enc_out, &mut grads.encoder)?;

    Ok(loss)
}

/// Training hyperparameters.
///
/// Adam's β1/β2/ε are the usual defaults; the source recipe leaves them
/// unstated, so they are pinned here rather than exposed per run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Learning rate is halved every this many epochs.
    pub lr_halving_period: usize,
    pub seed: u64,
}

/// Images used by the desk profile (subset of the train split).
pub const DESK_SUBSET: usize = 10_000;

impl TrainConfig {
    /// Full-scale recipe: batch 64, 400 epochs, lr 1e-4 halving every 150.
    pub fn paper(seed: u64) -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 400,
            lr: 1e-4,
            lr_halving_period: 150,
            seed,
        }
    }

    /// Minutes-scale profile used by the test suite: 20 epochs on a
    /// [`DESK_SUBSET`]-image subset, same batch size and learning rate.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            epochs: 20,
            ..TrainConfig::paper(seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size must be ≥ 1"));
        }
        if self.lr <= 0.0 {
            return Err(Error::param("learning rate must be > 0"));
        }
        if self.lr_halving_period == 0 {
            return Err(Error::param("lr_halving_period must be ≥ 1"));
        }
        Ok(())
    }
}

fn param_slices(model: &mut VaeModel) -> (Vec<&mut [f64]>, usize) {
    let mut slices: Vec<&mut [f64]> = Vec::new();
    for l in model.encoder.layers_mut() {
        slices.push(l.weight.data_mut());
        slices.push(&mut l.bias);
    }
    for l in model.decoder.layers_mut() {
        slices.push(l.weight.data_mut());
        slices.push(&mut l.bias);
    }
    slices.push(std::slice::from_mut(&mut model.log_gamma));
    let total = slices.iter().map(|s| s.len()).sum();
    (slices, total)
}

fn grad_slices(grads: &ElboGrads) -> Vec<&[f64]> {
    let mut slices: Vec<&[f64]> = Vec::new();
    for l in &grads.encoder.layers {
        slices.push(l.d_weight.data());
        slices.push(&l.d_bias);
    }
    for l in &grads.decoder.layers {
        slices.push(l.d_weight.data());
        slices.push(&l.d_bias);
    }
    slices.push(std::slice::from_ref(&grads.d_log_gamma));
    slices
}

/// Train by Adam on the mean batch ELBO loss. Returns the trained model and
/// the per-epoch mean loss curve.
///
/// Deterministic given the seed: shuffling and the reparameterization draws
/// all come from one seeded stream, and batches are processed one sample at
/// a time in order.
pub fn train(
    model: VaeModel,
    images: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(VaeModel, Vec<f64>)> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok((model, Vec::new()));
    }
    if images.is_empty() {
        return Err(Error::param("training set is empty"));
    }

    let mut model = model;
    let n_params = model.encoder.param_count() + model.decoder.param_count() + 1;
    let mut adam = AdamState::new(n_params, AdamConfig::new(cfg.lr));
    let mut stream = rng::seeded(cfg.seed);
    let mut batch_grads = ElboGrads::zeros_like(&model);
    let mut noise = vec![0.0; model.z_dim()];
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        adam.set_lr(cfg.lr * 0.5f64.powi((epoch / cfg.lr_halving_period) as i32));
        shuffle(&mut order, &mut stream);

        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            batch_grads.zero();
            let mut batch_loss = 0.0;
            for &i in batch {
                for e in noise.iter_mut() {
                    *e = StandardNormal.sample(&mut stream);
                }
                let loss = elbo_loss_into(&model, &images[i], &noise, &mut batch_grads)
                    .map_err(|e| {
                        Error::numeric(format!(
                            "training diverged at epoch {epoch}, batch {batch_idx}: {e}"
                        ))
                    })?;
                batch_loss += loss;
            }
            batch_grads.scale(1.0 / batch.len() as f64);
            epoch_loss += batch_loss;

            let gslices = grad_slices(&batch_grads);
            let (mut pslices, total) = param_slices(&mut model);
            debug_assert_eq!(total, n_params);
            adam.step_grouped(&mut pslices, &gslices).map_err(|e| {
                Error::numeric(format!(
                    "training diverged at epoch {epoch}, batch {batch_idx}: {e}"
                ))
            })?;
        }
        curve.push(epoch_loss / images.len() as f64);
    }

    Ok((model, curve))
}

/// Fisher–Yates with the caller's stream.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Exponentially smoothed curve with weight `alpha` on the newest value.
pub fn smoothed_curve(curve: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(curve.len());
    let mut s = f64::NAN;
    for (i, &v) in curve.iter().enumerate() {
        s = if i == 0 { v } else { alpha * v + (1.0 - alpha) * s };
        out.push(s);
    }
    out
}
