//! Transformer VAE over feature tokens: encoder and decoder stacks with a
//! reparameterized per-token latent, the annealed beta loss, and the
//! single-threaded deterministic training loop.

mod transformer;

pub use transformer::{AttentionParams, LayerParams, TransformerStack};

use crate::autodiff::{clip_grad_norm, sgd_step, AutodiffError, Tape, Tensor};
use crate::dataset::SchemaLayout;
use crate::rngutil::{
    derive_rng, standard_normal_vec, TAG_TOKENIZER_INIT, TAG_VAE_INIT, TAG_VAE_TRAIN,
};
use crate::tokenizer::{
    DetokenizerParams, GumbelConfig, NoiseMode, Reconstruction, TokenizerError, TokenizerParams,
};
use rand::seq::SliceRandom;
use rand::Rng;
use std::fmt;

#[derive(Debug)]
pub enum VaeError {
    EmptyTrainSet,
    /// Training hit a non-finite loss; the batch is identified so the run
    /// can be reproduced and inspected.
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },
    InvalidConfig(String),
    Autodiff(AutodiffError),
    Tokenizer(TokenizerError),
}

impl fmt::Display for VaeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VaeError::EmptyTrainSet => write!(f, "training set is empty"),
            VaeError::NonFiniteLoss { epoch, batch, value } => {
                write!(f, "loss became non-finite ({value}) at epoch {epoch}, batch {batch}")
            }
            VaeError::InvalidConfig(msg) => write!(f, "invalid training config: {msg}"),
            VaeError::Autodiff(e) => write!(f, "{e}"),
            VaeError::Tokenizer(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for VaeError {}

impl From<AutodiffError> for VaeError {
    fn from(e: AutodiffError) -> Self {
        VaeError::Autodiff(e)
    }
}

impl From<TokenizerError> for VaeError {
    fn from(e: TokenizerError) -> Self {
        VaeError::Tokenizer(e)
    }
}

/// Architecture sizes: `n_layers` encoder layers and as many decoder
/// layers, `n_heads` attention heads over token width `d`, feed-forward
/// hidden width `m`, per-token latent width `d_z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VaeArch {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d: usize,
    pub m: usize,
    pub d_z: usize,
}

impl Default for VaeArch {
    fn default() -> Self {
        VaeArch { n_layers: 2, n_heads: 2, d: 8, m: 32, d_z: 4 }
    }
}

/// Training hyperparameters. Defaults carry the full-scale schedule
/// (4000 epochs, beta annealed 1e-3 down to 1e-5, temperature 1.0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeTrainConfig {
    pub epochs: usize,
    pub beta_max: f64,
    pub beta_min: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub seed: u64,
    pub arch: VaeArch,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            epochs: 4000,
            beta_max: 1e-3,
            beta_min: 1e-5,
            learning_rate: 1e-2,
            batch_size: 64,
            temperature: 1.0,
            seed: 0,
            arch: VaeArch::default(),
        }
    }
}

impl VaeTrainConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        if self.epochs == 0 {
            return Err(VaeError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(VaeError::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(self.beta_max > self.beta_min && self.beta_min > 0.0) {
            return Err(VaeError::InvalidConfig(format!(
                "beta schedule needs beta_max > beta_min > 0, got {} and {}",
                self.beta_max, self.beta_min
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(VaeError::InvalidConfig("temperature must be > 0".into()));
        }
        Ok(())
    }
}

/// The deterministic encoding of one row plus a recorded noise draw:
/// `z = mu + exp(logvar / 2) * eps`, all flattened over the token axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub eps: Vec<f64>,
    pub z: Vec<f64>,
}

impl LatentState {
    /// Recomputes z from the stored (mu, logvar, eps) triple; exact.
    pub fn compose(mu: Vec<f64>, logvar: Vec<f64>, eps: Vec<f64>) -> LatentState {
        let z = mu
            .iter()
            .zip(&logvar)
            .zip(&eps)
            .map(|((m, lv), e)| m + (lv / 2.0).exp() * e)
            .collect();
        LatentState { mu, logvar, eps, z }
    }
}

/// The full generative model. Parameters are plain tensors shared with the
/// tape during training and frozen (by convention) afterwards.
#[derive(Debug)]
pub struct VaeModel {
    pub arch: VaeArch,
    pub layout: SchemaLayout,
    pub temperature: f64,
    pub tokenizer: TokenizerParams,
    pub encoder: TransformerStack,
    pub mu_w: Tensor,
    pub mu_b: Tensor,
    pub logvar_w: Tensor,
    pub logvar_b: Tensor,
    pub dec_in_w: Tensor,
    pub dec_in_b: Tensor,
    pub decoder: TransformerStack,
    pub detokenizer: DetokenizerParams,
}

impl VaeModel {
    pub fn init(layout: &SchemaLayout, arch: VaeArch, temperature: f64, seed: u64) -> VaeModel {
        let mut tok_rng = derive_rng(seed, &[TAG_TOKENIZER_INIT]);
        let tokenizer = TokenizerParams::init(layout, arch.d, &mut tok_rng);
        let detokenizer = DetokenizerParams::init(layout, arch.d, &mut tok_rng);
        let mut rng = derive_rng(seed, &[TAG_VAE_INIT]);
        let encoder = TransformerStack::init(arch.n_layers, arch.n_heads, arch.d, arch.m, &mut rng);
        let decoder = TransformerStack::init(arch.n_layers, arch.n_heads, arch.d, arch.m, &mut rng);
        let bound_d = 1.0 / (arch.d as f64).sqrt();
        let bound_z = 1.0 / (arch.d_z as f64).sqrt();
        let mut draw = |shape: Vec<usize>, bound: f64| {
            let n: usize = shape.iter().product();
            let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::param(shape, values).expect("shape/values agree")
        };
        VaeModel {
            arch,
            layout: layout.clone(),
            temperature,
            tokenizer,
            encoder,
            mu_w: draw(vec![arch.d, arch.d_z], bound_d),
            mu_b: draw(vec![arch.d_z], bound_d),
            logvar_w: draw(vec![arch.d, arch.d_z], bound_d),
            logvar_b: draw(vec![arch.d_z], bound_d),
            dec_in_w: draw(vec![arch.d_z, arch.d], bound_z),
            dec_in_b: draw(vec![arch.d], bound_z),
            decoder,
            detokenizer,
        }
    }

    /// Flattened latent width for one sample: features x d_z.
    pub fn latent_width(&self) -> usize {
        self.layout.n_features() * self.arch.d_z
    }

    pub fn params(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        self.tokenizer.collect_params(&mut out);
        self.encoder.collect_params(&mut out);
        for t in [
            &self.mu_w, &self.mu_b, &self.logvar_w, &self.logvar_b,
            &self.dec_in_w, &self.dec_in_b,
        ] {
            out.push(t.clone());
        }
        self.decoder.collect_params(&mut out);
        self.detokenizer.collect_params(&mut out);
        out
    }

    /// Drops every parameter out of the gradient flow. Call once training
    /// is done; downstream searches then backpropagate through the model
    /// without accumulating parameter gradients.
    pub fn freeze(&self) {
        for p in self.params() {
            p.set_requires_grad(false);
        }
    }

    /// All parameters paired with stable serialization names.
    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        let push_vec = |out: &mut Vec<(String, Tensor)>, prefix: &str, ts: &[Tensor]| {
            for (i, t) in ts.iter().enumerate() {
                out.push((format!("{prefix}.{i}"), t.clone()));
            }
        };
        push_vec(&mut out, "tok.w_num", &self.tokenizer.w_num);
        push_vec(&mut out, "tok.b_num", &self.tokenizer.b_num);
        push_vec(&mut out, "tok.w_cat", &self.tokenizer.w_cat);
        push_vec(&mut out, "tok.b_cat", &self.tokenizer.b_cat);
        self.encoder.named_params("enc", &mut out);
        for (name, t) in [
            ("head.mu_w", &self.mu_w), ("head.mu_b", &self.mu_b),
            ("head.logvar_w", &self.logvar_w), ("head.logvar_b", &self.logvar_b),
            ("head.dec_in_w", &self.dec_in_w), ("head.dec_in_b", &self.dec_in_b),
        ] {
            out.push((name.to_string(), t.clone()));
        }
        self.decoder.named_params("dec", &mut out);
        push_vec(&mut out, "detok.w_num", &self.detokenizer.w_num);
        push_vec(&mut out, "detok.b_num", &self.detokenizer.b_num);
        push_vec(&mut out, "detok.w_cat", &self.detokenizer.w_cat);
        push_vec(&mut out, "detok.b_cat", &self.detokenizer.b_cat);
        out
    }

    /// Encoder half on the tape: `x [B, k]` to per-token `(mu, logvar)`,
    /// both `[B * n_features, d_z]` sample-major.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        batch: usize,
    ) -> Result<(Tensor, Tensor), VaeError> {
        let tokens = self.tokenizer.tokenize(tape, x, &self.layout)?;
        let h = self
            .encoder
            .forward(tape, &tokens, batch, self.layout.n_features(), None)?;
        let mu = tape.matmul(&h, &self.mu_w)?;
        let mu = tape.add(&mu, &self.mu_b)?;
        let logvar = tape.matmul(&h, &self.logvar_w)?;
        let logvar = tape.add(&logvar, &self.logvar_b)?;
        Ok((mu, logvar))
    }

    /// `z = mu + exp(logvar / 2) * eps` on the tape, differentiable
    /// through `mu` and `logvar` for the recorded noise.
    pub fn reparameterize(
        &self,
        tape: &mut Tape,
        mu: &Tensor,
        logvar: &Tensor,
        eps: &[f64],
    ) -> Result<Tensor, VaeError> {
        let eps_t = Tensor::from_vec(mu.shape().to_vec(), eps.to_vec())
            .map_err(VaeError::Autodiff)?;
        let half = tape.scale(logvar, 0.5);
        let sigma = tape.exp(&half);
        let noise = tape.mul(&sigma, &eps_t)?;
        Ok(tape.add(mu, &noise)?)
    }

    /// Decoder half on the tape: latent `[B * n_features, d_z]` through
    /// the transformer and detokenizer to a [`Reconstruction`].
    pub fn decode_on_tape(
        &self,
        tape: &mut Tape,
        z: &Tensor,
        batch: usize,
        noise: NoiseMode,
        rng: &mut impl Rng,
    ) -> Result<Reconstruction, VaeError> {
        let expected = batch * self.layout.n_features();
        if z.shape() != [expected, self.arch.d_z] {
            return Err(VaeError::Autodiff(AutodiffError::InvalidShape {
                op: "decode",
                shape: z.shape().to_vec(),
                reason: "latent must be [batch * n_features, d_z]",
            }));
        }
        let h = tape.matmul(z, &self.dec_in_w)?;
        let h = tape.add(&h, &self.dec_in_b)?;
        let h = self
            .decoder
            .forward(tape, &h, batch, self.layout.n_features(), None)?;
        let cfg = GumbelConfig::new(self.temperature, noise)?;
        Ok(self
            .detokenizer
            .detokenize(tape, &h, &self.layout, &cfg, rng)?)
    }

    /// Deterministic single-row encoding with a caller-supplied noise draw
    /// (`None` means eps = 0, i.e. z = mu — the counterfactual start).
    pub fn encode_row(&self, x_row: &[f64], eps: Option<Vec<f64>>) -> Result<LatentState, VaeError> {
        let mut tape = Tape::new();
        let x = Tensor::from_vec(vec![1, x_row.len()], x_row.to_vec())
            .map_err(VaeError::Autodiff)?;
        let (mu, logvar) = self.encode_on_tape(&mut tape, &x, 1)?;
        let mu = mu.to_vec();
        let logvar = logvar.to_vec();
        let eps = eps.unwrap_or_else(|| vec![0.0; mu.len()]);
        Ok(LatentState::compose(mu, logvar, eps))
    }

    /// Plain single-row decode: flattened latent in, hard encoded row out.
    /// `NoiseMode::Zero` makes this a pure function of `z`.
    pub fn decode_row(
        &self,
        z: &[f64],
        noise: NoiseMode,
        rng: &mut impl Rng,
    ) -> Result<Vec<f64>, VaeError> {
        let mut tape = Tape::new();
        let zt = Tensor::from_vec(
            vec![self.layout.n_features(), self.arch.d_z],
            z.to_vec(),
        )
        .map_err(VaeError::Autodiff)?;
        let recon = self.decode_on_tape(&mut tape, &zt, 1, noise, rng)?;
        Ok(recon.hard.to_vec())
    }
}

// ── Losses and schedule ─────────────────────────────────────────────────

/// Closed-form Gaussian KL to the standard normal prior, summed over all
/// latent entries and averaged over the batch:
/// `-1/2 sum(1 + logvar - mu^2 - exp(logvar)) / batch`.
pub fn kl_divergence(
    tape: &mut Tape,
    mu: &Tensor,
    logvar: &Tensor,
    batch: usize,
) -> Result<Tensor, AutodiffError> {
    let ones = Tensor::from_vec(vec![1], vec![1.0])?;
    let lv_plus = tape.add(logvar, &ones)?;
    let mu_sq = tape.mul(mu, mu)?;
    let t = tape.sub(&lv_plus, &mu_sq)?;
    let ev = tape.exp(logvar);
    let t = tape.sub(&t, &ev)?;
    let s = tape.sum(&t);
    Ok(tape.scale(&s, -0.5 / batch as f64))
}

/// The assembled training loss and the plain values of its pieces.
pub struct VaeLoss {
    pub total: Tensor,
    pub recon_value: f64,
    pub kl_value: f64,
}

/// Reconstruction + beta * KL.
///
/// The reconstruction term is the mean squared error over the numerical
/// block (mean over batch x numerical features) plus, per categorical
/// feature, the cross-entropy between the true one-hot block and the soft
/// categorical sample (summed over features, averaged over the batch).
pub fn vae_loss(
    tape: &mut Tape,
    x: &Tensor,
    recon: &Reconstruction,
    mu: &Tensor,
    logvar: &Tensor,
    beta: f64,
    layout: &SchemaLayout,
    batch: usize,
) -> Result<VaeLoss, AutodiffError> {
    let mut recon_term: Option<Tensor> = None;
    if layout.n_num > 0 {
        let x_num = tape.slice_cols(x, 0, layout.n_num)?;
        let r_num = tape.slice_cols(&recon.soft, 0, layout.n_num)?;
        let diff = tape.sub(&x_num, &r_num)?;
        let sq = tape.mul(&diff, &diff)?;
        recon_term = Some(tape.mean(&sq));
    }
    if layout.n_cat > 0 {
        let mut ce_sum: Option<Tensor> = None;
        for i in 0..layout.n_cat {
            let true_block = tape.slice_cols(x, layout.cat_offsets[i], layout.cat_sizes[i])?;
            let picked = tape.mul(&true_block, &recon.log_soft_blocks[i])?;
            let s = tape.sum(&picked);
            ce_sum = Some(match ce_sum {
                Some(acc) => tape.add(&acc, &s)?,
                None => s,
            });
        }
        let ce = tape.scale(&ce_sum.expect("n_cat > 0"), -1.0 / batch as f64);
        recon_term = Some(match recon_term {
            Some(acc) => tape.add(&acc, &ce)?,
            None => ce,
        });
    }
    let recon_t = recon_term.expect("at least one feature kind present");
    let kl = kl_divergence(tape, mu, logvar, batch)?;
    let beta_kl = tape.scale(&kl, beta);
    let total = tape.add(&recon_t, &beta_kl)?;
    Ok(VaeLoss {
        total,
        recon_value: recon_t.item(),
        kl_value: kl.item(),
    })
}

/// Log-linear (geometric) interpolation from `beta_max` at epoch 0 down to
/// `beta_min` at the final epoch; endpoints exact, monotone in between.
pub fn beta_schedule(epoch: usize, epochs: usize, beta_max: f64, beta_min: f64) -> f64 {
    assert!(epoch < epochs, "epoch {epoch} out of range for {epochs} epochs");
    if epoch == 0 || epochs == 1 {
        return beta_max;
    }
    if epoch == epochs - 1 {
        return beta_min;
    }
    let t = epoch as f64 / (epochs - 1) as f64;
    beta_max * (beta_min / beta_max).powf(t)
}

// ── Training loop ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub beta: f64,
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurve {
    pub epochs: Vec<EpochStats>,
}

impl TrainingCurve {
    pub fn first(&self) -> Option<&EpochStats> {
        self.epochs.first()
    }
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Minibatch SGD over the annealed loss: one shuffled pass per epoch,
/// soft categorical path in the loss, gradient norm clipped at 5.0.
/// Single-threaded; identical seeds give bitwise-identical parameters.
pub fn train_vae(
    model: &VaeModel,
    rows: &[Vec<f64>],
    cfg: &VaeTrainConfig,
) -> Result<TrainingCurve, VaeError> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(VaeError::EmptyTrainSet);
    }
    let params = model.params();
    let param_refs: Vec<&Tensor> = params.iter().collect();
    let k = rows[0].len();
    let f = model.layout.n_features();
    let mut rng = derive_rng(cfg.seed, &[TAG_VAE_TRAIN]);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut curve = TrainingCurve::default();
    for epoch in 0..cfg.epochs {
        let beta = beta_schedule(epoch, cfg.epochs, cfg.beta_max, cfg.beta_min);
        order.shuffle(&mut rng);
        let mut epoch_recon = 0.0;
        let mut epoch_kl = 0.0;
        let mut epoch_total = 0.0;
        let mut n_batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let b = chunk.len();
            let mut flat = Vec::with_capacity(b * k);
            for &i in chunk {
                flat.extend_from_slice(&rows[i]);
            }
            let x = Tensor::from_vec(vec![b, k], flat).map_err(VaeError::Autodiff)?;
            let mut tape = Tape::new();
            let (mu, logvar) = model.encode_on_tape(&mut tape, &x, b)?;
            let eps = standard_normal_vec(&mut rng, b * f * model.arch.d_z);
            let z = model.reparameterize(&mut tape, &mu, &logvar, &eps)?;
            let recon = model.decode_on_tape(&mut tape, &z, b, NoiseMode::Seeded, &mut rng)?;
            let loss = vae_loss(&mut tape, &x, &recon, &mu, &logvar, beta, &model.layout, b)?;
            let total = loss.total.item();
            if !total.is_finite() {
                return Err(VaeError::NonFiniteLoss { epoch, batch: batch_idx, value: total });
            }
            tape.backward(&loss.total)?;
            clip_grad_norm(&param_refs, 5.0);
            sgd_step(&param_refs, cfg.learning_rate)?;
            epoch_recon += loss.recon_value;
            epoch_kl += loss.kl_value;
            epoch_total += total;
            n_batches += 1;
        }
        let nb = n_batches as f64;
        curve.epochs.push(EpochStats {
            epoch,
            beta,
            recon: epoch_recon / nb,
            kl: epoch_kl / nb,
            total: epoch_total / nb,
        });
    }
    Ok(curve)
}
