//! Learnable per-feature tokenization and the Gumbel-Softmax detokenizer.
//!
//! Tokenization maps each feature of an encoded row into a d-dimensional
//! token: numericals by scaling a learned row vector, categoricals by a
//! one-hot matmul (an embedding lookup plus bias). Detokenization maps
//! tokens back: numerical heads end in a sigmoid, categorical heads emit
//! logits that are sampled with Gumbel-Softmax. The hard sample keeps the
//! reconstruction exactly one-hot; gradients flow through the soft sample
//! (straight-through), so the whole round trip stays differentiable while
//! every output satisfies the encoding constraints by construction.

use crate::autodiff::{AutodiffError, Tape, Tensor};
use crate::dataset::SchemaLayout;
use rand::Rng;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenizerError {
    /// Gumbel-Softmax temperature must be strictly positive.
    InvalidTemperature { value: f64 },
    /// The supplied noise buffer does not match the logits.
    NoiseLengthMismatch { expected: usize, found: usize },
    Autodiff(AutodiffError),
}

impl fmt::Display for TokenizerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenizerError::InvalidTemperature { value } => {
                write!(f, "gumbel temperature must be > 0, got {value}")
            }
            TokenizerError::NoiseLengthMismatch { expected, found } => {
                write!(f, "gumbel noise length {found}, expected {expected}")
            }
            TokenizerError::Autodiff(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for TokenizerError {}

impl From<AutodiffError> for TokenizerError {
    fn from(e: AutodiffError) -> Self {
        TokenizerError::Autodiff(e)
    }
}

/// Gumbel-Softmax settings: the temperature and how the per-call noise is
/// produced. `Zero` fixes g = 0 (deterministic; the softmax of the raw
/// logits), used for reproducible evaluation decodes and as a test hook.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelConfig {
    pub temperature: f64,
    pub noise: NoiseMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Seeded,
    Zero,
}

impl GumbelConfig {
    pub fn new(temperature: f64, noise: NoiseMode) -> Result<GumbelConfig, TokenizerError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(TokenizerError::InvalidTemperature { value: temperature });
        }
        Ok(GumbelConfig { temperature, noise })
    }
}

/// Draws `n` standard Gumbel variates, g = −ln(−ln(u)). The uniform is
/// clamped into the open interval so the double logarithm never sees 0.
pub fn sample_gumbel(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>().clamp(1e-12, 1.0 - 1e-12);
            -(-u.ln()).ln()
        })
        .collect()
}

/// Soft and hard Gumbel-Softmax samples for row-wise logits.
///
/// `soft = softmax((logits + g) / τ)` row by row; `hard` is the one-hot at
/// the soft argmax with a straight-through backward (gradients reach the
/// logits through the soft sample). `noise` must have one Gumbel draw per
/// logit; pass zeros for the deterministic variant. Also returns the
/// row-wise log of the soft distribution, computed stably from the scaled
/// logits, for cross-entropy losses.
pub fn gumbel_softmax(
    tape: &mut Tape,
    logits: &Tensor,
    noise: &[f64],
    temperature: f64,
) -> Result<GumbelSample, TokenizerError> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(TokenizerError::InvalidTemperature { value: temperature });
    }
    if noise.len() != logits.numel() {
        return Err(TokenizerError::NoiseLengthMismatch {
            expected: logits.numel(),
            found: noise.len(),
        });
    }
    let g = Tensor::from_vec(logits.shape().to_vec(), noise.to_vec())?;
    let noisy = tape.add(logits, &g)?;
    let scaled = tape.scale(&noisy, 1.0 / temperature);
    let soft = tape.softmax_lastdim(&scaled);
    let log_soft = tape.log_softmax_lastdim(&scaled);
    let hard = tape.straight_through_argmax(&soft);
    Ok(GumbelSample { hard, soft, log_soft })
}

/// The three faces of one categorical sample: exact one-hot forward value,
/// the soft simplex point gradients flow through, and its log.
#[derive(Debug)]
pub struct GumbelSample {
    pub hard: Tensor,
    pub soft: Tensor,
    pub log_soft: Tensor,
}

// ── Tokenizer ───────────────────────────────────────────────────────────

/// Input-side parameters: one (W, b) block per feature, all trainable.
/// Numerical feature j owns a `[1, d]` row pair; categorical feature i a
/// `[C_i, d]` table plus `[d]` bias.
#[derive(Debug)]
pub struct TokenizerParams {
    pub d: usize,
    pub w_num: Vec<Tensor>,
    pub b_num: Vec<Tensor>,
    pub w_cat: Vec<Tensor>,
    pub b_cat: Vec<Tensor>,
}

impl TokenizerParams {
    /// All weights and biases drawn uniform(−1/√d, 1/√d).
    pub fn init(layout: &SchemaLayout, d: usize, rng: &mut impl Rng) -> TokenizerParams {
        let bound = 1.0 / (d as f64).sqrt();
        let mut draw = |shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::param(shape, values).expect("shape/values agree")
        };
        let w_num = (0..layout.n_num).map(|_| draw(vec![1, d])).collect();
        let b_num = (0..layout.n_num).map(|_| draw(vec![d])).collect();
        let w_cat = layout.cat_sizes.iter().map(|&c| draw(vec![c, d])).collect();
        let b_cat = (0..layout.n_cat).map(|_| draw(vec![d])).collect();
        TokenizerParams { d, w_num, b_num, w_cat, b_cat }
    }

    pub fn collect_params(&self, out: &mut Vec<Tensor>) {
        for t in self.w_num.iter().chain(&self.b_num).chain(&self.w_cat).chain(&self.b_cat) {
            out.push(t.clone());
        }
    }

    /// Tokenizes a batch `x: [B, k]` into the sample-major token matrix
    /// `[B * n_features, d]` (all tokens of sample 0, then sample 1, ...).
    pub fn tokenize(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        layout: &SchemaLayout,
    ) -> Result<Tensor, TokenizerError> {
        let batch = x.shape()[0];
        let mut per_feature: Vec<Tensor> = Vec::with_capacity(layout.n_features());
        for j in 0..layout.n_num {
            let col = tape.slice_cols(x, j, 1)?;
            let scaled = tape.matmul(&col, &self.w_num[j])?;
            per_feature.push(tape.add(&scaled, &self.b_num[j])?);
        }
        for i in 0..layout.n_cat {
            let block = tape.slice_cols(x, layout.cat_offsets[i], layout.cat_sizes[i])?;
            let looked_up = tape.matmul(&block, &self.w_cat[i])?;
            per_feature.push(tape.add(&looked_up, &self.b_cat[i])?);
        }
        // [B, F*d] with feature tokens adjacent per sample, then a free
        // reshape to the sample-major [B*F, d] layout.
        let wide = tape.concat_cols(&per_feature)?;
        Ok(tape.reshape(&wide, vec![batch * layout.n_features(), self.d])?)
    }
}

// ── Detokenizer ─────────────────────────────────────────────────────────

/// Output-side parameters mirroring the tokenizer: numerical heads map a
/// token to one pre-sigmoid scalar, categorical head i to C_i logits.
#[derive(Debug)]
pub struct DetokenizerParams {
    pub d: usize,
    pub w_num: Vec<Tensor>,
    pub b_num: Vec<Tensor>,
    pub w_cat: Vec<Tensor>,
    pub b_cat: Vec<Tensor>,
}

/// A batch reconstruction in encoded-row layout. `hard` satisfies every
/// encoding constraint exactly (numericals in (0,1), blocks one-hot);
/// `soft` replaces each block with the Gumbel-Softmax simplex point and is
/// the tensor to differentiate distances through. `log_soft_blocks` holds
/// the per-feature log distributions for cross-entropy.
pub struct Reconstruction {
    pub hard: Tensor,
    pub soft: Tensor,
    pub log_soft_blocks: Vec<Tensor>,
}

impl DetokenizerParams {
    pub fn init(layout: &SchemaLayout, d: usize, rng: &mut impl Rng) -> DetokenizerParams {
        let bound = 1.0 / (d as f64).sqrt();
        let mut draw = |shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::param(shape, values).expect("shape/values agree")
        };
        let w_num = (0..layout.n_num).map(|_| draw(vec![d, 1])).collect();
        let b_num = (0..layout.n_num).map(|_| draw(vec![1])).collect();
        let w_cat = layout.cat_sizes.iter().map(|&c| draw(vec![d, c])).collect();
        let b_cat = layout.cat_sizes.iter().map(|&c| draw(vec![c])).collect();
        DetokenizerParams { d, w_num, b_num, w_cat, b_cat }
    }

    pub fn collect_params(&self, out: &mut Vec<Tensor>) {
        for t in self.w_num.iter().chain(&self.b_num).chain(&self.w_cat).chain(&self.b_cat) {
            out.push(t.clone());
        }
    }

    /// Maps a sample-major token matrix `[B * n_features, d]` back to
    /// encoded rows `[B, k]`. Gumbel noise comes from `rng` when the config
    /// says `Seeded` (drawn block by block in feature order), else zeros.
    pub fn detokenize(
        &self,
        tape: &mut Tape,
        tokens: &Tensor,
        layout: &SchemaLayout,
        cfg: &GumbelConfig,
        rng: &mut impl Rng,
    ) -> Result<Reconstruction, TokenizerError> {
        let f = layout.n_features();
        let batch = tokens.shape()[0] / f;
        // regroup tokens per feature: [B*F, d] -> [B, F*d] -> column slices
        let wide = tape.reshape(tokens, vec![batch, f * self.d])?;
        let mut hard_parts: Vec<Tensor> = Vec::with_capacity(1 + layout.n_cat);
        let mut soft_parts: Vec<Tensor> = Vec::with_capacity(1 + layout.n_cat);
        let mut log_soft_blocks = Vec::with_capacity(layout.n_cat);
        let mut num_cols: Vec<Tensor> = Vec::with_capacity(layout.n_num);
        for j in 0..layout.n_num {
            let token = tape.slice_cols(&wide, j * self.d, self.d)?;
            let pre = tape.matmul(&token, &self.w_num[j])?;
            let pre = tape.add(&pre, &self.b_num[j])?;
            num_cols.push(tape.sigmoid(&pre));
        }
        if layout.n_num > 0 {
            let nums = tape.concat_cols(&num_cols)?;
            hard_parts.push(nums.clone());
            soft_parts.push(nums);
        }
        for i in 0..layout.n_cat {
            let token = tape.slice_cols(&wide, (layout.n_num + i) * self.d, self.d)?;
            let logits = tape.matmul(&token, &self.w_cat[i])?;
            let logits = tape.add(&logits, &self.b_cat[i])?;
            let noise = match cfg.noise {
                NoiseMode::Seeded => sample_gumbel(rng, logits.numel()),
                NoiseMode::Zero => vec![0.0; logits.numel()],
            };
            let sample = gumbel_softmax(tape, &logits, &noise, cfg.temperature)?;
            hard_parts.push(sample.hard);
            soft_parts.push(sample.soft);
            log_soft_blocks.push(sample.log_soft);
        }
        Ok(Reconstruction {
            hard: tape.concat_cols(&hard_parts)?,
            soft: tape.concat_cols(&soft_parts)?,
            log_soft_blocks,
        })
    }
}
