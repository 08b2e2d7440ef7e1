//! The differentiable black-box classifier every counterfactual method
//! interrogates: a small feed-forward network over the encoded row,
//! emitting one pre-sigmoid logit for the positive class. Trained once,
//! then frozen — counterfactual search reads it but never writes it, and
//! a parameter checksum lets callers verify that.

use crate::autodiff::{clip_grad_norm, sgd_step, AutodiffError, Tape, Tensor};
use crate::rngutil::{derive_rng, TAG_CLF_INIT, TAG_CLF_TRAIN};
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};
use std::fmt;

#[derive(Debug)]
pub enum BlackboxError {
    EmptyTrainSet,
    /// All labels identical: nothing to separate.
    SingleClass { label: u8 },
    /// Every feature column is constant: no signal to train on.
    DegenerateFeatures,
    WidthMismatch { expected: usize, found: usize },
    InvalidConfig(String),
    Autodiff(AutodiffError),
}

impl fmt::Display for BlackboxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlackboxError::EmptyTrainSet => write!(f, "classifier training set is empty"),
            BlackboxError::SingleClass { label } => {
                write!(f, "training data holds only class {label}; need both classes")
            }
            BlackboxError::DegenerateFeatures => {
                write!(f, "every feature column is constant; classifier cannot train")
            }
            BlackboxError::WidthMismatch { expected, found } => {
                write!(f, "input width {found} does not match classifier width {expected}")
            }
            BlackboxError::InvalidConfig(msg) => write!(f, "invalid classifier config: {msg}"),
            BlackboxError::Autodiff(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for BlackboxError {}

impl From<AutodiffError> for BlackboxError {
    fn from(e: AutodiffError) -> Self {
        BlackboxError::Autodiff(e)
    }
}

/// Two ReLU hidden layers and a single-logit head.
#[derive(Debug)]
pub struct Classifier {
    pub k: usize,
    pub hidden: usize,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 64,
            hidden: 32,
            seed: 0,
        }
    }
}

/// What the training run measured: accuracy on a held-out tenth of the
/// data (or on the training rows themselves when the set is too small to
/// spare any) and the final epoch's mean loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub held_out_accuracy: f64,
    pub final_loss: f64,
}

impl Classifier {
    pub fn init(k: usize, hidden: usize, seed: u64) -> Classifier {
        let mut rng = derive_rng(seed, &[TAG_CLF_INIT]);
        let mut draw = |shape: Vec<usize>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::param(shape, values).expect("shape/values agree")
        };
        Classifier {
            k,
            hidden,
            w1: draw(vec![k, hidden], k),
            b1: draw(vec![hidden], k),
            w2: draw(vec![hidden, hidden], hidden),
            b2: draw(vec![hidden], hidden),
            w3: draw(vec![hidden, 1], hidden),
            b3: draw(vec![1], hidden),
        }
    }

    pub fn params(&self) -> Vec<Tensor> {
        vec![
            self.w1.clone(), self.b1.clone(),
            self.w2.clone(), self.b2.clone(),
            self.w3.clone(), self.b3.clone(),
        ]
    }

    /// Parameters paired with stable serialization names.
    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        [
            ("w1", &self.w1), ("b1", &self.b1),
            ("w2", &self.w2), ("b2", &self.b2),
            ("w3", &self.w3), ("b3", &self.b3),
        ]
        .into_iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect()
    }

    /// Differentiable logits for a batch `[B, k] -> [B, 1]`; the route the
    /// counterfactual loss takes through the model.
    pub fn logit_on_tape(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, BlackboxError> {
        if x.shape().len() != 2 || x.shape()[1] != self.k {
            return Err(BlackboxError::WidthMismatch {
                expected: self.k,
                found: *x.shape().last().unwrap_or(&0),
            });
        }
        let h = tape.matmul(x, &self.w1)?;
        let h = tape.add(&h, &self.b1)?;
        let h = tape.relu(&h);
        let h = tape.matmul(&h, &self.w2)?;
        let h = tape.add(&h, &self.b2)?;
        let h = tape.relu(&h);
        let out = tape.matmul(&h, &self.w3)?;
        Ok(tape.add(&out, &self.b3)?)
    }

    /// Plain forward pass for one row; no tape, no allocations beyond the
    /// activations. Used for validity checks and test selection.
    pub fn predict_logit(&self, x: &[f64]) -> Result<f64, BlackboxError> {
        if x.len() != self.k {
            return Err(BlackboxError::WidthMismatch { expected: self.k, found: x.len() });
        }
        let w1 = self.w1.values();
        let b1 = self.b1.values();
        let mut h1 = vec![0.0; self.hidden];
        for (j, h) in h1.iter_mut().enumerate() {
            let mut acc = b1[j];
            for (i, &xi) in x.iter().enumerate() {
                acc += xi * w1[i * self.hidden + j];
            }
            *h = acc.max(0.0);
        }
        let w2 = self.w2.values();
        let b2 = self.b2.values();
        let mut h2 = vec![0.0; self.hidden];
        for (j, h) in h2.iter_mut().enumerate() {
            let mut acc = b2[j];
            for (i, &hi) in h1.iter().enumerate() {
                acc += hi * w2[i * self.hidden + j];
            }
            *h = acc.max(0.0);
        }
        let w3 = self.w3.values();
        let mut out = self.b3.values()[0];
        for (i, &hi) in h2.iter().enumerate() {
            out += hi * w3[i];
        }
        Ok(out)
    }

    /// Decision rule: class 1 iff P(y=1|x) >= 1/2, i.e. logit >= 0.
    pub fn predict_class(&self, x: &[f64]) -> Result<u8, BlackboxError> {
        Ok(u8::from(self.predict_logit(x)? >= 0.0))
    }

    /// Drops every parameter out of the gradient flow once training is
    /// done; tape passes through the network then skip parameter
    /// gradients.
    pub fn freeze(&self) {
        for p in [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3] {
            p.set_requires_grad(false);
        }
    }

    /// Fingerprint of all parameter bytes; counterfactual batches record
    /// it before and after to prove the model stayed frozen.
    pub fn param_checksum(&self) -> u64 {
        let mut hasher = Sha256::new();
        for p in self.params() {
            for v in p.values().iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }
}

/// Minibatch SGD on binary cross-entropy (computed in the numerically
/// stable softplus form). A tenth of the rows are held out for the
/// accuracy report; training is deterministic per seed.
pub fn train_classifier(
    rows: &[Vec<f64>],
    labels: &[u8],
    cfg: &ClassifierConfig,
) -> Result<(Classifier, TrainReport), BlackboxError> {
    if rows.is_empty() {
        return Err(BlackboxError::EmptyTrainSet);
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || cfg.hidden == 0 {
        return Err(BlackboxError::InvalidConfig(
            "epochs, batch size, and hidden width must be >= 1".into(),
        ));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(BlackboxError::SingleClass { label: labels[0] });
    }
    let k = rows[0].len();
    if (0..k).all(|j| rows.iter().all(|r| r[j] == rows[0][j])) {
        return Err(BlackboxError::DegenerateFeatures);
    }

    let clf = Classifier::init(k, cfg.hidden, cfg.seed);
    let params = clf.params();
    let param_refs: Vec<&Tensor> = params.iter().collect();
    let mut rng = derive_rng(cfg.seed, &[TAG_CLF_TRAIN]);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng);
    let n_held = rows.len() / 10;
    let (held_out, train_idx) = order.split_at(n_held);
    let train_idx: Vec<usize> = train_idx.to_vec();
    let held_out: Vec<usize> = held_out.to_vec();

    let mut order = train_idx;
    let mut final_loss = f64::INFINITY;
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let mut flat = Vec::with_capacity(b * k);
            let mut y = Vec::with_capacity(b);
            for &i in chunk {
                flat.extend_from_slice(&rows[i]);
                y.push(f64::from(labels[i]));
            }
            let mut tape = Tape::new();
            let x = Tensor::from_vec(vec![b, k], flat)?;
            let logits = clf.logit_on_tape(&mut tape, &x)?;
            // BCE in stable form: mean(softplus(logit) - y * logit)
            let y_t = Tensor::from_vec(vec![b, 1], y)?;
            let sp = tape.softplus(&logits);
            let yl = tape.mul(&logits, &y_t)?;
            let per = tape.sub(&sp, &yl)?;
            let loss = tape.mean(&per);
            let loss_val = loss.item();
            tape.backward(&loss)?;
            clip_grad_norm(&param_refs, 5.0);
            sgd_step(&param_refs, cfg.learning_rate)?;
            epoch_loss += loss_val;
            n_batches += 1;
        }
        final_loss = epoch_loss / n_batches as f64;
    }

    let eval_idx: &[usize] = if held_out.is_empty() { &order } else { &held_out };
    let mut correct = 0usize;
    for &i in eval_idx {
        if clf.predict_class(&rows[i])? == labels[i] {
            correct += 1;
        }
    }
    let report = TrainReport {
        held_out_accuracy: correct as f64 / eval_idx.len() as f64,
        final_loss,
    };
    Ok((clf, report))
}
