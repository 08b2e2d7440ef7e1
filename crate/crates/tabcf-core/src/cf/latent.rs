//! Gradient-based counterfactual search in the latent space.
//!
//! The search starts from the encoding of the factual row and descends the
//! three-term objective: a hinge on the classifier margin of the hard
//! decode, an L1 pull toward the original encoded row through the soft
//! (differentiable) decode, and a Euclidean leash on the latent
//! displacement. Because every candidate passes through the decoder, the
//! returned row satisfies the tabular constraints with no post-processing.

use super::result::CFResult;
use super::{require_nonnegative, require_positive, CfError};
use crate::autodiff::{sgd_step, zero_grads, Tape, Tensor};
use crate::blackbox::Classifier;
use crate::rngutil::{derive_rng, TAG_CF_LATENT};
use crate::tokenizer::NoiseMode;
use crate::vae::VaeModel;
use rand::Rng;

pub const METHOD_TABCF: &str = "tabcf";

/// Steps the plateau detector looks back over.
const WINDOW: usize = 10;

#[derive(Debug, Clone, Copy)]
pub struct CfConfig {
    /// Weight on the L1 distance between the original row and the soft
    /// decode.
    pub lambda_input: f64,
    /// Weight on the Euclidean distance between the current and initial
    /// latent codes.
    pub lambda_latent: f64,
    pub max_steps: usize,
    pub learning_rate: f64,
    /// Relative total-loss change over a 10-step window below which the
    /// loss counts as converged.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for CfConfig {
    fn default() -> Self {
        CfConfig {
            lambda_input: 1.0,
            lambda_latent: 1.0,
            max_steps: 5000,
            learning_rate: 0.05,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

impl CfConfig {
    pub fn validate(&self) -> Result<(), CfError> {
        require_nonnegative("lambda_input", self.lambda_input)?;
        require_nonnegative("lambda_latent", self.lambda_latent)?;
        require_positive("learning_rate", self.learning_rate)?;
        require_positive("tolerance", self.tolerance)?;
        if self.max_steps < 1 {
            return Err(CfError::InvalidConfig { field: "max_steps", value: 0.0 });
        }
        Ok(())
    }
}

/// Penalty on the classifier margin: zero once the log-odds clear 1,
/// growing linearly below.
pub fn hinge_yloss(logit: f64) -> f64 {
    (1.0 - logit).max(0.0)
}

struct StepLoss {
    total: Tensor,
    hinge: f64,
    l1: f64,
    l2: f64,
    hard_row: Vec<f64>,
}

/// One forward pass of the objective at the current z. The hinge reads the
/// hard decode (straight-through, so it still carries gradient); the L1
/// term reads the soft decode.
fn step_loss(
    model: &VaeModel,
    clf: &Classifier,
    tape: &mut Tape,
    z: &Tensor,
    z0: &Tensor,
    x0: &Tensor,
    cfg: &CfConfig,
    rng: &mut impl Rng,
) -> Result<StepLoss, CfError> {
    let recon = model.decode_on_tape(tape, z, 1, NoiseMode::Seeded, rng)?;
    let hard_row = recon.hard.to_vec();
    let logit = clf.logit_on_tape(tape, &recon.hard)?;
    let margin = tape.affine(&logit, -1.0, 1.0);
    let hinge = tape.relu(&margin);
    let dif = tape.sub(x0, &recon.soft)?;
    let absdif = tape.abs(&dif);
    let l1 = tape.sum(&absdif);
    let dz = tape.sub(z0, z)?;
    let sq = tape.mul(&dz, &dz)?;
    let ssq = tape.sum(&sq);
    let l2 = tape.sqrt(&ssq)?;
    let wl1 = tape.scale(&l1, cfg.lambda_input);
    let wl2 = tape.scale(&l2, cfg.lambda_latent);
    let prox = tape.add(&wl1, &wl2)?;
    let total = tape.add(&hinge, &prox)?;
    Ok(StepLoss {
        hinge: hinge.item(),
        l1: l1.item(),
        l2: l2.item(),
        hard_row,
        total,
    })
}

/// Whether the loss history has flattened out relative to `WINDOW` steps
/// ago.
fn plateaued(history: &[f64], tolerance: f64) -> bool {
    if history.len() <= WINDOW {
        return false;
    }
    let now = history[history.len() - 1];
    let old = history[history.len() - 1 - WINDOW];
    (now - old).abs() / old.abs().max(1e-12) < tolerance
}

/// Searches for a counterfactual for one instance currently classified 0.
///
/// Stops when the loss has plateaued *and* the hard decode reaches class 1,
/// or after `max_steps` iterations. The returned row is the zero-noise
/// (mode) decode of the final latent code, so replaying with the same seed
/// reproduces the result bit for bit.
pub fn generate_cf(
    model: &VaeModel,
    clf: &Classifier,
    instance_id: u64,
    x0_row: &[f64],
    cfg: &CfConfig,
) -> Result<CFResult, CfError> {
    cfg.validate()?;
    if clf.predict_class(x0_row)? == 1 {
        return Err(CfError::AlreadyTargetClass { instance_id });
    }
    let latent = model.encode_row(x0_row, None)?;
    let n_tokens = model.layout.n_features();
    let d_z = model.arch.d_z;
    let z = Tensor::param(vec![n_tokens, d_z], latent.z.clone())?;
    let z0 = Tensor::from_vec(vec![n_tokens, d_z], latent.z.clone())?;
    let x0_t = Tensor::from_vec(vec![1, x0_row.len()], x0_row.to_vec())?;
    let mut rng = derive_rng(cfg.seed, &[TAG_CF_LATENT, instance_id]);

    let mut history: Vec<f64> = Vec::with_capacity(cfg.max_steps.min(4096));
    let mut steps_used = 0;
    let mut path_length = 0.0;
    let (mut hinge_v, mut l1_v, mut l2_v) = (0.0, 0.0, 0.0);

    for step in 1..=cfg.max_steps {
        let mut tape = Tape::new();
        let loss = step_loss(model, clf, &mut tape, &z, &z0, &x0_t, cfg, &mut rng)?;
        hinge_v = loss.hinge;
        l1_v = loss.l1;
        l2_v = loss.l2;
        history.push(loss.total.item());
        steps_used = step;
        let reached = clf.predict_class(&loss.hard_row)? == 1;
        if plateaued(&history, cfg.tolerance) && reached {
            break;
        }
        tape.backward(&loss.total)?;
        let before = z.to_vec();
        sgd_step(&[&z], cfg.learning_rate)?;
        zero_grads(&[&z]);
        path_length += {
            let after = z.values();
            before
                .iter()
                .zip(after.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
    }

    let x_cf = model.decode_row(&z.to_vec(), NoiseMode::Zero, &mut rng)?;
    let valid = clf.predict_class(&x_cf)? == 1;
    Ok(CFResult {
        instance_id,
        method: METHOD_TABCF.to_string(),
        x0: x0_row.to_vec(),
        x_cf,
        valid,
        steps_used,
        loss_validity: hinge_v,
        loss_input_proximity: l1_v,
        loss_latent_proximity: l2_v,
        z_path_length: path_length,
    })
}

/// Runs [`generate_cf`] over a batch, preserving input order. Each
/// instance derives its own noise stream from `(seed, instance_id)`, so
/// results do not depend on processing order. Both models are frozen up
/// front and the classifier fingerprint is checked afterwards.
pub fn batch_generate(
    model: &VaeModel,
    clf: &Classifier,
    instances: &[(u64, Vec<f64>)],
    cfg: &CfConfig,
) -> Result<Vec<CFResult>, CfError> {
    model.freeze();
    clf.freeze();
    let checksum = clf.param_checksum();
    let mut out = Vec::with_capacity(instances.len());
    for (id, row) in instances {
        out.push(generate_cf(model, clf, *id, row, cfg)?);
    }
    assert_eq!(
        checksum,
        clf.param_checksum(),
        "classifier must stay frozen during counterfactual search"
    );
    Ok(out)
}
