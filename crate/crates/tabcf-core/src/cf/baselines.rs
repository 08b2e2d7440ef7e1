//! Input-space counterfactual baselines.
//!
//! Both methods optimize the encoded row directly against the classifier,
//! with a hinge on the margin plus an L1 distance term. They differ in how
//! they keep categorical blocks legal: the Wachter-style search freezes
//! them at their original values, while the DiCE-like search relaxes them,
//! penalizes block sums that drift from one, and snaps each block back to
//! an exact one-hot after every step. Both project numericals into [0, 1]
//! after each update, so every intermediate row is a legal encoded row.

use super::latent::hinge_yloss;
use super::result::CFResult;
use super::{require_nonnegative, require_positive, CfError};
use crate::autodiff::{argmax, sgd_step, zero_grads, Tape, Tensor};
use crate::blackbox::Classifier;
use crate::dataset::SchemaLayout;

pub const METHOD_WACHTER: &str = "wachter";
pub const METHOD_DICE: &str = "dice_like";

/// Steps the plateau detector looks back over (same rule as the latent
/// search).
const WINDOW: usize = 10;

#[derive(Debug, Clone, Copy)]
pub struct BaselineConfig {
    /// Weight on the L1 distance to the original encoded row.
    pub distance_weight: f64,
    /// Weight on the one-hot sum penalty (DiCE-like search only).
    pub reg_weight: f64,
    pub max_steps: usize,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            distance_weight: 1.0,
            reg_weight: 1.0,
            max_steps: 5000,
            learning_rate: 0.05,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), CfError> {
        require_nonnegative("distance_weight", self.distance_weight)?;
        require_nonnegative("reg_weight", self.reg_weight)?;
        require_positive("learning_rate", self.learning_rate)?;
        require_positive("tolerance", self.tolerance)?;
        if self.max_steps < 1 {
            return Err(CfError::InvalidConfig { field: "max_steps", value: 0.0 });
        }
        Ok(())
    }
}

/// Snaps one categorical block to the exact one-hot of its largest entry;
/// ties go to the lowest index.
pub fn discretize_onehot(block: &[f64]) -> Vec<f64> {
    assert!(!block.is_empty(), "categorical block must be non-empty");
    let mut out = vec![0.0; block.len()];
    out[argmax(block)] = 1.0;
    out
}

/// How far a relaxed block's sum sits from one: |Σ block − 1|.
pub fn one_hot_penalty(block: &[f64]) -> f64 {
    (block.iter().sum::<f64>() - 1.0).abs()
}

fn plateaued(history: &[f64], tolerance: f64) -> bool {
    if history.len() <= WINDOW {
        return false;
    }
    let now = history[history.len() - 1];
    let old = history[history.len() - 1 - WINDOW];
    (now - old).abs() / old.abs().max(1e-12) < tolerance
}

/// Wachter-style search: gradient descent on the numerical block only,
/// with every categorical feature clamped to its original value and
/// numericals clipped to [0, 1] after each step. On a classifier that only
/// reads categorical features this can never flip the decision, which is
/// the point of carrying it in the comparison.
pub fn wachter_generate(
    clf: &Classifier,
    layout: &SchemaLayout,
    instance_id: u64,
    x0_row: &[f64],
    cfg: &BaselineConfig,
) -> Result<CFResult, CfError> {
    cfg.validate()?;
    if clf.predict_class(x0_row)? == 1 {
        return Err(CfError::AlreadyTargetClass { instance_id });
    }
    let n_num = layout.n_num;
    if n_num == 0 {
        // nothing is free to move; the row can never change
        return Ok(CFResult {
            instance_id,
            method: METHOD_WACHTER.to_string(),
            x0: x0_row.to_vec(),
            x_cf: x0_row.to_vec(),
            valid: false,
            steps_used: 0,
            loss_validity: hinge_yloss(clf.predict_logit(x0_row)?),
            loss_input_proximity: 0.0,
            loss_latent_proximity: 0.0,
            z_path_length: 0.0,
        });
    }
    let x_num = Tensor::param(vec![1, n_num], x0_row[..n_num].to_vec())?;
    let cat_tail = x0_row[n_num..].to_vec();
    let x_cat = if cat_tail.is_empty() {
        None
    } else {
        Some(Tensor::from_vec(vec![1, cat_tail.len()], cat_tail.clone())?)
    };
    let x0_t = Tensor::from_vec(vec![1, x0_row.len()], x0_row.to_vec())?;

    let mut history = Vec::new();
    let mut steps_used = 0;
    let (mut hinge_v, mut l1_v) = (0.0, 0.0);
    for step in 1..=cfg.max_steps {
        let mut tape = Tape::new();
        let x_full = match &x_cat {
            Some(cat) => tape.concat_cols(&[x_num.clone(), cat.clone()])?,
            None => x_num.clone(),
        };
        let logit = clf.logit_on_tape(&mut tape, &x_full)?;
        let margin = tape.affine(&logit, -1.0, 1.0);
        let hinge = tape.relu(&margin);
        let dif = tape.sub(&x0_t, &x_full)?;
        let absdif = tape.abs(&dif);
        let l1 = tape.sum(&absdif);
        let wl1 = tape.scale(&l1, cfg.distance_weight);
        let total = tape.add(&hinge, &wl1)?;

        hinge_v = hinge.item();
        l1_v = l1.item();
        history.push(total.item());
        steps_used = step;
        let reached = logit.item() >= 0.0;
        if plateaued(&history, cfg.tolerance) && reached {
            break;
        }
        tape.backward(&total)?;
        sgd_step(&[&x_num], cfg.learning_rate)?;
        zero_grads(&[&x_num]);
        let clipped: Vec<f64> = x_num.to_vec().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        x_num.set_values(clipped)?;
    }

    let mut x_cf = x_num.to_vec();
    x_cf.extend_from_slice(&cat_tail);
    let valid = clf.predict_class(&x_cf)? == 1;
    Ok(CFResult {
        instance_id,
        method: METHOD_WACHTER.to_string(),
        x0: x0_row.to_vec(),
        x_cf,
        valid,
        steps_used,
        loss_validity: hinge_v,
        loss_input_proximity: l1_v,
        loss_latent_proximity: 0.0,
        z_path_length: 0.0,
    })
}

/// DiCE-like search: gradient descent on the full encoded vector with a
/// per-block penalty |Σ block − 1| keeping relaxed one-hots near the
/// simplex, then argmax discretization of every categorical block after
/// each step. A gradient update smaller than the gap between the top two
/// block entries is undone by the discretization — the failure mode this
/// baseline exists to demonstrate.
pub fn dice_like_generate(
    clf: &Classifier,
    layout: &SchemaLayout,
    instance_id: u64,
    x0_row: &[f64],
    cfg: &BaselineConfig,
) -> Result<CFResult, CfError> {
    cfg.validate()?;
    if clf.predict_class(x0_row)? == 1 {
        return Err(CfError::AlreadyTargetClass { instance_id });
    }
    let x = Tensor::param(vec![1, x0_row.len()], x0_row.to_vec())?;
    let x0_t = Tensor::from_vec(vec![1, x0_row.len()], x0_row.to_vec())?;
    let n_cat = layout.cat_sizes.len();

    let mut history = Vec::new();
    let mut steps_used = 0;
    let (mut hinge_v, mut l1_v) = (0.0, 0.0);
    for step in 1..=cfg.max_steps {
        let mut tape = Tape::new();
        let logit = clf.logit_on_tape(&mut tape, &x)?;
        let margin = tape.affine(&logit, -1.0, 1.0);
        let hinge = tape.relu(&margin);
        let dif = tape.sub(&x0_t, &x)?;
        let absdif = tape.abs(&dif);
        let l1 = tape.sum(&absdif);
        let wl1 = tape.scale(&l1, cfg.distance_weight);
        let mut total = tape.add(&hinge, &wl1)?;
        let mut reg_acc: Option<Tensor> = None;
        for i in 0..n_cat {
            let block = layout.cat_block(i);
            let sl = tape.slice_cols(&x, block.start, block.len())?;
            let s = tape.sum(&sl);
            let off = tape.affine(&s, 1.0, -1.0);
            let pen = tape.abs(&off);
            reg_acc = Some(match reg_acc {
                None => pen,
                Some(acc) => tape.add(&acc, &pen)?,
            });
        }
        if let Some(reg) = reg_acc {
            let wreg = tape.scale(&reg, cfg.reg_weight);
            total = tape.add(&total, &wreg)?;
        }

        hinge_v = hinge.item();
        l1_v = l1.item();
        history.push(total.item());
        steps_used = step;
        let reached = logit.item() >= 0.0;
        if plateaued(&history, cfg.tolerance) && reached {
            break;
        }
        tape.backward(&total)?;
        sgd_step(&[&x], cfg.learning_rate)?;
        zero_grads(&[&x]);
        let mut v = x.to_vec();
        for e in v[..layout.n_num].iter_mut() {
            *e = e.clamp(0.0, 1.0);
        }
        for i in 0..n_cat {
            let block = layout.cat_block(i);
            let snapped = discretize_onehot(&v[block.clone()]);
            v[block].copy_from_slice(&snapped);
        }
        x.set_values(v)?;
    }

    let x_cf = x.to_vec();
    let valid = clf.predict_class(&x_cf)? == 1;
    Ok(CFResult {
        instance_id,
        method: METHOD_DICE.to_string(),
        x0: x0_row.to_vec(),
        x_cf,
        valid,
        steps_used,
        loss_validity: hinge_v,
        loss_input_proximity: l1_v,
        loss_latent_proximity: 0.0,
        z_path_length: 0.0,
    })
}
