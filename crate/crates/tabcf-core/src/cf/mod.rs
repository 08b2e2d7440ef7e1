//! Counterfactual search.
//!
//! [`latent`] runs gradient descent in the latent space of a trained
//! generative model, so every candidate is decoded through the constraint-
//! preserving decoder. [`baselines`] holds two input-space optimizers used
//! for comparison: a Wachter-style search that clamps categorical features,
//! and a DiCE-like search that relaxes one-hot blocks with a sum-to-one
//! penalty and re-discretizes after every step. [`result`] defines the
//! shared result record and its line-delimited JSON serialization.

pub mod baselines;
pub mod latent;
pub mod result;

use crate::autodiff::AutodiffError;
use crate::blackbox::BlackboxError;
use crate::dataset::DatasetError;
use crate::vae::VaeError;
use std::fmt;

pub use baselines::{
    dice_like_generate, discretize_onehot, one_hot_penalty, wachter_generate, BaselineConfig,
    METHOD_DICE, METHOD_WACHTER,
};
pub use latent::{batch_generate, generate_cf, hinge_yloss, CfConfig, METHOD_TABCF};
pub use result::{
    read_records, record_to_result, records_to_string, result_to_record, write_records, CFResult,
    CfRecord,
};

#[derive(Debug)]
pub enum CfError {
    /// The instance is classified 1 before any search; there is nothing to
    /// flip.
    AlreadyTargetClass { instance_id: u64 },
    InvalidConfig { field: &'static str, value: f64 },
    Io { path: String, source: std::io::Error },
    Record(String),
    Vae(VaeError),
    Blackbox(BlackboxError),
    Autodiff(AutodiffError),
    Dataset(DatasetError),
}

impl fmt::Display for CfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CfError::AlreadyTargetClass { instance_id } => {
                write!(f, "instance {instance_id} rejected: already target class")
            }
            CfError::InvalidConfig { field, value } => {
                write!(f, "invalid search config: {field} = {value}")
            }
            CfError::Io { path, source } => write!(f, "io error on {path}: {source}"),
            CfError::Record(msg) => write!(f, "bad result record: {msg}"),
            CfError::Vae(e) => write!(f, "generative model failure: {e}"),
            CfError::Blackbox(e) => write!(f, "classifier failure: {e}"),
            CfError::Autodiff(e) => write!(f, "autodiff failure: {e}"),
            CfError::Dataset(e) => write!(f, "dataset failure: {e}"),
        }
    }
}

impl std::error::Error for CfError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CfError::Io { source, .. } => Some(source),
            CfError::Vae(e) => Some(e),
            CfError::Blackbox(e) => Some(e),
            CfError::Autodiff(e) => Some(e),
            CfError::Dataset(e) => Some(e),
            _ => None,
        }
    }
}

impl From<VaeError> for CfError {
    fn from(e: VaeError) -> CfError {
        CfError::Vae(e)
    }
}

impl From<BlackboxError> for CfError {
    fn from(e: BlackboxError) -> CfError {
        CfError::Blackbox(e)
    }
}

impl From<AutodiffError> for CfError {
    fn from(e: AutodiffError) -> CfError {
        CfError::Autodiff(e)
    }
}

impl From<DatasetError> for CfError {
    fn from(e: DatasetError) -> CfError {
        CfError::Dataset(e)
    }
}

fn require_nonnegative(field: &'static str, value: f64) -> Result<(), CfError> {
    if !value.is_finite() || value < 0.0 {
        return Err(CfError::InvalidConfig { field, value });
    }
    Ok(())
}

fn require_positive(field: &'static str, value: f64) -> Result<(), CfError> {
    if !value.is_finite() || value <= 0.0 {
        return Err(CfError::InvalidConfig { field, value });
    }
    Ok(())
}
