//! Evaluation of counterfactual result sets.
//!
//! All metrics operate in input space on (original, counterfactual) row
//! pairs. Validity is always recomputed from the classifier rather than
//! trusted from result flags. Sparsity, proximity, and utilization are
//! defined over the valid counterfactuals only; when a metric's
//! denominator is empty (no valid counterfactuals, or no features of the
//! requested kind), it is reported as not applicable (`None`, rendered as
//! "-") instead of a number.

use crate::blackbox::{BlackboxError, Classifier};
use crate::cf::CFResult;
use crate::dataset::{Preprocessor, SchemaLayout};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Numerical features whose encoded values move by no more than this are
/// counted as unchanged; continuous optimization perturbs every coordinate
/// a little, so an exact-zero criterion would be vacuous.
pub const DEFAULT_EPS_NUM: f64 = 1e-4;

#[derive(Debug)]
pub enum MetricsError {
    EmptyResultSet,
    WidthMismatch { expected: usize, found: usize },
    Blackbox(BlackboxError),
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::EmptyResultSet => write!(f, "metrics need at least one result"),
            MetricsError::WidthMismatch { expected, found } => {
                write!(f, "row width {found} does not match the schema width {expected}")
            }
            MetricsError::Blackbox(e) => write!(f, "classifier failure: {e}"),
        }
    }
}

impl std::error::Error for MetricsError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            MetricsError::Blackbox(e) => Some(e),
            _ => None,
        }
    }
}

impl From<BlackboxError> for MetricsError {
    fn from(e: BlackboxError) -> MetricsError {
        MetricsError::Blackbox(e)
    }
}

/// Per-feature changed/unchanged indicators for one row pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeMask {
    pub numerical: Vec<bool>,
    pub categorical: Vec<bool>,
}

/// Feature kinds a sparsity query can ask about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

/// Builds the change mask for one (original, counterfactual) pair of
/// encoded rows. A categorical feature counts as changed exactly when its
/// one-hot argmax differs; a numerical feature when the encoded values
/// differ by more than `eps_num`.
pub fn change_mask(
    layout: &SchemaLayout,
    x0: &[f64],
    x_cf: &[f64],
    eps_num: f64,
) -> Result<ChangeMask, MetricsError> {
    for row in [x0, x_cf] {
        if row.len() != layout.k {
            return Err(MetricsError::WidthMismatch { expected: layout.k, found: row.len() });
        }
    }
    let numerical = (0..layout.n_num)
        .map(|i| (x0[i] - x_cf[i]).abs() > eps_num)
        .collect();
    let categorical = (0..layout.cat_sizes.len())
        .map(|i| {
            let r = layout.cat_block(i);
            crate::autodiff::argmax(&x0[r.clone()]) != crate::autodiff::argmax(&x_cf[r])
        })
        .collect();
    Ok(ChangeMask { numerical, categorical })
}

/// Fraction of counterfactuals the classifier assigns class 1, recomputed
/// from scratch.
pub fn validity(clf: &Classifier, results: &[CFResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResultSet);
    }
    let mut n_val = 0usize;
    for r in results {
        if clf.predict_class(&r.x_cf)? == 1 {
            n_val += 1;
        }
    }
    Ok(n_val as f64 / results.len() as f64)
}

fn kind_slice(mask: &ChangeMask, kind: FeatureKind) -> &[bool] {
    match kind {
        FeatureKind::Numerical => &mask.numerical,
        FeatureKind::Categorical => &mask.categorical,
    }
}

/// Mean fraction of features of the given kind changed per mask. `None`
/// when there are no masks (no valid counterfactuals) or no features of
/// that kind.
pub fn sparsity(masks: &[ChangeMask], kind: FeatureKind) -> Option<f64> {
    if masks.is_empty() {
        return None;
    }
    let width = kind_slice(&masks[0], kind).len();
    if width == 0 {
        return None;
    }
    let total: f64 = masks
        .iter()
        .map(|m| {
            let s = kind_slice(m, kind);
            s.iter().filter(|&&c| c).count() as f64 / s.len() as f64
        })
        .sum();
    Some(total / masks.len() as f64)
}

/// Mean L1 distance over standard-normalized numerical features, per
/// valid pair: encoded values are mapped back to raw units, then
/// standardized with the train-fitted mean and std.
pub fn proximity_num(
    pairs: &[(&[f64], &[f64])],
    layout: &SchemaLayout,
    pre: &Preprocessor,
) -> Option<f64> {
    if pairs.is_empty() || layout.n_num == 0 {
        return None;
    }
    let total: f64 = pairs
        .iter()
        .map(|(x0, x_cf)| {
            (0..layout.n_num)
                .map(|i| {
                    let a = pre.standardize(i, pre.decode_numerical(i, x0[i]));
                    let b = pre.standardize(i, pre.decode_numerical(i, x_cf[i]));
                    (a - b).abs()
                })
                .sum::<f64>()
        })
        .sum();
    Some(total / pairs.len() as f64)
}

/// Per-feature change rates across the masks, split by kind. Empty mask
/// lists yield all-zero rates.
pub fn feature_utilization(
    masks: &[ChangeMask],
    layout: &SchemaLayout,
) -> (Vec<f64>, Vec<f64>) {
    let n = masks.len() as f64;
    let mut num = vec![0.0; layout.n_num];
    let mut cat = vec![0.0; layout.cat_sizes.len()];
    for m in masks {
        for (i, &c) in m.numerical.iter().enumerate() {
            if c {
                num[i] += 1.0;
            }
        }
        for (i, &c) in m.categorical.iter().enumerate() {
            if c {
                cat[i] += 1.0;
            }
        }
    }
    if n > 0.0 {
        for v in num.iter_mut().chain(cat.iter_mut()) {
            *v /= n;
        }
    }
    (num, cat)
}

/// Full evaluation of one method's result set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub n: usize,
    pub n_val: usize,
    pub validity: f64,
    pub sparsity_cat: Option<f64>,
    pub sparsity_num: Option<f64>,
    pub proximity_num: Option<f64>,
    /// Change rate of each numerical feature across valid counterfactuals.
    pub utilization_num: Vec<f64>,
    /// Change rate of each categorical feature across valid
    /// counterfactuals.
    pub utilization_cat: Vec<f64>,
    pub eps_num: f64,
}

/// Computes every metric for one result set. Validity is recomputed from
/// the classifier; the per-pair metrics run over the recomputed-valid
/// subset only.
pub fn evaluate(
    clf: &Classifier,
    layout: &SchemaLayout,
    pre: &Preprocessor,
    results: &[CFResult],
    eps_num: f64,
) -> Result<MetricsReport, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResultSet);
    }
    let method = results[0].method.clone();
    let mut masks = Vec::new();
    let mut pairs: Vec<(&[f64], &[f64])> = Vec::new();
    for r in results {
        if clf.predict_class(&r.x_cf)? == 1 {
            masks.push(change_mask(layout, &r.x0, &r.x_cf, eps_num)?);
            pairs.push((&r.x0, &r.x_cf));
        }
    }
    let n_val = masks.len();
    let (utilization_num, utilization_cat) = feature_utilization(&masks, layout);
    Ok(MetricsReport {
        method,
        n: results.len(),
        n_val,
        validity: n_val as f64 / results.len() as f64,
        sparsity_cat: sparsity(&masks, FeatureKind::Categorical),
        sparsity_num: sparsity(&masks, FeatureKind::Numerical),
        proximity_num: proximity_num(&pairs, layout, pre),
        utilization_num,
        utilization_cat,
        eps_num,
    })
}
