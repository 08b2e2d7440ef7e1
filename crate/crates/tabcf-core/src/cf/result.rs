//! Counterfactual result records and their line-delimited JSON form.

use super::CfError;
use crate::dataset::{ColumnKind, Preprocessor, RawRow, TableSchema};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Outcome of one counterfactual search, in encoded feature space.
///
/// The loss components are the unweighted values of the three terms at the
/// final evaluated step: `loss_validity` is the hinge on the classifier
/// margin, `loss_input_proximity` the L1 distance between the original row
/// and the (soft) candidate, `loss_latent_proximity` the Euclidean distance
/// to the initial latent code. Input-space methods report zero for the
/// latent term and the path length.
#[derive(Debug, Clone, PartialEq)]
pub struct CFResult {
    pub instance_id: u64,
    pub method: String,
    /// Original row, encoded (scaled numericals then one-hot blocks).
    pub x0: Vec<f64>,
    /// Returned counterfactual, encoded; always constraint-satisfying.
    pub x_cf: Vec<f64>,
    /// True iff the classifier assigns class 1 to `x_cf` at return time.
    pub valid: bool,
    /// Optimization iterations performed before stopping.
    pub steps_used: usize,
    pub loss_validity: f64,
    pub loss_input_proximity: f64,
    pub loss_latent_proximity: f64,
    /// Accumulated length of the latent trajectory (sum of per-step
    /// displacement norms); zero for input-space methods.
    pub z_path_length: f64,
}

/// One line of the results file. Raw-space rows are rendered in declared
/// column order (numbers for numerical columns, category names for
/// categorical ones); the encoded vectors are carried alongside so that
/// evaluation does not depend on re-encoding round-trips. Each line also
/// carries the schema fingerprint it was produced under, so evaluation can
/// refuse results from a different dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfRecord {
    pub instance_id: u64,
    pub method: String,
    pub schema_hash: u64,
    pub valid: bool,
    pub steps_used: usize,
    pub loss_validity: f64,
    pub loss_input_proximity: f64,
    pub loss_latent_proximity: f64,
    pub z_path_length: f64,
    pub original_raw: Vec<serde_json::Value>,
    pub counterfactual_raw: Vec<serde_json::Value>,
    pub original_encoded: Vec<f64>,
    pub counterfactual_encoded: Vec<f64>,
}

fn render_raw(schema: &TableSchema, raw: &RawRow) -> Vec<serde_json::Value> {
    schema
        .declaration()
        .iter()
        .map(|&(kind, idx)| match kind {
            ColumnKind::Numerical => serde_json::Value::from(raw.numericals[idx]),
            ColumnKind::Categorical => {
                serde_json::Value::String(schema.domain(idx)[raw.categoricals[idx]].clone())
            }
        })
        .collect()
}

pub fn result_to_record(
    result: &CFResult,
    schema: &TableSchema,
    pre: &Preprocessor,
) -> Result<CfRecord, CfError> {
    let raw0 = pre.decode_row(schema, &result.x0)?;
    let raw1 = pre.decode_row(schema, &result.x_cf)?;
    Ok(CfRecord {
        instance_id: result.instance_id,
        method: result.method.clone(),
        schema_hash: schema.schema_hash(),
        valid: result.valid,
        steps_used: result.steps_used,
        loss_validity: result.loss_validity,
        loss_input_proximity: result.loss_input_proximity,
        loss_latent_proximity: result.loss_latent_proximity,
        z_path_length: result.z_path_length,
        original_raw: render_raw(schema, &raw0),
        counterfactual_raw: render_raw(schema, &raw1),
        original_encoded: result.x0.clone(),
        counterfactual_encoded: result.x_cf.clone(),
    })
}

pub fn record_to_result(record: &CfRecord) -> CFResult {
    CFResult {
        instance_id: record.instance_id,
        method: record.method.clone(),
        x0: record.original_encoded.clone(),
        x_cf: record.counterfactual_encoded.clone(),
        valid: record.valid,
        steps_used: record.steps_used,
        loss_validity: record.loss_validity,
        loss_input_proximity: record.loss_input_proximity,
        loss_latent_proximity: record.loss_latent_proximity,
        z_path_length: record.z_path_length,
    }
}

pub fn records_to_string(records: &[CfRecord]) -> Result<String, CfError> {
    let mut out = String::new();
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| CfError::Record(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[CfRecord]) -> Result<(), CfError> {
    let text = records_to_string(records)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|source| CfError::Io { path: path.display().to_string(), source })
}

pub fn read_records(path: &Path) -> Result<Vec<CfRecord>, CfError> {
    let file = std::fs::File::open(path)
        .map_err(|source| CfError::Io { path: path.display().to_string(), source })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CfError::Io { path: path.display().to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CfRecord = serde_json::from_str(&line)
            .map_err(|e| CfError::Record(format!("line {}: {e}", i + 1)))?;
        out.push(record);
    }
    Ok(out)
}
