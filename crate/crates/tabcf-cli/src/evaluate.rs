//! `tabcf evaluate`: score result files into per-method metric rows,
//! optionally averaged across files, in machine- and human-readable form.

use crate::artifacts::{load_data, load_models, Paths};
use crate::config::RunConfig;
use crate::report::{aligned_table, fmt_opt};
use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use tabcf_core::cf::{read_records, record_to_result, CFResult};
use tabcf_core::metrics::{evaluate, MetricsReport, DEFAULT_EPS_NUM};

#[derive(Debug, Serialize)]
struct EvaluationRow {
    file: String,
    #[serde(flatten)]
    report: MetricsReport,
}

#[derive(Debug, Serialize)]
struct AverageRow {
    method: String,
    files: usize,
    n: usize,
    n_val: usize,
    validity: f64,
    sparsity_cat: Option<f64>,
    sparsity_num: Option<f64>,
    proximity_num: Option<f64>,
}

fn file_stem(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Mean over the entries that are present; `None` when none are.
fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let some: Vec<f64> = values.flatten().collect();
    if some.is_empty() {
        None
    } else {
        Some(some.iter().sum::<f64>() / some.len() as f64)
    }
}

pub fn run(cfg: &RunConfig, files: &[PathBuf], average: bool) -> Result<()> {
    let paths = Paths::new(&cfg.out);
    paths.prepare(cfg)?;
    let (schema, _table) = load_data(cfg)?;
    let models = load_models(&paths.models(), &schema)?;
    let hash = schema.schema_hash();

    let mut rows: Vec<EvaluationRow> = Vec::new();
    for file in files {
        let records = read_records(file)
            .with_context(|| format!("cannot read result file {}", file.display()))?;
        if records.is_empty() {
            bail!("result file {} holds no records", file.display());
        }
        for r in &records {
            if r.schema_hash != hash {
                bail!(
                    "result file {} was produced under schema hash {:016x}, but the configured \
                     dataset hashes to {hash:016x}",
                    file.display(),
                    r.schema_hash
                );
            }
        }
        // one row per method found in the file, in first-seen order
        let mut methods: Vec<String> = Vec::new();
        for r in &records {
            if !methods.contains(&r.method) {
                methods.push(r.method.clone());
            }
        }
        for method in methods {
            let results: Vec<CFResult> = records
                .iter()
                .filter(|r| r.method == method)
                .map(record_to_result)
                .collect();
            let report = evaluate(
                &models.clf,
                schema.layout(),
                &models.pre,
                &results,
                DEFAULT_EPS_NUM,
            )
            .with_context(|| format!("cannot evaluate {}", file.display()))?;
            rows.push(EvaluationRow { file: file_stem(file), report });
        }
    }

    let mut averages: Vec<AverageRow> = Vec::new();
    if average {
        let mut methods: Vec<String> = Vec::new();
        for row in &rows {
            if !methods.contains(&row.report.method) {
                methods.push(row.report.method.clone());
            }
        }
        for method in methods {
            let group: Vec<&MetricsReport> = rows
                .iter()
                .filter(|r| r.report.method == method)
                .map(|r| &r.report)
                .collect();
            averages.push(AverageRow {
                method,
                files: group.len(),
                n: group.iter().map(|g| g.n).sum(),
                n_val: group.iter().map(|g| g.n_val).sum(),
                validity: group.iter().map(|g| g.validity).sum::<f64>() / group.len() as f64,
                sparsity_cat: mean_opt(group.iter().map(|g| g.sparsity_cat)),
                sparsity_num: mean_opt(group.iter().map(|g| g.sparsity_num)),
                proximity_num: mean_opt(group.iter().map(|g| g.proximity_num)),
            });
        }
    }

    let mut text = format!("numerical change tolerance eps_num = {DEFAULT_EPS_NUM:e}\n\n");
    let headers = [
        "file", "method", "n", "n_val", "validity", "prox_num", "spars_num", "spars_cat",
    ];
    let table_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.file.clone(),
                r.report.method.clone(),
                r.report.n.to_string(),
                r.report.n_val.to_string(),
                format!("{:.4}", r.report.validity),
                fmt_opt(r.report.proximity_num),
                fmt_opt(r.report.sparsity_num),
                fmt_opt(r.report.sparsity_cat),
            ]
        })
        .collect();
    text.push_str(&aligned_table(&headers, &table_rows));
    if !averages.is_empty() {
        text.push_str("\naveraged per method across files (arithmetic mean per cell)\n");
        let avg_headers = [
            "method", "files", "n", "n_val", "validity", "prox_num", "spars_num", "spars_cat",
        ];
        let avg_rows: Vec<Vec<String>> = averages
            .iter()
            .map(|a| {
                vec![
                    a.method.clone(),
                    a.files.to_string(),
                    a.n.to_string(),
                    a.n_val.to_string(),
                    format!("{:.4}", a.validity),
                    fmt_opt(a.proximity_num),
                    fmt_opt(a.sparsity_num),
                    fmt_opt(a.sparsity_cat),
                ]
            })
            .collect();
        text.push_str(&aligned_table(&avg_headers, &avg_rows));
    }
    print!("{text}");
    std::fs::write(paths.evaluation_txt(), &text)
        .with_context(|| format!("cannot write {}", paths.evaluation_txt().display()))?;

    let json = serde_json::json!({
        "eps_num": DEFAULT_EPS_NUM,
        "rows": rows,
        "averages": averages,
    });
    std::fs::write(
        paths.evaluation_json(),
        serde_json::to_string_pretty(&json).expect("serializable by construction"),
    )
    .with_context(|| format!("cannot write {}", paths.evaluation_json().display()))?;
    println!("reports in {} and {}", paths.evaluation_txt().display(), paths.evaluation_json().display());
    Ok(())
}
