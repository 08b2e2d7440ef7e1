//! `tabcf bias-report`: side-by-side per-feature utilization rates across
//! methods, surfacing which feature kinds each search is able (or
//! structurally unable) to change.

use crate::artifacts::{load_data, load_models, Paths};
use crate::config::RunConfig;
use crate::report::{aligned_table, bar, utilization_svg};
use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::path::PathBuf;
use tabcf_core::cf::{read_records, record_to_result, CFResult, METHOD_TABCF};
use tabcf_core::metrics::{evaluate, MetricsReport, DEFAULT_EPS_NUM};

#[derive(Debug, Serialize)]
struct MethodSummary {
    method: String,
    n: usize,
    n_val: usize,
    validity: f64,
    mean_utilization_num: Option<f64>,
    mean_utilization_cat: Option<f64>,
    utilization_num: Vec<f64>,
    utilization_cat: Vec<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn run(cfg: &RunConfig, files: &[PathBuf]) -> Result<()> {
    let paths = Paths::new(&cfg.out);
    paths.prepare(cfg)?;
    let (schema, _table) = load_data(cfg)?;
    let models = load_models(&paths.models(), &schema)?;
    let hash = schema.schema_hash();

    // merge all files, grouping by method in first-seen order
    let mut methods: Vec<String> = Vec::new();
    let mut by_method: Vec<Vec<CFResult>> = Vec::new();
    for file in files {
        let records = read_records(file)
            .with_context(|| format!("cannot read result file {}", file.display()))?;
        for r in &records {
            if r.schema_hash != hash {
                bail!(
                    "result file {} was produced under schema hash {:016x}, but the configured \
                     dataset hashes to {hash:016x}",
                    file.display(),
                    r.schema_hash
                );
            }
            let idx = match methods.iter().position(|m| m == &r.method) {
                Some(i) => i,
                None => {
                    methods.push(r.method.clone());
                    by_method.push(Vec::new());
                    methods.len() - 1
                }
            };
            by_method[idx].push(record_to_result(r));
        }
    }
    if !methods.iter().any(|m| m == METHOD_TABCF) {
        bail!("bias report needs a result file for the `{METHOD_TABCF}` method");
    }
    if methods.len() < 2 {
        bail!("bias report needs at least one baseline method next to `{METHOD_TABCF}`");
    }

    let mut summaries: Vec<MethodSummary> = Vec::new();
    for (method, results) in methods.iter().zip(&by_method) {
        let report: MetricsReport = evaluate(
            &models.clf,
            schema.layout(),
            &models.pre,
            results,
            DEFAULT_EPS_NUM,
        )
        .with_context(|| format!("cannot evaluate method {method}"))?;
        summaries.push(MethodSummary {
            method: method.clone(),
            n: report.n,
            n_val: report.n_val,
            validity: report.validity,
            mean_utilization_num: mean(&report.utilization_num),
            mean_utilization_cat: mean(&report.utilization_cat),
            utilization_num: report.utilization_num,
            utilization_cat: report.utilization_cat,
        });
    }

    // feature names in encoded order: numericals first, then categoricals
    let mut feature_names: Vec<String> = schema.numerical_names().to_vec();
    feature_names.extend(schema.categorical_names().iter().cloned());

    let mut text = format!("numerical change tolerance eps_num = {DEFAULT_EPS_NUM:e}\n\n");
    text.push_str("per-feature utilization rate (share of valid counterfactuals changing it)\n\n");
    for (f, name) in feature_names.iter().enumerate() {
        let kind = if f < schema.numerical_names().len() { "num" } else { "cat" };
        text.push_str(&format!("{name} ({kind})\n"));
        for s in &summaries {
            let v = if f < s.utilization_num.len() {
                s.utilization_num[f]
            } else {
                s.utilization_cat[f - s.utilization_num.len()]
            };
            text.push_str(&format!("  {:>9}  {}  {v:.3}\n", s.method, bar(v)));
        }
    }
    text.push_str("\nsummary\n");
    let headers = ["method", "n", "n_val", "validity", "mean_util_num", "mean_util_cat"];
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            vec![
                s.method.clone(),
                s.n.to_string(),
                s.n_val.to_string(),
                format!("{:.4}", s.validity),
                crate::report::fmt_opt(s.mean_utilization_num),
                crate::report::fmt_opt(s.mean_utilization_cat),
            ]
        })
        .collect();
    text.push_str(&aligned_table(&headers, &rows));
    print!("{text}");
    std::fs::write(paths.bias_report_txt(), &text)
        .with_context(|| format!("cannot write {}", paths.bias_report_txt().display()))?;

    let per_method: Vec<(String, Vec<f64>)> = summaries
        .iter()
        .map(|s| {
            let mut merged = s.utilization_num.clone();
            merged.extend_from_slice(&s.utilization_cat);
            (s.method.clone(), merged)
        })
        .collect();
    std::fs::write(paths.utilization_svg(), utilization_svg(&feature_names, &per_method))
        .with_context(|| format!("cannot write {}", paths.utilization_svg().display()))?;

    let json = serde_json::json!({
        "eps_num": DEFAULT_EPS_NUM,
        "features": feature_names,
        "methods": summaries,
    });
    std::fs::write(
        paths.bias_report_json(),
        serde_json::to_string_pretty(&json).expect("serializable by construction"),
    )
    .with_context(|| format!("cannot write {}", paths.bias_report_json().display()))?;
    println!(
        "report in {}, {}, and {}",
        paths.bias_report_txt().display(),
        paths.bias_report_json().display(),
        paths.utilization_svg().display()
    );
    Ok(())
}
