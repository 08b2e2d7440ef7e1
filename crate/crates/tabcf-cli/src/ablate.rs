//! `tabcf ablate`: rerun the latent search over the 5x5 grid of proximity
//! weights on the shared test selection and emit validity / proximity heat
//! tables. The corner with both weights at 1 reproduces the default
//! configuration exactly, and its raw results are written alongside so the
//! equivalence can be checked byte for byte.

use crate::artifacts::{encode_with, instances_from, load_data, load_models, load_or_build_selection, Paths};
use crate::config::RunConfig;
use crate::report::heat_table;
use anyhow::{Context, Result};
use serde::Serialize;
use tabcf_core::cf::{batch_generate, result_to_record, write_records};
use tabcf_core::metrics::validity;

pub const LAMBDA_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Serialize)]
struct Cell {
    lambda_input: f64,
    lambda_latent: f64,
    n: usize,
    n_valid: usize,
    validity: f64,
    /// Mean L1 distance in the encoded space over the recomputed-valid
    /// counterfactuals; null when none are valid.
    proximity_l1: Option<f64>,
    mean_steps: f64,
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.out);
    paths.prepare(cfg)?;
    let (schema, table) = load_data(cfg)?;
    let models = load_models(&paths.models(), &schema)?;
    let ds = encode_with(&schema, &table, &models.pre);
    let selection = load_or_build_selection(&paths, cfg, &ds, &models.clf)?;
    let instances = instances_from(&ds, &selection);
    println!(
        "ablation: {} instances x {} cells",
        instances.len(),
        LAMBDA_GRID.len() * LAMBDA_GRID.len()
    );

    let mut cells: Vec<Cell> = Vec::with_capacity(25);
    for &li in &LAMBDA_GRID {
        for &ll in &LAMBDA_GRID {
            let mut cf_cfg = cfg.cf_config();
            cf_cfg.lambda_input = li;
            cf_cfg.lambda_latent = ll;
            let results = batch_generate(&models.vae, &models.clf, &instances, &cf_cfg)
                .with_context(|| format!("grid cell ({li}, {ll})"))?;

            let val = validity(&models.clf, &results).context("validity recomputation")?;
            let mut l1_sum = 0.0;
            let mut n_valid = 0usize;
            for r in &results {
                if models.clf.predict_class(&r.x_cf).unwrap_or(0) == 1 {
                    l1_sum += r
                        .x0
                        .iter()
                        .zip(&r.x_cf)
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>();
                    n_valid += 1;
                }
            }
            let mean_steps = results.iter().map(|r| r.steps_used as f64).sum::<f64>()
                / results.len().max(1) as f64;
            cells.push(Cell {
                lambda_input: li,
                lambda_latent: ll,
                n: results.len(),
                n_valid,
                validity: val,
                proximity_l1: (n_valid > 0).then(|| l1_sum / n_valid as f64),
                mean_steps,
            });

            if li == 1.0 && ll == 1.0 {
                let records = results
                    .iter()
                    .map(|r| result_to_record(r, &schema, &models.pre))
                    .collect::<Result<Vec<_>, _>>()
                    .context("cannot render cell results")?;
                write_records(&paths.ablation_default_cell(), &records)
                    .context("cannot write default-cell results")?;
            }
        }
    }

    let cell_at = |i: usize, j: usize| -> &Cell { &cells[i * LAMBDA_GRID.len() + j] };
    let mut text = heat_table(
        "validity",
        "lambda_input",
        "lambda_latent",
        &LAMBDA_GRID,
        |i, j| format!("{:.4}", cell_at(i, j).validity),
    );
    text.push('\n');
    text.push_str(&heat_table(
        "mean encoded-space L1 proximity (valid counterfactuals)",
        "lambda_input",
        "lambda_latent",
        &LAMBDA_GRID,
        |i, j| match cell_at(i, j).proximity_l1 {
            Some(p) => format!("{p:.4}"),
            None => "-".to_string(),
        },
    ));
    print!("{text}");
    std::fs::write(paths.ablation_txt(), &text)
        .with_context(|| format!("cannot write {}", paths.ablation_txt().display()))?;

    let json = serde_json::json!({
        "grid": cells,
        "axis": LAMBDA_GRID,
    });
    std::fs::write(
        paths.ablation_json(),
        serde_json::to_string_pretty(&json).expect("serializable by construction"),
    )
    .with_context(|| format!("cannot write {}", paths.ablation_json().display()))?;
    println!(
        "grid written to {} and {}",
        paths.ablation_json().display(),
        paths.ablation_txt().display()
    );
    Ok(())
}
