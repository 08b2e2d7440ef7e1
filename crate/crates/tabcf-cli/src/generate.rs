//! `tabcf generate`: run one counterfactual method over the shared test
//! selection and write its result file.

use crate::artifacts::{encode_with, instances_from, load_data, load_models, load_or_build_selection, Paths};
use crate::config::RunConfig;
use anyhow::{Context, Result};
use tabcf_core::cf::{
    batch_generate, dice_like_generate, result_to_record, wachter_generate, write_records,
    CFResult, METHOD_DICE, METHOD_TABCF, METHOD_WACHTER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Tabcf,
    Wachter,
    #[value(name = "dice_like")]
    DiceLike,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tabcf => METHOD_TABCF,
            Method::Wachter => METHOD_WACHTER,
            Method::DiceLike => METHOD_DICE,
        }
    }
}

pub fn run(cfg: &RunConfig, method: Method) -> Result<()> {
    let paths = Paths::new(&cfg.out);
    paths.prepare(cfg)?;
    let (schema, table) = load_data(cfg)?;
    let models = load_models(&paths.models(), &schema)?;
    anyhow::ensure!(
        models.data_rows == table.len() as u64,
        "dataset has {} rows but the checkpoint was trained on {}; retrain or fix the data path",
        table.len(),
        models.data_rows
    );

    let ds = encode_with(&schema, &table, &models.pre);
    let selection = load_or_build_selection(&paths, cfg, &ds, &models.clf)?;
    let instances = instances_from(&ds, &selection);
    println!("{}: {} test instances", method.name(), instances.len());

    let results: Vec<CFResult> = match method {
        Method::Tabcf => {
            let cf_cfg = cfg.cf_config();
            batch_generate(&models.vae, &models.clf, &instances, &cf_cfg)
                .context("latent counterfactual search")?
        }
        Method::Wachter | Method::DiceLike => {
            let b_cfg = cfg.baseline_config();
            models.clf.freeze();
            let checksum = models.clf.param_checksum();
            let mut out = Vec::with_capacity(instances.len());
            for (id, row) in &instances {
                let r = match method {
                    Method::Wachter => {
                        wachter_generate(&models.clf, schema.layout(), *id, row, &b_cfg)
                    }
                    _ => dice_like_generate(&models.clf, schema.layout(), *id, row, &b_cfg),
                }
                .context("baseline counterfactual search")?;
                out.push(r);
            }
            anyhow::ensure!(
                checksum == models.clf.param_checksum(),
                "classifier parameters changed during the search"
            );
            out
        }
    };

    let records = results
        .iter()
        .map(|r| result_to_record(r, &schema, &models.pre))
        .collect::<Result<Vec<_>, _>>()
        .context("cannot render results")?;
    let out_path = paths.results(method.name());
    write_records(&out_path, &records).context("cannot write results")?;

    let valid = results.iter().filter(|r| r.valid).count();
    let mean_steps =
        results.iter().map(|r| r.steps_used as f64).sum::<f64>() / results.len().max(1) as f64;
    println!(
        "{}: {valid}/{} valid, mean steps {mean_steps:.1}, results in {}",
        method.name(),
        results.len(),
        out_path.display()
    );
    Ok(())
}
