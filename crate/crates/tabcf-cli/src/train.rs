//! `tabcf train`: fit the preprocessor on the training split, train the
//! classifier and the VAE, and write the checkpoint plus curve logs.

use crate::artifacts::{load_data, save_models, Paths};
use crate::config::RunConfig;
use anyhow::{Context, Result};
use std::fmt::Write as _;
use tabcf_core::blackbox::train_classifier;
use tabcf_core::dataset::EncodedDataset;
use tabcf_core::vae::{train_vae, VaeModel};

pub fn run(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.out);
    paths.prepare(cfg)?;
    let (schema, table) = load_data(cfg)?;

    // The split needs only the row count, but the preprocessor must be
    // fitted on the training rows alone, so encode twice: once to get the
    // split, once with the properly fitted scaling.
    let provisional = EncodedDataset::from_raw(&schema, &table, &[])
        .context("cannot encode dataset")?;
    let split = provisional.split(cfg.data.train_cap.unwrap_or(usize::MAX), cfg.seed);
    let ds = EncodedDataset::from_raw(&schema, &table, &split.train)
        .context("cannot encode dataset")?;

    let train_rows: Vec<Vec<f64>> = split.train.iter().map(|&i| ds.rows[i].clone()).collect();
    let train_labels: Vec<u8> = split.train.iter().map(|&i| ds.labels[i]).collect();
    println!(
        "dataset: {} rows ({} train / {} test pool), encoded width {}",
        ds.n_rows(),
        split.train.len(),
        split.test.len(),
        ds.width()
    );

    let clf_cfg = cfg.classifier_config();
    let (clf, clf_report) =
        train_classifier(&train_rows, &train_labels, &clf_cfg).context("classifier training")?;
    println!(
        "classifier: held-out accuracy {:.4}, final loss {:.6}",
        clf_report.held_out_accuracy, clf_report.final_loss
    );

    let vae_cfg = cfg.vae_train_config();
    vae_cfg.validate().context("invalid config")?;
    let model = VaeModel::init(schema.layout(), vae_cfg.arch, vae_cfg.temperature, cfg.seed);
    let curve = train_vae(&model, &train_rows, &vae_cfg).context("vae training")?;
    let every = (vae_cfg.epochs / 10).max(1);
    for stats in &curve.epochs {
        if stats.epoch % every == 0 || stats.epoch + 1 == vae_cfg.epochs {
            println!(
                "vae epoch {:>5}  beta {:.3e}  recon {:.6}  kl {:.4}  total {:.6}",
                stats.epoch, stats.beta, stats.recon, stats.kl, stats.total
            );
        }
    }

    let mut curve_csv = String::from("epoch,beta,recon,kl,total\n");
    for s in &curve.epochs {
        writeln!(curve_csv, "{},{},{},{},{}", s.epoch, s.beta, s.recon, s.kl, s.total)
            .expect("writing to a string cannot fail");
    }
    std::fs::write(paths.vae_curve(), curve_csv)
        .with_context(|| format!("cannot write {}", paths.vae_curve().display()))?;

    let report_json = serde_json::json!({
        "held_out_accuracy": clf_report.held_out_accuracy,
        "final_loss": clf_report.final_loss,
        "train_rows": split.train.len(),
    });
    std::fs::write(
        paths.classifier_report(),
        serde_json::to_string_pretty(&report_json).expect("static shape"),
    )
    .with_context(|| format!("cannot write {}", paths.classifier_report().display()))?;

    save_models(
        &paths.models(),
        &schema,
        cfg.seed,
        table.len() as u64,
        &model,
        &clf,
        &ds.preprocessor,
    )?;
    println!("checkpoint written to {}", paths.models().display());
    Ok(())
}
