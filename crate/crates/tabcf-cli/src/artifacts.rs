//! The on-disk layout of a run directory and the glue for loading it back:
//! everything a command reads or writes lives under the configured output
//! directory, keyed by fixed file names.

use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use tabcf_core::blackbox::Classifier;
use tabcf_core::checkpoint::{
    load_classifier, load_preprocessor, load_vae, store_classifier, store_preprocessor, store_vae,
    Checkpoint,
};
use tabcf_core::dataset::{load_csv, EncodedDataset, Preprocessor, RawTable, TableSchema};
use tabcf_core::vae::VaeModel;

/// File names inside a run directory.
pub struct Paths {
    out: PathBuf,
}

impl Paths {
    pub fn new(out: &Path) -> Paths {
        Paths { out: out.to_path_buf() }
    }

    pub fn resolved_config(&self) -> PathBuf {
        self.out.join("config.toml")
    }

    pub fn models(&self) -> PathBuf {
        self.out.join("models.ckpt")
    }

    pub fn vae_curve(&self) -> PathBuf {
        self.out.join("vae_curve.csv")
    }

    pub fn classifier_report(&self) -> PathBuf {
        self.out.join("classifier_report.json")
    }

    pub fn selection(&self) -> PathBuf {
        self.out.join("selection.json")
    }

    pub fn results(&self, method: &str) -> PathBuf {
        self.out.join(format!("cf_{method}.jsonl"))
    }

    pub fn evaluation_json(&self) -> PathBuf {
        self.out.join("evaluation.json")
    }

    pub fn evaluation_txt(&self) -> PathBuf {
        self.out.join("evaluation.txt")
    }

    pub fn ablation_json(&self) -> PathBuf {
        self.out.join("ablation.json")
    }

    pub fn ablation_txt(&self) -> PathBuf {
        self.out.join("ablation.txt")
    }

    pub fn ablation_default_cell(&self) -> PathBuf {
        self.out.join("ablation_default_cell.jsonl")
    }

    pub fn bias_report_json(&self) -> PathBuf {
        self.out.join("bias_report.json")
    }

    pub fn bias_report_txt(&self) -> PathBuf {
        self.out.join("bias_report.txt")
    }

    pub fn utilization_svg(&self) -> PathBuf {
        self.out.join("utilization.svg")
    }

    pub fn synth_csv(&self) -> PathBuf {
        self.out.join("synth.csv")
    }

    pub fn synth_schema(&self) -> PathBuf {
        self.out.join("synth_schema.toml")
    }

    /// Creates the directory and drops the fully-resolved config into it.
    pub fn prepare(&self, cfg: &RunConfig) -> Result<()> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("cannot create output directory {}", self.out.display()))?;
        std::fs::write(self.resolved_config(), cfg.to_toml()?)
            .with_context(|| format!("cannot write {}", self.resolved_config().display()))?;
        Ok(())
    }
}

/// Loads the schema and CSV named by the config.
pub fn load_data(cfg: &RunConfig) -> Result<(TableSchema, RawTable)> {
    let schema = TableSchema::from_path(&cfg.data.schema)
        .with_context(|| format!("cannot load schema {}", cfg.data.schema.display()))?;
    let table = load_csv(&cfg.data.csv, &schema)
        .with_context(|| format!("cannot load dataset {}", cfg.data.csv.display()))?;
    Ok((schema, table))
}

/// The trained models a run needs after `train`: generative model,
/// classifier, fitted preprocessor, and the row count they were trained
/// against (so a silently swapped dataset is caught).
pub struct Models {
    pub vae: VaeModel,
    pub clf: Classifier,
    pub pre: Preprocessor,
    pub data_rows: u64,
}

pub fn save_models(
    path: &Path,
    schema: &TableSchema,
    seed: u64,
    data_rows: u64,
    vae: &VaeModel,
    clf: &Classifier,
    pre: &Preprocessor,
) -> Result<()> {
    let mut ckpt = Checkpoint::new(schema.schema_hash(), seed);
    ckpt.put_meta_u64("data.rows", data_rows);
    store_vae(&mut ckpt, vae);
    store_classifier(&mut ckpt, clf);
    store_preprocessor(&mut ckpt, pre);
    ckpt.save(path)
        .with_context(|| format!("cannot write checkpoint {}", path.display()))?;
    Ok(())
}

/// Loads the checkpoint and rejects it when it was written under a
/// different schema than the one in hand.
pub fn load_models(path: &Path, schema: &TableSchema) -> Result<Models> {
    if !path.exists() {
        bail!("missing checkpoint {}; run `tabcf train` first", path.display());
    }
    let ckpt = Checkpoint::load(path)
        .with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    let hash = schema.schema_hash();
    if ckpt.schema_hash != hash {
        bail!(
            "checkpoint {} was trained under schema hash {:016x}, but the configured schema \
             hashes to {:016x}",
            path.display(),
            ckpt.schema_hash,
            hash
        );
    }
    let vae = load_vae(&ckpt, schema.layout())
        .with_context(|| format!("checkpoint {}: vae section", path.display()))?;
    let clf = load_classifier(&ckpt)
        .with_context(|| format!("checkpoint {}: classifier section", path.display()))?;
    let pre = load_preprocessor(&ckpt)
        .with_context(|| format!("checkpoint {}: preprocessor section", path.display()))?;
    let data_rows = ckpt.meta_u64("data.rows").unwrap_or(0);
    Ok(Models { vae, clf, pre, data_rows })
}

/// Encodes the table with an already-fitted preprocessor (never refits:
/// generation and evaluation must see exactly the training-time encoding).
pub fn encode_with(
    schema: &TableSchema,
    table: &RawTable,
    pre: &Preprocessor,
) -> EncodedDataset {
    EncodedDataset {
        schema: schema.clone(),
        preprocessor: pre.clone(),
        rows: table.rows.iter().map(|r| pre.encode_row(schema, r)).collect(),
        labels: table.labels.clone(),
    }
}

/// The cached test-instance choice, shared by every method so they are
/// compared on identical instances.
#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct SelectionFile {
    pub schema_hash: u64,
    pub seed: u64,
    pub requested: usize,
    pub indices: Vec<usize>,
}

/// Returns the cached selection when it matches (same schema, seed, and
/// request size); otherwise selects afresh — test-pool rows the classifier
/// puts in class 0, in seeded split order — and caches the result.
pub fn load_or_build_selection(
    paths: &Paths,
    cfg: &RunConfig,
    ds: &EncodedDataset,
    clf: &Classifier,
) -> Result<SelectionFile> {
    let hash = ds.schema.schema_hash();
    let path = paths.selection();
    if path.exists() {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read selection cache {}", path.display()))?;
        let cached: SelectionFile = serde_json::from_str(&text)
            .with_context(|| format!("corrupt selection cache {}", path.display()))?;
        if cached.schema_hash == hash && cached.seed == cfg.seed && cached.requested == cfg.cf.n {
            return Ok(cached);
        }
    }
    let split = ds.split(cfg.data.train_cap.unwrap_or(usize::MAX), cfg.seed);
    let selection = ds.select_test_instances(&split, cfg.cf.n, |x| {
        clf.predict_class(x).map(|c| c == 0).unwrap_or(false)
    });
    if selection.indices.is_empty() {
        bail!(
            "eligible pool is empty: 0 of the {} requested test instances are classified 0",
            cfg.cf.n
        );
    }
    if selection.shortfall() > 0 {
        eprintln!(
            "warning: only {} of {} requested test instances are eligible",
            selection.indices.len(),
            selection.requested
        );
    }
    let file = SelectionFile {
        schema_hash: hash,
        seed: cfg.seed,
        requested: cfg.cf.n,
        indices: selection.indices,
    };
    let text = serde_json::to_string_pretty(&file).context("cannot serialize selection")?;
    std::fs::write(&path, text)
        .with_context(|| format!("cannot write selection cache {}", path.display()))?;
    Ok(file)
}

/// The (id, row) pairs counterfactual generation consumes.
pub fn instances_from(ds: &EncodedDataset, selection: &SelectionFile) -> Vec<(u64, Vec<f64>)> {
    selection
        .indices
        .iter()
        .map(|&i| (i as u64, ds.rows[i].clone()))
        .collect()
}
