//! Run configuration: one TOML file pins everything a run needs, so a run
//! is reproducible from (config, seed) alone. Every field has a default,
//! can be set in the file, and can be overridden from the command line;
//! precedence is defaults < file < flags.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use tabcf_core::blackbox::ClassifierConfig;
use tabcf_core::cf::{BaselineConfig, CfConfig};
use tabcf_core::vae::{VaeArch, VaeTrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every derived random stream hangs off it.
    pub seed: u64,
    /// Directory all artifacts land in.
    pub out: PathBuf,
    pub data: DataSection,
    pub vae: VaeSection,
    pub classifier: ClassifierSection,
    pub cf: CfSection,
    pub baseline: BaselineSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub csv: PathBuf,
    pub schema: PathBuf,
    /// Cap on training rows; unset means the 80% split rule alone.
    pub train_cap: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeSection {
    pub epochs: usize,
    pub beta_max: f64,
    pub beta_min: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Token width.
    pub d: usize,
    /// Feed-forward hidden width.
    pub m: usize,
    /// Per-token latent width.
    pub d_z: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfSection {
    /// Number of test instances to explain.
    pub n: usize,
    pub max_steps: usize,
    pub learning_rate: f64,
    pub lambda_input: f64,
    pub lambda_latent: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub max_steps: usize,
    pub learning_rate: f64,
    pub distance_weight: f64,
    pub reg_weight: f64,
    pub tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            data: DataSection::default(),
            vae: VaeSection::default(),
            classifier: ClassifierSection::default(),
            cf: CfSection::default(),
            baseline: BaselineSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            csv: PathBuf::from("data.csv"),
            schema: PathBuf::from("schema.toml"),
            train_cap: None,
        }
    }
}

impl Default for VaeSection {
    fn default() -> Self {
        let t = VaeTrainConfig::default();
        let a = VaeArch::default();
        VaeSection {
            epochs: t.epochs,
            beta_max: t.beta_max,
            beta_min: t.beta_min,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            temperature: t.temperature,
            n_layers: a.n_layers,
            n_heads: a.n_heads,
            d: a.d,
            m: a.m,
            d_z: a.d_z,
        }
    }
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let c = ClassifierConfig::default();
        ClassifierSection {
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            hidden: c.hidden,
        }
    }
}

impl Default for CfSection {
    fn default() -> Self {
        let c = CfConfig::default();
        CfSection {
            n: 1000,
            max_steps: c.max_steps,
            learning_rate: c.learning_rate,
            lambda_input: c.lambda_input,
            lambda_latent: c.lambda_latent,
            tolerance: c.tolerance,
        }
    }
}

impl Default for BaselineSection {
    fn default() -> Self {
        let b = BaselineConfig::default();
        BaselineSection {
            max_steps: b.max_steps,
            learning_rate: b.learning_rate,
            distance_weight: b.distance_weight,
            reg_weight: b.reg_weight,
            tolerance: b.tolerance,
        }
    }
}

/// Per-verb overrides for every config field. Flag names mirror the config
/// fields; where two sections share a field name the flag carries the
/// section as a prefix.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Dataset CSV path.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Schema TOML path.
    #[arg(long, value_name = "PATH")]
    pub schema: Option<PathBuf>,
    /// Cap on training rows (default: the 80% split rule alone).
    #[arg(long)]
    pub train_cap: Option<usize>,

    /// VAE training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Annealing start value of the KL weight.
    #[arg(long)]
    pub beta_max: Option<f64>,
    /// Annealing end value of the KL weight.
    #[arg(long)]
    pub beta_min: Option<f64>,
    /// VAE learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// VAE batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Gumbel-Softmax temperature.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Transformer layers per stack.
    #[arg(long)]
    pub n_layers: Option<usize>,
    /// Attention heads.
    #[arg(long)]
    pub n_heads: Option<usize>,
    /// Token width.
    #[arg(long)]
    pub d: Option<usize>,
    /// Feed-forward hidden width.
    #[arg(long)]
    pub m: Option<usize>,
    /// Per-token latent width.
    #[arg(long)]
    pub d_z: Option<usize>,

    /// Classifier training epochs.
    #[arg(long)]
    pub classifier_epochs: Option<usize>,
    /// Classifier learning rate.
    #[arg(long)]
    pub classifier_learning_rate: Option<f64>,
    /// Classifier batch size.
    #[arg(long)]
    pub classifier_batch_size: Option<usize>,
    /// Classifier hidden width.
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Number of test instances to explain.
    #[arg(long)]
    pub n: Option<usize>,
    /// Latent search step cap.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Latent search learning rate.
    #[arg(long)]
    pub cf_learning_rate: Option<f64>,
    /// Weight on input-space proximity.
    #[arg(long)]
    pub lambda_input: Option<f64>,
    /// Weight on latent-space proximity.
    #[arg(long)]
    pub lambda_latent: Option<f64>,
    /// Relative-change convergence tolerance of the latent search.
    #[arg(long)]
    pub tolerance: Option<f64>,

    /// Baseline search step cap.
    #[arg(long)]
    pub baseline_max_steps: Option<usize>,
    /// Baseline learning rate.
    #[arg(long)]
    pub baseline_learning_rate: Option<f64>,
    /// Baseline weight on L1 distance to the original row.
    #[arg(long)]
    pub distance_weight: Option<f64>,
    /// Baseline weight on the one-hot sum penalty.
    #[arg(long)]
    pub reg_weight: Option<f64>,
    /// Baseline convergence tolerance.
    #[arg(long)]
    pub baseline_tolerance: Option<f64>,
}

impl RunConfig {
    /// Reads the file (or starts from defaults when no file is given) and
    /// layers the command-line values on top.
    pub fn resolve(
        file: Option<&Path>,
        seed: Option<u64>,
        out: Option<&Path>,
        o: &Overrides,
    ) -> Result<RunConfig> {
        let mut cfg = match file {
            None => RunConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("invalid config file {}", path.display()))?
            }
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(dir) = out {
            cfg.out = dir.to_path_buf();
        }
        cfg.apply(o);
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($target:expr, $src:expr) => {
                if let Some(v) = &$src {
                    $target = v.clone();
                }
            };
        }
        set!(self.data.csv, o.csv);
        set!(self.data.schema, o.schema);
        if o.train_cap.is_some() {
            self.data.train_cap = o.train_cap;
        }
        set!(self.vae.epochs, o.epochs);
        set!(self.vae.beta_max, o.beta_max);
        set!(self.vae.beta_min, o.beta_min);
        set!(self.vae.learning_rate, o.learning_rate);
        set!(self.vae.batch_size, o.batch_size);
        set!(self.vae.temperature, o.temperature);
        set!(self.vae.n_layers, o.n_layers);
        set!(self.vae.n_heads, o.n_heads);
        set!(self.vae.d, o.d);
        set!(self.vae.m, o.m);
        set!(self.vae.d_z, o.d_z);
        set!(self.classifier.epochs, o.classifier_epochs);
        set!(self.classifier.learning_rate, o.classifier_learning_rate);
        set!(self.classifier.batch_size, o.classifier_batch_size);
        set!(self.classifier.hidden, o.hidden);
        set!(self.cf.n, o.n);
        set!(self.cf.max_steps, o.max_steps);
        set!(self.cf.learning_rate, o.cf_learning_rate);
        set!(self.cf.lambda_input, o.lambda_input);
        set!(self.cf.lambda_latent, o.lambda_latent);
        set!(self.cf.tolerance, o.tolerance);
        set!(self.baseline.max_steps, o.baseline_max_steps);
        set!(self.baseline.learning_rate, o.baseline_learning_rate);
        set!(self.baseline.distance_weight, o.distance_weight);
        set!(self.baseline.reg_weight, o.reg_weight);
        set!(self.baseline.tolerance, o.baseline_tolerance);
    }

    pub fn arch(&self) -> VaeArch {
        VaeArch {
            n_layers: self.vae.n_layers,
            n_heads: self.vae.n_heads,
            d: self.vae.d,
            m: self.vae.m,
            d_z: self.vae.d_z,
        }
    }

    pub fn vae_train_config(&self) -> VaeTrainConfig {
        VaeTrainConfig {
            epochs: self.vae.epochs,
            beta_max: self.vae.beta_max,
            beta_min: self.vae.beta_min,
            learning_rate: self.vae.learning_rate,
            batch_size: self.vae.batch_size,
            temperature: self.vae.temperature,
            seed: self.seed,
            arch: self.arch(),
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig {
            epochs: self.classifier.epochs,
            learning_rate: self.classifier.learning_rate,
            batch_size: self.classifier.batch_size,
            hidden: self.classifier.hidden,
            seed: self.seed,
        }
    }

    pub fn cf_config(&self) -> CfConfig {
        CfConfig {
            lambda_input: self.cf.lambda_input,
            lambda_latent: self.cf.lambda_latent,
            max_steps: self.cf.max_steps,
            learning_rate: self.cf.learning_rate,
            tolerance: self.cf.tolerance,
            seed: self.seed,
        }
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            distance_weight: self.baseline.distance_weight,
            reg_weight: self.baseline.reg_weight,
            max_steps: self.baseline.max_steps,
            learning_rate: self.baseline.learning_rate,
            tolerance: self.baseline.tolerance,
            seed: self.seed,
        }
    }

    /// The fully-resolved configuration as TOML, written into the run
    /// directory so a run can be replayed from its artifacts alone.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("cannot serialize resolved config")
    }
}
