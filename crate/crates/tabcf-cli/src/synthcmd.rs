//! `tabcf synth`: generate a synthetic dataset with a planted, documented
//! signal and write the CSV plus its schema.

use crate::artifacts::Paths;
use crate::config::RunConfig;
use anyhow::{Context, Result};
use tabcf_core::dataset::write_csv;
use tabcf_core::synth::{generate, SignalKind, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SignalArg {
    /// Every feature contributes to the label.
    Mixed,
    /// Only the first categorical feature drives the label.
    CategoricalOnly,
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Numerical feature count.
    #[arg(long, default_value_t = 3)]
    pub n_num: usize,
    /// Categorical feature count.
    #[arg(long, default_value_t = 3)]
    pub n_cat: usize,
    /// Domain size of every categorical feature.
    #[arg(long, default_value_t = 3)]
    pub n_categories: usize,
    /// Rows to generate.
    #[arg(long, default_value_t = 2000)]
    pub rows: usize,
    /// Which features carry label signal.
    #[arg(long, value_enum, default_value_t = SignalArg::Mixed)]
    pub signal: SignalArg,
    /// Scale of the logistic label noise; 0 = deterministic labels.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
}

pub fn run(cfg: &RunConfig, args: &SynthArgs) -> Result<()> {
    let paths = Paths::new(&cfg.out);
    paths.prepare(cfg)?;
    let spec = SynthSpec {
        n_num: args.n_num,
        n_cat: args.n_cat,
        n_categories: args.n_categories,
        rows: args.rows,
        signal: match args.signal {
            SignalArg::Mixed => SignalKind::Mixed,
            SignalArg::CategoricalOnly => SignalKind::CategoricalOnly,
        },
        noise: args.noise,
        seed: cfg.seed,
    };
    let out = generate(&spec).context("invalid synth spec")?;
    std::fs::write(paths.synth_schema(), &out.schema_toml)
        .with_context(|| format!("cannot write {}", paths.synth_schema().display()))?;
    write_csv(&paths.synth_csv(), &out.schema, &out.rows, &out.labels)
        .with_context(|| format!("cannot write {}", paths.synth_csv().display()))?;
    let positive = out.labels.iter().filter(|&&l| l == 1).count();
    println!(
        "wrote {} rows ({} positive) to {} with schema {}",
        out.rows.len(),
        positive,
        paths.synth_csv().display(),
        paths.synth_schema().display()
    );
    Ok(())
}
