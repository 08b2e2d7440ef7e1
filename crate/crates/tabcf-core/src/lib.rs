//! Core library: autodiff engine, tabular data pipeline, transformer VAE,
//! black-box classifier, counterfactual search, and evaluation metrics.

pub mod autodiff;
pub mod blackbox;
pub mod cf;
pub mod checkpoint;
pub mod dataset;
pub mod metrics;
pub mod rngutil;
pub mod synth;
pub mod tokenizer;
pub mod vae;
