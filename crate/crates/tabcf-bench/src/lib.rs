//! Fixtures and composed workloads for the pipeline benchmarks.
//!
//! The benches measure the costs that dominate a real run: a transformer
//! matmul, one row through the decoder, one row through the encoder, and
//! one full objective evaluation of the latent search (decode, classify,
//! proximity terms, backward pass). Everything here is deterministic per
//! seed so numbers are comparable across machines and runs.

use tabcf_core::autodiff::{Tape, Tensor};
use tabcf_core::blackbox::Classifier;
use tabcf_core::dataset::TableSchema;
use tabcf_core::tokenizer::NoiseMode;
use tabcf_core::vae::{VaeArch, VaeModel};

// ── Fixtures ────────────────────────────────────────────────────────────

/// The desk-scale table shape: 3 numerical and 3 three-way categorical
/// columns, encoded width 12.
pub fn bench_schema() -> TableSchema {
    TableSchema::from_toml_str(
        r#"
        [[column]]
        name = "num0"
        kind = "numerical"

        [[column]]
        name = "num1"
        kind = "numerical"

        [[column]]
        name = "num2"
        kind = "numerical"

        [[column]]
        name = "cat0"
        kind = "categorical"
        categories = ["a", "b", "c"]

        [[column]]
        name = "cat1"
        kind = "categorical"
        categories = ["a", "b", "c"]

        [[column]]
        name = "cat2"
        kind = "categorical"
        categories = ["a", "b", "c"]

        [target]
        column = "label"
        positive = "yes"
    "#,
    )
    .expect("fixture schema is well-formed")
}

/// Generative model at the default architecture over the bench schema.
pub fn bench_model(seed: u64) -> VaeModel {
    let schema = bench_schema();
    VaeModel::init(schema.layout(), VaeArch::default(), 1.0, seed)
}

/// Classifier of the default width over the bench schema's encoded rows.
pub fn bench_classifier(seed: u64) -> Classifier {
    Classifier::init(bench_schema().layout().k, 32, seed)
}

/// A legal encoded row for the bench schema: scaled numericals followed
/// by exact one-hot blocks.
pub fn bench_row() -> Vec<f64> {
    vec![0.2, 0.5, 0.8, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
}

// ── Workloads ───────────────────────────────────────────────────────────

/// One square matmul with its backward pass: the unit of work inside
/// every attention and feed-forward block.
pub fn matmul_forward_backward(a_vals: &[f64], b_vals: &[f64], n: usize) -> f64 {
    let a = Tensor::param(vec![n, n], a_vals.to_vec()).expect("square shape");
    let b = Tensor::from_vec(vec![n, n], b_vals.to_vec()).expect("square shape");
    let mut tape = Tape::new();
    let c = tape.matmul(&a, &b).expect("shapes agree");
    let loss = tape.mean(&c);
    let out = loss.item();
    tape.backward(&loss).expect("path is differentiable");
    out
}

/// One full objective evaluation of the latent search: decode the latent
/// with fresh categorical noise, score the hard row through the
/// classifier hinge, add the input- and latent-space proximity terms, and
/// run the backward pass. Returns the loss value.
#[allow(clippy::too_many_arguments)]
pub fn search_step(
    model: &VaeModel,
    clf: &Classifier,
    x0: &[f64],
    z_values: &[f64],
    z0_values: &[f64],
    lambda_input: f64,
    lambda_latent: f64,
    rng: &mut impl rand::Rng,
) -> f64 {
    let n_features = model.layout.n_features();
    let z = Tensor::param(vec![n_features, model.arch.d_z], z_values.to_vec())
        .expect("latent shape agrees with the model");
    let mut tape = Tape::new();
    let recon = model
        .decode_on_tape(&mut tape, &z, 1, NoiseMode::Seeded, rng)
        .expect("decode succeeds on a well-shaped latent");
    let logit = clf.logit_on_tape(&mut tape, &recon.hard).expect("widths agree");
    let margin = tape.affine(&logit, -1.0, 1.0);
    let hinge = tape.relu(&margin);

    let x0_t = Tensor::from_vec(vec![1, x0.len()], x0.to_vec()).expect("row shape");
    let dif = tape.sub(&x0_t, &recon.soft).expect("widths agree");
    let l1 = tape.abs(&dif);
    let l1 = tape.sum(&l1);
    let l1 = tape.scale(&l1, lambda_input);

    let z0 = Tensor::from_vec(vec![n_features, model.arch.d_z], z0_values.to_vec())
        .expect("latent shape agrees with the model");
    let dz = tape.sub(&z0, &z).expect("shapes agree");
    let sq = tape.mul(&dz, &dz).expect("shapes agree");
    let ssq = tape.sum(&sq);
    let l2 = tape.sqrt(&ssq).expect("sum of squares is non-negative");
    let l2 = tape.scale(&l2, lambda_latent);

    let prox = tape.add(&l1, &l2).expect("scalars add");
    let total = tape.add(&hinge, &prox).expect("scalars add");
    let out = total.item();
    tape.backward(&total).expect("path is differentiable");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use tabcf_core::rngutil::derive_rng;

    #[test]
    fn fixture_row_matches_the_schema_width() {
        let schema = bench_schema();
        let row = bench_row();
        assert_eq!(row.len(), schema.layout().k);
        for (i, &c) in schema.layout().cat_sizes.iter().enumerate() {
            let block = &row[schema.layout().cat_block(i)];
            assert_eq!(block.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(block.len(), c);
        }
    }

    #[test]
    fn search_step_is_deterministic_and_non_negative() {
        let model = bench_model(3);
        let clf = bench_classifier(3);
        let x0 = bench_row();
        let state = model.encode_row(&x0, None).unwrap();
        let mut rng_a = derive_rng(9, &[0xB0]);
        let mut rng_b = derive_rng(9, &[0xB0]);
        let a = search_step(&model, &clf, &x0, &state.z, &state.z, 1.0, 1.0, &mut rng_a);
        let b = search_step(&model, &clf, &x0, &state.z, &state.z, 1.0, 1.0, &mut rng_b);
        assert!(a.is_finite());
        assert!(a >= 0.0, "all objective terms are non-negative, got {a}");
        assert_eq!(a, b, "identical streams must give identical losses");
    }

    #[test]
    fn matmul_workload_runs_clean() {
        let n = 8;
        let vals: Vec<f64> = (0..n * n).map(|i| (i as f64).sin()).collect();
        let out = matmul_forward_backward(&vals, &vals, n);
        assert!(out.is_finite());
    }
}
