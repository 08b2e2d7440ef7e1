//! End-to-end checks on the CSV -> encode -> decode pipeline, with the
//! fitted statistics verified against an independent naive recomputation.

mod common;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use tabcf_core::dataset::{load_csv, EncodedDataset, Preprocessor, RawRow, TableSchema};

/// Builds a random schema (1-4 numerical, 1-4 categorical features with
/// domains of size 2-5) and a batch of in-domain rows for it.
fn random_schema_and_rows(
    rng: &mut ChaCha8Rng,
    n_rows: usize,
) -> (TableSchema, Vec<RawRow>) {
    let n_num = rng.gen_range(1..=4);
    let n_cat = rng.gen_range(1..=4);
    let mut toml = String::new();
    for i in 0..n_num {
        toml.push_str(&format!("[[column]]\nname = \"num{i}\"\nkind = \"numerical\"\n\n"));
    }
    let mut sizes = Vec::new();
    for i in 0..n_cat {
        let c = rng.gen_range(2..=5);
        sizes.push(c);
        let cats: Vec<String> = (0..c).map(|j| format!("\"v{i}_{j}\"")).collect();
        toml.push_str(&format!(
            "[[column]]\nname = \"cat{i}\"\nkind = \"categorical\"\ncategories = [{}]\n\n",
            cats.join(", ")
        ));
    }
    toml.push_str("[target]\ncolumn = \"label\"\npositive = \"yes\"\n");
    let schema = TableSchema::from_toml_str(&toml).unwrap();
    let rows = (0..n_rows)
        .map(|_| RawRow {
            numericals: (0..n_num).map(|_| rng.gen_range(-50.0..50.0)).collect(),
            categoricals: sizes.iter().map(|&c| rng.gen_range(0..c)).collect(),
        })
        .collect();
    (schema, rows)
}

#[test]
fn thousand_random_rows_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..5 {
        let (schema, rows) = random_schema_and_rows(&mut rng, 200);
        let pre = Preprocessor::fit(&schema, &rows).unwrap();
        for (ri, row) in rows.iter().enumerate() {
            let x = pre.encode_row(&schema, row);
            // encoded invariants: numerical block in [0,1], blocks one-hot
            for i in 0..schema.layout().n_num {
                assert!((0.0..=1.0).contains(&x[i]), "trial {trial} row {ri}");
            }
            for c in 0..schema.layout().n_cat {
                let block = &x[schema.layout().cat_block(c)];
                assert_eq!(block.iter().filter(|&&v| v == 1.0).count(), 1);
                assert!(block.iter().all(|&v| v == 0.0 || v == 1.0));
            }
            let back = pre.decode_row(&schema, &x).unwrap();
            assert_eq!(back.categoricals, row.categoricals);
            for (a, b) in back.numericals.iter().zip(&row.numericals) {
                assert!((a - b).abs() < 1e-9, "trial {trial} row {ri}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn fitted_statistics_match_naive_oracle() {
    // Same CSV, two computations: the pipeline's fit vs. plain loops here.
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (schema, rows) = random_schema_and_rows(&mut rng, 500);
    let pre = Preprocessor::fit(&schema, &rows).unwrap();
    for i in 0..schema.layout().n_num {
        let col: Vec<f64> = rows.iter().map(|r| r.numericals[i]).collect();
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
        assert_eq!(pre.num_min[i], min);
        assert_eq!(pre.num_max[i], max);
        assert!((pre.num_mean[i] - mean).abs() < 1e-9);
        assert!((pre.num_std[i] - var.sqrt()).abs() < 1e-9);
    }
}

#[test]
fn census_style_schema_round_trips_through_csv() {
    // 4 numerical / 8 categorical, load -> encode -> decode -> original.
    let mut toml = String::new();
    for name in ["age", "education_years", "capital_delta", "hours_per_week"] {
        toml.push_str(&format!("[[column]]\nname = \"{name}\"\nkind = \"numerical\"\n\n"));
    }
    let cat_domains: &[(&str, &[&str])] = &[
        ("workclass", &["private", "gov", "self_employed"]),
        ("education", &["hs", "college", "graduate"]),
        ("marital_status", &["single", "married"]),
        ("occupation", &["tech", "service", "trade", "admin"]),
        ("relationship", &["child", "spouse", "unrelated"]),
        ("ethnicity", &["group_a", "group_b", "group_c"]),
        ("sex", &["female", "male"]),
        ("native_region", &["north", "south", "east", "west"]),
    ];
    for (name, cats) in cat_domains {
        let quoted: Vec<String> = cats.iter().map(|c| format!("\"{c}\"")).collect();
        toml.push_str(&format!(
            "[[column]]\nname = \"{name}\"\nkind = \"categorical\"\ncategories = [{}]\n\n",
            quoted.join(", ")
        ));
    }
    toml.push_str("[target]\ncolumn = \"income\"\npositive = \">50K\"\n");
    let schema = TableSchema::from_toml_str(&toml).unwrap();
    assert_eq!(schema.layout().n_num, 4);
    assert_eq!(schema.layout().n_cat, 8);

    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut csv = String::from(
        "age,education_years,capital_delta,hours_per_week,workclass,education,\
         marital_status,occupation,relationship,ethnicity,sex,native_region,income\n",
    );
    let mut expected = Vec::new();
    for _ in 0..50 {
        let nums: Vec<f64> = (0..4).map(|_| (rng.gen_range(-200..2000) as f64) / 4.0).collect();
        let cats: Vec<usize> = cat_domains.iter().map(|(_, d)| rng.gen_range(0..d.len())).collect();
        let label = if rng.gen_bool(0.5) { ">50K" } else { "<=50K" };
        let mut cells: Vec<String> = nums.iter().map(|v| format!("{v}")).collect();
        for (ci, (_, d)) in cats.iter().zip(cat_domains) {
            cells.push(d[*ci].to_string());
        }
        cells.push(label.to_string());
        csv.push_str(&cells.join(","));
        csv.push('\n');
        expected.push(RawRow { numericals: nums, categoricals: cats });
    }
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(csv.as_bytes()).unwrap();

    let table = load_csv(file.path(), &schema).unwrap();
    assert_eq!(table.rows, expected);
    let ds = EncodedDataset::from_raw(&schema, &table, &[]).unwrap();
    assert_eq!(ds.width(), 4 + 3 + 3 + 2 + 4 + 3 + 3 + 2 + 4);
    for (encoded, original) in ds.rows.iter().zip(&expected) {
        let back = ds.preprocessor.decode_row(&schema, encoded).unwrap();
        assert_eq!(back.categoricals, original.categoricals);
        for (a, b) in back.numericals.iter().zip(&original.numericals) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
