use super::preprocess::Preprocessor;
use super::schema::TableSchema;
use super::table::RawTable;
use super::DatasetError;
use crate::rngutil::{derive_rng, TAG_SPLIT};
use rand::seq::SliceRandom;

/// A fully encoded table: one `[0,1]^|N| x one-hot` vector per row plus
/// binary labels, carrying the schema and fitted preprocessor along.
#[derive(Debug, Clone)]
pub struct EncodedDataset {
    pub schema: TableSchema,
    pub preprocessor: Preprocessor,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

/// Disjoint row-index sets produced by [`EncodedDataset::split`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// The instances counterfactuals will be generated for: test-pool rows the
/// classifier assigns to class 0, capped at the requested count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestSelection {
    pub indices: Vec<usize>,
    pub requested: usize,
}

impl TestSelection {
    /// How many instances short of the request the pool came up.
    pub fn shortfall(&self) -> usize {
        self.requested.saturating_sub(self.indices.len())
    }
}

impl EncodedDataset {
    /// Fits the preprocessor on `fit_rows` (pass the training indices; an
    /// empty slice means all rows) and encodes the whole table with it.
    pub fn from_raw(
        schema: &TableSchema,
        table: &RawTable,
        fit_rows: &[usize],
    ) -> Result<EncodedDataset, DatasetError> {
        let owned_fit: Vec<&super::table::RawRow> = if fit_rows.is_empty() {
            table.rows.iter().collect()
        } else {
            fit_rows.iter().map(|&i| &table.rows[i]).collect()
        };
        let fit_mat: Vec<super::table::RawRow> = owned_fit.into_iter().cloned().collect();
        let preprocessor = Preprocessor::fit(schema, &fit_mat)?;
        let rows = table
            .rows
            .iter()
            .map(|r| preprocessor.encode_row(schema, r))
            .collect();
        Ok(EncodedDataset {
            schema: schema.clone(),
            preprocessor,
            rows,
            labels: table.labels.clone(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.schema.layout().k
    }

    /// Seeded shuffle, then `min(train_cap, 80%)` of the rows become the
    /// training set and the remainder the test pool. Same seed, same split.
    pub fn split(&self, train_cap: usize, seed: u64) -> SplitAssignment {
        let mut indices: Vec<usize> = (0..self.n_rows()).collect();
        let mut rng = derive_rng(seed, &[TAG_SPLIT]);
        indices.shuffle(&mut rng);
        let eighty = (self.n_rows() * 8) / 10;
        let n_train = train_cap.min(eighty).max(1);
        SplitAssignment {
            train: indices[..n_train].to_vec(),
            test: indices[n_train..].to_vec(),
        }
    }

    /// Picks up to `n` test-pool rows for which `is_class0` holds (the
    /// rows counterfactual generation starts from), preserving the pool's
    /// seeded order so the choice is reproducible. Callers should surface
    /// [`TestSelection::shortfall`] as a warning when it is non-zero.
    pub fn select_test_instances(
        &self,
        split: &SplitAssignment,
        n: usize,
        is_class0: impl Fn(&[f64]) -> bool,
    ) -> TestSelection {
        let mut indices = Vec::with_capacity(n);
        for &i in &split.test {
            if indices.len() == n {
                break;
            }
            if is_class0(&self.rows[i]) {
                indices.push(i);
            }
        }
        TestSelection {
            indices,
            requested: n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::table::RawRow;

    fn toy_dataset(n: usize) -> EncodedDataset {
        let schema = TableSchema::from_toml_str(
            r#"
            [[column]]
            name = "a"
            kind = "numerical"

            [[column]]
            name = "c"
            kind = "categorical"
            categories = ["p", "q"]

            [target]
            column = "label"
            positive = "yes"
        "#,
        )
        .unwrap();
        let rows: Vec<RawRow> = (0..n)
            .map(|i| RawRow {
                numericals: vec![i as f64],
                categoricals: vec![i % 2],
            })
            .collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        EncodedDataset::from_raw(&schema, &RawTable { rows, labels }, &[]).unwrap()
    }

    #[test]
    fn split_is_disjoint_capped_and_deterministic() {
        let ds = toy_dataset(100);
        let s1 = ds.split(64, 9);
        let s2 = ds.split(64, 9);
        assert_eq!(s1, s2);
        assert_eq!(s1.train.len(), 64);
        assert_eq!(s1.test.len(), 36);
        let mut all: Vec<usize> = s1.train.iter().chain(&s1.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());

        // cap above 80% falls back to the 80% ceiling
        let s3 = ds.split(1000, 9);
        assert_eq!(s3.train.len(), 80);

        let other_seed = ds.split(64, 10);
        assert_ne!(s1.train, other_seed.train);
    }

    #[test]
    fn selection_caps_at_n_when_pool_is_larger() {
        let ds = toy_dataset(100);
        let split = ds.split(40, 3);
        // every row "is class 0": 60-row pool, ask for 12
        let sel = ds.select_test_instances(&split, 12, |_| true);
        assert_eq!(sel.indices.len(), 12);
        assert_eq!(sel.shortfall(), 0);
        assert_eq!(sel.indices, split.test[..12]);
    }

    #[test]
    fn selection_shortfall_reported() {
        let ds = toy_dataset(50);
        let split = ds.split(40, 3);
        let sel = ds.select_test_instances(&split, 10, |_| false);
        assert!(sel.indices.is_empty());
        assert_eq!(sel.shortfall(), 10);
    }

    #[test]
    fn selection_filter_sees_encoded_rows() {
        let ds = toy_dataset(60);
        let split = ds.split(30, 5);
        // "class 0" = one-hot block selects category p (index 1 of the row)
        let sel = ds.select_test_instances(&split, 100, |x| x[1] == 1.0);
        assert!(!sel.indices.is_empty());
        for &i in &sel.indices {
            assert_eq!(ds.rows[i][1], 1.0);
        }
    }
}
