use super::schema::TableSchema;
use super::table::RawRow;
use super::DatasetError;

/// Per-column statistics for the encode/decode pair and for metric
/// standardization. Fit on the training split only — test rows never touch
/// the scaling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    /// Per numerical column: (min, max) for the [0, 1] scaling.
    pub num_min: Vec<f64>,
    pub num_max: Vec<f64>,
    /// Per numerical column: population mean and std, for standardized
    /// distance metrics.
    pub num_mean: Vec<f64>,
    pub num_std: Vec<f64>,
    /// Columns whose fitted min equals max. They encode to 0.0 and their
    /// std is substituted by 1 so standardization never divides by zero.
    pub constant: Vec<bool>,
}

impl Preprocessor {
    /// Computes min/max/mean/std per numerical column over `rows`
    /// (population statistics; at least two rows required).
    pub fn fit(schema: &TableSchema, rows: &[RawRow]) -> Result<Preprocessor, DatasetError> {
        if rows.len() < 2 {
            return Err(DatasetError::TooFewRows { found: rows.len() });
        }
        let n_num = schema.layout().n_num;
        let n = rows.len() as f64;
        let mut num_min = vec![f64::INFINITY; n_num];
        let mut num_max = vec![f64::NEG_INFINITY; n_num];
        let mut num_mean = vec![0.0; n_num];
        for row in rows {
            for (i, &v) in row.numericals.iter().enumerate() {
                num_min[i] = num_min[i].min(v);
                num_max[i] = num_max[i].max(v);
                num_mean[i] += v;
            }
        }
        for m in num_mean.iter_mut() {
            *m /= n;
        }
        let mut num_std = vec![0.0; n_num];
        for row in rows {
            for (i, &v) in row.numericals.iter().enumerate() {
                let d = v - num_mean[i];
                num_std[i] += d * d;
            }
        }
        let mut constant = vec![false; n_num];
        for i in 0..n_num {
            num_std[i] = (num_std[i] / n).sqrt();
            if num_min[i] == num_max[i] {
                constant[i] = true;
                num_std[i] = 1.0;
            }
        }
        Ok(Preprocessor {
            num_min,
            num_max,
            num_mean,
            num_std,
            constant,
        })
    }

    /// Min-max encodes one numerical value; out-of-range inputs clip to
    /// [0, 1] so the encoded invariant holds even for test rows outside
    /// the training range. Constant columns encode to 0.
    pub fn encode_numerical(&self, i: usize, v: f64) -> f64 {
        if self.constant[i] {
            return 0.0;
        }
        ((v - self.num_min[i]) / (self.num_max[i] - self.num_min[i])).clamp(0.0, 1.0)
    }

    /// Inverse of [`Preprocessor::encode_numerical`]; the encoded value is
    /// clipped to [0, 1] first, so raw outputs always land in [min, max].
    pub fn decode_numerical(&self, i: usize, x: f64) -> f64 {
        if self.constant[i] {
            return self.num_min[i];
        }
        self.num_min[i] + x.clamp(0.0, 1.0) * (self.num_max[i] - self.num_min[i])
    }

    /// Standardizes a raw numerical value with the fitted train statistics.
    pub fn standardize(&self, i: usize, v: f64) -> f64 {
        (v - self.num_mean[i]) / self.num_std[i]
    }

    /// Encodes a parsed row into the flat layout: numerical block, then one
    /// one-hot block per categorical feature.
    pub fn encode_row(&self, schema: &TableSchema, row: &RawRow) -> Vec<f64> {
        let layout = schema.layout();
        let mut x = vec![0.0; layout.k];
        for (i, &v) in row.numericals.iter().enumerate() {
            x[i] = self.encode_numerical(i, v);
        }
        for (i, &cat) in row.categoricals.iter().enumerate() {
            x[layout.cat_offsets[i] + cat] = 1.0;
        }
        x
    }

    /// Decodes a flat vector back to a parsed row. Each categorical block
    /// must be exactly one-hot (entries 0 or 1, summing to 1); anything
    /// softer is a contract violation, not input to round.
    pub fn decode_row(&self, schema: &TableSchema, x: &[f64]) -> Result<RawRow, DatasetError> {
        let layout = schema.layout();
        if x.len() != layout.k {
            return Err(DatasetError::WidthMismatch {
                expected: layout.k,
                found: x.len(),
            });
        }
        let mut numericals = Vec::with_capacity(layout.n_num);
        for i in 0..layout.n_num {
            numericals.push(self.decode_numerical(i, x[i]));
        }
        let mut categoricals = Vec::with_capacity(layout.n_cat);
        for i in 0..layout.n_cat {
            let block = &x[layout.cat_block(i)];
            let ones = block.iter().filter(|&&v| v == 1.0).count();
            let zeros = block.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || zeros != block.len() - 1 {
                return Err(DatasetError::NotOneHot {
                    column: schema.categorical_names()[i].clone(),
                });
            }
            categoricals.push(block.iter().position(|&v| v == 1.0).expect("one 1 present"));
        }
        Ok(RawRow {
            numericals,
            categoricals,
        })
    }
}
