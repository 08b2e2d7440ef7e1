use super::schema::{ColumnKind, TableSchema};
use super::DatasetError;
use std::path::Path;

/// One parsed row: numerical values and categorical indices, each in the
/// schema's per-kind declaration order. Categoricals are stored as indices
/// into the schema domain, not strings.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub numericals: Vec<f64>,
    pub categoricals: Vec<usize>,
}

/// A parsed CSV: feature rows plus binary labels (1 where the target cell
/// equals the schema's positive label).
#[derive(Debug, Clone)]
pub struct RawTable {
    pub rows: Vec<RawRow>,
    pub labels: Vec<u8>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Ingests a CSV with a header row. The header must contain exactly the
/// schema's feature columns plus the target column (any order); cells are
/// typed per the schema, and missing values are rejected.
pub fn load_csv(path: &Path, schema: &TableSchema) -> Result<RawTable, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut expected: Vec<String> = (0..schema.declaration().len())
        .map(|pos| schema.declared_name(pos).to_string())
        .collect();
    expected.push(schema.target_column().to_string());
    {
        let mut want = expected.clone();
        let mut have = headers.clone();
        want.sort();
        have.sort();
        if want != have {
            return Err(DatasetError::HeaderMismatch {
                expected,
                found: headers,
            });
        }
    }
    // map declaration position -> csv column index
    let col_of = |name: &str| headers.iter().position(|h| h == name).expect("checked above");
    let feature_cols: Vec<usize> = (0..schema.declaration().len())
        .map(|pos| col_of(schema.declared_name(pos)))
        .collect();
    let target_col = col_of(schema.target_column());

    let n_num = schema.layout().n_num;
    let n_cat = schema.layout().n_cat;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let mut numericals = vec![0.0; n_num];
        let mut categoricals = vec![0usize; n_cat];
        for (pos, &(kind, within)) in schema.declaration().iter().enumerate() {
            let cell = record.get(feature_cols[pos]).unwrap_or("").trim();
            if cell.is_empty() {
                return Err(DatasetError::MissingValue {
                    column: schema.declared_name(pos).to_string(),
                    row: row_idx,
                });
            }
            match kind {
                ColumnKind::Numerical => {
                    let v: f64 = cell.parse().map_err(|_| DatasetError::BadNumeric {
                        column: schema.declared_name(pos).to_string(),
                        row: row_idx,
                        value: cell.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(DatasetError::BadNumeric {
                            column: schema.declared_name(pos).to_string(),
                            row: row_idx,
                            value: cell.to_string(),
                        });
                    }
                    numericals[within] = v;
                }
                ColumnKind::Categorical => {
                    categoricals[within] = schema.category_index(within, cell)?;
                }
            }
        }
        let target_cell = record.get(target_col).unwrap_or("").trim();
        if target_cell.is_empty() {
            return Err(DatasetError::MissingValue {
                column: schema.target_column().to_string(),
                row: row_idx,
            });
        }
        labels.push(u8::from(target_cell == schema.positive_label()));
        rows.push(RawRow {
            numericals,
            categoricals,
        });
    }
    Ok(RawTable { rows, labels })
}

/// Writes rows back out in schema declaration order, labels rendered as the
/// positive label or `"no_" + positive label`. Inverse of [`load_csv`] for
/// tables whose negative label was produced the same way.
pub fn write_csv(
    path: &Path,
    schema: &TableSchema,
    rows: &[RawRow],
    labels: &[u8],
) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = (0..schema.declaration().len())
        .map(|pos| schema.declared_name(pos).to_string())
        .collect();
    header.push(schema.target_column().to_string());
    writer.write_record(&header).map_err(|e| csv_error(path, e))?;
    let negative = format!("no_{}", schema.positive_label());
    for (row, &label) in rows.iter().zip(labels) {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for &(kind, within) in schema.declaration() {
            match kind {
                ColumnKind::Numerical => {
                    // shortest representation that round-trips through f64
                    record.push(format!("{}", row.numericals[within]));
                }
                ColumnKind::Categorical => {
                    record.push(schema.domain(within)[row.categoricals[within]].clone());
                }
            }
        }
        record.push(if label == 1 {
            schema.positive_label().to_string()
        } else {
            negative.clone()
        });
        writer.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const SCHEMA: &str = r#"
        [[column]]
        name = "age"
        kind = "numerical"

        [[column]]
        name = "color"
        kind = "categorical"
        categories = ["red", "green", "blue"]

        [target]
        column = "label"
        positive = "yes"
    "#;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows() {
        let schema = TableSchema::from_toml_str(SCHEMA).unwrap();
        let csv = write_temp("age,color,label\n30,red,yes\n41,blue,no\n25,green,yes\n");
        let table = load_csv(csv.path(), &schema).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table.rows[0], RawRow { numericals: vec![30.0], categoricals: vec![0] });
        assert_eq!(table.rows[1].categoricals, vec![2]);
        assert_eq!(table.labels, vec![1, 0, 1]);
    }

    #[test]
    fn header_order_is_free_but_set_is_fixed() {
        let schema = TableSchema::from_toml_str(SCHEMA).unwrap();
        let csv = write_temp("label,color,age\nyes,green,18\n");
        let table = load_csv(csv.path(), &schema).unwrap();
        assert_eq!(table.rows[0].numericals, vec![18.0]);
        assert_eq!(table.rows[0].categoricals, vec![1]);

        let bad = write_temp("age,colour,label\n30,red,yes\n");
        assert!(matches!(
            load_csv(bad.path(), &schema),
            Err(DatasetError::HeaderMismatch { .. })
        ));
    }

    #[test]
    fn unknown_category_names_column_and_value() {
        let schema = TableSchema::from_toml_str(SCHEMA).unwrap();
        let csv = write_temp("age,color,label\n30,mauve,yes\n");
        let err = load_csv(csv.path(), &schema).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("color") && msg.contains("mauve"), "{msg}");
    }

    #[test]
    fn bad_numeric_reports_row_index() {
        let schema = TableSchema::from_toml_str(SCHEMA).unwrap();
        let csv = write_temp("age,color,label\n30,red,yes\nthirty,blue,no\n");
        let err = load_csv(csv.path(), &schema).unwrap_err();
        match err {
            DatasetError::BadNumeric { column, row, value } => {
                assert_eq!((column.as_str(), row, value.as_str()), ("age", 1, "thirty"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_value_rejected() {
        let schema = TableSchema::from_toml_str(SCHEMA).unwrap();
        let csv = write_temp("age,color,label\n30,,yes\n");
        assert!(matches!(
            load_csv(csv.path(), &schema),
            Err(DatasetError::MissingValue { .. })
        ));
    }

    #[test]
    fn write_then_load_round_trips() {
        let schema = TableSchema::from_toml_str(SCHEMA).unwrap();
        let rows = vec![
            RawRow { numericals: vec![30.5], categoricals: vec![2] },
            RawRow { numericals: vec![-4.25], categoricals: vec![0] },
        ];
        let labels = vec![1, 0];
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(out.path(), &schema, &rows, &labels).unwrap();
        let back = load_csv(out.path(), &schema).unwrap();
        assert_eq!(back.rows, rows);
        assert_eq!(back.labels, labels);
    }
}
