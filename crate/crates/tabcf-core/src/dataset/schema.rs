use super::DatasetError;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::ops::Range;
use std::path::Path;

/// Feature kind of a schema column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Numerical,
    Categorical,
}

/// Declarative description of a table: ordered feature columns, each
/// numerical or categorical with a fixed category list, plus the target
/// column and which of its values maps to the positive class.
///
/// Loaded from a TOML file of this shape (full grammar in the README):
///
/// ```toml
/// [[column]]
/// name = "age"
/// kind = "numerical"
///
/// [[column]]
/// name = "color"
/// kind = "categorical"
/// categories = ["red", "green", "blue"]
///
/// [target]
/// column = "label"
/// positive = "yes"
/// ```
#[derive(Debug, Clone)]
pub struct TableSchema {
    numerical_names: Vec<String>,
    categorical_names: Vec<String>,
    /// Ordered category list per categorical column, schema order.
    domains: Vec<Vec<String>>,
    /// Declaration order of all feature columns, as (kind, index-within-kind).
    declaration: Vec<(ColumnKind, usize)>,
    target_column: String,
    positive_label: String,
    layout: SchemaLayout,
}

/// Derived index geometry of the encoded vector: numerical block first,
/// then one one-hot block per categorical feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaLayout {
    pub n_num: usize,
    pub n_cat: usize,
    /// Start offset of each categorical block in the encoded vector.
    pub cat_offsets: Vec<usize>,
    /// Cardinality of each categorical feature.
    pub cat_sizes: Vec<usize>,
    /// Total encoded width.
    pub k: usize,
}

impl SchemaLayout {
    /// Encoded-vector index range of categorical feature `i`.
    pub fn cat_block(&self, i: usize) -> Range<usize> {
        self.cat_offsets[i]..self.cat_offsets[i] + self.cat_sizes[i]
    }

    /// Number of features (not encoded width).
    pub fn n_features(&self) -> usize {
        self.n_num + self.n_cat
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    #[serde(default)]
    column: Vec<ColumnFile>,
    target: TargetFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnFile {
    name: String,
    kind: String,
    categories: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    column: String,
    positive: String,
}

impl TableSchema {
    pub fn from_path(path: &Path) -> Result<TableSchema, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<TableSchema, DatasetError> {
        let file: SchemaFile =
            toml::from_str(text).map_err(|e| DatasetError::SchemaParse(e.to_string()))?;
        if file.column.is_empty() {
            return Err(DatasetError::InvalidSchema("schema declares no columns".into()));
        }
        let mut numerical_names = Vec::new();
        let mut categorical_names = Vec::new();
        let mut domains = Vec::new();
        let mut declaration = Vec::new();
        let mut seen = Vec::new();
        for col in &file.column {
            if seen.contains(&col.name) || col.name == file.target.column {
                return Err(DatasetError::InvalidSchema(format!(
                    "column name '{}' is not unique",
                    col.name
                )));
            }
            seen.push(col.name.clone());
            match col.kind.as_str() {
                "numerical" => {
                    if col.categories.is_some() {
                        return Err(DatasetError::InvalidSchema(format!(
                            "numerical column '{}' must not list categories",
                            col.name
                        )));
                    }
                    declaration.push((ColumnKind::Numerical, numerical_names.len()));
                    numerical_names.push(col.name.clone());
                }
                "categorical" => {
                    let cats = col.categories.clone().ok_or_else(|| {
                        DatasetError::InvalidSchema(format!(
                            "categorical column '{}' needs a category list",
                            col.name
                        ))
                    })?;
                    if cats.len() < 2 {
                        return Err(DatasetError::InvalidSchema(format!(
                            "categorical column '{}' needs at least 2 categories",
                            col.name
                        )));
                    }
                    let mut unique = cats.clone();
                    unique.sort();
                    unique.dedup();
                    if unique.len() != cats.len() {
                        return Err(DatasetError::InvalidSchema(format!(
                            "categorical column '{}' repeats a category",
                            col.name
                        )));
                    }
                    declaration.push((ColumnKind::Categorical, categorical_names.len()));
                    categorical_names.push(col.name.clone());
                    domains.push(cats);
                }
                other => {
                    return Err(DatasetError::InvalidSchema(format!(
                        "column '{}': unknown kind '{other}' (expected 'numerical' or 'categorical')",
                        col.name
                    )));
                }
            }
        }
        let layout = build_layout(numerical_names.len(), &domains);
        Ok(TableSchema {
            numerical_names,
            categorical_names,
            domains,
            declaration,
            target_column: file.target.column,
            positive_label: file.target.positive,
            layout,
        })
    }

    pub fn layout(&self) -> &SchemaLayout {
        &self.layout
    }

    pub fn numerical_names(&self) -> &[String] {
        &self.numerical_names
    }

    pub fn categorical_names(&self) -> &[String] {
        &self.categorical_names
    }

    /// Ordered category list of categorical feature `i`.
    pub fn domain(&self, i: usize) -> &[String] {
        &self.domains[i]
    }

    pub fn target_column(&self) -> &str {
        &self.target_column
    }

    pub fn positive_label(&self) -> &str {
        &self.positive_label
    }

    /// Feature columns in declaration order (the CSV's logical order).
    pub fn declaration(&self) -> &[(ColumnKind, usize)] {
        &self.declaration
    }

    /// Name of a feature column in declaration order.
    pub fn declared_name(&self, pos: usize) -> &str {
        match self.declaration[pos] {
            (ColumnKind::Numerical, i) => &self.numerical_names[i],
            (ColumnKind::Categorical, i) => &self.categorical_names[i],
        }
    }

    /// Index of `value` in the domain of categorical feature `i`.
    pub fn category_index(&self, i: usize, value: &str) -> Result<usize, DatasetError> {
        self.domains[i]
            .iter()
            .position(|c| c == value)
            .ok_or_else(|| DatasetError::UnknownCategory {
                column: self.categorical_names[i].clone(),
                value: value.to_string(),
            })
    }

    /// Stable 64-bit fingerprint of the schema: column names, kinds,
    /// category lists, and target, in declaration order. Used to refuse
    /// mixing artifacts produced under different schemas.
    pub fn schema_hash(&self) -> u64 {
        let mut hasher = Sha256::new();
        for pos in 0..self.declaration.len() {
            let (kind, i) = self.declaration[pos];
            hasher.update([match kind {
                ColumnKind::Numerical => 0u8,
                ColumnKind::Categorical => 1u8,
            }]);
            hasher.update(self.declared_name(pos).as_bytes());
            hasher.update([0xff]);
            if kind == ColumnKind::Categorical {
                for cat in &self.domains[i] {
                    hasher.update(cat.as_bytes());
                    hasher.update([0xfe]);
                }
            }
        }
        hasher.update(self.target_column.as_bytes());
        hasher.update([0xff]);
        hasher.update(self.positive_label.as_bytes());
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }
}

fn build_layout(n_num: usize, domains: &[Vec<String>]) -> SchemaLayout {
    let mut cat_offsets = Vec::with_capacity(domains.len());
    let mut cat_sizes = Vec::with_capacity(domains.len());
    let mut k = n_num;
    for d in domains {
        cat_offsets.push(k);
        cat_sizes.push(d.len());
        k += d.len();
    }
    SchemaLayout {
        n_num,
        n_cat: domains.len(),
        cat_offsets,
        cat_sizes,
        k,
    }
}
