//! Relational star-schema store.
//!
//! A [`StarSchema`] is read from a JSON manifest; each declared table is then
//! ingested from CSV into an immutable [`TableData`]. [`StarData`] bundles the
//! schema with one loaded table per declaration.

mod csv_io;
mod validate;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use csv_io::{export_csv, ingest_csv, ingest_csv_reader, write_csv};
pub use validate::{validate_star, ValidationReport, Violation};

use crate::value::{ColumnType, Value};

#[derive(Debug, thiserror::Error)]
pub enum StarError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest syntax error at line {line}, column {column}: {message}")]
    ManifestSyntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{column}` in table `{table}`")]
    UnknownColumn { table: String, column: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("table `{table}`: header mismatch, expected [{expected}], found [{found}]")]
    HeaderMismatch {
        table: String,
        expected: String,
        found: String,
    },
    #[error("table `{table}` row {row}, column `{column}`: {message}")]
    Coercion {
        table: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("table `{table}` row {row}: null in key column `{column}`")]
    NullKey { table: String, row: usize, column: String },
    #[error("table `{table}`: duplicate primary key `{key}` at row {row}")]
    DuplicateKey { table: String, key: String, row: usize },
    #[error("table `{table}`: malformed CSV: {message}")]
    Csv { table: String, message: String },
    #[error("table `{0}` has not been loaded")]
    MissingTable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        ColumnDef { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    /// CSV file name relative to the data directory; defaults to `<name>.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn file_name(&self) -> String {
        self.file.clone().unwrap_or_else(|| format!("{}.csv", self.name))
    }
}

/// A fact-to-dimension link: `fact.fact_fk = table.dim_key`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionRef {
    pub table: String,
    pub fact_fk: String,
    pub dim_key: String,
}

/// Ordered hierarchy levels of a dimension table, finest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub dimension: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarSchema {
    pub fact: String,
    #[serde(default)]
    pub tables: Vec<TableDef>,
    #[serde(default)]
    pub dimensions: Vec<DimensionRef>,
    #[serde(default)]
    pub hierarchies: Vec<Hierarchy>,
    #[serde(default)]
    pub measures: Vec<String>,
}

impl StarSchema {
    /// Parses and checks a manifest document.
    pub fn from_json_str(text: &str) -> Result<StarSchema, StarError> {
        let schema: StarSchema = serde_json::from_str(text).map_err(|e| StarError::ManifestSyntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        schema.check()?;
        Ok(schema)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn fact_table(&self) -> &TableDef {
        self.table(&self.fact).expect("checked at construction")
    }

    pub fn dimension(&self, table: &str) -> Option<&DimensionRef> {
        self.dimensions.iter().find(|d| d.table == table)
    }

    pub fn hierarchy(&self, dimension: &str) -> Option<&Hierarchy> {
        self.hierarchies.iter().find(|h| h.dimension == dimension)
    }

    /// Key columns of a table, in which nulls are rejected at ingest.
    pub fn key_columns(&self, table: &str) -> Vec<&str> {
        if table == self.fact {
            self.dimensions.iter().map(|d| d.fact_fk.as_str()).collect()
        } else {
            self.dimensions
                .iter()
                .filter(|d| d.table == table)
                .map(|d| d.dim_key.as_str())
                .collect()
        }
    }

    fn require_column(&self, table: &str, column: &str) -> Result<&ColumnDef, StarError> {
        let def = self
            .table(table)
            .ok_or_else(|| StarError::UnknownTable(table.to_string()))?;
        def.column(column).ok_or_else(|| StarError::UnknownColumn {
            table: table.to_string(),
            column: column.to_string(),
        })
    }

    /// Checks every name reference in the manifest.
    pub fn check(&self) -> Result<(), StarError> {
        let mut table_names = HashSet::new();
        for t in &self.tables {
            if !table_names.insert(t.name.as_str()) {
                return Err(StarError::InvalidSchema(format!("table `{}` declared twice", t.name)));
            }
            let mut cols = HashSet::new();
            for c in &t.columns {
                if !cols.insert(c.name.as_str()) {
                    return Err(StarError::InvalidSchema(format!(
                        "column `{}` declared twice in table `{}`",
                        c.name, t.name
                    )));
                }
            }
        }
        if self.table(&self.fact).is_none() {
            return Err(StarError::UnknownTable(self.fact.clone()));
        }

        let mut dims = HashSet::new();
        let mut fks = HashSet::new();
        for d in &self.dimensions {
            if d.table == self.fact {
                return Err(StarError::InvalidSchema(format!(
                    "fact table `{}` cannot be its own dimension",
                    d.table
                )));
            }
            if !dims.insert(d.table.as_str()) {
                return Err(StarError::InvalidSchema(format!(
                    "dimension `{}` referenced more than once",
                    d.table
                )));
            }
            if !fks.insert(d.fact_fk.as_str()) {
                return Err(StarError::InvalidSchema(format!(
                    "foreign key `{}` used by more than one dimension",
                    d.fact_fk
                )));
            }
            self.require_column(&self.fact, &d.fact_fk)?;
            self.require_column(&d.table, &d.dim_key)?;
        }

        let mut hier = HashSet::new();
        for h in &self.hierarchies {
            if self.dimension(&h.dimension).is_none() {
                return Err(if self.table(&h.dimension).is_none() {
                    StarError::UnknownTable(h.dimension.clone())
                } else {
                    StarError::InvalidSchema(format!("hierarchy on `{}`, which is not a dimension", h.dimension))
                });
            }
            if !hier.insert(h.dimension.as_str()) {
                return Err(StarError::InvalidSchema(format!(
                    "dimension `{}` has more than one hierarchy",
                    h.dimension
                )));
            }
            if h.levels.is_empty() {
                return Err(StarError::InvalidSchema(format!(
                    "hierarchy on `{}` has no levels",
                    h.dimension
                )));
            }
            let mut seen = HashSet::new();
            for level in &h.levels {
                self.require_column(&h.dimension, level)?;
                if !seen.insert(level.as_str()) {
                    return Err(StarError::InvalidSchema(format!(
                        "level `{level}` repeated in hierarchy on `{}`",
                        h.dimension
                    )));
                }
            }
        }

        for m in &self.measures {
            self.require_column(&self.fact, m)?;
        }
        Ok(())
    }
}

/// Reads a schema manifest from disk without touching any data file.
pub fn load_schema_manifest(path: impl AsRef<Path>) -> Result<StarSchema, StarError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| StarError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    StarSchema::from_json_str(&text)
}

/// An immutable, typed table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableData {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub rows: Vec<Vec<Value>>,
}

impl TableData {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<ColumnDef>,
        rows: Vec<Vec<Value>>,
    ) -> Result<TableData, StarError> {
        let name = name.into();
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(StarError::InvalidSchema(format!(
                    "column `{}` declared twice in table `{name}`",
                    c.name
                )));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(StarError::Csv {
                    table: name,
                    message: format!("row {} has {} values, expected {}", i + 1, row.len(), columns.len()),
                });
            }
            for (v, c) in row.iter().zip(&columns) {
                if !v.conforms_to(c.ty) {
                    return Err(StarError::Coercion {
                        table: name,
                        row: i + 1,
                        column: c.name.clone(),
                        message: format!("value `{v}` is not {}", c.ty),
                    });
                }
            }
        }
        Ok(TableData { name, columns, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// A schema together with one loaded table per declared table.
#[derive(Debug, Clone)]
pub struct StarData {
    pub schema: StarSchema,
    pub tables: BTreeMap<String, TableData>,
}

impl StarData {
    pub fn new(schema: StarSchema, tables: impl IntoIterator<Item = TableData>) -> Result<StarData, StarError> {
        let tables: BTreeMap<_, _> = tables.into_iter().map(|t| (t.name.clone(), t)).collect();
        for def in &schema.tables {
            let t = tables
                .get(&def.name)
                .ok_or_else(|| StarError::MissingTable(def.name.clone()))?;
            if t.columns != def.columns {
                return Err(StarError::InvalidSchema(format!(
                    "loaded table `{}` does not match its declaration",
                    def.name
                )));
            }
        }
        if let Some(extra) = tables.keys().find(|n| schema.table(n).is_none()) {
            return Err(StarError::UnknownTable(extra.clone()));
        }
        Ok(StarData { schema, tables })
    }

    /// Loads the manifest `schema.json` and every table CSV from a directory.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<StarData, StarError> {
        let dir = dir.as_ref();
        let schema = load_schema_manifest(dir.join("schema.json"))?;
        let mut tables = Vec::with_capacity(schema.tables.len());
        for def in &schema.tables {
            tables.push(ingest_csv(&schema, &def.name, dir.join(def.file_name()))?);
        }
        StarData::new(schema, tables)
    }

    pub fn table(&self, name: &str) -> Option<&TableData> {
        self.tables.get(name)
    }

    pub fn fact(&self) -> &TableData {
        &self.tables[&self.schema.fact]
    }
}
