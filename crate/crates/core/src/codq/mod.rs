//! Complex object definition queries.
//!
//! A query selects attributes from a fact table and the tables joined to it,
//! tagging each attribute with the [`Role`] it plays downstream. Several
//! queries over the same fact table compose into one [`GlobalCodq`], which
//! determines a single [`ObjectSchema`] and, once executed over a
//! [`StarData`], a single [`ObjectSet`].

mod materialize;
mod parser;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use materialize::materialize_objects;
pub use parser::parse_codq;

use crate::star::StarSchema;
use crate::value::{ColumnType, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodqError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("invalid query at byte {offset}: {message}")]
    Structure { offset: usize, message: String },
    #[error("duplicate output attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("queries disagree on the fact table: `{expected}` vs `{found}`")]
    FactMismatch { expected: String, found: String },
    #[error("no queries to compose")]
    Empty,
    #[error("cannot resolve `{0}`")]
    Unresolved(String),
}

/// What an attribute is used for once objects reach the cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Groups objects into cube cells.
    Coordinate,
    /// Clustering input and regression predictor.
    Feature,
    /// Regression response.
    Target,
    /// Carried along for display only.
    Carry,
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        match s.to_ascii_lowercase().as_str() {
            "coordinate" => Some(Role::Coordinate),
            "feature" => Some(Role::Feature),
            "target" => Some(Role::Target),
            "carry" => Some(Role::Carry),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Coordinate => "coordinate",
            Role::Feature => "feature",
            Role::Target => "target",
            Role::Carry => "carry",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TableRef {
    pub table: String,
    pub alias: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub alias: String,
    pub column: String,
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.alias, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Join {
    pub table: String,
    pub alias: String,
    pub left: ColumnRef,
    pub right: ColumnRef,
}

impl Join {
    /// Splits the condition into (column on the joined table, reference to
    /// the already-bound side).
    pub fn sides(&self) -> (&str, &ColumnRef) {
        if self.left.alias == self.alias {
            (&self.left.column, &self.right)
        } else {
            (&self.right.column, &self.left)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    pub source: ColumnRef,
    pub name: String,
    pub role: Role,
}

/// One parsed query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodqSpec {
    pub fact: TableRef,
    pub joins: Vec<Join>,
    pub projections: Vec<Projection>,
}

impl fmt::Display for CodqSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        for (i, p) in self.projections.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} AS {}:{}", p.source, p.name, p.role.as_str())?;
        }
        write!(f, " FROM {} {}", self.fact.table, self.fact.alias)?;
        for j in &self.joins {
            write!(f, " JOIN {} {} ON {} = {}", j.table, j.alias, j.left, j.right)?;
        }
        Ok(())
    }
}

/// The composition of several queries over one fact table.
///
/// Aliases are rewritten into one namespace: a join edge that appears in more
/// than one part (same table and columns, attached to the same bound alias)
/// is kept once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalCodq {
    pub fact: TableRef,
    pub joins: Vec<Join>,
    pub projections: Vec<Projection>,
    pub parts: Vec<CodqSpec>,
}

impl GlobalCodq {
    /// Parses and composes a single query.
    pub fn from_text(text: &str) -> Result<GlobalCodq, CodqError> {
        compose_global(vec![parse_codq(text)?])
    }

    /// The composed query as a single statement in the same dialect.
    pub fn as_spec(&self) -> CodqSpec {
        CodqSpec {
            fact: self.fact.clone(),
            joins: self.joins.clone(),
            projections: self.projections.clone(),
        }
    }

    fn alias_table(&self, alias: &str) -> Option<&str> {
        if self.fact.alias == alias {
            return Some(&self.fact.table);
        }
        self.joins.iter().find(|j| j.alias == alias).map(|j| j.table.as_str())
    }
}

pub fn compose_global(specs: Vec<CodqSpec>) -> Result<GlobalCodq, CodqError> {
    let first = specs.first().ok_or(CodqError::Empty)?;
    let fact = first.fact.clone();

    let mut used_aliases: HashSet<String> = HashSet::from([fact.alias.clone()]);
    let mut edges: HashMap<(String, String, String, String), String> = HashMap::new();
    let mut joins = Vec::new();
    let mut projections = Vec::new();
    let mut names = HashSet::new();

    for spec in &specs {
        if spec.fact.table != fact.table {
            return Err(CodqError::FactMismatch {
                expected: fact.table.clone(),
                found: spec.fact.table.clone(),
            });
        }
        let mut local: HashMap<&str, String> = HashMap::new();
        local.insert(&spec.fact.alias, fact.alias.clone());
        // Edges are shared across queries only; two aliases of one edge in
        // the same statement join independently.
        let mut spec_edges = Vec::new();
        let rewrite = |r: &ColumnRef, local: &HashMap<&str, String>| -> Result<ColumnRef, CodqError> {
            let alias = local
                .get(r.alias.as_str())
                .ok_or_else(|| CodqError::Unresolved(r.to_string()))?;
            Ok(ColumnRef {
                alias: alias.clone(),
                column: r.column.clone(),
            })
        };

        for j in &spec.joins {
            let (own_col, other) = j.sides();
            let other_global = local
                .get(other.alias.as_str())
                .ok_or_else(|| CodqError::Unresolved(other.to_string()))?
                .clone();
            let key = (j.table.clone(), own_col.to_string(), other_global, other.column.clone());
            if let Some(existing) = edges.get(&key) {
                local.insert(&j.alias, existing.clone());
                continue;
            }
            let mut alias = j.alias.clone();
            let mut n = 2;
            while used_aliases.contains(&alias) {
                alias = format!("{}_{n}", j.alias);
                n += 1;
            }
            used_aliases.insert(alias.clone());
            spec_edges.push((key, alias.clone()));
            local.insert(&j.alias, alias.clone());
            joins.push(Join {
                table: j.table.clone(),
                alias,
                left: rewrite(&j.left, &local)?,
                right: rewrite(&j.right, &local)?,
            });
        }

        for p in &spec.projections {
            if !names.insert(p.name.clone()) {
                return Err(CodqError::DuplicateAttribute(p.name.clone()));
            }
            projections.push(Projection {
                source: rewrite(&p.source, &local)?,
                name: p.name.clone(),
                role: p.role,
            });
        }
        for (key, alias) in spec_edges {
            edges.entry(key).or_insert(alias);
        }
    }

    Ok(GlobalCodq {
        fact,
        joins,
        projections,
        parts: specs,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Attribute {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
    pub role: Role,
    /// Source table and column the attribute was projected from.
    pub table: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObjectSchema {
    pub attributes: Vec<Attribute>,
}

impl ObjectSchema {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = (usize, &Attribute)> {
        self.attributes.iter().enumerate().filter(move |(_, a)| a.role == role)
    }
}

/// Resolves every table and column the query references and types its output.
pub fn derive_object_schema(q: &GlobalCodq, schema: &StarSchema) -> Result<ObjectSchema, CodqError> {
    let column_type = |r: &ColumnRef| -> Result<(String, ColumnType), CodqError> {
        let table = q
            .alias_table(&r.alias)
            .ok_or_else(|| CodqError::Unresolved(format!("alias `{}`", r.alias)))?;
        let def = schema
            .table(table)
            .ok_or_else(|| CodqError::Unresolved(format!("table `{table}`")))?;
        let col = def
            .column(&r.column)
            .ok_or_else(|| CodqError::Unresolved(format!("column `{table}.{}`", r.column)))?;
        Ok((table.to_string(), col.ty))
    };

    if schema.table(&q.fact.table).is_none() {
        return Err(CodqError::Unresolved(format!("table `{}`", q.fact.table)));
    }
    for j in &q.joins {
        if schema.table(&j.table).is_none() {
            return Err(CodqError::Unresolved(format!("table `{}`", j.table)));
        }
        column_type(&j.left)?;
        column_type(&j.right)?;
    }
    let attributes = q
        .projections
        .iter()
        .map(|p| {
            let (table, ty) = column_type(&p.source)?;
            Ok(Attribute {
                name: p.name.clone(),
                ty,
                role: p.role,
                table,
                column: p.source.column.clone(),
            })
        })
        .collect::<Result<_, CodqError>>()?;
    Ok(ObjectSchema { attributes })
}

/// Materialized complex objects.
///
/// Nulls may appear in any attribute; objects with a null coordinate are set
/// aside by the cube builder rather than dropped here.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSet {
    pub schema: ObjectSchema,
    pub objects: Vec<Vec<Value>>,
    /// Fact-table row each object was produced from.
    pub fact_rows: Vec<usize>,
}

impl ObjectSet {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn value(&self, object: usize, attribute: usize) -> &Value {
        &self.objects[object][attribute]
    }
}
