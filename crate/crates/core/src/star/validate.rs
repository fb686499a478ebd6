use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use super::{StarData, StarSchema, TableData};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// A fact row whose foreign key has no matching dimension key.
    ForeignKey {
        fact_row: usize,
        column: String,
        dimension: String,
        value: String,
    },
    /// A finer hierarchy member that maps to more than one coarser member.
    Hierarchy {
        dimension: String,
        finer: String,
        coarser: String,
        member: String,
        coarser_members: Vec<String>,
    },
    /// A measure column that is not numeric, or holds non-numeric values.
    MeasureType {
        measure: String,
        declared: String,
        bad_values: usize,
    },
    MissingTable {
        table: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn foreign_key_violations(&self) -> usize {
        self.violations
            .iter()
            .filter(|v| matches!(v, Violation::ForeignKey { .. }))
            .count()
    }

    pub fn hierarchy_violations(&self) -> usize {
        self.violations
            .iter()
            .filter(|v| matches!(v, Violation::Hierarchy { .. }))
            .count()
    }
}

/// Checks referential integrity, hierarchy functional dependencies and
/// measure types. Problems are reported, never raised.
pub fn validate_star(data: &StarData) -> ValidationReport {
    validate_tables(&data.schema, &data.tables)
}

pub(crate) fn validate_tables(schema: &StarSchema, tables: &BTreeMap<String, TableData>) -> ValidationReport {
    let mut violations = Vec::new();
    let Some(fact) = tables.get(&schema.fact) else {
        violations.push(Violation::MissingTable {
            table: schema.fact.clone(),
        });
        return ValidationReport { violations };
    };

    for d in &schema.dimensions {
        let Some(dim) = tables.get(&d.table) else {
            violations.push(Violation::MissingTable { table: d.table.clone() });
            continue;
        };
        let (Some(fk), Some(key)) = (fact.column_index(&d.fact_fk), dim.column_index(&d.dim_key)) else {
            continue;
        };
        let keys: HashSet<String> = dim
            .rows
            .iter()
            .filter(|r| !r[key].is_null())
            .map(|r| r[key].render())
            .collect();
        for (i, row) in fact.rows.iter().enumerate() {
            let v = &row[fk];
            if v.is_null() || !keys.contains(&v.render()) {
                violations.push(Violation::ForeignKey {
                    fact_row: i,
                    column: d.fact_fk.clone(),
                    dimension: d.table.clone(),
                    value: v.to_string(),
                });
            }
        }
    }

    for h in &schema.hierarchies {
        let Some(dim) = tables.get(&h.dimension) else {
            continue;
        };
        for pair in h.levels.windows(2) {
            let (Some(fi), Some(ci)) = (dim.column_index(&pair[0]), dim.column_index(&pair[1])) else {
                continue;
            };
            let mut mapping: BTreeMap<&Value, Vec<&Value>> = BTreeMap::new();
            for row in &dim.rows {
                if row[fi].is_null() {
                    continue;
                }
                let targets = mapping.entry(&row[fi]).or_default();
                if !targets.contains(&&row[ci]) {
                    targets.push(&row[ci]);
                }
            }
            for (member, targets) in mapping {
                if targets.len() > 1 {
                    violations.push(Violation::Hierarchy {
                        dimension: h.dimension.clone(),
                        finer: pair[0].clone(),
                        coarser: pair[1].clone(),
                        member: member.to_string(),
                        coarser_members: targets.iter().map(|v| v.to_string()).collect(),
                    });
                }
            }
        }
    }

    for m in &schema.measures {
        let Some(idx) = fact.column_index(m) else {
            continue;
        };
        let declared = fact.columns[idx].ty;
        let bad_values = fact
            .rows
            .iter()
            .filter(|r| !r[idx].is_null() && r[idx].as_f64().is_none())
            .count();
        if !declared.is_numeric() || bad_values > 0 {
            violations.push(Violation::MeasureType {
                measure: m.clone(),
                declared: declared.to_string(),
                bad_values,
            });
        }
    }

    ValidationReport { violations }
}
