use std::collections::HashMap;

use super::{derive_object_schema, CodqError, GlobalCodq, ObjectSet};
use crate::star::{StarData, TableData};
use crate::value::Value;

struct JoinStep<'a> {
    table: &'a TableData,
    /// Bound alias slot and column on the already-joined side.
    probe_slot: usize,
    probe_col: usize,
    /// Rows of the joined table keyed by the rendered join column.
    index: HashMap<String, Vec<usize>>,
}

/// Executes the composed query with inner-join semantics.
///
/// Objects come out in fact-row order; a fact row that matches several rows
/// of a joined table yields one object per match, in that table's row order.
/// Join keys compare by canonical text and nulls never match.
pub fn materialize_objects(q: &GlobalCodq, data: &StarData) -> Result<ObjectSet, CodqError> {
    let schema = derive_object_schema(q, &data.schema)?;
    let table = |name: &str| {
        data.table(name)
            .ok_or_else(|| CodqError::Unresolved(format!("table `{name}` (not loaded)")))
    };

    let fact = table(&q.fact.table)?;
    let mut slots: Vec<(&str, &TableData)> = vec![(q.fact.alias.as_str(), fact)];
    let slot_of = |slots: &[(&str, &TableData)], alias: &str| {
        slots
            .iter()
            .position(|(a, _)| *a == alias)
            .ok_or_else(|| CodqError::Unresolved(format!("alias `{alias}`")))
    };
    let column_of = |t: &TableData, col: &str| {
        t.column_index(col)
            .ok_or_else(|| CodqError::Unresolved(format!("column `{}.{col}`", t.name)))
    };

    let mut steps = Vec::with_capacity(q.joins.len());
    for j in &q.joins {
        let joined = table(&j.table)?;
        let (own_col, other) = j.sides();
        let probe_slot = slot_of(&slots, &other.alias)?;
        let probe_col = column_of(slots[probe_slot].1, &other.column)?;
        let key_col = column_of(joined, own_col)?;
        let mut index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, row) in joined.rows.iter().enumerate() {
            if !row[key_col].is_null() {
                index.entry(row[key_col].render()).or_default().push(i);
            }
        }
        steps.push(JoinStep {
            table: joined,
            probe_slot,
            probe_col,
            index,
        });
        slots.push((j.alias.as_str(), joined));
    }

    let projections: Vec<(usize, usize)> = q
        .projections
        .iter()
        .map(|p| {
            let slot = slot_of(&slots, &p.source.alias)?;
            Ok((slot, column_of(slots[slot].1, &p.source.column)?))
        })
        .collect::<Result<_, CodqError>>()?;

    let mut objects = Vec::new();
    let mut fact_rows = Vec::new();
    let mut bound = vec![0usize; slots.len()];
    for f in 0..fact.rows.len() {
        bound[0] = f;
        expand(fact, &steps, 0, &mut bound, &mut |bound: &[usize]| {
            let row = projections
                .iter()
                .map(|&(slot, col)| slot_row(fact, &steps, slot, bound[slot])[col].clone())
                .collect();
            objects.push(row);
            fact_rows.push(f);
        });
    }

    Ok(ObjectSet {
        schema,
        objects,
        fact_rows,
    })
}

fn slot_row<'a>(fact: &'a TableData, steps: &[JoinStep<'a>], slot: usize, row: usize) -> &'a [Value] {
    if slot == 0 {
        &fact.rows[row]
    } else {
        &steps[slot - 1].table.rows[row]
    }
}

fn expand<'a>(
    fact: &'a TableData,
    steps: &[JoinStep<'a>],
    depth: usize,
    bound: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    let Some(step) = steps.get(depth) else {
        emit(bound);
        return;
    };
    let probe = &slot_row(fact, steps, step.probe_slot, bound[step.probe_slot])[step.probe_col];
    if probe.is_null() {
        return;
    }
    if let Some(matches) = step.index.get(&probe.render()) {
        for &m in matches {
            bound[depth + 1] = m;
            expand(fact, steps, depth + 1, bound, emit);
        }
    }
}
