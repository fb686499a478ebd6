use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use super::{StarError, StarSchema, TableData};
use crate::value::Value;

/// Ingests one declared table from a CSV file.
pub fn ingest_csv(schema: &StarSchema, table: &str, path: impl AsRef<Path>) -> Result<TableData, StarError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| StarError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_csv_reader(schema, table, std::io::BufReader::new(file))
}

/// Ingests one declared table from any CSV byte stream.
///
/// Row numbers in errors are 1-based and count data rows only.
pub fn ingest_csv_reader<R: Read>(schema: &StarSchema, table: &str, reader: R) -> Result<TableData, StarError> {
    let def = schema
        .table(table)
        .ok_or_else(|| StarError::UnknownTable(table.to_string()))?;
    let csv_err = |e: csv::Error| StarError::Csv {
        table: table.to_string(),
        message: e.to_string(),
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let expected: Vec<&str> = def.columns.iter().map(|c| c.name.as_str()).collect();
    if header.iter().map(String::as_str).ne(expected.iter().copied()) {
        return Err(StarError::HeaderMismatch {
            table: table.to_string(),
            expected: expected.join(","),
            found: header.join(","),
        });
    }

    let key_cols: Vec<usize> = schema
        .key_columns(table)
        .into_iter()
        .filter_map(|k| def.column_index(k))
        .collect();
    let primary_key = if table == schema.fact {
        None
    } else {
        schema.dimension(table).and_then(|d| def.column_index(&d.dim_key))
    };
    let mut seen_keys = HashSet::new();

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(csv_err)?;
        let mut row = Vec::with_capacity(def.columns.len());
        for (field, col) in record.iter().zip(&def.columns) {
            let v = Value::parse(field, col.ty).map_err(|message| StarError::Coercion {
                table: table.to_string(),
                row: row_no,
                column: col.name.clone(),
                message,
            })?;
            row.push(v);
        }
        for &k in &key_cols {
            if row[k].is_null() {
                return Err(StarError::NullKey {
                    table: table.to_string(),
                    row: row_no,
                    column: def.columns[k].name.clone(),
                });
            }
        }
        if let Some(pk) = primary_key {
            let key = row[pk].render();
            if !seen_keys.insert(key.clone()) {
                return Err(StarError::DuplicateKey {
                    table: table.to_string(),
                    key,
                    row: row_no,
                });
            }
        }
        rows.push(row);
    }

    Ok(TableData {
        name: def.name.clone(),
        columns: def.columns.clone(),
        rows,
    })
}

/// Writes a table as RFC 4180 CSV with a header row. Nulls become empty fields.
pub fn export_csv<W: Write>(table: &TableData, writer: W) -> Result<(), StarError> {
    let csv_err = |e: csv::Error| StarError::Csv {
        table: table.name.clone(),
        message: e.to_string(),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(writer);
    w.write_record(table.columns.iter().map(|c| c.name.as_str()))
        .map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Value::render)).map_err(csv_err)?;
    }
    w.flush().map_err(|source| StarError::Io {
        path: table.name.clone().into(),
        source,
    })
}

pub fn write_csv(table: &TableData, path: impl AsRef<Path>) -> Result<(), StarError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| StarError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    export_csv(table, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::star::{ColumnDef, DimensionRef, TableDef};
    use crate::value::ColumnType;

    fn schema() -> StarSchema {
        StarSchema {
            fact: "F".into(),
            tables: vec![
                TableDef {
                    name: "F".into(),
                    columns: vec![
                        ColumnDef::new("id", ColumnType::Integer),
                        ColumnDef::new("d_id", ColumnType::Text),
                        ColumnDef::new("amount", ColumnType::Real),
                    ],
                    file: None,
                },
                TableDef {
                    name: "D".into(),
                    columns: vec![
                        ColumnDef::new("id", ColumnType::Text),
                        ColumnDef::new("open", ColumnType::Boolean),
                    ],
                    file: None,
                },
            ],
            dimensions: vec![DimensionRef {
                table: "D".into(),
                fact_fk: "d_id".into(),
                dim_key: "id".into(),
            }],
            hierarchies: vec![],
            measures: vec!["amount".into()],
        }
    }

    #[test]
    fn header_only_gives_empty_table() {
        let t = ingest_csv_reader(&schema(), "F", "id,d_id,amount\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 0);
    }

    #[test]
    fn coercion_error_reports_row_and_column() {
        let data = "id,d_id,amount\n1,a,2.5\nabc,b,1\n";
        match ingest_csv_reader(&schema(), "F", data.as_bytes()) {
            Err(StarError::Coercion { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "id");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_mismatch() {
        let r = ingest_csv_reader(&schema(), "F", "id,amount,d_id\n".as_bytes());
        assert!(matches!(r, Err(StarError::HeaderMismatch { .. })));
    }

    #[test]
    fn null_foreign_key_rejected() {
        let r = ingest_csv_reader(&schema(), "F", "id,d_id,amount\n1,,3\n".as_bytes());
        assert!(matches!(r, Err(StarError::NullKey { row: 1, .. })));
    }

    #[test]
    fn null_measure_allowed() {
        let t = ingest_csv_reader(&schema(), "F", "id,d_id,amount\n1,x,\n".as_bytes()).unwrap();
        assert!(t.rows[0][2].is_null());
    }

    #[test]
    fn duplicate_dimension_key_rejected() {
        let r = ingest_csv_reader(&schema(), "D", "id,open\nx,true\ny,false\nx,true\n".as_bytes());
        match r {
            Err(StarError::DuplicateKey { key, row, .. }) => {
                assert_eq!(key, "x");
                assert_eq!(row, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quoted_fields_survive() {
        let data = "id,open\n\"a, \"\"quoted\"\"\ncity\",TRUE\n";
        let t = ingest_csv_reader(&schema(), "D", data.as_bytes()).unwrap();
        assert_eq!(t.rows[0][0], Value::text("a, \"quoted\"\ncity"));
        assert_eq!(t.rows[0][1], Value::Boolean(true));
    }
}
