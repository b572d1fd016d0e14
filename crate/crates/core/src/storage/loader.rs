// Copyright 2026 The UoT Engine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Delimited text ingestion (`|`-separated by default, one tuple per line).

use std::io::{BufRead, Write};

use super::{Catalog, ColumnType, Layout, Schema, TableHandle, Value};
use crate::error::{Error, Result};

pub const DEFAULT_DELIMITER: char = '|';

/// Parses one line against `schema`. A trailing delimiter is accepted.
pub fn parse_line(schema: &Schema, line: &str, delimiter: char, line_no: usize) -> Result<Vec<Value>> {
    let mut fields: Vec<&str> = line.split(delimiter).collect();
    if fields.len() == schema.len() + 1 && fields.last() == Some(&"") {
        fields.pop();
    }
    if fields.len() != schema.len() {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("expected {} fields, found {}", schema.len(), fields.len()),
        });
    }
    fields
        .iter()
        .zip(schema.columns())
        .map(|(raw, col)| {
            let err = |what: &str| Error::Parse {
                line: line_no,
                msg: format!("column `{}`: {what} `{raw}`", col.name),
            };
            match col.ty {
                ColumnType::Int64 => raw.trim().parse().map(Value::Int).map_err(|_| err("bad integer")),
                ColumnType::Float64 => raw.trim().parse().map(Value::Float).map_err(|_| err("bad float")),
                ColumnType::Bytes(n) => {
                    if raw.len() > n {
                        Err(err("string longer than column width"))
                    } else {
                        Ok(Value::Bytes(raw.as_bytes().to_vec()))
                    }
                }
            }
        })
        .collect()
}

/// Loads delimited text into a new base table.
pub fn load_delimited<R: BufRead>(
    catalog: &mut Catalog,
    name: &str,
    schema: Schema,
    layout: Layout,
    block_size: usize,
    reader: R,
    delimiter: char,
) -> Result<TableHandle> {
    let mut tuples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        tuples.push(parse_line(&schema, &line, delimiter, i + 1)?);
    }
    catalog.create_table(name, schema, layout, block_size)?;
    catalog.insert_tuples(name, &tuples)?;
    catalog.handle(name)
}

/// Writes tuples in the same format `load_delimited` reads, with a
/// trailing delimiter per line.
pub fn write_delimited<W: Write>(
    mut out: W,
    tuples: impl IntoIterator<Item = Vec<Value>>,
    delimiter: char,
) -> Result<()> {
    for t in tuples {
        for v in &t {
            write!(out, "{v}{delimiter}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
