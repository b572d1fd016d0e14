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

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ColumnType;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Column {
            name: name.into(),
            ty,
        }
    }

    pub fn width(&self) -> usize {
        self.ty.width()
    }
}

/// Ordered list of fixed-width columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Schema {
    columns: Vec<Column>,
    offsets: Vec<usize>,
    tuple_width: usize,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidSchema("schema needs at least one column".into()));
        }
        let mut offsets = Vec::with_capacity(columns.len());
        let mut width = 0;
        for c in &columns {
            if c.width() == 0 {
                return Err(Error::InvalidSchema(format!("column `{}` has zero width", c.name)));
            }
            offsets.push(width);
            width += c.width();
        }
        Ok(Schema {
            columns,
            offsets,
            tuple_width: width,
        })
    }

    /// Parses `name:type,name:type,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let columns = spec
            .split(',')
            .map(|part| {
                let (name, ty) = part
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidSchema(format!("expected name:type, got `{part}`")))?;
                let ty = ColumnType::parse(ty)
                    .ok_or_else(|| Error::InvalidSchema(format!("unknown column type `{ty}`")))?;
                Ok(Column::new(name.trim(), ty))
            })
            .collect::<Result<Vec<_>>>()?;
        Schema::new(columns)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, i: usize) -> Result<&Column> {
        self.columns.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.columns.len(),
        })
    }

    pub fn ty(&self, i: usize) -> ColumnType {
        self.columns[i].ty
    }

    /// Byte offset of column `i` within a row-major tuple.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn tuple_width(&self) -> usize {
        self.tuple_width
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Schema of the concatenation `self ++ other`.
    pub fn concat(&self, other: &Schema) -> Schema {
        let mut cols = self.columns.clone();
        cols.extend(other.columns.iter().cloned());
        Schema::new(cols).expect("concatenation of valid schemas is valid")
    }

    pub fn project(&self, indices: &[usize]) -> Result<Schema> {
        let cols = indices
            .iter()
            .map(|&i| self.column(i).cloned())
            .collect::<Result<Vec<_>>>()?;
        Schema::new(cols)
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", c.name, c.ty)?;
        }
        Ok(())
    }
}
