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

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// Fixed-width column types. Every value of a type occupies exactly
/// [`ColumnType::width`] bytes inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Int64,
    Float64,
    /// Fixed-length byte string, zero padded.
    Bytes(usize),
}

impl ColumnType {
    pub fn width(self) -> usize {
        match self {
            ColumnType::Int64 | ColumnType::Float64 => 8,
            ColumnType::Bytes(n) => n,
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Int64 | ColumnType::Float64)
    }

    /// Parses `int`, `float`, or `bytesN` / `charN`.
    pub fn parse(s: &str) -> Option<ColumnType> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "int" | "int64" | "i64" | "bigint" => Some(ColumnType::Int64),
            "float" | "float64" | "f64" | "double" => Some(ColumnType::Float64),
            _ => {
                let digits = s
                    .strip_prefix("bytes")
                    .or_else(|| s.strip_prefix("char"))?;
                let n: usize = digits.parse().ok()?;
                (n > 0).then_some(ColumnType::Bytes(n))
            }
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnType::Int64 => f.write_str("int"),
            ColumnType::Float64 => f.write_str("float"),
            ColumnType::Bytes(n) => write!(f, "bytes{n}"),
        }
    }
}

/// A decoded field value.
///
/// Floats compare and hash by bit pattern under IEEE total ordering, so
/// values can be collected into multisets and used as grouping keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Int(i64),
    Float(f64),
    Bytes(Vec<u8>),
}

impl Value {
    pub fn column_type(&self) -> ColumnType {
        match self {
            Value::Int(_) => ColumnType::Int64,
            Value::Float(_) => ColumnType::Float64,
            Value::Bytes(b) => ColumnType::Bytes(b.len()),
        }
    }

    /// Whether this value can be stored in a column of type `ty`.
    /// Byte strings may be shorter than the column and are zero padded.
    pub fn fits(&self, ty: ColumnType) -> bool {
        match (self, ty) {
            (Value::Int(_), ColumnType::Int64) | (Value::Float(_), ColumnType::Float64) => true,
            (Value::Bytes(b), ColumnType::Bytes(n)) => b.len() <= n,
            _ => false,
        }
    }

    /// Writes the fixed-width encoding into `out`, which must be exactly
    /// `ty.width()` bytes long.
    pub fn encode_into(&self, out: &mut [u8]) {
        match self {
            Value::Int(v) => out.copy_from_slice(&v.to_le_bytes()),
            Value::Float(v) => out.copy_from_slice(&v.to_bits().to_le_bytes()),
            Value::Bytes(b) => {
                out[..b.len()].copy_from_slice(b);
                out[b.len()..].fill(0);
            }
        }
    }

    pub fn decode(ty: ColumnType, bytes: &[u8]) -> Value {
        match ty {
            ColumnType::Int64 => Value::Int(read_i64(bytes)),
            ColumnType::Float64 => Value::Float(read_f64(bytes)),
            ColumnType::Bytes(_) => Value::Bytes(bytes.to_vec()),
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            Value::Bytes(_) => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Float(_) => 1,
            Value::Bytes(_) => 2,
        }
    }
}

#[inline]
pub fn read_i64(bytes: &[u8]) -> i64 {
    i64::from_le_bytes(bytes[..8].try_into().expect("8-byte field"))
}

#[inline]
pub fn read_f64(bytes: &[u8]) -> f64 {
    f64::from_bits(u64::from_le_bytes(bytes[..8].try_into().expect("8-byte field")))
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Bytes(a), Value::Bytes(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Int(v) => v.hash(state),
            Value::Float(v) => v.to_bits().hash(state),
            Value::Bytes(b) => b.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            // `{:?}` round-trips exactly and keeps a decimal point.
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Bytes(b) => {
                let end = b.iter().rposition(|&c| c != 0).map_or(0, |i| i + 1);
                f.write_str(&String::from_utf8_lossy(&b[..end]))
            }
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Bytes(v.as_bytes().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_column_types() {
        assert_eq!(ColumnType::parse("int"), Some(ColumnType::Int64));
        assert_eq!(ColumnType::parse("Float64"), Some(ColumnType::Float64));
        assert_eq!(ColumnType::parse("char25"), Some(ColumnType::Bytes(25)));
        assert_eq!(ColumnType::parse("bytes0"), None);
        assert_eq!(ColumnType::parse("text"), None);
    }

    #[test]
    fn encode_decode_round_trip() {
        for (v, ty) in [
            (Value::Int(-42), ColumnType::Int64),
            (Value::Float(7.5), ColumnType::Float64),
            (Value::Bytes(b"ab".to_vec()), ColumnType::Bytes(4)),
        ] {
            let mut buf = vec![0xff; ty.width()];
            v.encode_into(&mut buf);
            let back = Value::decode(ty, &buf);
            match (&v, &back) {
                (Value::Bytes(a), Value::Bytes(b)) => assert_eq!(&b[..a.len()], &a[..]),
                _ => assert_eq!(v, back),
            }
        }
    }

    #[test]
    fn floats_order_totally() {
        let mut v = vec![Value::Float(1.0), Value::Float(-0.0), Value::Float(0.0)];
        v.sort();
        assert_eq!(v, vec![Value::Float(-0.0), Value::Float(0.0), Value::Float(1.0)]);
        assert_ne!(Value::Float(0.0), Value::Float(-0.0));
    }
}
