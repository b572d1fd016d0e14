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

//! Flat `key=value` parameter files.
//!
//! One parameter per line. A value may be followed by `# source`, where
//! source is `default`, `user`, or `calibrated`; values without a source
//! read back as `user`. Blank lines and lines starting with `#` are skipped.

use std::fmt::Write;

use super::{CostParams, Param, Source};
use crate::error::{Error, Result};

pub fn format_params(p: &CostParams<f64>) -> String {
    let mut out = String::new();
    for param in Param::ALL {
        writeln!(out, "{}={} # {}", param.key(), p.get(param), p.source(param).as_str()).unwrap();
    }
    out
}

/// Parses a parameter file on top of the defaults. Unknown keys and
/// repeated keys are errors.
pub fn parse_params(text: &str) -> Result<CostParams<f64>> {
    let mut p = CostParams::<f64>::default();
    let mut seen = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (body, source) = match trimmed.split_once('#') {
            Some((b, s)) => {
                let s = s.trim();
                let source = Source::parse(s).ok_or_else(|| Error::Parse { line, msg: format!("unknown source `{s}`") })?;
                (b.trim(), source)
            }
            None => (trimmed, Source::User),
        };
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| Error::Parse { line, msg: "expected key=value".into() })?;
        let key = key.trim();
        let param = Param::from_key(key).ok_or_else(|| Error::Parse { line, msg: format!("unknown key `{key}`") })?;
        if seen.contains(&param) {
            return Err(Error::Parse { line, msg: format!("duplicate key `{key}`") });
        }
        seen.push(param);
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|e| Error::Parse { line, msg: format!("bad value for `{key}`: {e}") })?;
        p.set(param, v, source);
    }
    Ok(p)
}
