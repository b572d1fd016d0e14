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

//! Microbenchmarks that estimate the per-unit memory costs on this machine.
//!
//! Calibration needs the machine to itself. Other load inflates the
//! timings and usually trips the stability check.

use std::hint::black_box;
use std::time::Instant;

use super::{CostParams, Param, Source};
use crate::error::{Error, Result};

pub const DEFAULT_L3_BYTES: u64 = 25_000_000;
const LINE: usize = 64;
const L3_SIZE_PATH: &str = "/sys/devices/system/cpu/cpu0/cache/index3/size";

/// Reads the L3 size reported by the kernel, e.g. `30720K`.
pub fn detect_l3_bytes() -> Option<u64> {
    let text = std::fs::read_to_string(L3_SIZE_PATH).ok()?;
    parse_cache_size(text.trim())
}

fn parse_cache_size(s: &str) -> Option<u64> {
    let (digits, mult) = match s.as_bytes().last()? {
        b'K' | b'k' => (&s[..s.len() - 1], 1024),
        b'M' | b'm' => (&s[..s.len() - 1], 1024 * 1024),
        _ => (s, 1),
    };
    digits.parse::<u64>().ok().map(|n| n * mult)
}

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    /// Scratch buffer size. Defaults to four times L3, at least 64 MiB.
    pub buffer_bytes: Option<usize>,
    pub repetitions: usize,
    /// Largest accepted coefficient of variation.
    pub max_cv: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions { buffer_bytes: None, repetitions: 5, max_cv: 0.20 }
    }
}

/// Per-unit costs in seconds.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub block_size: usize,
    pub l3_bytes: u64,
    pub buffer_bytes: usize,
    pub amortized_read_l3: f64,
    pub read_l3: f64,
    pub write_mem: f64,
    pub cv_amortized_read: f64,
    pub cv_read: f64,
    pub cv_write: f64,
}

impl Calibration {
    pub fn run(block_size: usize, opts: &CalibrationOptions) -> Result<Calibration> {
        if block_size == 0 {
            return Err(Error::NonPositiveInput("block_size"));
        }
        if opts.repetitions < 2 {
            return Err(Error::InvalidParams("calibration needs at least two repetitions".into()));
        }
        let l3_bytes = detect_l3_bytes().unwrap_or(DEFAULT_L3_BYTES);
        let wanted = opts
            .buffer_bytes
            .unwrap_or_else(|| (4 * l3_bytes as usize).max(64 << 20))
            .max(4 * block_size)
            .max(LINE);
        let buffer_bytes = wanted.next_power_of_two();
        let mut buf = vec![1u64; buffer_bytes / 8];
        let block_words = block_size.div_ceil(8);
        let blocks = (buf.len() / block_words).max(1);

        // touch every page once so page faults stay out of the timings
        sequential_read(&buf, block_words, blocks);

        let mut seq = Vec::with_capacity(opts.repetitions);
        let mut strided = Vec::with_capacity(opts.repetitions);
        let mut write = Vec::with_capacity(opts.repetitions);
        let lines_per_block = block_size as f64 / LINE as f64;
        for rep in 0..opts.repetitions {
            let t = Instant::now();
            sequential_read(&buf, block_words, blocks);
            seq.push(t.elapsed().as_secs_f64() / blocks as f64);

            let t = Instant::now();
            let lines = strided_read(&buf);
            strided.push(t.elapsed().as_secs_f64() / lines as f64 * lines_per_block);

            let t = Instant::now();
            write_blocks(&mut buf, block_words, blocks, rep as u64);
            write.push(t.elapsed().as_secs_f64() / blocks as f64);
        }
        let cv_amortized_read = check_stable("amortized read", &seq, opts.max_cv)?;
        let cv_read = check_stable("cold read", &strided, opts.max_cv)?;
        let cv_write = check_stable("write", &write, opts.max_cv)?;
        Ok(Calibration {
            block_size,
            l3_bytes,
            buffer_bytes,
            amortized_read_l3: mean(&seq),
            read_l3: mean(&strided),
            write_mem: mean(&write),
            cv_amortized_read,
            cv_read,
            cv_write,
        })
    }

    /// Applies the measured values to `base`, marking them calibrated.
    pub fn apply(&self, base: CostParams<f64>) -> CostParams<f64> {
        let mut p = base;
        p.set(Param::AmortizedReadL3, self.amortized_read_l3, Source::Calibrated);
        p.set(Param::ReadL3, self.read_l3, Source::Calibrated);
        p.set(Param::WriteMem, self.write_mem, Source::Calibrated);
        p.set(Param::L3Bytes, self.l3_bytes as f64, Source::Calibrated);
        p.set(Param::UotBytes, self.block_size as f64, Source::Calibrated);
        p
    }
}

/// Calibrates with default options. `p1`, `p2`, and the counts stay at
/// their defaults.
pub fn calibrate_params(block_size: usize) -> Result<CostParams<f64>> {
    Ok(Calibration::run(block_size, &CalibrationOptions::default())?.apply(CostParams::default()))
}

fn sequential_read(buf: &[u64], block_words: usize, blocks: usize) -> u64 {
    let mut total = 0u64;
    for b in 0..blocks {
        let chunk = &buf[b * block_words..((b + 1) * block_words).min(buf.len())];
        total = total.wrapping_add(chunk.iter().fold(0u64, |a, &w| a.wrapping_add(w)));
    }
    black_box(total)
}

/// Touches one word per cache line, visiting lines with a large odd stride
/// so the prefetcher cannot follow. Returns the number of lines read.
fn strided_read(buf: &[u64]) -> usize {
    let words_per_line = LINE / 8;
    let lines = (buf.len() / words_per_line).max(1);
    // lines is a power of two, so any odd stride visits each line once
    let stride = (lines / 2 + 4099) | 1;
    let mut idx = 0usize;
    let mut total = 0u64;
    for _ in 0..lines {
        total = total.wrapping_add(buf[idx * words_per_line]);
        idx = (idx + stride) & (lines - 1);
    }
    black_box(total);
    lines
}

fn write_blocks(buf: &mut [u64], block_words: usize, blocks: usize, v: u64) {
    for b in 0..blocks {
        let end = ((b + 1) * block_words).min(buf.len());
        buf[b * block_words..end].fill(v);
    }
    black_box(&buf[0]);
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample coefficient of variation.
pub(crate) fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    if xs.len() < 2 || m == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt() / m
}

fn check_stable(what: &'static str, xs: &[f64], max_cv: f64) -> Result<f64> {
    let cv = coefficient_of_variation(xs);
    if cv > max_cv {
        return Err(Error::CalibrationUnstable { what, cv: cv * 100.0 });
    }
    Ok(cv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_rule() {
        assert!(check_stable("x", &[1.0, 1.1], 0.2).is_ok());
        assert!(check_stable("x", &[1.0, 1.19], 0.2).is_ok());
        assert!(matches!(check_stable("x", &[1.0, 2.0], 0.2), Err(Error::CalibrationUnstable { .. })));
        assert_eq!(coefficient_of_variation(&[3.0, 3.0, 3.0]), 0.0);
    }

    #[test]
    fn zero_block_rejected() {
        assert_eq!(calibrate_params(0).unwrap_err(), Error::NonPositiveInput("block_size"));
    }

    #[test]
    fn cache_size_strings() {
        assert_eq!(parse_cache_size("30720K"), Some(30720 * 1024));
        assert_eq!(parse_cache_size("32M"), Some(32 << 20));
        assert_eq!(parse_cache_size("1000"), Some(1000));
        assert_eq!(parse_cache_size("big"), None);
    }

    #[test]
    fn strided_scan_visits_every_line() {
        let buf: Vec<u64> = vec![1; 1 << 12];
        assert_eq!(strided_read(&buf), buf.len() / 8);
        let words_per_line = LINE / 8;
        let lines = buf.len() / words_per_line;
        let stride = (lines / 2 + 4099) | 1;
        let mut seen = vec![false; lines];
        let mut idx = 0;
        for _ in 0..lines {
            seen[idx] = true;
            idx = (idx + stride) & (lines - 1);
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn small_calibration_produces_positive_costs() {
        let opts = CalibrationOptions { buffer_bytes: Some(4 << 20), repetitions: 3, max_cv: f64::INFINITY };
        let c = Calibration::run(4096, &opts).unwrap();
        for v in [c.amortized_read_l3, c.read_l3, c.write_mem] {
            assert!(v.is_finite() && v > 0.0, "{c:?}");
        }
        let p = c.apply(CostParams::default());
        assert_eq!(p.source(Param::ReadL3), Source::Calibrated);
        assert_eq!(p.source(Param::P1), Source::Default);
    }
}
