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

//! Analytical model of the extra work done by large and small units of
//! transfer between a select and the probe it feeds.
//!
//! Costs are in abstract units: seconds when calibrated, dimensionless when
//! set by hand. Counts are numbers of units of transfer.

mod calibrate;
mod params_file;

use std::fmt;

pub use calibrate::{calibrate_params, detect_l3_bytes, Calibration, CalibrationOptions, DEFAULT_L3_BYTES};
pub use params_file::{format_params, parse_params};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Where a parameter value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Source {
    #[default]
    Default,
    User,
    Calibrated,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Default => "default",
            Source::User => "user",
            Source::Calibrated => "calibrated",
        }
    }

    pub fn parse(s: &str) -> Option<Source> {
        match s {
            "default" => Some(Source::Default),
            "user" => Some(Source::User),
            "calibrated" => Some(Source::Calibrated),
            _ => None,
        }
    }
}

/// Every model parameter, in parameter-file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    ReadL3,
    AmortizedReadL3,
    WriteMem,
    ICacheMiss,
    L3Miss,
    ProbeInputUots,
    SelectOutputUots,
    Threads,
    UotBytes,
    L3Bytes,
    P1,
    P2,
    ReadStore,
    WriteStore,
}

impl Param {
    pub const ALL: [Param; 14] = [
        Param::ReadL3,
        Param::AmortizedReadL3,
        Param::WriteMem,
        Param::ICacheMiss,
        Param::L3Miss,
        Param::ProbeInputUots,
        Param::SelectOutputUots,
        Param::Threads,
        Param::UotBytes,
        Param::L3Bytes,
        Param::P1,
        Param::P2,
        Param::ReadStore,
        Param::WriteStore,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Param::ReadL3 => "read_l3",
            Param::AmortizedReadL3 => "amortized_read_l3",
            Param::WriteMem => "write_mem",
            Param::ICacheMiss => "icache_miss",
            Param::L3Miss => "l3_miss",
            Param::ProbeInputUots => "probe_input_uots",
            Param::SelectOutputUots => "select_output_uots",
            Param::Threads => "threads",
            Param::UotBytes => "uot_bytes",
            Param::L3Bytes => "l3_bytes",
            Param::P1 => "p1",
            Param::P2 => "p2",
            Param::ReadStore => "read_store",
            Param::WriteStore => "write_store",
        }
    }

    pub fn from_key(key: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.key() == key)
    }

    fn index(self) -> usize {
        Param::ALL.iter().position(|&p| p == self).expect("listed")
    }
}

/// Inputs of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams<S> {
    /// Cold read of one unit of transfer into L3.
    pub read_l3: S,
    /// Amortized sequential read of one unit already streaming through L3.
    pub amortized_read_l3: S,
    /// Writing one unit of transfer out to memory.
    pub write_mem: S,
    /// Instruction-cache miss cost per operator switch.
    pub icache_miss: S,
    /// L3 miss cost per unit of transfer.
    pub l3_miss: S,
    /// Units of transfer read by the probe.
    pub probe_input_uots: S,
    /// Units of transfer written by the select.
    pub select_output_uots: S,
    pub threads: S,
    pub uot_bytes: S,
    pub l3_bytes: S,
    /// Probability that the probe's reads miss L3 when the whole table is
    /// materialized first.
    pub p1: S,
    /// Probability that a freshly produced unit is evicted before the
    /// consumer reads it.
    pub p2: S,
    /// Persistent-store read cost per unit.
    pub read_store: S,
    /// Persistent-store write cost per unit.
    pub write_store: S,
    pub provenance: [Source; 14],
}

pub type CostParamsF64 = CostParams<f64>;
pub type CostParamsF32 = CostParams<f32>;
pub type ExactCostParams = CostParams<num_rational::Rational64>;

/// A non-fatal validation finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning(pub String);

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<S: Scalar> Default for CostParams<S> {
    /// All costs zero, one thread, one-byte units, 25 MB of L3, and
    /// `p1 = p2 = 1`.
    fn default() -> Self {
        CostParams {
            read_l3: S::zero(),
            amortized_read_l3: S::zero(),
            write_mem: S::zero(),
            icache_miss: S::zero(),
            l3_miss: S::zero(),
            probe_input_uots: S::zero(),
            select_output_uots: S::zero(),
            threads: S::one(),
            uot_bytes: S::one(),
            l3_bytes: S::from_count(DEFAULT_L3_BYTES),
            p1: S::one(),
            p2: S::one(),
            read_store: S::zero(),
            write_store: S::zero(),
            provenance: [Source::Default; 14],
        }
    }
}

impl<S: Scalar> CostParams<S> {
    pub fn get(&self, p: Param) -> S {
        match p {
            Param::ReadL3 => self.read_l3,
            Param::AmortizedReadL3 => self.amortized_read_l3,
            Param::WriteMem => self.write_mem,
            Param::ICacheMiss => self.icache_miss,
            Param::L3Miss => self.l3_miss,
            Param::ProbeInputUots => self.probe_input_uots,
            Param::SelectOutputUots => self.select_output_uots,
            Param::Threads => self.threads,
            Param::UotBytes => self.uot_bytes,
            Param::L3Bytes => self.l3_bytes,
            Param::P1 => self.p1,
            Param::P2 => self.p2,
            Param::ReadStore => self.read_store,
            Param::WriteStore => self.write_store,
        }
    }

    /// Sets a value and records its source.
    pub fn set(&mut self, p: Param, v: S, source: Source) {
        let slot = match p {
            Param::ReadL3 => &mut self.read_l3,
            Param::AmortizedReadL3 => &mut self.amortized_read_l3,
            Param::WriteMem => &mut self.write_mem,
            Param::ICacheMiss => &mut self.icache_miss,
            Param::L3Miss => &mut self.l3_miss,
            Param::ProbeInputUots => &mut self.probe_input_uots,
            Param::SelectOutputUots => &mut self.select_output_uots,
            Param::Threads => &mut self.threads,
            Param::UotBytes => &mut self.uot_bytes,
            Param::L3Bytes => &mut self.l3_bytes,
            Param::P1 => &mut self.p1,
            Param::P2 => &mut self.p2,
            Param::ReadStore => &mut self.read_store,
            Param::WriteStore => &mut self.write_store,
        };
        *slot = v;
        self.provenance[p.index()] = source;
    }

    pub fn with(mut self, p: Param, v: S) -> Self {
        self.set(p, v, Source::User);
        self
    }

    pub fn source(&self, p: Param) -> Source {
        self.provenance[p.index()]
    }

    /// True when calibrated and hand-set cost parameters are mixed.
    pub fn mixes_sources(&self) -> bool {
        let costs = [
            Param::ReadL3,
            Param::AmortizedReadL3,
            Param::WriteMem,
            Param::ICacheMiss,
            Param::L3Miss,
        ];
        let calibrated = costs.iter().any(|&p| self.source(p) == Source::Calibrated);
        let manual = costs.iter().any(|&p| self.source(p) == Source::User);
        calibrated && manual
    }

    /// Errors on invalid values; returns warnings for suspicious ones.
    pub fn validate(&self) -> Result<Vec<Warning>> {
        let zero = S::zero();
        let one = S::one();
        for p in Param::ALL {
            if !(self.get(p) >= zero) {
                return Err(Error::InvalidParams(format!("{} must be non-negative, got {}", p.key(), self.get(p))));
            }
        }
        for p in [Param::P1, Param::P2] {
            if self.get(p) > one {
                return Err(Error::InvalidParams(format!("{} must lie in [0, 1], got {}", p.key(), self.get(p))));
            }
        }
        for p in [Param::UotBytes, Param::Threads, Param::L3Bytes] {
            if self.get(p) <= zero {
                return Err(Error::InvalidParams(format!("{} must be positive", p.key())));
            }
        }
        let mut warnings = Vec::new();
        if self.amortized_read_l3 >= self.read_l3 && self.read_l3 > zero {
            warnings.push(Warning(format!(
                "amortized_read_l3 ({}) is not below read_l3 ({})",
                self.amortized_read_l3, self.read_l3
            )));
        }
        if self.mixes_sources() {
            warnings.push(Warning("calibrated and hand-set cost parameters are mixed".into()));
        }
        Ok(warnings)
    }

    /// Chance that reads and writes of in-flight units miss L3 when units
    /// are passed one at a time.
    pub fn p_prime_1(&self) -> Result<S> {
        p_prime_1(self.uot_bytes, self.threads, self.l3_bytes)
    }

    /// `B > L3 / (2T)`: every in-flight unit set overflows L3.
    pub fn in_large_uot_regime(&self) -> bool {
        let two = S::one() + S::one();
        self.uot_bytes * two * self.threads > self.l3_bytes
    }
}

/// `min(1, 2·B·T / L3)`.
pub fn p_prime_1<S: Scalar>(uot_bytes: S, threads: S, l3_bytes: S) -> Result<S> {
    let zero = S::zero();
    if !(uot_bytes > zero) {
        return Err(Error::NonPositiveInput("uot_bytes"));
    }
    if !(threads > zero) {
        return Err(Error::NonPositiveInput("threads"));
    }
    if !(l3_bytes > zero) {
        return Err(Error::NonPositiveInput("l3_bytes"));
    }
    let two = S::one() + S::one();
    Ok(S::min_of(S::one(), two * uot_bytes * threads / l3_bytes))
}

/// Extra work when the select's output is fully materialized before the
/// probe runs: writing every unit out, reading it back sequentially, and
/// the probe's L3 misses.
pub fn extra_cost_high_uot<S: Scalar>(p: &CostParams<S>) -> Result<S> {
    p.validate()?;
    Ok(p.write_mem * p.select_output_uots
        + p.amortized_read_l3 * p.probe_input_uots
        + p.p1 * p.probe_input_uots * p.l3_miss)
}

/// Extra work when units are handed over one at a time: instruction-cache
/// misses on every switch, plus evictions of in-flight units.
pub fn extra_cost_low_uot<S: Scalar>(p: &CostParams<S>) -> Result<S> {
    p.validate()?;
    let pp1 = p.p_prime_1()?;
    Ok((p.select_output_uots + p.probe_input_uots) * p.icache_miss
        + p.p2 * p.probe_input_uots * (p.l3_miss + p.read_l3)
        + pp1 * (p.l3_miss + p.read_l3 + p.write_mem) * p.probe_input_uots)
}

/// High over low extra cost. The simplified form ignores instruction-cache
/// misses and assumes equal unit counts on both sides, so the counts cancel.
pub fn cost_ratio<S: Scalar>(p: &CostParams<S>, simplified: bool) -> Result<S> {
    p.validate()?;
    let (num, den) = if simplified {
        let pp1 = p.p_prime_1()?;
        (
            p.amortized_read_l3 + p.write_mem + p.p1 * p.l3_miss,
            p.p2 * (p.l3_miss + p.read_l3) + pp1 * (p.l3_miss + p.read_l3 + p.write_mem),
        )
    } else {
        (extra_cost_high_uot(p)?, extra_cost_low_uot(p)?)
    };
    if den == S::zero() {
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}

/// The two ends of the unit-of-transfer spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UotExtreme {
    High,
    Low,
}

impl UotExtreme {
    pub fn as_str(self) -> &'static str {
        match self {
            UotExtreme::High => "HIGH",
            UotExtreme::Low => "LOW",
        }
    }
}

/// Extra work when intermediate results live in a persistent store: the
/// high end pays a store round trip per unit, the low end only switches.
pub fn extra_cost_disk<S: Scalar>(p: &CostParams<S>, uot: UotExtreme) -> Result<S> {
    p.validate()?;
    Ok(match uot {
        UotExtreme::High => p.read_store * p.probe_input_uots + p.write_store * p.select_output_uots,
        UotExtreme::Low => (p.select_output_uots + p.probe_input_uots) * p.icache_miss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;
    use proptest::prelude::*;

    const MIB: f64 = 1024.0 * 1024.0;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn p_prime_1_examples() {
        assert_eq!(p_prime_1(2.0 * MIB, 20.0, 25e6).unwrap(), 1.0);
        assert!((p_prime_1(128.0f64 * 1024.0, 20.0, 25e6).unwrap() - 0.2097152).abs() < 1e-12);
        assert_eq!(p_prime_1(1.0, 0.0, 25e6), Err(Error::NonPositiveInput("threads")));
    }

    fn high_example<S: Scalar>() -> CostParams<S> {
        let c = |n: i64| S::from_i64(n).unwrap();
        CostParams::default()
            .with(Param::WriteMem, c(10))
            .with(Param::AmortizedReadL3, c(2))
            .with(Param::L3Miss, c(5))
            .with(Param::P1, c(1) / c(10))
            .with(Param::SelectOutputUots, c(100))
            .with(Param::ProbeInputUots, c(100))
    }

    fn low_example<S: Scalar>() -> CostParams<S> {
        let c = |n: i64| S::from_i64(n).unwrap();
        CostParams::default()
            .with(Param::ICacheMiss, c(1))
            .with(Param::P2, c(1) / c(2))
            .with(Param::L3Miss, c(5))
            .with(Param::ReadL3, c(20))
            .with(Param::WriteMem, c(10))
            .with(Param::UotBytes, c(125_000))
            .with(Param::Threads, c(20))
            .with(Param::L3Bytes, c(25_000_000))
            .with(Param::SelectOutputUots, c(100))
            .with(Param::ProbeInputUots, c(100))
    }

    #[test]
    fn high_uot_worked_example() {
        assert!(close(extra_cost_high_uot(&high_example::<f64>()).unwrap(), 1250.0));
        assert_eq!(extra_cost_high_uot(&high_example::<Rational64>()).unwrap(), Rational64::from_integer(1250));
        assert_eq!(extra_cost_high_uot(&CostParams::<f64>::default()).unwrap(), 0.0);
        let no_probe = high_example::<f64>().with(Param::ProbeInputUots, 0.0);
        assert_eq!(extra_cost_high_uot(&no_probe).unwrap(), 1000.0);
    }

    #[test]
    fn low_uot_worked_example() {
        let p = low_example::<f64>();
        assert!(close(p.p_prime_1().unwrap(), 0.2));
        assert!(close(extra_cost_low_uot(&p).unwrap(), 2150.0));
        assert_eq!(extra_cost_low_uot(&low_example::<Rational64>()).unwrap(), Rational64::from_integer(2150));
        let f32_val = extra_cost_low_uot(&low_example::<f32>()).unwrap();
        assert!((f32_val - 2150.0).abs() < 1e-3);
        let pure = CostParams::<f64>::default()
            .with(Param::ICacheMiss, 3.0)
            .with(Param::P2, 0.0)
            .with(Param::UotBytes, 1.0)
            .with(Param::L3Bytes, 1e18)
            .with(Param::SelectOutputUots, 4.0)
            .with(Param::ProbeInputUots, 6.0);
        assert!((extra_cost_low_uot(&pure).unwrap() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn ratio_of_symmetric_parameters_is_one() {
        // numerator AR + W + p1 M = 1 + 2 + 1, denominator 0 (M+R) + 1 (M+R+W) = 1 + 1 + 2
        let p = CostParams::<Rational64>::default()
            .with(Param::AmortizedReadL3, Rational64::from_integer(1))
            .with(Param::WriteMem, Rational64::from_integer(2))
            .with(Param::L3Miss, Rational64::from_integer(1))
            .with(Param::ReadL3, Rational64::from_integer(1))
            .with(Param::P2, Rational64::from_integer(0))
            .with(Param::UotBytes, Rational64::from_integer(1 << 30));
        assert_eq!(cost_ratio(&p, true).unwrap(), Rational64::from_integer(1));
    }

    #[test]
    fn zero_denominator() {
        let p = CostParams::<f64>::default().with(Param::WriteMem, 0.0);
        assert_eq!(cost_ratio(&p, true), Err(Error::ZeroDenominator));
        assert_eq!(cost_ratio(&p, false), Err(Error::ZeroDenominator));
    }

    #[test]
    fn full_ratio_is_high_over_low() {
        let p = low_example::<f64>()
            .with(Param::AmortizedReadL3, 2.0)
            .with(Param::P1, 0.1);
        let r = cost_ratio(&p, false).unwrap();
        assert!(close(r, extra_cost_high_uot(&p).unwrap() / extra_cost_low_uot(&p).unwrap()));
    }

    #[test]
    fn disk_examples() {
        let p = CostParams::<f64>::default()
            .with(Param::ReadStore, 5e-3)
            .with(Param::WriteStore, 5e-3)
            .with(Param::ICacheMiss, 100e-9)
            .with(Param::SelectOutputUots, 1000.0)
            .with(Param::ProbeInputUots, 1000.0);
        let high = extra_cost_disk(&p, UotExtreme::High).unwrap();
        let low = extra_cost_disk(&p, UotExtreme::Low).unwrap();
        assert!(close(high, 10.0));
        assert!(close(low, 2e-4));
        let none = p.clone().with(Param::ReadStore, 0.0).with(Param::WriteStore, 0.0);
        assert_eq!(extra_cost_disk(&none, UotExtreme::High).unwrap(), 0.0);
    }

    #[test]
    fn validation() {
        let bad = CostParams::<f64>::default().with(Param::P1, 1.5);
        assert!(matches!(extra_cost_high_uot(&bad), Err(Error::InvalidParams(_))));
        let neg = CostParams::<f64>::default().with(Param::WriteMem, -1.0);
        assert!(neg.validate().is_err());
        let nan = CostParams::<f64>::default().with(Param::WriteMem, f64::NAN);
        assert!(nan.validate().is_err());
        let warn = CostParams::<f64>::default()
            .with(Param::ReadL3, 1.0)
            .with(Param::AmortizedReadL3, 2.0);
        assert_eq!(warn.validate().unwrap().len(), 1);
        let mut mixed = CostParams::<f64>::default().with(Param::ReadL3, 1.0);
        mixed.set(Param::WriteMem, 1.0, Source::Calibrated);
        assert!(mixed.mixes_sources());
    }

    fn arb_params() -> impl Strategy<Value = CostParams<f64>> {
        (
            proptest::array::uniform7(0.0f64..100.0),
            (0.0f64..=1.0, 0.0f64..=1.0),
            (1u32..64, 1u64..(64 << 20)),
        )
            .prop_map(|(c, (p1, p2), (t, b))| {
                CostParams::default()
                    .with(Param::ReadL3, c[0])
                    .with(Param::AmortizedReadL3, c[1])
                    .with(Param::WriteMem, c[2])
                    .with(Param::ICacheMiss, c[3])
                    .with(Param::L3Miss, c[4])
                    .with(Param::ProbeInputUots, c[5])
                    .with(Param::SelectOutputUots, c[6])
                    .with(Param::P1, p1)
                    .with(Param::P2, p2)
                    .with(Param::Threads, t as f64)
                    .with(Param::UotBytes, b as f64)
            })
    }

    proptest! {
        #[test]
        fn extra_costs_are_linear_in_counts(p in arb_params()) {
            let doubled = p.clone()
                .with(Param::ProbeInputUots, p.probe_input_uots * 2.0)
                .with(Param::SelectOutputUots, p.select_output_uots * 2.0);
            for f in [extra_cost_high_uot::<f64>, extra_cost_low_uot::<f64>] {
                let (a, b) = (f(&p).unwrap(), f(&doubled).unwrap());
                prop_assert!((b - 2.0 * a).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }

        #[test]
        fn low_cost_monotone_in_p2_block_and_threads(p in arb_params(), dp in 0.0f64..1.0, k in 1.0f64..4.0) {
            let base = extra_cost_low_uot(&p).unwrap();
            let p2 = (p.p2 + dp).min(1.0);
            prop_assert!(extra_cost_low_uot(&p.clone().with(Param::P2, p2)).unwrap() >= base);
            prop_assert!(extra_cost_low_uot(&p.clone().with(Param::UotBytes, p.uot_bytes * k)).unwrap() >= base);
            prop_assert!(extra_cost_low_uot(&p.clone().with(Param::Threads, p.threads * k)).unwrap() >= base);
        }

        #[test]
        fn p_prime_1_clamped_and_monotone(b in 1.0f64..1e9, t in 1.0f64..128.0, l3 in 1.0f64..1e9) {
            let v = p_prime_1(b, t, l3).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(p_prime_1(b * 2.0, t, l3).unwrap() >= v);
            prop_assert!(p_prime_1(b, t + 1.0, l3).unwrap() >= v);
            if 2.0 * b * t > l3 {
                prop_assert_eq!(v, 1.0);
            }
        }

        #[test]
        fn disk_high_dominates_low(store in 0.0f64..1.0, ic in 0.0f64..1.0, n in 1.0f64..1e6) {
            prop_assume!(2.0 * store > 2.0 * ic);
            let p = CostParams::<f64>::default()
                .with(Param::ReadStore, store)
                .with(Param::WriteStore, store)
                .with(Param::ICacheMiss, ic)
                .with(Param::SelectOutputUots, n)
                .with(Param::ProbeInputUots, n);
            prop_assert!(extra_cost_disk(&p, UotExtreme::High).unwrap() > extra_cost_disk(&p, UotExtreme::Low).unwrap());
        }
    }
}
