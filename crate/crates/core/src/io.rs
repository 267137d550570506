//! File schemas and unit handling. All documents are JSON with a
//! `schema_version` field; quantities accept either raw numbers
//! (bytes, seconds, bytes/second) or strings with a unit suffix
//! ("256 MiB", "100 ns", "12 GB/s"). Unknown fields are rejected.

use crate::error::{Error, Result};
use crate::machine::MachineConfig;
use crate::plan::PlacementPlan;
use crate::sim::SimulationReport;
use crate::trace::{Trace, SCHEMA_VERSION};
use serde::{Deserialize, Deserializer, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Qty {
    Num(f64),
    Str(String),
}

#[derive(Debug, Clone, Copy)]
enum Unit {
    Bytes,
    Seconds,
    Rate,
}

fn unit_scale(unit: &str, kind: Unit) -> Option<f64> {
    let bytes = |u: &str| -> Option<f64> {
        Some(match u {
            "B" => 1.0,
            "KB" => 1e3,
            "MB" => 1e6,
            "GB" => 1e9,
            "TB" => 1e12,
            "KiB" => (1u64 << 10) as f64,
            "MiB" => (1u64 << 20) as f64,
            "GiB" => (1u64 << 30) as f64,
            "TiB" => (1u64 << 40) as f64,
            _ => return None,
        })
    };
    match kind {
        Unit::Bytes => bytes(unit),
        Unit::Seconds => Some(match unit {
            "s" => 1.0,
            "ms" => 1e-3,
            "us" | "\u{b5}s" => 1e-6,
            "ns" => 1e-9,
            _ => return None,
        }),
        Unit::Rate => bytes(unit.strip_suffix("/s")?),
    }
}

fn parse_quantity(s: &str, kind: Unit) -> Result<f64> {
    let s = s.trim();
    let split = s
        .find(|c: char| c.is_alphabetic() || c == '\u{b5}')
        .ok_or_else(|| Error::Quantity(s.to_string()))?;
    let (num, unit) = s.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Quantity(s.to_string()))?;
    let scale = unit_scale(unit.trim(), kind).ok_or_else(|| Error::Quantity(s.to_string()))?;
    Ok(value * scale)
}

fn qty_value(q: Qty, kind: Unit) -> Result<f64> {
    match q {
        Qty::Num(v) => Ok(v),
        Qty::Str(s) => parse_quantity(&s, kind),
    }
}

fn qty_bytes(q: Qty) -> Result<u64> {
    let v = qty_value(q, Unit::Bytes)?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Quantity(format!("{v} bytes")));
    }
    Ok(v.round() as u64)
}

/// Accepts a byte count as a number or a suffixed string.
pub fn de_bytes<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    let q = Qty::deserialize(d)?;
    qty_bytes(q).map_err(serde::de::Error::custom)
}

/// Accepts seconds as a number or a suffixed string.
pub fn de_secs<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let q = Qty::deserialize(d)?;
    qty_value(q, Unit::Seconds).map_err(serde::de::Error::custom)
}

/// Machine config document. Bandwidth fields accept "12 GB/s" style
/// strings, latencies "100 ns", capacities "256 MiB".
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMachine {
    #[serde(default = "default_version")]
    schema_version: String,
    dram_bw: Qty,
    nvm_bw: Qty,
    dram_lat: Qty,
    nvm_lat: Qty,
    mem_copy_bw: Qty,
    dram_capacity: Qty,
    #[serde(default)]
    cacheline_size: Option<u64>,
    bw_peak_nvm: Qty,
    #[serde(default)]
    t1_pct: Option<f64>,
    #[serde(default)]
    t2_pct: Option<f64>,
    #[serde(default)]
    cf_bw: Option<f64>,
    #[serde(default)]
    cf_lat: Option<f64>,
    #[serde(default)]
    capacity_granule: Option<Qty>,
    #[serde(default)]
    reprofile_threshold: Option<f64>,
    #[serde(default)]
    phase_floor_frac: Option<f64>,
    #[serde(default)]
    runtime_overhead_frac: Option<f64>,
    #[serde(default)]
    chunk_size: Option<Qty>,
}

fn default_version() -> String {
    SCHEMA_VERSION.to_string()
}

fn machine_from_raw(raw: RawMachine) -> Result<MachineConfig> {
    if raw.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION.into(),
            got: raw.schema_version,
        });
    }
    let defaults = MachineConfig::default();
    let mut cfg = MachineConfig {
        dram_bw: qty_value(raw.dram_bw, Unit::Rate)?,
        nvm_bw: qty_value(raw.nvm_bw, Unit::Rate)?,
        dram_lat: qty_value(raw.dram_lat, Unit::Seconds)?,
        nvm_lat: qty_value(raw.nvm_lat, Unit::Seconds)?,
        mem_copy_bw: qty_value(raw.mem_copy_bw, Unit::Rate)?,
        dram_capacity: qty_bytes(raw.dram_capacity)?,
        cacheline_size: raw.cacheline_size.unwrap_or(defaults.cacheline_size),
        bw_peak_nvm: qty_value(raw.bw_peak_nvm, Unit::Rate)?,
        t1_pct: raw.t1_pct.unwrap_or(defaults.t1_pct),
        t2_pct: raw.t2_pct.unwrap_or(defaults.t2_pct),
        cf_bw: raw.cf_bw.unwrap_or(defaults.cf_bw),
        cf_lat: raw.cf_lat.unwrap_or(defaults.cf_lat),
        capacity_granule: match raw.capacity_granule {
            Some(q) => qty_bytes(q)?,
            None => defaults.capacity_granule,
        },
        reprofile_threshold: raw.reprofile_threshold.unwrap_or(defaults.reprofile_threshold),
        phase_floor_frac: raw.phase_floor_frac.unwrap_or(defaults.phase_floor_frac),
        runtime_overhead_frac: raw
            .runtime_overhead_frac
            .unwrap_or(defaults.runtime_overhead_frac),
        chunk_size: match raw.chunk_size {
            Some(q) => Some(qty_bytes(q)?),
            None => None,
        },
        capacity_rounded: None,
    };
    if cfg.capacity_granule == 0 {
        return Err(Error::invalid("capacity_granule", "must be strictly positive"));
    }
    // Quantize the capacity for the granule-based solvers; keep the fact
    // around so reports can surface it.
    let rounded = cfg.dram_capacity - cfg.dram_capacity % cfg.capacity_granule;
    if rounded != cfg.dram_capacity {
        log::warn!(
            "dram_capacity {} rounded down to {} (multiple of capacity_granule {})",
            cfg.dram_capacity,
            rounded,
            cfg.capacity_granule
        );
        cfg.capacity_rounded = Some((cfg.dram_capacity, rounded));
        cfg.dram_capacity = rounded;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_machine(path: impl AsRef<Path>) -> Result<MachineConfig> {
    let raw: RawMachine = serde_json::from_str(&fs::read_to_string(path)?)?;
    machine_from_raw(raw)
}

pub fn machine_from_json(json: &str) -> Result<MachineConfig> {
    machine_from_raw(serde_json::from_str(json)?)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let trace: Trace = serde_json::from_str(&fs::read_to_string(path)?)?;
    trace.validate()?;
    Ok(trace)
}

pub fn save_trace(path: impl AsRef<Path>, trace: &Trace) -> Result<()> {
    write_json(path, trace)
}

pub fn load_plan(path: impl AsRef<Path>) -> Result<PlacementPlan> {
    let plan: PlacementPlan = serde_json::from_str(&fs::read_to_string(path)?)?;
    if plan.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION.into(),
            got: plan.schema_version.clone(),
        });
    }
    Ok(plan)
}

pub fn save_plan(path: impl AsRef<Path>, plan: &PlacementPlan) -> Result<()> {
    write_json(path, plan)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<SimulationReport> {
    let report: SimulationReport = serde_json::from_str(&fs::read_to_string(path)?)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION.into(),
            got: report.schema_version.clone(),
        });
    }
    Ok(report)
}

pub fn save_report(path: impl AsRef<Path>, report: &SimulationReport) -> Result<()> {
    write_json(path, report)
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_unit_suffixes() {
        assert_eq!(parse_quantity("5 GB/s", Unit::Rate).unwrap(), 5e9);
        assert_eq!(parse_quantity("4 GiB/s", Unit::Rate).unwrap(), (4u64 << 30) as f64);
        assert_eq!(parse_quantity("100 ns", Unit::Seconds).unwrap(), 100.0 * 1e-9);
        assert_eq!(parse_quantity("1.5 ms", Unit::Seconds).unwrap(), 1.5e-3);
        assert_eq!(parse_quantity("256 MiB", Unit::Bytes).unwrap(), (256u64 << 20) as f64);
        assert_eq!(parse_quantity("64MiB", Unit::Bytes).unwrap(), (64u64 << 20) as f64);
        assert!(parse_quantity("5 parsecs", Unit::Bytes).is_err());
        assert!(parse_quantity("GB/s", Unit::Rate).is_err());
    }

    const MACHINE_JSON: &str = r#"{
        "dram_bw": "12 GB/s",
        "nvm_bw": "6 GB/s",
        "dram_lat": "100 ns",
        "nvm_lat": "400 ns",
        "mem_copy_bw": "4 GB/s",
        "dram_capacity": "256 MiB",
        "bw_peak_nvm": "6 GB/s"
    }"#;

    #[test]
    fn machine_loads_with_defaults() {
        let cfg = machine_from_json(MACHINE_JSON).unwrap();
        assert_eq!(cfg.nvm_bw, 6e9);
        assert_eq!(cfg.dram_capacity, 256 << 20);
        assert_eq!(cfg.t1_pct, 80.0);
        assert_eq!(cfg.t2_pct, 10.0);
        assert_eq!(cfg.cacheline_size, 64);
        assert!(cfg.capacity_rounded.is_none());
    }

    #[test]
    fn machine_rejects_unknown_field() {
        let json = MACHINE_JSON.replace("\"dram_bw\"", "\"dram_bandwidth\"");
        assert!(machine_from_json(&json).is_err());
    }

    #[test]
    fn machine_rounds_capacity_down() {
        let json = MACHINE_JSON.replace("\"256 MiB\"", "\"256.5 MiB\"");
        let cfg = machine_from_json(&json).unwrap();
        assert_eq!(cfg.dram_capacity, 256 << 20);
        assert!(cfg.capacity_rounded.is_some());
    }

    #[test]
    fn machine_rejects_version_mismatch() {
        let json = MACHINE_JSON.replacen('{', "{\"schema_version\": \"2\",", 1);
        let err = machine_from_json(&json).unwrap_err();
        assert!(matches!(err, Error::SchemaVersion { .. }));
    }

    #[test]
    fn trace_rejects_version_mismatch() {
        let mut t = crate::trace::test_support::trace(&[("a", 1 << 20)], &[(1.0, &["a"])], 2, 10, 5);
        t.schema_version = "0".into();
        assert!(matches!(t.validate(), Err(Error::SchemaVersion { .. })));
    }

    #[test]
    fn trace_round_trip_identity() {
        let t = crate::trace::test_support::trace(
            &[("a", 1 << 20), ("b", 3 << 20)],
            &[(1.0, &["a", "b"]), (0.5, &["b"])],
            3,
            1000,
            100,
        );
        let json = to_json_string(&t).unwrap();
        let back: Trace = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
    }
}
