//! Hardware/configuration model: tier bandwidths and latencies, DRAM
//! capacity, sensitivity thresholds and the calibration constants.

use crate::error::{Error, Result};
use crate::trace::AccessRecord;
use serde::{Deserialize, Serialize};

/// Memory-tier parameters for one simulated rank.
///
/// Bandwidths are bytes/second, latencies seconds/access, capacities bytes.
/// `dram_capacity` is kept as a multiple of `capacity_granule`; the loader
/// rounds down and records a warning (see [`crate::io::load_machine`]).
#[derive(Debug, Clone, PartialEq)]
pub struct MachineConfig {
    pub dram_bw: f64,
    pub nvm_bw: f64,
    pub dram_lat: f64,
    pub nvm_lat: f64,
    /// Copy bandwidth on the DRAM<->NVM migration path.
    pub mem_copy_bw: f64,
    pub dram_capacity: u64,
    pub cacheline_size: u64,
    /// Measured peak NVM bandwidth; a config input, not derived.
    pub bw_peak_nvm: f64,
    pub t1_pct: f64,
    pub t2_pct: f64,
    pub cf_bw: f64,
    pub cf_lat: f64,
    /// Allocation / knapsack quantization unit.
    pub capacity_granule: u64,
    pub reprofile_threshold: f64,
    /// Lower clamp for predicted phase times, as a fraction of baseline.
    pub phase_floor_frac: f64,
    /// Fixed per-phase overhead fraction added during plan enforcement.
    pub runtime_overhead_frac: f64,
    /// Chunk size for partitioning large objects; `None` means
    /// `dram_capacity / 8`.
    pub chunk_size: Option<u64>,
    /// Set when the loader rounded `dram_capacity` down to a granule
    /// multiple: (original, rounded).
    pub capacity_rounded: Option<(u64, u64)>,
}

impl Default for MachineConfig {
    /// Reference configuration: 12 GB/s DRAM vs 6 GB/s NVM, 100 ns vs
    /// 400 ns, 256 MiB DRAM, 4 GB/s copy path.
    fn default() -> Self {
        MachineConfig {
            dram_bw: 12e9,
            nvm_bw: 6e9,
            dram_lat: 100e-9,
            nvm_lat: 400e-9,
            mem_copy_bw: 4e9,
            dram_capacity: 256 * MIB,
            cacheline_size: 64,
            bw_peak_nvm: 6e9,
            t1_pct: 80.0,
            t2_pct: 10.0,
            cf_bw: 1.0,
            cf_lat: 1.0,
            capacity_granule: MIB,
            reprofile_threshold: 0.10,
            phase_floor_frac: 0.05,
            runtime_overhead_frac: 0.0,
            chunk_size: None,
            capacity_rounded: None,
        }
    }
}

pub const MIB: u64 = 1 << 20;

impl MachineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dram_bw", self.dram_bw),
            ("nvm_bw", self.nvm_bw),
            ("dram_lat", self.dram_lat),
            ("nvm_lat", self.nvm_lat),
            ("mem_copy_bw", self.mem_copy_bw),
            ("bw_peak_nvm", self.bw_peak_nvm),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be strictly positive and finite"));
            }
        }
        if self.dram_capacity == 0 {
            return Err(Error::invalid("dram_capacity", "must be strictly positive"));
        }
        if self.cacheline_size == 0 {
            return Err(Error::invalid("cacheline_size", "must be strictly positive"));
        }
        if self.capacity_granule == 0 {
            return Err(Error::invalid("capacity_granule", "must be strictly positive"));
        }
        if self.nvm_bw > self.dram_bw {
            return Err(Error::invalid(
                "nvm_bw",
                "must not exceed dram_bw (heterogeneity direction)",
            ));
        }
        if self.nvm_lat < self.dram_lat {
            return Err(Error::invalid(
                "nvm_lat",
                "must not be below dram_lat (heterogeneity direction)",
            ));
        }
        if !(self.t2_pct > 0.0 && self.t2_pct < self.t1_pct && self.t1_pct <= 100.0) {
            return Err(Error::invalid("t1_pct/t2_pct", "need 0 < t2 < t1 <= 100"));
        }
        if self.cf_bw < 0.0 || self.cf_lat < 0.0 {
            return Err(Error::invalid("cf_bw/cf_lat", "must be >= 0"));
        }
        if self.dram_capacity % self.capacity_granule != 0 {
            return Err(Error::invalid(
                "dram_capacity",
                "must be a multiple of capacity_granule (loader rounds down)",
            ));
        }
        if !(0.0..=1.0).contains(&self.reprofile_threshold) {
            return Err(Error::invalid("reprofile_threshold", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.phase_floor_frac) {
            return Err(Error::invalid("phase_floor_frac", "must be in [0, 1]"));
        }
        if self.runtime_overhead_frac < 0.0 {
            return Err(Error::invalid("runtime_overhead_frac", "must be >= 0"));
        }
        Ok(())
    }

    /// Capacity in whole granules.
    pub fn capacity_granules(&self) -> u64 {
        self.dram_capacity / self.capacity_granule
    }

    /// Size of `bytes` rounded up to whole granules.
    pub fn granules(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.capacity_granule)
    }

    /// Default chunk size when partitioning: configured value, else
    /// `dram_capacity / 8`, never larger than the DRAM capacity.
    pub fn effective_chunk_size(&self) -> u64 {
        let raw = self.chunk_size.unwrap_or(self.dram_capacity / 8);
        raw.clamp(1, self.dram_capacity.max(1))
    }
}

/// Bandwidth-vs-latency classification of one object in one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensitivity {
    Bandwidth,
    Latency,
    Mixed,
}

/// Fraction of the phase during which the object was being accessed in main
/// memory, in seconds: `(samples_with_access / samples_total) * phase_time`.
pub fn active_access_time(samples_with_access: u64, samples_total: u64, phase_time: f64) -> f64 {
    (samples_with_access as f64 / samples_total as f64) * phase_time
}

/// Main-memory bandwidth consumed by one object during one phase:
/// accessed bytes divided by the active-access time.
pub fn object_bandwidth(
    access: &AccessRecord,
    samples_total: u64,
    phase_time: f64,
    cfg: &MachineConfig,
) -> Result<f64> {
    if samples_total == 0 {
        return Err(Error::invalid("samples_total", "must be > 0"));
    }
    if access.samples_with_access > samples_total {
        return Err(Error::invalid(
            "samples_with_access",
            "must not exceed samples_total",
        ));
    }
    if !(phase_time > 0.0) {
        return Err(Error::invalid("phase_time", "must be > 0"));
    }
    if access.samples_with_access == 0 {
        return Err(Error::NoAttributedSamples(access.object_id.clone()));
    }
    let accessed_bytes = access.data_access as f64 * cfg.cacheline_size as f64;
    Ok(accessed_bytes / active_access_time(access.samples_with_access, samples_total, phase_time))
}

/// Threshold classification against the peak NVM bandwidth: at or above
/// t1% -> Bandwidth, strictly below t2% -> Latency, otherwise Mixed.
pub fn classify_sensitivity(bw_obj: f64, cfg: &MachineConfig) -> Sensitivity {
    let t1 = cfg.t1_pct / 100.0 * cfg.bw_peak_nvm;
    let t2 = cfg.t2_pct / 100.0 * cfg.bw_peak_nvm;
    if bw_obj >= t1 {
        Sensitivity::Bandwidth
    } else if bw_obj < t2 {
        Sensitivity::Latency
    } else {
        Sensitivity::Mixed
    }
}

/// Calibration constant from (predicted, measured) runs of a reference
/// workload: the mean of measured/predicted ratios.
pub fn calibrate_cf(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidCalibration("empty pair list".into()));
    }
    let mut sum = 0.0;
    for &(predicted, measured) in pairs {
        if !(predicted > 0.0) || !(measured > 0.0) {
            return Err(Error::InvalidCalibration(format!(
                "non-positive entry (predicted={predicted}, measured={measured})"
            )));
        }
        sum += measured / predicted;
    }
    Ok(sum / pairs.len() as f64)
}
