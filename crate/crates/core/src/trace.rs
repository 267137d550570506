//! Trace domain types: target data objects, per-phase profiles and the
//! iteration structure, plus validation of every documented invariant.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub const SCHEMA_VERSION: &str = "1";

/// Identifier of a target data object, or of a chunk of one after
/// partitioning (chunk ids look like `parent#3`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub String);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId(s.to_string())
    }
}

pub type IdSet = BTreeSet<ObjectId>;

/// A programmer-identified allocation whose residency the planner manages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataObject {
    pub id: ObjectId,
    #[serde(deserialize_with = "crate::io::de_bytes")]
    pub size: u64,
    #[serde(default)]
    pub partitionable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_ref_estimate: Option<u64>,
}

/// Sampled main-memory accesses attributed to one object in one phase.
/// `samples_total` lives on the phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessRecord {
    pub object_id: ObjectId,
    pub data_access: u64,
    pub samples_with_access: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Compute,
    Comm,
}

/// One profiled phase of the iteration. `baseline_time` is the phase time
/// measured with every target object in NVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseProfile {
    pub kind: PhaseKind,
    #[serde(deserialize_with = "crate::io::de_secs")]
    pub baseline_time: f64,
    pub samples_total: u64,
    #[serde(default)]
    pub accesses: Vec<AccessRecord>,
    #[serde(default)]
    pub referenced: IdSet,
}

impl PhaseProfile {
    pub fn access(&self, id: &ObjectId) -> Option<&AccessRecord> {
        self.accesses.iter().find(|a| &a.object_id == id)
    }
}

/// Per-iteration execution-time multiplier: one factor for the whole
/// iteration or one factor per phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Noise {
    Uniform(f64),
    PerPhase(Vec<f64>),
}

impl Noise {
    pub fn factor(&self, phase: usize) -> f64 {
        match self {
            Noise::Uniform(f) => *f,
            Noise::PerPhase(v) => v[phase],
        }
    }
}

/// Replacement per-phase profile observed in one specific iteration; used
/// as re-profiling input when the adaptation trigger fires there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideProfile {
    pub iteration: usize,
    pub phases: Vec<PhaseProfile>,
}

/// Access-fraction histogram over equal slices of one object's address
/// range, for one phase. Used to split accesses across chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkHistogram {
    pub object_id: ObjectId,
    pub phase: usize,
    pub fractions: Vec<f64>,
}

/// One rank's trace: the target objects, one iteration of phases, and how
/// many times the iteration repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trace {
    #[serde(default = "default_schema_version")]
    pub schema_version: String,
    pub objects: Vec<DataObject>,
    pub phases: Vec<PhaseProfile>,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_iteration_noise: Option<Vec<Noise>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_iteration_overrides: Option<Vec<OverrideProfile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_histograms: Option<Vec<ChunkHistogram>>,
}

fn default_schema_version() -> String {
    SCHEMA_VERSION.to_string()
}

impl Trace {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: SCHEMA_VERSION.into(),
                got: self.schema_version.clone(),
            });
        }
        if self.phases.is_empty() {
            return Err(Error::invalid("phases", "must be non-empty (no phases)"));
        }
        if self.iterations < 2 {
            return Err(Error::invalid(
                "iterations",
                "must be >= 2 (one profiling iteration plus at least one enforcement iteration)",
            ));
        }
        let mut ids = BTreeSet::new();
        for obj in &self.objects {
            if !ids.insert(&obj.id) {
                return Err(Error::invalid("objects", format!("duplicate id {}", obj.id)));
            }
            if obj.size == 0 {
                return Err(Error::invalid(
                    format!("objects[{}].size", obj.id),
                    "must be > 0",
                ));
            }
        }
        for (p, phase) in self.phases.iter().enumerate() {
            if !(phase.baseline_time > 0.0) {
                return Err(Error::invalid(
                    format!("phases[{p}].baseline_time"),
                    "must be > 0",
                ));
            }
            if phase.samples_total == 0 {
                return Err(Error::invalid(
                    format!("phases[{p}].samples_total"),
                    "must be > 0",
                ));
            }
            let mut seen = BTreeSet::new();
            for acc in &phase.accesses {
                if !ids.contains(&acc.object_id) {
                    return Err(Error::invalid(
                        format!("phases[{p}].accesses"),
                        format!("unknown object {}", acc.object_id),
                    ));
                }
                if !seen.insert(&acc.object_id) {
                    return Err(Error::invalid(
                        format!("phases[{p}].accesses"),
                        format!("duplicate record for object {}", acc.object_id),
                    ));
                }
                if !phase.referenced.contains(&acc.object_id) {
                    return Err(Error::invalid(
                        format!("phases[{p}].accesses"),
                        format!(
                            "object {} has an access record but is absent from referenced",
                            acc.object_id
                        ),
                    ));
                }
                if acc.data_access > 0 && acc.samples_with_access == 0 {
                    return Err(Error::invalid(
                        format!("phases[{p}].accesses[{}]", acc.object_id),
                        "samples_with_access must be > 0 whenever data_access > 0",
                    ));
                }
                if acc.samples_with_access > phase.samples_total {
                    return Err(Error::invalid(
                        format!("phases[{p}].accesses[{}]", acc.object_id),
                        "samples_with_access must not exceed samples_total",
                    ));
                }
            }
            for id in &phase.referenced {
                if !ids.contains(id) {
                    return Err(Error::invalid(
                        format!("phases[{p}].referenced"),
                        format!("unknown object {id}"),
                    ));
                }
            }
        }
        if let Some(noise) = &self.per_iteration_noise {
            if noise.len() != self.iterations {
                return Err(Error::invalid(
                    "per_iteration_noise",
                    "length must equal iterations",
                ));
            }
            for (i, n) in noise.iter().enumerate() {
                match n {
                    Noise::Uniform(f) if *f > 0.0 => {}
                    Noise::PerPhase(v) if v.len() == self.phases.len() && v.iter().all(|f| *f > 0.0) => {}
                    _ => {
                        return Err(Error::invalid(
                            format!("per_iteration_noise[{i}]"),
                            "factors must be > 0 and per-phase lists must match the phase count",
                        ))
                    }
                }
            }
        }
        if let Some(overrides) = &self.per_iteration_overrides {
            for ov in overrides {
                if ov.iteration >= self.iterations {
                    return Err(Error::invalid(
                        "per_iteration_overrides",
                        format!("iteration {} out of range", ov.iteration),
                    ));
                }
                if ov.phases.len() != self.phases.len() {
                    return Err(Error::invalid(
                        format!("per_iteration_overrides[{}]", ov.iteration),
                        "phase count must match the base profile",
                    ));
                }
            }
        }
        if let Some(hists) = &self.chunk_histograms {
            for h in hists {
                if !ids.contains(&h.object_id) {
                    return Err(Error::invalid(
                        "chunk_histograms",
                        format!("unknown object {}", h.object_id),
                    ));
                }
                if h.phase >= self.phases.len() {
                    return Err(Error::invalid(
                        "chunk_histograms",
                        format!("phase {} out of range", h.phase),
                    ));
                }
                if h.fractions.is_empty() || h.fractions.iter().any(|f| *f < 0.0) {
                    return Err(Error::invalid(
                        "chunk_histograms.fractions",
                        "must be non-empty and non-negative",
                    ));
                }
                let sum: f64 = h.fractions.iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::invalid(
                        "chunk_histograms.fractions",
                        format!("must sum to 1.0 (got {sum})"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn object(&self, id: &ObjectId) -> Option<&DataObject> {
        self.objects.iter().find(|o| &o.id == id)
    }

    pub fn size_of(&self, id: &ObjectId) -> Option<u64> {
        self.object(id).map(|o| o.size)
    }

    /// Map of object sizes, for cheap repeated lookups.
    pub fn sizes(&self) -> BTreeMap<ObjectId, u64> {
        self.objects.iter().map(|o| (o.id.clone(), o.size)).collect()
    }

    pub fn references(&self, phase: usize, id: &ObjectId) -> bool {
        self.phases[phase].referenced.contains(id)
    }

    pub fn referenced_anywhere(&self, id: &ObjectId) -> bool {
        self.phases.iter().any(|p| p.referenced.contains(id))
    }

    /// Noise factor applied to `phase` of `iteration` (1.0 when absent).
    pub fn noise_factor(&self, iteration: usize, phase: usize) -> f64 {
        match &self.per_iteration_noise {
            Some(v) => v[iteration].factor(phase),
            None => 1.0,
        }
    }

    /// Override phases recorded for `iteration`, if the trace carries any.
    pub fn override_for(&self, iteration: usize) -> Option<&[PhaseProfile]> {
        self.per_iteration_overrides
            .as_ref()
            .and_then(|ovs| ovs.iter().find(|o| o.iteration == iteration))
            .map(|o| o.phases.as_slice())
    }

    pub fn histogram_for(&self, id: &ObjectId, phase: usize) -> Option<&ChunkHistogram> {
        self.chunk_histograms
            .as_ref()
            .and_then(|hs| hs.iter().find(|h| &h.object_id == id && h.phase == phase))
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Builds a trace from a compact description: object (id, size) pairs and
    /// per-phase (baseline, referenced ids with uniform access records).
    pub fn trace(
        objects: &[(&str, u64)],
        phases: &[(f64, &[&str])],
        iterations: usize,
        data_access: u64,
        samples_with_access: u64,
    ) -> Trace {
        Trace {
            schema_version: SCHEMA_VERSION.into(),
            objects: objects
                .iter()
                .map(|(id, size)| DataObject {
                    id: ObjectId::from(*id),
                    size: *size,
                    partitionable: false,
                    static_ref_estimate: None,
                })
                .collect(),
            phases: phases
                .iter()
                .map(|(baseline, refs)| PhaseProfile {
                    kind: PhaseKind::Compute,
                    baseline_time: *baseline,
                    samples_total: 10_000_000,
                    accesses: refs
                        .iter()
                        .map(|id| AccessRecord {
                            object_id: ObjectId::from(*id),
                            data_access,
                            samples_with_access,
                        })
                        .collect(),
                    referenced: refs.iter().map(|id| ObjectId::from(*id)).collect(),
                })
                .collect(),
            iterations,
            per_iteration_noise: None,
            per_iteration_overrides: None,
            chunk_histograms: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::trace;
    use super::*;

    #[test]
    fn minimal_trace_validates() {
        let t = trace(&[("a", 1 << 20)], &[(1.0, &["a"]), (1.0, &[])], 2, 100, 10);
        t.validate().unwrap();
    }

    #[test]
    fn rejects_access_without_reference() {
        let mut t = trace(&[("a", 1 << 20)], &[(1.0, &["a"])], 2, 100, 10);
        t.phases[0].referenced.clear();
        let err = t.validate().unwrap_err();
        assert!(err.to_string().contains("absent from referenced"));
    }

    #[test]
    fn rejects_single_iteration() {
        let t = trace(&[("a", 1 << 20)], &[(1.0, &["a"])], 1, 100, 10);
        assert!(t.validate().is_err());
    }

    #[test]
    fn rejects_empty_phases() {
        let t = trace(&[("a", 1 << 20)], &[], 2, 100, 10);
        let err = t.validate().unwrap_err();
        assert!(err.to_string().contains("no phases"));
    }

    #[test]
    fn rejects_noise_length_mismatch() {
        let mut t = trace(&[("a", 1 << 20)], &[(1.0, &["a"])], 3, 100, 10);
        t.per_iteration_noise = Some(vec![Noise::Uniform(1.0)]);
        assert!(t.validate().is_err());
    }

    #[test]
    fn rejects_documented_invariant_violations() {
        type Breaker = fn(&mut Trace);
        let cases: &[(&str, Breaker, &str)] = &[
            ("duplicate object id", |t| t.objects.push(t.objects[0].clone()), "duplicate id"),
            ("zero object size", |t| t.objects[0].size = 0, "must be > 0"),
            ("zero baseline", |t| t.phases[0].baseline_time = 0.0, "baseline_time"),
            ("zero samples_total", |t| t.phases[0].samples_total = 0, "samples_total"),
            (
                "attributed samples exceed total",
                |t| t.phases[0].accesses[0].samples_with_access = u64::MAX,
                "must not exceed samples_total",
            ),
            (
                "accesses without attributed samples",
                |t| t.phases[0].accesses[0].samples_with_access = 0,
                "whenever data_access > 0",
            ),
            (
                "unknown referenced object",
                |t| {
                    t.phases[0].referenced.insert(ObjectId::from("ghost"));
                },
                "unknown object",
            ),
            (
                "override with wrong phase count",
                |t| {
                    t.per_iteration_overrides = Some(vec![OverrideProfile {
                        iteration: 1,
                        phases: Vec::new(),
                    }])
                },
                "phase count",
            ),
        ];
        for (name, breaker, needle) in cases {
            let mut t = trace(&[("a", 1 << 20)], &[(1.0, &["a"]), (1.0, &[])], 2, 100, 10);
            breaker(&mut t);
            let err = t.validate().expect_err(name).to_string();
            assert!(err.contains(needle), "{name}: unexpected message {err:?}");
        }
    }

    #[test]
    fn rejects_bad_histogram() {
        let mut t = trace(&[("a", 1 << 20)], &[(1.0, &["a"])], 2, 100, 10);
        t.chunk_histograms = Some(vec![ChunkHistogram {
            object_id: ObjectId::from("a"),
            phase: 0,
            fractions: vec![0.5, 0.4],
        }]);
        assert!(t.validate().is_err());
    }
}
