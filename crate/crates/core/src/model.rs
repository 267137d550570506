//! Benefit and cost models for moving one object between tiers: bandwidth
//! and latency benefit, the non-reference window that lets a migration
//! overlap application execution, the overlap-reduced movement cost, and
//! the eviction cost paid when DRAM is full.

use crate::error::{Error, Result};
use crate::machine::{classify_sensitivity, object_bandwidth, MachineConfig, Sensitivity};
use crate::trace::{AccessRecord, IdSet, ObjectId, Trace};
use std::collections::BTreeMap;

/// Time saved per iteration phase by serving the object's traffic at DRAM
/// bandwidth instead of NVM bandwidth.
pub fn benefit_bw(data_access: u64, cfg: &MachineConfig) -> f64 {
    let bytes = data_access as f64 * cfg.cacheline_size as f64;
    (bytes / cfg.nvm_bw - bytes / cfg.dram_bw) * cfg.cf_bw
}

/// Time saved by serving the object's accesses at DRAM latency.
pub fn benefit_lat(data_access: u64, cfg: &MachineConfig) -> f64 {
    let da = data_access as f64;
    (da * cfg.nvm_lat - da * cfg.dram_lat) * cfg.cf_lat
}

/// Benefit dispatched on the object's sensitivity class; Mixed objects take
/// the larger of the two estimates.
pub fn benefit(access: &AccessRecord, sens: Sensitivity, cfg: &MachineConfig) -> f64 {
    match sens {
        Sensitivity::Bandwidth => benefit_bw(access.data_access, cfg),
        Sensitivity::Latency => benefit_lat(access.data_access, cfg),
        Sensitivity::Mixed => {
            benefit_bw(access.data_access, cfg).max(benefit_lat(access.data_access, cfg))
        }
    }
}

/// The window in which a migration for `target_phase` can run without
/// touching a phase that references the object.
///
/// `trigger_phase` is the earliest phase whose start the request can be
/// enqueued at; the scan walks backward from the target through at most one
/// iteration-boundary wrap, so `trigger_phase > target_phase` means the
/// window starts in the tail of the previous iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapWindow {
    pub trigger_phase: usize,
    pub target_phase: usize,
    pub overlap_time: f64,
}

impl OverlapWindow {
    pub fn wraps(&self) -> bool {
        self.trigger_phase > self.target_phase
    }
}

/// Backward scan for the widest non-reference window ending at
/// `target_phase`. Does not require the object to be referenced anywhere;
/// eviction scheduling uses it for arbitrary victims.
pub fn reference_window(trace: &Trace, target_phase: usize, id: &ObjectId) -> OverlapWindow {
    let n = trace.phases.len();
    let mut steps = 0;
    let mut overlap_time = 0.0;
    while steps < n - 1 {
        let k = (target_phase + n - 1 - steps) % n;
        if trace.references(k, id) {
            break;
        }
        overlap_time += trace.phases[k].baseline_time;
        steps += 1;
    }
    OverlapWindow {
        trigger_phase: (target_phase + n - steps) % n,
        target_phase,
        overlap_time,
    }
}

/// Overlap window for migrating `id` in time for `target_phase`, which must
/// reference it.
pub fn overlap_window(trace: &Trace, target_phase: usize, id: &ObjectId) -> Result<OverlapWindow> {
    if !trace.referenced_anywhere(id) {
        return Err(Error::NotReferenced(id.clone()));
    }
    if !trace.references(target_phase, id) {
        return Err(Error::NotReferenced(id.clone()));
    }
    Ok(reference_window(trace, target_phase, id))
}

/// Movement cost after overlapping with application execution:
/// `max(size / mem_copy_bw - overlap_time, 0)`.
pub fn movement_cost(size: u64, overlap_time: f64, cfg: &MachineConfig) -> f64 {
    (size as f64 / cfg.mem_copy_bw - overlap_time).max(0.0)
}

/// Victims to push out of DRAM to free `needed` bytes, minimizing evicted
/// granules (ties: fewer victims, then lexicographically smallest id set),
/// plus the eviction cost after overlapping through the binding (smallest)
/// victim window.
pub fn eviction_plan(
    needed: u64,
    resident: &[(ObjectId, u64)],
    trace: &Trace,
    target_phase: usize,
    cfg: &MachineConfig,
) -> Result<(Vec<ObjectId>, f64)> {
    if needed == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let need_g = cfg.granules(needed);

    // Ascending id order keeps the DP's lexicographic tie-break sound.
    let mut items: Vec<(&ObjectId, u64, u64)> = resident
        .iter()
        .map(|(id, size)| (id, cfg.granules(*size), *size))
        .collect();
    items.sort_by(|a, b| a.0.cmp(b.0));

    let total_g: u64 = items.iter().map(|i| i.1).sum();
    if total_g < need_g {
        return Err(Error::InfeasibleEviction {
            needed,
            available: items.iter().map(|i| i.2).sum(),
        });
    }

    // Subset-sum DP over granule totals: best[s] = victim set summing to
    // exactly s granules, minimal by (count, lex ids).
    let mut best: Vec<Option<(usize, Vec<usize>)>> = vec![None; total_g as usize + 1];
    best[0] = Some((0, Vec::new()));
    for (idx, item) in items.iter().enumerate() {
        let g = item.1 as usize;
        for s in (g..best.len()).rev() {
            let Some((count, chosen)) = best[s - g].clone() else {
                continue;
            };
            let cand = (count + 1, {
                let mut v = chosen;
                v.push(idx);
                v
            });
            let better = match &best[s] {
                None => true,
                Some(cur) => cand.0 < cur.0 || (cand.0 == cur.0 && cand.1 < cur.1),
            };
            if better {
                best[s] = Some(cand);
            }
        }
    }

    let (_, chosen) = (need_g as usize..best.len())
        .find_map(|s| best[s].clone())
        .expect("feasibility checked above");

    let victims: Vec<ObjectId> = chosen.iter().map(|&i| items[i].0.clone()).collect();
    let evicted_bytes: u64 = chosen.iter().map(|&i| items[i].2).sum();
    let binding_overlap = victims
        .iter()
        .map(|id| reference_window(trace, target_phase, id).overlap_time)
        .fold(f64::INFINITY, f64::min);
    let extra_cost = movement_cost(evicted_bytes, binding_overlap, cfg);
    Ok((victims, extra_cost))
}

/// Knapsack weight components for one (object, phase) move decision.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementEstimate {
    pub benefit: f64,
    pub cost: f64,
    pub extra_cost: f64,
    pub weight: f64,
    pub sensitivity: Sensitivity,
}

/// What the planner already knows is in DRAM when it weighs a candidate.
#[derive(Debug, Clone, Copy)]
pub struct PlacementContext<'a> {
    pub resident: &'a IdSet,
    pub sizes: &'a BTreeMap<ObjectId, u64>,
}

impl PlacementContext<'_> {
    pub fn resident_granules(&self, cfg: &MachineConfig) -> u64 {
        self.resident
            .iter()
            .map(|id| cfg.granules(self.sizes[id]))
            .sum()
    }

    pub fn free_granules(&self, cfg: &MachineConfig) -> u64 {
        cfg.capacity_granules()
            .saturating_sub(self.resident_granules(cfg))
    }

    fn evictable(&self) -> Vec<(ObjectId, u64)> {
        self.resident
            .iter()
            .map(|id| (id.clone(), self.sizes[id]))
            .collect()
    }
}

/// Full weight estimate for moving `id` into DRAM for `phase` given the
/// context's residency. An object already resident costs nothing; an
/// inbound move pays the overlap-reduced copy plus any eviction it forces.
pub fn estimate_movement(
    id: &ObjectId,
    phase: usize,
    ctx: PlacementContext<'_>,
    trace: &Trace,
    cfg: &MachineConfig,
) -> Result<MovementEstimate> {
    let profile = &trace.phases[phase];
    let access = profile
        .access(id)
        .ok_or_else(|| Error::NotReferenced(id.clone()))?;
    let bw = object_bandwidth(access, profile.samples_total, profile.baseline_time, cfg)?;
    let sensitivity = classify_sensitivity(bw, cfg);
    let ben = benefit(access, sensitivity, cfg);

    if ctx.resident.contains(id) {
        return Ok(MovementEstimate {
            benefit: ben,
            cost: 0.0,
            extra_cost: 0.0,
            weight: ben,
            sensitivity,
        });
    }

    let size = ctx.sizes[id];
    let window = reference_window(trace, phase, id);
    let cost = movement_cost(size, window.overlap_time, cfg);
    let free_bytes = ctx.free_granules(cfg) * cfg.capacity_granule;
    let needed = size.saturating_sub(free_bytes);
    let extra_cost = if needed == 0 {
        0.0
    } else {
        eviction_plan(needed, &ctx.evictable(), trace, phase, cfg)?.1
    };
    Ok(MovementEstimate {
        benefit: ben,
        cost,
        extra_cost,
        weight: ben - cost - extra_cost,
        sensitivity,
    })
}
