//! Virtual-time discrete-event enforcement simulator. Phases run
//! sequentially on a single timeline; an asynchronous migration engine
//! (the modeled helper thread) services a FIFO of requests in parallel
//! virtual time. Phase starts block until every pending migration that
//! targets the phase, or touches an object the phase references, has
//! completed. The first iteration is the profiling iteration and runs at
//! the NVM baseline with no plan.

use crate::error::{Error, Result};
use crate::machine::{classify_sensitivity, object_bandwidth, MachineConfig};
use crate::model::benefit;
use crate::plan::{
    apply_chunking, build_plan, choose_plan, cross_global_search, phase_local_search,
    initial_placement, validate_plan, Direction, PartitionMode, PlacementPlan, PlanMode,
    SearchMode,
};
use crate::trace::{IdSet, Noise, ObjectId, PhaseProfile, Trace, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Predicted time of one phase under a residency: the NVM baseline minus
/// the benefit of every DRAM-resident object, clamped at a floor fraction
/// of the baseline.
pub fn predict_phase_time(phase: &PhaseProfile, residency: &IdSet, cfg: &MachineConfig) -> f64 {
    predict_clamped(phase, residency, cfg).0
}

fn predict_clamped(phase: &PhaseProfile, residency: &IdSet, cfg: &MachineConfig) -> (f64, bool) {
    let mut saved = 0.0;
    for rec in &phase.accesses {
        if rec.data_access == 0 || rec.samples_with_access == 0 {
            continue;
        }
        if !residency.contains(&rec.object_id) {
            continue;
        }
        // classification cannot fail: samples_with_access > 0 checked above
        let bw = object_bandwidth(rec, phase.samples_total, phase.baseline_time, cfg)
            .expect("record has attributed samples");
        saved += benefit(rec, classify_sensitivity(bw, cfg), cfg);
    }
    let floor = cfg.phase_floor_frac * phase.baseline_time;
    let raw = phase.baseline_time - saved;
    if raw < floor {
        (floor, true)
    } else {
        (raw, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StallRecord {
    pub iteration: usize,
    pub phase: usize,
    pub wait_s: f64,
}

/// Virtual-time results of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationReport {
    #[serde(default = "default_schema_version")]
    pub schema_version: String,
    pub policy: String,
    pub total_time_s: f64,
    /// Realized phase times, stalls excluded: `[iteration][phase]`.
    pub per_phase_times_s: Vec<Vec<f64>>,
    pub migrations_count: u64,
    pub migrated_bytes: u64,
    /// Share of engine busy time hidden behind application execution.
    pub pct_overlap: f64,
    pub stalls: Vec<StallRecord>,
    pub replans: u64,
    pub clamp_hits: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn default_schema_version() -> String {
    SCHEMA_VERSION.to_string()
}

impl SimulationReport {
    pub fn stall_total(&self) -> f64 {
        self.stalls.iter().map(|s| s.wait_s).sum()
    }
}

/// Knobs for one simulation run.
#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Apply the trace's (or the override's) per-iteration noise.
    pub use_noise: bool,
    /// Replaces the trace's noise when set.
    pub noise_override: Option<Vec<Noise>>,
    /// Re-plan with this search mode when a phase deviates from its
    /// profiled time by more than the reprofile threshold.
    pub adapt: Option<SearchMode>,
    pub policy_label: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Loc {
    Dram,
    Nvm,
    InFlight { to_dram: bool, done: f64 },
}

#[derive(Debug, Clone)]
struct Request {
    object: ObjectId,
    to_dram: bool,
    target_iter: usize,
    target_phase: usize,
    done: f64,
}

struct Engine {
    free_at: f64,
    busy_total: f64,
    pending: Vec<Request>,
    residency: BTreeMap<ObjectId, Loc>,
    free_granules: u64,
    migrations: u64,
    migrated_bytes: u64,
}

impl Engine {
    fn eventual(&self, id: &ObjectId) -> bool /* lands in DRAM */ {
        match self.residency[id] {
            Loc::Dram => true,
            Loc::Nvm => false,
            Loc::InFlight { to_dram, .. } => to_dram,
        }
    }

    /// Enqueues one migration at virtual time `now`; a request for an
    /// object already heading to the destination is dropped.
    #[allow(clippy::too_many_arguments)]
    fn enqueue(
        &mut self,
        id: &ObjectId,
        to_dram: bool,
        bytes: u64,
        granules: u64,
        target_iter: usize,
        target_phase: usize,
        now: f64,
        cfg: &MachineConfig,
    ) -> Result<()> {
        if self.eventual(id) == to_dram {
            return Ok(());
        }
        if to_dram {
            if self.free_granules < granules {
                return Err(Error::CapacityViolation(format!(
                    "moving {id} into DRAM needs {granules} granules but only {} are free",
                    self.free_granules
                )));
            }
            self.free_granules -= granules;
        } else {
            self.free_granules += granules;
        }
        let duration = bytes as f64 / cfg.mem_copy_bw;
        let start = self.free_at.max(now);
        let done = start + duration;
        self.free_at = done;
        self.busy_total += duration;
        self.migrations += 1;
        self.migrated_bytes += bytes;
        self.residency.insert(id.clone(), Loc::InFlight { to_dram, done });
        self.pending.push(Request {
            object: id.clone(),
            to_dram,
            target_iter,
            target_phase,
            done,
        });
        Ok(())
    }

    /// Completion time of the last pending request the phase must wait on.
    fn wait_until(&self, iteration: usize, phase: usize, referenced: &IdSet) -> f64 {
        self.pending
            .iter()
            .filter(|r| {
                (r.target_iter == iteration && r.target_phase == phase)
                    || referenced.contains(&r.object)
            })
            .map(|r| r.done)
            .fold(0.0, f64::max)
    }

    /// Applies every completion at or before `now`.
    fn settle(&mut self, now: f64) {
        let mut i = 0;
        while i < self.pending.len() {
            if self.pending[i].done <= now {
                let req = self.pending.remove(i);
                // only flip if a later request did not supersede this one
                if let Loc::InFlight { to_dram, done } = self.residency[&req.object] {
                    if to_dram == req.to_dram && done == req.done {
                        self.residency.insert(
                            req.object,
                            if to_dram { Loc::Dram } else { Loc::Nvm },
                        );
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    fn dram_set(&self) -> IdSet {
        self.residency
            .iter()
            .filter(|(_, loc)| matches!(loc, Loc::Dram))
            .map(|(id, _)| id.clone())
            .collect()
    }

    fn drained_dram_set(&self) -> IdSet {
        self.residency
            .keys()
            .filter(|id| self.eventual(id))
            .cloned()
            .collect()
    }
}

/// Runs `plan` over the trace for `trace.iterations` iterations. Iteration
/// 0 profiles at the NVM baseline; enforcement starts at iteration 1.
pub fn simulate(
    trace: &Trace,
    plan: &PlacementPlan,
    cfg: &MachineConfig,
    opts: &SimOptions,
) -> Result<SimulationReport> {
    let view = apply_chunking(trace, &plan.chunked_objects);
    validate_plan(&view, plan, cfg)?;
    let sizes = view.sizes();
    let phases = view.phases.len();
    let iterations = view.iterations;
    let overhead = 1.0 + cfg.runtime_overhead_frac;

    let noise = |iteration: usize, phase: usize| -> f64 {
        if !opts.use_noise {
            return 1.0;
        }
        match &opts.noise_override {
            Some(v) => v[iteration % v.len()].factor(phase),
            None => view.noise_factor(iteration, phase),
        }
    };

    let mut engine = Engine {
        free_at: 0.0,
        busy_total: 0.0,
        pending: Vec::new(),
        residency: sizes
            .keys()
            .map(|id| {
                let loc = if plan.initial_dram.contains(id) {
                    Loc::Dram
                } else {
                    Loc::Nvm
                };
                (id.clone(), loc)
            })
            .collect(),
        free_granules: cfg.capacity_granules().saturating_sub(
            plan.initial_dram
                .iter()
                .map(|id| cfg.granules(sizes[id]))
                .sum(),
        ),
        migrations: 0,
        migrated_bytes: 0,
    };

    let mut current_plan = plan.clone();
    let mut planning_phases = view.phases.clone();
    let mut epoch_start = 1usize;
    let mut clock = 0.0f64;
    let mut per_phase = vec![vec![0.0; phases]; iterations];
    let mut stalls = Vec::new();
    let mut replans = 0u64;
    let mut clamp_hits = 0u64;

    for k in 0..iterations {
        let mut deviated = false;
        for p in 0..phases {
            if k >= 1 {
                // Evictions enter the FIFO ahead of inbounds enqueued at
                // the same phase start, so the space they free is available
                // when the inbound reaches the engine.
                let passes = [Direction::DramToNvm, Direction::NvmToDram];
                for direction in passes {
                    for m in &current_plan.migrations {
                        if m.direction != direction {
                            continue;
                        }
                        let wrapped = m.trigger > m.target_phase;
                        // Steady-only movements belong to the wrap between
                        // iterations; the epoch's first iteration has a
                        // different space layout and must not replay them.
                        let fire = if m.trigger == p && !wrapped {
                            (!m.steady_only || k > epoch_start).then_some((k, m.target_phase))
                        } else if m.trigger == p && wrapped && k + 1 < iterations {
                            Some((k + 1, m.target_phase))
                        } else if wrapped && k == epoch_start && p == 0 && !m.steady_only {
                            // the previous-iteration tail does not exist for
                            // the first enforced iteration: fire at its
                            // start instead
                            Some((k, m.target_phase))
                        } else {
                            None
                        };
                        if let Some((ti, tp)) = fire {
                            let bytes = sizes[&m.object_id];
                            engine.enqueue(
                                &m.object_id,
                                m.direction == Direction::NvmToDram,
                                bytes,
                                cfg.granules(bytes),
                                ti,
                                tp,
                                clock,
                                cfg,
                            )?;
                        }
                    }
                }
            }

            let wait = engine.wait_until(k, p, &view.phases[p].referenced);
            if wait > clock {
                stalls.push(StallRecord {
                    iteration: k,
                    phase: p,
                    wait_s: wait - clock,
                });
                clock = wait;
            }
            engine.settle(clock);

            // Safety: nothing the phase references may still be in flight.
            for id in &view.phases[p].referenced {
                if matches!(engine.residency[id], Loc::InFlight { .. }) {
                    return Err(Error::DependencyViolation(format!(
                        "object {id} is in flight while phase {p} of iteration {k} references it"
                    )));
                }
            }

            let resident = engine.dram_set();
            let duration = if k == 0 {
                view.phases[p].baseline_time * noise(k, p) * overhead
            } else {
                let (predicted, clamped) = predict_clamped(&view.phases[p], &resident, cfg);
                if clamped {
                    clamp_hits += 1;
                }
                predicted * noise(k, p) * overhead
            };
            per_phase[k][p] = duration;

            if opts.adapt.is_some() && k >= 1 {
                let expected = predict_phase_time(&planning_phases[p], &resident, cfg) * overhead;
                if (duration - expected).abs() > cfg.reprofile_threshold * expected {
                    deviated = true;
                }
            }

            clock += duration;
        }

        if let Some(mode) = opts.adapt {
            if deviated && k >= 1 && k + 1 < iterations {
                replans += 1;
                planning_phases = match view.override_for(k) {
                    Some(phases) => phases.to_vec(),
                    None => view.phases.clone(),
                };
                let mut planning_view = view.clone();
                planning_view.phases = planning_phases.clone();
                let start_state = engine.drained_dram_set();
                current_plan = replan(&planning_view, cfg, mode, &start_state)?;
                validate_plan(&planning_view, &current_plan, cfg)?;
                epoch_start = k + 1;
            }
        }
    }

    let stall_total: f64 = stalls.iter().map(|s| s.wait_s).sum();
    let pct_overlap = if engine.busy_total > 0.0 {
        ((engine.busy_total - stall_total) / engine.busy_total * 100.0).clamp(0.0, 100.0)
    } else {
        100.0
    };

    let mut notes = Vec::new();
    if let Some((orig, rounded)) = cfg.capacity_rounded {
        notes.push(format!(
            "dram_capacity rounded down from {orig} to {rounded} bytes"
        ));
    }
    if clamp_hits > 0 {
        notes.push(format!(
            "phase floor clamp ({}% of baseline) hit {clamp_hits} times",
            cfg.phase_floor_frac * 100.0
        ));
    }

    Ok(SimulationReport {
        schema_version: SCHEMA_VERSION.into(),
        policy: opts.policy_label.clone(),
        total_time_s: clock,
        per_phase_times_s: per_phase,
        migrations_count: engine.migrations,
        migrated_bytes: engine.migrated_bytes,
        pct_overlap,
        stalls,
        replans,
        clamp_hits,
        notes,
    })
}

/// A plan that keeps the current residency and never moves anything.
fn stay_plan(mode: PlanMode, phases: usize, resident: &IdSet) -> PlacementPlan {
    let mut plan = PlacementPlan::empty(mode, phases);
    plan.initial_dram = resident.clone();
    plan.per_phase_residency = vec![resident.clone(); phases];
    plan
}

/// Plan selection used by the managed policy and by adaptation: the
/// requested search(es), with doing nothing as the floor so enforcement
/// never loses to leaving data where it is.
fn replan(
    view: &Trace,
    cfg: &MachineConfig,
    mode: SearchMode,
    start_state: &IdSet,
) -> Result<PlacementPlan> {
    let chosen = match mode {
        SearchMode::Local => phase_local_search(view, cfg, start_state)?,
        SearchMode::Global => cross_global_search(view, cfg, start_state)?,
        SearchMode::Auto => {
            let local = phase_local_search(view, cfg, start_state)?;
            let global = cross_global_search(view, cfg, start_state)?;
            choose_plan(local, global, view, cfg)?.0
        }
    };
    if mode == SearchMode::Auto {
        let stay = stay_plan(chosen.mode, view.phases.len(), start_state);
        if predict_plan_total(view, &stay, cfg)? < predict_plan_total(view, &chosen, cfg)? {
            return Ok(stay);
        }
    }
    Ok(chosen)
}

/// Noise-free predicted total for a plan; the quantity the two searches are
/// compared on.
pub fn predict_plan_total(trace: &Trace, plan: &PlacementPlan, cfg: &MachineConfig) -> Result<f64> {
    let opts = SimOptions {
        use_noise: false,
        noise_override: None,
        adapt: None,
        policy_label: "predict".into(),
    };
    Ok(simulate(trace, plan, cfg, &opts)?.total_time_s)
}

/// Execution policies the report compares.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Everything stays in NVM; the baseline.
    NvmOnly,
    /// Every target object in DRAM from the start; capacity is ignored —
    /// this is the reference upper bound.
    DramOnly,
    /// Initial placement, both searches, plan selection, adaptation.
    Managed,
    LocalOnly,
    GlobalOnly,
    /// A pre-built plan from a file; runs without adaptation.
    Static(PlacementPlan),
}

impl Policy {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::NvmOnly => "nvm-only",
            Policy::DramOnly => "dram-only",
            Policy::Managed => "managed",
            Policy::LocalOnly => "local-only",
            Policy::GlobalOnly => "global-only",
            Policy::Static(_) => "static-plan",
        }
    }
}

/// Pure-DRAM reference run: every phase at its all-resident predicted time,
/// no profiling iteration, no migrations.
fn run_dram_only(trace: &Trace, cfg: &MachineConfig, opts: &SimOptions) -> SimulationReport {
    let all: IdSet = trace.objects.iter().map(|o| o.id.clone()).collect();
    let mut per_phase = vec![vec![0.0; trace.phases.len()]; trace.iterations];
    let mut clamp_hits = 0u64;
    let mut total = 0.0;
    for k in 0..trace.iterations {
        for (p, phase) in trace.phases.iter().enumerate() {
            let (predicted, clamped) = predict_clamped(phase, &all, cfg);
            if clamped {
                clamp_hits += 1;
            }
            let noise = if opts.use_noise {
                match &opts.noise_override {
                    Some(v) => v[k % v.len()].factor(p),
                    None => trace.noise_factor(k, p),
                }
            } else {
                1.0
            };
            let t = predicted * noise;
            per_phase[k][p] = t;
            total += t;
        }
    }
    SimulationReport {
        schema_version: SCHEMA_VERSION.into(),
        policy: opts.policy_label.clone(),
        total_time_s: total,
        per_phase_times_s: per_phase,
        migrations_count: 0,
        migrated_bytes: 0,
        pct_overlap: 100.0,
        stalls: Vec::new(),
        replans: 0,
        clamp_hits,
        notes: Vec::new(),
    }
}

/// Runs one policy over the trace and reports virtual-time results.
pub fn run_policy(
    trace: &Trace,
    cfg: &MachineConfig,
    policy: &Policy,
    noise_override: Option<Vec<Noise>>,
) -> Result<SimulationReport> {
    let mut opts = SimOptions {
        use_noise: true,
        noise_override,
        adapt: None,
        policy_label: policy.label().into(),
    };
    match policy {
        Policy::NvmOnly => {
            let plan = PlacementPlan::empty(PlanMode::CrossGlobal, trace.phases.len());
            simulate(trace, &plan, cfg, &opts)
        }
        Policy::DramOnly => Ok(run_dram_only(trace, cfg, &opts)),
        Policy::Managed => {
            let bundle = build_plan(trace, cfg, SearchMode::Auto, PartitionMode::Auto)?;
            let initial = bundle.plan.initial_dram.clone();
            let mut plan = bundle.plan;
            let stay = stay_plan(plan.mode, bundle.view.phases.len(), &initial);
            if predict_plan_total(&bundle.view, &stay, cfg)?
                < predict_plan_total(&bundle.view, &plan, cfg)?
            {
                let chunked = plan.chunked_objects.clone();
                plan = stay;
                plan.chunked_objects = chunked;
            }
            opts.adapt = Some(SearchMode::Auto);
            simulate(trace, &plan, cfg, &opts)
        }
        Policy::LocalOnly | Policy::GlobalOnly => {
            let mode = if matches!(policy, Policy::LocalOnly) {
                SearchMode::Local
            } else {
                SearchMode::Global
            };
            let bundle = build_plan(trace, cfg, mode, PartitionMode::Auto)?;
            opts.adapt = Some(mode);
            simulate(trace, &bundle.plan, cfg, &opts)
        }
        Policy::Static(plan) => simulate(trace, plan, cfg, &opts),
    }
}

/// Convenience wrapper for the adaptation path: simulates the plan with
/// re-planning enabled and returns the replan count.
pub fn adapt(trace: &Trace, cfg: &MachineConfig, plan: &PlacementPlan) -> Result<(SimulationReport, u64)> {
    let opts = SimOptions {
        use_noise: true,
        noise_override: None,
        adapt: Some(SearchMode::Auto),
        policy_label: "managed".into(),
    };
    let report = simulate(trace, plan, cfg, &opts)?;
    let replans = report.replans;
    Ok((report, replans))
}

/// Initial placement + search selection, as the managed policy would run
/// it, without simulating. Exposed for the CLI's `plan` command.
pub fn managed_initial(trace: &Trace, cfg: &MachineConfig) -> IdSet {
    initial_placement(&trace.objects, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::MIB;
    use crate::plan::Migration;
    use crate::trace::test_support::trace;

    fn ids(names: &[&str]) -> IdSet {
        names.iter().map(|n| ObjectId::from(*n)).collect()
    }

    #[test]
    fn predict_cases() {
        let cfg = MachineConfig::default();
        let t = trace(&[("a", MIB)], &[(1.0, &["a"]), (1.0, &[])], 2, 5_000_000, 400_000);
        let phase = &t.phases[0];
        assert_eq!(predict_phase_time(phase, &IdSet::new(), &cfg), 1.0);
        let with_a = predict_phase_time(phase, &ids(&["a"]), &cfg);
        assert!(with_a < 1.0 && with_a > 0.0);
        // benefits past the clamp floor
        let mut heavy = t.clone();
        heavy.phases[0].accesses[0].data_access = 500_000_000;
        let clamped = predict_phase_time(&heavy.phases[0], &ids(&["a"]), &cfg);
        assert_eq!(clamped, 0.05);
    }

    #[test]
    fn empty_plan_is_pure_baseline() {
        let cfg = MachineConfig::default();
        let t = trace(&[("a", MIB)], &[(1.5, &["a"]), (0.5, &[])], 3, 1000, 100);
        let plan = PlacementPlan::empty(PlanMode::CrossGlobal, 2);
        let opts = SimOptions {
            use_noise: true,
            policy_label: "nvm-only".into(),
            ..Default::default()
        };
        let report = simulate(&t, &plan, &cfg, &opts).unwrap();
        assert_eq!(report.total_time_s, 2.0 * 3.0);
        assert_eq!(report.migrations_count, 0);
        assert!(report.stalls.is_empty());
    }

    /// One object referenced only in the last of four phases; a hand plan
    /// triggers its migration at phase 0 so the window is three phases.
    fn window_fixture(bytes: u64) -> (Trace, MachineConfig, PlacementPlan) {
        let t = trace(
            &[("x", bytes)],
            &[(1.0, &[]), (1.0, &[]), (1.0, &[]), (1.0, &["x"])],
            2,
            0,
            0,
        );
        let cfg = MachineConfig {
            dram_capacity: 16 * 1024 * MIB,
            ..MachineConfig::default()
        };
        let mut plan = PlacementPlan::empty(PlanMode::CrossGlobal, 4);
        plan.migrations.push(Migration {
            object_id: ObjectId::from("x"),
            direction: Direction::NvmToDram,
            trigger: 0,
            target_phase: 3,
            steady_only: false,
        });
        plan.per_phase_residency = vec![ids(&["x"]); 4];
        (t, cfg, plan)
    }

    #[test]
    fn fully_hidden_migration() {
        // 2e9 bytes at 4 GB/s = 0.5 s against a 3 s window
        let (t, cfg, plan) = window_fixture(2_000_000_000);
        let opts = SimOptions {
            policy_label: "static-plan".into(),
            ..Default::default()
        };
        let report = simulate(&t, &plan, &cfg, &opts).unwrap();
        assert!(report.stalls.is_empty());
        assert_eq!(report.pct_overlap, 100.0);
        assert_eq!(report.migrations_count, 1);
        assert_eq!(report.migrated_bytes, 2_000_000_000);
    }

    #[test]
    fn partially_exposed_migration() {
        // 15e9 bytes at 4 GB/s = 3.75 s against a 3 s window: 0.75 s stall
        let (t, cfg, plan) = window_fixture(15_000_000_000);
        let opts = SimOptions {
            policy_label: "static-plan".into(),
            ..Default::default()
        };
        let report = simulate(&t, &plan, &cfg, &opts).unwrap();
        assert_eq!(report.stalls.len(), 1);
        assert!((report.stalls[0].wait_s - 0.75).abs() < 1e-9);
        assert_eq!(report.stalls[0].phase, 3);
        assert!((report.pct_overlap - 80.0).abs() < 1e-9);
        assert!((report.total_time_s - 8.75).abs() < 1e-9);
    }

    fn adapt_trace(noise: Vec<Noise>) -> (Trace, MachineConfig) {
        let mut t = trace(
            &[("a", 16 * MIB)],
            &[(1.0, &["a"]), (1.0, &[])],
            4,
            5_000_000,
            400_000,
        );
        t.per_iteration_noise = Some(noise);
        (t, MachineConfig::default())
    }

    #[test]
    fn adapt_fires_on_large_deviation() {
        let (t, cfg) = adapt_trace(vec![
            Noise::Uniform(1.0),
            Noise::PerPhase(vec![1.2, 1.0]),
            Noise::Uniform(1.0),
            Noise::Uniform(1.0),
        ]);
        let report = run_policy(&t, &cfg, &Policy::Managed, None).unwrap();
        assert!(report.replans >= 1, "report: {report:?}");
    }

    #[test]
    fn adapt_quiet_below_threshold() {
        let (t, cfg) = adapt_trace(vec![Noise::Uniform(1.05); 4]);
        let report = run_policy(&t, &cfg, &Policy::Managed, None).unwrap();
        assert_eq!(report.replans, 0);

        let (t, cfg) = adapt_trace(vec![Noise::Uniform(1.0); 4]);
        let report = run_policy(&t, &cfg, &Policy::Managed, None).unwrap();
        assert_eq!(report.replans, 0);
    }

    #[test]
    fn policy_ordering_on_heterogeneous_machine() {
        let cfg = MachineConfig::default();
        let t = trace(
            &[("a", 32 * MIB), ("b", 32 * MIB)],
            &[(1.0, &["a", "b"]), (0.8, &["a"]), (0.6, &["b"])],
            4,
            4_000_000,
            300_000,
        );
        let nvm = run_policy(&t, &cfg, &Policy::NvmOnly, None).unwrap();
        let dram = run_policy(&t, &cfg, &Policy::DramOnly, None).unwrap();
        let managed = run_policy(&t, &cfg, &Policy::Managed, None).unwrap();
        assert!(dram.total_time_s <= managed.total_time_s + 1e-9);
        assert!(managed.total_time_s <= nvm.total_time_s + 1e-9);
        assert!(managed.total_time_s < nvm.total_time_s, "should actually help");
    }

    #[test]
    fn homogeneous_machine_makes_policies_equal() {
        let cfg = MachineConfig {
            nvm_bw: 12e9,
            nvm_lat: 100e-9,
            bw_peak_nvm: 12e9,
            ..MachineConfig::default()
        };
        let t = trace(
            &[("a", 32 * MIB)],
            &[(1.0, &["a"]), (0.5, &["a"])],
            3,
            4_000_000,
            300_000,
        );
        let nvm = run_policy(&t, &cfg, &Policy::NvmOnly, None).unwrap();
        let dram = run_policy(&t, &cfg, &Policy::DramOnly, None).unwrap();
        let managed = run_policy(&t, &cfg, &Policy::Managed, None).unwrap();
        assert_eq!(nvm.total_time_s, dram.total_time_s);
        assert_eq!(nvm.total_time_s, managed.total_time_s);
        assert_eq!(managed.migrations_count, 0);
    }

    #[test]
    fn adapt_wrapper_reports_replans() {
        let (t, cfg) = adapt_trace(vec![
            Noise::Uniform(1.0),
            Noise::Uniform(1.3),
            Noise::Uniform(1.0),
            Noise::Uniform(1.0),
        ]);
        let bundle =
            crate::plan::build_plan(&t, &cfg, SearchMode::Auto, crate::plan::PartitionMode::Auto)
                .unwrap();
        let (report, replans) = adapt(&t, &cfg, &bundle.plan).unwrap();
        assert!(replans >= 1);
        assert_eq!(report.replans, replans);
    }

    #[test]
    fn total_is_phase_sum_plus_stalls() {
        let (t, cfg, plan) = window_fixture(15_000_000_000);
        let opts = SimOptions {
            policy_label: "static-plan".into(),
            ..Default::default()
        };
        let report = simulate(&t, &plan, &cfg, &opts).unwrap();
        let sum: f64 = report.per_phase_times_s.iter().flatten().sum::<f64>()
            + report.stall_total();
        assert!((report.total_time_s - sum).abs() < 1e-9);
    }

    #[test]
    fn copy_bandwidth_monotonicity() {
        let (t, mut cfg, plan) = window_fixture(15_000_000_000);
        let opts = SimOptions {
            policy_label: "static-plan".into(),
            ..Default::default()
        };
        let mut prev = f64::INFINITY;
        for bw in [1e9, 2e9, 4e9, 8e9, 16e9] {
            cfg.mem_copy_bw = bw;
            let total = simulate(&t, &plan, &cfg, &opts).unwrap().total_time_s;
            assert!(total <= prev);
            prev = total;
        }
    }
}
