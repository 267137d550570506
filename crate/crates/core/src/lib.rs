//! Trace-driven planner and virtual-time simulator for data placement on
//! DRAM+NVM heterogeneous memory.
//!
//! The pipeline mirrors a phase-based placement runtime: per-phase profiles
//! classify each object's bandwidth/latency sensitivity, benefit/cost
//! models weigh candidate moves, a 0-1 knapsack picks DRAM residents
//! (per phase, or once across all phases), and a discrete-event simulator
//! enforces the plan with an asynchronous migration engine, reporting how
//! the managed system compares against NVM-only and DRAM-only execution.

pub mod error;
pub mod gen;
pub mod io;
pub mod machine;
pub mod model;
pub mod plan;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
pub use machine::{calibrate_cf, classify_sensitivity, object_bandwidth, MachineConfig, Sensitivity};
pub use model::{
    benefit, benefit_bw, benefit_lat, estimate_movement, eviction_plan, movement_cost,
    overlap_window, MovementEstimate, OverlapWindow, PlacementContext,
};
pub use plan::{
    apply_chunking, build_plan, choose_plan, cross_global_search, initial_placement,
    knapsack_solve, partition_object, phase_local_search, resolve_chunking, validate_plan,
    Direction, KnapsackItem, Migration, PartitionMode, PlacementPlan, PlanBundle, PlanMode,
    SearchMode,
};
pub use sim::{
    adapt, predict_phase_time, predict_plan_total, run_policy, simulate, Policy, SimOptions,
    SimulationReport, StallRecord,
};
pub use trace::{
    AccessRecord, ChunkHistogram, DataObject, IdSet, Noise, ObjectId, OverrideProfile, PhaseKind,
    PhaseProfile, Trace,
};
