//! `tiersim` — plan and simulate data placement on DRAM+NVM tiered memory.
//!
//! Subcommands: `plan` (search for a placement plan), `simulate` (run a
//! policy or a plan file over a trace in virtual time), `compare` (sweep
//! NVM bandwidth or latency and emit normalized totals per policy),
//! `calibrate` (constant factor from predicted/measured pairs), and `gen`
//! (seeded synthetic traces).

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use std::fs;
use std::path::PathBuf;
use tiersim_core::gen::{gen_synthetic, noise_from_seed, GeneratorParams};
use tiersim_core::{io, MachineConfig, Noise, PartitionMode, Policy, SearchMode, SimulationReport, Trace};

#[derive(Parser)]
#[command(name = "tiersim", version, about = "Tiered-memory placement planner and virtual-time simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a placement plan and write it to a file.
    Plan(PlanArgs),
    /// Simulate a policy or a plan file over a trace.
    Simulate(SimulateArgs),
    /// Sweep the NVM bandwidth or latency ratio and emit a CSV of
    /// normalized totals per policy.
    Compare(CompareArgs),
    /// Compute a calibration constant from (predicted, measured) pairs.
    Calibrate(CalibrateArgs),
    /// Generate a seeded synthetic trace.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchArg {
    Auto,
    Local,
    Global,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Auto,
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    NvmOnly,
    DramOnly,
    Managed,
    LocalOnly,
    GlobalOnly,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    machine: PathBuf,
    /// Output plan file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    policy: SearchArg,
    #[arg(long, value_enum, default_value = "auto")]
    partition: PartitionArg,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    machine: PathBuf,
    /// Simulate a previously written plan file (no adaptation).
    #[arg(long, conflicts_with = "policy")]
    plan: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Write the report as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write one CSV row per (policy, iteration, phase) here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Generate per-iteration noise multipliers from this seed, replacing
    /// any noise the trace carries.
    #[arg(long)]
    seed_noise: Option<u64>,
    /// Amplitude of the seeded noise.
    #[arg(long, default_value_t = 0.05)]
    noise_amp: f64,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    machine: PathBuf,
    /// Sweep spec: `bw=1.0,0.5,0.25,0.125` scales the NVM bandwidth as a
    /// fraction of DRAM (latency equalized); `lat=1,2,4,8` scales the NVM
    /// latency as a multiple of DRAM (bandwidth equalized).
    #[arg(long)]
    sweep: String,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// JSON file: a list of {"predicted": seconds, "measured": seconds}.
    #[arg(long)]
    pairs: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    objects: usize,
    #[arg(long, default_value_t = 4)]
    phases: usize,
    #[arg(long, default_value_t = 4)]
    iterations: usize,
    /// Archetype weights.
    #[arg(long, default_value_t = 0.5)]
    streaming: f64,
    #[arg(long, default_value_t = 0.3)]
    chasing: f64,
    #[arg(long, default_value_t = 0.2)]
    idle: f64,
    /// Object size bounds in MiB.
    #[arg(long, default_value_t = 8)]
    min_size_mib: u64,
    #[arg(long, default_value_t = 64)]
    max_size_mib: u64,
    /// Probability that a phase references an object.
    #[arg(long, default_value_t = 0.6)]
    ref_density: f64,
    /// Per-iteration noise amplitude baked into the trace (0 = none).
    #[arg(long, default_value_t = 0.0)]
    noise_amp: f64,
    /// Mark every Nth phase as a communication phase (0 = never).
    #[arg(long, default_value_t = 0)]
    comm_every: usize,
    /// Extra partitionable objects larger than the DRAM capacity.
    #[arg(long, default_value_t = 0)]
    oversize: usize,
    /// Machine whose thresholds the archetypes are tuned against
    /// (reference config when omitted).
    #[arg(long)]
    machine: Option<PathBuf>,
}

fn main() {
    env_logger::init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Plan(args) => cmd_plan(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Gen(args) => cmd_gen(args),
    }
}

fn load_inputs(trace: &PathBuf, machine: &PathBuf) -> Result<(Trace, MachineConfig)> {
    let trace = io::load_trace(trace).with_context(|| format!("loading trace {}", trace.display()))?;
    let cfg = io::load_machine(machine)
        .with_context(|| format!("loading machine config {}", machine.display()))?;
    Ok((trace, cfg))
}

fn cmd_plan(args: PlanArgs) -> Result<()> {
    let (trace, cfg) = load_inputs(&args.trace, &args.machine)?;
    let search = match args.policy {
        SearchArg::Auto => SearchMode::Auto,
        SearchArg::Local => SearchMode::Local,
        SearchArg::Global => SearchMode::Global,
    };
    let partition = match args.partition {
        PartitionArg::Auto => PartitionMode::Auto,
        PartitionArg::On => PartitionMode::On,
        PartitionArg::Off => PartitionMode::Off,
    };
    let bundle = tiersim_core::build_plan(&trace, &cfg, search, partition)?;
    let plan = &bundle.plan;
    let mode = match plan.mode {
        tiersim_core::PlanMode::PhaseLocal => "local",
        tiersim_core::PlanMode::CrossGlobal => "global",
    };
    println!("search: {mode}");
    println!("initial dram objects: {}", plan.initial_dram.len());
    let max_resident = plan
        .per_phase_residency
        .iter()
        .map(|set| set.len())
        .max()
        .unwrap_or(0);
    println!("dram residents (steady, max over phases): {max_resident}");
    if !plan.chunked_objects.is_empty() {
        println!("partitioned objects: {}", plan.chunked_objects.len());
    }
    match &bundle.comparison {
        Some(cmp) => {
            println!(
                "migrations per iteration: {} (local plan {}, global plan {})",
                plan.migrations.len(),
                cmp.local_migrations,
                cmp.global_migrations
            );
            println!(
                "predicted totals: local {:.6} s, global {:.6} s",
                cmp.local_total, cmp.global_total
            );
        }
        None => println!("migrations per iteration: {}", plan.migrations.len()),
    }
    io::save_plan(&args.out, plan)?;
    println!("plan written to {}", args.out.display());
    Ok(())
}

fn noise_override(args: &SimulateArgs, trace: &Trace) -> Option<Vec<Noise>> {
    args.seed_noise
        .map(|seed| noise_from_seed(trace.iterations, seed, args.noise_amp))
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let (trace, cfg) = load_inputs(&args.trace, &args.machine)?;
    let policy = match (&args.plan, args.policy) {
        (Some(path), _) => Policy::Static(io::load_plan(path).with_context(|| format!("loading plan {}", path.display()))?),
        (None, Some(p)) => match p {
            PolicyArg::NvmOnly => Policy::NvmOnly,
            PolicyArg::DramOnly => Policy::DramOnly,
            PolicyArg::Managed => Policy::Managed,
            PolicyArg::LocalOnly => Policy::LocalOnly,
            PolicyArg::GlobalOnly => Policy::GlobalOnly,
        },
        (None, None) => bail!("either --plan or --policy is required"),
    };
    let noise = noise_override(&args, &trace);
    let report = tiersim_core::run_policy(&trace, &cfg, &policy, noise)?;
    print_table(&report);
    if let Some(path) = &args.json {
        io::save_report(path, &report)?;
    }
    if let Some(path) = &args.csv {
        fs::write(path, report_csv(&report))?;
    }
    Ok(())
}

fn print_table(report: &SimulationReport) {
    println!(
        "{:<12} {:>14} {:>11} {:>13} {:>10} {:>7} {:>8}",
        "policy", "total_s", "migrations", "migrated_MiB", "overlap_%", "stalls", "replans"
    );
    println!(
        "{:<12} {:>14.6} {:>11} {:>13.1} {:>10.1} {:>7} {:>8}",
        report.policy,
        report.total_time_s,
        report.migrations_count,
        report.migrated_bytes as f64 / (1u64 << 20) as f64,
        report.pct_overlap,
        report.stalls.len(),
        report.replans
    );
    for s in &report.stalls {
        println!("stall: iteration {} phase {} waited {:.6} s", s.iteration, s.phase, s.wait_s);
    }
    for note in &report.notes {
        println!("note: {note}");
    }
}

fn report_csv(report: &SimulationReport) -> String {
    let mut out = String::from("policy,iteration,phase,time_s,stall_s\n");
    for (k, phases) in report.per_phase_times_s.iter().enumerate() {
        for (p, t) in phases.iter().enumerate() {
            let stall = report
                .stalls
                .iter()
                .filter(|s| s.iteration == k && s.phase == p)
                .map(|s| s.wait_s)
                .sum::<f64>()
                .max(0.0); // the empty sum is -0.0
            out.push_str(&format!("{},{},{},{},{}\n", report.policy, k, p, t, stall));
        }
    }
    out
}

enum SweepKind {
    Bandwidth,
    Latency,
}

fn parse_sweep(spec: &str) -> Result<(SweepKind, Vec<f64>)> {
    let (kind, values) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("sweep spec must look like bw=1.0,0.5 or lat=1,2,4"))?;
    let kind = match kind {
        "bw" => SweepKind::Bandwidth,
        "lat" => SweepKind::Latency,
        other => bail!("unknown sweep kind {other:?} (use bw or lat)"),
    };
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| anyhow!("bad sweep value {v:?}")))
        .collect::<Result<Vec<f64>>>()?;
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    Ok((kind, values))
}

/// NVM configuration for one sweep point. Bandwidth sweeps equalize the
/// latencies and latency sweeps equalize the bandwidths, isolating one
/// axis the way an emulator limited to one knob would.
fn sweep_machine(base: &MachineConfig, kind: &SweepKind, value: f64) -> Result<MachineConfig> {
    let peak_ratio = base.bw_peak_nvm / base.nvm_bw;
    let mut cfg = base.clone();
    match kind {
        SweepKind::Bandwidth => {
            if !(value > 0.0 && value <= 1.0) {
                bail!("bandwidth ratio {value} must be in (0, 1]");
            }
            cfg.nvm_bw = base.dram_bw * value;
            cfg.nvm_lat = base.dram_lat;
        }
        SweepKind::Latency => {
            if value < 1.0 {
                bail!("latency factor {value} must be >= 1");
            }
            cfg.nvm_lat = base.dram_lat * value;
            cfg.nvm_bw = base.dram_bw;
        }
    }
    cfg.bw_peak_nvm = cfg.nvm_bw * peak_ratio;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let (trace, base) = load_inputs(&args.trace, &args.machine)?;
    let (kind, values) = parse_sweep(&args.sweep)?;
    let mut out = String::from("sweep,value,policy,total_s,normalized\n");
    let label = match kind {
        SweepKind::Bandwidth => "bw",
        SweepKind::Latency => "lat",
    };
    for value in &values {
        let cfg = sweep_machine(&base, &kind, *value)?;
        let dram = tiersim_core::run_policy(&trace, &cfg, &Policy::DramOnly, None)?;
        let nvm = tiersim_core::run_policy(&trace, &cfg, &Policy::NvmOnly, None)?;
        let managed = tiersim_core::run_policy(&trace, &cfg, &Policy::Managed, None)?;
        for report in [&dram, &nvm, &managed] {
            out.push_str(&format!(
                "{label},{value},{},{},{}\n",
                report.policy,
                report.total_time_s,
                report.total_time_s / dram.total_time_s
            ));
        }
    }
    match &args.csv {
        Some(path) => fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationPair {
    predicted: f64,
    measured: f64,
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let pairs: Vec<CalibrationPair> = serde_json::from_str(
        &fs::read_to_string(&args.pairs)
            .with_context(|| format!("reading {}", args.pairs.display()))?,
    )?;
    let pairs: Vec<(f64, f64)> = pairs.iter().map(|p| (p.predicted, p.measured)).collect();
    let cf = tiersim_core::calibrate_cf(&pairs)?;
    println!("cf = {cf}");
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let cfg = match &args.machine {
        Some(path) => io::load_machine(path)?,
        None => MachineConfig::default(),
    };
    let params = GeneratorParams {
        objects: args.objects,
        phases: args.phases,
        iterations: args.iterations.max(2),
        mix: (args.streaming, args.chasing, args.idle),
        min_size: args.min_size_mib.max(1) << 20,
        max_size: args.max_size_mib.max(args.min_size_mib.max(1)) << 20,
        ref_density: args.ref_density.clamp(0.0, 1.0),
        noise_amp: args.noise_amp,
        comm_every: args.comm_every,
        oversize_objects: args.oversize,
    };
    let trace = gen_synthetic(&params, args.seed, &cfg);
    trace.validate()?;
    io::save_trace(&args.out, &trace)?;
    println!(
        "trace written to {}: {} objects, {} phases, {} iterations (seed {})",
        args.out.display(),
        trace.objects.len(),
        trace.phases.len(),
        trace.iterations,
        args.seed
    );
    Ok(())
}
