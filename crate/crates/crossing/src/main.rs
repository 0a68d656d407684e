//! Command-line front end: run scenarios, verify traces, summarize traces.
//!
//! Exit codes: 0 on success, 1 when a monitor reports a violation, 2 on
//! configuration, schema, or I/O problems.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crossing::sim::metrics::{Metrics, StatSummary};
use crossing::sim::monitors::verify;
use crossing::sim::trace::{read_lines, Status, TraceLine};
use crossing::sim::{run, Scenario, ScenarioConfig};

const PRESETS: &[(&str, &str)] = &[
    ("cross8", include_str!("../assets/presets/cross8.json")),
    (
        "cross8-adversarial",
        include_str!("../assets/presets/cross8_adversarial.json"),
    ),
];

#[derive(Parser)]
#[command(name = "crossing", version, about = "Intersection coordination simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario; write its trace and metrics.
    Run(RunArgs),
    /// Replay a trace against its scenario and re-check every monitor.
    Verify(VerifyArgs),
    /// Aggregate statistics from a trace.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct ScenarioSource {
    /// Scenario config file (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: cross8 or cross8-adversarial.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args, Clone, Copy)]
struct ConfigOverrides {
    /// Replace the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the config's horizon.
    #[arg(long)]
    horizon: Option<u64>,
    /// Replace the config's per-path arrival probability.
    #[arg(long)]
    arrival_rate: Option<f64>,
    /// Replace the config's per-slot forced-brake probability.
    #[arg(long)]
    p: Option<f64>,
    /// Replace the config's per-slot brake-release probability.
    #[arg(long)]
    q: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: ScenarioSource,
    #[command(flatten)]
    overrides: ConfigOverrides,
    /// Trace output path; batch runs insert the seed before the extension.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Metrics output path (JSON; an array for batch runs).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Run this many consecutive seeds concurrently, starting at the
    /// configured seed.
    #[arg(long)]
    batch: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Trace file to replay.
    trace: PathBuf,
    #[command(flatten)]
    source: ScenarioSource,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Trace file to read.
    trace: PathBuf,
    /// Emit the summary as JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Append a plain-text in-area occupancy chart.
    #[arg(long)]
    chart: bool,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Summarize(args) => cmd_summarize(args),
    }
    .unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn load_scenario(
    source: &ScenarioSource,
    overrides: &ConfigOverrides,
) -> Result<Scenario, String> {
    let text = match (&source.config, &source.preset) {
        (Some(path), None) => std::fs::read_to_string(path)
            .map_err(|e| format!("reading {}: {e}", path.display()))?,
        (None, Some(name)) => PRESETS
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| {
                let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                format!("unknown preset {name:?}; available: {}", known.join(", "))
            })?,
        _ => unreachable!("clap enforces exactly one source"),
    };
    let mut config: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| format!("parsing config: {e}"))?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(horizon) = overrides.horizon {
        config.horizon = horizon;
    }
    if let Some(rate) = overrides.arrival_rate {
        config.arrival_rate = rate;
    }
    if let Some(p) = overrides.p {
        config.p = p;
    }
    if let Some(q) = overrides.q {
        config.q = q;
    }
    Scenario::from_config(config).map_err(|e| format!("invalid scenario: {e}"))
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, String> {
    let scenario = load_scenario(&args.source, &args.overrides)?;
    let batch = args.batch.unwrap_or(1);
    if batch == 0 {
        return Err("--batch must be at least 1".into());
    }

    let base_seed = scenario.config.seed;
    let results = if batch == 1 {
        vec![(base_seed, run_one(&scenario, args.trace.as_deref())?)]
    } else {
        run_batch(&scenario, batch, args.trace.as_deref())?
    };

    let mut failed = false;
    for (seed, metrics) in &results {
        println!(
            "seed {seed}: {} slots, spawned {}, exited {}, throughput {:.4}, \
             in-area throttle {:.2}%",
            metrics.executed_slots,
            metrics.spawned,
            metrics.exited,
            metrics.throughput,
            100.0 * metrics.in_area_throttle_fraction,
        );
        if let Some(v) = &metrics.violation {
            eprintln!("seed {seed}: {v}");
            failed = true;
        }
    }
    if let Some(path) = &args.metrics {
        let file = File::create(path).map_err(|e| format!("creating {}: {e}", path.display()))?;
        let mut out = BufWriter::new(file);
        let written = if results.len() == 1 {
            serde_json::to_writer_pretty(&mut out, &results[0].1)
        } else {
            let all: Vec<&Metrics> = results.iter().map(|(_, m)| m).collect();
            serde_json::to_writer_pretty(&mut out, &all)
        };
        written.map_err(|e| format!("writing metrics: {e}"))?;
        out.write_all(b"\n").and_then(|()| out.flush()).map_err(|e| e.to_string())?;
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn run_one(scenario: &Scenario, trace: Option<&Path>) -> Result<Metrics, String> {
    let metrics = match trace {
        Some(path) => {
            let file =
                File::create(path).map_err(|e| format!("creating {}: {e}", path.display()))?;
            let mut sink = BufWriter::new(file);
            let m = run(scenario, Some(&mut sink)).map_err(|e| format!("running: {e}"))?;
            sink.flush().map_err(|e| format!("writing trace: {e}"))?;
            m
        }
        None => run(scenario, None).map_err(|e| format!("running: {e}"))?,
    };
    Ok(metrics)
}

/// Runs seeds base..base+n on a small worker pool and returns metrics in
/// seed order.
fn run_batch(
    scenario: &Scenario,
    n: u64,
    trace: Option<&Path>,
) -> Result<Vec<(u64, Metrics)>, String> {
    let workers = std::thread::available_parallelism()
        .map(|p| p.get() as u64)
        .unwrap_or(1)
        .min(n);
    let next = Mutex::new(0u64);
    let results = Mutex::new(Vec::with_capacity(n as usize));
    let base_seed = scenario.config.seed;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let offset = {
                    let mut guard = next.lock().unwrap();
                    if *guard == n {
                        return;
                    }
                    *guard += 1;
                    *guard - 1
                };
                let seed = base_seed + offset;
                let mut config = scenario.config.clone();
                config.seed = seed;
                let outcome = Scenario::from_config(config)
                    .map_err(|e| format!("invalid scenario: {e}"))
                    .and_then(|s| run_one(&s, seeded_path(trace, seed).as_deref()));
                results.lock().unwrap().push((seed, outcome));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(seed, _)| *seed);
    results
        .into_iter()
        .map(|(seed, outcome)| outcome.map(|m| (seed, m)))
        .collect()
}

/// `traces/run.jsonl` becomes `traces/run.seed42.jsonl` for seed 42.
fn seeded_path(trace: Option<&Path>, seed: u64) -> Option<PathBuf> {
    let path = trace?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.seed{seed}.{ext}"),
        None => format!("{stem}.seed{seed}"),
    };
    Some(path.with_file_name(name))
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, String> {
    let scenario = load_scenario(&args.source, &args.overrides)?;
    let file = File::open(&args.trace)
        .map_err(|e| format!("opening {}: {e}", args.trace.display()))?;
    let report = verify(&scenario, BufReader::new(file))
        .map_err(|e| format!("verifying {}: {e}", args.trace.display()))?;
    for m in &report.monitors {
        match &m.violation {
            None => println!("{}: ok", m.monitor),
            Some(v) => println!("{}: {v}", m.monitor),
        }
    }
    if report.ok() {
        println!(
            "trace verified: {} slots, {} robots, all monitors passed",
            report.slots, report.robots_seen
        );
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("trace failed verification");
        Ok(ExitCode::from(1))
    }
}

/// Everything `summarize` reports, computed from the trace alone.
#[derive(Debug, Serialize)]
struct TraceSummary {
    config_hash: String,
    seed: u64,
    slots: u64,
    robots: u64,
    exited: u64,
    throughput: f64,
    /// Slots from spawn to exit.
    travel_slots: StatSummary,
    /// Slots from first request to acceptance.
    acceptance_wait: StatSummary,
    /// Count of robots never accepted by the end of the trace.
    never_accepted: u64,
    /// Controls applied by accepted robots: all equal the throttle bound in
    /// an unperturbed run.
    in_area_control_mean: f64,
    in_area_control_max: f64,
    in_area_control_slots: u64,
    /// Per-path queue (spawned, not yet accepted) statistics.
    queues: Vec<QueueSummary>,
    #[serde(skip)]
    occupancy: Vec<u32>,
}

#[derive(Debug, Serialize)]
struct QueueSummary {
    path: u32,
    max: u32,
    mean: f64,
}

fn cmd_summarize(args: SummarizeArgs) -> Result<ExitCode, String> {
    let file = File::open(&args.trace)
        .map_err(|e| format!("opening {}: {e}", args.trace.display()))?;
    let mut summary = summarize(BufReader::new(file))
        .map_err(|e| format!("reading {}: {e}", args.trace.display()))?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?
        );
    } else {
        print_summary(&summary);
    }
    if args.chart {
        print_chart(&std::mem::take(&mut summary.occupancy));
    }
    Ok(ExitCode::SUCCESS)
}

fn summarize<R: std::io::BufRead>(reader: R) -> Result<TraceSummary, String> {
    struct Seen {
        spawn_slot: u64,
        requested: Option<u64>,
        accepted: Option<u64>,
    }
    let mut header = None;
    let mut slots = 0u64;
    let mut robots: BTreeMap<u32, Seen> = BTreeMap::new();
    let mut travel = Vec::new();
    let mut waits = Vec::new();
    let mut exited = 0u64;
    let mut queue_rows: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut queue_row: BTreeMap<u32, u32> = BTreeMap::new();
    let mut occupancy = Vec::new();
    let mut in_area = 0u32;
    let mut control_sum = 0.0;
    let mut control_max = f64::NEG_INFINITY;
    let mut control_slots = 0u64;

    let mut flush_slot = |queue_row: &mut BTreeMap<u32, u32>, in_area: &mut u32| {
        for (path, count) in std::mem::take(queue_row) {
            queue_rows.entry(path).or_default().push(count);
        }
        occupancy.push(std::mem::take(in_area));
    };

    for line in read_lines(reader) {
        match line.map_err(|e| e.to_string())? {
            TraceLine::Header(h) => header = Some(h),
            TraceLine::Slot(s) => {
                if slots > 0 {
                    flush_slot(&mut queue_row, &mut in_area);
                }
                slots += 1;
                for id in &s.exited {
                    exited += 1;
                    if let Some(seen) = robots.get(id) {
                        travel.push((s.slot - seen.spawn_slot) as f64);
                    }
                }
                for id in &s.accepted {
                    if let Some(seen) = robots.get_mut(id) {
                        seen.accepted = Some(s.slot);
                        waits.push((s.slot - seen.requested.unwrap_or(s.slot)) as f64);
                    }
                }
            }
            TraceLine::Robot(r) => {
                let seen = robots.entry(r.id).or_insert(Seen {
                    spawn_slot: r.slot,
                    requested: None,
                    accepted: None,
                });
                match r.status {
                    Status::Accepted => {
                        in_area += 1;
                        control_sum += r.u;
                        control_max = control_max.max(r.u);
                        control_slots += 1;
                    }
                    Status::Requested => {
                        seen.requested.get_or_insert(r.slot);
                        *queue_row.entry(r.path).or_insert(0) += 1;
                    }
                    Status::Queued => {
                        *queue_row.entry(r.path).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    if slots > 0 {
        flush_slot(&mut queue_row, &mut in_area);
    }
    let header = header.ok_or("trace has no header")?;

    Ok(TraceSummary {
        config_hash: header.config_hash,
        seed: header.seed,
        slots,
        robots: robots.len() as u64,
        exited,
        throughput: if slots == 0 { 0.0 } else { exited as f64 / slots as f64 },
        travel_slots: StatSummary::from_samples(travel),
        acceptance_wait: StatSummary::from_samples(waits),
        never_accepted: robots.values().filter(|s| s.accepted.is_none()).count() as u64,
        in_area_control_mean: if control_slots == 0 {
            0.0
        } else {
            control_sum / control_slots as f64
        },
        in_area_control_max: if control_slots == 0 { 0.0 } else { control_max },
        in_area_control_slots: control_slots,
        queues: queue_rows
            .into_iter()
            .map(|(path, series)| QueueSummary {
                path,
                max: series.iter().copied().max().unwrap_or(0),
                mean: series.iter().map(|&c| c as f64).sum::<f64>() / series.len().max(1) as f64,
            })
            .collect(),
        occupancy,
    })
}

fn print_summary(s: &TraceSummary) {
    println!("seed {} (config {})", s.seed, &s.config_hash[..12.min(s.config_hash.len())]);
    println!(
        "{} slots, {} robots, {} exited, throughput {:.4}/slot",
        s.slots, s.robots, s.exited, s.throughput
    );
    println!(
        "travel slots: mean {:.1}, p50 {:.0}, p90 {:.0}, max {:.0} ({} samples)",
        s.travel_slots.mean, s.travel_slots.p50, s.travel_slots.p90, s.travel_slots.max,
        s.travel_slots.count
    );
    println!(
        "acceptance wait: mean {:.1}, p50 {:.0}, p90 {:.0}, max {:.0} ({} accepted, {} never)",
        s.acceptance_wait.mean, s.acceptance_wait.p50, s.acceptance_wait.p90,
        s.acceptance_wait.max, s.acceptance_wait.count, s.never_accepted
    );
    println!(
        "in-area control: mean {:.6}, max {:.6} over {} slots",
        s.in_area_control_mean, s.in_area_control_max, s.in_area_control_slots
    );
    for q in &s.queues {
        println!("queue path {}: max {}, mean {:.2}", q.path, q.max, q.mean);
    }
}

/// One bar per bucket of slots; height is the peak in-area robot count.
fn print_chart(occupancy: &[u32]) {
    if occupancy.is_empty() {
        return;
    }
    let buckets = 60.min(occupancy.len());
    let per = occupancy.len().div_ceil(buckets);
    println!("in-area occupancy ({per} slots per row):");
    for (b, chunk) in occupancy.chunks(per).enumerate() {
        let peak = chunk.iter().copied().max().unwrap_or(0);
        println!(
            "{:>6} | {}",
            b * per,
            "#".repeat(peak as usize)
        );
    }
}
