//! Scenario configuration and the slot-stepped simulation loop.
//!
//! A scenario fixes the path layout, the shared kinodynamic bounds, arrival
//! and perturbation probabilities, and the horizon. A run then executes, per
//! slot: perturbation regime switches, Bernoulli arrivals per path, entry
//! requests and admissions, control resolution (the law for accepted robots,
//! queue-keeping for the rest), runtime monitors, and the exact state advance.
//! Every random draw comes from per-purpose ChaCha8 streams seeded by the
//! scenario seed, so a (config, seed) pair fully determines the run and its
//! trace bytes.

pub mod metrics;
pub mod monitors;
pub mod trace;

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::control_law;
use crate::controller::{wants_entry, Controller};
use crate::dynamics::{advance, time_to_reach, DynamicsError, Kinodynamics, RobotState};
use crate::geometry::{Footprint, GeometryError, PairSection, PathId, PathSpec, Vec2};
use crate::priority::{pair_impulse_safe, JointState, RobotId, WorldError, WorldModel};

use metrics::{DrainInfo, Metrics, QueueStat, StatSummary};
use monitors::{check_slot, MonitorKind, SlotView, Violation};
use trace::{Header, Regime, RobotRecord, SlotRecord, Status, TraceLine, SCHEMA_VERSION};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn default_update_period() -> u64 {
    20
}

fn default_n_sub() -> u32 {
    16
}

/// A scenario exactly as read from disk; hashed verbatim into traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub paths: Vec<PathConfig>,
    pub footprint_diameter: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Per-path, per-slot arrival probability.
    pub arrival_rate: f64,
    /// Per-slot probability that a controlled robot is forced to brake.
    #[serde(default)]
    pub p: f64,
    /// Per-slot probability that a forced-braking robot is released.
    #[serde(default)]
    pub q: f64,
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_update_period")]
    pub update_period: u64,
    #[serde(default = "default_n_sub")]
    pub n_sub: u32,
    /// Distance from the first conflict back to the entry line
    /// (default: six footprint diameters).
    #[serde(default)]
    pub entry_offset: Option<f64>,
    /// Distance from the last conflict forward to the exit line
    /// (default: six footprint diameters).
    #[serde(default)]
    pub exit_offset: Option<f64>,
    /// No arrivals are drawn from this slot on; if it lies within the
    /// horizon, the run keeps going until the area drains.
    #[serde(default)]
    pub arrival_stop_slot: Option<u64>,
    /// Forced-brake regimes all lift at this slot and `p` stops applying.
    #[serde(default)]
    pub perturbation_stop_slot: Option<u64>,
    #[serde(default)]
    pub overrides: Vec<OverrideConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub id: u32,
    pub origin: [f64; 2],
    pub direction: [f64; 2],
    pub length: f64,
    #[serde(default)]
    pub x_entry: Option<f64>,
    #[serde(default)]
    pub x_exit: Option<f64>,
}

/// Scripted control takeover for a slot window, used to stage perturbations
/// and adversarial demonstrations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideConfig {
    pub from_slot: u64,
    /// Exclusive.
    pub to_slot: u64,
    pub scope: OverrideScope,
    pub kind: OverrideKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideScope {
    /// Every robot alive during the window.
    All,
    /// One robot, fixed when the window opens: the lowest-id accepted robot,
    /// or the lowest-id robot alive if none is accepted.
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideKind {
    /// Force full braking: a compliant perturbation.
    Brake,
    /// Force full throttle: defies the law; monitors must catch it.
    Throttle,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unsupported config schema_version {0}")]
    SchemaVersion(u32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("{name} must lie in [0, 1], got {value}")]
    BadProbability { name: &'static str, value: f64 },
    #[error("horizon must be positive")]
    BadHorizon,
    #[error("update_period must be positive")]
    BadUpdatePeriod,
    #[error("n_sub must be positive")]
    BadNSub,
    #[error("entry/exit offsets must be positive and finite")]
    BadOffset,
    #[error("override window [{0}, {1}) is empty")]
    BadOverrideWindow(u64, u64),
    #[error("path {0}: crosses nothing, so x_entry and x_exit must be explicit")]
    NoConflicts(u32),
    #[error("path {path}: x_entry {entry} must not lie beyond the first conflict at {conflict}")]
    EntryPastConflict { path: u32, entry: f64, conflict: f64 },
    #[error("path {path}: x_exit {exit} must not lie before the last conflict at {conflict}")]
    ExitBeforeConflict { path: u32, exit: f64, conflict: f64 },
}

/// A validated scenario: resolved paths, derived bounds, and the config hash
/// that ties traces back to it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub paths: Vec<PathSpec>,
    pub kin: Kinodynamics,
    pub footprint: Footprint,
    /// Slots a lone robot needs from a standstill at the spawn point to pass
    /// its exit line, maximized over paths.
    pub crossing_slots: u64,
    /// Closed-loop prediction budget before declaring the fleet stuck.
    pub horizon_cap: u64,
    pub config_hash: String,
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self, ConfigError> {
        if config.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion(config.schema_version));
        }
        let kin = Kinodynamics::new(config.v_max, config.u_min, config.u_max)?;
        let footprint = Footprint::new(config.footprint_diameter)?;
        for (name, value) in [
            ("arrival_rate", config.arrival_rate),
            ("p", config.p),
            ("q", config.q),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::BadProbability { name, value });
            }
        }
        if config.horizon == 0 {
            return Err(ConfigError::BadHorizon);
        }
        if config.update_period == 0 {
            return Err(ConfigError::BadUpdatePeriod);
        }
        if config.n_sub == 0 {
            return Err(ConfigError::BadNSub);
        }
        for off in [config.entry_offset, config.exit_offset].into_iter().flatten() {
            if !(off.is_finite() && off > 0.0) {
                return Err(ConfigError::BadOffset);
            }
        }
        for o in &config.overrides {
            if o.from_slot >= o.to_slot {
                return Err(ConfigError::BadOverrideWindow(o.from_slot, o.to_slot));
            }
        }

        // Provisional paths spanning their whole length, to compute conflict
        // sections; entry and exit lines are resolved from those.
        let provisional: Vec<PathSpec> = config
            .paths
            .iter()
            .map(|p| {
                PathSpec::new(
                    PathId(p.id),
                    Vec2::new(p.origin[0], p.origin[1]),
                    Vec2::new(p.direction[0], p.direction[1]),
                    p.length,
                    0.0,
                    p.length,
                )
            })
            .collect::<Result<_, _>>()?;
        let probe = WorldModel::new(provisional.clone(), footprint, config.n_sub)?;

        let entry_off = config.entry_offset.unwrap_or(6.0 * footprint.diameter);
        let exit_off = config.exit_offset.unwrap_or(6.0 * footprint.diameter);
        let mut paths = Vec::with_capacity(config.paths.len());
        for (pc, spec) in config.paths.iter().zip(&provisional) {
            let mut conflicts: Option<(f64, f64)> = None;
            for other in &provisional {
                if other.id == spec.id {
                    continue;
                }
                if let PairSection::Crossing(c) =
                    probe.section_between_paths(spec.id, other.id)
                {
                    let ext = c.extent(0.0);
                    let (lo, hi) = conflicts
                        .unwrap_or((f64::INFINITY, f64::NEG_INFINITY));
                    conflicts =
                        Some((lo.min(c.center_first - ext), hi.max(c.center_first + ext)));
                }
            }
            let (entry, exit) = match (pc.x_entry, pc.x_exit, conflicts) {
                (Some(e), Some(x), _) => (e, x),
                (e, x, Some((lo, hi))) => (
                    e.unwrap_or(lo - entry_off),
                    x.unwrap_or(hi + exit_off),
                ),
                _ => return Err(ConfigError::NoConflicts(pc.id)),
            };
            if let Some((lo, hi)) = conflicts {
                if entry > lo {
                    return Err(ConfigError::EntryPastConflict {
                        path: pc.id,
                        entry,
                        conflict: lo,
                    });
                }
                if exit < hi {
                    return Err(ConfigError::ExitBeforeConflict {
                        path: pc.id,
                        exit,
                        conflict: hi,
                    });
                }
            }
            paths.push(PathSpec::new(
                PathId(pc.id),
                Vec2::new(pc.origin[0], pc.origin[1]),
                Vec2::new(pc.direction[0], pc.direction[1]),
                pc.length,
                entry,
                exit,
            )?);
        }
        // Rebuild to re-validate entry/exit and duplicate ids on final specs.
        WorldModel::new(paths.clone(), footprint, config.n_sub)?;

        let crossing_slots = paths
            .iter()
            .map(|p| time_to_reach(RobotState::new(0.0, 0.0), &kin, p.x_exit).ceil() as u64 + 1)
            .max()
            .unwrap_or(1);
        let horizon_cap = 10 * crossing_slots;

        let canonical = serde_json::to_string(&config).expect("config serializes");
        let config_hash = hex(&Sha256::digest(canonical.as_bytes()));

        Ok(Scenario { config, paths, kin, footprint, crossing_slots, horizon_cap, config_hash })
    }

    pub fn from_json(json: &str) -> Result<Self, ScenarioParseError> {
        let config: ScenarioConfig = serde_json::from_str(json)?;
        Ok(Self::from_config(config)?)
    }

    pub fn empty_world(&self) -> WorldModel {
        WorldModel::new(self.paths.clone(), self.footprint, self.config.n_sub)
            .expect("validated at construction")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioParseError {
    #[error("config is not valid JSON for this schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct SimRobot {
    path: PathId,
    state: RobotState,
    regime: Regime,
    status: Status,
    entered_at: Option<u64>,
    first_request: Option<u64>,
}

/// Executes a scenario, optionally streaming the trace to `sink`. Monitor
/// violations abort the run and are reported in the metrics, not as errors;
/// `Err` is reserved for sink I/O failures.
pub fn run(scenario: &Scenario, mut sink: Option<&mut dyn Write>) -> io::Result<Metrics> {
    let config = &scenario.config;
    let kin = scenario.kin;
    let diam = scenario.footprint.diameter;
    let mut world = scenario.empty_world();
    let mut controller = Controller::new(scenario.horizon_cap);

    let mut arrivals_rng = ChaCha8Rng::seed_from_u64(config.seed);
    arrivals_rng.set_stream(1);
    let mut regimes_rng = ChaCha8Rng::seed_from_u64(config.seed);
    regimes_rng.set_stream(2);

    if let Some(w) = sink.as_deref_mut() {
        trace::write_line(
            &mut *w,
            &TraceLine::Header(Header {
                schema_version: SCHEMA_VERSION,
                config_hash: scenario.config_hash.clone(),
                seed: config.seed,
            }),
        )?;
    }

    let mut live: BTreeMap<RobotId, SimRobot> = BTreeMap::new();
    let mut next_id: u32 = 0;
    let mut overrides: Vec<(OverrideConfig, Option<RobotId>)> =
        config.overrides.iter().map(|c| (c.clone(), None)).collect();

    let mut spawned_total: u64 = 0;
    let mut suppressed: u64 = 0;
    let mut exited_total: u64 = 0;
    let mut rejections: u64 = 0;
    let mut travel: Vec<f64> = Vec::new();
    let mut waits: Vec<f64> = Vec::new();
    let mut queue_series: Vec<Vec<u32>> = Vec::new();
    let mut in_area_slots: u64 = 0;
    let mut in_area_throttle: u64 = 0;
    let mut violation: Option<Violation> = None;
    let mut emitted: u64 = 0;

    let drain_stop = config.arrival_stop_slot.filter(|t| *t <= config.horizon);
    let mut live_at_stop: Option<u64> = None;
    let mut deadline: Option<u64> = None;
    let mut drained_at: Option<u64> = None;

    let path_ids: Vec<PathId> = scenario.paths.iter().map(|p| p.id).collect();

    let mut k: u64 = 0;
    'slots: loop {
        // Boundary-k termination checks.
        if let Some(stop) = drain_stop {
            if k == stop {
                let n = live.len() as u64;
                live_at_stop = Some(n);
                deadline = Some(stop + 20 * scenario.crossing_slots * n.max(1));
            }
            if k >= stop {
                if live.is_empty() {
                    drained_at = Some(k);
                    break;
                }
                if deadline.is_some_and(|dl| k > dl) {
                    violation = Some(Violation {
                        monitor: MonitorKind::Liveness,
                        slot: k,
                        robots: live.keys().map(|r| r.0).collect(),
                        detail: format!(
                            "area not drained by deadline {}",
                            deadline.unwrap()
                        ),
                    });
                    break;
                }
            }
        } else if k >= config.horizon {
            break;
        }

        // 1. Perturbation regimes.
        if config.perturbation_stop_slot == Some(k) {
            for robot in live.values_mut() {
                robot.regime = Regime::Controlled;
            }
        }
        let perturbing =
            config.p > 0.0 && config.perturbation_stop_slot.is_none_or(|t| k < t);
        if perturbing {
            for robot in live.values_mut() {
                let draw: f64 = regimes_rng.random();
                robot.regime = match robot.regime {
                    Regime::Controlled if draw < config.p => Regime::Braking,
                    Regime::Braking if draw < config.q => Regime::Controlled,
                    same => same,
                };
            }
        }

        // 2. Arrivals: at most one per path per slot, joining the queue tail.
        let mut spawned_now: Vec<u32> = Vec::new();
        let arrivals_on =
            config.arrival_rate > 0.0 && config.arrival_stop_slot.is_none_or(|t| k < t);
        if arrivals_on {
            for pid in &path_ids {
                let draw: f64 = arrivals_rng.random();
                if draw >= config.arrival_rate {
                    continue;
                }
                let rear = live
                    .values()
                    .filter(|r| r.path == *pid)
                    .map(|r| r.state.x)
                    .fold(f64::INFINITY, f64::min);
                let x = if rear <= diam { rear - diam } else { 0.0 };
                if live
                    .values()
                    .any(|r| r.path == *pid && (r.state.x - x).abs() < diam)
                {
                    suppressed += 1;
                    continue;
                }
                let id = RobotId(next_id);
                next_id += 1;
                world.add_robot(id, *pid, kin).expect("fresh id");
                live.insert(
                    id,
                    SimRobot {
                        path: *pid,
                        state: RobotState::new(x, 0.0),
                        regime: Regime::Controlled,
                        status: Status::Queued,
                        entered_at: None,
                        first_request: None,
                    },
                );
                spawned_total += 1;
                spawned_now.push(id.0);
            }
        }

        let joint: JointState = live.iter().map(|(id, r)| (*id, r.state)).collect();

        // 3. Entry requests: per path, only the foremost unaccepted robot may
        // ask, and only while it could not surely stop before the entry line.
        let mut candidates: Vec<RobotId> = Vec::new();
        for pid in &path_ids {
            let head = live
                .iter()
                .filter(|(_, r)| r.path == *pid && r.status != Status::Accepted)
                .max_by(|a, b| a.1.state.x.total_cmp(&b.1.state.x))
                .map(|(id, _)| *id);
            let Some(head) = head else { continue };
            let x_entry = world.path(*pid).x_entry;
            if wants_entry(live[&head].state, &kin, x_entry) {
                candidates.push(head);
                let r = live.get_mut(&head).unwrap();
                if r.first_request.is_none() {
                    r.first_request = Some(k);
                }
                if r.status == Status::Queued {
                    r.status = Status::Requested;
                }
            }
        }

        // 4. Admissions, then refresh predictions if anything changed.
        let decisions = controller.process_requests(k, &candidates, &joint, &world);
        rejections += decisions.rejected.len() as u64;
        for id in &decisions.accepted {
            let r = live.get_mut(id).unwrap();
            r.status = Status::Accepted;
            if let Some(f) = r.first_request {
                waits.push((k - f) as f64);
            }
        }
        if !decisions.accepted.is_empty() {
            if let Err(e) = controller.update_predictions(k, &joint, &world) {
                violation = Some(Violation {
                    monitor: MonitorKind::Liveness,
                    slot: k,
                    robots: vec![],
                    detail: e.to_string(),
                });
                break 'slots;
            }
        }

        // 5. Controls.
        let law = control_law(&joint, controller.graph(), &world);
        let mut order_by_path: BTreeMap<PathId, Vec<(f64, RobotId)>> = BTreeMap::new();
        for (id, r) in &live {
            order_by_path.entry(r.path).or_default().push((r.state.x, *id));
        }
        for column in order_by_path.values_mut() {
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        let mut controls: BTreeMap<RobotId, f64> = BTreeMap::new();
        for (id, robot) in &live {
            let mut u = if robot.status == Status::Accepted {
                law[id]
            } else {
                // Queue keeping: hold full throttle back to a hard brake when
                // entry was denied, when the next robot ahead could be hit
                // after one more throttle slot, or under a forced brake.
                let mut u = kin.u_max;
                let column = &order_by_path[&robot.path];
                let next = column.partition_point(|(x, _)| *x <= robot.state.x);
                if decisions.rejected.contains(id) {
                    u = kin.u_min;
                } else if let Some((_, ahead)) = column.get(next) {
                    let sec = PairSection::SamePath { diameter: diam };
                    if !pair_impulse_safe(
                        live[ahead].state,
                        &kin,
                        robot.state,
                        &kin,
                        &sec,
                        config.n_sub,
                    ) {
                        u = kin.u_min;
                    }
                }
                u
            };
            if robot.regime == Regime::Braking {
                u = kin.u_min;
            }
            controls.insert(*id, u);
        }
        for (cfg, target) in overrides.iter_mut() {
            if k == cfg.from_slot && cfg.scope == OverrideScope::First {
                *target = live
                    .iter()
                    .find(|(_, r)| r.status == Status::Accepted)
                    .or_else(|| live.iter().next())
                    .map(|(id, _)| *id);
            }
            if k < cfg.from_slot || k >= cfg.to_slot {
                continue;
            }
            let forced = match cfg.kind {
                OverrideKind::Brake => kin.u_min,
                OverrideKind::Throttle => kin.u_max,
            };
            match cfg.scope {
                OverrideScope::All => {
                    for u in controls.values_mut() {
                        *u = forced;
                    }
                }
                OverrideScope::First => {
                    if let Some(id) = target {
                        if let Some(u) = controls.get_mut(id) {
                            *u = forced;
                        }
                    }
                }
            }
        }

        // 6. Monitors on the slot about to be executed.
        let slot_violation = check_slot(&SlotView {
            slot: k,
            world: &world,
            graph: controller.graph(),
            states: &joint,
            controls: &controls,
        });

        // 7. Metrics sampled at the boundary.
        let mut queue_row = vec![0u32; path_ids.len()];
        for (id, robot) in &live {
            if robot.status != Status::Accepted {
                let idx = path_ids.iter().position(|p| *p == robot.path).unwrap();
                queue_row[idx] += 1;
            } else {
                let spec = world.path(robot.path);
                if robot.state.x >= spec.x_entry && robot.state.x <= spec.x_exit {
                    in_area_slots += 1;
                    if controls[id] == kin.u_max {
                        in_area_throttle += 1;
                    }
                }
            }
        }
        queue_series.push(queue_row);

        // 8. Advance (skipped on a violation: the offending boundary is the
        // last thing the trace shows).
        let mut exited_now: Vec<u32> = Vec::new();
        if slot_violation.is_none() {
            for (id, robot) in live.iter_mut() {
                let u = controls[id];
                let next = advance(robot.state, u, &kin, 1.0);
                let spec = world.path(robot.path);
                if robot.entered_at.is_none() && next.x > spec.x_entry {
                    robot.entered_at = Some(k + 1);
                }
                if next.x > spec.x_exit {
                    exited_now.push(id.0);
                }
                robot.state = next;
            }
        }

        // 9. Emit the slot.
        if let Some(w) = sink.as_deref_mut() {
            trace::write_line(
                &mut *w,
                &TraceLine::Slot(SlotRecord {
                    slot: k,
                    graph: controller.graph().edges().map(|(a, b)| (a.0, b.0)).collect(),
                    spawned: spawned_now,
                    accepted: decisions.accepted.iter().map(|r| r.0).collect(),
                    rejected: decisions.rejected.iter().map(|r| r.0).collect(),
                    exited: exited_now.clone(),
                }),
            )?;
            for (id, robot) in &live {
                let state = joint[id];
                trace::write_line(
                    &mut *w,
                    &TraceLine::Robot(RobotRecord {
                        slot: k,
                        id: id.0,
                        path: robot.path.0,
                        x: state.x,
                        v: state.v,
                        u: controls[id],
                        regime: robot.regime,
                        status: robot.status,
                    }),
                )?;
            }
        }
        emitted += 1;

        if let Some(v) = slot_violation {
            violation = Some(v);
            break;
        }

        // 10. Exits leave the graph, the world, and the fleet.
        if !exited_now.is_empty() {
            let post: JointState = live.iter().map(|(id, r)| (*id, r.state)).collect();
            let pruned = controller.prune_exited(&post, &world);
            debug_assert_eq!(
                pruned.iter().map(|r| r.0).collect::<Vec<_>>(),
                exited_now
            );
            for id in &exited_now {
                let r = live.remove(&RobotId(*id)).unwrap();
                world.remove_robot(RobotId(*id));
                exited_total += 1;
                if let Some(t0) = r.entered_at {
                    travel.push((k + 1 - t0) as f64);
                }
            }
        }

        // 11. Periodic prediction refresh on the new boundary.
        if (k + 1) % config.update_period == 0 {
            let post: JointState = live.iter().map(|(id, r)| (*id, r.state)).collect();
            if let Err(e) = controller.update_predictions(k + 1, &post, &world) {
                violation = Some(Violation {
                    monitor: MonitorKind::Liveness,
                    slot: k + 1,
                    robots: vec![],
                    detail: e.to_string(),
                });
                break;
            }
        }

        k += 1;
    }

    let queues = path_ids
        .iter()
        .enumerate()
        .map(|(i, pid)| {
            let col: Vec<u32> = queue_series.iter().map(|row| row[i]).collect();
            QueueStat {
                path: pid.0,
                max: col.iter().copied().max().unwrap_or(0),
                mean: if col.is_empty() {
                    0.0
                } else {
                    col.iter().map(|v| *v as f64).sum::<f64>() / col.len() as f64
                },
            }
        })
        .collect();

    Ok(Metrics {
        seed: config.seed,
        config_hash: scenario.config_hash.clone(),
        executed_slots: emitted,
        spawned: spawned_total,
        suppressed_arrivals: suppressed,
        exited: exited_total,
        live_at_end: live.len() as u64,
        throughput: if emitted == 0 { 0.0 } else { exited_total as f64 / emitted as f64 },
        travel_slots: StatSummary::from_samples(travel),
        acceptance_wait: StatSummary::from_samples(waits),
        rejections,
        queues,
        in_area_control_slots: in_area_slots,
        in_area_throttle_slots: in_area_throttle,
        in_area_throttle_fraction: if in_area_slots == 0 {
            0.0
        } else {
            in_area_throttle as f64 / in_area_slots as f64
        },
        drain: drain_stop.map(|stop| DrainInfo {
            stop_slot: stop,
            live_at_stop: live_at_stop.unwrap_or(0),
            deadline: deadline.unwrap_or(0),
            drained_at,
        }),
        violation,
        queue_series,
    })
}
