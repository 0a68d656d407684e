//! Safety monitors.
//!
//! The same per-slot checks run twice: live inside the simulation loop, where
//! any hit aborts the run, and offline in [`verify`], which replays a trace
//! and recomputes every check from the recorded states and controls. Replay
//! additionally re-derives the state evolution itself, so a trace cannot pass
//! by reporting states the dynamics would never have produced.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;

use serde::Serialize;

use crate::control::control_law;
use crate::dynamics::{advance, Kinodynamics, RobotState};
use crate::geometry::{in_shifted_obstacle_inflated, PairSection, PathId};
use crate::priority::{first_unsafe_edge, JointState, PriorityGraph, RobotId, WorldModel};

use super::trace::{self, Header, RobotRecord, SlotRecord, Status, TraceError, TraceLine};
use super::Scenario;

/// Violations must be flagrant by this much before a monitor fires: collision
/// clearance may dip this far below the footprint and priority membership is
/// deflated by the same amount, so the conservative controller is never
/// flagged for float dust.
pub const MONITOR_TOL: f64 = 1e-6;

/// Allowed distance between a recorded state and the recomputed step.
pub const REPLAY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorKind {
    Collision,
    Priority,
    BrakeSafety,
    LawCompliance,
    Liveness,
    Replay,
    Conservation,
}

pub const ALL_MONITORS: [MonitorKind; 7] = [
    MonitorKind::Collision,
    MonitorKind::Priority,
    MonitorKind::BrakeSafety,
    MonitorKind::LawCompliance,
    MonitorKind::Liveness,
    MonitorKind::Replay,
    MonitorKind::Conservation,
];

impl fmt::Display for MonitorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MonitorKind::Collision => "collision",
            MonitorKind::Priority => "priority",
            MonitorKind::BrakeSafety => "brake_safety",
            MonitorKind::LawCompliance => "law_compliance",
            MonitorKind::Liveness => "liveness",
            MonitorKind::Replay => "replay",
            MonitorKind::Conservation => "conservation",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub monitor: MonitorKind,
    pub slot: u64,
    pub robots: Vec<u32>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation at slot {} (robots {:?}): {}", self.monitor, self.slot, self.robots, self.detail)
    }
}

/// One slot's joint data, however it was obtained.
pub struct SlotView<'a> {
    pub slot: u64,
    pub world: &'a WorldModel,
    pub graph: &'a PriorityGraph,
    /// States at the slot's start boundary.
    pub states: &'a JointState,
    /// Controls applied over the slot.
    pub controls: &'a BTreeMap<RobotId, f64>,
}

/// All per-slot checks in a fixed order; the first hit wins.
pub fn check_slot(v: &SlotView) -> Option<Violation> {
    check_law_compliance(v)
        .or_else(|| check_brake_safety(v))
        .or_else(|| check_collisions(v))
        .or_else(|| check_priorities(v))
}

/// No robot applies more than its bounds allow, and no accepted robot applies
/// more than the law grants on the recomputed boundary state.
pub fn check_law_compliance(v: &SlotView) -> Option<Violation> {
    for (r, body) in v.world.robots() {
        let Some(u) = v.controls.get(&r) else { continue };
        if *u < body.kin.u_min - 1e-12 || *u > body.kin.u_max + 1e-12 {
            return Some(Violation {
                monitor: MonitorKind::LawCompliance,
                slot: v.slot,
                robots: vec![r.0],
                detail: format!("control {u} outside [{}, {}]", body.kin.u_min, body.kin.u_max),
            });
        }
    }
    let law = control_law(v.states, v.graph, v.world);
    for (r, allowed) in law {
        let u = v.controls[&r];
        if u > allowed {
            return Some(Violation {
                monitor: MonitorKind::LawCompliance,
                slot: v.slot,
                robots: vec![r.0],
                detail: format!("applied {u} but the law allows at most {allowed}"),
            });
        }
    }
    None
}

/// The boundary state is brake safe for the priority graph in force.
pub fn check_brake_safety(v: &SlotView) -> Option<Violation> {
    first_unsafe_edge(v.states, v.graph, v.world).map(|(w, l)| Violation {
        monitor: MonitorKind::BrakeSafety,
        slot: v.slot,
        robots: vec![w.0, l.0],
        detail: "joint state not brake safe for this edge".into(),
    })
}

/// Pairwise clearance at n_sub + 1 samples across the slot, for every pair
/// whose paths conflict at all. Pairs provably outside their conflict section
/// for the whole slot are skipped.
pub fn check_collisions(v: &SlotView) -> Option<Violation> {
    let d = v.world.footprint().diameter;
    let n_sub = v.world.n_sub();
    let limit = (d - MONITOR_TOL) * (d - MONITOR_TOL);

    // Group by path and sort by position so only nearby pairs get sampled.
    // Positions never decrease within a slot, so each robot sweeps the
    // interval [x, end].
    struct Mover {
        id: RobotId,
        s: RobotState,
        u: f64,
        kin: Kinodynamics,
        end: f64,
    }
    let mut by_path: BTreeMap<PathId, Vec<Mover>> = BTreeMap::new();
    let mut v_max = 0.0_f64;
    for (id, s) in v.states {
        let body = v.world.robot(*id);
        let u = v.controls[id];
        v_max = v_max.max(body.kin.v_max);
        by_path.entry(body.path).or_default().push(Mover {
            id: *id,
            s: *s,
            u,
            kin: body.kin,
            end: advance(*s, u, &body.kin, 1.0).x,
        });
    }
    for movers in by_path.values_mut() {
        movers.sort_by(|a, b| a.s.x.total_cmp(&b.s.x));
    }

    let sample_pair = |i: &Mover, j: &Mover, sec: &PairSection| -> Option<Violation> {
        for k in 0..=n_sub {
            let t = k as f64 / n_sub as f64;
            let xi = advance(i.s, i.u, &i.kin, t).x;
            let xj = advance(j.s, j.u, &j.kin, t).x;
            let hit = match sec {
                PairSection::Crossing(c) => c.sq_distance(xi, xj) < limit,
                PairSection::SamePath { .. } => (xi - xj).abs() < d - MONITOR_TOL,
                PairSection::Disjoint => false,
            };
            if hit {
                return Some(Violation {
                    monitor: MonitorKind::Collision,
                    slot: v.slot,
                    robots: vec![i.id.0, j.id.0],
                    detail: format!("footprints overlap at t = {} + {t}", v.slot),
                });
            }
        }
        None
    };

    // Same-path followers: relative positions drift at most both v_max over
    // the slot, so a sorted sweep can stop at the first out-of-range leader.
    for movers in by_path.values() {
        let sec = PairSection::SamePath { diameter: d };
        for (a, mi) in movers.iter().enumerate() {
            for mj in &movers[a + 1..] {
                if mj.s.x - mi.s.x > d + mi.kin.v_max + v_max {
                    break;
                }
                if mj.s.x - mi.s.x <= d + mi.kin.v_max + mj.kin.v_max {
                    if let Some(viol) = sample_pair(mi, mj, &sec) {
                        return Some(viol);
                    }
                }
            }
        }
    }

    // Crossing pairs: only robots whose slot interval meets the conflict band
    // need sampling.
    let paths: Vec<PathId> = by_path.keys().copied().collect();
    for (a, &pi) in paths.iter().enumerate() {
        for &pj in &paths[a + 1..] {
            let sec = v.world.section_between_paths(pi, pj);
            let PairSection::Crossing(c) = sec else { continue };
            let ext = c.extent(0.0) + 1e-9;
            for mi in &by_path[&pi] {
                if mi.s.x > c.center_first + ext || mi.end < c.center_first - ext {
                    continue;
                }
                for mj in &by_path[&pj] {
                    if mj.s.x > c.center_second + ext || mj.end < c.center_second - ext {
                        continue;
                    }
                    if let Some(viol) = sample_pair(mi, mj, &sec) {
                        return Some(viol);
                    }
                }
            }
        }
    }
    None
}

/// Along the slot, no priority edge's shifted conflict section is entered
/// (membership deflated by the monitor tolerance).
pub fn check_priorities(v: &SlotView) -> Option<Violation> {
    let n_sub = v.world.n_sub();
    for (w, l) in v.graph.edges() {
        let sec = v.world.section_between(w, l);
        if sec.is_empty() {
            continue;
        }
        let (sw, uw, kw) = (v.states[&w], v.controls[&w], v.world.robot(w).kin);
        let (sl, ul, kl) = (v.states[&l], v.controls[&l], v.world.robot(l).kin);
        let ew = advance(sw, uw, &kw, 1.0).x;
        let el = advance(sl, ul, &kl, 1.0).x;
        match &sec {
            PairSection::Crossing(c) => {
                let ext = c.extent(0.0) + 1e-9;
                // Out for sure: loser never reaches the section, or winner is
                // already past it for the whole slot.
                if el.max(sl.x) < c.center_second - ext || ew.min(sw.x) > c.center_first + ext {
                    continue;
                }
            }
            PairSection::SamePath { diameter } => {
                if el.max(sl.x) <= ew.min(sw.x) - diameter - 1e-9 {
                    continue;
                }
            }
            PairSection::Disjoint => unreachable!(),
        }
        for k in 0..=n_sub {
            let t = k as f64 / n_sub as f64;
            let xw = advance(sw, uw, &kw, t).x;
            let xl = advance(sl, ul, &kl, t).x;
            if in_shifted_obstacle_inflated(&sec, xw, xl, -MONITOR_TOL, 0.0) {
                return Some(Violation {
                    monitor: MonitorKind::Priority,
                    slot: v.slot,
                    robots: vec![w.0, l.0],
                    detail: format!("shifted section entered at t = {} + {t}", v.slot),
                });
            }
        }
    }
    None
}

// ---- offline verification ---------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MonitorReport {
    pub monitor: MonitorKind,
    pub ok: bool,
    pub violation: Option<Violation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub slots: u64,
    pub robots_seen: u64,
    pub monitors: Vec<MonitorReport>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.monitors.iter().all(|m| m.ok)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("trace does not start with a header line")]
    MissingHeader,
    #[error("unsupported trace schema version {0}")]
    SchemaVersion(u32),
    #[error("trace was produced by a different configuration (hash {found}, expected {expected})")]
    ConfigHash { expected: String, found: String },
    #[error("slot {slot}: {what}")]
    Structure { slot: u64, what: String },
}

/// Collects the first violation seen per monitor while the scan continues.
#[derive(Default)]
struct Findings {
    first: BTreeMap<&'static str, Violation>,
}

impl Findings {
    fn record(&mut self, v: Violation) {
        let key = match v.monitor {
            MonitorKind::Collision => "collision",
            MonitorKind::Priority => "priority",
            MonitorKind::BrakeSafety => "brake_safety",
            MonitorKind::LawCompliance => "law_compliance",
            MonitorKind::Liveness => "liveness",
            MonitorKind::Replay => "replay",
            MonitorKind::Conservation => "conservation",
        };
        self.first.entry(key).or_insert(v);
    }

    fn into_report(self, slots: u64, robots_seen: u64) -> VerifyReport {
        let monitors = ALL_MONITORS
            .iter()
            .map(|kind| {
                let violation = self.first.values().find(|v| v.monitor == *kind).cloned();
                MonitorReport { monitor: *kind, ok: violation.is_none(), violation }
            })
            .collect();
        VerifyReport { slots, robots_seen, monitors }
    }
}

struct PrevSlot {
    record: SlotRecord,
    robots: BTreeMap<RobotId, RobotRecord>,
}

/// Replays a trace against its configuration and recomputes every monitor.
///
/// Structural damage (missing header, wrong schema or config, interleaving
/// that cannot be attributed to any slot) is an error; everything else —
/// states that do not follow from the dynamics, robots appearing or vanishing
/// without cause, safety or law breaches — is reported as a violation of the
/// corresponding monitor.
pub fn verify<R: BufRead>(scenario: &Scenario, reader: R) -> Result<VerifyReport, VerifyError> {
    let mut lines = trace::read_lines(reader);
    let header: Header = match lines.next() {
        Some(Ok(TraceLine::Header(h))) => h,
        Some(Ok(_)) | None => return Err(VerifyError::MissingHeader),
        Some(Err(e)) => return Err(e.into()),
    };
    if header.schema_version != trace::SCHEMA_VERSION {
        return Err(VerifyError::SchemaVersion(header.schema_version));
    }
    if header.config_hash != scenario.config_hash {
        return Err(VerifyError::ConfigHash {
            expected: scenario.config_hash.clone(),
            found: header.config_hash,
        });
    }

    let mut world = scenario.empty_world();
    let mut findings = Findings::default();
    let mut prev: Option<PrevSlot> = None;
    let mut cur: Option<(SlotRecord, BTreeMap<RobotId, RobotRecord>)> = None;
    let mut next_slot: u64 = 0;
    let mut robots_seen: u64 = 0;
    let mut live_at_stop: Option<u64> = None;

    let drain_stop = scenario
        .config
        .arrival_stop_slot
        .filter(|t| *t <= scenario.config.horizon);

    macro_rules! flush {
        ($group:expr) => {{
            let (rec, robots) = $group;
            process_slot(scenario, &mut world, &rec, &robots, prev.as_ref(), &mut findings);
            if let Some(stop) = drain_stop {
                if rec.slot == stop && live_at_stop.is_none() {
                    live_at_stop = Some(robots.len() as u64);
                }
            }
            robots_seen += rec.spawned.len() as u64;
            prev = Some(PrevSlot { record: rec, robots });
        }};
    }

    for line in lines {
        match line? {
            TraceLine::Header(_) => {
                return Err(VerifyError::Structure {
                    slot: next_slot,
                    what: "second header line".into(),
                })
            }
            TraceLine::Slot(rec) => {
                if rec.slot != next_slot {
                    return Err(VerifyError::Structure {
                        slot: rec.slot,
                        what: format!("expected slot {next_slot}"),
                    });
                }
                next_slot += 1;
                if let Some(group) = cur.take() {
                    flush!(group);
                }
                cur = Some((rec, BTreeMap::new()));
            }
            TraceLine::Robot(rr) => {
                let Some((rec, robots)) = cur.as_mut() else {
                    return Err(VerifyError::Structure {
                        slot: rr.slot,
                        what: "robot line before any slot line".into(),
                    });
                };
                if rr.slot != rec.slot {
                    return Err(VerifyError::Structure {
                        slot: rec.slot,
                        what: format!("robot line tagged slot {}", rr.slot),
                    });
                }
                if robots.insert(RobotId(rr.id), rr).is_some() {
                    return Err(VerifyError::Structure {
                        slot: rec.slot,
                        what: format!("robot {} recorded twice", rr.id),
                    });
                }
            }
        }
    }
    if let Some(group) = cur.take() {
        flush!(group);
    }

    let slots = next_slot;

    // Liveness/drain: with arrivals stopped inside the horizon the trace must
    // show the area emptying by the deadline; without, it must cover the
    // horizon (a shorter healthy-looking trace was cut off).
    if let Some(stop) = drain_stop {
        let n = live_at_stop.unwrap_or(0).max(1);
        let deadline = stop + 20 * scenario.crossing_slots * n;
        // The area is drained when every robot of the final slot exits at its
        // end; the run stops at the first empty boundary at or after `stop`.
        let drained_at = match &prev {
            None => Some(0),
            Some(p) if p.robots.keys().all(|id| p.record.exited.contains(&id.0)) => {
                Some(p.record.slot + 1)
            }
            Some(_) => None,
        };
        match drained_at {
            Some(t) if t <= deadline => {}
            Some(t) => findings.record(Violation {
                monitor: MonitorKind::Liveness,
                slot: t,
                robots: vec![],
                detail: format!("area drained at {t}, after the deadline {deadline}"),
            }),
            None => findings.record(Violation {
                monitor: MonitorKind::Liveness,
                slot: slots,
                robots: vec![],
                detail: format!("trace ends undrained (deadline {deadline})"),
            }),
        }
    } else if findings.first.is_empty() && slots < scenario.config.horizon {
        findings.record(Violation {
            monitor: MonitorKind::Liveness,
            slot: slots,
            robots: vec![],
            detail: format!(
                "trace ends at slot {slots}, before the horizon {} and with no violation",
                scenario.config.horizon
            ),
        });
    }

    Ok(findings.into_report(slots, robots_seen))
}

fn process_slot(
    scenario: &Scenario,
    world: &mut WorldModel,
    rec: &SlotRecord,
    robots: &BTreeMap<RobotId, RobotRecord>,
    prev: Option<&PrevSlot>,
    findings: &mut Findings,
) {
    let empty = BTreeMap::new();
    let prev_robots = prev.map_or(&empty, |p| &p.robots);
    let prev_exited: Vec<u32> = prev.map_or(vec![], |p| p.record.exited.clone());

    // Conservation: robots appear exactly via `spawned` and disappear exactly
    // via the previous slot's `exited`.
    for id in robots.keys() {
        let is_new = !prev_robots.contains_key(id);
        let is_spawn = rec.spawned.contains(&id.0);
        if is_new && !is_spawn {
            findings.record(Violation {
                monitor: MonitorKind::Conservation,
                slot: rec.slot,
                robots: vec![id.0],
                detail: "robot appeared without a spawn event".into(),
            });
        }
        if !is_new && is_spawn {
            findings.record(Violation {
                monitor: MonitorKind::Conservation,
                slot: rec.slot,
                robots: vec![id.0],
                detail: "spawn event for an already-present robot".into(),
            });
        }
    }
    for id in rec.spawned.iter() {
        if !robots.contains_key(&RobotId(*id)) {
            findings.record(Violation {
                monitor: MonitorKind::Conservation,
                slot: rec.slot,
                robots: vec![*id],
                detail: "spawned robot has no record".into(),
            });
        }
    }
    for (id, prr) in prev_robots {
        if !robots.contains_key(id) && !prev_exited.contains(&id.0) {
            findings.record(Violation {
                monitor: MonitorKind::Conservation,
                slot: rec.slot,
                robots: vec![id.0],
                detail: "robot vanished without an exit event".into(),
            });
        }
        if let Some(rr) = robots.get(id) {
            if rr.path != prr.path {
                findings.record(Violation {
                    monitor: MonitorKind::Conservation,
                    slot: rec.slot,
                    robots: vec![id.0],
                    detail: format!("path changed from {} to {}", prr.path, rr.path),
                });
            }
            if prr.status == Status::Accepted && rr.status != Status::Accepted {
                findings.record(Violation {
                    monitor: MonitorKind::Conservation,
                    slot: rec.slot,
                    robots: vec![id.0],
                    detail: "accepted robot demoted without exiting".into(),
                });
            }
        }
    }

    // Sync the world to this slot's population.
    let stale: Vec<RobotId> = world.robots().map(|(id, _)| id).collect();
    for id in stale {
        if !robots.contains_key(&id) {
            world.remove_robot(id);
        }
    }
    for (id, rr) in robots {
        if world
            .paths()
            .all(|p| p.id != PathId(rr.path))
        {
            findings.record(Violation {
                monitor: MonitorKind::Conservation,
                slot: rec.slot,
                robots: vec![id.0],
                detail: format!("unknown path {}", rr.path),
            });
            return; // the rest of the slot checks cannot be interpreted
        }
        if world.robots().all(|(rid, _)| rid != *id) {
            world.add_robot(*id, PathId(rr.path), scenario.kin).unwrap();
        }
    }

    // Replay: recorded states must be the stepped previous states; spawns
    // must sit at the recorded spawn point with zero speed.
    for (id, rr) in robots {
        if let Some(prr) = prev_robots.get(id) {
            let stepped = advance(
                RobotState::new(prr.x, prr.v),
                prr.u,
                &scenario.kin,
                1.0,
            );
            if (rr.x - stepped.x).abs() > REPLAY_TOL || (rr.v - stepped.v).abs() > REPLAY_TOL {
                findings.record(Violation {
                    monitor: MonitorKind::Replay,
                    slot: rec.slot,
                    robots: vec![id.0],
                    detail: format!(
                        "recorded ({}, {}) but stepping yields ({}, {})",
                        rr.x, rr.v, stepped.x, stepped.v
                    ),
                });
            }
        } else if rec.spawned.contains(&id.0) {
            let rear = prev_robots
                .values()
                .filter(|p| p.path == rr.path)
                .map(|p| advance(RobotState::new(p.x, p.v), p.u, &scenario.kin, 1.0).x)
                .fold(f64::INFINITY, f64::min);
            let expect = if rear <= scenario.footprint.diameter {
                rear - scenario.footprint.diameter
            } else {
                0.0
            };
            if rr.v != 0.0 || (rr.x - expect).abs() > REPLAY_TOL {
                findings.record(Violation {
                    monitor: MonitorKind::Replay,
                    slot: rec.slot,
                    robots: vec![id.0],
                    detail: format!("spawn at ({}, {}) but the rule puts it at ({expect}, 0)", rr.x, rr.v),
                });
            }
        }
    }

    // Rebuild the slot's graph and joint data, then run the shared checks.
    let mut graph = PriorityGraph::new();
    for (id, rr) in robots {
        if rr.status == Status::Accepted {
            graph.add_vertex(*id).unwrap();
        }
    }
    for (w, l) in &rec.graph {
        if graph.add_edge(RobotId(*w), RobotId(*l)).is_err() {
            findings.record(Violation {
                monitor: MonitorKind::Conservation,
                slot: rec.slot,
                robots: vec![*w, *l],
                detail: "graph edge not between accepted robots (or cyclic)".into(),
            });
            return;
        }
    }
    let states: JointState = robots
        .iter()
        .map(|(id, rr)| (*id, RobotState::new(rr.x, rr.v)))
        .collect();
    let controls: BTreeMap<RobotId, f64> = robots.iter().map(|(id, rr)| (*id, rr.u)).collect();
    let view = SlotView { slot: rec.slot, world, graph: &graph, states: &states, controls: &controls };
    if let Some(v) = check_slot(&view) {
        findings.record(v);
    }
}
