//! Priority graphs and brake-safety of joint configurations.
//!
//! Priorities between robots form a directed acyclic graph: an edge (w, l)
//! means w (the winner) passes the shared conflict before l (the loser).
//! A joint state is brake safe for a graph when the flow in which every robot
//! brakes to rest never enters any edge's shifted conflict section. Brake
//! safety is what the entry protocol grants and what the control law keeps
//! invariant, so it is checked conservatively: flows are sampled on a fixed
//! sub-slot grid and membership thresholds are inflated by the largest
//! position drift possible between samples.

use std::collections::{BTreeMap, BTreeSet};

use crate::dynamics::{advance, Kinodynamics, RobotState};
use crate::geometry::{
    in_shifted_obstacle, in_shifted_obstacle_inflated, pair_section, Footprint, GeometryError,
    PairSection, PathId, PathSpec, EPS_GEOM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RobotId(pub u32);

impl std::fmt::Display for RobotId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Joint configuration: one kinodynamic state per robot.
pub type JointState = BTreeMap<RobotId, RobotState>;

#[derive(Debug, thiserror::Error)]
pub enum PriorityError {
    #[error("robot {0} is already a vertex")]
    DuplicateVertex(RobotId),
    #[error("robot {0} is not a vertex")]
    UnknownVertex(RobotId),
    #[error("edge ({0}, {1}) would close a priority cycle")]
    CycleIntroduced(RobotId, RobotId),
    #[error("self edge on robot {0}")]
    SelfEdge(RobotId),
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("duplicate path id {0}")]
    DuplicatePath(PathId),
    #[error("unknown path id {0}")]
    UnknownPath(PathId),
    #[error("duplicate robot id {0}")]
    DuplicateRobot(RobotId),
    #[error("unknown robot id {0}")]
    UnknownRobot(RobotId),
}

/// Directed acyclic relation "passes the conflict first".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriorityGraph {
    vertices: BTreeSet<RobotId>,
    edges: BTreeSet<(RobotId, RobotId)>,
}

impl PriorityGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertices(&self) -> impl Iterator<Item = RobotId> + '_ {
        self.vertices.iter().copied()
    }

    pub fn contains(&self, id: RobotId) -> bool {
        self.vertices.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edges as (winner, loser) pairs in deterministic order.
    pub fn edges(&self) -> impl Iterator<Item = (RobotId, RobotId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, winner: RobotId, loser: RobotId) -> bool {
        self.edges.contains(&(winner, loser))
    }

    /// Winners of `loser`, i.e. robots it must yield to.
    pub fn in_edges(&self, loser: RobotId) -> impl Iterator<Item = RobotId> + '_ {
        self.edges.iter().filter(move |(_, l)| *l == loser).map(|(w, _)| *w)
    }

    pub fn add_vertex(&mut self, id: RobotId) -> Result<(), PriorityError> {
        if !self.vertices.insert(id) {
            return Err(PriorityError::DuplicateVertex(id));
        }
        Ok(())
    }

    /// Adds an explicit edge, refusing cycles.
    pub fn add_edge(&mut self, winner: RobotId, loser: RobotId) -> Result<(), PriorityError> {
        if winner == loser {
            return Err(PriorityError::SelfEdge(winner));
        }
        if !self.vertices.contains(&winner) {
            return Err(PriorityError::UnknownVertex(winner));
        }
        if !self.vertices.contains(&loser) {
            return Err(PriorityError::UnknownVertex(loser));
        }
        self.edges.insert((winner, loser));
        if !self.is_acyclic() {
            self.edges.remove(&(winner, loser));
            return Err(PriorityError::CycleIntroduced(winner, loser));
        }
        Ok(())
    }

    /// Inserts `newcomer` with the lowest priority: every present robot whose
    /// conflict section with it is non-empty becomes a winner over it. The
    /// newcomer is a sink, so acyclicity is preserved by construction.
    pub fn add_lowest_priority(
        &mut self,
        newcomer: RobotId,
        world: &WorldModel,
    ) -> Result<(), PriorityError> {
        self.add_vertex(newcomer)?;
        let others: Vec<RobotId> =
            self.vertices.iter().copied().filter(|v| *v != newcomer).collect();
        for other in others {
            if world.has_conflict(other, newcomer) {
                self.edges.insert((other, newcomer));
            }
        }
        debug_assert!(self.is_acyclic());
        Ok(())
    }

    /// Removes a vertex and all its incident edges (robot exited).
    pub fn remove_vertex(&mut self, id: RobotId) {
        self.vertices.remove(&id);
        self.edges.retain(|(w, l)| *w != id && *l != id);
    }

    /// Kahn's algorithm; the graphs are small enough that simplicity wins.
    pub fn is_acyclic(&self) -> bool {
        let mut indeg: BTreeMap<RobotId, usize> =
            self.vertices.iter().map(|v| (*v, 0)).collect();
        for (_, l) in &self.edges {
            *indeg.get_mut(l).unwrap() += 1;
        }
        let mut queue: Vec<RobotId> =
            indeg.iter().filter(|(_, d)| **d == 0).map(|(v, _)| *v).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for (w, l) in &self.edges {
                if *w == v {
                    let d = indeg.get_mut(l).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        queue.push(*l);
                    }
                }
            }
        }
        seen == self.vertices.len()
    }
}

/// A robot's physical identity: its path and its control bounds.
#[derive(Debug, Clone, Copy)]
pub struct RobotBody {
    pub path: PathId,
    pub kin: Kinodynamics,
}

/// Static geometry plus the current robot population. Conflict sections are
/// derived once per path pair; robot pairs look theirs up through their paths.
#[derive(Debug, Clone)]
pub struct WorldModel {
    footprint: Footprint,
    n_sub: u32,
    paths: BTreeMap<PathId, PathSpec>,
    sections: BTreeMap<(PathId, PathId), PairSection>,
    robots: BTreeMap<RobotId, RobotBody>,
}

impl WorldModel {
    /// Validates the path layout; rejects overlapping parallel paths.
    pub fn new(paths: Vec<PathSpec>, footprint: Footprint, n_sub: u32) -> Result<Self, WorldError> {
        assert!(n_sub >= 1, "n_sub must be at least 1");
        let mut map = BTreeMap::new();
        for p in paths {
            p.validate_entry_exit()?;
            if map.insert(p.id, p).is_some() {
                return Err(WorldError::DuplicatePath(p.id));
            }
        }
        let mut sections = BTreeMap::new();
        let ids: Vec<PathId> = map.keys().copied().collect();
        for (i, a) in ids.iter().enumerate() {
            for b in ids.iter().skip(i + 1) {
                let sec = pair_section(&map[a], &map[b], &footprint)?;
                sections.insert((*a, *b), sec);
            }
        }
        Ok(WorldModel { footprint, n_sub, paths: map, sections, robots: BTreeMap::new() })
    }

    pub fn footprint(&self) -> Footprint {
        self.footprint
    }

    pub fn n_sub(&self) -> u32 {
        self.n_sub
    }

    pub fn path(&self, id: PathId) -> &PathSpec {
        &self.paths[&id]
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathSpec> + '_ {
        self.paths.values()
    }

    pub fn add_robot(
        &mut self,
        id: RobotId,
        path: PathId,
        kin: Kinodynamics,
    ) -> Result<(), WorldError> {
        if !self.paths.contains_key(&path) {
            return Err(WorldError::UnknownPath(path));
        }
        if self.robots.insert(id, RobotBody { path, kin }).is_some() {
            return Err(WorldError::DuplicateRobot(id));
        }
        Ok(())
    }

    pub fn remove_robot(&mut self, id: RobotId) {
        self.robots.remove(&id);
    }

    pub fn robot(&self, id: RobotId) -> &RobotBody {
        &self.robots[&id]
    }

    pub fn robots(&self) -> impl Iterator<Item = (RobotId, &RobotBody)> + '_ {
        self.robots.iter().map(|(id, b)| (*id, b))
    }

    /// Conflict section for a robot pair, oriented with `i` on the first axis.
    pub fn section_between(&self, i: RobotId, j: RobotId) -> PairSection {
        let pi = self.robots[&i].path;
        let pj = self.robots[&j].path;
        self.section_between_paths(pi, pj)
    }

    /// Conflict section for a path pair, oriented with `pi` on the first axis.
    pub fn section_between_paths(&self, pi: PathId, pj: PathId) -> PairSection {
        if pi == pj {
            return PairSection::SamePath { diameter: self.footprint.diameter };
        }
        if pi < pj {
            self.sections[&(pi, pj)]
        } else {
            self.sections[&(pj, pi)].swapped()
        }
    }

    pub fn has_conflict(&self, i: RobotId, j: RobotId) -> bool {
        !self.section_between(i, j).is_empty()
    }
}

/// True iff no priority edge's shifted section contains the configuration:
/// the defining membership test, with no conservative inflation.
pub fn config_free(s: &JointState, g: &PriorityGraph, world: &WorldModel) -> bool {
    g.edges().all(|(w, l)| {
        let sec = world.section_between(w, l);
        !in_shifted_obstacle(&sec, s[&w].x, s[&l].x)
    })
}

/// Brake safety of a joint state: along the flow where every robot brakes to
/// rest, no edge's shifted section is ever entered. Returns the first unsafe
/// edge for diagnostics, or None when safe.
pub fn first_unsafe_edge(
    s: &JointState,
    g: &PriorityGraph,
    world: &WorldModel,
) -> Option<(RobotId, RobotId)> {
    g.edges().find(|(w, l)| {
        let sec = world.section_between(*w, *l);
        let wb = world.robot(*w);
        let lb = world.robot(*l);
        !pair_brake_safe(s[w], &wb.kin, s[l], &lb.kin, &sec, world.n_sub())
    })
}

pub fn is_brake_safe(s: &JointState, g: &PriorityGraph, world: &WorldModel) -> bool {
    first_unsafe_edge(s, g, world).is_none()
}

/// Brake safety of a single edge: both robots brake from their current states.
///
/// Crossing sections are scanned on the sub-slot grid with drift-inflated
/// thresholds (see `scan_worst_case`). Same-path sections admit an exact
/// closed form: the gap is piecewise quadratic in time, so its minimum is
/// attained at a velocity crossover or at one of the rest times.
pub fn pair_brake_safe(
    w: RobotState,
    w_kin: &Kinodynamics,
    l: RobotState,
    l_kin: &Kinodynamics,
    sec: &PairSection,
    n_sub: u32,
) -> bool {
    match sec {
        PairSection::Disjoint => true,
        PairSection::SamePath { diameter } => {
            min_gap_both_braking(w, w_kin, l, l_kin) >= *diameter
        }
        PairSection::Crossing(_) => {
            let rest = l_kin.braking_time(l.v);
            scan_worst_case(
                w,
                w_kin,
                l,
                l_kin,
                sec,
                n_sub,
                rest,
                l.x + l_kin.braking_distance(l.v),
                |s, kin, t| advance(s, kin.u_min, kin, t),
            )
        }
    }
}

/// The control law's per-edge test: the loser throttles for one slot and then
/// brakes, while the winner brakes throughout. Safe iff the shifted section is
/// never entered along that worst-case pair flow.
pub fn pair_impulse_safe(
    w: RobotState,
    w_kin: &Kinodynamics,
    l: RobotState,
    l_kin: &Kinodynamics,
    sec: &PairSection,
    n_sub: u32,
) -> bool {
    // Same-path pairs admit an exact closed form. The ε pad keeps this check
    // strictly stronger than the un-padded brake-safety predicate, so a slot
    // granted here can never erode the next boundary's brake safety through
    // rounding alone.
    if let PairSection::SamePath { diameter } = sec {
        return min_gap_impulse_vs_braking(w, w_kin, l, l_kin) >= *diameter + EPS_GEOM;
    }
    let after = advance(l, l_kin.u_max, l_kin, 1.0);
    let rest = 1.0 + l_kin.braking_time(after.v);
    let reach = after.x + l_kin.braking_distance(after.v);
    scan_worst_case(w, w_kin, l, l_kin, sec, n_sub, rest, reach, |s, kin, t| {
        if t <= 1.0 {
            advance(s, kin.u_max, kin, t)
        } else {
            advance(advance(s, kin.u_max, kin, 1.0), kin.u_min, kin, t - 1.0)
        }
    })
}

/// Shared scan: the winner brakes, the loser follows `loser_at`, and shifted
/// membership is tested on the grid t = k + j/n_sub until the loser is at
/// rest. Positions only move forward and winner progress only shrinks the
/// shifted section, so a coarse pass at slot boundaries with a full-slot drift
/// margin proves most slots safe; only slots failing it are sub-sampled with
/// the per-sample drift margin. Past the loser's rest time the configuration
/// can only become safer, so one final grid point suffices.
#[allow(clippy::too_many_arguments)]
fn scan_worst_case(
    w: RobotState,
    w_kin: &Kinodynamics,
    l: RobotState,
    l_kin: &Kinodynamics,
    sec: &PairSection,
    n_sub: u32,
    loser_rest: f64,
    loser_reach: f64,
    loser_at: impl Fn(RobotState, &Kinodynamics, f64) -> RobotState,
) -> bool {
    let fine_margin = l_kin.v_max / n_sub as f64;
    if let PairSection::Crossing(c) = sec {
        // The loser can never reach the section, or the winner is already
        // past every conflict point and only moves forward.
        let ext = c.extent(fine_margin) + 1e-9;
        if loser_reach < c.center_second - ext {
            return true;
        }
        if w.x > c.center_first + ext {
            return true;
        }
    }
    let slots = loser_rest.ceil() as u32;
    let slot_margin = l_kin.v_max;
    for k in 0..=slots {
        let t = k as f64;
        let ws = advance(w, w_kin.u_min, w_kin, t);
        let ls = loser_at(l, l_kin, t);
        if !in_shifted_obstacle_inflated(sec, ws.x, ls.x, slot_margin + fine_margin, EPS_GEOM) {
            continue; // the whole slot [t, t+1] is clear of the inflated set
        }
        for j in 0..=n_sub {
            let tj = t + j as f64 / n_sub as f64;
            let ws = advance(w, w_kin.u_min, w_kin, tj);
            let ls = loser_at(l, l_kin, tj);
            if in_shifted_obstacle_inflated(sec, ws.x, ls.x, fine_margin, EPS_GEOM) {
                return false;
            }
        }
    }
    true
}

/// Exact minimum over time of (winner position - loser position) when both
/// brake to rest. Candidates: now, either rest time, and the instant the two
/// (linearly decreasing) velocities cross.
fn min_gap_both_braking(
    w: RobotState,
    w_kin: &Kinodynamics,
    l: RobotState,
    l_kin: &Kinodynamics,
) -> f64 {
    let tw = w_kin.braking_time(w.v);
    let tl = l_kin.braking_time(l.v);
    let horizon = tw.max(tl);
    let gap_at = |t: f64| {
        advance(w, w_kin.u_min, w_kin, t).x - advance(l, l_kin.u_min, l_kin, t).x
    };
    let mut best = gap_at(0.0).min(gap_at(horizon));
    for t in [tw, tl] {
        if t > 0.0 && t < horizon {
            best = best.min(gap_at(t));
        }
    }
    // Velocity crossover: v_w - |u_w| t = v_l - |u_l| t.
    let du = w_kin.u_min - l_kin.u_min;
    if du.abs() > 1e-15 {
        let t = (l.v - w.v) / du;
        if t > 0.0 && t < horizon {
            best = best.min(gap_at(t));
        }
    }
    best
}

/// Exact minimum gap when the winner brakes and the loser throttles for one
/// slot before braking. The gap is piecewise quadratic with breakpoints at
/// the loser's saturation instant, the slot end, and both rest times; its
/// minimum sits at a breakpoint or at a velocity crossover inside a piece.
fn min_gap_impulse_vs_braking(
    w: RobotState,
    w_kin: &Kinodynamics,
    l: RobotState,
    l_kin: &Kinodynamics,
) -> f64 {
    let after = advance(l, l_kin.u_max, l_kin, 1.0);
    let tw = w_kin.braking_time(w.v);
    let tl = 1.0 + l_kin.braking_time(after.v);
    let horizon = tw.max(tl);
    let loser_at = |t: f64| {
        if t <= 1.0 {
            advance(l, l_kin.u_max, l_kin, t)
        } else {
            advance(after, l_kin.u_min, l_kin, t - 1.0)
        }
    };
    let gap_at = |t: f64| advance(w, w_kin.u_min, w_kin, t).x - loser_at(t).x;
    let mut best = f64::INFINITY;
    let mut consider = |t: f64| {
        if (0.0..=horizon).contains(&t) {
            best = best.min(gap_at(t));
        }
    };
    consider(0.0);
    consider(1.0);
    consider(tw);
    consider(tl);
    consider(horizon);
    // Kink where the throttling loser saturates at v_max.
    let ts = (l_kin.v_max - l.v) / l_kin.u_max;
    if ts < 1.0 {
        consider(ts);
    }
    // Crossover while the loser still throttles: v_w - |u_w| t = v_l + u_max t.
    let du = w_kin.u_min - l_kin.u_max;
    let t = (l.v - w.v) / du;
    if t > 0.0 && t < 1.0 {
        consider(t);
    }
    // Crossover once both brake: v_w - |u_w| t = v_after - |u_l| (t - 1).
    let du = w_kin.u_min - l_kin.u_min;
    if du.abs() > 1e-15 {
        let t = (after.v - l_kin.u_min - w.v) / du;
        if t > 1.0 {
            consider(t);
        }
    }
    best
}
