//! Entry management for the control area.
//!
//! Robots request entry once they can no longer surely stop before the entry
//! line. The controller grants requests first come, first served: it tries to
//! insert the requester at the lowest priority and accepts when (a) the true
//! joint state would still be brake safe with the new edges, and (b) along the
//! predicted continuation — accepted robots following their forecast flows,
//! the requester at constant full throttle — every new edge keeps both brake
//! safety and the control law's throttle grant until the requester has left.
//! Condition (b) makes acceptance exact for unperturbed fleets: an accepted
//! robot is never braked by the law, so admission is also a completion
//! promise, not just a safety check.
//!
//! Predictions are closed-loop law flows from a base slot. They are refreshed
//! whenever the fleet diverges from them (a forced brake), after acceptances,
//! and the refresh is skipped while every prediction still matches the true
//! state bit for bit.

use std::collections::BTreeMap;

use crate::control::{closed_loop_flow, FlowHorizonExceeded};
use crate::dynamics::{
    advance, flow, time_to_reach, x_stop, ControlSequence, Kinodynamics, RobotState, Trajectory,
};
use crate::geometry::PairSection;
use crate::priority::{
    pair_brake_safe, pair_impulse_safe, JointState, PriorityGraph, RobotId, WorldModel,
};

/// True when one more throttle slot followed by full braking would end past
/// `x_entry`: the robot must either be admitted now or start braking.
pub fn wants_entry(s: RobotState, kin: &Kinodynamics, x_entry: f64) -> bool {
    x_stop(s, kin) > x_entry
}

/// Outcome of one slot of request processing, in evaluation order.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct SlotDecisions {
    pub accepted: Vec<RobotId>,
    pub rejected: Vec<RobotId>,
}

pub struct Controller {
    graph: PriorityGraph,
    /// Law-flow forecast per accepted robot, anchored at a base slot.
    predictions: BTreeMap<RobotId, (u64, Trajectory)>,
    /// Slot of each pending robot's first request; fixes its queue seniority.
    first_request: BTreeMap<RobotId, u64>,
    /// Closed-loop slots after which a prediction is declared stuck.
    horizon_cap: u64,
}

impl Controller {
    pub fn new(horizon_cap: u64) -> Self {
        Controller {
            graph: PriorityGraph::new(),
            predictions: BTreeMap::new(),
            first_request: BTreeMap::new(),
            horizon_cap,
        }
    }

    pub fn graph(&self) -> &PriorityGraph {
        &self.graph
    }

    pub fn is_accepted(&self, r: RobotId) -> bool {
        self.graph.contains(r)
    }

    pub fn first_request_slot(&self, r: RobotId) -> Option<u64> {
        self.first_request.get(&r).copied()
    }

    /// Evaluates this slot's active requesters oldest request first (ties by
    /// id). `s` must hold states for all accepted robots and all requesters;
    /// requesters must not already be accepted.
    pub fn process_requests(
        &mut self,
        now: u64,
        active: &[RobotId],
        s: &JointState,
        world: &WorldModel,
    ) -> SlotDecisions {
        for r in active {
            self.first_request.entry(*r).or_insert(now);
        }
        let mut order = active.to_vec();
        order.sort_by_key(|r| (self.first_request[r], *r));
        let mut decisions = SlotDecisions::default();
        for r in order {
            if self.try_accept(now, r, s, world) {
                decisions.accepted.push(r);
            } else {
                decisions.rejected.push(r);
            }
        }
        decisions
    }

    fn try_accept(&mut self, now: u64, r: RobotId, s: &JointState, world: &WorldModel) -> bool {
        let mut virtual_graph = self.graph.clone();
        virtual_graph
            .add_lowest_priority(r, world)
            .expect("requester must not already be accepted");
        let winners: Vec<RobotId> = virtual_graph.in_edges(r).collect();
        let body = *world.robot(r);
        let n_sub = world.n_sub();

        // (a) The true joint state stays brake safe across the new edges.
        // This alone keeps the fleet safe even if predictions are stale;
        // existing edges stay safe on their own because every applied control
        // obeys the law.
        for w in &winners {
            let wb = world.robot(*w);
            let sec = world.section_between(*w, r);
            if !pair_brake_safe(s[w], &wb.kin, s[&r], &body.kin, &sec, n_sub) {
                return false;
            }
        }

        // (b) Along the predicted continuation, the requester's new edges
        // never lose brake safety or the law's throttle grant. The scan runs
        // winner-major: slots before the requester can possibly reach the
        // conflict are skipped by bisecting its monotone flow, and each edge
        // is done once the winner's forecast is past the conflict for good.
        let exit = world.path(body.path).x_exit;
        let horizon = time_to_reach(s[&r], &body.kin, exit).ceil() as u64 + 2;
        let throttle = ControlSequence::new(vec![body.kin.u_max; horizon as usize])
            .expect("horizon is positive");
        let r_traj = flow(s[&r], &throttle, &body.kin);
        for w in &winners {
            let wb = world.robot(*w);
            let sec = world.section_between(*w, r);
            let (base, w_traj) = &self.predictions[w];
            let offset = (now - base) as usize;
            let mut tau_lo = 0;
            let mut past_conflict = f64::INFINITY;
            if let PairSection::Crossing(c) = &sec {
                let ext = c.extent(body.kin.v_max / n_sub as f64) + 1e-9;
                past_conflict = c.center_first + ext;
                let target = c.center_second - ext;
                let reaches = |tau: u64| {
                    let rs = r_traj.boundary_state(tau as usize);
                    let after = advance(rs, body.kin.u_max, &body.kin, 1.0);
                    after.x + body.kin.braking_distance(after.v) >= target
                };
                if !reaches(horizon) {
                    continue;
                }
                if !reaches(0) {
                    let (mut lo, mut hi) = (0, horizon);
                    while hi - lo > 1 {
                        let mid = lo + (hi - lo) / 2;
                        if reaches(mid) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    tau_lo = hi;
                }
            }
            for tau in tau_lo..=horizon {
                let ws = w_traj.boundary_state(offset + tau as usize);
                if ws.x > past_conflict {
                    break;
                }
                let rs = r_traj.boundary_state(tau as usize);
                if !pair_brake_safe(ws, &wb.kin, rs, &body.kin, &sec, n_sub)
                    || !pair_impulse_safe(ws, &wb.kin, rs, &body.kin, &sec, n_sub)
                {
                    return false;
                }
            }
        }

        self.graph = virtual_graph;
        self.predictions.insert(r, (now, r_traj));
        self.first_request.remove(&r);
        true
    }

    /// Forecast state of an accepted robot `tau` slots after `now`.
    pub fn predicted_state(&self, r: RobotId, now: u64, tau: u64) -> RobotState {
        let (base, traj) = &self.predictions[&r];
        traj.state_at((now - base) as f64 + tau as f64)
    }

    /// Refreshes all predictions from the true state unless each one still
    /// matches it bit for bit (then the stored flows are already exact and
    /// the call is free). Returns whether a recompute happened.
    pub fn update_predictions(
        &mut self,
        now: u64,
        s: &JointState,
        world: &WorldModel,
    ) -> Result<bool, FlowHorizonExceeded> {
        let fresh = self.graph.vertices().all(|r| {
            self.predictions.get(&r).is_some_and(|(base, traj)| {
                let p = traj.state_at((now - base) as f64);
                p.x == s[&r].x && p.v == s[&r].v
            })
        });
        if fresh {
            return Ok(false);
        }
        let accepted: JointState = self.graph.vertices().map(|r| (r, s[&r])).collect();
        let flows = closed_loop_flow(&accepted, &self.graph, world, self.horizon_cap)?;
        self.predictions = flows.into_iter().map(|(r, t)| (r, (now, t))).collect();
        Ok(true)
    }

    /// Drops robots observed past their exit line from the graph and the
    /// prediction table. Returns them in id order.
    pub fn prune_exited(&mut self, s: &JointState, world: &WorldModel) -> Vec<RobotId> {
        let gone: Vec<RobotId> = self
            .graph
            .vertices()
            .filter(|r| s[r].x > world.path(world.robot(*r).path).x_exit)
            .collect();
        for r in &gone {
            self.graph.remove_vertex(*r);
            self.predictions.remove(r);
        }
        gone
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::advance;
    use crate::geometry::{Footprint, PathId, PathSpec, Vec2};

    fn kin() -> Kinodynamics {
        Kinodynamics::new(0.5, -0.025, 0.025).unwrap()
    }

    /// Perpendicular paths crossing at curvilinear (30, 30); entry 21, exit 39.
    fn crossing_world(robots: &[(u32, u32)]) -> WorldModel {
        let a = PathSpec::new(
            PathId(0),
            Vec2::new(-30.0, 0.0),
            Vec2::new(1.0, 0.0),
            60.0,
            21.0,
            39.0,
        )
        .unwrap();
        let b = PathSpec::new(
            PathId(1),
            Vec2::new(0.0, -30.0),
            Vec2::new(0.0, 1.0),
            60.0,
            21.0,
            39.0,
        )
        .unwrap();
        let mut w = WorldModel::new(vec![a, b], Footprint::new(1.0).unwrap(), 16).unwrap();
        for (rid, pid) in robots {
            w.add_robot(RobotId(*rid), PathId(*pid), kin()).unwrap();
        }
        w
    }

    #[test]
    fn wants_entry_at_stopping_horizon() {
        let k = kin();
        // x_stop from full speed is x + 0.5 + 5.0.
        assert!(!wants_entry(RobotState::new(15.4, 0.5), &k, 21.0));
        assert!(wants_entry(RobotState::new(15.6, 0.5), &k, 21.0));
    }

    #[test]
    fn empty_area_accepts_first_requester() {
        let world = crossing_world(&[(1, 0)]);
        let mut ctrl = Controller::new(890);
        let s: JointState = [(RobotId(1), RobotState::new(15.6, 0.5))].into();
        let d = ctrl.process_requests(0, &[RobotId(1)], &s, &world);
        assert_eq!(d.accepted, vec![RobotId(1)]);
        assert!(d.rejected.is_empty());
        assert!(ctrl.is_accepted(RobotId(1)));
        // The stored forecast starts at the true state.
        let p = ctrl.predicted_state(RobotId(1), 0, 0);
        assert_eq!((p.x, p.v), (15.6, 0.5));
    }

    #[test]
    fn symmetric_contention_admits_exactly_one() {
        let world = crossing_world(&[(1, 0), (2, 1)]);
        let mut ctrl = Controller::new(890);
        let s: JointState = [
            (RobotId(1), RobotState::new(15.6, 0.5)),
            (RobotId(2), RobotState::new(15.6, 0.5)),
        ]
        .into();
        // Same first-request slot: the id breaks the tie, whatever order the
        // active list arrives in.
        let d = ctrl.process_requests(0, &[RobotId(2), RobotId(1)], &s, &world);
        assert_eq!(d.accepted, vec![RobotId(1)]);
        assert_eq!(d.rejected, vec![RobotId(2)]);
    }

    #[test]
    fn older_request_wins_over_lower_id() {
        let world = crossing_world(&[(9, 0), (1, 0), (2, 1)]);
        let mut ctrl = Controller::new(890);
        // Robot 9 is accepted and later stops right on the crossing.
        let s0: JointState = [(RobotId(9), RobotState::new(15.6, 0.5))].into();
        assert_eq!(
            ctrl.process_requests(0, &[RobotId(9)], &s0, &world).accepted,
            vec![RobotId(9)]
        );
        let stuck: JointState = [
            (RobotId(9), RobotState::new(30.0, 0.0)),
            (RobotId(2), RobotState::new(25.0, 0.5)),
        ]
        .into();
        // Robot 2 requests first but cannot stop short of the blocked
        // crossing's shifted section: rejected on the true-state check.
        let d = ctrl.process_requests(10, &[RobotId(2)], &stuck, &world);
        assert_eq!(d.rejected, vec![RobotId(2)]);

        // Robot 9 has moved past the conflict; now 1 and 2 contend. Robot 2's
        // older request outranks robot 1's lower id.
        let later: JointState = [
            (RobotId(9), RobotState::new(38.0, 0.5)),
            (RobotId(1), RobotState::new(25.0, 0.5)),
            (RobotId(2), RobotState::new(25.0, 0.5)),
        ]
        .into();
        ctrl.update_predictions(20, &later, &world).unwrap();
        let d = ctrl.process_requests(20, &[RobotId(1), RobotId(2)], &later, &world);
        assert_eq!(d.accepted, vec![RobotId(2)]);
        assert_eq!(d.rejected, vec![RobotId(1)]);
    }

    #[test]
    fn follower_waits_for_stopped_leader_to_recede() {
        let world = crossing_world(&[(1, 0), (2, 0)]);
        let mut ctrl = Controller::new(890);
        let s0: JointState = [(RobotId(1), RobotState::new(15.6, 0.5))].into();
        ctrl.process_requests(0, &[RobotId(1)], &s0, &world);

        // The leader is stopped inside the area. The follower could brake to
        // a stop behind it (gap 1.2), but the throttle slot the law would
        // grant on acceptance could not be retracted in time (reach 22.3).
        let stuck: JointState = [
            (RobotId(1), RobotState::new(23.0, 0.0)),
            (RobotId(2), RobotState::new(16.8, 0.5)),
        ]
        .into();
        ctrl.update_predictions(12, &stuck, &world).unwrap();
        let d = ctrl.process_requests(12, &[RobotId(2)], &stuck, &world);
        assert_eq!(d.rejected, vec![RobotId(2)]);

        // Once the leader recedes, the same follower state is admitted.
        let clear: JointState = [
            (RobotId(1), RobotState::new(33.0, 0.5)),
            (RobotId(2), RobotState::new(16.8, 0.5)),
        ]
        .into();
        ctrl.update_predictions(40, &clear, &world).unwrap();
        let d = ctrl.process_requests(40, &[RobotId(2)], &clear, &world);
        assert_eq!(d.accepted, vec![RobotId(2)]);
    }

    #[test]
    fn prediction_refresh_skips_while_exact() {
        let world = crossing_world(&[(1, 0)]);
        let mut ctrl = Controller::new(890);
        let mut s: JointState = [(RobotId(1), RobotState::new(15.6, 0.5))].into();
        ctrl.process_requests(0, &[RobotId(1)], &s, &world);

        // Following the law (full throttle, nothing to yield to) keeps the
        // true state exactly on the forecast: no recompute.
        let k = kin();
        for _ in 0..5 {
            s.insert(RobotId(1), advance(s[&RobotId(1)], k.u_max, &k, 1.0));
        }
        assert!(!ctrl.update_predictions(5, &s, &world).unwrap());

        // A forced brake diverges from the forecast and triggers one.
        s.insert(RobotId(1), advance(s[&RobotId(1)], k.u_min, &k, 1.0));
        assert!(ctrl.update_predictions(6, &s, &world).unwrap());
        let p = ctrl.predicted_state(RobotId(1), 6, 0);
        assert_eq!((p.x, p.v), (s[&RobotId(1)].x, s[&RobotId(1)].v));
    }

    #[test]
    fn exited_robots_are_pruned() {
        let world = crossing_world(&[(1, 0)]);
        let mut ctrl = Controller::new(890);
        let s: JointState = [(RobotId(1), RobotState::new(15.6, 0.5))].into();
        ctrl.process_requests(0, &[RobotId(1)], &s, &world);

        let out: JointState = [(RobotId(1), RobotState::new(39.2, 0.5))].into();
        assert_eq!(ctrl.prune_exited(&out, &world), vec![RobotId(1)]);
        assert!(!ctrl.is_accepted(RobotId(1)));
        assert!(ctrl.graph.is_empty());
    }
}
