//! The decentralized control law and its closed-loop flow.
//!
//! Each robot with priorities runs the same rule every slot: throttle at full
//! acceleration unless doing so for one slot could strand it inside the
//! shifted conflict section of some robot it must yield to, in which case it
//! brakes as hard as possible. The test charges the robot the worst case — one
//! full-throttle slot followed by braking to rest — against each winner
//! braking to rest, so granted throttle can always be retracted safely one
//! slot later. Brake safety of the joint state is invariant under the law,
//! and remains so if any subset of robots brakes harder than instructed.

use std::collections::BTreeMap;

use crate::dynamics::{advance, ControlSequence, flow, Trajectory};
use crate::priority::{pair_impulse_safe, JointState, PriorityGraph, RobotId, WorldModel};

/// Controls for every graph vertex: `u_max` when all in-edge worst-case
/// checks pass, `u_min` otherwise. Robots without priorities (not in the
/// graph) are not the law's concern and get no entry.
///
/// `s` must contain a state for every vertex of `g`.
pub fn control_law(
    s: &JointState,
    g: &PriorityGraph,
    world: &WorldModel,
) -> BTreeMap<RobotId, f64> {
    let mut out = BTreeMap::new();
    for r in g.vertices() {
        let kin = world.robot(r).kin;
        let clear = g.in_edges(r).all(|w| {
            let sec = world.section_between(w, r);
            pair_impulse_safe(s[&w], &world.robot(w).kin, s[&r], &kin, &sec, world.n_sub())
        });
        out.insert(r, if clear { kin.u_max } else { kin.u_min });
    }
    out
}

#[derive(Debug, thiserror::Error)]
#[error("{live} robots still inside the area after {cap} closed-loop slots")]
pub struct FlowHorizonExceeded {
    pub cap: u64,
    pub live: usize,
}

/// Integrates the control law forward from `s0` until every robot is past its
/// path's `x_exit`, or `cap` slots elapse. Robots in `s0` but not in `g` run
/// at constant full throttle. All returned trajectories span the same number
/// of slots and hold their final control beyond it, so the flow keeps robots
/// receding when queried past the end.
pub fn closed_loop_flow(
    s0: &JointState,
    g: &PriorityGraph,
    world: &WorldModel,
    cap: u64,
) -> Result<BTreeMap<RobotId, Trajectory>, FlowHorizonExceeded> {
    let ids: Vec<RobotId> = s0.keys().copied().collect();
    debug_assert!(g.vertices().all(|v| s0.contains_key(&v)));
    let exited = |cur: &JointState| {
        ids.iter().all(|r| {
            let body = world.robot(*r);
            cur[r].x > world.path(body.path).x_exit
        })
    };
    let mut cur = s0.clone();
    let mut controls: BTreeMap<RobotId, Vec<f64>> =
        ids.iter().map(|r| (*r, Vec::new())).collect();
    let mut slots: u64 = 0;
    while !exited(&cur) {
        if slots >= cap {
            let live = ids
                .iter()
                .filter(|r| cur[*r].x <= world.path(world.robot(**r).path).x_exit)
                .count();
            return Err(FlowHorizonExceeded { cap, live });
        }
        let law = control_law(&cur, g, world);
        for r in &ids {
            let kin = world.robot(*r).kin;
            let u = law.get(r).copied().unwrap_or(kin.u_max);
            controls.get_mut(r).unwrap().push(u);
            cur.insert(*r, advance(cur[r], u, &kin, 1.0));
        }
        slots += 1;
    }
    let mut out = BTreeMap::new();
    for r in ids {
        let kin = world.robot(r).kin;
        let mut vals = controls.remove(&r).unwrap();
        if vals.is_empty() {
            vals.push(kin.u_max); // already past the exit: keep receding
        }
        let ctrl = ControlSequence::new(vals).expect("non-empty by construction");
        out.insert(r, flow(s0[&r], &ctrl, &kin));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Kinodynamics, RobotState};
    use crate::geometry::{Footprint, PairSection, PathId, PathSpec, Vec2};
    use crate::priority::{config_free, is_brake_safe};
    use proptest::prelude::*;

    fn kin() -> Kinodynamics {
        Kinodynamics::new(0.5, -0.025, 0.025).unwrap()
    }

    /// Perpendicular paths crossing at curvilinear (30, 30), entry at 21.
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

    fn graph_for(world: &WorldModel, order: &[u32]) -> PriorityGraph {
        let mut g = PriorityGraph::new();
        for id in order {
            g.add_lowest_priority(RobotId(*id), world).unwrap();
        }
        g
    }

    #[test]
    fn law_throttles_until_stopping_would_land_inside() {
        let world = crossing_world(&[(1, 1), (2, 0)]);
        let g = graph_for(&world, &[1, 2]);
        let winner = (RobotId(1), RobotState::new(30.0, 0.0));

        // Seven diameters out at full speed, the post-throttle stopping point
        // is 28.5, clear of the section edge at 29: throttle.
        let s: JointState = [winner, (RobotId(2), RobotState::new(23.0, 0.5))].into();
        let law = control_law(&s, &g, &world);
        assert_eq!(law[&RobotId(2)], 0.025);
        assert_eq!(law[&RobotId(1)], 0.025); // no one to yield to

        // One diameter closer the stopping point is 29.5, inside: brake.
        let s: JointState = [winner, (RobotId(2), RobotState::new(24.0, 0.5))].into();
        let law = control_law(&s, &g, &world);
        assert_eq!(law[&RobotId(2)], -0.025);
    }

    #[test]
    fn lone_robot_crosses_and_flow_ends() {
        let world = crossing_world(&[(7, 0)]);
        let g = graph_for(&world, &[7]);
        let s: JointState = [(RobotId(7), RobotState::new(21.0, 0.0))].into();
        let flows = closed_loop_flow(&s, &g, &world, 890).unwrap();
        let traj = &flows[&RobotId(7)];
        assert!(traj.end().x > 39.0);
        assert!(traj.state_at(1e4).x > traj.end().x); // held throttle keeps receding
    }

    #[test]
    fn cap_exceeded_is_reported() {
        let world = crossing_world(&[(7, 0)]);
        let g = graph_for(&world, &[7]);
        let s: JointState = [(RobotId(7), RobotState::new(21.0, 0.0))].into();
        let err = closed_loop_flow(&s, &g, &world, 3).unwrap_err();
        assert_eq!(err.cap, 3);
        assert_eq!(err.live, 1);
    }

    #[test]
    fn loser_yields_then_both_cross() {
        let world = crossing_world(&[(1, 0), (2, 1)]);
        let g = graph_for(&world, &[1, 2]);
        let s: JointState = [
            (RobotId(1), RobotState::new(22.0, 0.3)),
            (RobotId(2), RobotState::new(22.0, 0.3)),
        ]
        .into();
        assert!(is_brake_safe(&s, &g, &world));
        let flows = closed_loop_flow(&s, &g, &world, 890).unwrap();
        let t1 = &flows[&RobotId(1)];
        let t2 = &flows[&RobotId(2)];
        let sec = match world.section_between(RobotId(1), RobotId(2)) {
            PairSection::Crossing(c) => c,
            _ => unreachable!(),
        };
        let d = world.footprint().diameter;
        let mut braked = false;
        for k in 0..t1.slots() {
            for j in 0..=16 {
                let t = k as f64 + j as f64 / 16.0;
                let q = sec.sq_distance(t1.state_at(t).x, t2.state_at(t).x);
                assert!(q >= d * d, "collision at t = {t}");
            }
            if t2.boundary_state(k + 1).v < t2.boundary_state(k).v {
                braked = true;
            }
        }
        assert!(braked, "equal start on crossing paths must make the loser yield");
        assert!(t1.end().x > 39.0);
        assert!(t2.end().x > 39.0);
    }

    // ---- properties -------------------------------------------------------

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// From any brake-safe, conflict-free start, the closed loop keeps
        /// every slot boundary brake safe and conflict free.
        #[test]
        fn pt_law_preserves_brake_safety(
            x1 in 15.0_f64..35.0,
            v1 in 0.0_f64..=0.5,
            x2 in 15.0_f64..35.0,
            v2 in 0.0_f64..=0.5,
        ) {
            let world = crossing_world(&[(1, 0), (2, 1)]);
            let g = graph_for(&world, &[1, 2]);
            let mut s: JointState = [
                (RobotId(1), RobotState::new(x1, v1)),
                (RobotId(2), RobotState::new(x2, v2)),
            ]
            .into();
            prop_assume!(is_brake_safe(&s, &g, &world));
            prop_assume!(config_free(&s, &g, &world));
            for _ in 0..120 {
                let law = control_law(&s, &g, &world);
                for (r, u) in law {
                    let kin = world.robot(r).kin;
                    s.insert(r, advance(s[&r], u, &kin, 1.0));
                }
                prop_assert!(is_brake_safe(&s, &g, &world));
                prop_assert!(config_free(&s, &g, &world));
            }
        }

        /// Brake safety also survives robots braking *instead of* obeying the
        /// law (unexpected perturbations are compliant controls).
        #[test]
        fn pt_forced_braking_preserves_brake_safety(
            x1 in 15.0_f64..35.0,
            x2 in 15.0_f64..35.0,
            brake_mask in proptest::collection::vec(0u8..4, 60),
        ) {
            let world = crossing_world(&[(1, 0), (2, 1)]);
            let g = graph_for(&world, &[1, 2]);
            let mut s: JointState = [
                (RobotId(1), RobotState::new(x1, 0.4)),
                (RobotId(2), RobotState::new(x2, 0.4)),
            ]
            .into();
            prop_assume!(is_brake_safe(&s, &g, &world));
            prop_assume!(config_free(&s, &g, &world));
            for mask in brake_mask {
                let law = control_law(&s, &g, &world);
                for (i, (r, u)) in law.into_iter().enumerate() {
                    let kin = world.robot(r).kin;
                    let u = if mask & (1 << i) != 0 { kin.u_min } else { u };
                    s.insert(r, advance(s[&r], u, &kin, 1.0));
                }
                prop_assert!(is_brake_safe(&s, &g, &world));
                prop_assert!(config_free(&s, &g, &world));
            }
        }
    }
}
