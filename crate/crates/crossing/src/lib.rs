//! Coordination of disc robots crossing an intersection on fixed paths.
//!
//! Robots move along straight paths through a shared area. A central
//! controller admits them into the area by assigning each newcomer the lowest
//! priority, and a decentralized control law then keeps every robot's motion
//! compatible with the priorities: a robot throttles unless doing so could
//! force it into a conflict with a higher-priority robot, in which case it
//! brakes. The construction keeps the fleet collision-free and deadlock-free
//! under bounded speed and acceleration, including when robots are forced to
//! brake unexpectedly.
//!
//! Module layout:
//! - [`geometry`]: paths, conflict sections between path pairs, and membership
//!   tests for (shifted) conflict sets in the coordination space.
//! - [`dynamics`]: saturated double-integrator robots, exact slot integration,
//!   control sequences and trajectories.
//! - [`priority`]: priority graphs, the world model, and brake-safety
//!   predicates over joint states.
//! - [`control`]: the priority-preserving control law and closed-loop flows.
//! - [`controller`]: entry management — requests, virtual-graph checks,
//!   predictions, and pruning of exited robots.
//! - [`sim`]: scenario configuration, the slot-stepped simulation loop,
//!   runtime monitors, trace records, and metrics.
//!
//! The `crossing` binary wraps [`sim`] behind `run`, `verify`, and
//! `summarize` subcommands.

pub mod control;
pub mod controller;
pub mod dynamics;
pub mod geometry;
pub mod priority;
pub mod sim;
