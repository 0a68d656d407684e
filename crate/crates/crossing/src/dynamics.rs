//! Saturated double-integrator dynamics along a path.
//!
//! Each robot's curvilinear state is (position, velocity) with velocity
//! confined to [0, v_max]. Controls are piecewise constant on unit time slots;
//! the velocity derivative is the applied control except that braking at rest
//! and throttling at full speed are ignored. Integration is exact: a slot is
//! split analytically at the instant the velocity saturates.

/// Per-robot control and velocity bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinodynamics {
    /// Maximum velocity, > 0.
    pub v_max: f64,
    /// Maximum braking control, < 0.
    pub u_min: f64,
    /// Maximum throttle control, > 0.
    pub u_max: f64,
}

impl Kinodynamics {
    pub fn new(v_max: f64, u_min: f64, u_max: f64) -> Result<Self, DynamicsError> {
        let k = Kinodynamics { v_max, u_min, u_max };
        if !(v_max.is_finite() && u_min.is_finite() && u_max.is_finite())
            || v_max <= 0.0
            || u_min >= 0.0
            || u_max <= 0.0
        {
            return Err(DynamicsError::BadKinodynamics(k));
        }
        Ok(k)
    }

    /// Distance travelled when braking from velocity `v` to rest.
    pub fn braking_distance(&self, v: f64) -> f64 {
        v * v / (2.0 * -self.u_min)
    }

    /// Time to brake from velocity `v` to rest.
    pub fn braking_time(&self, v: f64) -> f64 {
        v / -self.u_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub x: f64,
    pub v: f64,
}

impl RobotState {
    pub fn new(x: f64, v: f64) -> Self {
        RobotState { x, v }
    }

    /// Velocity must lie in [0, v_max] up to a 1e-12 tolerance.
    pub fn is_valid(&self, kin: &Kinodynamics) -> bool {
        self.x.is_finite() && self.v >= -1e-12 && self.v <= kin.v_max + 1e-12
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("invalid kinodynamics {0:?}: need v_max > 0 and u_min < 0 < u_max")]
    BadKinodynamics(Kinodynamics),
    #[error("control {u} outside [{u_min}, {u_max}]")]
    ControlOutOfRange { u: f64, u_min: f64, u_max: f64 },
    #[error("slot duration {dt} outside [0, 1]")]
    BadDuration { dt: f64 },
    #[error("state ({x}, {v}) violates velocity bounds [0, {v_max}]")]
    BadState { x: f64, v: f64, v_max: f64 },
}

/// Exact state after holding control `u` for duration `dt >= 0` (unbounded).
/// The velocity ramp is integrated in closed form and the trajectory is split
/// at the instant the velocity reaches a bound, after which it stays there.
pub fn advance(s: RobotState, u: f64, kin: &Kinodynamics, dt: f64) -> RobotState {
    let v = s.v.clamp(0.0, kin.v_max);
    if u > 0.0 {
        if v >= kin.v_max {
            return RobotState::new(s.x + kin.v_max * dt, kin.v_max);
        }
        let t_sat = (kin.v_max - v) / u;
        if dt <= t_sat {
            return RobotState::new(s.x + v * dt + 0.5 * u * dt * dt, v + u * dt);
        }
        let x_sat = s.x + v * t_sat + 0.5 * u * t_sat * t_sat;
        RobotState::new(x_sat + kin.v_max * (dt - t_sat), kin.v_max)
    } else if u < 0.0 {
        if v <= 0.0 {
            return RobotState::new(s.x, 0.0);
        }
        let t_rest = v / -u;
        if dt <= t_rest {
            return RobotState::new(s.x + v * dt + 0.5 * u * dt * dt, v + u * dt);
        }
        // Position at rest; v*t_rest/2 is the triangle area under the ramp.
        RobotState::new(s.x + 0.5 * v * t_rest, 0.0)
    } else {
        RobotState::new(s.x + v * dt, v)
    }
}

/// One control slot (or a prefix of one): contract-checked `advance`.
pub fn step(
    s: RobotState,
    u: f64,
    kin: &Kinodynamics,
    dt: f64,
) -> Result<RobotState, DynamicsError> {
    if !(u.is_finite() && u >= kin.u_min - 1e-12 && u <= kin.u_max + 1e-12) {
        return Err(DynamicsError::ControlOutOfRange { u, u_min: kin.u_min, u_max: kin.u_max });
    }
    if !(dt.is_finite() && (0.0..=1.0).contains(&dt)) {
        return Err(DynamicsError::BadDuration { dt });
    }
    if !s.is_valid(kin) {
        return Err(DynamicsError::BadState { x: s.x, v: s.v, v_max: kin.v_max });
    }
    Ok(advance(s, u, kin, dt))
}

/// Piecewise-constant control, one value per slot; the final value is held
/// beyond the end of the sequence (constant throttle or braking extend
/// naturally to an infinite horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    values: Vec<f64>,
}

impl ControlSequence {
    pub fn new(values: Vec<f64>) -> Result<Self, DynamicsError> {
        if values.is_empty() {
            return Err(DynamicsError::BadDuration { dt: f64::NAN });
        }
        Ok(ControlSequence { values })
    }

    pub fn constant(u: f64) -> Self {
        ControlSequence { values: vec![u] }
    }

    /// Full throttle for one slot, then brake forever: the most a robot can
    /// commit to before it is able to stop.
    pub fn impulse(kin: &Kinodynamics) -> Self {
        ControlSequence { values: vec![kin.u_max, kin.u_min] }
    }

    pub fn brake(kin: &Kinodynamics) -> Self {
        ControlSequence { values: vec![kin.u_min] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Control applied during slot `k`, with the last value held beyond.
    pub fn value_at(&self, k: usize) -> f64 {
        *self.values.get(k).unwrap_or_else(|| self.values.last().unwrap())
    }

    /// Sequence seen from `k` slots later.
    pub fn shifted(&self, k: usize) -> ControlSequence {
        if k >= self.values.len() {
            ControlSequence::constant(*self.values.last().unwrap())
        } else {
            ControlSequence { values: self.values[k..].to_vec() }
        }
    }
}

/// Slot-wise partial order on states: both coordinates no larger.
pub fn leq_state(a: &RobotState, b: &RobotState) -> bool {
    a.x <= b.x && a.v <= b.v
}

/// Slot-wise partial order on control sequences including their held tails.
pub fn leq_control(a: &ControlSequence, b: &ControlSequence) -> bool {
    let n = a.len().max(b.len());
    (0..n).all(|k| a.value_at(k) <= b.value_at(k))
}

/// Exact flow of a control sequence: boundary states are precomputed and any
/// intermediate time is evaluated in closed form, including times past the
/// last slot (the final control is held).
#[derive(Debug, Clone)]
pub struct Trajectory {
    kin: Kinodynamics,
    controls: ControlSequence,
    /// States at slot boundaries 0..=len.
    boundaries: Vec<RobotState>,
}

/// Integrates `ctrl` from `s`; boundary states are exact slot compositions.
pub fn flow(s: RobotState, ctrl: &ControlSequence, kin: &Kinodynamics) -> Trajectory {
    let mut boundaries = Vec::with_capacity(ctrl.len() + 1);
    boundaries.push(s);
    let mut cur = s;
    for k in 0..ctrl.len() {
        cur = advance(cur, ctrl.value_at(k), kin, 1.0);
        boundaries.push(cur);
    }
    Trajectory { kin: *kin, controls: ctrl.clone(), boundaries }
}

impl Trajectory {
    pub fn start(&self) -> RobotState {
        self.boundaries[0]
    }

    /// Number of slots integrated; queries past this hold the last control.
    pub fn slots(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// State at the last integrated boundary.
    pub fn end(&self) -> RobotState {
        *self.boundaries.last().unwrap()
    }

    pub fn kin(&self) -> &Kinodynamics {
        &self.kin
    }

    /// State at any time t >= 0. Boundary times return the precomputed state
    /// bit for bit, so queries compose exactly with slot-by-slot stepping.
    pub fn state_at(&self, t: f64) -> RobotState {
        debug_assert!(t >= 0.0);
        let last = self.boundaries.len() - 1;
        if t >= last as f64 {
            let tail = self.controls.value_at(last);
            return advance(self.boundaries[last], tail, &self.kin, t - last as f64);
        }
        let k = t.floor() as usize;
        let frac = t - k as f64;
        if frac == 0.0 {
            return self.boundaries[k];
        }
        advance(self.boundaries[k], self.controls.value_at(k), &self.kin, frac)
    }

    /// State at an integral slot boundary.
    pub fn boundary_state(&self, k: usize) -> RobotState {
        if k < self.boundaries.len() {
            self.boundaries[k]
        } else {
            self.state_at(k as f64)
        }
    }

    /// Supremum of the position over all times (positions never decrease).
    /// Infinite when the held tail keeps the robot moving.
    pub fn sup_position(&self) -> f64 {
        let last = self.boundaries.len() - 1;
        let end = self.boundaries[last];
        let tail = self.controls.value_at(last);
        if tail < 0.0 {
            end.x + self.kin.braking_distance(end.v)
        } else if tail == 0.0 && end.v == 0.0 {
            end.x
        } else {
            f64::INFINITY
        }
    }
}

/// Furthest position the robot can reach if it throttles for one slot and then
/// brakes forever: the switching criterion for requesting entry.
pub fn x_stop(s: RobotState, kin: &Kinodynamics) -> f64 {
    let after = advance(s, kin.u_max, kin, 1.0);
    after.x + kin.braking_distance(after.v)
}

/// Time under constant full throttle for the position to reach `target`
/// (zero if already there). Splits at velocity saturation, like `advance`.
pub fn time_to_reach(s: RobotState, kin: &Kinodynamics, target: f64) -> f64 {
    if s.x >= target {
        return 0.0;
    }
    let delta = target - s.x;
    let t_sat = (kin.v_max - s.v) / kin.u_max;
    let x_sat = s.v * t_sat + 0.5 * kin.u_max * t_sat * t_sat;
    if delta <= x_sat {
        (-s.v + (s.v * s.v + 2.0 * kin.u_max * delta).sqrt()) / kin.u_max
    } else {
        t_sat + (delta - x_sat) / kin.v_max
    }
}
