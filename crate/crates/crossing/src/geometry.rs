//! Path geometry and pairwise conflict sections.
//!
//! Robots move along fixed straight paths and are abstracted as discs with a
//! common diameter. For a pair of robots the set of curvilinear coordinate
//! pairs that put their centers closer than the footprint diameter is the
//! pair's *conflict section*. Priorities shift this section: the robot with
//! priority (the winner) may be anywhere at or past a colliding position,
//! the other robot (the loser) anywhere at or before one. Membership in the
//! shifted section is what the safety predicates and the control law test.

use serde::{Deserialize, Serialize};

/// Conservative inflation applied to membership thresholds by safety checks.
pub const EPS_GEOM: f64 = 1e-9;

/// Two path directions with |cross product| below this are treated as parallel.
const PARALLEL_TOL: f64 = 1e-10;

/// Plane vector used for path layouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z component of the 3-D cross product; zero iff the vectors are parallel.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathId(pub u32);

impl std::fmt::Display for PathId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("path {path}: direction must be a nonzero finite vector")]
    BadDirection { path: PathId },
    #[error("path {path}: origin and length must be finite, length > 0")]
    BadExtent { path: PathId },
    #[error("path {path}: require 0 <= x_entry < x_exit <= length (got {x_entry}..{x_exit})")]
    BadEntryExit { path: PathId, x_entry: f64, x_exit: f64 },
    #[error(
        "paths {a} and {b} are parallel with line distance {distance} < footprint diameter \
         {footprint}; robots on them would overlap outside any crossing"
    )]
    ParallelPathsTooClose { a: PathId, b: PathId, distance: f64, footprint: f64 },
    #[error("footprint diameter must be positive and finite")]
    BadFootprint,
}

/// A straight path: `point_at(x) = origin + x * direction` with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    pub id: PathId,
    pub origin: Vec2,
    pub direction: Vec2,
    pub length: f64,
    /// Control-area entry coordinate; robots wait before this line until accepted.
    pub x_entry: f64,
    /// Control-area exit coordinate; robots past it no longer constrain anyone.
    pub x_exit: f64,
}

impl PathSpec {
    /// Builds a path, normalizing `direction`.
    pub fn new(
        id: PathId,
        origin: Vec2,
        direction: Vec2,
        length: f64,
        x_entry: f64,
        x_exit: f64,
    ) -> Result<Self, GeometryError> {
        let n = direction.norm();
        if !direction.is_finite() || n < 1e-12 {
            return Err(GeometryError::BadDirection { path: id });
        }
        if !origin.is_finite() || !length.is_finite() || length <= 0.0 {
            return Err(GeometryError::BadExtent { path: id });
        }
        let spec = PathSpec {
            id,
            origin,
            direction: direction.scale(1.0 / n),
            length,
            x_entry,
            x_exit,
        };
        spec.validate_entry_exit()?;
        Ok(spec)
    }

    pub fn validate_entry_exit(&self) -> Result<(), GeometryError> {
        if !(self.x_entry.is_finite()
            && self.x_exit.is_finite()
            && 0.0 <= self.x_entry
            && self.x_entry < self.x_exit
            && self.x_exit <= self.length)
        {
            return Err(GeometryError::BadEntryExit {
                path: self.id,
                x_entry: self.x_entry,
                x_exit: self.x_exit,
            });
        }
        Ok(())
    }

    /// Plane point at curvilinear coordinate `x`. Coordinates outside
    /// `[0, length]` extrapolate along the same line; queued robots sit at
    /// negative coordinates.
    pub fn point_at(&self, x: f64) -> Vec2 {
        self.origin.add(self.direction.scale(x))
    }
}

/// Common disc diameter of all robots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub diameter: f64,
}

impl Footprint {
    pub fn new(diameter: f64) -> Result<Self, GeometryError> {
        if !diameter.is_finite() || diameter <= 0.0 {
            return Err(GeometryError::BadFootprint);
        }
        Ok(Footprint { diameter })
    }
}

/// Conflict section of a robot pair in the (x_first, x_second) coordinate plane.
///
/// For crossing paths the squared center distance is the quadratic
/// `Q(u, v) = u^2 - 2*gamma*u*v + v^2` in coordinates centered on the crossing
/// point, and the section is the open ellipse `Q < d^2`. For robots sharing a
/// path it is the open band `|x_first - x_second| < d`. Parallel distinct paths
/// at line distance >= d can never conflict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairSection {
    Crossing(CrossingSection),
    SamePath { diameter: f64 },
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingSection {
    /// Curvilinear coordinate of the crossing point on the first path.
    pub center_first: f64,
    /// Curvilinear coordinate of the crossing point on the second path.
    pub center_second: f64,
    /// Cosine of the angle between the two directions.
    pub gamma: f64,
    /// Footprint diameter (threshold on center distance).
    pub diameter: f64,
}

impl CrossingSection {
    /// Squared center distance for coordinates (x_first, x_second).
    pub fn sq_distance(&self, x_first: f64, x_second: f64) -> f64 {
        let u = x_first - self.center_first;
        let v = x_second - self.center_second;
        u * u - 2.0 * self.gamma * u * v + v * v
    }

    /// Half-width of the section's bounding box along either axis, for a
    /// membership threshold of `diameter + margin`.
    pub fn extent(&self, margin: f64) -> f64 {
        (self.diameter + margin) / (1.0 - self.gamma * self.gamma).sqrt()
    }

    /// Minimum of Q over the quadrant `{first >= x_first, second <= x_second}`:
    /// the squared distance certificate for shifted membership when the first
    /// axis is the winner.
    pub fn quadrant_min_sq(&self, x_first: f64, x_second: f64) -> f64 {
        let g = self.gamma;
        let u = x_first - self.center_first;
        let v = x_second - self.center_second;
        // Minimize f(s,t) = s^2 - 2g*s*t + t^2 over s >= u, t <= v. The
        // optimum is the unconstrained minimum, the minimum on one of the two
        // edge lines, or the corner; infeasible candidates are skipped.
        if u <= 0.0 && v >= 0.0 {
            return 0.0;
        }
        let mut best = u * u - 2.0 * g * u * v + v * v;
        let one_m_g2 = 1.0 - g * g;
        if g * u <= v {
            best = best.min(u * u * one_m_g2);
        }
        if g * v >= u {
            best = best.min(v * v * one_m_g2);
        }
        best
    }
}

impl PairSection {
    /// Same section with the two axes exchanged.
    pub fn swapped(self) -> PairSection {
        match self {
            PairSection::Crossing(c) => PairSection::Crossing(CrossingSection {
                center_first: c.center_second,
                center_second: c.center_first,
                gamma: c.gamma,
                diameter: c.diameter,
            }),
            other => other,
        }
    }

    /// True iff no coordinate pair is ever in conflict.
    pub fn is_empty(&self) -> bool {
        matches!(self, PairSection::Disjoint)
    }
}

/// Derives the conflict section for robots on paths `a` and `b` (axis order
/// `(a, b)`). Distinct parallel paths closer than the footprint are rejected:
/// robots on them would overlap along an unbounded set, which the coordination
/// scheme does not support.
pub fn pair_section(
    a: &PathSpec,
    b: &PathSpec,
    footprint: &Footprint,
) -> Result<PairSection, GeometryError> {
    let d = footprint.diameter;
    if a.id == b.id {
        return Ok(PairSection::SamePath { diameter: d });
    }
    let cross = a.direction.cross(b.direction);
    let w = b.origin.sub(a.origin);
    if cross.abs() <= PARALLEL_TOL {
        // Distance from b's origin to the line through a.
        let distance = w.cross(a.direction).abs();
        if distance < d {
            return Err(GeometryError::ParallelPathsTooClose {
                a: a.id,
                b: b.id,
                distance,
                footprint: d,
            });
        }
        return Ok(PairSection::Disjoint);
    }
    // Line intersection: a.origin + ta*da = b.origin + tb*db.
    let ta = w.cross(b.direction) / cross;
    let tb = w.cross(a.direction) / cross;
    Ok(PairSection::Crossing(CrossingSection {
        center_first: ta,
        center_second: tb,
        gamma: a.direction.dot(b.direction),
        diameter: d,
    }))
}

/// Open-set membership: are robots at (x_first, x_second) in collision?
pub fn in_obstacle(sec: &PairSection, x_first: f64, x_second: f64) -> bool {
    in_obstacle_inflated(sec, x_first, x_second, 0.0, 0.0)
}

/// Membership with the threshold inflated by `margin` (distance units) and
/// `eps` (squared units for crossing sections, distance units for same-path).
/// Safety checks pass a positive margin to stay conservative; monitors pass a
/// small negative margin so that only genuine violations are flagged.
pub fn in_obstacle_inflated(
    sec: &PairSection,
    x_first: f64,
    x_second: f64,
    margin: f64,
    eps: f64,
) -> bool {
    match sec {
        PairSection::Crossing(c) => {
            let r = c.diameter + margin;
            c.sq_distance(x_first, x_second) < r * r + eps
        }
        PairSection::SamePath { diameter } => {
            (x_first - x_second).abs() < diameter + margin + eps
        }
        PairSection::Disjoint => false,
    }
}

/// Shifted-section membership. The section must be oriented with the winner on
/// the first axis: the configuration is inside iff some conflict point `p`
/// has `p_winner >= x_winner` and `p_loser <= x_loser`, i.e. iff moving the
/// winner forward and the loser backward could reach a collision.
pub fn in_shifted_obstacle(sec: &PairSection, x_winner: f64, x_loser: f64) -> bool {
    in_shifted_obstacle_inflated(sec, x_winner, x_loser, 0.0, 0.0)
}

/// Shifted membership with conservative inflation; see `in_obstacle_inflated`.
pub fn in_shifted_obstacle_inflated(
    sec: &PairSection,
    x_winner: f64,
    x_loser: f64,
    margin: f64,
    eps: f64,
) -> bool {
    match sec {
        PairSection::Crossing(c) => {
            let r = c.diameter + margin;
            c.quadrant_min_sq(x_winner, x_loser) < r * r + eps
        }
        // On a shared path the loser must stay a full diameter behind the
        // winner; any translation bringing them closer is forbidden.
        PairSection::SamePath { diameter } => {
            x_loser - x_winner > -(diameter + margin + eps)
        }
        PairSection::Disjoint => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn footprint() -> Footprint {
        Footprint::new(1.0).unwrap()
    }

    fn path(id: u32, origin: (f64, f64), dir: (f64, f64)) -> PathSpec {
        PathSpec::new(
            PathId(id),
            Vec2::new(origin.0, origin.1),
            Vec2::new(dir.0, dir.1),
            60.0,
            1.0,
            59.0,
        )
        .unwrap()
    }

    /// Perpendicular paths crossing at curvilinear coordinates (10, 10).
    fn perp_section() -> PairSection {
        let a = path(0, (0.0, 0.0), (1.0, 0.0));
        let b = path(1, (10.0, -10.0), (0.0, 1.0));
        pair_section(&a, &b, &footprint()).unwrap()
    }

    /// Skewed crossing (gamma = cos 60deg = 0.5) at (10, 10).
    fn skew_section() -> PairSection {
        let a = path(0, (0.0, 0.0), (1.0, 0.0));
        let c60 = 0.5_f64;
        let s60 = (1.0 - c60 * c60).sqrt();
        let b = path(
            1,
            (10.0 - 10.0 * c60, -10.0 * s60),
            (c60, s60),
        );
        pair_section(&a, &b, &footprint()).unwrap()
    }

    // ---- oracle -----------------------------------------------------------

    /// Brute-force shifted membership: scan translations (a, b) >= 0 applied
    /// to (winner + a, loser - b) over the section's reachable window, with
    /// local refinement so the scan resolution does not decide borderline
    /// cases. Written independently of the quadrant case analysis.
    pub(crate) fn oracle_shifted(sec: &PairSection, x_w: f64, x_l: f64) -> bool {
        match sec {
            PairSection::Disjoint => false,
            PairSection::SamePath { diameter } => {
                // Witness needs |x_w + a - (x_l - b)| < d for some a, b >= 0;
                // possible iff the gap is not already >= d in front.
                let span = (x_w - x_l).abs() + 2.0 * diameter + 1.0;
                let n = 4000;
                for i in 0..=n {
                    let a = span * i as f64 / n as f64;
                    // best b for this a is the one closing the gap; scanning b
                    // too keeps the oracle dumb.
                    for j in 0..=40 {
                        let b = span * j as f64 / 40.0;
                        if ((x_w + a) - (x_l - b)).abs() < *diameter {
                            return true;
                        }
                    }
                }
                false
            }
            PairSection::Crossing(c) => {
                // The witness p = (x_w + a, x_l - b) must lie in the section,
                // whose bounding box has half-width extent(0).
                let ext = c.extent(0.0);
                let a_hi = c.center_first + ext - x_w;
                let b_hi = x_l - (c.center_second - ext);
                if a_hi < 0.0 || b_hi < 0.0 {
                    return false;
                }
                let d2 = c.diameter * c.diameter;
                let mut best = f64::INFINITY;
                let (mut a0, mut a1) = (0.0_f64, a_hi);
                let (mut b0, mut b1) = (0.0_f64, b_hi);
                let (mut best_a, mut best_b) = (0.0_f64, 0.0_f64);
                for _round in 0..4 {
                    let n = 48;
                    for i in 0..=n {
                        let a = a0 + (a1 - a0) * i as f64 / n as f64;
                        for j in 0..=n {
                            let b = b0 + (b1 - b0) * j as f64 / n as f64;
                            let q = c.sq_distance(x_w + a, x_l - b);
                            if q < best {
                                best = q;
                                best_a = a;
                                best_b = b;
                            }
                        }
                    }
                    let a_step = (a1 - a0) / n as f64;
                    let b_step = (b1 - b0) / n as f64;
                    a0 = (best_a - 2.0 * a_step).max(0.0);
                    a1 = (best_a + 2.0 * a_step).min(a_hi);
                    b0 = (best_b - 2.0 * b_step).max(0.0);
                    b1 = (best_b + 2.0 * b_step).min(b_hi);
                }
                best < d2
            }
        }
    }

    #[test]
    fn oracle_matches_quadrant_analysis_on_grids() {
        for sec in [perp_section(), skew_section()] {
            let mut mismatches = 0;
            for i in 0..60 {
                for j in 0..60 {
                    let xw = 10.0 + (i as f64 - 30.0) * 0.31;
                    let xl = 10.0 + (j as f64 - 30.0) * 0.31;
                    let got = in_shifted_obstacle(&sec, xw, xl);
                    if got != oracle_shifted(&sec, xw, xl) {
                        mismatches += 1;
                    }
                }
            }
            assert_eq!(mismatches, 0, "quadrant analysis disagrees with scan oracle");
        }
    }

    #[test]
    fn same_path_rule_matches_oracle() {
        let sec = PairSection::SamePath { diameter: 1.0 };
        for (xw, xl) in [(5.0, 3.0), (5.0, 4.5), (5.0, 4.0), (3.0, 5.0), (5.0, 3.99)] {
            assert_eq!(
                in_shifted_obstacle(&sec, xw, xl),
                oracle_shifted(&sec, xw, xl),
                "same-path mismatch at ({xw}, {xl})"
            );
        }
    }

    // ---- frozen examples --------------------------------------------------

    #[test]
    fn perpendicular_crossing_is_centered_disc() {
        let PairSection::Crossing(c) = perp_section() else {
            panic!("expected crossing section");
        };
        assert!((c.center_first - 10.0).abs() < 1e-12);
        assert!((c.center_second - 10.0).abs() < 1e-12);
        assert!(c.gamma.abs() < 1e-12);
        // Squared distance reduces to the sum of squared offsets.
        assert!((c.sq_distance(10.3, 9.6) - (0.09 + 0.16)).abs() < 1e-12);
    }

    #[test]
    fn shifted_membership_examples() {
        let sec = perp_section();
        // Winner behind the crossing, loser at its center: translating the
        // winner forward reaches a collision, e.g. p = (10, 9.5).
        assert!(in_shifted_obstacle(&sec, 8.0, 10.0));
        // Winner already past every conflict point: no translation works.
        assert!(!in_shifted_obstacle(&sec, 11.5, 10.0));
        // Loser short of the section: reachable by translating loser back? No:
        // translations only move the loser backward, which cannot help; the
        // witness needs p_loser <= x_loser.
        assert!(!in_shifted_obstacle(&sec, 10.0, 8.5));
        assert!(in_shifted_obstacle(&sec, 10.0, 9.5));
    }

    #[test]
    fn both_far_before_crossing_is_free_either_orientation() {
        let sec = perp_section();
        let x = 10.0 - 6.0;
        assert!(!in_shifted_obstacle(&sec, x, x));
        assert!(!in_shifted_obstacle(&sec.swapped(), x, x));
    }

    #[test]
    fn parallel_too_close_is_rejected() {
        let a = path(0, (0.0, 0.0), (1.0, 0.0));
        let b = path(1, (5.0, 0.5), (1.0, 0.0));
        let err = pair_section(&a, &b, &footprint()).unwrap_err();
        assert!(matches!(err, GeometryError::ParallelPathsTooClose { .. }));
        // Anti-parallel at the same distance is rejected too.
        let c = path(2, (5.0, 0.5), (-1.0, 0.0));
        assert!(pair_section(&a, &c, &footprint()).is_err());
    }

    #[test]
    fn parallel_far_apart_is_disjoint() {
        let a = path(0, (0.0, 0.0), (1.0, 0.0));
        let b = path(1, (5.0, 1.5), (1.0, 0.0));
        assert_eq!(pair_section(&a, &b, &footprint()).unwrap(), PairSection::Disjoint);
    }

    #[test]
    fn same_path_band_and_shift() {
        let sec = PairSection::SamePath { diameter: 1.0 };
        assert!(in_obstacle(&sec, 5.0, 4.5));
        assert!(!in_obstacle(&sec, 5.0, 4.0)); // open set: exactly d apart is safe
        // Loser more than a diameter behind the winner is out.
        assert!(!in_shifted_obstacle(&sec, 5.0, 3.9));
        assert!(in_shifted_obstacle(&sec, 5.0, 4.1));
        // Loser ahead of the winner is always inside the shifted set.
        assert!(in_shifted_obstacle(&sec, 5.0, 9.0));
    }

    #[test]
    fn point_at_extrapolates() {
        let p = path(0, (1.0, 2.0), (0.0, 2.0)); // direction normalizes to (0,1)
        let at = p.point_at(-3.0);
        assert!((at.x - 1.0).abs() < 1e-12 && (at.y - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn entry_exit_validation() {
        let err = PathSpec::new(
            PathId(0),
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            10.0,
            7.0,
            7.0,
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::BadEntryExit { .. }));
    }

    // ---- properties -------------------------------------------------------

    fn arb_section() -> impl Strategy<Value = PairSection> {
        prop_oneof![
            (0.2_f64..3.0, -0.95_f64..0.95, -20.0_f64..20.0, -20.0_f64..20.0).prop_map(
                |(d, gamma, cf, cs)| {
                    PairSection::Crossing(CrossingSection {
                        center_first: cf,
                        center_second: cs,
                        gamma,
                        diameter: d,
                    })
                }
            ),
            (0.2_f64..3.0).prop_map(|d| PairSection::SamePath { diameter: d }),
        ]
    }

    proptest! {
        /// Collision implies shifted membership for both edge orientations.
        #[test]
        fn pt_obstacle_contained_in_shifted(
            sec in arb_section(),
            xi in -30.0_f64..30.0,
            xj in -30.0_f64..30.0,
        ) {
            if in_obstacle(&sec, xi, xj) {
                prop_assert!(in_shifted_obstacle(&sec, xi, xj));
                prop_assert!(in_shifted_obstacle(&sec.swapped(), xj, xi));
            }
        }

        /// Moving the winner forward or the loser backward never enters the
        /// shifted set from outside.
        #[test]
        fn pt_shifted_monotone(
            sec in arb_section(),
            xw in -30.0_f64..30.0,
            xl in -30.0_f64..30.0,
            fwd in 0.0_f64..10.0,
            back in 0.0_f64..10.0,
        ) {
            if !in_shifted_obstacle(&sec, xw, xl) {
                prop_assert!(!in_shifted_obstacle(&sec, xw + fwd, xl - back));
            }
        }

        /// Plain membership is symmetric under axis exchange.
        #[test]
        fn pt_obstacle_symmetric(
            sec in arb_section(),
            xi in -30.0_f64..30.0,
            xj in -30.0_f64..30.0,
        ) {
            prop_assert_eq!(
                in_obstacle(&sec, xi, xj),
                in_obstacle(&sec.swapped(), xj, xi)
            );
        }

        /// The quadrant certificate never exceeds the plain squared distance
        /// and is nonnegative.
        #[test]
        fn pt_quadrant_min_bounds(
            gamma in -0.95_f64..0.95,
            u in -20.0_f64..20.0,
            v in -20.0_f64..20.0,
        ) {
            let c = CrossingSection {
                center_first: 0.0,
                center_second: 0.0,
                gamma,
                diameter: 1.0,
            };
            let qm = c.quadrant_min_sq(u, v);
            prop_assert!(qm >= 0.0);
            prop_assert!(qm <= c.sq_distance(u, v) + 1e-12);
        }
    }
}
