//! Node motion: the three mobility models, exact position queries over
//! piecewise-linear paths, NS2 trace conversion and the link-change metric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NodeId;

mod manhattan;
mod ns2;
mod rpgm;
mod rwp;

pub use manhattan::{generate_manhattan, ManhattanParams};
pub use ns2::{export_ns2, import_ns2};
pub use rpgm::{generate_rpgm, generate_rpgm_layout, RpgmLayout, RpgmParams};
pub use rwp::{generate_rwp, RwpParams};

/// Slack used when checking that a query time lies inside the path horizon.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MobilityError {
    #[error("invalid mobility parameters: {0}")]
    InvalidParams(String),
    #[error("time {t} outside path horizon [0, {duration}]")]
    OutOfRangeTime { t: f64, duration: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(self, to: Point, f: f64) -> Point {
        Point::new(self.x + (to.x - self.x) * f, self.y + (to.y - self.y) * f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Default for Area {
    fn default() -> Self {
        Area { width: 1000.0, height: 700.0 }
    }
}

impl Area {
    pub fn validate(&self) -> Result<(), MobilityError> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(MobilityError::InvalidParams(format!(
                "area must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p.x >= -tol && p.y >= -tol && p.x <= self.width + tol && p.y <= self.height + tol
    }
}

/// One leg of motion: travel in a straight line from `start_pos` to
/// `dest_pos` at `speed`, then hold still for `pause_after` seconds.
///
/// A leg with `start_pos == dest_pos` is a pure pause.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointSegment {
    pub start_time: f64,
    pub start_pos: Point,
    pub dest_pos: Point,
    pub speed: f64,
    pub pause_after: f64,
}

impl WaypointSegment {
    pub fn stationary(start_time: f64, at: Point, pause: f64) -> Self {
        WaypointSegment { start_time, start_pos: at, dest_pos: at, speed: 0.0, pause_after: pause }
    }

    pub fn travel_time(&self) -> f64 {
        let d = self.start_pos.dist(self.dest_pos);
        if d == 0.0 || self.speed <= 0.0 {
            0.0
        } else {
            d / self.speed
        }
    }

    pub fn arrival_time(&self) -> f64 {
        self.start_time + self.travel_time()
    }

    pub fn end_time(&self) -> f64 {
        self.arrival_time() + self.pause_after
    }

    fn position(&self, t: f64) -> Point {
        let travel = self.travel_time();
        let dt = t - self.start_time;
        if travel == 0.0 || dt >= travel {
            self.dest_pos
        } else if dt <= 0.0 {
            self.start_pos
        } else {
            self.start_pos.lerp(self.dest_pos, dt / travel)
        }
    }

    fn speed_at(&self, t: f64) -> f64 {
        let dt = t - self.start_time;
        if dt >= 0.0 && dt < self.travel_time() {
            self.speed
        } else {
            0.0
        }
    }
}

/// Piecewise-linear motion of one node over `[0, duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityPath {
    pub node: NodeId,
    pub duration: f64,
    pub segments: Vec<WaypointSegment>,
}

impl MobilityPath {
    pub fn stationary(node: NodeId, at: Point, duration: f64) -> Self {
        MobilityPath { node, duration, segments: vec![WaypointSegment::stationary(0.0, at, duration)] }
    }

    fn segment_at(&self, t: f64) -> &WaypointSegment {
        let idx = self.segments.partition_point(|s| s.start_time <= t);
        &self.segments[idx.saturating_sub(1)]
    }

    /// Exact interpolated position; pauses report the leg's destination.
    pub fn position(&self, t: f64) -> Result<Point, MobilityError> {
        if !(t >= -TIME_EPS && t <= self.duration + TIME_EPS) {
            return Err(MobilityError::OutOfRangeTime { t, duration: self.duration });
        }
        Ok(self.position_clamped(t))
    }

    /// Like [`position`](Self::position) but clamps `t` into the horizon.
    pub fn position_clamped(&self, t: f64) -> Point {
        self.segment_at(t.clamp(0.0, self.duration)).position(t)
    }

    /// Instantaneous speed (0 while pausing).
    pub fn speed_at(&self, t: f64) -> f64 {
        self.segment_at(t).speed_at(t)
    }
}

/// Count of link up/down transitions among all unordered node pairs, sampling
/// positions every `sample_dt` seconds over the common horizon.
pub fn link_changes(paths: &[MobilityPath], range: f64, sample_dt: f64) -> u64 {
    assert!(sample_dt > 0.0, "sample_dt must be positive");
    let duration = paths.iter().map(|p| p.duration).fold(f64::INFINITY, f64::min);
    if paths.len() < 2 || !duration.is_finite() {
        return 0;
    }
    let steps = (duration / sample_dt + 1e-9).floor() as usize;
    let n = paths.len();
    let mut prev: Option<Vec<bool>> = None;
    let mut pos = vec![Point::default(); n];
    let mut changes = 0;
    for k in 0..=steps {
        let t = k as f64 * sample_dt;
        for (p, path) in pos.iter_mut().zip(paths) {
            *p = path.position_clamped(t);
        }
        let mut linked = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                linked.push(pos[i].dist(pos[j]) <= range);
            }
        }
        if let Some(prev) = &prev {
            changes += prev.iter().zip(&linked).filter(|(a, b)| a != b).count() as u64;
        }
        prev = Some(linked);
    }
    changes
}

pub(crate) fn check_speed_range(v_min: f64, v_max: f64, what: &str) -> Result<(), MobilityError> {
    if !(v_min >= 0.0 && v_min <= v_max && v_max.is_finite()) {
        return Err(MobilityError::InvalidParams(format!(
            "{what}: need 0 <= v_min <= v_max, got [{v_min}, {v_max}]"
        )));
    }
    if v_max > 0.0 && v_min == 0.0 {
        return Err(MobilityError::InvalidParams(format!(
            "{what}: v_min must be positive when v_max > 0"
        )));
    }
    Ok(())
}

pub(crate) fn check_duration(duration: f64) -> Result<(), MobilityError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(MobilityError::InvalidParams(format!("duration must be positive, got {duration}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_leg() -> MobilityPath {
        MobilityPath {
            node: NodeId(0),
            duration: 10.0,
            segments: vec![WaypointSegment {
                start_time: 0.0,
                start_pos: Point::new(0.0, 0.0),
                dest_pos: Point::new(3.0, 4.0),
                speed: 1.0,
                pause_after: 5.0,
            }],
        }
    }

    #[test]
    fn straight_line_kinematics() {
        let p = one_leg();
        assert_eq!(p.position(0.0).unwrap(), Point::new(0.0, 0.0));
        let mid = p.position(2.5).unwrap();
        assert!((mid.x - 1.5).abs() < 1e-12 && (mid.y - 2.0).abs() < 1e-12);
        assert_eq!(p.segments[0].arrival_time(), 5.0);
        assert_eq!(p.position(7.0).unwrap(), Point::new(3.0, 4.0));
        assert_eq!(p.speed_at(1.0), 1.0);
        assert_eq!(p.speed_at(6.0), 0.0);
    }

    #[test]
    fn continuity_at_segment_boundary() {
        let mut p = one_leg();
        p.segments[0].pause_after = 0.0;
        p.segments.push(WaypointSegment {
            start_time: 5.0,
            start_pos: Point::new(3.0, 4.0),
            dest_pos: Point::new(3.0, 9.0),
            speed: 1.0,
            pause_after: 0.0,
        });
        let before = p.segments[0].position(5.0);
        let after = p.position(5.0).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn out_of_range_time() {
        let p = one_leg();
        assert!(matches!(p.position(-1.0), Err(MobilityError::OutOfRangeTime { .. })));
        assert!(matches!(p.position(10.5), Err(MobilityError::OutOfRangeTime { .. })));
        assert!(p.position(10.0).is_ok());
    }

    #[test]
    fn static_pair_has_no_link_changes() {
        let paths = vec![
            MobilityPath::stationary(NodeId(0), Point::new(0.0, 0.0), 50.0),
            MobilityPath::stationary(NodeId(1), Point::new(100.0, 0.0), 50.0),
        ];
        assert_eq!(link_changes(&paths, 150.0, 0.1), 0);
    }

    #[test]
    fn crossing_pair_counts_up_and_down() {
        // node 1 passes node 0 from 400 m to the left to 400 m to the right
        let a = MobilityPath::stationary(NodeId(0), Point::new(500.0, 350.0), 100.0);
        let b = MobilityPath {
            node: NodeId(1),
            duration: 100.0,
            segments: vec![WaypointSegment {
                start_time: 0.0,
                start_pos: Point::new(100.0, 350.0),
                dest_pos: Point::new(900.0, 350.0),
                speed: 10.0,
                pause_after: 20.0,
            }],
        };
        assert_eq!(link_changes(&[a, b], 150.0, 0.1), 2);
    }
}
