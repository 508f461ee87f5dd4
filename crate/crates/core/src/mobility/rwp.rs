use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_duration, check_speed_range, Area, MobilityError, MobilityPath, Point, WaypointSegment};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwpParams {
    pub v_min: f64,
    pub v_max: f64,
    pub pause: f64,
}

impl Default for RwpParams {
    fn default() -> Self {
        RwpParams { v_min: 1.0, v_max: 10.0, pause: 2.0 }
    }
}

impl RwpParams {
    pub fn validate(&self) -> Result<(), MobilityError> {
        check_speed_range(self.v_min, self.v_max, "rwp")?;
        if !(self.pause >= 0.0) {
            return Err(MobilityError::InvalidParams(format!("rwp: pause must be >= 0, got {}", self.pause)));
        }
        Ok(())
    }
}

pub(crate) fn uniform_point<R: Rng>(rng: &mut R, origin: Point, width: f64, height: f64) -> Point {
    Point::new(origin.x + rng.gen::<f64>() * width, origin.y + rng.gen::<f64>() * height)
}

pub(crate) fn uniform_speed<R: Rng>(rng: &mut R, v_min: f64, v_max: f64) -> f64 {
    if v_max > v_min {
        rng.gen_range(v_min..=v_max)
    } else {
        v_min
    }
}

/// Random waypoint motion inside the rectangle `[origin, origin + (width, height)]`.
///
/// The node starts at a uniform point and pauses first, then alternates
/// straight legs toward uniform destinations with pauses.
pub(crate) fn rwp_path<R: Rng>(
    rng: &mut R,
    node: NodeId,
    params: &RwpParams,
    origin: Point,
    width: f64,
    height: f64,
    duration: f64,
) -> MobilityPath {
    let mut pos = uniform_point(rng, origin, width, height);
    let mut segments = vec![WaypointSegment::stationary(0.0, pos, params.pause.min(duration))];
    let mut t = params.pause;
    if params.v_max <= 0.0 {
        segments[0].pause_after = duration;
        t = duration;
    }
    while t < duration {
        let dest = uniform_point(rng, origin, width, height);
        let speed = uniform_speed(rng, params.v_min, params.v_max);
        let seg = WaypointSegment { start_time: t, start_pos: pos, dest_pos: dest, speed, pause_after: params.pause };
        t = seg.end_time();
        pos = dest;
        segments.push(seg);
    }
    MobilityPath { node, duration, segments }
}

pub fn generate_rwp<R: Rng>(
    params: &RwpParams,
    area: &Area,
    nodes: usize,
    duration: f64,
    rng: &mut R,
) -> Result<Vec<MobilityPath>, MobilityError> {
    params.validate()?;
    area.validate()?;
    check_duration(duration)?;
    Ok((0..nodes)
        .map(|i| rwp_path(rng, NodeId(i as u32), params, Point::default(), area.width, area.height, duration))
        .collect())
}
