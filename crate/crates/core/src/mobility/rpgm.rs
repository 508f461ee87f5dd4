use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rwp::{rwp_path, uniform_speed, RwpParams};
use super::{check_duration, check_speed_range, Area, MobilityError, MobilityPath, Point, WaypointSegment};
use crate::NodeId;

/// Reference Point Group Mobility parameters.
///
/// Each group's logical center follows random waypoint motion. Members hold a
/// fixed reference offset (uniform in a disk of radius `max_deviation`) from
/// the center and wander around it with a bounded random waypoint walk whose
/// radius is also `max_deviation` and whose speed never exceeds
/// `member_speed_ratio * group_v_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpgmParams {
    pub group_count: usize,
    pub nodes_per_group: usize,
    pub max_deviation: f64,
    pub group_v_min: f64,
    pub group_v_max: f64,
    pub group_pause: f64,
    pub member_speed_ratio: f64,
}

impl Default for RpgmParams {
    fn default() -> Self {
        RpgmParams {
            group_count: 5,
            nodes_per_group: 10,
            max_deviation: 50.0,
            group_v_min: 1.0,
            group_v_max: 10.0,
            group_pause: 2.0,
            member_speed_ratio: 0.5,
        }
    }
}

impl RpgmParams {
    pub fn validate(&self, nodes: usize, area: &Area) -> Result<(), MobilityError> {
        if self.group_count == 0 || self.nodes_per_group == 0 {
            return Err(MobilityError::InvalidParams("rpgm: group_count and nodes_per_group must be positive".into()));
        }
        if self.group_count * self.nodes_per_group != nodes {
            return Err(MobilityError::InvalidParams(format!(
                "rpgm: {} groups x {} nodes != {} nodes",
                self.group_count, self.nodes_per_group, nodes
            )));
        }
        if !(self.max_deviation >= 0.0) || !(self.member_speed_ratio >= 0.0) {
            return Err(MobilityError::InvalidParams("rpgm: deviation and speed ratio must be >= 0".into()));
        }
        check_speed_range(self.group_v_min, self.group_v_max, "rpgm group")?;
        if !(self.group_pause >= 0.0) {
            return Err(MobilityError::InvalidParams("rpgm: group_pause must be >= 0".into()));
        }
        let margin = 2.0 * self.max_deviation;
        if 2.0 * margin >= area.width || 2.0 * margin >= area.height {
            return Err(MobilityError::InvalidParams(format!(
                "rpgm: max_deviation {} too large for {}x{} area",
                self.max_deviation, area.width, area.height
            )));
        }
        Ok(())
    }

    /// Upper bound of a member's distance from its reference point.
    pub fn walk_bound(&self) -> f64 {
        self.max_deviation
    }

    pub fn member_speed_max(&self) -> f64 {
        self.member_speed_ratio * self.group_v_max
    }
}

/// Generated RPGM motion plus the internals needed to verify it.
#[derive(Debug, Clone)]
pub struct RpgmLayout {
    pub paths: Vec<MobilityPath>,
    /// Logical center path per group.
    pub centers: Vec<MobilityPath>,
    /// Reference-point offset from the group center, per node.
    pub offsets: Vec<Point>,
    /// Mobility group of each node.
    pub group_of: Vec<usize>,
}

impl RpgmLayout {
    pub fn reference_point(&self, node: usize, t: f64) -> Point {
        let c = self.centers[self.group_of[node]].position_clamped(t);
        let o = self.offsets[node];
        Point::new(c.x + o.x, c.y + o.y)
    }

    /// Members of each mobility group, in node order.
    pub fn groups(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.centers.len()];
        for (i, g) in self.group_of.iter().enumerate() {
            out[*g].push(NodeId(i as u32));
        }
        out
    }
}

fn uniform_in_disk<R: Rng>(rng: &mut R, radius: f64) -> Point {
    if radius <= 0.0 {
        return Point::default();
    }
    let r = radius * rng.gen::<f64>().sqrt();
    let th = rng.gen::<f64>() * std::f64::consts::TAU;
    Point::new(r * th.cos(), r * th.sin())
}

/// Random waypoint walk inside a disk centered on the origin.
fn disk_walk<R: Rng>(rng: &mut R, radius: f64, v_max: f64, duration: f64) -> MobilityPath {
    let start = uniform_in_disk(rng, radius);
    if radius <= 0.0 || v_max <= 0.0 {
        return MobilityPath::stationary(NodeId(0), start, duration);
    }
    let mut segments = Vec::new();
    let mut pos = start;
    let mut t = 0.0;
    while t < duration {
        let dest = uniform_in_disk(rng, radius);
        let speed = uniform_speed(rng, 0.5 * v_max, v_max);
        let seg = WaypointSegment { start_time: t, start_pos: pos, dest_pos: dest, speed, pause_after: 0.0 };
        t = seg.end_time();
        pos = dest;
        segments.push(seg);
    }
    MobilityPath { node: NodeId(0), duration, segments }
}

fn breakpoints(path: &MobilityPath, out: &mut Vec<f64>) {
    for s in &path.segments {
        out.push(s.start_time);
        out.push(s.arrival_time());
    }
}

/// Sum of two piecewise-linear motions (plus a constant offset), re-expressed
/// as waypoint segments.
fn compose(node: NodeId, center: &MobilityPath, offset: Point, walk: &MobilityPath, duration: f64) -> MobilityPath {
    let at = |t: f64| {
        let c = center.position_clamped(t);
        let w = walk.position_clamped(t);
        Point::new(c.x + offset.x + w.x, c.y + offset.y + w.y)
    };
    let mut ts = vec![0.0, duration];
    breakpoints(center, &mut ts);
    breakpoints(walk, &mut ts);
    ts.retain(|t| (0.0..=duration).contains(t));
    ts.sort_by(f64::total_cmp);
    ts.dedup();

    let mut segments: Vec<WaypointSegment> = Vec::with_capacity(ts.len());
    let mut pa = at(0.0);
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let pb = at(b);
        let d = pa.dist(pb);
        match segments.last_mut() {
            Some(last) if d == 0.0 && last.dest_pos == pa => last.pause_after += b - a,
            _ if d == 0.0 => segments.push(WaypointSegment::stationary(a, pa, b - a)),
            _ => segments.push(WaypointSegment {
                start_time: a,
                start_pos: pa,
                dest_pos: pb,
                speed: d / (b - a),
                pause_after: 0.0,
            }),
        }
        pa = pb;
    }
    if segments.is_empty() {
        segments.push(WaypointSegment::stationary(0.0, pa, duration));
    }
    MobilityPath { node, duration, segments }
}

pub fn generate_rpgm_layout<R: Rng>(
    params: &RpgmParams,
    area: &Area,
    nodes: usize,
    duration: f64,
    rng: &mut R,
) -> Result<RpgmLayout, MobilityError> {
    area.validate()?;
    params.validate(nodes, area)?;
    check_duration(duration)?;

    // Centers are kept far enough from the border that offset + walk never leave the area.
    let margin = 2.0 * params.max_deviation;
    let center_params = RwpParams { v_min: params.group_v_min, v_max: params.group_v_max, pause: params.group_pause };
    let origin = Point::new(margin, margin);
    let (w, h) = (area.width - 2.0 * margin, area.height - 2.0 * margin);
    let centers: Vec<MobilityPath> = (0..params.group_count)
        .map(|g| rwp_path(rng, NodeId(g as u32), &center_params, origin, w, h, duration))
        .collect();

    let mut paths = Vec::with_capacity(nodes);
    let mut offsets = Vec::with_capacity(nodes);
    let mut group_of = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let g = i / params.nodes_per_group;
        let offset = uniform_in_disk(rng, params.max_deviation);
        let walk = disk_walk(rng, params.walk_bound(), params.member_speed_max(), duration);
        paths.push(compose(NodeId(i as u32), &centers[g], offset, &walk, duration));
        offsets.push(offset);
        group_of.push(g);
    }
    Ok(RpgmLayout { paths, centers, offsets, group_of })
}

pub fn generate_rpgm<R: Rng>(
    params: &RpgmParams,
    area: &Area,
    nodes: usize,
    duration: f64,
    rng: &mut R,
) -> Result<Vec<MobilityPath>, MobilityError> {
    generate_rpgm_layout(params, area, nodes, duration, rng).map(|l| l.paths)
}
