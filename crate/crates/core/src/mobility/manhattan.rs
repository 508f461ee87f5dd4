use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rwp::uniform_speed;
use super::{check_duration, check_speed_range, Area, MobilityError, MobilityPath, Point, WaypointSegment};
use crate::NodeId;

/// Manhattan grid parameters. Streets are evenly spaced and include the area
/// border; lanes are not modelled beyond the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManhattanParams {
    pub h_streets: usize,
    pub v_streets: usize,
    pub v_min: f64,
    pub v_max: f64,
    /// Probabilities of turning (left, right, straight) at an intersection.
    pub turn_probs: (f64, f64, f64),
}

impl Default for ManhattanParams {
    fn default() -> Self {
        ManhattanParams { h_streets: 5, v_streets: 5, v_min: 1.0, v_max: 10.0, turn_probs: (0.25, 0.25, 0.5) }
    }
}

impl ManhattanParams {
    pub fn validate(&self) -> Result<(), MobilityError> {
        if self.h_streets < 2 || self.v_streets < 2 {
            return Err(MobilityError::InvalidParams("manhattan: need at least 2 streets each way".into()));
        }
        check_speed_range(self.v_min, self.v_max, "manhattan")?;
        let (l, r, s) = self.turn_probs;
        if l < 0.0 || r < 0.0 || s < 0.0 || ((l + r + s) - 1.0).abs() > 1e-9 {
            return Err(MobilityError::InvalidParams(format!(
                "manhattan: turn probabilities must be non-negative and sum to 1, got ({l}, {r}, {s})"
            )));
        }
        Ok(())
    }

    /// y coordinates of horizontal streets.
    pub fn street_ys(&self, area: &Area) -> Vec<f64> {
        spaced(self.h_streets, area.height)
    }

    /// x coordinates of vertical streets.
    pub fn street_xs(&self, area: &Area) -> Vec<f64> {
        spaced(self.v_streets, area.width)
    }

    /// Distance from `p` to the nearest street line.
    pub fn street_distance(&self, area: &Area, p: Point) -> f64 {
        let dx = self.street_xs(area).iter().map(|x| (p.x - x).abs()).fold(f64::INFINITY, f64::min);
        let dy = self.street_ys(area).iter().map(|y| (p.y - y).abs()).fold(f64::INFINITY, f64::min);
        dx.min(dy)
    }
}

fn spaced(n: usize, len: f64) -> Vec<f64> {
    (0..n).map(|k| if k + 1 == n { len } else { k as f64 * len / (n - 1) as f64 }).collect()
}

/// Grid heading as a unit step in intersection indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Heading(i32, i32);

impl Heading {
    fn left(self) -> Heading {
        Heading(-self.1, self.0)
    }
    fn right(self) -> Heading {
        Heading(self.1, -self.0)
    }
}

struct Grid {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Grid {
    fn can_go(&self, (i, j): (usize, usize), h: Heading) -> bool {
        let ni = i as i64 + i64::from(h.0);
        let nj = j as i64 + i64::from(h.1);
        ni >= 0 && nj >= 0 && (ni as usize) < self.xs.len() && (nj as usize) < self.ys.len()
    }

    fn step(&self, (i, j): (usize, usize), h: Heading) -> (usize, usize) {
        ((i as i64 + i64::from(h.0)) as usize, (j as i64 + i64::from(h.1)) as usize)
    }

    fn point(&self, (i, j): (usize, usize)) -> Point {
        Point::new(self.xs[i], self.ys[j])
    }
}

/// Picks the next heading at an intersection. Impossible moves are removed
/// and the remaining probabilities renormalized; if all remaining weights are
/// zero the possible moves are chosen uniformly.
fn choose_turn<R: Rng>(rng: &mut R, grid: &Grid, at: (usize, usize), h: Heading, probs: (f64, f64, f64)) -> Heading {
    let options = [(h.left(), probs.0), (h.right(), probs.1), (h, probs.2)];
    let possible: Vec<(Heading, f64)> = options.into_iter().filter(|(d, _)| grid.can_go(at, *d)).collect();
    debug_assert!(!possible.is_empty(), "a grid of at least 2x2 always offers a turn");
    let total: f64 = possible.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return possible[rng.gen_range(0..possible.len())].0;
    }
    let mut u = rng.gen::<f64>() * total;
    for (d, w) in &possible {
        if u < *w {
            return *d;
        }
        u -= w;
    }
    possible.iter().rev().find(|(_, w)| *w > 0.0).expect("positive weight").0
}

pub(crate) fn manhattan_path<R: Rng>(
    rng: &mut R,
    node: NodeId,
    params: &ManhattanParams,
    area: &Area,
    duration: f64,
) -> MobilityPath {
    let grid = Grid { xs: params.street_xs(area), ys: params.street_ys(area) };
    let nh = params.h_streets;
    let street = rng.gen_range(0..(nh + params.v_streets));
    let forward = rng.gen::<bool>();
    // Start somewhere along a street, then head for the next intersection.
    let (start, mut heading, mut next) = if street < nh {
        let j = street;
        let x = rng.gen::<f64>() * area.width;
        let i_hi = grid.xs.partition_point(|&gx| gx <= x).min(grid.xs.len() - 1);
        let i_lo = grid.xs.iter().rposition(|&gx| gx < x).unwrap_or(0);
        if forward && x < area.width {
            (Point::new(x, grid.ys[j]), Heading(1, 0), (i_hi, j))
        } else if x > 0.0 {
            (Point::new(x, grid.ys[j]), Heading(-1, 0), (i_lo, j))
        } else {
            (Point::new(x, grid.ys[j]), Heading(1, 0), (1, j))
        }
    } else {
        let i = street - nh;
        let y = rng.gen::<f64>() * area.height;
        let j_hi = grid.ys.partition_point(|&gy| gy <= y).min(grid.ys.len() - 1);
        let j_lo = grid.ys.iter().rposition(|&gy| gy < y).unwrap_or(0);
        if forward && y < area.height {
            (Point::new(grid.xs[i], y), Heading(0, 1), (i, j_hi))
        } else if y > 0.0 {
            (Point::new(grid.xs[i], y), Heading(0, -1), (i, j_lo))
        } else {
            (Point::new(grid.xs[i], y), Heading(0, 1), (i, 1))
        }
    };

    if params.v_max <= 0.0 {
        return MobilityPath::stationary(node, start, duration);
    }

    let mut segments = Vec::new();
    let mut pos = start;
    let mut t = 0.0;
    while t < duration {
        let dest = grid.point(next);
        let speed = uniform_speed(rng, params.v_min, params.v_max);
        let seg = WaypointSegment { start_time: t, start_pos: pos, dest_pos: dest, speed, pause_after: 0.0 };
        t = seg.end_time();
        pos = dest;
        segments.push(seg);
        heading = choose_turn(rng, &grid, next, heading, params.turn_probs);
        next = grid.step(next, heading);
    }
    MobilityPath { node, duration, segments }
}

pub fn generate_manhattan<R: Rng>(
    params: &ManhattanParams,
    area: &Area,
    nodes: usize,
    duration: f64,
    rng: &mut R,
) -> Result<Vec<MobilityPath>, MobilityError> {
    params.validate()?;
    area.validate()?;
    check_duration(duration)?;
    Ok((0..nodes).map(|i| manhattan_path(rng, NodeId(i as u32), params, area, duration)).collect())
}
