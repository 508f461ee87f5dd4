//! NS2 mobility scenario files (`setdest` format).
//!
//! ```text
//! # duration 200.0
//! $node_(0) set X_ 12.5
//! $node_(0) set Y_ 80.0
//! $node_(0) set Z_ 0.0
//! $ns_ at 2.0 "$node_(0) setdest 30.0 40.0 5.0"
//! ```
//!
//! Numbers are written with Rust's shortest round-trip float formatting, so
//! an exported trace re-imports to the same path and re-exports to the same
//! bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{MobilityError, MobilityPath, Point, WaypointSegment};
use crate::NodeId;

/// Slack for deciding whether a node reached its destination before the next
/// `setdest` command.
const ARRIVAL_EPS: f64 = 1e-9;

pub fn export_ns2(paths: &[MobilityPath]) -> String {
    let mut out = String::new();
    if let Some(d) = paths.iter().map(|p| p.duration).reduce(f64::max) {
        let _ = writeln!(out, "# duration {d:?}");
    }
    for p in paths {
        let start = p.segments.first().map(|s| s.start_pos).unwrap_or_default();
        let n = p.node.0;
        let _ = writeln!(out, "$node_({n}) set X_ {:?}", start.x);
        let _ = writeln!(out, "$node_({n}) set Y_ {:?}", start.y);
        let _ = writeln!(out, "$node_({n}) set Z_ 0.0");
    }
    let mut moves: Vec<(f64, u32, &WaypointSegment)> = paths
        .iter()
        .flat_map(|p| p.segments.iter().filter(|s| s.start_pos != s.dest_pos).map(move |s| (s.start_time, p.node.0, s)))
        .collect();
    moves.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (t, n, s) in moves {
        let _ = writeln!(
            out,
            "$ns_ at {t:?} \"$node_({n}) setdest {:?} {:?} {:?}\"",
            s.dest_pos.x, s.dest_pos.y, s.speed
        );
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> MobilityError {
    MobilityError::Parse { line, msg: msg.into() }
}

fn parse_num(tok: &str, line: usize) -> Result<f64, MobilityError> {
    let v: f64 = tok.parse().map_err(|_| parse_err(line, format!("bad number `{tok}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite number `{tok}`")));
    }
    Ok(v)
}

fn parse_node(tok: &str, line: usize) -> Result<u32, MobilityError> {
    tok.strip_prefix("$node_(")
        .and_then(|r| r.strip_suffix(')'))
        .and_then(|r| r.parse().ok())
        .ok_or_else(|| parse_err(line, format!("expected $node_(<id>), got `{tok}`")))
}

#[derive(Default)]
struct NodeTrace {
    x: Option<f64>,
    y: Option<f64>,
    moves: Vec<(f64, Point, f64)>,
}

/// Parses an NS2 mobility trace. `duration` sets the path horizon; when
/// `None` it comes from a `# duration` comment, else the latest arrival
/// time in the trace.
pub fn import_ns2(text: &str, duration: Option<f64>) -> Result<Vec<MobilityPath>, MobilityError> {
    let mut nodes: BTreeMap<u32, NodeTrace> = BTreeMap::new();
    let mut declared = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.trim();
        if let Some(v) = l.strip_prefix('#').and_then(|c| c.trim().strip_prefix("duration ")) {
            let d = parse_num(v.trim(), line)?;
            if d <= 0.0 {
                return Err(parse_err(line, "duration must be positive"));
            }
            declared = Some(d);
            continue;
        }
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            [node, "set", coord, v] => {
                let n = parse_node(node, line)?;
                let v = parse_num(v, line)?;
                let e = nodes.entry(n).or_default();
                match *coord {
                    "X_" => e.x = Some(v),
                    "Y_" => e.y = Some(v),
                    "Z_" => {}
                    other => return Err(parse_err(line, format!("unknown coordinate `{other}`"))),
                }
            }
            ["$ns_", "at", t, node, "setdest", x, y, s] => {
                let node = node
                    .strip_prefix('"')
                    .ok_or_else(|| parse_err(line, "expected quoted command"))?;
                let s = s.strip_suffix('"').ok_or_else(|| parse_err(line, "unterminated quote"))?;
                let n = parse_node(node, line)?;
                let t = parse_num(t, line)?;
                let speed = parse_num(s, line)?;
                if t < 0.0 {
                    return Err(parse_err(line, "negative time"));
                }
                if speed <= 0.0 {
                    return Err(parse_err(line, "setdest speed must be positive"));
                }
                let dest = Point::new(parse_num(x, line)?, parse_num(y, line)?);
                nodes.entry(n).or_default().moves.push((t, dest, speed));
            }
            _ => return Err(parse_err(line, format!("unrecognized statement `{l}`"))),
        }
    }

    for (i, id) in nodes.keys().enumerate() {
        if *id as usize != i {
            return Err(parse_err(0, format!("node ids must be contiguous from 0; missing {i}")));
        }
    }

    let mut built = Vec::with_capacity(nodes.len());
    for (id, mut trace) in nodes {
        let (Some(x), Some(y)) = (trace.x, trace.y) else {
            return Err(parse_err(0, format!("node {id} has no initial X_/Y_")));
        };
        trace.moves.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut segments: Vec<WaypointSegment> = Vec::with_capacity(trace.moves.len() + 1);
        let first_move = trace.moves.first().map(|m| m.0);
        if first_move != Some(0.0) {
            segments.push(WaypointSegment::stationary(0.0, Point::new(x, y), first_move.unwrap_or(0.0)));
        }
        let mut pos = Point::new(x, y);
        for (t, dest, speed) in trace.moves {
            if let Some(last) = segments.last_mut() {
                if last.arrival_time() > t + ARRIVAL_EPS {
                    // redirected mid-leg
                    let here = last.position(t);
                    last.dest_pos = here;
                    last.speed = if last.start_time < t { last.start_pos.dist(here) / (t - last.start_time) } else { 0.0 };
                    last.pause_after = 0.0;
                    pos = here;
                } else {
                    last.pause_after = (t - last.arrival_time()).max(0.0);
                    pos = last.dest_pos;
                }
            }
            segments.push(WaypointSegment { start_time: t, start_pos: pos, dest_pos: dest, speed, pause_after: 0.0 });
            pos = dest;
        }
        built.push((id, segments));
    }

    let horizon = duration.or(declared).unwrap_or_else(|| {
        built
            .iter()
            .filter_map(|(_, s)| s.last().map(|s| s.arrival_time()))
            .fold(0.0, f64::max)
    });
    Ok(built
        .into_iter()
        .map(|(id, mut segments)| {
            if let Some(last) = segments.last_mut() {
                last.pause_after = (horizon - last.arrival_time()).max(0.0);
            }
            MobilityPath { node: NodeId(id), duration: horizon, segments }
        })
        .collect())
}
