//! CBR multicast traffic and random group membership.
//!
//! Plans serialize to a plain whitespace table, one flow per line:
//! `flow_id source group size interval start stop`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{GroupId, NodeId, SimTime};

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("invalid traffic parameters: {0}")]
    InvalidParams(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub id: GroupId,
    pub members: BTreeSet<NodeId>,
    pub sources: Vec<NodeId>,
}

impl Group {
    /// Members expected to receive data from `source`.
    pub fn receivers_of(&self, source: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.members.iter().copied().filter(move |m| *m != source)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupPlan {
    pub groups: Vec<Group>,
}

impl GroupPlan {
    pub fn group(&self, id: GroupId) -> Option<&Group> {
        self.groups.iter().find(|g| g.id == id)
    }
}

/// Constant-bit-rate flow: one packet at `start` and every `interval` after,
/// strictly before `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbrFlow {
    pub flow_id: u32,
    pub source: NodeId,
    pub group: GroupId,
    pub packet_size: u32,
    pub interval: f64,
    pub start: f64,
    pub stop: f64,
}

impl CbrFlow {
    pub fn validate(&self, duration: f64) -> Result<(), TrafficError> {
        if !(self.interval > 0.0) {
            return Err(TrafficError::InvalidParams(format!("flow {}: interval must be positive", self.flow_id)));
        }
        if !(self.start >= 0.0 && self.start < self.stop && self.stop <= duration) {
            return Err(TrafficError::InvalidParams(format!(
                "flow {}: need 0 <= start < stop <= {duration}, got [{}, {})",
                self.flow_id, self.start, self.stop
            )));
        }
        Ok(())
    }

    pub fn start_time(&self) -> SimTime {
        SimTime::from_secs(self.start)
    }

    pub fn stop_time(&self) -> SimTime {
        SimTime::from_secs(self.stop)
    }

    pub fn interval_time(&self) -> SimTime {
        SimTime::from_secs(self.interval)
    }

    /// Time of tick `k`, or `None` once the flow has stopped.
    pub fn tick_time(&self, k: u32) -> Option<SimTime> {
        let t = self.start_time() + self.interval_time().mul(u64::from(k));
        (t < self.stop_time()).then_some(t)
    }

    /// Number of packets the flow originates.
    pub fn packet_count(&self) -> u64 {
        let span = self.stop_time().as_micros().saturating_sub(self.start_time().as_micros());
        span.div_ceil(self.interval_time().as_micros().max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficParams {
    pub group_count: usize,
    pub members_per_group: usize,
    pub sources_per_group: usize,
    pub sources_are_members: bool,
    pub packet_size: u32,
    pub interval: f64,
    pub start_min: f64,
    pub start_max: f64,
    /// Flows stop this many seconds before the end of the run.
    pub stop_before_end: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams {
            group_count: 10,
            members_per_group: 10,
            sources_per_group: 1,
            sources_are_members: true,
            packet_size: 512,
            interval: 0.25,
            start_min: 5.0,
            start_max: 15.0,
            stop_before_end: 10.0,
        }
    }
}

/// Draws `group_count` groups of `members_per_group` distinct nodes each.
/// A node may belong to several groups.
pub fn build_group_plan<R: Rng>(
    nodes: usize,
    group_count: usize,
    members_per_group: usize,
    sources_per_group: usize,
    sources_are_members: bool,
    rng: &mut R,
) -> Result<GroupPlan, TrafficError> {
    let pools: Vec<Vec<NodeId>> = vec![(0..nodes as u32).map(NodeId).collect(); group_count];
    build_group_plan_from_pools(&pools, nodes, members_per_group, sources_per_group, sources_are_members, rng)
}

/// Like [`build_group_plan`], but group `g` draws its members from
/// `pools[g % pools.len()]`. Used to align multicast groups with mobility groups.
pub fn build_group_plan_from_pools<R: Rng>(
    pools: &[Vec<NodeId>],
    nodes: usize,
    members_per_group: usize,
    sources_per_group: usize,
    sources_are_members: bool,
    rng: &mut R,
) -> Result<GroupPlan, TrafficError> {
    if members_per_group == 0 || sources_per_group == 0 {
        return Err(TrafficError::InvalidParams("groups need at least one member and one source".into()));
    }
    let mut groups = Vec::with_capacity(pools.len());
    for (g, pool) in pools.iter().enumerate() {
        if members_per_group > pool.len() {
            return Err(TrafficError::InvalidParams(format!(
                "group {g}: {members_per_group} members requested from {} candidates",
                pool.len()
            )));
        }
        let members: Vec<NodeId> = sample(rng, pool.len(), members_per_group).into_iter().map(|i| pool[i]).collect();
        let sources: Vec<NodeId> = if sources_are_members {
            if sources_per_group > members.len() {
                return Err(TrafficError::InvalidParams(format!("group {g}: more sources than members")));
            }
            sample(rng, members.len(), sources_per_group).into_iter().map(|i| members[i]).collect()
        } else {
            let outsiders: Vec<NodeId> = (0..nodes as u32).map(NodeId).filter(|n| !members.contains(n)).collect();
            if sources_per_group > outsiders.len() {
                return Err(TrafficError::InvalidParams(format!("group {g}: not enough non-member sources")));
            }
            sample(rng, outsiders.len(), sources_per_group).into_iter().map(|i| outsiders[i]).collect()
        };
        groups.push(Group { id: GroupId(g as u32), members: members.into_iter().collect(), sources });
    }
    Ok(GroupPlan { groups })
}

/// One flow per (group, source), with start times spread uniformly over
/// `[start_min, start_max]`.
pub fn build_flows<R: Rng>(plan: &GroupPlan, params: &TrafficParams, duration: f64, rng: &mut R) -> Result<Vec<CbrFlow>, TrafficError> {
    let stop = duration - params.stop_before_end;
    let mut flows = Vec::new();
    for g in &plan.groups {
        for s in &g.sources {
            let start = if params.start_max > params.start_min {
                rng.gen_range(params.start_min..params.start_max)
            } else {
                params.start_min
            };
            // whole milliseconds keep the plan table exact
            let start = (start * 1000.0).round() / 1000.0;
            let flow = CbrFlow {
                flow_id: flows.len() as u32,
                source: *s,
                group: g.id,
                packet_size: params.packet_size,
                interval: params.interval,
                start,
                stop,
            };
            flow.validate(duration)?;
            flows.push(flow);
        }
    }
    Ok(flows)
}

pub fn flows_to_table(flows: &[CbrFlow]) -> String {
    let mut out = String::new();
    for f in flows {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {}",
            f.flow_id, f.source, f.group, f.packet_size, f.interval, f.start, f.stop
        );
    }
    out
}

pub fn flows_from_table(text: &str) -> Result<Vec<CbrFlow>, TrafficError> {
    let mut flows = Vec::new();
    for (idx, l) in text.lines().enumerate() {
        let line = idx + 1;
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 7 {
            return Err(TrafficError::Parse { line, msg: format!("expected 7 fields, got {}", t.len()) });
        }
        let bad = |what: &str| TrafficError::Parse { line, msg: format!("bad {what}") };
        flows.push(CbrFlow {
            flow_id: t[0].parse().map_err(|_| bad("flow_id"))?,
            source: NodeId(t[1].parse().map_err(|_| bad("source"))?),
            group: GroupId(t[2].parse().map_err(|_| bad("group"))?),
            packet_size: t[3].parse().map_err(|_| bad("size"))?,
            interval: t[4].parse().map_err(|_| bad("interval"))?,
            start: t[5].parse().map_err(|_| bad("start"))?,
            stop: t[6].parse().map_err(|_| bad("stop"))?,
        });
    }
    Ok(flows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStreams;

    #[test]
    fn default_plan_has_ten_distinct_members_per_group() {
        let mut rng = RngStreams::new(1).stream("traffic");
        let plan = build_group_plan(50, 10, 10, 1, true, &mut rng).unwrap();
        assert_eq!(plan.groups.len(), 10);
        for g in &plan.groups {
            assert_eq!(g.members.len(), 10);
            assert!(g.members.contains(&g.sources[0]));
            assert!(g.members.iter().all(|m| m.0 < 50));
        }
    }

    #[test]
    fn full_membership_and_determinism() {
        let plan = |seed| build_group_plan(12, 3, 12, 1, true, &mut RngStreams::new(seed).stream("traffic")).unwrap();
        assert!(plan(4).groups.iter().all(|g| g.members.len() == 12));
        assert_eq!(plan(4), plan(4));
        let mut rng = RngStreams::new(1).stream("traffic");
        assert!(build_group_plan(5, 1, 6, 1, true, &mut rng).is_err());
    }

    #[test]
    fn non_member_sources() {
        let mut rng = RngStreams::new(2).stream("traffic");
        let plan = build_group_plan(20, 4, 5, 2, false, &mut rng).unwrap();
        for g in &plan.groups {
            assert!(g.sources.iter().all(|s| !g.members.contains(s)));
        }
    }

    #[test]
    fn tick_count_over_window() {
        let f = CbrFlow { flow_id: 0, source: NodeId(0), group: GroupId(0), packet_size: 512, interval: 0.25, start: 10.0, stop: 110.0 };
        assert_eq!(f.packet_count(), 400);
        let ticks = (0..).map_while(|k| f.tick_time(k)).count();
        assert_eq!(ticks, 400);
        assert_eq!(f.tick_time(399), Some(SimTime::from_secs(109.75)));
        assert_eq!(f.tick_time(400), None);
        let odd = CbrFlow { start: 10.1, ..f };
        assert_eq!(odd.packet_count(), (0..).map_while(|k| odd.tick_time(k)).count() as u64);
    }

    #[test]
    fn table_round_trip() {
        let mut rng = RngStreams::new(3).stream("traffic");
        let plan = build_group_plan(50, 10, 10, 1, true, &mut rng).unwrap();
        let flows = build_flows(&plan, &TrafficParams::default(), 200.0, &mut rng).unwrap();
        assert_eq!(flows_from_table(&flows_to_table(&flows)).unwrap(), flows);
        assert!(flows.iter().all(|f| (5.0..=15.0).contains(&f.start) && f.stop == 190.0));
        assert!(matches!(flows_from_table("1 2 3"), Err(TrafficError::Parse { line: 1, .. })));
    }
}
