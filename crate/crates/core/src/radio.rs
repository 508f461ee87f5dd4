//! Unit-disk wireless medium.
//!
//! Two nodes hear each other iff their distance is at most `range`
//! (inclusive). Reachability is frozen at the send instant: a receiver that
//! drifts out of range while the frame is in flight still gets it.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Ledger, PacketClass};
use crate::mobility::{MobilityPath, Point};
use crate::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub range: f64,
    pub hop_delay_base: f64,
    pub hop_delay_jitter: f64,
    pub loss_prob: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams { range: 150.0, hop_delay_base: 0.002, hop_delay_jitter: 0.001, loss_prob: 0.0 }
    }
}

impl RadioParams {
    /// Returns the offending field name on failure.
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err("range");
        }
        if !(self.hop_delay_base >= 0.0) {
            return Err("hop_delay_base");
        }
        if !(self.hop_delay_jitter >= 0.0) {
            return Err("hop_delay_jitter");
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err("loss_prob");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RadioError {
    #[error("unknown node {0:?}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxMode {
    Broadcast,
    Unicast(NodeId),
}

/// A scripted outage of one link, for test scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCut {
    pub a: NodeId,
    pub b: NodeId,
    pub from: f64,
    pub until: f64,
}

#[derive(Debug, Default, PartialEq)]
pub struct TxOutcome {
    pub arrivals: Vec<(NodeId, SimTime)>,
    /// Unicast target was not reachable at send time.
    pub link_break: bool,
}

pub struct Medium {
    paths: Vec<MobilityPath>,
    params: RadioParams,
    cuts: Vec<LinkCut>,
    cache_t: f64,
    cache: Vec<Point>,
}

impl Medium {
    pub fn new(paths: Vec<MobilityPath>, params: RadioParams) -> Self {
        let n = paths.len();
        Medium { paths, params, cuts: Vec::new(), cache_t: f64::NAN, cache: vec![Point::default(); n] }
    }

    pub fn with_cuts(mut self, cuts: Vec<LinkCut>) -> Self {
        self.cuts = cuts;
        self
    }

    pub fn params(&self) -> &RadioParams {
        &self.params
    }

    pub fn paths(&self) -> &[MobilityPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn positions(&mut self, t: f64) -> &[Point] {
        if self.cache_t != t {
            for (p, path) in self.cache.iter_mut().zip(&self.paths) {
                *p = path.position_clamped(t);
            }
            self.cache_t = t;
        }
        &self.cache
    }

    fn cut(&self, a: NodeId, b: NodeId, t: f64) -> bool {
        self.cuts
            .iter()
            .any(|c| ((c.a == a && c.b == b) || (c.a == b && c.b == a)) && t >= c.from && t < c.until)
    }

    pub fn linked(&mut self, a: NodeId, b: NodeId, t: f64) -> bool {
        if a == b || self.cut(a, b, t) {
            return false;
        }
        let range = self.params.range;
        let pos = self.positions(t);
        pos[a.index()].dist(pos[b.index()]) <= range
    }

    pub fn neighbors(&mut self, node: NodeId, t: f64) -> Vec<NodeId> {
        let range = self.params.range;
        let me = self.positions(t)[node.index()];
        let candidates: Vec<NodeId> = self
            .positions(t)
            .iter()
            .enumerate()
            .filter(|(j, p)| *j != node.index() && me.dist(**p) <= range)
            .map(|(j, _)| NodeId(j as u32))
            .collect();
        if self.cuts.is_empty() {
            candidates
        } else {
            candidates.into_iter().filter(|j| !self.cut(node, *j, t)).collect()
        }
    }

    /// Connected components of the whole unit-disk graph at `t`, as one label per node.
    /// Labels are the smallest node index of each component.
    pub fn connected_components(&mut self, t: f64) -> Vec<usize> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = s;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for v in self.neighbors(NodeId(u as u32), t) {
                    if label[v.index()] == usize::MAX {
                        label[v.index()] = s;
                        stack.push(v.index());
                    }
                }
            }
        }
        label
    }

    /// Sends one frame at `now`. Counts the transmission in `ledger` even when
    /// nothing is received.
    pub fn transmit<R: Rng>(
        &mut self,
        sender: NodeId,
        mode: TxMode,
        class: PacketClass,
        now: SimTime,
        rng: &mut R,
        ledger: &mut Ledger,
    ) -> Result<TxOutcome, RadioError> {
        if sender.index() >= self.len() {
            return Err(RadioError::UnknownNode(sender));
        }
        if let TxMode::Unicast(to) = mode {
            if to.index() >= self.len() {
                return Err(RadioError::UnknownNode(to));
            }
        }
        ledger.count_transmission(class);
        let t = now.as_secs();
        let targets = match mode {
            TxMode::Broadcast => self.neighbors(sender, t),
            TxMode::Unicast(to) => {
                if !self.linked(sender, to, t) {
                    return Ok(TxOutcome { arrivals: Vec::new(), link_break: true });
                }
                vec![to]
            }
        };
        let p = self.params;
        let mut arrivals = Vec::with_capacity(targets.len());
        for to in targets {
            if p.loss_prob > 0.0 && rng.gen::<f64>() < p.loss_prob {
                continue;
            }
            let jitter = if p.hop_delay_jitter > 0.0 { rng.gen::<f64>() * p.hop_delay_jitter } else { 0.0 };
            let delay = SimTime::from_secs(p.hop_delay_base + jitter);
            arrivals.push((to, now + delay));
        }
        Ok(TxOutcome { arrivals, link_break: false })
    }
}
