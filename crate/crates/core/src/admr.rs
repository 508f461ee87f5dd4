//! Demand-driven multicast in the style of ADMR.
//!
//! Every (source, group) pair gets its own tree. Receivers flood a
//! MULTICAST SOLICITATION; active sources answer with a source-routed
//! KEEP-ALIVE and the receiver grafts itself with a RECEIVER JOIN along the
//! reverse path. Sources also flood a RECEIVER DISCOVERY at a low rate.
//!
//! Tree nodes learn the source's packet spacing and start a repair after
//! missing several packets in a row. Forwarding state is kept alive by
//! acknowledgments: a child's own rebroadcast counts as a passive ack, and
//! leaf receivers send an explicit ack every few packets. Receivers that see
//! heavy loss can vote the source into flooding its data.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::kernel::EventHandle;
use crate::proto::{Body, Ctx, DuplicateCache, Packet, Protocol, DEFAULT_TTL};
use crate::{GroupId, NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmrConfig {
    /// Consecutive missed packets before a tree node starts repairing.
    pub repair_threshold: u32,
    pub reconnect_hops: u8,
    pub discovery_period: f64,
    pub ack_miss_limit: u32,
    pub fallback_window: u32,
    pub fallback_pdr: f64,
    pub fallback_exit: f64,
    /// Weight of the newest gap in the packet-spacing average.
    pub interval_weight: f64,
    pub explicit_ack_every: u32,
    pub repair_timeout: f64,
    pub join_timeout: f64,
    /// Extra repair delay per hop from the source, so upstream nodes act first.
    pub repair_stagger: f64,
    pub vote_lifetime: f64,
    pub jitter: f64,
}

impl Default for AdmrConfig {
    fn default() -> Self {
        AdmrConfig {
            repair_threshold: 3,
            reconnect_hops: 3,
            discovery_period: 30.0,
            ack_miss_limit: 5,
            fallback_window: 20,
            fallback_pdr: 0.5,
            fallback_exit: 0.8,
            interval_weight: 0.25,
            explicit_ack_every: 4,
            repair_timeout: 1.0,
            join_timeout: 2.0,
            repair_stagger: 0.05,
            vote_lifetime: 10.0,
            jitter: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Control {
    /// Flooded by a receiver; `route` records the path taken so far.
    MulticastSolicitation { route: Vec<NodeId>, flood_vote: bool },
    /// Source to receiver along `route`; `at` indexes the current holder.
    KeepAlive { route: Vec<NodeId>, at: usize },
    /// Receiver to source along `route`.
    ReceiverJoin { source: NodeId, route: Vec<NodeId>, at: usize },
    ReceiverDiscovery { route: Vec<NodeId> },
    RepairNotification { source: NodeId },
    /// Hop-limited flood from a disconnected node, then up the tree.
    Reconnect { source: NodeId, route: Vec<NodeId> },
    ReconnectReply { route: Vec<NodeId>, at: usize },
    ExplicitAck { source: NodeId, receiver: NodeId, flood_vote: Option<bool> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Timer {
    Check { source: NodeId, group: GroupId },
    Discovery { group: GroupId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Forwarder,
    Receiver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairState {
    Idle,
    /// Upstream is repairing; our own repair is on hold.
    Notified { until: SimTime },
    Reconnecting { until: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckState {
    pub last_confirmed: SimTime,
    pub consecutive_missed: u32,
}

impl AckState {
    fn fresh(now: SimTime) -> Self {
        AckState { last_confirmed: now, consecutive_missed: 0 }
    }
}

/// Sliding-window delivery ratio over the newest sequence numbers.
#[derive(Debug, Clone, Default)]
struct LossWindow {
    first: Option<u32>,
    seqs: BTreeSet<u32>,
}

impl LossWindow {
    fn record(&mut self, seq: u32, width: u32) -> Option<f64> {
        let first = *self.first.get_or_insert(seq);
        self.seqs.insert(seq);
        let top = *self.seqs.iter().next_back().expect("nonempty");
        let lo = (top + 1).saturating_sub(width);
        self.seqs = self.seqs.split_off(&lo);
        if top + 1 < first + width {
            return None;
        }
        Some(self.seqs.len() as f64 / width as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TreeState {
    pub source: NodeId,
    pub group: GroupId,
    pub receiver: bool,
    pub upstream: Option<NodeId>,
    pub downstream: BTreeMap<NodeId, AckState>,
    pub last_data_at: SimTime,
    /// Learned spacing of the source's packets, seconds.
    pub expected_interval: Option<f64>,
    pub depth: u8,
    pub repair: RepairState,
    pub flood_vote: bool,
    last_seq: Option<(u32, SimTime)>,
    acks_due: u32,
    window: LossWindow,
    check: Option<EventHandle>,
}

impl TreeState {
    fn new(source: NodeId, group: GroupId, receiver: bool, now: SimTime) -> Self {
        TreeState {
            source,
            group,
            receiver,
            upstream: None,
            downstream: BTreeMap::new(),
            last_data_at: now,
            expected_interval: None,
            depth: 0,
            repair: RepairState::Idle,
            flood_vote: false,
            last_seq: None,
            acks_due: 0,
            window: LossWindow::default(),
            check: None,
        }
    }

    pub fn is_forwarder(&self) -> bool {
        !self.downstream.is_empty()
    }

    pub fn roles(&self) -> Vec<Role> {
        let mut r = Vec::new();
        if self.is_forwarder() {
            r.push(Role::Forwarder);
        }
        if self.receiver {
            r.push(Role::Receiver);
        }
        r
    }

    /// Whole expected packets not heard since the last one.
    pub fn missed_count(&self, now: SimTime) -> u32 {
        match self.expected_interval {
            Some(iv) if iv > 0.0 => (now.saturating_sub(self.last_data_at).as_secs() / iv).floor() as u32,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SourceFlow {
    pub downstream: BTreeMap<NodeId, AckState>,
    pub last_data_at: SimTime,
    pub expected_interval: Option<f64>,
    /// No receiver has joined yet; data is flooded.
    pub bootstrap: bool,
    pub flood_mode: bool,
    /// `(seq, flooded)` for every packet this source sent.
    pub sent: Vec<(u32, bool)>,
    votes: BTreeMap<NodeId, SimTime>,
    discovery: Option<EventHandle>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AdmrStats {
    pub solicitations: u32,
    pub discoveries: u32,
    pub keepalives: u32,
    pub joins_sent: u32,
    pub reconnects: u32,
    pub reconnects_forwarded: u32,
    pub reconnect_replies: u32,
    pub notifications: u32,
    pub explicit_acks: u32,
    pub repairs_started: u32,
    pub repairs_abandoned: u32,
    pub branches_pruned: u32,
    pub data_floods: u32,
    pub fallback_engaged: u32,
}

pub struct Admr {
    id: NodeId,
    cfg: AdmrConfig,
    members: BTreeSet<GroupId>,
    flows: BTreeMap<GroupId, SourceFlow>,
    trees: BTreeMap<(NodeId, GroupId), TreeState>,
    soliciting: BTreeMap<GroupId, SimTime>,
    seen: DuplicateCache<(NodeId, u64)>,
    stats: AdmrStats,
}

fn secs(s: f64) -> SimTime {
    SimTime::from_secs(s)
}

fn ewma(prev: Option<f64>, sample: f64, w: f64) -> f64 {
    match prev {
        Some(p) => (1.0 - w) * p + w * sample,
        None => sample,
    }
}

impl Admr {
    pub fn stats(&self) -> AdmrStats {
        self.stats
    }

    pub fn tree(&self, source: NodeId, group: GroupId) -> Option<&TreeState> {
        self.trees.get(&(source, group))
    }

    pub fn trees(&self) -> impl Iterator<Item = &TreeState> {
        self.trees.values()
    }

    pub fn flow(&self, group: GroupId) -> Option<&SourceFlow> {
        self.flows.get(&group)
    }

    pub fn is_forwarder(&self, source: NodeId, group: GroupId) -> bool {
        self.tree(source, group).is_some_and(|t| t.is_forwarder())
    }

    fn jitter(&self) -> SimTime {
        secs(self.cfg.jitter)
    }

    fn source_active(&self, group: GroupId, now: SimTime) -> bool {
        let Some(f) = self.flows.get(&group) else { return false };
        let idle = match f.expected_interval {
            Some(iv) => secs(2.0 * iv),
            None => secs(self.cfg.join_timeout),
        };
        now.saturating_sub(f.last_data_at) <= idle
    }

    /// Tree state is believed live: idle repair and recent data.
    fn live(&self, st: &TreeState, now: SimTime) -> bool {
        if st.repair != RepairState::Idle || st.upstream.is_none() {
            return false;
        }
        let horizon = match st.expected_interval {
            Some(iv) => secs(iv * self.cfg.repair_threshold as f64),
            None => secs(self.cfg.join_timeout),
        };
        now.saturating_sub(st.last_data_at) <= horizon
    }

    fn due(&self, st: &TreeState) -> SimTime {
        match st.repair {
            RepairState::Idle => match st.expected_interval {
                Some(iv) => {
                    st.last_data_at + secs(iv * self.cfg.repair_threshold as f64 + st.depth as f64 * self.cfg.repair_stagger)
                }
                None => st.last_data_at + secs(self.cfg.join_timeout),
            },
            RepairState::Notified { until } | RepairState::Reconnecting { until } => until,
        }
    }

    fn rearm(&mut self, ctx: &mut Ctx<'_, Self>, key: (NodeId, GroupId)) {
        let Some(st) = self.trees.get(&key) else { return };
        let at = self.due(st);
        let st = self.trees.get_mut(&key).expect("tree");
        if let Some(h) = st.check.take() {
            ctx.cancel_timer(h);
        }
        let delay = at.saturating_sub(ctx.now());
        st.check = Some(ctx.set_timer(delay, Timer::Check { source: key.0, group: key.1 }));
    }

    fn drop_tree(&mut self, ctx: &mut Ctx<'_, Self>, key: (NodeId, GroupId)) {
        if let Some(mut st) = self.trees.remove(&key) {
            if let Some(h) = st.check.take() {
                ctx.cancel_timer(h);
            }
        }
    }

    fn solicit(&mut self, ctx: &mut Ctx<'_, Self>, group: GroupId) {
        let now = ctx.now();
        if self.soliciting.get(&group).is_some_and(|u| *u > now) {
            return;
        }
        self.soliciting.insert(group, now + secs(self.cfg.join_timeout));
        let vote = self.trees.values().any(|t| t.group == group && t.flood_vote);
        self.stats.solicitations += 1;
        let p = ctx.control(group, Control::MulticastSolicitation { route: vec![self.id], flood_vote: vote }, DEFAULT_TTL);
        self.seen.insert((p.origin, p.uid), now);
        ctx.broadcast(p);
    }

    fn flood_discovery(&mut self, ctx: &mut Ctx<'_, Self>, group: GroupId) {
        self.stats.discoveries += 1;
        let p = ctx.control(group, Control::ReceiverDiscovery { route: vec![self.id] }, DEFAULT_TTL);
        self.seen.insert((p.origin, p.uid), ctx.now());
        ctx.broadcast(p);
    }

    /// Grafts onto `route[last]`'s tree; `route` runs from here to the source.
    fn send_join(&mut self, ctx: &mut Ctx<'_, Self>, group: GroupId, route: Vec<NodeId>) {
        let source = *route.last().expect("route");
        let now = ctx.now();
        let key = (source, group);
        let mut st = TreeState::new(source, group, true, now);
        st.upstream = Some(route[1]);
        self.trees.insert(key, st);
        self.rearm(ctx, key);
        self.stats.joins_sent += 1;
        let next = route[1];
        let p = ctx.control(group, Control::ReceiverJoin { source, route, at: 1 }, DEFAULT_TTL);
        ctx.unicast(next, p);
    }

    fn send_vote(&mut self, ctx: &mut Ctx<'_, Self>, key: (NodeId, GroupId), vote: bool) {
        let Some(up) = self.trees.get(&key).and_then(|t| t.upstream) else { return };
        self.stats.explicit_acks += 1;
        let c = Control::ExplicitAck { source: key.0, receiver: self.id, flood_vote: Some(vote) };
        let p = ctx.control(key.1, c, DEFAULT_TTL);
        ctx.unicast(up, p);
    }

    fn start_repair(&mut self, ctx: &mut Ctx<'_, Self>, key: (NodeId, GroupId)) {
        let now = ctx.now();
        self.stats.repairs_started += 1;
        let forwarder = self.trees[&key].is_forwarder();
        if forwarder {
            self.stats.notifications += 1;
            let p = ctx.control(key.1, Control::RepairNotification { source: key.0 }, DEFAULT_TTL);
            self.seen.insert((p.origin, p.uid), now);
            ctx.broadcast(p);
        }
        self.stats.reconnects += 1;
        let p = ctx.control(key.1, Control::Reconnect { source: key.0, route: vec![self.id] }, self.cfg.reconnect_hops);
        self.seen.insert((p.origin, p.uid), now);
        ctx.broadcast(p);
        self.trees.get_mut(&key).expect("tree").repair = RepairState::Reconnecting { until: now + secs(self.cfg.repair_timeout) };
        self.rearm(ctx, key);
    }

    fn abandon(&mut self, ctx: &mut Ctx<'_, Self>, key: (NodeId, GroupId)) {
        self.stats.repairs_abandoned += 1;
        let receiver = self.trees[&key].receiver;
        self.drop_tree(ctx, key);
        if receiver {
            self.solicit(ctx, key.1);
        }
    }

    fn check(&mut self, ctx: &mut Ctx<'_, Self>, key: (NodeId, GroupId)) {
        let now = ctx.now();
        let Some(st) = self.trees.get_mut(&key) else { return };
        st.check = None;
        let st = &self.trees[&key];
        let due = self.due(st);
        if now < due {
            self.rearm(ctx, key);
            return;
        }
        match st.repair {
            RepairState::Idle if st.expected_interval.is_some() => self.start_repair(ctx, key),
            _ => self.abandon(ctx, key),
        }
    }

    /// Ack bookkeeping for one tree-mode transmission; drops silent children.
    fn charge_downstream(downstream: &mut BTreeMap<NodeId, AckState>, limit: u32) -> u32 {
        let before = downstream.len();
        downstream.retain(|_, a| a.consecutive_missed < limit);
        for a in downstream.values_mut() {
            a.consecutive_missed += 1;
        }
        (before - downstream.len()) as u32
    }

    fn confirm(&mut self, source: NodeId, group: GroupId, child: NodeId, now: SimTime) {
        let ds = if source == self.id {
            self.flows.get_mut(&group).map(|f| &mut f.downstream)
        } else {
            self.trees.get_mut(&(source, group)).map(|t| &mut t.downstream)
        };
        if let Some(a) = ds.and_then(|d| d.get_mut(&child)) {
            *a = AckState::fresh(now);
        }
    }

    fn handle_data(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>, from: NodeId) {
        let now = ctx.now();
        let flood = matches!(p.body, Body::Data { flood: true });
        let (source, g) = (p.origin, p.group);
        if !flood {
            self.confirm(source, g, from, now);
        }
        if !self.seen.insert((p.origin, p.uid), now) {
            return;
        }
        if source == self.id {
            return;
        }
        if self.members.contains(&g) {
            ctx.deliver(&p);
        }
        let key = (source, g);
        let cfg = self.cfg;
        let jitter = self.jitter();
        let mut vote_change = None;
        let mut ack = false;
        let mut pruned = 0;
        let mut was_stalled = false;
        let mut forward = false;
        if let Some(st) = self.trees.get_mut(&key) {
            let newly_learned = st.expected_interval.is_none();
            if let Some((ls, at)) = st.last_seq {
                if p.seq > ls {
                    let gap = now.saturating_sub(at).as_secs() / (p.seq - ls) as f64;
                    st.expected_interval = Some(ewma(st.expected_interval, gap, cfg.interval_weight));
                }
            }
            if st.last_seq.is_none_or(|(ls, _)| p.seq > ls) {
                st.last_seq = Some((p.seq, now));
            }
            st.last_data_at = now;
            st.depth = p.hops.saturating_add(1);
            was_stalled = st.repair != RepairState::Idle || (newly_learned && st.expected_interval.is_some());
            st.repair = RepairState::Idle;
            let gap = st.window.seqs.last().is_some_and(|l| p.seq > l + 1);
            if st.receiver {
                if let Some(ratio) = st.window.record(p.seq, cfg.fallback_window) {
                    if !st.flood_vote && ratio < cfg.fallback_pdr {
                        st.flood_vote = true;
                        vote_change = Some(true);
                    } else if st.flood_vote && ratio >= cfg.fallback_exit {
                        st.flood_vote = false;
                        vote_change = Some(false);
                    } else if st.flood_vote && p.seq % cfg.fallback_window == 0 {
                        vote_change = Some(true);
                    }
                }
            }
            if !flood {
                if st.is_forwarder() {
                    pruned = Self::charge_downstream(&mut st.downstream, cfg.ack_miss_limit);
                    forward = st.is_forwarder();
                    if !forward && st.receiver {
                        st.acks_due = cfg.explicit_ack_every.saturating_sub(1);
                    }
                }
                if !st.is_forwarder() && st.receiver && vote_change.is_none() {
                    st.acks_due += 1;
                    if st.acks_due >= cfg.explicit_ack_every || gap {
                        st.acks_due = 0;
                        ack = true;
                    }
                }
            }
        }
        self.stats.branches_pruned += pruned;
        if was_stalled {
            self.rearm(ctx, key);
        }
        if pruned > 0 && self.trees.get(&key).is_some_and(|t| !t.is_forwarder() && !t.receiver) {
            self.drop_tree(ctx, key);
        }
        if forward {
            ctx.broadcast_jittered(p.next_hop_copy(), jitter);
        }
        if let Some(v) = vote_change {
            self.send_vote(ctx, key, v);
        } else if ack {
            if let Some(up) = self.trees.get(&key).and_then(|t| t.upstream) {
                self.stats.explicit_acks += 1;
                let c = Control::ExplicitAck { source, receiver: self.id, flood_vote: None };
                let a = ctx.control(g, c, DEFAULT_TTL);
                ctx.unicast(up, a);
            }
        }
        if flood {
            let next = p.next_hop_copy();
            if next.ttl > 0 {
                ctx.broadcast_jittered(next, jitter);
            }
        }
    }

    /// Floods carry a path record; each relay appends itself.
    fn relay_flood(&mut self, ctx: &mut Ctx<'_, Self>, p: &Packet<Control>, c: Control) {
        let next = p.next_hop_copy();
        if next.ttl > 0 {
            ctx.broadcast_jittered(next.with_control(c), self.jitter());
        }
    }

    fn handle_control(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>, from: NodeId) {
        let now = ctx.now();
        let g = p.group;
        let c = p.control().cloned().expect("control");
        match c {
            Control::MulticastSolicitation { route, flood_vote } => {
                if !self.seen.insert((p.origin, p.uid), now) {
                    return;
                }
                let mut route = route;
                route.push(self.id);
                if self.source_active(g, now) {
                    if flood_vote {
                        let until = now + secs(self.cfg.vote_lifetime);
                        self.flows.get_mut(&g).expect("flow").votes.insert(p.origin, until);
                    }
                    self.stats.keepalives += 1;
                    let back: Vec<NodeId> = route.iter().rev().copied().collect();
                    let next = back[1];
                    let k = ctx.control(g, Control::KeepAlive { route: back, at: 1 }, DEFAULT_TTL);
                    ctx.unicast(next, k);
                }
                self.relay_flood(ctx, &p, Control::MulticastSolicitation { route, flood_vote });
            }
            Control::ReceiverDiscovery { route } => {
                if !self.seen.insert((p.origin, p.uid), now) {
                    return;
                }
                let mut route = route;
                route.push(self.id);
                if self.members.contains(&g) && !self.trees.contains_key(&(p.origin, g)) {
                    let back: Vec<NodeId> = route.iter().rev().copied().collect();
                    self.send_join(ctx, g, back);
                }
                self.relay_flood(ctx, &p, Control::ReceiverDiscovery { route });
            }
            Control::KeepAlive { route, at } => {
                if route.get(at) != Some(&self.id) {
                    return;
                }
                if at + 1 < route.len() {
                    let next = route[at + 1];
                    ctx.unicast(next, p.next_hop_copy().with_control(Control::KeepAlive { route, at: at + 1 }));
                } else if self.members.contains(&g) && !self.trees.contains_key(&(p.origin, g)) {
                    let back: Vec<NodeId> = route.iter().rev().copied().collect();
                    self.send_join(ctx, g, back);
                }
            }
            Control::ReceiverJoin { source, route, at } => self.handle_join(ctx, &p, source, route, at),
            Control::RepairNotification { source } => {
                if !self.seen.insert((p.origin, p.uid), now) {
                    return;
                }
                let key = (source, g);
                let Some(st) = self.trees.get_mut(&key) else { return };
                if st.upstream != Some(from) {
                    return;
                }
                st.repair = RepairState::Notified { until: now + secs(2.0 * self.cfg.repair_timeout) };
                let forward = st.is_forwarder();
                self.rearm(ctx, key);
                if forward {
                    ctx.broadcast(p.next_hop_copy());
                }
            }
            Control::Reconnect { source, route } => self.handle_reconnect(ctx, &p, source, route),
            Control::ReconnectReply { route, at } => {
                if route.get(at) != Some(&self.id) {
                    return;
                }
                let key = (p.origin, g);
                let down = route.get(at + 1).copied();
                let receiver = self.members.contains(&g);
                let st = self.trees.entry(key).or_insert_with(|| TreeState::new(key.0, g, receiver, now));
                st.upstream = Some(route[at - 1]);
                st.repair = RepairState::Idle;
                st.last_data_at = now;
                if let Some(d) = down {
                    st.downstream.insert(d, AckState::fresh(now));
                }
                self.rearm(ctx, key);
                if let Some(d) = down {
                    ctx.unicast(d, p.next_hop_copy().with_control(Control::ReconnectReply { route, at: at + 1 }));
                }
            }
            Control::ExplicitAck { source, receiver, flood_vote } => {
                self.confirm(source, g, from, now);
                let Some(v) = flood_vote else { return };
                if source == self.id {
                    if let Some(f) = self.flows.get_mut(&g) {
                        if v {
                            f.votes.insert(receiver, now + secs(self.cfg.vote_lifetime));
                        } else {
                            f.votes.remove(&receiver);
                        }
                    }
                } else if let Some(up) = self.trees.get(&(source, g)).and_then(|t| t.upstream) {
                    ctx.unicast(up, p.next_hop_copy());
                }
            }
        }
    }

    fn handle_join(&mut self, ctx: &mut Ctx<'_, Self>, p: &Packet<Control>, source: NodeId, route: Vec<NodeId>, at: usize) {
        if route.get(at) != Some(&self.id) || at == 0 {
            return;
        }
        let now = ctx.now();
        let g = p.group;
        let down = route[at - 1];
        if source == self.id {
            if let Some(f) = self.flows.get_mut(&g) {
                f.downstream.insert(down, AckState::fresh(now));
                f.bootstrap = false;
            }
            return;
        }
        let Some(&up) = route.get(at + 1) else { return };
        let key = (source, g);
        let graft = self.trees.get(&key).is_some_and(|t| t.expected_interval.is_some() && self.live(t, now));
        let receiver = self.members.contains(&g);
        let st = self.trees.entry(key).or_insert_with(|| TreeState::new(source, g, receiver, now));
        st.downstream.insert(down, AckState::fresh(now));
        if graft {
            return;
        }
        st.upstream = Some(up);
        st.repair = RepairState::Idle;
        st.last_data_at = now;
        self.rearm(ctx, key);
        ctx.unicast(up, p.next_hop_copy().with_control(Control::ReceiverJoin { source, route, at: at + 1 }));
    }

    fn handle_reconnect(&mut self, ctx: &mut Ctx<'_, Self>, p: &Packet<Control>, source: NodeId, route: Vec<NodeId>) {
        let now = ctx.now();
        let g = p.group;
        if !self.seen.insert((p.origin, p.uid), now) || route.contains(&self.id) {
            return;
        }
        let mut route = route;
        route.push(self.id);
        if source == self.id {
            if !self.source_active(g, now) {
                return;
            }
            let back: Vec<NodeId> = route.iter().rev().copied().collect();
            let next = back[1];
            self.flows.get_mut(&g).expect("flow").downstream.insert(next, AckState::fresh(now));
            self.stats.reconnect_replies += 1;
            let r = ctx.control(g, Control::ReconnectReply { route: back, at: 1 }, DEFAULT_TTL);
            ctx.unicast(next, r);
            return;
        }
        let up = self.trees.get(&(source, g)).filter(|t| self.live(t, now)).and_then(|t| t.upstream);
        if let Some(up) = up {
            self.stats.reconnects_forwarded += 1;
            let mut next = p.next_hop_copy().with_control(Control::Reconnect { source, route });
            next.ttl = DEFAULT_TTL;
            ctx.unicast(up, next);
            return;
        }
        if p.ttl > self.cfg.reconnect_hops {
            // came up the tree to a node that is itself cut off
            return;
        }
        self.relay_flood(ctx, p, Control::Reconnect { source, route });
    }
}

impl Protocol for Admr {
    type Control = Control;
    type Timer = Timer;
    type Config = AdmrConfig;

    const NAME: &'static str = "admr";

    fn new(id: NodeId, config: &AdmrConfig) -> Self {
        Admr {
            id,
            cfg: *config,
            members: BTreeSet::new(),
            flows: BTreeMap::new(),
            trees: BTreeMap::new(),
            soliciting: BTreeMap::new(),
            seen: DuplicateCache::new(secs(30.0)),
            stats: AdmrStats::default(),
        }
    }

    fn join(&mut self, ctx: &mut Ctx<'_, Self>, group: GroupId) {
        self.members.insert(group);
        let mut connected = false;
        for st in self.trees.values_mut().filter(|t| t.group == group) {
            st.receiver = true;
            connected = true;
        }
        if !connected {
            self.solicit(ctx, group);
        }
    }

    fn leave(&mut self, ctx: &mut Ctx<'_, Self>, group: GroupId) {
        self.members.remove(&group);
        self.soliciting.remove(&group);
        let keys: Vec<_> = self.trees.keys().filter(|k| k.1 == group).copied().collect();
        for k in keys {
            let st = self.trees.get_mut(&k).expect("tree");
            st.receiver = false;
            if !st.is_forwarder() {
                self.drop_tree(ctx, k);
            }
        }
    }

    fn on_app_data(&mut self, ctx: &mut Ctx<'_, Self>, mut packet: Packet<Control>) {
        let now = ctx.now();
        let g = packet.group;
        let cfg = self.cfg;
        let f = self.flows.entry(g).or_insert_with(|| SourceFlow {
            downstream: BTreeMap::new(),
            last_data_at: now,
            expected_interval: None,
            bootstrap: true,
            flood_mode: false,
            sent: Vec::new(),
            votes: BTreeMap::new(),
            discovery: None,
        });
        if let Some((ls, at)) = f.sent.last().map(|(s, _)| *s).zip(Some(f.last_data_at)) {
            if packet.seq > ls {
                let gap = now.saturating_sub(at).as_secs() / (packet.seq - ls) as f64;
                f.expected_interval = Some(ewma(f.expected_interval, gap, cfg.interval_weight));
            }
        }
        f.last_data_at = now;
        f.votes.retain(|_, until| *until > now);
        let voted = !f.votes.is_empty();
        if voted && !f.flood_mode {
            self.stats.fallback_engaged += 1;
        }
        f.flood_mode = voted;
        let flood = voted || f.bootstrap;
        let tree = !flood && !f.downstream.is_empty();
        let pruned = if tree { Self::charge_downstream(&mut f.downstream, cfg.ack_miss_limit) } else { 0 };
        f.sent.push((packet.seq, flood));
        let arm = f.discovery.is_none();
        self.stats.branches_pruned += pruned;
        if arm {
            self.flood_discovery(ctx, g);
            let h = ctx.set_timer(secs(cfg.discovery_period), Timer::Discovery { group: g });
            self.flows.get_mut(&g).expect("flow").discovery = Some(h);
        }
        self.seen.insert((packet.origin, packet.uid), now);
        if flood {
            self.stats.data_floods += 1;
            packet.body = Body::Data { flood: true };
            ctx.broadcast(packet);
        } else if tree {
            ctx.broadcast(packet);
        }
    }

    fn on_packet(&mut self, ctx: &mut Ctx<'_, Self>, packet: Packet<Control>, from: NodeId) {
        if packet.is_data() {
            self.handle_data(ctx, packet, from);
        } else {
            self.handle_control(ctx, packet, from);
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_, Self>, timer: Timer) {
        match timer {
            Timer::Check { source, group } => self.check(ctx, (source, group)),
            Timer::Discovery { group } => {
                let now = ctx.now();
                if self.source_active(group, now) {
                    self.flood_discovery(ctx, group);
                    let h = ctx.set_timer(secs(self.cfg.discovery_period), Timer::Discovery { group });
                    self.flows.get_mut(&group).expect("flow").discovery = Some(h);
                } else if let Some(f) = self.flows.get_mut(&group) {
                    f.discovery = None;
                }
            }
        }
    }

    fn on_link_break(&mut self, _ctx: &mut Ctx<'_, Self>, _next_hop: NodeId, _packet: Packet<Control>) {}
}
