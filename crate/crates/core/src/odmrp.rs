//! Mesh multicast in the style of ODMRP.
//!
//! An active source floods a JOIN QUERY every query period. Every node
//! remembers the neighbor it first heard each query from; members answer
//! with a JOIN REPLY that walks those pointers back to the source. Each node
//! a reply passes through becomes a forwarding-group member for a few
//! periods and rebroadcasts the group's data while that soft state lasts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::kernel::EventHandle;
use crate::proto::{Ctx, DuplicateCache, Packet, Protocol, DEFAULT_TTL};
use crate::{GroupId, NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdmrpConfig {
    pub query_period: f64,
    /// Forwarding-group lifetime, in query periods.
    pub fg_timeout_periods: f64,
    pub jitter: f64,
}

impl Default for OdmrpConfig {
    fn default() -> Self {
        OdmrpConfig { query_period: 3.0, fg_timeout_periods: 3.0, jitter: 0.01 }
    }
}

impl OdmrpConfig {
    pub fn fg_timeout(&self) -> f64 {
        self.query_period * self.fg_timeout_periods
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Control {
    JoinQuery { query_seq: u32 },
    JoinReply { source: NodeId, query_seq: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Timer {
    Query { group: GroupId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryCacheEntry {
    pub source: NodeId,
    pub group: GroupId,
    pub query_seq: u32,
    pub previous_hop: NodeId,
    pub received_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardingState {
    pub refreshed_at: SimTime,
    pub expires_at: SimTime,
}

impl ForwardingState {
    pub fn enabled(&self, now: SimTime) -> bool {
        now < self.expires_at
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdmrpStats {
    pub queries_originated: u32,
    pub replies_sent: u32,
    pub replies_forwarded: u32,
    pub replies_suppressed: u32,
    pub stale_replies: u32,
    pub data_forwarded: u32,
}

#[derive(Debug)]
struct SourceState {
    query_seq: u32,
    last_data: SimTime,
    timer: Option<EventHandle>,
}

pub struct Odmrp {
    id: NodeId,
    cfg: OdmrpConfig,
    members: BTreeSet<GroupId>,
    sources: BTreeMap<GroupId, SourceState>,
    queries: BTreeMap<(NodeId, GroupId), QueryCacheEntry>,
    forwarding: BTreeMap<GroupId, ForwardingState>,
    /// Rounds `(source, group, query_seq)` whose reply this node already passed on.
    answered: BTreeSet<(NodeId, GroupId, u32)>,
    seen: DuplicateCache<(NodeId, u64)>,
    stats: OdmrpStats,
}

impl Odmrp {
    pub fn stats(&self) -> OdmrpStats {
        self.stats
    }

    pub fn query_cache(&self, source: NodeId, group: GroupId) -> Option<&QueryCacheEntry> {
        self.queries.get(&(source, group))
    }

    pub fn forwarding_state(&self, group: GroupId) -> Option<&ForwardingState> {
        self.forwarding.get(&group)
    }

    pub fn is_forwarder(&self, group: GroupId, now: SimTime) -> bool {
        self.forwarding.get(&group).is_some_and(|f| f.enabled(now))
    }

    fn period(&self) -> SimTime {
        SimTime::from_secs(self.cfg.query_period)
    }

    fn flood_query(&mut self, ctx: &mut Ctx<'_, Self>, group: GroupId) {
        let st = self.sources.get_mut(&group).expect("source state");
        st.query_seq += 1;
        let q = st.query_seq;
        self.stats.queries_originated += 1;
        let p = ctx.control(group, Control::JoinQuery { query_seq: q }, DEFAULT_TTL);
        self.seen.insert((p.origin, p.uid), ctx.now());
        ctx.broadcast(p);
    }

    fn query_tick(&mut self, ctx: &mut Ctx<'_, Self>, group: GroupId) {
        let now = ctx.now();
        let silence = self.period().mul(2);
        let period = self.period();
        let Some(st) = self.sources.get_mut(&group) else { return };
        if now.saturating_sub(st.last_data) > silence {
            st.timer = None;
            return;
        }
        self.flood_query(ctx, group);
        let h = ctx.set_timer(period, Timer::Query { group });
        self.sources.get_mut(&group).expect("source").timer = Some(h);
    }

    fn handle_query(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>, from: NodeId) {
        let Some(Control::JoinQuery { query_seq }) = p.control().cloned() else { return };
        let now = ctx.now();
        if p.origin == self.id || !self.seen.insert((p.origin, p.uid), now) {
            return;
        }
        let key = (p.origin, p.group);
        if self.queries.get(&key).is_some_and(|e| e.query_seq >= query_seq) {
            return;
        }
        self.queries.insert(key, QueryCacheEntry { source: p.origin, group: p.group, query_seq, previous_hop: from, received_at: now });
        let next = p.next_hop_copy();
        if next.ttl > 0 {
            ctx.broadcast_jittered(next, SimTime::from_secs(self.cfg.jitter));
        }
        if self.members.contains(&p.group) {
            self.stats.replies_sent += 1;
            self.answered.insert((p.origin, p.group, query_seq));
            let r = ctx.control(p.group, Control::JoinReply { source: p.origin, query_seq }, DEFAULT_TTL);
            ctx.unicast(from, r);
        }
    }

    fn handle_reply(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>) {
        let Some(Control::JoinReply { source, query_seq }) = p.control().cloned() else { return };
        let now = ctx.now();
        let g = p.group;
        if source == self.id {
            return;
        }
        let fg_timeout = SimTime::from_secs(self.cfg.fg_timeout());
        let fresh = self
            .queries
            .get(&(source, g))
            .filter(|e| e.query_seq == query_seq && now.saturating_sub(e.received_at) < fg_timeout)
            .copied();
        let Some(entry) = fresh else {
            self.stats.stale_replies += 1;
            return;
        };
        self.forwarding.insert(g, ForwardingState { refreshed_at: now, expires_at: now + fg_timeout });
        if !self.answered.insert((source, g, query_seq)) {
            self.stats.replies_suppressed += 1;
            return;
        }
        self.answered.retain(|(s, gg, q)| !(*s == source && *gg == g && *q < query_seq));
        self.stats.replies_forwarded += 1;
        let next = p.next_hop_copy();
        if next.ttl > 0 {
            ctx.unicast(entry.previous_hop, next);
        }
    }

    fn handle_data(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>) {
        let now = ctx.now();
        if !self.seen.insert((p.origin, p.uid), now) {
            return;
        }
        if p.origin != self.id && self.members.contains(&p.group) {
            ctx.deliver(&p);
        }
        if self.is_forwarder(p.group, now) {
            let next = p.next_hop_copy();
            if next.ttl > 0 {
                self.stats.data_forwarded += 1;
                ctx.broadcast_jittered(next, SimTime::from_secs(self.cfg.jitter));
            }
        }
    }
}

impl Protocol for Odmrp {
    type Control = Control;
    type Timer = Timer;
    type Config = OdmrpConfig;

    const NAME: &'static str = "odmrp";

    fn new(id: NodeId, config: &OdmrpConfig) -> Self {
        Odmrp {
            id,
            cfg: *config,
            members: BTreeSet::new(),
            sources: BTreeMap::new(),
            queries: BTreeMap::new(),
            forwarding: BTreeMap::new(),
            answered: BTreeSet::new(),
            seen: DuplicateCache::new(SimTime::from_secs(30.0)),
            stats: OdmrpStats::default(),
        }
    }

    fn join(&mut self, _ctx: &mut Ctx<'_, Self>, group: GroupId) {
        self.members.insert(group);
    }

    fn leave(&mut self, _ctx: &mut Ctx<'_, Self>, group: GroupId) {
        self.members.remove(&group);
    }

    fn on_app_data(&mut self, ctx: &mut Ctx<'_, Self>, packet: Packet<Control>) {
        let now = ctx.now();
        let g = packet.group;
        let st = self.sources.entry(g).or_insert(SourceState { query_seq: 0, last_data: now, timer: None });
        st.last_data = now;
        if st.timer.is_none() {
            self.flood_query(ctx, g);
            let h = ctx.set_timer(self.period(), Timer::Query { group: g });
            self.sources.get_mut(&g).expect("source").timer = Some(h);
        }
        self.seen.insert((packet.origin, packet.uid), now);
        ctx.broadcast(packet);
    }

    fn on_packet(&mut self, ctx: &mut Ctx<'_, Self>, packet: Packet<Control>, from: NodeId) {
        match packet.control() {
            None => self.handle_data(ctx, packet),
            Some(Control::JoinQuery { .. }) => self.handle_query(ctx, packet, from),
            Some(Control::JoinReply { .. }) => self.handle_reply(ctx, packet),
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_, Self>, timer: Timer) {
        match timer {
            Timer::Query { group } => self.query_tick(ctx, group),
        }
    }

    fn on_link_break(&mut self, _ctx: &mut Ctx<'_, Self>, _next_hop: NodeId, _packet: Packet<Control>) {}
}
