//! Shared-tree multicast in the style of MAODV.
//!
//! Each group has one tree rooted at a leader. Joins flood an RREQ, tree nodes
//! answer with RREPs along reverse routes, and the joiner activates the best
//! branch hop by hop with MACT. Data moves as unicasts over activated edges so
//! that an unreachable next hop is noticed at once. The node downstream of a
//! broken edge repairs; a failed repair makes a member leader of its
//! partition. Group hellos from the leader carry the group sequence number, and
//! when two partitions meet the one with the lower leader id rejoins the other.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kernel::EventHandle;
use crate::proto::{Ctx, DuplicateCache, Packet, Protocol, DEFAULT_TTL};
use crate::{GroupId, NodeId, SimTime};

const HELLO_GROUP: GroupId = GroupId(u32::MAX);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaodvConfig {
    pub group_hello_period: f64,
    pub rrep_wait: f64,
    pub rreq_retries: u8,
    pub route_lifetime: f64,
    pub hello_interval: f64,
    /// A tree neighbor not heard from for this long is considered gone.
    pub neighbor_timeout: f64,
    pub buffer_packets: usize,
    pub jitter: f64,
    /// A non-member sender stays attached this long after its last packet.
    pub sender_idle: f64,
    /// Group hello periods a tree node waits for its upstream to relay the
    /// leader's hello before it detaches.
    pub leader_timeout_periods: f64,
}

impl Default for MaodvConfig {
    fn default() -> Self {
        MaodvConfig {
            group_hello_period: 5.0,
            rrep_wait: 1.0,
            rreq_retries: 2,
            route_lifetime: 10.0,
            hello_interval: 1.0,
            neighbor_timeout: 3.0,
            buffer_packets: 64,
            jitter: 0.01,
            sender_idle: 2.0,
            leader_timeout_periods: 3.0,
        }
    }
}

/// Extra constraints carried by an RREQ from a node that already has a subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejoin {
    /// Reconnect after losing the upstream edge.
    Repair { leader: NodeId, hop_to_leader: u8 },
    /// A leader attaching its tree to the tree of another leader.
    Merge { leader: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MactKind {
    Join,
    Prune,
    /// Hands the upstream role to the receiver.
    Leader,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Control {
    Rreq { id: u32, join: bool, leader: Option<NodeId>, group_seq: u32, rejoin: Option<Rejoin> },
    Rrep { originator: NodeId, rreq_id: u32, leader: NodeId, group_seq: u32, leader_hops: u8 },
    Mact { kind: MactKind, originator: NodeId, rreq_id: u32 },
    /// `via` is set when the relaying node got this hello from its own
    /// upstream; `upstream` is the relaying node's upstream tree neighbor.
    GroupHello { leader: NodeId, group_seq: u32, via: Option<NodeId>, upstream: Option<NodeId> },
    Hello,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Timer {
    Tick,
    RreqDeadline { group: GroupId, rreq_id: u32 },
    GroupHello { group: GroupId },
    Flush { group: GroupId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u8,
    pub dest_seq: u32,
    pub lifetime: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Reply {
    group_seq: u32,
    hops: u8,
    next_hop: NodeId,
    leader: NodeId,
    leader_hops: u8,
}

impl Reply {
    fn rank(&self) -> (u32, Reverse<u8>, Reverse<NodeId>) {
        (self.group_seq, Reverse(self.hops), Reverse(self.next_hop))
    }

    fn better_than(&self, other: &Option<Reply>) -> bool {
        other.map_or(true, |o| self.rank() > o.rank())
    }
}

#[derive(Debug, Clone)]
struct Discovery {
    rreq_id: u32,
    attempt: u8,
    join: bool,
    rejoin: Option<Rejoin>,
    best: Option<Reply>,
    restarted: bool,
}

#[derive(Debug, Clone)]
struct Candidate {
    group: GroupId,
    reply: Reply,
    expires: SimTime,
}

/// Per-group multicast route entry.
#[derive(Debug, Clone, Default)]
pub struct GroupState {
    pub member: bool,
    pub leader: Option<NodeId>,
    pub group_seq: u32,
    pub hop_to_leader: u8,
    pub is_leader: bool,
    /// Activated edge toward the leader.
    pub upstream: Option<NodeId>,
    /// Activated edges away from the leader.
    pub downstream: BTreeSet<NodeId>,
    discovery: Option<Discovery>,
    buffer: VecDeque<Packet<Control>>,
    sending_until: SimTime,
    hello_timer: Option<EventHandle>,
    last_merge: Option<SimTime>,
    confirmed_at: SimTime,
    confirmed: Option<(NodeId, u32)>,
}

impl GroupState {
    pub fn on_tree(&self) -> bool {
        self.is_leader || self.upstream.is_some()
    }

    fn detached_subtree(&self) -> bool {
        !self.on_tree() && !self.downstream.is_empty()
    }

    pub fn activated(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.upstream.iter().copied().chain(self.downstream.iter().copied())
    }

    fn is_tree_neighbor(&self, n: NodeId) -> bool {
        self.upstream == Some(n) || self.downstream.contains(&n)
    }
}

/// Counters for inspection in tests and reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MaodvStats {
    pub rreqs_originated: u32,
    pub repairs: u32,
    pub merges_initiated: u32,
    pub became_leader: u32,
    pub prunes_sent: u32,
    pub data_forwarded: u32,
    pub data_buffered_dropped: u32,
}

pub struct Maodv {
    id: NodeId,
    cfg: MaodvConfig,
    groups: BTreeMap<GroupId, GroupState>,
    routes: BTreeMap<NodeId, RouteEntry>,
    candidates: BTreeMap<(NodeId, u32), Candidate>,
    seen: DuplicateCache<(NodeId, u64)>,
    replied: DuplicateCache<(NodeId, u64, NodeId)>,
    last_heard: BTreeMap<NodeId, SimTime>,
    last_broadcast: Option<SimTime>,
    rreq_id: u32,
    stats: MaodvStats,
}

fn secs(s: f64) -> SimTime {
    SimTime::from_secs(s)
}

impl Maodv {
    pub fn group(&self, g: GroupId) -> Option<&GroupState> {
        self.groups.get(&g)
    }

    pub fn stats(&self) -> MaodvStats {
        self.stats
    }

    pub fn route(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.routes.get(&dest)
    }

    fn entry(&mut self, g: GroupId) -> &mut GroupState {
        self.groups.entry(g).or_default()
    }

    fn jitter(&self) -> SimTime {
        secs(self.cfg.jitter)
    }

    fn bcast(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>, jittered: bool) {
        self.last_broadcast = Some(ctx.now());
        if jittered {
            ctx.broadcast_jittered(p, self.jitter());
        } else {
            ctx.broadcast(p);
        }
    }

    fn send_rreq(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId, join: bool, rejoin: Option<Rejoin>, attempt: u8) {
        self.rreq_id += 1;
        let id = self.rreq_id;
        self.stats.rreqs_originated += 1;
        let st = self.groups.entry(g).or_default();
        st.discovery = Some(Discovery { rreq_id: id, attempt, join, rejoin, best: None, restarted: false });
        let ttl = match rejoin {
            Some(Rejoin::Repair { hop_to_leader, .. }) if attempt == 0 => hop_to_leader.saturating_add(2),
            _ => DEFAULT_TTL,
        };
        let body = Control::Rreq { id, join, leader: st.leader, group_seq: st.group_seq, rejoin };
        let p = ctx.control(g, body, ttl);
        self.seen.insert((p.origin, p.uid), ctx.now());
        self.bcast(ctx, p, false);
        ctx.set_timer(secs(self.cfg.rrep_wait), Timer::RreqDeadline { group: g, rreq_id: id });
    }

    fn become_leader(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId) {
        let me = self.id;
        self.stats.became_leader += 1;
        let st = self.entry(g);
        st.is_leader = true;
        st.upstream = None;
        st.leader = Some(me);
        st.group_seq += 1;
        st.hop_to_leader = 0;
        st.discovery = None;
        if let Some(h) = st.hello_timer.take() {
            ctx.cancel_timer(h);
        }
        let h = ctx.set_timer(SimTime::ZERO, Timer::GroupHello { group: g });
        self.entry(g).hello_timer = Some(h);
        self.flush_buffer(ctx, g);
    }

    fn stop_leading(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId) {
        let st = self.entry(g);
        st.is_leader = false;
        if let Some(h) = st.hello_timer.take() {
            ctx.cancel_timer(h);
        }
    }

    fn flush_buffer(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId) {
        let st = self.entry(g);
        if st.activated().next().is_none() && !st.is_leader {
            return;
        }
        let buffered: Vec<_> = st.buffer.drain(..).collect();
        for p in buffered {
            self.forward_data(ctx, p, None);
        }
    }

    /// Sends a data packet over every activated edge except `from`.
    fn forward_data(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>, from: Option<NodeId>) {
        let Some(st) = self.groups.get(&p.group) else { return };
        let hops: Vec<NodeId> = st.activated().filter(|n| Some(*n) != from).collect();
        if p.ttl == 0 {
            return;
        }
        for n in hops {
            self.stats.data_forwarded += 1;
            ctx.unicast(n, p.clone());
        }
    }

    fn send_mact(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId, to: NodeId, kind: MactKind, originator: NodeId, rreq_id: u32) {
        if kind == MactKind::Prune {
            self.stats.prunes_sent += 1;
        }
        let p = ctx.control(g, Control::Mact { kind, originator, rreq_id }, 1);
        ctx.unicast(to, p);
    }

    fn sending(&self, st: &GroupState, now: SimTime) -> bool {
        st.sending_until > now
    }

    /// Leaves the tree if this node is a non-member leaf with no reason to stay.
    fn maybe_prune(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId) {
        let now = ctx.now();
        let Some(st) = self.groups.get(&g) else { return };
        if st.member || self.sending(st, now) || !st.downstream.is_empty() || st.discovery.is_some() {
            return;
        }
        if !st.on_tree() {
            return;
        }
        let up = st.upstream;
        self.stop_leading(ctx, g);
        let st = self.entry(g);
        st.upstream = None;
        if let Some(up) = up {
            let me = self.id;
            self.send_mact(ctx, g, up, MactKind::Prune, me, 0);
        }
    }

    /// The upstream edge is gone and will not be repaired from here.
    fn orphaned(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId, exclude: Option<NodeId>) {
        let now = ctx.now();
        let st = self.entry(g);
        st.upstream = None;
        st.discovery = None;
        if st.member || st.sending_until > now {
            self.become_leader(ctx, g);
            return;
        }
        let children: Vec<NodeId> = st.downstream.iter().copied().collect();
        let me = self.id;
        match children.len() {
            0 => {}
            1 => {
                let c = children[0];
                self.entry(g).downstream.clear();
                self.send_mact(ctx, g, c, MactKind::Prune, me, 0);
            }
            _ => {
                let next = children.iter().copied().find(|c| Some(*c) != exclude).unwrap_or(children[0]);
                let st = self.entry(g);
                st.downstream.remove(&next);
                st.upstream = Some(next);
                st.confirmed_at = now;
                self.send_mact(ctx, g, next, MactKind::Leader, me, 0);
            }
        }
    }

    fn upstream_lost(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId) {
        let now = ctx.now();
        let Some(st) = self.groups.get_mut(&g) else { return };
        let Some(_) = st.upstream.take() else { return };
        if !(st.member || st.sending_until > now || !st.downstream.is_empty()) {
            return;
        }
        let leader = st.leader.unwrap_or(self.id);
        let hop = st.hop_to_leader;
        self.stats.repairs += 1;
        self.send_rreq(ctx, g, true, Some(Rejoin::Repair { leader, hop_to_leader: hop }), 0);
    }

    /// The leader's hellos stopped arriving through the upstream edge.
    fn detach(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId) {
        let me = self.id;
        let Some(up) = self.entry(g).upstream.take() else { return };
        self.send_mact(ctx, g, up, MactKind::Prune, me, 0);
        self.orphaned(ctx, g, None);
    }

    fn neighbor_lost(&mut self, ctx: &mut Ctx<'_, Self>, n: NodeId) {
        let gs: Vec<GroupId> = self.groups.keys().copied().collect();
        for g in gs {
            let st = self.entry(g);
            if st.upstream == Some(n) {
                self.upstream_lost(ctx, g);
            } else if st.downstream.remove(&n) {
                self.maybe_prune(ctx, g);
            }
        }
        self.last_heard.remove(&n);
    }

    fn may_reply(&self, st: &GroupState, join: bool, leader: Option<NodeId>, group_seq: u32, rejoin: Option<Rejoin>) -> bool {
        if !st.on_tree() {
            return false;
        }
        match rejoin {
            None if join => leader != st.leader || st.group_seq >= group_seq,
            None => true,
            Some(Rejoin::Repair { leader, hop_to_leader }) => st.leader != Some(leader) || st.hop_to_leader <= hop_to_leader,
            Some(Rejoin::Merge { leader }) => st.leader.is_some_and(|l| l > leader),
        }
    }

    fn handle_rreq(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>, from: NodeId) {
        let Some(Control::Rreq { id, join, leader, group_seq, rejoin }) = p.control().cloned() else { return };
        let now = ctx.now();
        let originator = p.origin;
        if originator == self.id {
            return;
        }
        let first = self.seen.insert((originator, p.uid), now);
        let hops = p.hops.saturating_add(1);
        let lifetime = now + secs(self.cfg.route_lifetime);
        let fresher = match self.routes.get(&originator) {
            None => true,
            Some(r) => id > r.dest_seq || (id == r.dest_seq && hops < r.hop_count) || r.lifetime <= now,
        };
        if fresher {
            self.routes.insert(originator, RouteEntry { destination: originator, next_hop: from, hop_count: hops, dest_seq: id, lifetime });
        }
        let g = p.group;
        let empty = GroupState::default();
        let st = self.groups.get(&g).unwrap_or(&empty);
        let (on_tree, detached) = (st.on_tree(), st.detached_subtree());
        if self.may_reply(st, join, leader, group_seq, rejoin) {
            let body = Control::Rrep {
                originator,
                rreq_id: id,
                leader: st.leader.unwrap_or(self.id),
                group_seq: st.group_seq,
                leader_hops: st.hop_to_leader,
            };
            if !self.replied.insert((originator, p.uid, from), now) {
                return;
            }
            let r = ctx.control(g, body, DEFAULT_TTL);
            ctx.unicast(from, r);
            return;
        }
        if !first || detached {
            return;
        }
        if matches!(rejoin, Some(Rejoin::Repair { .. })) && on_tree {
            return;
        }
        let next = p.next_hop_copy();
        if next.ttl > 0 {
            self.bcast(ctx, next, true);
        }
    }

    fn handle_rrep(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>, from: NodeId) {
        let Some(Control::Rrep { originator, rreq_id, leader, group_seq, leader_hops }) = p.control().cloned() else { return };
        let now = ctx.now();
        let g = p.group;
        let reply = Reply { group_seq, hops: p.hops.saturating_add(1), next_hop: from, leader, leader_hops };
        if originator == self.id {
            let st = self.entry(g);
            if st.downstream.contains(&from) && st.leader == Some(leader) {
                return;
            }
            if let Some(d) = st.discovery.as_mut() {
                let better = match d.best {
                    Some(b) if matches!(d.rejoin, Some(Rejoin::Merge { .. })) && b.leader != reply.leader => reply.leader > b.leader,
                    _ => reply.better_than(&d.best),
                };
                if d.rreq_id == rreq_id && better {
                    d.best = Some(reply);
                }
            }
            return;
        }
        let st = self.groups.get(&g);
        if st.is_some_and(|s| s.detached_subtree() || (s.downstream.contains(&from) && s.leader == Some(leader))) {
            return;
        }
        let key = (originator, rreq_id);
        let current = self.candidates.get(&key).filter(|c| c.expires > now).map(|c| c.reply);
        if !reply.better_than(&current) {
            return;
        }
        self.candidates.insert(key, Candidate { group: g, reply, expires: now + secs(self.cfg.route_lifetime) });
        let Some(route) = self.routes.get(&originator).filter(|r| r.lifetime > now).copied() else { return };
        let next = p.next_hop_copy();
        if next.ttl > 0 {
            ctx.unicast(route.next_hop, next);
        }
    }

    fn complete_discovery(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId, rreq_id: u32) {
        let now = ctx.now();
        let me = self.id;
        let retries = self.cfg.rreq_retries;
        let Some(st) = self.groups.get_mut(&g) else { return };
        let Some(d) = st.discovery.clone() else { return };
        if d.rreq_id != rreq_id {
            return;
        }
        st.discovery = None;
        let merging = matches!(d.rejoin, Some(Rejoin::Merge { .. }));
        if merging && !st.is_leader {
            return;
        }
        if st.on_tree() && !merging {
            self.flush_buffer(ctx, g);
            return;
        }
        let best = d.best.filter(|b| if merging { b.leader > me } else { !st.downstream.contains(&b.next_hop) });
        if let Some(best) = best {
            if merging {
                self.stop_leading(ctx, g);
            }
            let st = self.entry(g);
            st.downstream.remove(&best.next_hop);
            st.upstream = Some(best.next_hop);
            st.leader = Some(best.leader);
            st.group_seq = st.group_seq.max(best.group_seq);
            st.hop_to_leader = best.hops.saturating_add(best.leader_hops);
            st.confirmed_at = now;
            self.last_heard.insert(best.next_hop, now);
            self.send_mact(ctx, g, best.next_hop, MactKind::Join, me, rreq_id);
            // let the activation settle along the path before data follows it
            ctx.set_timer(secs(self.cfg.jitter * 5.0), Timer::Flush { group: g });
            return;
        }
        if d.attempt < retries && !merging {
            self.send_rreq(ctx, g, d.join, d.rejoin, d.attempt + 1);
            return;
        }
        match d.rejoin {
            Some(Rejoin::Merge { .. }) => {}
            Some(Rejoin::Repair { .. }) => self.orphaned(ctx, g, None),
            None => {
                let st = self.entry(g);
                if st.member {
                    self.become_leader(ctx, g);
                } else {
                    let dropped = st.buffer.len() as u32;
                    st.buffer.clear();
                    self.stats.data_buffered_dropped += dropped;
                }
            }
        }
    }

    fn handle_mact(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>, from: NodeId) {
        let Some(Control::Mact { kind, originator, rreq_id }) = p.control().cloned() else { return };
        let now = ctx.now();
        let g = p.group;
        let me = self.id;
        match kind {
            MactKind::Join => {
                let cand = self.candidates.get(&(originator, rreq_id)).filter(|c| c.expires > now && c.group == g).cloned();
                let st = self.entry(g);
                if st.on_tree() && !st.is_leader {
                    if let Some(c) = cand.clone().filter(|c| st.leader.is_some_and(|l| c.reply.leader > l) && c.reply.next_hop != from) {
                        // a merge path crossing this tree: turn toward the new leader
                        let old = st.upstream.replace(c.reply.next_hop);
                        st.downstream.remove(&c.reply.next_hop);
                        st.downstream.insert(from);
                        st.leader = Some(c.reply.leader);
                        st.group_seq = st.group_seq.max(c.reply.group_seq);
                        st.hop_to_leader = c.reply.hops.saturating_add(c.reply.leader_hops);
                        st.confirmed_at = now;
                        self.last_heard.insert(c.reply.next_hop, now);
                        if let Some(u) = old.filter(|u| *u != from && *u != c.reply.next_hop) {
                            self.send_mact(ctx, g, u, MactKind::Prune, me, 0);
                        }
                        self.send_mact(ctx, g, c.reply.next_hop, MactKind::Join, originator, rreq_id);
                        return;
                    }
                }
                let st = self.entry(g);
                if st.upstream == Some(from) {
                    // would close a loop
                    self.send_mact(ctx, g, from, MactKind::Prune, me, 0);
                    return;
                }
                if st.on_tree() {
                    st.downstream.insert(from);
                    return;
                }
                match cand {
                    Some(c) if c.reply.next_hop != from => {
                        let st = self.entry(g);
                        st.downstream.insert(from);
                        st.upstream = Some(c.reply.next_hop);
                        st.leader = Some(c.reply.leader);
                        st.group_seq = st.group_seq.max(c.reply.group_seq);
                        st.hop_to_leader = c.reply.hops.saturating_add(c.reply.leader_hops);
                        st.confirmed_at = now;
                        self.last_heard.insert(c.reply.next_hop, now);
                        self.send_mact(ctx, g, c.reply.next_hop, MactKind::Join, originator, rreq_id);
                    }
                    _ => self.send_mact(ctx, g, from, MactKind::Prune, me, 0),
                }
            }
            MactKind::Prune => {
                let st = self.entry(g);
                if st.upstream == Some(from) {
                    self.orphaned(ctx, g, None);
                } else if st.downstream.remove(&from) {
                    self.maybe_prune(ctx, g);
                }
            }
            MactKind::Leader => {
                let st = self.entry(g);
                if st.upstream != Some(from) {
                    return;
                }
                st.downstream.insert(from);
                self.orphaned(ctx, g, Some(from));
            }
        }
    }

    fn handle_group_hello(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>, from: NodeId) {
        let Some(Control::GroupHello { leader, group_seq, via, upstream }) = p.control().cloned() else { return };
        let now = ctx.now();
        let g = p.group;
        let first = self.seen.insert((p.origin, p.uid), now);
        let me = self.id;
        let period = secs(self.cfg.group_hello_period);
        self.check_edge(ctx, g, from, upstream == Some(me));
        let st = self.entry(g);
        let mut relay = first;
        if st.on_tree() {
            if st.upstream == Some(from) && via == Some(leader) {
                let fresh = st.confirmed != Some((leader, group_seq));
                relay |= fresh && !st.downstream.is_empty();
                st.confirmed = Some((leader, group_seq));
                st.confirmed_at = now;
                st.leader = Some(leader);
                st.group_seq = st.group_seq.max(group_seq);
                st.hop_to_leader = p.hops.saturating_add(1);
            } else if st.is_leader && leader != me {
                let due = st.last_merge.map_or(true, |t| now.saturating_sub(t) >= period);
                if me < leader && st.discovery.is_none() && due {
                    st.last_merge = Some(now);
                    self.stats.merges_initiated += 1;
                    self.send_rreq(ctx, g, true, Some(Rejoin::Merge { leader: me }), 0);
                }
            } else if st.leader == Some(leader) {
                st.group_seq = st.group_seq.max(group_seq);
            }
        } else {
            st.leader = Some(leader);
            st.group_seq = st.group_seq.max(group_seq);
            let retry = st.discovery.as_ref().is_some_and(|d| d.join && d.rejoin.is_none() && d.best.is_none() && !d.restarted);
            if first && retry {
                let attempt = st.discovery.as_ref().map_or(0, |d| d.attempt);
                self.send_rreq(ctx, g, true, None, attempt);
                if let Some(d) = self.entry(g).discovery.as_mut() {
                    d.restarted = true;
                }
            }
        }
        if relay && leader != me {
            let st = self.entry(g);
            let via = (st.on_tree() && st.confirmed == Some((leader, group_seq))).then_some(leader);
            let next = p.next_hop_copy().with_control(Control::GroupHello { leader, group_seq, via, upstream: st.upstream });
            if next.ttl > 0 {
                self.bcast(ctx, next, true);
            }
        }
    }

    /// Reconciles the edge to `n` with what `n` says about it.
    fn check_edge(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId, n: NodeId, claims_me: bool) {
        let me = self.id;
        let st = self.entry(g);
        match (claims_me, st.downstream.contains(&n)) {
            (true, false) if st.on_tree() && st.upstream != Some(n) => {
                st.downstream.insert(n);
            }
            (true, false) => self.send_mact(ctx, g, n, MactKind::Prune, me, 0),
            (false, true) => {
                st.downstream.remove(&n);
                self.maybe_prune(ctx, g);
            }
            _ => {}
        }
    }

    fn handle_data(&mut self, ctx: &mut Ctx<'_, Self>, p: Packet<Control>, from: NodeId) {
        let now = ctx.now();
        let Some(st) = self.groups.get(&p.group) else { return };
        if !st.is_tree_neighbor(from) {
            return;
        }
        if !self.seen.insert((p.origin, p.uid), now) {
            return;
        }
        if st.member && p.origin != self.id {
            ctx.deliver(&p);
        }
        let next = p.next_hop_copy();
        self.forward_data(ctx, next, Some(from));
    }

    fn tick(&mut self, ctx: &mut Ctx<'_, Self>) {
        let now = ctx.now();
        let timeout = secs(self.cfg.neighbor_timeout);
        let mut tree_neighbors = BTreeSet::new();
        for st in self.groups.values() {
            tree_neighbors.extend(st.activated());
        }
        for n in &tree_neighbors {
            let heard = self.last_heard.get(n).copied().unwrap_or(SimTime::ZERO);
            if now.saturating_sub(heard) > timeout {
                self.neighbor_lost(ctx, *n);
            }
        }
        let idle: Vec<GroupId> = self
            .groups
            .iter()
            .filter(|(_, s)| !s.member && s.sending_until <= now && s.sending_until > SimTime::ZERO)
            .map(|(g, _)| *g)
            .collect();
        for g in idle {
            self.maybe_prune(ctx, g);
        }
        let silence = secs(self.cfg.group_hello_period * self.cfg.leader_timeout_periods);
        let cut_off: Vec<GroupId> = self
            .groups
            .iter()
            .filter(|(_, s)| s.upstream.is_some() && now.saturating_sub(s.confirmed_at) > silence)
            .map(|(g, _)| *g)
            .collect();
        for g in cut_off {
            self.detach(ctx, g);
        }
        self.candidates.retain(|_, c| c.expires > now);
        self.routes.retain(|_, r| r.lifetime > now);
        let on_any_tree = self.groups.values().any(|s| s.activated().next().is_some());
        let quiet = self.last_broadcast.map_or(true, |t| now.saturating_sub(t) >= secs(self.cfg.hello_interval));
        if on_any_tree && quiet {
            let p = ctx.control(HELLO_GROUP, Control::Hello, 1);
            self.bcast(ctx, p, false);
        }
        ctx.set_timer(secs(self.cfg.hello_interval), Timer::Tick);
    }

    fn group_hello_tick(&mut self, ctx: &mut Ctx<'_, Self>, g: GroupId) {
        let me = self.id;
        let period = secs(self.cfg.group_hello_period);
        let st = self.entry(g);
        if !st.is_leader {
            st.hello_timer = None;
            return;
        }
        st.group_seq += 1;
        let seq = st.group_seq;
        let p = ctx.control(g, Control::GroupHello { leader: me, group_seq: seq, via: Some(me), upstream: None }, DEFAULT_TTL);
        self.seen.insert((p.origin, p.uid), ctx.now());
        self.bcast(ctx, p, false);
        let h = ctx.set_timer(period, Timer::GroupHello { group: g });
        self.entry(g).hello_timer = Some(h);
    }
}

impl Protocol for Maodv {
    type Control = Control;
    type Timer = Timer;
    type Config = MaodvConfig;

    const NAME: &'static str = "maodv";

    fn new(id: NodeId, config: &MaodvConfig) -> Self {
        let horizon = SimTime::from_secs(30.0);
        Maodv {
            id,
            cfg: *config,
            groups: BTreeMap::new(),
            routes: BTreeMap::new(),
            candidates: BTreeMap::new(),
            seen: DuplicateCache::new(horizon),
            replied: DuplicateCache::new(horizon),
            last_heard: BTreeMap::new(),
            last_broadcast: None,
            rreq_id: 0,
            stats: MaodvStats::default(),
        }
    }

    fn start(&mut self, ctx: &mut Ctx<'_, Self>) {
        let offset = ctx.rng().gen_range(0..secs(self.cfg.hello_interval).as_micros().max(1));
        ctx.set_timer(SimTime::from_micros(offset), Timer::Tick);
    }

    fn join(&mut self, ctx: &mut Ctx<'_, Self>, group: GroupId) {
        let st = self.entry(group);
        st.member = true;
        if st.on_tree() || st.discovery.is_some() {
            return;
        }
        self.send_rreq(ctx, group, true, None, 0);
    }

    fn leave(&mut self, ctx: &mut Ctx<'_, Self>, group: GroupId) {
        let me = self.id;
        let st = self.entry(group);
        st.member = false;
        if st.is_leader && !st.downstream.is_empty() {
            self.stop_leading(ctx, group);
            let st = self.entry(group);
            let next = *st.downstream.iter().next().expect("non-empty");
            st.downstream.remove(&next);
            st.upstream = Some(next);
            st.confirmed_at = ctx.now();
            self.send_mact(ctx, group, next, MactKind::Leader, me, 0);
        }
        self.maybe_prune(ctx, group);
    }

    fn on_app_data(&mut self, ctx: &mut Ctx<'_, Self>, packet: Packet<Control>) {
        let now = ctx.now();
        let g = packet.group;
        self.seen.insert((packet.origin, packet.uid), now);
        let idle = secs(self.cfg.sender_idle);
        let cap = self.cfg.buffer_packets;
        let st = self.entry(g);
        st.sending_until = now + idle;
        let attached = st.activated().next().is_some() || st.is_leader;
        if attached && st.buffer.is_empty() {
            self.forward_data(ctx, packet, None);
            return;
        }
        if st.buffer.len() >= cap {
            st.buffer.pop_front();
            self.stats.data_buffered_dropped += 1;
        }
        let st = self.entry(g);
        st.buffer.push_back(packet);
        if !attached && st.discovery.is_none() {
            let join = st.member;
            self.send_rreq(ctx, g, join, None, 0);
        }
    }

    fn on_packet(&mut self, ctx: &mut Ctx<'_, Self>, packet: Packet<Control>, from: NodeId) {
        self.last_heard.insert(from, ctx.now());
        match packet.control() {
            None => self.handle_data(ctx, packet, from),
            Some(Control::Rreq { .. }) => self.handle_rreq(ctx, packet, from),
            Some(Control::Rrep { .. }) => self.handle_rrep(ctx, packet, from),
            Some(Control::Mact { .. }) => self.handle_mact(ctx, packet, from),
            Some(Control::GroupHello { .. }) => self.handle_group_hello(ctx, packet, from),
            Some(Control::Hello) => {}
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_, Self>, timer: Timer) {
        match timer {
            Timer::Tick => self.tick(ctx),
            Timer::RreqDeadline { group, rreq_id } => self.complete_discovery(ctx, group, rreq_id),
            Timer::GroupHello { group } => self.group_hello_tick(ctx, group),
            Timer::Flush { group } => self.flush_buffer(ctx, group),
        }
    }

    fn on_link_break(&mut self, ctx: &mut Ctx<'_, Self>, next_hop: NodeId, _packet: Packet<Control>) {
        self.neighbor_lost(ctx, next_hop);
    }
}

/// Checks that upstream pointers of `g` contain no cycle and that every
/// activated edge is recorded at both ends.
pub fn tree_is_consistent(nodes: &[Maodv], g: GroupId) -> bool {
    for n in nodes {
        let Some(st) = n.group(g) else { continue };
        let mut seen = BTreeSet::new();
        let mut cur = n.id;
        loop {
            if !seen.insert(cur) {
                return false;
            }
            match nodes[cur.index()].group(g).and_then(|s| s.upstream) {
                Some(up) => cur = up,
                None => break,
            }
        }
        if let Some(up) = st.upstream {
            if !nodes[up.index()].group(g).is_some_and(|s| s.downstream.contains(&n.id)) {
                return false;
            }
        }
    }
    true
}

/// Leaders currently claiming `g`.
pub fn leaders(nodes: &[Maodv], g: GroupId) -> Vec<NodeId> {
    nodes.iter().filter(|n| n.group(g).is_some_and(|s| s.is_leader)).map(|n| n.id).collect()
}

/// Nodes reachable from `root` over activated edges of `g`.
pub fn tree_component(nodes: &[Maodv], g: GroupId, root: NodeId) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::from([root]);
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        let Some(st) = nodes[n.index()].group(g) else { continue };
        for m in st.activated() {
            if out.insert(m) {
                stack.push(m);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::testkit::{fixed_medium, line_medium};
    use crate::net::Network;
    use crate::radio::LinkCut;
    use crate::traffic::CbrFlow;

    const G: GroupId = GroupId(0);

    fn net(medium: crate::radio::Medium, seed: u64) -> Network<Maodv> {
        Network::new(medium, &MaodvConfig::default(), seed)
    }

    fn flow(source: u32, start: f64, stop: f64) -> CbrFlow {
        CbrFlow { flow_id: 0, source: NodeId(source), group: G, packet_size: 512, interval: 0.25, start, stop }
    }

    fn st(n: &Network<Maodv>, id: u32) -> &GroupState {
        n.node(NodeId(id)).group(G).expect("group state")
    }

    #[test]
    fn first_member_becomes_leader() {
        let mut n = net(line_medium(3, 100.0, 30.0), 1);
        n.join_at(NodeId(1), G, SimTime::ZERO);
        n.run_until(SimTime::from_secs(5.0));
        let s = st(&n, 1);
        assert!(s.is_leader && s.leader == Some(NodeId(1)));
        assert_eq!(n.node(NodeId(1)).stats().rreqs_originated, 3);
    }

    #[test]
    fn member_on_tree_does_not_rediscover() {
        let mut n = net(line_medium(3, 100.0, 30.0), 1);
        n.join_at(NodeId(0), G, SimTime::ZERO);
        n.join_at(NodeId(2), G, SimTime::from_secs(5.0));
        n.join_at(NodeId(1), G, SimTime::from_secs(10.0));
        n.run_until(SimTime::from_secs(12.0));
        assert_eq!(n.node(NodeId(1)).stats().rreqs_originated, 0);
        assert!(st(&n, 1).member);
    }

    #[test]
    fn best_reply_prefers_fewer_hops_at_equal_seq() {
        let a = Reply { group_seq: 5, hops: 3, next_hop: NodeId(1), leader: NodeId(9), leader_hops: 0 };
        let b = Reply { group_seq: 5, hops: 2, next_hop: NodeId(4), leader: NodeId(9), leader_hops: 0 };
        let c = Reply { group_seq: 5, hops: 2, next_hop: NodeId(2), leader: NodeId(9), leader_hops: 0 };
        let d = Reply { group_seq: 6, hops: 7, next_hop: NodeId(8), leader: NodeId(9), leader_hops: 0 };
        assert!(b.better_than(&Some(a)));
        assert!(c.better_than(&Some(b)));
        assert!(d.better_than(&Some(c)));
        assert!(a.better_than(&None));
    }

    #[test]
    fn two_hop_path_wins_over_three_hop_path() {
        // 0 joins; leader 4 reachable via 1 (2 hops) or via 2-3 (3 hops)
        let pts = [(0.0, 0.0), (50.0, 0.0), (0.0, 50.0), (50.0, 50.0), (100.0, 0.0)];
        let cuts = [(0, 4), (0, 3), (1, 2), (1, 3), (2, 4)]
            .map(|(a, b)| LinkCut { a: NodeId(a), b: NodeId(b), from: 0.0, until: f64::INFINITY })
            .to_vec();
        let mut n = net(fixed_medium(&pts, 30.0).with_cuts(cuts), 2);
        n.join_at(NodeId(4), G, SimTime::ZERO);
        n.join_at(NodeId(0), G, SimTime::from_secs(5.0));
        n.run_until(SimTime::from_secs(8.0));
        assert_eq!(st(&n, 0).upstream, Some(NodeId(1)));
        assert_eq!(st(&n, 0).hop_to_leader, 2);
        assert!(!st(&n, 2).on_tree());
    }

    #[test]
    fn diamond_activates_lower_id_branch_only() {
        // 0 - {1, 2} - 3, member 3 leads, 0 joins
        let pts = [(0.0, 0.0), (100.0, 60.0), (100.0, -60.0), (200.0, 0.0)];
        let mut n = net(fixed_medium(&pts, 40.0), 3);
        n.add_group(G, [NodeId(0), NodeId(3)]);
        n.join_at(NodeId(3), G, SimTime::ZERO);
        n.join_at(NodeId(0), G, SimTime::from_secs(5.0));
        n.add_flow(flow(3, 10.0, 20.0));
        n.run_until(SimTime::from_secs(25.0));
        assert_eq!(st(&n, 0).upstream, Some(NodeId(1)));
        assert_eq!(st(&n, 1).downstream, BTreeSet::from([NodeId(0)]));
        assert!(!st(&n, 2).on_tree());
        assert_eq!(n.node(NodeId(2)).stats().data_forwarded, 0);
        assert_eq!(n.node(NodeId(1)).stats().data_forwarded, 40);
        assert_eq!(n.ledger().pdr().unwrap(), 1.0);
        assert!(tree_is_consistent(n.nodes(), G));
    }

    #[test]
    fn static_tree_delivers_every_packet_once() {
        // 10 nodes on a 5x2 grid, 100 m spacing
        let pts: Vec<(f64, f64)> = (0..10).map(|i| ((i % 5) as f64 * 100.0, (i / 5) as f64 * 100.0)).collect();
        let members = [0u32, 3, 4, 6, 9];
        let mut n = net(fixed_medium(&pts, 60.0), 4);
        n.add_group(G, members.map(NodeId));
        for (k, m) in members.iter().enumerate() {
            n.join_at(NodeId(*m), G, SimTime::from_secs(k as f64 * 0.4));
        }
        n.add_flow(flow(0, 10.0, 50.0));
        n.run_until(SimTime::from_secs(55.0));
        assert_eq!(leaders(n.nodes(), G).len(), 1);
        let comp = tree_component(n.nodes(), G, NodeId(0));
        assert!(members.iter().all(|m| comp.contains(&NodeId(*m))));
        assert!(tree_is_consistent(n.nodes(), G));
        assert_eq!(n.ledger().delivered(), 160 * 4);
        assert_eq!(n.ledger().duplicate_deliveries, 0);
    }

    #[test]
    fn interior_node_fans_out_to_other_branches() {
        // star: center 0 with leaves 1, 2, 3; leaves are members, 1 sends
        let pts = [(0.0, 0.0), (100.0, 0.0), (-50.0, 86.6), (-50.0, -86.6)];
        let mut n = net(fixed_medium(&pts, 30.0), 5);
        n.add_group(G, [NodeId(1), NodeId(2), NodeId(3)]);
        for m in 1..=3 {
            n.join_at(NodeId(m), G, SimTime::from_secs(m as f64 * 4.0));
        }
        n.add_flow(CbrFlow { interval: 1.0, ..flow(1, 20.0, 20.5) });
        n.run_until(SimTime::from_secs(25.0));
        assert_eq!(st(&n, 0).activated().count(), 3);
        assert_eq!(n.node(NodeId(0)).stats().data_forwarded, 2);
        assert_eq!(n.ledger().delivered(), 2);
    }

    #[test]
    fn member_leaving_cascades_prune_to_next_member() {
        let mut n = net(line_medium(5, 100.0, 40.0), 6);
        n.join_at(NodeId(0), G, SimTime::ZERO);
        n.join_at(NodeId(2), G, SimTime::from_secs(5.0));
        n.join_at(NodeId(4), G, SimTime::from_secs(8.0));
        n.leave_at(NodeId(4), G, SimTime::from_secs(15.0));
        n.run_until(SimTime::from_secs(14.0));
        assert!(st(&n, 3).on_tree());
        n.run_until(SimTime::from_secs(20.0));
        assert!(!st(&n, 4).on_tree());
        assert!(!st(&n, 3).on_tree());
        assert!(st(&n, 2).on_tree() && st(&n, 2).downstream.is_empty());
        assert!(st(&n, 1).on_tree());
        assert_eq!(n.node(NodeId(4)).stats().prunes_sent + n.node(NodeId(3)).stats().prunes_sent, 2);
        assert_eq!(n.node(NodeId(2)).stats().prunes_sent, 0);
    }

    #[test]
    fn relay_left_with_one_next_hop_prunes_up_to_leader() {
        let mut n = net(line_medium(4, 100.0, 40.0), 7);
        n.join_at(NodeId(0), G, SimTime::ZERO);
        n.join_at(NodeId(3), G, SimTime::from_secs(5.0));
        n.leave_at(NodeId(3), G, SimTime::from_secs(10.0));
        n.run_until(SimTime::from_secs(15.0));
        for i in 1..=3 {
            assert!(!st(&n, i).on_tree(), "node {i} still attached");
        }
        assert!(st(&n, 0).is_leader && st(&n, 0).downstream.is_empty());
    }

    #[test]
    fn repair_reconnects_around_cut_link() {
        // diamond 0 - {1, 2} - 3, leader 0, member 3 initially via 1
        let pts = [(0.0, 0.0), (100.0, 60.0), (100.0, -60.0), (200.0, 0.0)];
        let cut = LinkCut { a: NodeId(1), b: NodeId(3), from: 20.0, until: f64::INFINITY };
        let mut n = net(fixed_medium(&pts, 60.0).with_cuts(vec![cut]), 8);
        n.add_group(G, [NodeId(0), NodeId(3)]);
        n.join_at(NodeId(0), G, SimTime::ZERO);
        n.join_at(NodeId(3), G, SimTime::from_secs(5.0));
        n.add_flow(flow(0, 10.0, 50.0));
        n.run_until(SimTime::from_secs(19.0));
        assert_eq!(st(&n, 3).upstream, Some(NodeId(1)));
        n.run_until(SimTime::from_secs(55.0));
        assert_eq!(st(&n, 3).upstream, Some(NodeId(2)));
        assert!(n.node(NodeId(3)).stats().repairs >= 1);
        assert!(!st(&n, 1).on_tree());
        assert_eq!(leaders(n.nodes(), G), vec![NodeId(0)]);
        assert_eq!(n.ledger().pdr_since(SimTime::from_secs(30.0)).unwrap(), 1.0);
        assert!(n.ledger().delivered() < 160);
    }

    #[test]
    fn isolated_member_becomes_leader_of_its_partition() {
        let cut = LinkCut { a: NodeId(1), b: NodeId(2), from: 10.0, until: f64::INFINITY };
        let mut n = net(line_medium(3, 100.0, 40.0).with_cuts(vec![cut]), 9);
        n.join_at(NodeId(0), G, SimTime::ZERO);
        n.join_at(NodeId(2), G, SimTime::from_secs(5.0));
        n.run_until(SimTime::from_secs(9.0));
        assert_eq!(st(&n, 2).leader, Some(NodeId(0)));
        n.run_until(SimTime::from_secs(25.0));
        assert!(st(&n, 2).is_leader);
        assert!(!st(&n, 1).on_tree());
        assert_eq!(leaders(n.nodes(), G), vec![NodeId(0), NodeId(2)]);
    }

    #[test]
    fn partitions_merge_through_lower_id_leader() {
        // two clusters 0..=4 and 5..=9 on one line, joined at the 4-5 link after 20 s
        let cut = LinkCut { a: NodeId(4), b: NodeId(5), from: 0.0, until: 20.0 };
        let mut n = net(line_medium(10, 100.0, 60.0).with_cuts(vec![cut]), 10);
        n.join_at(NodeId(3), G, SimTime::ZERO);
        n.join_at(NodeId(9), G, SimTime::ZERO);
        n.join_at(NodeId(1), G, SimTime::from_secs(6.0));
        n.join_at(NodeId(7), G, SimTime::from_secs(6.0));
        n.run_until(SimTime::from_secs(19.0));
        assert_eq!(leaders(n.nodes(), G), vec![NodeId(3), NodeId(9)]);
        n.run_until(SimTime::from_secs(45.0));
        assert!(n.node(NodeId(3)).stats().merges_initiated >= 1);
        assert_eq!(n.node(NodeId(9)).stats().merges_initiated, 0);
        assert_eq!(leaders(n.nodes(), G), vec![NodeId(9)]);
        let comp = tree_component(n.nodes(), G, NodeId(9));
        assert!([1, 3, 7, 9].iter().all(|m| comp.contains(&NodeId(*m))));
        assert!(tree_is_consistent(n.nodes(), G));
        assert_eq!(st(&n, 1).leader, Some(NodeId(9)));
    }

    #[test]
    fn non_member_sender_attaches_as_forwarder() {
        let mut n = net(line_medium(4, 100.0, 40.0), 11);
        n.add_group(G, [NodeId(3)]);
        n.join_at(NodeId(3), G, SimTime::ZERO);
        n.add_flow(flow(0, 5.0, 15.0));
        n.run_until(SimTime::from_secs(25.0));
        let s = n.node(NodeId(0)).stats();
        assert_eq!(s.rreqs_originated, 1);
        // everything buffered during discovery is sent once attached
        assert_eq!(n.ledger().delivered(), 40);
        // the idle sender prunes itself afterwards
        assert!(!st(&n, 0).on_tree());
    }

    #[test]
    fn group_seq_never_decreases() {
        let mut n = net(line_medium(6, 100.0, 60.0), 12);
        for i in [0u32, 2, 5] {
            n.join_at(NodeId(i), G, SimTime::from_secs(i as f64));
        }
        let mut last = vec![0u32; 6];
        for t in 1..60 {
            n.run_until(SimTime::from_secs(t as f64));
            for (i, l) in last.iter_mut().enumerate() {
                let s = n.node(NodeId(i as u32)).group(G).map_or(0, |s| s.group_seq);
                assert!(s >= *l);
                *l = s;
            }
        }
    }
    #[test]
    fn simultaneous_joiners_in_one_cluster_settle_on_a_single_tree() {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| ((i % 4) as f64 * 30.0, (i / 4) as f64 * 30.0)).collect();
        let mut n = net(fixed_medium(&pts, 60.0), 13);
        n.add_group(G, (0..8).map(NodeId));
        for i in 0..8 {
            n.join_at(NodeId(i), G, SimTime::ZERO);
        }
        n.add_flow(flow(0, 20.0, 50.0));
        n.run_until(SimTime::from_secs(55.0));
        assert_eq!(leaders(n.nodes(), G).len(), 1);
        assert!(tree_is_consistent(n.nodes(), G));
        assert_eq!(n.ledger().pdr().unwrap(), 1.0);
    }

    #[test]
    fn merge_crosses_the_lower_leaders_own_tree() {
        // tree {0, 1, 2} led by 0 must reach leader 5 through its own relays
        let cut = LinkCut { a: NodeId(2), b: NodeId(3), from: 0.0, until: 20.0 };
        let mut n = net(line_medium(6, 100.0, 60.0).with_cuts(vec![cut]), 14);
        n.join_at(NodeId(0), G, SimTime::ZERO);
        n.join_at(NodeId(5), G, SimTime::ZERO);
        n.join_at(NodeId(2), G, SimTime::from_secs(4.0));
        n.run_until(SimTime::from_secs(19.0));
        assert_eq!(leaders(n.nodes(), G), vec![NodeId(0), NodeId(5)]);
        n.run_until(SimTime::from_secs(50.0));
        assert_eq!(leaders(n.nodes(), G), vec![NodeId(5)]);
        assert!(tree_is_consistent(n.nodes(), G));
        let comp = tree_component(n.nodes(), G, NodeId(5));
        assert!([0, 2, 5].iter().all(|m| comp.contains(&NodeId(*m))));
    }

    #[test]
    fn concurrent_merges_settle_on_the_highest_leader() {
        let cuts = [(2, 3), (5, 6)].map(|(a, b)| LinkCut { a: NodeId(a), b: NodeId(b), from: 0.0, until: 20.0 }).to_vec();
        let mut n = net(line_medium(9, 100.0, 60.0).with_cuts(cuts), 15);
        for m in [1, 4, 8] {
            n.join_at(NodeId(m), G, SimTime::ZERO);
        }
        n.run_until(SimTime::from_secs(19.0));
        assert_eq!(leaders(n.nodes(), G), vec![NodeId(1), NodeId(4), NodeId(8)]);
        n.run_until(SimTime::from_secs(31.0));
        assert_eq!(leaders(n.nodes(), G), vec![NodeId(8)]);
        assert!(tree_is_consistent(n.nodes(), G));
        let comp = tree_component(n.nodes(), G, NodeId(8));
        assert!([1, 4, 8].iter().all(|m| comp.contains(&NodeId(*m))));
    }

    mod prop {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]
            #[test]
            fn static_connected_groups_converge_to_one_loop_free_tree(
                seed in 0u64..1000,
                joins in proptest::collection::vec((0u32..12, 0.0f64..10.0), 2..7),
            ) {
                // 3x4 grid, 100 m spacing
                let pts: Vec<(f64, f64)> = (0..12).map(|i| ((i % 4) as f64 * 100.0, (i / 4) as f64 * 100.0)).collect();
                let mut n = net(fixed_medium(&pts, 80.0), seed);
                for &(m, t) in &joins {
                    n.join_at(NodeId(m), G, SimTime::from_secs(t));
                }
                n.run_until(SimTime::from_secs(80.0));
                prop_assert_eq!(leaders(n.nodes(), G).len(), 1);
                prop_assert!(tree_is_consistent(n.nodes(), G));
                let root = leaders(n.nodes(), G)[0];
                let comp = tree_component(n.nodes(), G, root);
                for &(m, _) in &joins {
                    prop_assert!(comp.contains(&NodeId(m)));
                }
            }
        }
    }
}
