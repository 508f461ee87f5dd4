//! Protocol-facing contract shared by every multicast protocol.
//!
//! A protocol instance sees only its own events: application data, packets
//! heard from neighbors, its own timers and unicast link-break notices. Its
//! only outputs go through [`Ctx`]: transmissions, timers and deliveries to
//! the local application. Positions and global topology are never exposed.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{EventHandle, EventQueue};
use crate::metrics::PacketClass;
use crate::net::NetEvent;
use crate::radio::TxMode;
use crate::{GroupId, NodeId, SimTime};

mod flooding;

pub use flooding::{Flooding, FloodingConfig};

/// Hop limit for data packets and network-wide control floods.
pub const DEFAULT_TTL: u8 = 32;
/// Nominal size of a control packet, bytes.
pub const CONTROL_SIZE: u32 = 48;

#[derive(Debug, Clone, PartialEq)]
pub enum Body<C> {
    Control(C),
    /// Application data. `flood` marks a copy sent network-wide rather than
    /// along the protocol's distribution structure.
    Data { flood: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet<C> {
    pub uid: u64,
    pub origin: NodeId,
    pub group: GroupId,
    /// Per-origin data sequence number (0 for control packets).
    pub seq: u32,
    pub ttl: u8,
    pub hops: u8,
    pub size: u32,
    pub body: Body<C>,
}

impl<C> Packet<C> {
    pub fn class(&self) -> PacketClass {
        match self.body {
            Body::Control(_) => PacketClass::Control,
            Body::Data { .. } => PacketClass::Data,
        }
    }

    pub fn is_data(&self) -> bool {
        matches!(self.body, Body::Data { .. })
    }

    pub fn control(&self) -> Option<&C> {
        match &self.body {
            Body::Control(c) => Some(c),
            Body::Data { .. } => None,
        }
    }
}

impl<C: Clone> Packet<C> {
    /// Copy for the next hop: one less ttl, one more hop.
    pub fn next_hop_copy(&self) -> Packet<C> {
        let mut p = self.clone();
        p.ttl = p.ttl.saturating_sub(1);
        p.hops = p.hops.saturating_add(1);
        p
    }

    /// Copy with a replaced control body, same identity.
    pub fn with_control(&self, c: C) -> Packet<C> {
        Packet { body: Body::Control(c), ..self.clone() }
    }
}

/// A per-node multicast protocol state machine.
pub trait Protocol: Sized {
    type Control: Clone + fmt::Debug;
    type Timer: Clone + fmt::Debug;
    type Config: Clone + Default;

    const NAME: &'static str;

    fn new(id: NodeId, config: &Self::Config) -> Self;

    /// Called once at time zero.
    fn start(&mut self, _ctx: &mut Ctx<'_, Self>) {}

    fn join(&mut self, ctx: &mut Ctx<'_, Self>, group: GroupId);

    fn leave(&mut self, ctx: &mut Ctx<'_, Self>, group: GroupId);

    /// A data packet produced by the local application.
    fn on_app_data(&mut self, ctx: &mut Ctx<'_, Self>, packet: Packet<Self::Control>);

    fn on_packet(&mut self, ctx: &mut Ctx<'_, Self>, packet: Packet<Self::Control>, from: NodeId);

    fn on_timer(&mut self, ctx: &mut Ctx<'_, Self>, timer: Self::Timer);

    /// A unicast to `next_hop` found it unreachable at send time.
    fn on_link_break(&mut self, ctx: &mut Ctx<'_, Self>, next_hop: NodeId, packet: Packet<Self::Control>);
}

pub(crate) enum Action<C> {
    Send { mode: TxMode, packet: Packet<C> },
    Deliver(Packet<C>),
}

/// Everything a protocol handler may do.
pub struct Ctx<'a, P: Protocol> {
    pub(crate) node: NodeId,
    pub(crate) queue: &'a mut EventQueue<NetEvent<P>>,
    pub(crate) out: &'a mut Vec<Action<P::Control>>,
    pub(crate) rng: &'a mut ChaCha8Rng,
    pub(crate) uids: &'a mut u64,
}

impl<P: Protocol> Ctx<'_, P> {
    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn id(&self) -> NodeId {
        self.node
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    pub fn new_uid(&mut self) -> u64 {
        *self.uids += 1;
        *self.uids
    }

    /// Fresh control packet originated here.
    pub fn control(&mut self, group: GroupId, body: P::Control, ttl: u8) -> Packet<P::Control> {
        Packet {
            uid: self.new_uid(),
            origin: self.node,
            group,
            seq: 0,
            ttl,
            hops: 0,
            size: CONTROL_SIZE,
            body: Body::Control(body),
        }
    }

    pub fn broadcast(&mut self, packet: Packet<P::Control>) {
        self.out.push(Action::Send { mode: TxMode::Broadcast, packet });
    }

    pub fn unicast(&mut self, to: NodeId, packet: Packet<P::Control>) {
        self.out.push(Action::Send { mode: TxMode::Unicast(to), packet });
    }

    /// Broadcast after a uniform random delay in `[0, max_jitter]`.
    pub fn broadcast_jittered(&mut self, packet: Packet<P::Control>, max_jitter: SimTime) {
        self.send_jittered(TxMode::Broadcast, packet, max_jitter);
    }

    pub fn send_jittered(&mut self, mode: TxMode, packet: Packet<P::Control>, max_jitter: SimTime) {
        if max_jitter == SimTime::ZERO {
            self.out.push(Action::Send { mode, packet });
            return;
        }
        let delay = SimTime::from_micros(self.rng.gen_range(0..=max_jitter.as_micros()));
        let node = self.node;
        self.queue.schedule_in(delay, NetEvent::Transmit { node, mode, packet });
    }

    pub fn set_timer(&mut self, delay: SimTime, timer: P::Timer) -> EventHandle {
        let node = self.node;
        self.queue.schedule_in(delay, NetEvent::Timer { node, timer })
    }

    pub fn cancel_timer(&mut self, handle: EventHandle) -> bool {
        self.queue.cancel(handle)
    }

    /// Hands a data packet to the local application.
    pub fn deliver(&mut self, packet: &Packet<P::Control>) {
        self.out.push(Action::Deliver(packet.clone()));
    }
}

/// Set of recently seen keys; entries expire after `horizon`.
#[derive(Debug, Clone)]
pub struct DuplicateCache<K: Hash + Eq + Clone> {
    horizon: SimTime,
    expiry: HashMap<K, SimTime>,
    order: VecDeque<(SimTime, K)>,
}

impl<K: Hash + Eq + Clone> DuplicateCache<K> {
    pub fn new(horizon: SimTime) -> Self {
        DuplicateCache { horizon, expiry: HashMap::new(), order: VecDeque::new() }
    }

    fn purge(&mut self, now: SimTime) {
        while let Some((t, _)) = self.order.front() {
            if *t > now {
                break;
            }
            let (t, k) = self.order.pop_front().expect("front");
            if self.expiry.get(&k) == Some(&t) {
                self.expiry.remove(&k);
            }
        }
    }

    pub fn contains(&mut self, key: &K, now: SimTime) -> bool {
        self.purge(now);
        self.expiry.contains_key(key)
    }

    /// Returns `true` if the key was not present (first sighting).
    pub fn insert(&mut self, key: K, now: SimTime) -> bool {
        self.purge(now);
        if self.expiry.contains_key(&key) {
            return false;
        }
        let exp = now + self.horizon;
        self.expiry.insert(key.clone(), exp);
        self.order.push_back((exp, key));
        true
    }

    pub fn len(&self) -> usize {
        self.expiry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expiry.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown protocol `{0}` (expected flooding, maodv, odmrp or admr)")]
pub struct UnknownProtocol(pub String);

/// Registered protocol implementations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Flooding,
    Maodv,
    Odmrp,
    Admr,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] = [ProtocolKind::Flooding, ProtocolKind::Maodv, ProtocolKind::Odmrp, ProtocolKind::Admr];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Flooding => "flooding",
            ProtocolKind::Maodv => "maodv",
            ProtocolKind::Odmrp => "odmrp",
            ProtocolKind::Admr => "admr",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        register_protocol(s)
    }
}

/// Resolves a protocol by case-insensitive name.
pub fn register_protocol(name: &str) -> Result<ProtocolKind, UnknownProtocol> {
    ProtocolKind::ALL
        .into_iter()
        .find(|k| k.name().eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| UnknownProtocol(name.to_string()))
}
