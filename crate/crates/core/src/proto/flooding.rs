use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Ctx, DuplicateCache, Packet, Protocol};
use crate::{GroupId, NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FloodingConfig {
    /// Maximum rebroadcast jitter, seconds.
    pub jitter: f64,
    pub duplicate_horizon: f64,
}

impl Default for FloodingConfig {
    fn default() -> Self {
        FloodingConfig { jitter: 0.01, duplicate_horizon: 30.0 }
    }
}

/// Blind flooding of every data packet. Serves as the delivery ceiling.
pub struct Flooding {
    id: NodeId,
    groups: BTreeSet<GroupId>,
    seen: DuplicateCache<(NodeId, u64)>,
    jitter: SimTime,
}

impl Flooding {
    pub fn is_member(&self, g: GroupId) -> bool {
        self.groups.contains(&g)
    }

    /// Deliver-and-rebroadcast step shared by every node on a flood.
    pub fn flood_forward(&mut self, ctx: &mut Ctx<'_, Self>, packet: Packet<()>) {
        if !self.seen.insert((packet.origin, packet.uid), ctx.now()) {
            return;
        }
        if packet.origin != self.id && self.groups.contains(&packet.group) {
            ctx.deliver(&packet);
        }
        let next = packet.next_hop_copy();
        if next.ttl > 0 {
            ctx.broadcast_jittered(next, self.jitter);
        }
    }
}

impl Protocol for Flooding {
    type Control = ();
    type Timer = ();
    type Config = FloodingConfig;

    const NAME: &'static str = "flooding";

    fn new(id: NodeId, config: &FloodingConfig) -> Self {
        Flooding {
            id,
            groups: BTreeSet::new(),
            seen: DuplicateCache::new(SimTime::from_secs(config.duplicate_horizon)),
            jitter: SimTime::from_secs(config.jitter),
        }
    }

    fn join(&mut self, _ctx: &mut Ctx<'_, Self>, group: GroupId) {
        self.groups.insert(group);
    }

    fn leave(&mut self, _ctx: &mut Ctx<'_, Self>, group: GroupId) {
        self.groups.remove(&group);
    }

    fn on_app_data(&mut self, ctx: &mut Ctx<'_, Self>, packet: Packet<()>) {
        self.seen.insert((packet.origin, packet.uid), ctx.now());
        ctx.broadcast(packet);
    }

    fn on_packet(&mut self, ctx: &mut Ctx<'_, Self>, packet: Packet<()>, _from: NodeId) {
        self.flood_forward(ctx, packet);
    }

    fn on_timer(&mut self, _ctx: &mut Ctx<'_, Self>, _timer: ()) {}

    fn on_link_break(&mut self, _ctx: &mut Ctx<'_, Self>, _next_hop: NodeId, _packet: Packet<()>) {}
}
