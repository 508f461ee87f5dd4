//! One simulated network: the event queue, the radio medium, a protocol
//! instance per node, traffic sources and the metrics ledger.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;

use crate::kernel::{EventQueue, RngStreams};
use crate::metrics::Ledger;
use crate::proto::{Action, Body, Ctx, Packet, Protocol, DEFAULT_TTL};
use crate::radio::{Medium, TxMode};
use crate::traffic::CbrFlow;
use crate::{GroupId, NodeId, SimTime};

pub enum NetEvent<P: Protocol> {
    Arrival { node: NodeId, from: NodeId, packet: Packet<P::Control> },
    Timer { node: NodeId, timer: P::Timer },
    /// Deferred (jittered) transmission.
    Transmit { node: NodeId, mode: TxMode, packet: Packet<P::Control> },
    LinkBreak { node: NodeId, next_hop: NodeId, packet: Packet<P::Control> },
    TrafficTick { flow: usize, k: u32 },
    Join { node: NodeId, group: GroupId },
    Leave { node: NodeId, group: GroupId },
    MetricsSample,
    SimEnd,
}

impl<P: Protocol> NetEvent<P> {
    fn describe(&self) -> (Option<NodeId>, &'static str, String) {
        match self {
            NetEvent::Arrival { node, from, packet } => (Some(*node), "rx", describe_packet(packet, Some(*from))),
            NetEvent::Timer { node, timer } => (Some(*node), "timer", format!("{timer:?}")),
            NetEvent::Transmit { node, mode, packet } => (Some(*node), "tx", format!("{mode:?} {}", describe_packet(packet, None))),
            NetEvent::LinkBreak { node, next_hop, .. } => (Some(*node), "linkbreak", format!("next_hop={next_hop}")),
            NetEvent::TrafficTick { flow, k } => (None, "traffic", format!("flow={flow} k={k}")),
            NetEvent::Join { node, group } => (Some(*node), "join", format!("group={group}")),
            NetEvent::Leave { node, group } => (Some(*node), "leave", format!("group={group}")),
            NetEvent::MetricsSample => (None, "sample", String::new()),
            NetEvent::SimEnd => (None, "end", String::new()),
        }
    }
}

fn describe_packet<C: std::fmt::Debug>(p: &Packet<C>, from: Option<NodeId>) -> String {
    let body = match &p.body {
        Body::Control(c) => format!("{c:?}"),
        Body::Data { flood } => format!("Data(seq={} flood={flood})", p.seq),
    };
    match from {
        Some(f) => format!("from={f} uid={} origin={} group={} ttl={} {body}", p.uid, p.origin, p.group, p.ttl),
        None => format!("uid={} origin={} group={} ttl={} {body}", p.uid, p.origin, p.group, p.ttl),
    }
}

pub struct Network<P: Protocol> {
    queue: EventQueue<NetEvent<P>>,
    nodes: Vec<P>,
    medium: Medium,
    ledger: Ledger,
    flows: Vec<CbrFlow>,
    data_seq: BTreeMap<(NodeId, GroupId), u32>,
    radio_rng: ChaCha8Rng,
    proto_rng: ChaCha8Rng,
    uids: u64,
    data_ttl: u8,
    out: Vec<Action<P::Control>>,
    log: Option<String>,
    sample_every: Option<SimTime>,
    components: Vec<usize>,
    started: bool,
}

impl<P: Protocol> Network<P> {
    pub fn new(medium: Medium, config: &P::Config, seed: u64) -> Self {
        let streams = RngStreams::new(seed);
        let nodes = (0..medium.len()).map(|i| P::new(NodeId(i as u32), config)).collect();
        Network {
            queue: EventQueue::new(),
            nodes,
            medium,
            ledger: Ledger::new(),
            flows: Vec::new(),
            data_seq: BTreeMap::new(),
            radio_rng: streams.stream("radio"),
            proto_rng: streams.stream(&format!("protocol/{}", P::NAME)),
            uids: 0,
            data_ttl: DEFAULT_TTL,
            out: Vec::new(),
            log: None,
            sample_every: None,
            components: Vec::new(),
            started: false,
        }
    }

    pub fn set_data_ttl(&mut self, ttl: u8) {
        self.data_ttl = ttl;
    }

    pub fn enable_event_log(&mut self) {
        self.log = Some(String::new());
    }

    pub fn take_event_log(&mut self) -> Option<String> {
        self.log.take()
    }

    /// Records the number of connected components every `every` of simulated time.
    pub fn sample_partitions(&mut self, every: SimTime) {
        self.sample_every = Some(every);
        self.queue.schedule_in(SimTime::ZERO, NetEvent::MetricsSample);
    }

    pub fn partition_samples(&self) -> &[usize] {
        &self.components
    }

    /// Registers the expected receivers of a group with the ledger.
    pub fn add_group(&mut self, group: GroupId, members: impl IntoIterator<Item = NodeId>) {
        self.ledger.register_group(group, members);
    }

    pub fn join_at(&mut self, node: NodeId, group: GroupId, at: SimTime) {
        self.queue.schedule(at, NetEvent::Join { node, group }).expect("join scheduled in the past");
    }

    pub fn leave_at(&mut self, node: NodeId, group: GroupId, at: SimTime) {
        self.queue.schedule(at, NetEvent::Leave { node, group }).expect("leave scheduled in the past");
    }

    pub fn add_flow(&mut self, flow: CbrFlow) {
        self.ledger.register_flow(flow.source, flow.group);
        let idx = self.flows.len();
        self.flows.push(flow);
        if let Some(at) = flow.tick_time(0) {
            self.queue.schedule(at, NetEvent::TrafficTick { flow: idx, k: 0 }).expect("flow starts in the past");
        }
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn node(&self, id: NodeId) -> &P {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[P] {
        &self.nodes
    }

    pub fn medium(&mut self) -> &mut Medium {
        &mut self.medium
    }

    pub fn queue_stats(&self) -> crate::kernel::QueueStats {
        self.queue.stats()
    }

    fn start(&mut self) {
        if self.started {
            return;
        }
        self.started = true;
        for i in 0..self.nodes.len() {
            self.with_ctx(NodeId(i as u32), |p, ctx| p.start(ctx));
        }
    }

    fn with_ctx<F>(&mut self, node: NodeId, f: F)
    where
        F: FnOnce(&mut P, &mut Ctx<'_, P>),
    {
        let mut ctx = Ctx {
            node,
            queue: &mut self.queue,
            out: &mut self.out,
            rng: &mut self.proto_rng,
            uids: &mut self.uids,
        };
        f(&mut self.nodes[node.index()], &mut ctx);
        self.flush(node);
    }

    fn flush(&mut self, node: NodeId) {
        let actions = std::mem::take(&mut self.out);
        for a in actions {
            match a {
                Action::Send { mode, packet } => self.send(node, mode, packet),
                Action::Deliver(p) => {
                    self.ledger.record_delivery(node, p.origin, p.group, p.seq);
                }
            }
        }
    }

    fn send(&mut self, node: NodeId, mode: TxMode, packet: Packet<P::Control>) {
        let now = self.queue.now();
        let outcome = self
            .medium
            .transmit(node, mode, packet.class(), now, &mut self.radio_rng, &mut self.ledger)
            .expect("protocols only address existing nodes");
        if outcome.link_break {
            if let TxMode::Unicast(next_hop) = mode {
                self.queue.schedule_in(SimTime::ZERO, NetEvent::LinkBreak { node, next_hop, packet });
            }
            return;
        }
        for (to, at) in outcome.arrivals {
            self.queue.schedule(at, NetEvent::Arrival { node: to, from: node, packet: packet.clone() }).expect("arrival in future");
        }
    }

    fn log_event(&mut self, at: SimTime, ev: &NetEvent<P>) {
        if let Some(log) = self.log.as_mut() {
            let (node, kind, detail) = ev.describe();
            let node = node.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(log, "{at}\t{node}\t{kind}\t{detail}");
        }
    }

    fn dispatch(&mut self, at: SimTime, ev: NetEvent<P>) {
        self.log_event(at, &ev);
        match ev {
            NetEvent::Arrival { node, from, packet } => self.with_ctx(node, |p, ctx| p.on_packet(ctx, packet, from)),
            NetEvent::Timer { node, timer } => self.with_ctx(node, |p, ctx| p.on_timer(ctx, timer)),
            NetEvent::Transmit { node, mode, packet } => self.send(node, mode, packet),
            NetEvent::LinkBreak { node, next_hop, packet } => {
                self.with_ctx(node, |p, ctx| p.on_link_break(ctx, next_hop, packet))
            }
            NetEvent::TrafficTick { flow, k } => self.traffic_tick(flow, k),
            NetEvent::Join { node, group } => self.with_ctx(node, |p, ctx| p.join(ctx, group)),
            NetEvent::Leave { node, group } => self.with_ctx(node, |p, ctx| p.leave(ctx, group)),
            NetEvent::MetricsSample => {
                let labels = self.medium.connected_components(at.as_secs());
                let mut roots: Vec<usize> = labels;
                roots.sort_unstable();
                roots.dedup();
                self.components.push(roots.len());
                if let Some(every) = self.sample_every {
                    self.queue.schedule_in(every, NetEvent::MetricsSample);
                }
            }
            NetEvent::SimEnd => {}
        }
    }

    fn traffic_tick(&mut self, idx: usize, k: u32) {
        let flow = self.flows[idx];
        let now = self.queue.now();
        let seq_slot = self.data_seq.entry((flow.source, flow.group)).or_insert(0);
        let seq = *seq_slot;
        *seq_slot += 1;
        self.uids += 1;
        let packet = Packet {
            uid: self.uids,
            origin: flow.source,
            group: flow.group,
            seq,
            ttl: self.data_ttl,
            hops: 0,
            size: flow.packet_size,
            body: Body::Data { flood: false },
        };
        self.ledger.record_origination(flow.source, flow.group, seq, now);
        self.with_ctx(flow.source, |p, ctx| p.on_app_data(ctx, packet));
        if let Some(at) = flow.tick_time(k + 1) {
            self.queue.schedule(at, NetEvent::TrafficTick { flow: idx, k: k + 1 }).expect("tick in future");
        }
    }

    /// Dispatches all events up to and including `until`.
    pub fn run_until(&mut self, until: SimTime) -> u64 {
        self.start();
        let mut n = 0;
        while let Some((at, ev)) = self.queue.pop_until(until) {
            self.dispatch(at, ev);
            n += 1;
        }
        let _ = self.queue.run(until, |_, _, _| {});
        n
    }

    /// Runs to `until`, then dispatches a final end marker.
    pub fn finish(&mut self, until: SimTime) -> u64 {
        self.queue.schedule(until, NetEvent::SimEnd).ok();
        self.run_until(until)
    }
}
