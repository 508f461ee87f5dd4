//! Run ledger and the two headline metrics: packet delivery ratio (PDR) and
//! normalized routing overhead (NRO).
//!
//! PDR is unique deliveries over expected deliveries, where each originated
//! data packet is expected at every group member other than its source. NRO
//! is per-hop control transmissions per unique data delivery.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{GroupId, NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketClass {
    Control,
    Data,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no data packets were originated")]
    ZeroOriginated,
    #[error("no data packets were delivered")]
    NoDataDelivered,
    #[error("aggregation cell {0} has no results")]
    EmptyCell(String),
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

#[derive(Debug, Clone, Default)]
struct FlowLedger {
    receivers: usize,
    originated_at: Vec<SimTime>,
    delivered: Vec<u32>,
}

/// Counters for one simulation run.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    pub control_tx: u64,
    pub data_tx: u64,
    /// Unique (origin, seq, receiver) deliveries to expected receivers.
    pub data_rx: u64,
    /// Deliveries to nodes outside the destination group.
    pub stray_deliveries: u64,
    /// Repeat deliveries of an already delivered (origin, seq, receiver).
    pub duplicate_deliveries: u64,
    members: BTreeMap<GroupId, BTreeSet<NodeId>>,
    flows: BTreeMap<(NodeId, GroupId), FlowLedger>,
    seen: HashSet<(NodeId, GroupId, u32, NodeId)>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_group(&mut self, group: GroupId, members: impl IntoIterator<Item = NodeId>) {
        self.members.insert(group, members.into_iter().collect());
    }

    pub fn register_flow(&mut self, origin: NodeId, group: GroupId) {
        let receivers = self.members.get(&group).map(|m| m.iter().filter(|n| **n != origin).count()).unwrap_or(0);
        self.flows.entry((origin, group)).or_default().receivers = receivers;
    }

    pub fn transmissions(&self) -> u64 {
        self.control_tx + self.data_tx
    }

    pub fn count_transmission(&mut self, class: PacketClass) {
        match class {
            PacketClass::Control => self.control_tx += 1,
            PacketClass::Data => self.data_tx += 1,
        }
    }

    /// Records an application-layer origination; `seq` must be the flow's next index.
    pub fn record_origination(&mut self, origin: NodeId, group: GroupId, seq: u32, at: SimTime) {
        let f = self.flows.entry((origin, group)).or_default();
        debug_assert_eq!(f.originated_at.len(), seq as usize, "flow sequence numbers must be dense");
        f.originated_at.push(at);
        f.delivered.push(0);
    }

    /// Records a delivery to the application at `receiver`. Returns `true` if it
    /// was a new unique delivery to an expected receiver.
    pub fn record_delivery(&mut self, receiver: NodeId, origin: NodeId, group: GroupId, seq: u32) -> bool {
        let expected = receiver != origin && self.members.get(&group).is_some_and(|m| m.contains(&receiver));
        if !expected {
            self.stray_deliveries += 1;
            return false;
        }
        if !self.seen.insert((origin, group, seq, receiver)) {
            self.duplicate_deliveries += 1;
            return false;
        }
        self.data_rx += 1;
        if let Some(slot) = self.flows.get_mut(&(origin, group)).and_then(|f| f.delivered.get_mut(seq as usize)) {
            *slot += 1;
        }
        true
    }

    /// Whether `receiver` got packet `seq` of the flow `(origin, group)`.
    pub fn received(&self, receiver: NodeId, origin: NodeId, group: GroupId, seq: u32) -> bool {
        self.seen.contains(&(origin, group, seq, receiver))
    }

    pub fn originated(&self) -> u64 {
        self.flows.values().map(|f| f.originated_at.len() as u64).sum()
    }

    pub fn delivered(&self) -> u64 {
        self.data_rx
    }

    /// Expected and achieved deliveries counting only packets originated at or after `since`.
    fn tally(&self, since: SimTime) -> (u64, u64) {
        let mut expected = 0;
        let mut got = 0;
        for f in self.flows.values() {
            for (at, d) in f.originated_at.iter().zip(&f.delivered) {
                if *at >= since {
                    expected += f.receivers as u64;
                    got += u64::from(*d);
                }
            }
        }
        (expected, got)
    }

    pub fn pdr(&self) -> Result<f64, MetricsError> {
        self.pdr_since(SimTime::ZERO)
    }

    /// PDR over packets originated at or after `since` (the post-stabilization variant).
    pub fn pdr_since(&self, since: SimTime) -> Result<f64, MetricsError> {
        if self.flows.values().all(|f| f.originated_at.iter().all(|t| *t < since)) {
            return Err(MetricsError::ZeroOriginated);
        }
        let (expected, got) = self.tally(since);
        if expected == 0 {
            return Ok(0.0);
        }
        Ok(got as f64 / expected as f64)
    }

    pub fn nro(&self) -> Result<f64, MetricsError> {
        nro(self.control_tx, self.data_rx)
    }
}

/// Control transmissions per delivered data packet.
pub fn nro(control_tx: u64, data_rx: u64) -> Result<f64, MetricsError> {
    if data_rx == 0 {
        return Err(MetricsError::NoDataDelivered);
    }
    Ok(control_tx as f64 / data_rx as f64)
}

/// Outcome of one simulation run; one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub protocol: String,
    pub mobility: String,
    pub max_speed: f64,
    pub seed: u64,
    pub pdr: f64,
    /// `f64::INFINITY` when nothing was delivered.
    pub nro: f64,
    pub link_changes: u64,
    pub control_tx: u64,
    pub delivered: u64,
    pub originated: u64,
    /// PDR over packets originated after the warm-up window.
    pub pdr_post_stabilization: f64,
    pub data_tx: u64,
}

pub const RUN_CSV_HEADER: &str = "protocol,mobility,max_speed,seed,pdr,nro,link_changes,control_tx,delivered,originated";
pub const AGGREGATE_CSV_HEADER: &str = "protocol,mobility,max_speed,mean_pdr,std_pdr,mean_nro,std_nro,n";

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

impl RunResult {
    pub fn nro_is_defined(&self) -> bool {
        self.nro.is_finite()
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.protocol,
            self.mobility,
            fmt_f64(self.max_speed),
            self.seed,
            fmt_f64(self.pdr),
            fmt_f64(self.nro),
            self.link_changes,
            self.control_tx,
            self.delivered,
            self.originated
        )
    }
}

pub fn runs_to_csv(results: &[RunResult]) -> String {
    let mut out = String::from(RUN_CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Parses the per-run CSV written by [`runs_to_csv`]. Columns not present in
/// the CSV are left at zero.
pub fn parse_runs_csv(text: &str) -> Result<Vec<RunResult>, MetricsError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RUN_CSV_HEADER => {}
        _ => return Err(MetricsError::Csv { line: 1, msg: "missing or unexpected header".into() }),
    }
    let mut out = Vec::new();
    for (idx, l) in lines {
        let line = idx + 1;
        if l.trim().is_empty() {
            continue;
        }
        let c: Vec<&str> = l.split(',').collect();
        if c.len() != 10 {
            return Err(MetricsError::Csv { line, msg: format!("expected 10 columns, got {}", c.len()) });
        }
        let f = |s: &str| -> Result<f64, MetricsError> {
            s.parse().map_err(|_| MetricsError::Csv { line, msg: format!("bad number `{s}`") })
        };
        let u = |s: &str| -> Result<u64, MetricsError> {
            s.parse().map_err(|_| MetricsError::Csv { line, msg: format!("bad integer `{s}`") })
        };
        out.push(RunResult {
            protocol: c[0].to_string(),
            mobility: c[1].to_string(),
            max_speed: f(c[2])?,
            seed: u(c[3])?,
            pdr: f(c[4])?,
            nro: f(c[5])?,
            link_changes: u(c[6])?,
            control_tx: u(c[7])?,
            delivered: u(c[8])?,
            originated: u(c[9])?,
            pdr_post_stabilization: 0.0,
            data_tx: 0,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, std, n }
    }

    pub fn std_err(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub protocol: String,
    pub mobility: String,
    pub max_speed: f64,
    pub pdr: Summary,
    pub nro: Summary,
}

impl AggregateRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.protocol,
            self.mobility,
            fmt_f64(self.max_speed),
            fmt_f64(self.pdr.mean),
            fmt_f64(self.pdr.std),
            fmt_f64(self.nro.mean),
            fmt_f64(self.nro.std),
            self.pdr.n
        )
    }
}

/// Groups results by (protocol, mobility, max_speed) in sorted key order.
/// Runs with an undefined NRO are left out of the NRO summary.
pub fn aggregate(results: &[RunResult]) -> Result<Vec<AggregateRow>, MetricsError> {
    type Key = (String, String, u64);
    let mut cells: BTreeMap<Key, Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        cells.entry((r.protocol.clone(), r.mobility.clone(), r.max_speed.to_bits())).or_default().push(r);
    }
    if cells.is_empty() {
        return Err(MetricsError::EmptyCell("<all>".into()));
    }
    let mut rows: Vec<AggregateRow> = cells
        .into_iter()
        .map(|((protocol, mobility, speed), rs)| {
            let pdrs: Vec<f64> = rs.iter().map(|r| r.pdr).collect();
            let nros: Vec<f64> = rs.iter().map(|r| r.nro).filter(|v| v.is_finite()).collect();
            AggregateRow {
                protocol,
                mobility,
                max_speed: f64::from_bits(speed),
                pdr: Summary::of(&pdrs),
                nro: Summary::of(&nros),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        (&a.protocol, &a.mobility).cmp(&(&b.protocol, &b.mobility)).then(a.max_speed.total_cmp(&b.max_speed))
    });
    Ok(rows)
}

/// Looks up one aggregated cell.
pub fn cell<'a>(rows: &'a [AggregateRow], protocol: &str, mobility: &str, max_speed: f64) -> Result<&'a AggregateRow, MetricsError> {
    rows.iter()
        .find(|r| r.protocol == protocol && r.mobility == mobility && r.max_speed == max_speed)
        .ok_or_else(|| MetricsError::EmptyCell(format!("{protocol}/{mobility}/{max_speed}")))
}

pub fn aggregate_to_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}
