//! Scenario files and experiment orchestration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admr::{Admr, AdmrConfig};
use crate::maodv::{Maodv, MaodvConfig};
use crate::metrics::{Ledger, MetricsError, RunResult};
use crate::mobility::{
    generate_manhattan, generate_rpgm_layout, generate_rwp, import_ns2, link_changes, Area, ManhattanParams, MobilityError,
    MobilityPath, RpgmParams, RwpParams,
};
use crate::net::Network;
use crate::odmrp::{Odmrp, OdmrpConfig};
use crate::proto::{Flooding, FloodingConfig, Protocol, ProtocolKind};
use crate::radio::{Medium, RadioParams};
use crate::traffic::{build_flows, build_group_plan, build_group_plan_from_pools, flows_from_table, CbrFlow, GroupPlan, TrafficError, TrafficParams};
use crate::{NodeId, RngStreams, SimTime};

mod sweep;
mod trace;

pub use sweep::{run_sweep, write_sweep, SweepFailure, SweepOutcome, SweepSpec};
pub use trace::{analyze, analyze_paths, TraceAnalysis};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid `{field}`: {msg}")]
    Validation { field: String, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl HarnessError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, HarnessError::Io { .. })
    }
}

fn invalid(field: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation { field: field.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MobilityModel {
    Rwp,
    Rpgm,
    Manhattan,
}

impl MobilityModel {
    pub const ALL: [MobilityModel; 3] = [MobilityModel::Rwp, MobilityModel::Rpgm, MobilityModel::Manhattan];

    pub fn name(self) -> &'static str {
        match self {
            MobilityModel::Rwp => "rwp",
            MobilityModel::Rpgm => "rpgm",
            MobilityModel::Manhattan => "manhattan",
        }
    }
}

impl fmt::Display for MobilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MobilityModel {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MobilityModel::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| invalid("mobility.model", format!("unknown model `{s}` (expected rwp, rpgm or manhattan)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpgmSection {
    pub group_count: usize,
    pub nodes_per_group: usize,
    pub max_deviation: f64,
    pub member_speed_ratio: f64,
}

impl Default for RpgmSection {
    fn default() -> Self {
        let p = RpgmParams::default();
        RpgmSection {
            group_count: p.group_count,
            nodes_per_group: p.nodes_per_group,
            max_deviation: p.max_deviation,
            member_speed_ratio: p.member_speed_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManhattanSection {
    pub h_streets: usize,
    pub v_streets: usize,
    /// Probabilities of turning left, right, or going straight.
    pub turn_probs: [f64; 3],
}

impl Default for ManhattanSection {
    fn default() -> Self {
        let p = ManhattanParams::default();
        ManhattanSection { h_streets: p.h_streets, v_streets: p.v_streets, turn_probs: [p.turn_probs.0, p.turn_probs.1, p.turn_probs.2] }
    }
}

/// Speed settings apply to whichever model is selected; for RPGM they drive
/// the group centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilitySection {
    pub model: MobilityModel,
    pub min_speed: f64,
    pub max_speed: f64,
    pub pause: f64,
    /// Replay an NS2 trace instead of generating motion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    pub rpgm: RpgmSection,
    pub manhattan: ManhattanSection,
}

impl Default for MobilitySection {
    fn default() -> Self {
        MobilitySection {
            model: MobilityModel::Rwp,
            min_speed: 1.0,
            max_speed: 10.0,
            pause: 2.0,
            trace: None,
            rpgm: RpgmSection::default(),
            manhattan: ManhattanSection::default(),
        }
    }
}

impl MobilitySection {
    fn speed_range(&self) -> (f64, f64) {
        if self.max_speed == 0.0 {
            (0.0, 0.0)
        } else {
            (self.min_speed.min(self.max_speed), self.max_speed)
        }
    }

    pub fn rwp(&self) -> RwpParams {
        let (v_min, v_max) = self.speed_range();
        RwpParams { v_min, v_max, pause: self.pause }
    }

    pub fn rpgm_params(&self) -> RpgmParams {
        let (v_min, v_max) = self.speed_range();
        RpgmParams {
            group_count: self.rpgm.group_count,
            nodes_per_group: self.rpgm.nodes_per_group,
            max_deviation: self.rpgm.max_deviation,
            group_v_min: v_min,
            group_v_max: v_max,
            group_pause: self.pause,
            member_speed_ratio: self.rpgm.member_speed_ratio,
        }
    }

    pub fn manhattan_params(&self) -> ManhattanParams {
        let (v_min, v_max) = self.speed_range();
        let [l, r, s] = self.manhattan.turn_probs;
        ManhattanParams { h_streets: self.manhattan.h_streets, v_streets: self.manhattan.v_streets, v_min, v_max, turn_probs: (l, r, s) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub group_count: usize,
    pub members_per_group: usize,
    pub sources_per_group: usize,
    pub sources_are_members: bool,
    pub packet_size: u32,
    pub interval: f64,
    pub start_min: f64,
    pub start_max: f64,
    pub stop_before_end: f64,
    /// Under RPGM, draw each multicast group from one mobility group.
    pub align_with_mobility_groups: bool,
    /// Replay flows from a plain-text table instead of drawing them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flows: Option<PathBuf>,
}

impl Default for TrafficSection {
    fn default() -> Self {
        let t = TrafficParams::default();
        TrafficSection {
            group_count: t.group_count,
            members_per_group: t.members_per_group,
            sources_per_group: t.sources_per_group,
            sources_are_members: t.sources_are_members,
            packet_size: t.packet_size,
            interval: t.interval,
            start_min: t.start_min,
            start_max: t.start_max,
            stop_before_end: t.stop_before_end,
            align_with_mobility_groups: true,
            flows: None,
        }
    }
}

impl TrafficSection {
    pub fn params(&self) -> TrafficParams {
        TrafficParams {
            group_count: self.group_count,
            members_per_group: self.members_per_group,
            sources_per_group: self.sources_per_group,
            sources_are_members: self.sources_are_members,
            packet_size: self.packet_size,
            interval: self.interval,
            start_min: self.start_min,
            start_max: self.start_max,
            stop_before_end: self.stop_before_end,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// Packets originated earlier are left out of the lenient PDR.
    pub warmup: f64,
    /// Sampling step for link-change counting, seconds.
    pub link_sample_dt: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { warmup: 10.0, link_sample_dt: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub flooding: FloodingConfig,
    pub maodv: MaodvConfig,
    pub odmrp: OdmrpConfig,
    pub admr: AdmrConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub nodes: usize,
    pub duration: f64,
    pub seed: u64,
    pub protocol: ProtocolKind,
    pub area: Area,
    pub radio: RadioParams,
    pub mobility: MobilitySection,
    pub traffic: TrafficSection,
    pub metrics: MetricsSection,
    pub protocols: ProtocolSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "default".into(),
            nodes: 50,
            duration: 200.0,
            seed: 1,
            protocol: ProtocolKind::Odmrp,
            area: Area::default(),
            radio: RadioParams::default(),
            mobility: MobilitySection::default(),
            traffic: TrafficSection::default(),
            metrics: MetricsSection::default(),
            protocols: ProtocolSection::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), HarnessError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), HarnessError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be >= 0, got {v}")))
    }
}

fn unit_interval(field: &str, v: f64) -> Result<(), HarnessError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in [0, 1], got {v}")))
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, HarnessError> {
        let s: Scenario = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &std::path::Path) -> Result<Scenario, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
        let mut s = Scenario::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| std::path::Path::new("."));
        for p in [&mut s.mobility.trace, &mut s.traffic.flows].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Checks every field; errors name the offending field path.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.nodes == 0 {
            return Err(invalid("nodes", "need at least one node"));
        }
        positive("duration", self.duration)?;
        positive("area.width", self.area.width)?;
        positive("area.height", self.area.height)?;
        self.radio.validate().map_err(|f| invalid(&format!("radio.{f}"), "out of range"))?;

        let m = &self.mobility;
        non_negative("mobility.min_speed", m.min_speed)?;
        non_negative("mobility.max_speed", m.max_speed)?;
        non_negative("mobility.pause", m.pause)?;
        if m.max_speed > 0.0 && m.min_speed == 0.0 {
            return Err(invalid("mobility.min_speed", "must be positive when max_speed > 0"));
        }
        if m.trace.is_none() {
            match m.model {
                MobilityModel::Rwp => m.rwp().validate().map_err(|e| invalid("mobility", e.to_string()))?,
                MobilityModel::Rpgm => {
                    m.rpgm_params().validate(self.nodes, &self.area).map_err(|e| invalid("mobility.rpgm", e.to_string()))?
                }
                MobilityModel::Manhattan => m.manhattan_params().validate().map_err(|e| invalid("mobility.manhattan", e.to_string()))?,
            }
        }

        let t = &self.traffic.params();
        if t.group_count == 0 {
            return Err(invalid("traffic.group_count", "need at least one group"));
        }
        if t.members_per_group == 0 || t.members_per_group > self.nodes {
            return Err(invalid("traffic.members_per_group", format!("must be in 1..={}", self.nodes)));
        }
        if t.sources_per_group == 0 {
            return Err(invalid("traffic.sources_per_group", "need at least one source"));
        }
        if t.sources_are_members && t.sources_per_group > t.members_per_group {
            return Err(invalid("traffic.sources_per_group", "cannot exceed members_per_group when sources are members"));
        }
        positive("traffic.interval", t.interval)?;
        non_negative("traffic.start_min", t.start_min)?;
        if t.start_max < t.start_min {
            return Err(invalid("traffic.start_max", "must be >= start_min"));
        }
        non_negative("traffic.stop_before_end", t.stop_before_end)?;
        if t.start_max >= self.duration - t.stop_before_end {
            return Err(invalid("traffic.start_max", "flows would start after they stop"));
        }

        non_negative("metrics.warmup", self.metrics.warmup)?;
        positive("metrics.link_sample_dt", self.metrics.link_sample_dt)?;

        let p = &self.protocols;
        non_negative("protocols.flooding.jitter", p.flooding.jitter)?;
        positive("protocols.odmrp.query_period", p.odmrp.query_period)?;
        positive("protocols.odmrp.fg_timeout_periods", p.odmrp.fg_timeout_periods)?;
        positive("protocols.maodv.group_hello_period", p.maodv.group_hello_period)?;
        positive("protocols.maodv.rrep_wait", p.maodv.rrep_wait)?;
        positive("protocols.maodv.hello_interval", p.maodv.hello_interval)?;
        positive("protocols.maodv.neighbor_timeout", p.maodv.neighbor_timeout)?;
        positive("protocols.admr.discovery_period", p.admr.discovery_period)?;
        positive("protocols.admr.repair_timeout", p.admr.repair_timeout)?;
        positive("protocols.admr.join_timeout", p.admr.join_timeout)?;
        unit_interval("protocols.admr.fallback_pdr", p.admr.fallback_pdr)?;
        unit_interval("protocols.admr.fallback_exit", p.admr.fallback_exit)?;
        unit_interval("protocols.admr.interval_weight", p.admr.interval_weight)?;
        if p.admr.repair_threshold == 0 {
            return Err(invalid("protocols.admr.repair_threshold", "must be positive"));
        }
        if p.admr.fallback_window == 0 {
            return Err(invalid("protocols.admr.fallback_window", "must be positive"));
        }
        if p.admr.reconnect_hops == 0 {
            return Err(invalid("protocols.admr.reconnect_hops", "must be positive"));
        }
        Ok(())
    }

    /// Label used in result rows.
    pub fn mobility_label(&self) -> String {
        match &self.mobility.trace {
            Some(_) => "trace".into(),
            None => self.mobility.model.name().into(),
        }
    }
}

/// Node motion for the scenario, plus the node pools of RPGM groups.
pub fn generate_mobility(s: &Scenario) -> Result<(Vec<MobilityPath>, Option<Vec<Vec<NodeId>>>), HarnessError> {
    if let Some(path) = &s.mobility.trace {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
        let paths = import_ns2(&text, Some(s.duration))?;
        if paths.len() != s.nodes {
            return Err(invalid("mobility.trace", format!("trace has {} nodes, scenario has {}", paths.len(), s.nodes)));
        }
        return Ok((paths, None));
    }
    let mut rng = RngStreams::new(s.seed).stream("mobility");
    let m = &s.mobility;
    Ok(match m.model {
        MobilityModel::Rwp => (generate_rwp(&m.rwp(), &s.area, s.nodes, s.duration, &mut rng)?, None),
        MobilityModel::Rpgm => {
            let layout = generate_rpgm_layout(&m.rpgm_params(), &s.area, s.nodes, s.duration, &mut rng)?;
            let groups = layout.groups();
            (layout.paths, Some(groups))
        }
        MobilityModel::Manhattan => (generate_manhattan(&m.manhattan_params(), &s.area, s.nodes, s.duration, &mut rng)?, None),
    })
}

/// Multicast groups and CBR flows for the scenario.
pub fn generate_traffic(s: &Scenario, mobility_groups: Option<&[Vec<NodeId>]>) -> Result<(GroupPlan, Vec<CbrFlow>), HarnessError> {
    let mut rng = RngStreams::new(s.seed).stream("traffic");
    let t = &s.traffic.params();
    let plan = match mobility_groups {
        Some(pools) if s.traffic.align_with_mobility_groups && pools.iter().all(|p| p.len() >= t.members_per_group) => {
            let pools: Vec<Vec<NodeId>> = (0..t.group_count).map(|g| pools[g % pools.len()].clone()).collect();
            build_group_plan_from_pools(&pools, s.nodes, t.members_per_group, t.sources_per_group, t.sources_are_members, &mut rng)?
        }
        _ => build_group_plan(s.nodes, t.group_count, t.members_per_group, t.sources_per_group, t.sources_are_members, &mut rng)?,
    };
    let flows = match &s.traffic.flows {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
            let flows = flows_from_table(&text)?;
            for f in &flows {
                f.validate(s.duration)?;
                if f.source.index() >= s.nodes {
                    return Err(invalid("traffic.flows", format!("flow {} source {} out of range", f.flow_id, f.source)));
                }
                if plan.group(f.group).is_none() {
                    return Err(invalid("traffic.flows", format!("flow {} uses unknown group {}", f.flow_id, f.group)));
                }
            }
            flows
        }
        None => build_flows(&plan, t, s.duration, &mut rng)?,
    };
    Ok((plan, flows))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub event_log: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub event_log: Option<String>,
}

fn simulate<P: Protocol>(medium: Medium, cfg: &P::Config, s: &Scenario, plan: &GroupPlan, flows: &[CbrFlow], opts: &RunOptions) -> (Ledger, Option<String>) {
    let mut net: Network<P> = Network::new(medium, cfg, s.seed);
    if opts.event_log {
        net.enable_event_log();
    }
    for g in &plan.groups {
        net.add_group(g.id, g.members.iter().copied());
        for m in &g.members {
            net.join_at(*m, g.id, SimTime::ZERO);
        }
    }
    for f in flows {
        net.add_flow(*f);
    }
    net.finish(SimTime::from_secs(s.duration));
    let log = net.take_event_log();
    (net.ledger().clone(), log)
}

pub fn run_scenario(s: &Scenario) -> Result<RunResult, HarnessError> {
    run_scenario_with(s, &RunOptions::default()).map(|o| o.result)
}

pub fn run_scenario_with(s: &Scenario, opts: &RunOptions) -> Result<RunOutput, HarnessError> {
    s.validate()?;
    let (paths, pools) = generate_mobility(s)?;
    let changes = link_changes(&paths, s.radio.range, s.metrics.link_sample_dt);
    let (plan, flows) = generate_traffic(s, pools.as_deref())?;
    let medium = Medium::new(paths, s.radio);
    let p = &s.protocols;
    let (ledger, event_log) = match s.protocol {
        ProtocolKind::Flooding => simulate::<Flooding>(medium, &p.flooding, s, &plan, &flows, opts),
        ProtocolKind::Maodv => simulate::<Maodv>(medium, &p.maodv, s, &plan, &flows, opts),
        ProtocolKind::Odmrp => simulate::<Odmrp>(medium, &p.odmrp, s, &plan, &flows, opts),
        ProtocolKind::Admr => simulate::<Admr>(medium, &p.admr, s, &plan, &flows, opts),
    };
    let result = RunResult {
        protocol: s.protocol.name().into(),
        mobility: s.mobility_label(),
        max_speed: s.mobility.max_speed,
        seed: s.seed,
        pdr: ledger.pdr()?,
        nro: ledger.nro().unwrap_or(f64::INFINITY),
        link_changes: changes,
        control_tx: ledger.control_tx,
        delivered: ledger.delivered(),
        originated: ledger.originated(),
        pdr_post_stabilization: ledger.pdr_since(SimTime::from_secs(s.metrics.warmup)).unwrap_or(0.0),
        data_tx: ledger.data_tx,
    };
    Ok(RunOutput { result, event_log })
}
