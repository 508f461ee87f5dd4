//! Connectivity statistics for a mobility trace.

use std::fmt;

use super::HarnessError;
use crate::mobility::{import_ns2, link_changes, MobilityPath};
use crate::radio::{Medium, RadioParams};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceAnalysis {
    pub nodes: usize,
    pub duration: f64,
    pub range: f64,
    pub sample_dt: f64,
    pub link_changes: u64,
    pub mean_degree: f64,
    /// Mean number of connected components over the samples.
    pub mean_partitions: f64,
    pub max_partitions: usize,
    /// Fraction of samples in which every node can reach every other.
    pub connected_fraction: f64,
}

impl fmt::Display for TraceAnalysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes              {}", self.nodes)?;
        writeln!(f, "duration           {:.3} s", self.duration)?;
        writeln!(f, "range              {} m", self.range)?;
        writeln!(f, "link_changes       {}", self.link_changes)?;
        writeln!(f, "mean_degree        {:.3}", self.mean_degree)?;
        writeln!(f, "mean_partitions    {:.3}", self.mean_partitions)?;
        writeln!(f, "max_partitions     {}", self.max_partitions)?;
        write!(f, "connected_fraction {:.3}", self.connected_fraction)
    }
}

pub fn analyze(text: &str, range: f64, sample_dt: f64) -> Result<TraceAnalysis, HarnessError> {
    let paths = import_ns2(text, None)?;
    analyze_paths(&paths, range, sample_dt)
}

pub fn analyze_paths(paths: &[MobilityPath], range: f64, sample_dt: f64) -> Result<TraceAnalysis, HarnessError> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(HarnessError::Validation { field: "range".into(), msg: "must be positive".into() });
    }
    if !(sample_dt > 0.0 && sample_dt.is_finite()) {
        return Err(HarnessError::Validation { field: "sample_dt".into(), msg: "must be positive".into() });
    }
    let duration = paths.iter().map(|p| p.duration).fold(0.0, f64::max);
    let nodes = paths.len();
    let mut medium = Medium::new(paths.to_vec(), RadioParams { range, ..Default::default() });
    let samples = (duration / sample_dt).floor() as usize + 1;
    let (mut degree_sum, mut part_sum, mut max_parts, mut connected) = (0usize, 0usize, 0usize, 0usize);
    for k in 0..samples {
        let t = (k as f64 * sample_dt).min(duration);
        for i in 0..nodes {
            degree_sum += medium.neighbors(NodeId(i as u32), t).len();
        }
        let labels = medium.connected_components(t);
        let parts = labels.iter().enumerate().filter(|(i, l)| *i == **l).count();
        part_sum += parts;
        max_parts = max_parts.max(parts);
        if parts <= 1 {
            connected += 1;
        }
    }
    let s = samples as f64;
    Ok(TraceAnalysis {
        nodes,
        duration,
        range,
        sample_dt,
        link_changes: link_changes(paths, range, sample_dt),
        mean_degree: if nodes == 0 { 0.0 } else { degree_sum as f64 / (s * nodes as f64) },
        mean_partitions: part_sum as f64 / s,
        max_partitions: max_parts,
        connected_fraction: connected as f64 / s,
    })
}
