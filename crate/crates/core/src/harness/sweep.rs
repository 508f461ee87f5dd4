//! Speed sweeps over the protocol x mobility grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use super::{run_scenario, HarnessError, MobilityModel, Scenario};
use crate::metrics::{aggregate, aggregate_to_csv, runs_to_csv, AggregateRow, RunResult};
use crate::proto::ProtocolKind;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub protocols: Vec<ProtocolKind>,
    pub models: Vec<MobilityModel>,
    pub speeds: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            protocols: vec![ProtocolKind::Maodv, ProtocolKind::Odmrp, ProtocolKind::Admr],
            models: MobilityModel::ALL.to_vec(),
            speeds: vec![1.0, 5.0, 10.0, 15.0, 20.0],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        for (name, empty) in [
            ("protocols", self.protocols.is_empty()),
            ("models", self.models.is_empty()),
            ("speeds", self.speeds.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(HarnessError::Validation { field: format!("sweep.{name}"), msg: "axis is empty".into() });
            }
        }
        Ok(())
    }

    /// Every cell of the grid, in canonical order.
    pub fn cells(&self, base: &Scenario) -> Vec<Scenario> {
        let mut out = Vec::new();
        for p in &self.protocols {
            for m in &self.models {
                for v in &self.speeds {
                    for seed in &self.seeds {
                        let mut s = base.clone();
                        s.protocol = *p;
                        s.mobility.model = *m;
                        s.mobility.trace = None;
                        s.mobility.max_speed = *v;
                        s.seed = *seed;
                        out.push(s);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub protocol: ProtocolKind,
    pub model: MobilityModel,
    pub max_speed: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub results: Vec<RunResult>,
    pub failures: Vec<SweepFailure>,
}

impl SweepOutcome {
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        aggregate(&self.results).unwrap_or_default()
    }
}

fn run_cell(s: &Scenario) -> Result<RunResult, String> {
    match catch_unwind(AssertUnwindSafe(|| run_scenario(s))) {
        Ok(Ok(r)) => Ok(r),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(match panic.downcast_ref::<&str>() {
            Some(m) => format!("panic: {m}"),
            None => match panic.downcast_ref::<String>() {
                Some(m) => format!("panic: {m}"),
                None => "panic".into(),
            },
        }),
    }
}

/// Runs every cell. A failing cell is recorded and the sweep continues.
/// Results come back in grid order whatever order the cells ran in.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec) -> Result<SweepOutcome, HarnessError> {
    spec.validate()?;
    let cells = spec.cells(base);
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<RunResult, String>> = {
        use rayon::prelude::*;
        cells.par_iter().map(run_cell).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<RunResult, String>> = cells.iter().map(run_cell).collect();

    let mut out = SweepOutcome::default();
    for (s, o) in cells.iter().zip(outcomes) {
        match o {
            Ok(r) => out.results.push(r),
            Err(error) => out.failures.push(SweepFailure {
                protocol: s.protocol,
                model: s.mobility.model,
                max_speed: s.mobility.max_speed,
                seed: s.seed,
                error,
            }),
        }
    }
    Ok(out)
}

/// Plot series: one CSV per (protocol, model) with means against speed.
pub fn series_csvs(rows: &[AggregateRow]) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for r in rows {
        let text = out
            .entry(format!("{}_{}.csv", r.protocol, r.mobility))
            .or_insert_with(|| "max_speed,mean_pdr,std_pdr,mean_nro,std_nro,n\n".to_string());
        let _ = writeln!(text, "{},{},{},{},{},{}", r.max_speed, r.pdr.mean, r.pdr.std, r.nro.mean, r.nro.std, r.pdr.n);
    }
    out
}

pub fn failures_manifest(failures: &[SweepFailure]) -> String {
    let mut out = String::from("protocol,mobility,max_speed,seed,error\n");
    for f in failures {
        let _ = writeln!(out, "{},{},{},{},\"{}\"", f.protocol, f.model, f.max_speed, f.seed, f.error.replace('"', "'"));
    }
    out
}

/// Writes `runs.csv`, `aggregate.csv`, `series/*.csv` and, if anything
/// failed, `failures.csv`.
pub fn write_sweep(dir: &Path, outcome: &SweepOutcome) -> Result<(), HarnessError> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| HarnessError::Io { path, source }
    };
    let series_dir = dir.join("series");
    std::fs::create_dir_all(&series_dir).map_err(io(&series_dir))?;
    let write = |name: &Path, text: &str| std::fs::write(name, text).map_err(io(name));
    write(&dir.join("runs.csv"), &runs_to_csv(&outcome.results))?;
    let rows = outcome.aggregate();
    write(&dir.join("aggregate.csv"), &aggregate_to_csv(&rows))?;
    for (name, text) in series_csvs(&rows) {
        write(&series_dir.join(name), &text)?;
    }
    let manifest = dir.join("failures.csv");
    if outcome.failures.is_empty() {
        if manifest.exists() {
            std::fs::remove_file(&manifest).map_err(io(&manifest))?;
        }
    } else {
        write(&manifest, &failures_manifest(&outcome.failures))?;
    }
    Ok(())
}
