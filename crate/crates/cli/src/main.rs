use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use manet_core::harness::{self, MobilityModel, RunOptions, Scenario, SweepSpec};
use manet_core::metrics::{runs_to_csv, RunResult};
use manet_core::mobility::export_ns2;
use manet_core::proto::ProtocolKind;

/// Multicast MANET simulator.
#[derive(Parser)]
#[command(name = "manet", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and print its result row.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        protocol: Option<ProtocolKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        event_log: Option<PathBuf>,
        /// Also write the result row as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the protocol x model x speed x seed grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        speeds: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values = ["maodv", "odmrp", "admr"])]
        protocols: Vec<ProtocolKind>,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values = ["rwp", "rpgm", "manhattan"])]
        models: Vec<MobilityModel>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a mobility trace in NS2 format.
    Mobgen {
        #[arg(long)]
        model: MobilityModel,
        #[arg(long)]
        out: PathBuf,
        /// Scenario supplying area, node count and model parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_speed: Option<f64>,
        #[arg(long)]
        pause: Option<f64>,
    },
    /// Report connectivity statistics for a trace.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 150.0)]
        range: f64,
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
    },
}

enum Outcome {
    Ok,
    Partial,
}

fn load(path: &Path) -> Result<Scenario> {
    Ok(Scenario::load(path)?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_result(r: &RunResult) {
    print!("{}", runs_to_csv(std::slice::from_ref(r)));
}

fn execute(cmd: Cmd) -> Result<Outcome> {
    match cmd {
        Cmd::Run { config, protocol, seed, event_log, out } => {
            let mut s = load(&config)?;
            if let Some(p) = protocol {
                s.protocol = p;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let run = harness::run_scenario_with(&s, &RunOptions { event_log: event_log.is_some() })?;
            if let (Some(path), Some(log)) = (&event_log, &run.event_log) {
                write(path, log)?;
            }
            if let Some(path) = &out {
                write(path, &runs_to_csv(std::slice::from_ref(&run.result)))?;
            }
            print_result(&run.result);
            Ok(Outcome::Ok)
        }
        Cmd::Sweep { config, speeds, seeds, protocols, models, out } => {
            let base = load(&config)?;
            let spec = SweepSpec { protocols, models, speeds, seeds };
            let outcome = harness::run_sweep(&base, &spec)?;
            harness::write_sweep(&out, &outcome)?;
            eprintln!("{} runs, {} failed, written to {}", outcome.results.len() + outcome.failures.len(), outcome.failures.len(), out.display());
            for f in &outcome.failures {
                eprintln!("failed: {} {} v={} seed={}: {}", f.protocol, f.model, f.max_speed, f.seed, f.error);
            }
            Ok(if outcome.failures.is_empty() { Outcome::Ok } else { Outcome::Partial })
        }
        Cmd::Mobgen { model, out, config, nodes, duration, seed, max_speed, pause } => {
            let mut s = match &config {
                Some(p) => load(p)?,
                None => Scenario::default(),
            };
            s.mobility.model = model;
            s.mobility.trace = None;
            if let Some(n) = nodes {
                s.nodes = n;
            }
            if let Some(d) = duration {
                s.duration = d;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(v) = max_speed {
                s.mobility.max_speed = v;
            }
            if let Some(p) = pause {
                s.mobility.pause = p;
            }
            let (paths, _) = harness::generate_mobility(&s)?;
            write(&out, &export_ns2(&paths))?;
            eprintln!("{} nodes, {} s, {} -> {}", s.nodes, s.duration, model, out.display());
            Ok(Outcome::Ok)
        }
        Cmd::Analyze { trace, range, dt } => {
            let text = std::fs::read_to_string(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let a = harness::analyze(&text, range, dt).with_context(|| trace.display().to_string())?;
            println!("{a}");
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.cmd) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
