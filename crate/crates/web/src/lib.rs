//! Browser demo: run a scenario, generate a trace, analyze a trace.

use manet_core::harness::{self, MobilityModel, Scenario};
use manet_core::mobility::export_ns2;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Runs a TOML scenario and returns its result as JSON.
pub fn simulate_json(config: &str) -> Result<String, String> {
    let s = Scenario::from_toml(config).map_err(|e| e.to_string())?;
    let r = harness::run_scenario(&s).map_err(|e| e.to_string())?;
    serde_json::to_string(&r).map_err(|e| e.to_string())
}

pub fn mobgen_ns2(model: &str, nodes: usize, duration: f64, seed: u64, max_speed: f64) -> Result<String, String> {
    let mut s = Scenario { nodes, duration, seed, ..Default::default() };
    s.mobility.model = model.parse::<MobilityModel>().map_err(|e| e.to_string())?;
    s.mobility.max_speed = max_speed;
    if s.mobility.model == MobilityModel::Rpgm {
        s.mobility.rpgm.nodes_per_group = nodes.div_ceil(s.mobility.rpgm.group_count.max(1));
        s.mobility.rpgm.group_count = nodes / s.mobility.rpgm.nodes_per_group.max(1);
    }
    let (paths, _) = harness::generate_mobility(&s).map_err(|e| e.to_string())?;
    Ok(export_ns2(&paths))
}

pub fn analyze_json(trace: &str, range: f64) -> Result<String, String> {
    let a = harness::analyze(trace, range, 1.0).map_err(|e| e.to_string())?;
    Ok(json!({
        "nodes": a.nodes,
        "duration": a.duration,
        "range": a.range,
        "link_changes": a.link_changes,
        "mean_degree": a.mean_degree,
        "mean_partitions": a.mean_partitions,
        "max_partitions": a.max_partitions,
        "connected_fraction": a.connected_fraction,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn simulate(config: &str) -> Result<String, JsValue> {
    simulate_json(config).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn mobgen(model: &str, nodes: usize, duration: f64, seed: u64, max_speed: f64) -> Result<String, JsValue> {
    mobgen_ns2(model, nodes, duration, seed, max_speed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn analyze(trace: &str, range: f64) -> Result<String, JsValue> {
    analyze_json(trace, range).map_err(|e| JsValue::from_str(&e))
}
