//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;
use std::time::Instant;

use manet_core::admr::{Admr, AdmrConfig};
use manet_core::harness::{generate_mobility, run_scenario, run_sweep, MobilityModel, Scenario, SweepSpec};
use manet_core::maodv::{leaders, tree_component, tree_is_consistent, Maodv, MaodvConfig};
use manet_core::metrics::RunResult;
use manet_core::mobility::{
    generate_manhattan, generate_rpgm_layout, generate_rwp, Area, ManhattanParams, MobilityPath, Point, RpgmParams, RwpParams,
};
use manet_core::net::Network;
use manet_core::odmrp::{Odmrp, OdmrpConfig};
use manet_core::proto::{Flooding, FloodingConfig, ProtocolKind};
use manet_core::radio::{LinkCut, Medium, RadioParams};
use manet_core::traffic::CbrFlow;
use manet_core::{GroupId, NodeId, RngStreams, SimTime};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const G: GroupId = GroupId(0);
const RANGE: f64 = 150.0;
const SPEEDS: [f64; 5] = [1.0, 5.0, 10.0, 15.0, 20.0];
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn base_scenario() -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../paper.scenario");
    Scenario::load(&path).expect("paper.scenario loads")
}

fn stationary(points: &[Point], duration: f64) -> Medium {
    let paths = points.iter().enumerate().map(|(i, p)| MobilityPath::stationary(NodeId(i as u32), *p, duration)).collect();
    Medium::new(paths, RadioParams::default())
}

fn line(n: usize, duration: f64) -> Medium {
    let pts: Vec<Point> = (0..n).map(|i| Point::new(i as f64 * 100.0, 0.0)).collect();
    stationary(&pts, duration)
}

fn fixed(points: &[(f64, f64)], duration: f64) -> Medium {
    let pts: Vec<Point> = points.iter().map(|(x, y)| Point::new(*x, *y)).collect();
    stationary(&pts, duration)
}

fn flow(source: u32, start: f64, stop: f64) -> CbrFlow {
    CbrFlow { flow_id: 0, source: NodeId(source), group: G, packet_size: 512, interval: 0.25, start, stop }
}

fn adjacency(points: &[Point], range: f64) -> Vec<Vec<usize>> {
    (0..points.len())
        .map(|i| {
            (0..points.len())
                .filter(|&j| j != i && ((points[i].x - points[j].x).powi(2) + (points[i].y - points[j].y).powi(2)).sqrt() <= range)
                .collect()
        })
        .collect()
}

fn reachable(adj: &[Vec<usize>], from: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut q = VecDeque::from([from]);
    seen[from] = true;
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                q.push_back(v);
            }
        }
    }
    seen
}

fn positions_at(paths: &[MobilityPath], t: f64) -> Vec<Point> {
    paths.iter().map(|p| p.position_clamped(t)).collect()
}

/// Static versions of the paper scenario whose topology is connected.
fn static_connected(count: usize) -> Vec<Scenario> {
    let mut out = Vec::new();
    for seed in 1..5000u64 {
        let mut s = base_scenario();
        s.mobility.max_speed = 0.0;
        s.seed = seed;
        let (paths, _) = generate_mobility(&s).expect("mobility");
        let pts = positions_at(&paths, 0.0);
        if reachable(&adjacency(&pts, s.radio.range), 0).iter().all(|r| *r) {
            out.push(s);
            if out.len() == count {
                break;
            }
        }
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

struct Grid {
    runs: Vec<RunResult>,
}

impl Grid {
    fn values(&self, protocol: &str, model: &str, speed: f64, f: impl Fn(&RunResult) -> f64) -> Vec<f64> {
        self.runs.iter().filter(|r| r.protocol == protocol && r.mobility == model && r.max_speed == speed).map(f).collect()
    }

    fn pdr(&self, p: &str, m: &str, v: f64) -> Vec<f64> {
        self.values(p, m, v, |r| r.pdr)
    }

    fn nro(&self, p: &str, m: &str, v: f64) -> f64 {
        mean(&self.values(p, m, v, |r| r.nro))
    }
}

fn criterion_1(statics: &[Scenario]) -> Check {
    ensure!(!statics.is_empty(), "no connected static topology found");
    for s in statics {
        let r = run_scenario(&Scenario { protocol: ProtocolKind::Flooding, ..s.clone() }).map_err(|e| e.to_string())?;
        ensure!(r.pdr_post_stabilization == 1.0, "seed {}: post-stabilization PDR {}", s.seed, r.pdr_post_stabilization);
    }
    // snapshots of moving nodes frozen in place, usually partitioned
    let mut checked = 0usize;
    let mut partitioned = 0usize;
    for seed in 1..=4u64 {
        let mut rng = RngStreams::new(seed).stream("mobility");
        let moving = generate_rwp(&RwpParams { v_min: 1.0, v_max: 10.0, pause: 2.0 }, &Area::default(), 50, 200.0, &mut rng).map_err(|e| e.to_string())?;
        for t in [0.0, 60.0, 120.0, 180.0] {
            let pts = positions_at(&moving, t);
            let adj = adjacency(&pts, RANGE);
            let mut net: Network<Flooding> = Network::new(stationary(&pts, 30.0), &FloodingConfig::default(), seed);
            let groups: Vec<(GroupId, NodeId, Vec<NodeId>)> = (0..3u32)
                .map(|g| (GroupId(g), NodeId(g * 7), (0..50u32).filter(|i| i % 3 == g).map(NodeId).collect()))
                .collect();
            for (g, src, members) in &groups {
                net.add_group(*g, members.iter().copied());
                for m in members {
                    net.join_at(*m, *g, SimTime::ZERO);
                }
                net.add_flow(CbrFlow { flow_id: g.0, source: *src, group: *g, packet_size: 512, interval: 0.5, start: 1.0, stop: 6.0 });
            }
            net.run_until(SimTime::from_secs(30.0));
            if reachable(&adj, 0).iter().any(|r| !r) {
                partitioned += 1;
            }
            for (g, src, members) in &groups {
                let reach = reachable(&adj, src.index());
                for m in members.iter().filter(|m| *m != src) {
                    for seq in 0..10 {
                        let got = net.ledger().received(*m, *src, *g, seq);
                        ensure!(got == reach[m.index()], "seed {seed} t {t}: {m:?} seq {seq} delivered {got}, reachable {}", reach[m.index()]);
                        checked += 1;
                    }
                }
            }
        }
    }
    ensure!(partitioned > 0, "no partitioned snapshot among those tested");
    Ok(format!("{} static topologies at PDR 1.0; {checked} deliveries match BFS on 16 snapshots ({partitioned} partitioned)", statics.len()))
}

fn criterion_2(statics: &[Scenario]) -> Check {
    ensure!(!statics.is_empty(), "no connected static topology found");
    let mut worst = BTreeMap::new();
    for p in [ProtocolKind::Maodv, ProtocolKind::Odmrp, ProtocolKind::Admr] {
        for s in statics {
            let r = run_scenario(&Scenario { protocol: p, ..s.clone() }).map_err(|e| e.to_string())?;
            let w = worst.entry(p.name()).or_insert(1.0f64);
            *w = w.min(r.pdr_post_stabilization);
            ensure!(r.pdr_post_stabilization >= 0.99, "{p} seed {}: post-stabilization PDR {:.4}", s.seed, r.pdr_post_stabilization);
        }
    }
    Ok(format!("min post-stabilization PDR {worst:.4?} over seeds {:?}", statics.iter().map(|s| s.seed).collect::<Vec<_>>()))
}

fn criterion_3(g: &Grid) -> Check {
    let mut notes = Vec::new();
    let mut fails = Vec::new();
    for m in ["rwp", "rpgm", "manhattan"] {
        let lo = g.pdr("maodv", m, 1.0);
        let hi = g.pdr("maodv", m, 20.0);
        let drop = mean(&lo) - mean(&hi);
        let se = (sample_var(&lo) / lo.len() as f64 + sample_var(&hi) / hi.len() as f64).sqrt();
        let note = format!("{m}: drop {drop:.4} vs 2SE {:.4}", 2.0 * se);
        if drop <= 2.0 * se {
            fails.push(note.clone());
        }
        notes.push(note);
    }
    if fails.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(notes.join("; "))
    }
}

fn criterion_4(g: &Grid) -> Check {
    let mut wins = 0;
    let mut notes = Vec::new();
    for m in ["rwp", "rpgm", "manhattan"] {
        let drop = |p: &str| mean(&g.pdr(p, m, 1.0)) - mean(&g.pdr(p, m, 20.0));
        let (a, d) = (drop("admr"), drop("maodv"));
        if a < d {
            wins += 1;
        }
        notes.push(format!("{m}: admr {a:.4} / maodv {d:.4}"));
    }
    let detail = format!("{wins}/3 models; {}", notes.join("; "));
    if wins >= 2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5(g: &Grid) -> Check {
    let mut margin = f64::INFINITY;
    for m in ["rwp", "rpgm", "manhattan"] {
        for v in [10.0, 15.0, 20.0] {
            let (ma, od, ad) = (g.nro("maodv", m, v), g.nro("odmrp", m, v), g.nro("admr", m, v));
            ensure!(ma > od && ma > ad, "{m} {v} m/s: maodv {ma:.3}, odmrp {od:.3}, admr {ad:.3}");
            margin = margin.min(ma / od.max(ad));
        }
    }
    Ok(format!("smallest ratio maodv / max(odmrp, admr) = {margin:.2}"))
}

fn criterion_6(g: &Grid) -> Check {
    let mut margin = f64::INFINITY;
    for v in SPEEDS {
        let (rp, rw, mh) = (g.nro("odmrp", "rpgm", v), g.nro("odmrp", "rwp", v), g.nro("odmrp", "manhattan", v));
        ensure!(rp < rw && rp < mh, "{v} m/s: rpgm {rp:.3}, rwp {rw:.3}, manhattan {mh:.3}");
        margin = margin.min(rw.min(mh) - rp);
    }
    Ok(format!("smallest NRO gap {margin:.3}"))
}

struct Violations {
    samples: u64,
    bounds: u64,
    speed: u64,
    street: u64,
    cohesion: u64,
}

fn sample_paths(
    paths: &[MobilityPath],
    area: &Area,
    v_bound: f64,
    count: u64,
    rng: &mut ChaCha8Rng,
    out: &mut Violations,
    mut extra: impl FnMut(usize, f64, Point, &mut Violations),
) {
    const DT: f64 = 1e-3;
    for _ in 0..count {
        let i = rng.gen_range(0..paths.len());
        let t = rng.gen_range(0.0..paths[i].duration - DT);
        let (Ok(p), Ok(q)) = (paths[i].position(t), paths[i].position(t + DT)) else {
            out.bounds += 1;
            continue;
        };
        out.samples += 1;
        if !(p.x >= -1e-9 && p.y >= -1e-9 && p.x <= area.width + 1e-9 && p.y <= area.height + 1e-9) {
            out.bounds += 1;
        }
        let v = ((q.x - p.x).powi(2) + (q.y - p.y).powi(2)).sqrt() / DT;
        if v > v_bound + 1e-6 {
            out.speed += 1;
        }
        extra(i, t, p, out);
    }
}

fn criterion_7() -> Check {
    const PER_MODEL: u64 = 1_000_000;
    const SEEDS_USED: u64 = 4;
    let area = Area::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut notes = Vec::new();
    for model in MobilityModel::ALL {
        let mut v = Violations { samples: 0, bounds: 0, speed: 0, street: 0, cohesion: 0 };
        for seed in 1..=SEEDS_USED {
            let mut gen = RngStreams::new(seed).stream("mobility");
            let share = PER_MODEL / SEEDS_USED;
            let vmax = 20.0;
            match model {
                MobilityModel::Rwp => {
                    let paths = generate_rwp(&RwpParams { v_min: 1.0, v_max: vmax, pause: 2.0 }, &area, 50, 200.0, &mut gen).map_err(|e| e.to_string())?;
                    sample_paths(&paths, &area, vmax, share, &mut rng, &mut v, |_, _, _, _| {});
                }
                MobilityModel::Manhattan => {
                    let params = ManhattanParams { v_max: vmax, ..ManhattanParams::default() };
                    let paths = generate_manhattan(&params, &area, 50, 200.0, &mut gen).map_err(|e| e.to_string())?;
                    let xs: Vec<f64> = (0..params.v_streets).map(|k| k as f64 * area.width / (params.v_streets - 1) as f64).collect();
                    let ys: Vec<f64> = (0..params.h_streets).map(|k| k as f64 * area.height / (params.h_streets - 1) as f64).collect();
                    sample_paths(&paths, &area, vmax, share, &mut rng, &mut v, |_, _, p, out| {
                        let on_v = xs.iter().any(|x| (p.x - x).abs() <= 1e-6);
                        let on_h = ys.iter().any(|y| (p.y - y).abs() <= 1e-6);
                        if !(on_v || on_h) {
                            out.street += 1;
                        }
                    });
                }
                MobilityModel::Rpgm => {
                    let params = RpgmParams { group_v_max: vmax, ..RpgmParams::default() };
                    let layout = generate_rpgm_layout(&params, &area, 50, 200.0, &mut gen).map_err(|e| e.to_string())?;
                    let bound = vmax * (1.0 + params.member_speed_ratio);
                    sample_paths(&layout.paths, &area, bound, share, &mut rng, &mut v, |i, t, p, out| {
                        let c = layout.centers[layout.group_of[i]].position_clamped(t);
                        let o = layout.offsets[i];
                        let d = ((p.x - c.x - o.x).powi(2) + (p.y - c.y - o.y).powi(2)).sqrt();
                        if d > params.max_deviation + 1e-9 {
                            out.cohesion += 1;
                        }
                    });
                }
            }
        }
        let total = v.bounds + v.speed + v.street + v.cohesion;
        ensure!(
            total == 0 && v.samples == PER_MODEL,
            "{model}: {} samples, bounds {} speed {} street {} cohesion {}",
            v.samples,
            v.bounds,
            v.speed,
            v.street,
            v.cohesion
        );
        notes.push(format!("{model} {}", v.samples));
    }
    Ok(format!("zero violations ({})", notes.join(", ")))
}

fn criterion_8(base: &Scenario, grid: &Grid) -> Check {
    for p in [ProtocolKind::Maodv, ProtocolKind::Odmrp, ProtocolKind::Admr] {
        let s = Scenario { protocol: p, seed: 3, ..base.clone() };
        let a = run_scenario(&s).map_err(|e| e.to_string())?.csv_row();
        let b = run_scenario(&s).map_err(|e| e.to_string())?.csv_row();
        ensure!(a == b, "{p}: repeated run differs\n{a}\n{b}");
    }
    let sub = SweepSpec { speeds: vec![1.0, 5.0, 10.0, 20.0], ..SweepSpec::default() };
    let mut cells = sub.cells(base);
    ensure!(cells.len() == 180, "subset has {} cells", cells.len());
    cells.reverse();
    let by_key: BTreeMap<(String, String, u64, u64), String> =
        grid.runs.iter().map(|r| ((r.protocol.clone(), r.mobility.clone(), r.max_speed.to_bits(), r.seed), r.csv_row())).collect();
    for s in &cells {
        let r = run_scenario(s).map_err(|e| e.to_string())?;
        let key = (r.protocol.clone(), r.mobility.clone(), r.max_speed.to_bits(), r.seed);
        let swept = by_key.get(&key).ok_or_else(|| format!("cell {key:?} missing from sweep"))?;
        ensure!(*swept == r.csv_row(), "order dependence at {key:?}\n{swept}\n{}", r.csv_row());
    }
    Ok("3 repeated runs identical; 180 cells re-run in reverse order match the sweep byte for byte".into())
}

fn maodv_net(medium: Medium, seed: u64) -> Network<Maodv> {
    Network::new(medium, &MaodvConfig::default(), seed)
}

fn maodv_diamond() -> Result<(), String> {
    let mut n = maodv_net(fixed(&[(0.0, 0.0), (100.0, 60.0), (100.0, -60.0), (200.0, 0.0)], 40.0), 3);
    n.add_group(G, [NodeId(0), NodeId(3)]);
    n.join_at(NodeId(3), G, SimTime::ZERO);
    n.join_at(NodeId(0), G, SimTime::from_secs(5.0));
    n.add_flow(flow(3, 10.0, 20.0));
    n.run_until(SimTime::from_secs(25.0));
    let st = |i: u32| n.node(NodeId(i)).group(G).cloned();
    ensure!(st(0).and_then(|s| s.upstream) == Some(NodeId(1)), "0 not attached through 1");
    ensure!(!st(2).is_some_and(|s| s.on_tree()), "2 activated");
    ensure!(n.ledger().pdr() == Ok(1.0), "pdr {:?}", n.ledger().pdr());
    Ok(())
}

fn maodv_prune_cascade() -> Result<(), String> {
    let mut n = maodv_net(line(5, 40.0), 6);
    n.join_at(NodeId(0), G, SimTime::ZERO);
    n.join_at(NodeId(2), G, SimTime::from_secs(5.0));
    n.join_at(NodeId(4), G, SimTime::from_secs(8.0));
    n.leave_at(NodeId(4), G, SimTime::from_secs(15.0));
    n.run_until(SimTime::from_secs(14.0));
    let on = |n: &Network<Maodv>, i: u32| n.node(NodeId(i)).group(G).is_some_and(|s| s.on_tree());
    ensure!(on(&n, 3), "3 not on tree before leave");
    n.run_until(SimTime::from_secs(20.0));
    ensure!(!on(&n, 4) && !on(&n, 3), "branch 3-4 survived");
    ensure!(on(&n, 2) && on(&n, 1), "prune went past member 2");
    Ok(())
}

fn maodv_merge() -> Result<(), String> {
    let cut = LinkCut { a: NodeId(4), b: NodeId(5), from: 0.0, until: 20.0 };
    let mut n = maodv_net(line(10, 60.0).with_cuts(vec![cut]), 10);
    for (m, t) in [(3, 0.0), (9, 0.0), (1, 6.0), (7, 6.0)] {
        n.join_at(NodeId(m), G, SimTime::from_secs(t));
    }
    n.run_until(SimTime::from_secs(19.0));
    ensure!(leaders(n.nodes(), G) == vec![NodeId(3), NodeId(9)], "leaders before heal {:?}", leaders(n.nodes(), G));
    n.run_until(SimTime::from_secs(45.0));
    ensure!(n.node(NodeId(3)).stats().merges_initiated >= 1, "lower leader did not merge");
    ensure!(n.node(NodeId(9)).stats().merges_initiated == 0, "higher leader merged");
    ensure!(leaders(n.nodes(), G) == vec![NodeId(9)], "leaders after heal {:?}", leaders(n.nodes(), G));
    ensure!(tree_is_consistent(n.nodes(), G), "inconsistent tree");
    let comp = tree_component(n.nodes(), G, NodeId(9));
    ensure!([1, 3, 7, 9].iter().all(|m| comp.contains(&NodeId(*m))), "members missing from merged tree");
    Ok(())
}

fn odmrp_net(medium: Medium, members: &[u32], seed: u64) -> Network<Odmrp> {
    let mut n = Network::new(medium, &OdmrpConfig::default(), seed);
    n.add_group(G, members.iter().map(|m| NodeId(*m)));
    for m in members {
        n.join_at(NodeId(*m), G, SimTime::ZERO);
    }
    n
}

fn odmrp_suppression() -> Result<(), String> {
    let mut n = odmrp_net(fixed(&[(0.0, 0.0), (140.0, 0.0), (240.0, 100.0), (240.0, -100.0)], 20.0), &[0, 2, 3], 4);
    n.add_flow(CbrFlow { interval: 1.0, ..flow(0, 1.0, 1.5) });
    n.run_until(SimTime::from_secs(2.0));
    let s = n.node(NodeId(1)).stats();
    ensure!((s.replies_forwarded, s.replies_suppressed) == (1, 1), "relay forwarded {} suppressed {}", s.replies_forwarded, s.replies_suppressed);
    ensure!(n.ledger().control_tx == 7, "control_tx {}", n.ledger().control_tx);
    Ok(())
}

fn odmrp_decay() -> Result<(), String> {
    let cfg = OdmrpConfig::default();
    let mut n = odmrp_net(line(4, 40.0), &[0, 3], 5);
    n.add_flow(flow(0, 1.0, 5.0));
    n.run_until(SimTime::from_secs(5.0));
    let fw = |n: &Network<Odmrp>, at: SimTime| (0..4u32).filter(|i| n.node(NodeId(*i)).is_forwarder(G, at)).collect::<BTreeSet<_>>();
    ensure!(fw(&n, n.now()) == BTreeSet::from([1, 2]), "forwarders during traffic {:?}", fw(&n, n.now()));
    n.run_until(SimTime::from_secs(35.0));
    let last = n.nodes().iter().filter_map(|o| o.forwarding_state(G)).map(|f| f.refreshed_at).max().ok_or("no forwarding state")?;
    let gone = last + SimTime::from_secs(cfg.fg_timeout());
    ensure!(fw(&n, gone).is_empty(), "forwarders persist at {gone:?}");
    ensure!(fw(&n, n.now()).is_empty(), "forwarders persist at end");
    Ok(())
}

fn admr_net(medium: Medium, members: &[u32], seed: u64) -> Network<Admr> {
    let mut n = Network::new(medium, &AdmrConfig::default(), seed);
    n.add_group(G, members.iter().map(|m| NodeId(*m)));
    for m in members {
        n.join_at(NodeId(*m), G, SimTime::ZERO);
    }
    n
}

fn admr_reconnect() -> Result<(), String> {
    let pts = [(0.0, 0.0), (120.0, 0.0), (240.0, 0.0), (360.0, 0.0), (480.0, 0.0), (240.0, 80.0)];
    let mut cuts: Vec<LinkCut> = [1, 2, 3].iter().map(|o| LinkCut { a: NodeId(5), b: NodeId(*o), from: 0.0, until: 10.0 }).collect();
    cuts.push(LinkCut { a: NodeId(1), b: NodeId(2), from: 10.0, until: 1000.0 });
    let mut n = admr_net(fixed(&pts, 40.0).with_cuts(cuts), &[0, 4], 6);
    n.add_flow(flow(0, 1.0, 28.0));
    let floods = |n: &Network<Admr>| n.nodes().iter().map(|o| o.stats().solicitations + o.stats().discoveries).sum::<u32>();
    n.run_until(SimTime::from_secs(9.0));
    let before = floods(&n);
    n.run_until(SimTime::from_secs(28.0));
    ensure!(floods(&n) == before, "repair used a network-wide flood");
    ensure!(n.node(NodeId(2)).stats().reconnects == 1, "reconnects {}", n.node(NodeId(2)).stats().reconnects);
    ensure!(n.node(NodeId(2)).tree(NodeId(0), G).and_then(|t| t.upstream) == Some(NodeId(5)), "2 not re-attached via 5");
    ensure!((41..108).all(|s| n.ledger().received(NodeId(4), NodeId(0), G, s)), "receiver missed packets after repair");
    // out of reach of the bounded search
    let cut = LinkCut { a: NodeId(1), b: NodeId(2), from: 10.0, until: 1000.0 };
    let mut n = admr_net(line(3, 20.0).with_cuts(vec![cut]), &[0, 2], 7);
    n.add_flow(flow(0, 1.0, 18.0));
    n.run_until(SimTime::from_secs(18.0));
    let s = n.node(NodeId(2)).stats();
    ensure!((s.reconnects, s.repairs_abandoned, s.solicitations) == (1, 1, 2), "unreachable repair: {s:?}");
    Ok(())
}

fn lossy_diamond() -> Medium {
    let mut cuts = vec![LinkCut { a: NodeId(2), b: NodeId(3), from: 0.0, until: 8.0 }];
    for k in 36..116u32 {
        if [0, 1, 3].contains(&(k % 5)) {
            let t = 1.0 + k as f64 * 0.25;
            cuts.push(LinkCut { a: NodeId(1), b: NodeId(2), from: t, until: t + 0.1 });
        }
    }
    fixed(&[(0.0, 0.0), (100.0, 60.0), (200.0, 0.0), (100.0, -60.0)], 60.0).with_cuts(cuts)
}

fn admr_fallback() -> Result<(), String> {
    let mut n = admr_net(lossy_diamond(), &[0, 2], 10);
    n.add_flow(flow(0, 1.0, 50.0));
    n.run_until(SimTime::from_secs(52.0));
    let src = n.node(NodeId(0));
    ensure!(src.stats().fallback_engaged >= 1, "fallback never engaged");
    let sent = &src.flow(G).ok_or("no source state")?.sent;
    let mut base: Network<Flooding> = Network::new(lossy_diamond(), &FloodingConfig::default(), 10);
    base.add_group(G, [NodeId(0), NodeId(2)]);
    base.join_at(NodeId(2), G, SimTime::ZERO);
    base.add_flow(flow(0, 1.0, 50.0));
    base.run_until(SimTime::from_secs(52.0));
    let flooded: Vec<u32> = sent.iter().filter(|(s, f)| *f && *s > 0).map(|(s, _)| *s).collect();
    ensure!(!flooded.is_empty(), "no packet flooded after bootstrap");
    for s in &flooded {
        let (a, b) = (n.ledger().received(NodeId(2), NodeId(0), G, *s), base.ledger().received(NodeId(2), NodeId(0), G, *s));
        ensure!(a == b, "flooded seq {s}: admr {a}, flooding {b}");
    }
    ensure!(sent[150..].iter().all(|(_, f)| !f), "still flooding after loss ended");
    Ok(())
}

fn criterion_9() -> Check {
    let cases: [(&str, fn() -> Result<(), String>); 7] = [
        ("maodv diamond activation", maodv_diamond),
        ("maodv prune cascade", maodv_prune_cascade),
        ("maodv merge by lower id", maodv_merge),
        ("odmrp reply suppression", odmrp_suppression),
        ("odmrp soft-state decay", odmrp_decay),
        ("admr hop-limited reconnect", admr_reconnect),
        ("admr flood fallback", admr_fallback),
    ];
    let failed: Vec<String> = cases.iter().filter_map(|(name, f)| f().err().map(|e| format!("{name}: {e}"))).collect();
    if failed.is_empty() {
        Ok(format!("{} scenarios", cases.len()))
    } else {
        Err(failed.join("; "))
    }
}

fn criterion_10() -> Check {
    // flooding, source 0, every other node a member: 10 packets x 5 rebroadcasts
    let mut f: Network<Flooding> = Network::new(line(5, 20.0), &FloodingConfig::default(), 1);
    f.add_group(G, (0..5).map(NodeId));
    for i in 0..5 {
        f.join_at(NodeId(i), G, SimTime::ZERO);
    }
    f.add_flow(flow(0, 1.0, 3.5));
    f.run_until(SimTime::from_secs(20.0));
    let l = f.ledger();
    ensure!((l.originated(), l.data_tx, l.delivered(), l.control_tx) == (10, 50, 40, 0), "flooding counts {} {} {} {}", l.originated(), l.data_tx, l.delivered(), l.control_tx);
    ensure!(l.pdr() == Ok(1.0) && l.nro() == Ok(0.0), "flooding pdr {:?} nro {:?}", l.pdr(), l.nro());

    // odmrp, source 0, receiver 4: queries at 1, 4 and 7 s, each 5 rebroadcasts plus 4 reply hops;
    // the first packet leaves with the first query and reaches no forwarder
    let mut o = odmrp_net(line(5, 20.0), &[0, 4], 1);
    o.add_flow(flow(0, 1.0, 3.5));
    o.run_until(SimTime::from_secs(20.0));
    let l = o.ledger();
    ensure!((l.originated(), l.control_tx, l.delivered()) == (10, 27, 9), "odmrp counts {} {} {}", l.originated(), l.control_tx, l.delivered());
    ensure!(l.pdr() == Ok(0.9) && l.nro() == Ok(3.0), "odmrp pdr {:?} nro {:?}", l.pdr(), l.nro());
    Ok("flooding 50 data tx / 40 delivered, PDR 1, NRO 0; odmrp 27 control / 9 delivered, PDR 0.9, NRO 3".into())
}

fn report(n: usize, name: &str, started: Instant, r: Check, failures: &mut usize) {
    let secs = started.elapsed().as_secs_f64();
    match r {
        Ok(detail) => println!("criterion {n:>2} {name:<24} PASS  [{secs:.1}s] {detail}"),
        Err(detail) => {
            *failures += 1;
            println!("criterion {n:>2} {name:<24} FAIL  [{secs:.1}s] {detail}");
        }
    }
}

fn main() {
    let mut failures = 0;
    let base = base_scenario();

    let t = Instant::now();
    let statics = static_connected(3);
    report(1, "oracle ceiling", t, criterion_1(&statics), &mut failures);
    let t = Instant::now();
    report(2, "static correctness", t, criterion_2(&statics), &mut failures);

    let t = Instant::now();
    let spec = SweepSpec { speeds: SPEEDS.to_vec(), seeds: SEEDS.to_vec(), ..SweepSpec::default() };
    let outcome = run_sweep(&base, &spec).expect("sweep spec is valid");
    let sweep_secs = t.elapsed().as_secs_f64();
    println!("sweep: {} runs, {} failures, {sweep_secs:.1}s", outcome.results.len(), outcome.failures.len());
    let grid = Grid { runs: outcome.results };
    let complete = outcome.failures.is_empty() && grid.runs.len() == 225;
    let gate = |c: Check| if complete { c } else { Err("sweep incomplete".into()) };
    let t = Instant::now();
    report(3, "maodv pdr falls", t, gate(criterion_3(&grid)), &mut failures);
    report(4, "admr holds pdr", t, gate(criterion_4(&grid)), &mut failures);
    report(5, "maodv highest nro", t, gate(criterion_5(&grid)), &mut failures);
    report(6, "odmrp rpgm lowest nro", t, gate(criterion_6(&grid)), &mut failures);

    let t = Instant::now();
    report(7, "mobility invariants", t, criterion_7(), &mut failures);
    let t = Instant::now();
    report(8, "determinism", t, criterion_8(&base, &grid), &mut failures);
    let t = Instant::now();
    report(9, "micro-conformance", t, criterion_9(), &mut failures);
    let t = Instant::now();
    report(10, "metric arithmetic", t, criterion_10(), &mut failures);

    let budget = if sweep_secs < 600.0 { "within" } else { "over" };
    println!("225-run sweep took {sweep_secs:.1}s, {budget} the 10 minute budget");
    println!("{} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
