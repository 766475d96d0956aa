//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use siren_core::network::{Edge, Node, RoadNetwork};
use siren_core::recognition::{EdgeMap, Pattern, Point};
use siren_core::{EdgeId, NodeId};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Best (time, edge ids) over every simple path from `from` to `to`,
/// summing edge times in path order. Among equal times the
/// lexicographically smallest edge-id sequence wins.
pub fn best_simple_path(
    net: &RoadNetwork,
    from: &NodeId,
    to: &NodeId,
) -> Option<(f64, Vec<EdgeId>)> {
    fn walk(
        net: &RoadNetwork,
        at: &NodeId,
        to: &NodeId,
        visited: &mut Vec<NodeId>,
        path: &mut Vec<EdgeId>,
        time: f64,
        best: &mut Option<(f64, Vec<EdgeId>)>,
    ) {
        if at == to {
            let better = match best {
                None => true,
                Some((t, p)) => time < *t || (time == *t && path < p),
            };
            if better {
                *best = Some((time, path.clone()));
            }
            return;
        }
        for e in net.edges().iter().filter(|e| &e.from == at) {
            if visited.contains(&e.to) {
                continue;
            }
            visited.push(e.to.clone());
            path.push(e.id.clone());
            walk(
                net,
                &e.to,
                to,
                visited,
                path,
                time + e.length_m / e.free_speed_mps * e.congestion_factor,
                best,
            );
            path.pop();
            visited.pop();
        }
    }
    let mut best = None;
    walk(
        net,
        from,
        to,
        &mut vec![from.clone()],
        &mut Vec::new(),
        0.0,
        &mut best,
    );
    best
}

/// Random directed network. With `integer_times` every edge takes a whole
/// number of seconds, which makes equal-cost ties common.
pub fn random_network(
    rng: &mut impl Rng,
    max_nodes: usize,
    max_edges: usize,
    integer_times: bool,
) -> RoadNetwork {
    let n = rng.gen_range(2..=max_nodes);
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: NodeId::new(format!("v{i}")),
            x: rng.gen_range(0.0..1000.0),
            y: rng.gen_range(0.0..1000.0),
        })
        .collect();
    let m = rng.gen_range(0..=max_edges);
    let edges = (0..m)
        .map(|k| {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let (len, speed, factor) = if integer_times {
                (rng.gen_range(1..6) as f64 * 10.0, 10.0, 1.0)
            } else {
                (
                    rng.gen_range(10.0..800.0),
                    rng.gen_range(5.0..20.0),
                    rng.gen_range(1.0..3.0),
                )
            };
            Edge::new(
                format!("e{k:02}"),
                format!("v{a}"),
                format!("v{b}"),
                len,
                speed,
            )
            .with_congestion(factor)
        })
        .collect();
    RoadNetwork::new(nodes, edges).unwrap()
}

/// Direct evaluation of the chamfer sum at every in-frame translation.
/// Returns (translation, D) with ties to the smallest y, then x.
pub fn brute_force_match(pattern: &Pattern, edges: &EdgeMap) -> (Point, u64) {
    let (pw, ph) = pattern.extent();
    let mut best: Option<(Point, u64)> = None;
    for ty in 0..=(edges.height() - ph) as i32 {
        for tx in 0..=(edges.width() - pw) as i32 {
            let d: u64 = pattern
                .points()
                .iter()
                .map(|p| {
                    edges
                        .points()
                        .iter()
                        .map(|e| ((p.x + tx - e.x).abs() + (p.y + ty - e.y).abs()) as u64)
                        .min()
                        .unwrap()
                })
                .sum();
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((Point::new(tx, ty), d));
            }
        }
    }
    best.unwrap()
}

/// One pass/fail line per acceptance criterion.
pub fn report(name: &str, ok: bool, detail: &str) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}
