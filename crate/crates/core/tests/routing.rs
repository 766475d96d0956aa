mod common;

use common::{best_simple_path, fixtures, random_network};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use siren_core::network::{Edge, Node, RoadNetwork};
use siren_core::scenario::load_scenario;
use siren_core::{EdgeId, NodeId};

fn node(id: &str) -> NodeId {
    NodeId::new(id)
}

#[test]
fn triangle_fixture_takes_two_hops() {
    let s = load_scenario(&fixtures().join("scenarios/triangle.json"))
        .unwrap()
        .scenario;
    let net = s.network();
    let r = net.shortest_path(&node("A"), &node("C")).unwrap();
    assert_eq!(r.total_time_s, 20.0);
    assert_eq!(r.edges, vec![EdgeId::new("AB"), EdgeId::new("BC")]);
    assert_eq!(r.total_length_m, 200.0);
}

#[test]
fn congestion_reroutes_around_slow_edge() {
    let nodes = ["A", "B", "C"]
        .map(|id| Node {
            id: node(id),
            x: 0.0,
            y: 0.0,
        })
        .to_vec();
    let edges = |f: f64| {
        vec![
            Edge::new("AB", "A", "B", 100.0, 10.0).with_congestion(f),
            Edge::new("BC", "B", "C", 100.0, 10.0),
            Edge::new("AC", "A", "C", 250.0, 10.0),
        ]
    };
    let free = RoadNetwork::new(nodes.clone(), edges(1.0)).unwrap();
    let jammed = RoadNetwork::new(nodes, edges(2.0)).unwrap();
    assert_eq!(
        free.shortest_path(&node("A"), &node("C"))
            .unwrap()
            .total_time_s,
        20.0
    );
    let r = jammed.shortest_path(&node("A"), &node("C")).unwrap();
    assert_eq!(r.total_time_s, 25.0);
    assert_eq!(r.edges, vec![EdgeId::new("AC")]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_enumeration_including_tie_break(seed in any::<u64>(), integer in any::<bool>(), a in 0usize..8, b in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, 8, 16, integer);
        let n = net.nodes().len();
        let (a, b) = (node(&format!("v{}", a % n)), node(&format!("v{}", b % n)));
        let fast = net.shortest_path(&a, &b).ok().map(|r| (r.total_time_s, r.edges));
        prop_assert_eq!(fast, best_simple_path(&net, &a, &b));
    }

    #[test]
    fn raising_congestion_never_speeds_up(seed in any::<u64>(), pick in any::<prop::sample::Index>(), extra in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, 8, 16, false);
        prop_assume!(!net.edges().is_empty());
        let k = pick.index(net.edges().len());
        let edges: Vec<Edge> = net
            .edges()
            .iter()
            .enumerate()
            .map(|(i, e)| if i == k { e.clone().with_congestion(e.congestion_factor + extra) } else { e.clone() })
            .collect();
        let slower = RoadNetwork::new(net.nodes().to_vec(), edges).unwrap();
        for from in net.nodes() {
            for to in net.nodes() {
                if let Ok(before) = net.shortest_path(&from.id, &to.id) {
                    let after = slower.shortest_path(&from.id, &to.id).unwrap();
                    prop_assert!(after.total_time_s >= before.total_time_s);
                }
            }
        }
    }

    #[test]
    fn route_time_is_sum_of_its_edges(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, 8, 16, false);
        for to in net.nodes() {
            if let Ok(r) = net.shortest_path(&node("v0"), &to.id) {
                let rebuilt = net.route_from_edges(&r.edges);
                if r.edges.is_empty() {
                    prop_assert_eq!(r.total_time_s, 0.0);
                } else {
                    prop_assert_eq!(rebuilt.unwrap().total_time_s, r.total_time_s);
                }
            }
        }
    }
}
