//! Road network model, travel-time prediction, map matching and
//! shortest-path routing.
//!
//! Nodes and edges are kept sorted by id so that index order equals id
//! order. Routing relies on this for its lexicographic tie-break.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use thiserror::Error;

pub use crate::ids::{ApproachId, ControllerId, EdgeId, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("unknown edge `{0}`")]
    UnknownEdge(EdgeId),
    #[error("no route from `{from}` to `{to}`")]
    NoRoute { from: NodeId, to: NodeId },
    #[error("network has no edges")]
    EmptyNetwork,
    #[error("edge `{0}` has no signal-controlled stop line")]
    NoStopLine(EdgeId),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(NodeId),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdge(EdgeId),
    #[error("edge `{edge}`: {reason}")]
    InvalidEdge { edge: EdgeId, reason: String },
    #[error("offset {offset_m} m outside edge `{edge}`")]
    InvalidOffset { edge: EdgeId, offset_m: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

/// Signalized end of an edge: the controller and the approach it serves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopLine {
    pub controller: ControllerId,
    pub approach: ApproachId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub free_speed_mps: f64,
    pub congestion_factor: f64,
    pub stop_line: Option<StopLine>,
}

impl Edge {
    pub fn new(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        length_m: f64,
        free_speed_mps: f64,
    ) -> Self {
        Self {
            id: EdgeId::new(id),
            from: NodeId::new(from),
            to: NodeId::new(to),
            length_m,
            free_speed_mps,
            congestion_factor: 1.0,
            stop_line: None,
        }
    }

    pub fn with_congestion(mut self, factor: f64) -> Self {
        self.congestion_factor = factor;
        self
    }

    pub fn with_stop_line(
        mut self,
        controller: impl Into<String>,
        approach: impl Into<String>,
    ) -> Self {
        self.stop_line = Some(StopLine {
            controller: ControllerId::new(controller),
            approach: ApproachId::new(approach),
        });
        self
    }

    /// Predicted traversal time in seconds.
    pub fn travel_time(&self) -> f64 {
        edge_travel_time(self)
    }

    /// Effective traversal speed once congestion is applied.
    pub fn effective_speed_mps(&self) -> f64 {
        self.free_speed_mps / self.congestion_factor
    }

    fn validate(&self) -> Result<(), NetworkError> {
        let bad = |reason: &str| NetworkError::InvalidEdge {
            edge: self.id.clone(),
            reason: reason.to_owned(),
        };
        if !(self.length_m.is_finite() && self.length_m > 0.0) {
            return Err(bad("length_m must be > 0"));
        }
        if !(self.free_speed_mps.is_finite() && self.free_speed_mps > 0.0) {
            return Err(bad("free_speed_mps must be > 0"));
        }
        if !(self.congestion_factor.is_finite() && self.congestion_factor >= 1.0) {
            return Err(bad("congestion_factor must be >= 1"));
        }
        Ok(())
    }
}

/// Free-flow time scaled by the edge's static congestion factor.
pub fn edge_travel_time(edge: &Edge) -> f64 {
    edge.length_m / edge.free_speed_mps * edge.congestion_factor
}

/// Directed road graph with travel-time arc costs.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    node_index: HashMap<NodeId, usize>,
    edge_index: HashMap<EdgeId, usize>,
    /// Outgoing edge indices per node, ascending.
    adjacency: Vec<Vec<usize>>,
    edge_from: Vec<usize>,
    edge_to: Vec<usize>,
}

impl RoadNetwork {
    pub fn new(mut nodes: Vec<Node>, mut edges: Vec<Edge>) -> Result<Self, NetworkError> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        edges.sort_by(|a, b| a.id.cmp(&b.id));

        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateNode(n.id.clone()));
            }
        }

        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut edge_from = Vec::with_capacity(edges.len());
        let mut edge_to = Vec::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            if edge_index.insert(e.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateEdge(e.id.clone()));
            }
            e.validate()?;
            let from = *node_index
                .get(&e.from)
                .ok_or_else(|| NetworkError::UnknownNode(e.from.clone()))?;
            let to = *node_index
                .get(&e.to)
                .ok_or_else(|| NetworkError::UnknownNode(e.to.clone()))?;
            adjacency[from].push(i);
            edge_from.push(from);
            edge_to.push(to);
        }

        Ok(Self {
            nodes,
            edges,
            node_index,
            edge_index,
            adjacency,
            edge_from,
            edge_to,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: &NodeId) -> Result<&Node, NetworkError> {
        self.node_index
            .get(id)
            .map(|&i| &self.nodes[i])
            .ok_or_else(|| NetworkError::UnknownNode(id.clone()))
    }

    pub fn edge(&self, id: &EdgeId) -> Result<&Edge, NetworkError> {
        self.edge_index
            .get(id)
            .map(|&i| &self.edges[i])
            .ok_or_else(|| NetworkError::UnknownEdge(id.clone()))
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.node_index.contains_key(id)
    }

    /// Outgoing edges of `id`, ordered by edge id.
    pub fn outgoing(&self, id: &NodeId) -> Result<impl Iterator<Item = &Edge>, NetworkError> {
        let &i = self
            .node_index
            .get(id)
            .ok_or_else(|| NetworkError::UnknownNode(id.clone()))?;
        Ok(self.adjacency[i].iter().map(move |&e| &self.edges[e]))
    }

    /// Minimum-travel-time route from `origin` to `dest`.
    ///
    /// Among routes of equal time the one whose edge-id sequence is
    /// lexicographically smallest is returned.
    pub fn shortest_path(&self, origin: &NodeId, dest: &NodeId) -> Result<Route, NetworkError> {
        let &src = self
            .node_index
            .get(origin)
            .ok_or_else(|| NetworkError::UnknownNode(origin.clone()))?;
        let &dst = self
            .node_index
            .get(dest)
            .ok_or_else(|| NetworkError::UnknownNode(dest.clone()))?;

        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let mut settled = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(HeapEntry {
            cost: 0.0,
            node: src,
        });

        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if settled[node] || cost > dist[node] {
                continue;
            }
            settled[node] = true;
            if node == dst {
                break;
            }
            for &e in &self.adjacency[node] {
                let next = self.edge_to[e];
                if settled[next] {
                    continue;
                }
                let candidate = cost + self.edges[e].travel_time();
                let better = match candidate.total_cmp(&dist[next]) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => {
                        self.path_to(&pred, node, Some(e)) < self.path_to(&pred, next, None)
                    }
                };
                if better {
                    dist[next] = candidate;
                    pred[next] = Some(e);
                    heap.push(HeapEntry {
                        cost: candidate,
                        node: next,
                    });
                }
            }
        }

        if !dist[dst].is_finite() {
            return Err(NetworkError::NoRoute {
                from: origin.clone(),
                to: dest.clone(),
            });
        }

        let indices = self.path_to(&pred, dst, None);
        let edges: Vec<EdgeId> = indices.iter().map(|&e| self.edges[e].id.clone()).collect();
        let total_length_m = indices.iter().map(|&e| self.edges[e].length_m).sum();
        Ok(Route {
            origin: origin.clone(),
            destination: dest.clone(),
            edges,
            total_time_s: dist[dst],
            total_length_m,
        })
    }

    /// Edge-index sequence reaching `node` via the predecessor tree,
    /// optionally extended by one more edge.
    fn path_to(&self, pred: &[Option<usize>], node: usize, then: Option<usize>) -> Vec<usize> {
        let mut out: Vec<usize> = then.into_iter().collect();
        let mut cur = node;
        while let Some(e) = pred[cur] {
            out.push(e);
            cur = self.edge_from[e];
        }
        out.reverse();
        out
    }

    /// Builds a route along an explicit edge sequence, checking contiguity.
    pub fn route_from_edges(&self, edges: &[EdgeId]) -> Result<Route, NetworkError> {
        let mut total_time_s = 0.0;
        let mut total_length_m = 0.0;
        let mut prev: Option<&Edge> = None;
        for id in edges {
            let e = self.edge(id)?;
            if let Some(p) = prev {
                if p.to != e.from {
                    return Err(NetworkError::InvalidEdge {
                        edge: e.id.clone(),
                        reason: format!("does not continue from `{}`", p.id),
                    });
                }
            }
            total_time_s += e.travel_time();
            total_length_m += e.length_m;
            prev = Some(e);
        }
        let first = edges.first().map(|id| self.edge(id)).transpose()?;
        let last = edges.last().map(|id| self.edge(id)).transpose()?;
        match (first, last) {
            (Some(f), Some(l)) => Ok(Route {
                origin: f.from.clone(),
                destination: l.to.clone(),
                edges: edges.to_vec(),
                total_time_s,
                total_length_m,
            }),
            _ => Err(NetworkError::EmptyNetwork),
        }
    }

    /// Projects a planar point onto the nearest edge segment.
    ///
    /// The projection parameter is clamped to the segment and scaled to the
    /// edge's nominal length. Equal distances resolve to the lower edge id.
    pub fn map_match(&self, x: f64, y: f64) -> Result<MapPosition, NetworkError> {
        let mut best: Option<(f64, usize, f64)> = None;
        for (i, e) in self.edges.iter().enumerate() {
            let a = &self.nodes[self.edge_from[i]];
            let b = &self.nodes[self.edge_to[i]];
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 {
                (((x - a.x) * dx + (y - a.y) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (px, py) = (a.x + t * dx, a.y + t * dy);
            let d2 = (x - px).powi(2) + (y - py).powi(2);
            if best.is_none_or(|(bd, _, _)| d2 < bd) {
                best = Some((d2, i, t * e.length_m));
            }
        }
        let (_, i, offset_m) = best.ok_or(NetworkError::EmptyNetwork)?;
        Ok(MapPosition {
            edge: self.edges[i].id.clone(),
            offset_m,
        })
    }

    /// Remaining distance from `pos` to the signalized end of its edge.
    pub fn distance_to_stop_line(&self, pos: &MapPosition) -> Result<f64, NetworkError> {
        let e = self.edge(&pos.edge)?;
        if !(0.0..=e.length_m).contains(&pos.offset_m) {
            return Err(NetworkError::InvalidOffset {
                edge: e.id.clone(),
                offset_m: pos.offset_m,
            });
        }
        if e.stop_line.is_none() {
            return Err(NetworkError::NoStopLine(e.id.clone()));
        }
        Ok(e.length_m - pos.offset_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

// BinaryHeap is a max heap; reverse so the cheapest entry pops first.
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Contiguous edge path with its predicted travel time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub origin: NodeId,
    pub destination: NodeId,
    pub edges: Vec<EdgeId>,
    pub total_time_s: f64,
    pub total_length_m: f64,
}

impl Route {
    pub fn empty_at(node: NodeId) -> Self {
        Self {
            origin: node.clone(),
            destination: node,
            edges: Vec::new(),
            total_time_s: 0.0,
            total_length_m: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Position along a directed edge, measured from its start node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPosition {
    pub edge: EdgeId,
    pub offset_m: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str, x: f64, y: f64) -> Node {
        Node {
            id: NodeId::new(id),
            x,
            y,
        }
    }

    fn triangle() -> RoadNetwork {
        RoadNetwork::new(
            vec![
                node("A", 0.0, 0.0),
                node("B", 100.0, 0.0),
                node("C", 100.0, 100.0),
            ],
            vec![
                Edge::new("AB", "A", "B", 100.0, 10.0),
                Edge::new("BC", "B", "C", 100.0, 10.0),
                Edge::new("AC", "A", "C", 250.0, 10.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn travel_time_formula() {
        assert_eq!(
            edge_travel_time(&Edge::new("e", "a", "b", 100.0, 10.0)),
            10.0
        );
        let congested = Edge::new("e", "a", "b", 150.0, 15.0).with_congestion(2.0);
        assert_eq!(edge_travel_time(&congested), 20.0);
    }

    #[test]
    fn single_edge_route() {
        let net = RoadNetwork::new(
            vec![node("A", 0.0, 0.0), node("B", 100.0, 0.0)],
            vec![Edge::new("AB", "A", "B", 100.0, 10.0)],
        )
        .unwrap();
        let r = net.shortest_path(&"A".into(), &"B".into()).unwrap();
        assert_eq!(r.edges, vec![EdgeId::new("AB")]);
        assert_eq!(r.total_time_s, 10.0);
    }

    #[test]
    fn triangle_prefers_two_hops() {
        let r = triangle().shortest_path(&"A".into(), &"C".into()).unwrap();
        assert_eq!(r.edges, vec![EdgeId::new("AB"), EdgeId::new("BC")]);
        assert_eq!(r.total_time_s, 20.0);
        assert_eq!(r.total_length_m, 200.0);
    }

    #[test]
    fn same_node_is_empty_route() {
        let r = triangle().shortest_path(&"B".into(), &"B".into()).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.total_time_s, 0.0);
    }

    #[test]
    fn unreachable_and_unknown() {
        let net = triangle();
        assert!(matches!(
            net.shortest_path(&"C".into(), &"A".into()),
            Err(NetworkError::NoRoute { .. })
        ));
        assert_eq!(
            net.shortest_path(&"A".into(), &"Z".into()),
            Err(NetworkError::UnknownNode("Z".into()))
        );
    }

    #[test]
    fn equal_cost_ties_pick_smallest_edge_sequence() {
        // A->B->D and A->C->D both take 20 s; "a1" < "a2".
        let net = RoadNetwork::new(
            vec![
                node("A", 0.0, 0.0),
                node("B", 1.0, 0.0),
                node("C", 0.0, 1.0),
                node("D", 1.0, 1.0),
            ],
            vec![
                Edge::new("a2", "A", "B", 100.0, 10.0),
                Edge::new("b", "B", "D", 100.0, 10.0),
                Edge::new("a1", "A", "C", 100.0, 10.0),
                Edge::new("c", "C", "D", 100.0, 10.0),
            ],
        )
        .unwrap();
        let r = net.shortest_path(&"A".into(), &"D".into()).unwrap();
        assert_eq!(r.edges, vec![EdgeId::new("a1"), EdgeId::new("c")]);
    }

    #[test]
    fn construction_rejects_bad_input() {
        let err = RoadNetwork::new(
            vec![node("A", 0.0, 0.0)],
            vec![Edge::new("AB", "A", "B", 100.0, 10.0)],
        )
        .unwrap_err();
        assert_eq!(err, NetworkError::UnknownNode("B".into()));

        let err = RoadNetwork::new(
            vec![node("A", 0.0, 0.0), node("B", 0.0, 0.0)],
            vec![Edge::new("AB", "A", "B", 100.0, 10.0).with_congestion(0.5)],
        )
        .unwrap_err();
        assert!(matches!(err, NetworkError::InvalidEdge { .. }));
    }

    #[test]
    fn map_match_midpoint_tie_and_clamp() {
        let net = triangle();
        let p = net.map_match(50.0, 0.0).unwrap();
        assert_eq!(p.edge, EdgeId::new("AB"));
        assert_eq!(p.offset_m, 50.0);

        // (100, 0) is B itself: on AB (offset 100) and BC (offset 0).
        let p = net.map_match(100.0, 0.0).unwrap();
        assert_eq!(p.edge, EdgeId::new("AB"));
        assert_eq!(p.offset_m, 100.0);

        // Beyond B along the x axis: AB clamps to its end.
        let p = net.map_match(130.0, -40.0).unwrap();
        assert_eq!(p.edge, EdgeId::new("AB"));
        assert_eq!(p.offset_m, 100.0);

        let empty = RoadNetwork::new(vec![node("A", 0.0, 0.0)], vec![]).unwrap();
        assert_eq!(empty.map_match(0.0, 0.0), Err(NetworkError::EmptyNetwork));
    }

    #[test]
    fn map_match_scales_to_nominal_length() {
        // Geometric length 100, nominal 250.
        let net = triangle();
        let p = net.map_match(50.0, 50.0).unwrap();
        assert_eq!(p.edge, EdgeId::new("AC"));
        assert!((p.offset_m - 125.0).abs() < 1e-9);
    }

    #[test]
    fn stop_line_distance() {
        let net = RoadNetwork::new(
            vec![node("A", 0.0, 0.0), node("B", 200.0, 0.0)],
            vec![
                Edge::new("AB", "A", "B", 200.0, 10.0).with_stop_line("X", "north"),
                Edge::new("BA", "B", "A", 200.0, 10.0),
            ],
        )
        .unwrap();
        let at = |e: &str, o: f64| MapPosition {
            edge: EdgeId::new(e),
            offset_m: o,
        };
        assert_eq!(net.distance_to_stop_line(&at("AB", 50.0)), Ok(150.0));
        assert_eq!(net.distance_to_stop_line(&at("AB", 200.0)), Ok(0.0));
        assert_eq!(
            net.distance_to_stop_line(&at("BA", 10.0)),
            Err(NetworkError::NoStopLine("BA".into()))
        );
        assert!(matches!(
            net.distance_to_stop_line(&at("AB", 201.0)),
            Err(NetworkError::InvalidOffset { .. })
        ));
    }

    #[test]
    fn explicit_route_checks_contiguity() {
        let net = triangle();
        let r = net.route_from_edges(&["AB".into(), "BC".into()]).unwrap();
        assert_eq!(r.total_time_s, 20.0);
        assert!(net.route_from_edges(&["BC".into(), "AB".into()]).is_err());
    }
}
