//! Incident intake, unit and hospital selection, and the ambulance
//! lifecycle.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AmbulanceId, HospitalId, IncidentId, NodeId};
use crate::network::{NetworkError, RoadNetwork, Route};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error("no free ambulance")]
    NoFreeAmbulance,
    #[error("no free ambulance can reach `{0}`")]
    NoRoute(NodeId),
    #[error("no hospital reachable from `{0}`")]
    NoHospitalRoute(NodeId),
    #[error("no hospitals configured")]
    NoHospital,
    #[error("ambulance `{ambulance}` is {status:?}; {event:?} not allowed")]
    IllegalTransition {
        ambulance: AmbulanceId,
        status: AmbulanceStatus,
        event: LifecycleEvent,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AmbulanceStatus {
    Free,
    EnRoute,
    OnScene,
    Transporting,
    AtHospital,
}

/// A fleet unit. `node` is where the unit is parked, or the last node it
/// passed while driving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ambulance {
    pub id: AmbulanceId,
    pub status: AmbulanceStatus,
    pub node: NodeId,
    /// Cruise speed; caps the speed driven on any edge.
    pub speed_mps: f64,
}

impl Ambulance {
    pub fn free(id: impl Into<String>, node: impl Into<String>, speed_mps: f64) -> Self {
        Self {
            id: AmbulanceId::new(id),
            status: AmbulanceStatus::Free,
            node: NodeId::new(node),
            speed_mps,
        }
    }

    pub fn is_free(&self) -> bool {
        self.status == AmbulanceStatus::Free
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IncidentStatus {
    Open,
    Assigned,
    Served,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub id: IncidentId,
    pub location: NodeId,
    pub created_at_s: f64,
    pub status: IncidentStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hospital {
    pub id: HospitalId,
    pub location: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub incident: IncidentId,
    pub ambulance: AmbulanceId,
    pub route_to_scene: Route,
    pub hospital: HospitalId,
    pub route_to_hospital: Route,
    pub decided_at_s: f64,
    pub manual_override: bool,
    /// Unit the engine recommended; differs from `ambulance` only after an
    /// override.
    pub recommended: AmbulanceId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LifecycleEvent {
    ArrivedAtScene,
    DepartedScene,
    ArrivedAtHospital,
    ReturnedFree,
    /// Dispatcher reassigned the incident; the unit parks at `at`.
    Recalled {
        at: NodeId,
    },
}

/// A free unit with its predicted route to a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub ambulance: AmbulanceId,
    pub route: Route,
}

fn by_time_then_id(a: &Candidate, b: &Candidate) -> Ordering {
    a.route
        .total_time_s
        .total_cmp(&b.route.total_time_s)
        .then_with(|| a.ambulance.cmp(&b.ambulance))
}

/// Every free unit that can reach `scene`, fastest first, ties by id.
pub fn rank_free_units(
    scene: &NodeId,
    fleet: &[Ambulance],
    net: &RoadNetwork,
) -> Result<Vec<Candidate>, DispatchError> {
    net.node(scene)?;
    let mut out = Vec::new();
    for unit in fleet.iter().filter(|a| a.is_free()) {
        match net.shortest_path(&unit.node, scene) {
            Ok(route) => out.push(Candidate {
                ambulance: unit.id.clone(),
                route,
            }),
            Err(NetworkError::NoRoute { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    out.sort_by(by_time_then_id);
    Ok(out)
}

/// The free unit with the smallest predicted travel time to the incident.
pub fn select_ambulance(
    incident: &Incident,
    fleet: &[Ambulance],
    net: &RoadNetwork,
) -> Result<(AmbulanceId, Route), DispatchError> {
    if !fleet.iter().any(Ambulance::is_free) {
        return Err(DispatchError::NoFreeAmbulance);
    }
    rank_free_units(&incident.location, fleet, net)?
        .into_iter()
        .next()
        .map(|c| (c.ambulance, c.route))
        .ok_or_else(|| DispatchError::NoRoute(incident.location.clone()))
}

/// The hospital closest in travel time to the scene, ties by id.
pub fn select_hospital(
    scene: &NodeId,
    hospitals: &[Hospital],
    net: &RoadNetwork,
) -> Result<(HospitalId, Route), DispatchError> {
    if hospitals.is_empty() {
        return Err(DispatchError::NoHospital);
    }
    let mut best: Option<(HospitalId, Route)> = None;
    for h in hospitals {
        let route = match net.shortest_path(scene, &h.location) {
            Ok(r) => r,
            Err(NetworkError::NoRoute { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let better = best.as_ref().is_none_or(|(id, r)| {
            route
                .total_time_s
                .total_cmp(&r.total_time_s)
                .then_with(|| h.id.cmp(id))
                == Ordering::Less
        });
        if better {
            best = Some((h.id.clone(), route));
        }
    }
    best.ok_or_else(|| DispatchError::NoHospitalRoute(scene.clone()))
}

/// Applies a lifecycle event to the unit and incident of `assignment`.
pub fn advance(
    assignment: &Assignment,
    ambulance: &mut Ambulance,
    incident: &mut Incident,
    event: LifecycleEvent,
) -> Result<(), DispatchError> {
    use AmbulanceStatus::*;
    let next = match (ambulance.status, &event) {
        (EnRoute, LifecycleEvent::ArrivedAtScene) => OnScene,
        (OnScene, LifecycleEvent::DepartedScene) => Transporting,
        (Transporting, LifecycleEvent::ArrivedAtHospital) => AtHospital,
        (AtHospital, LifecycleEvent::ReturnedFree) => Free,
        (EnRoute, LifecycleEvent::Recalled { .. }) => Free,
        (status, _) => {
            return Err(DispatchError::IllegalTransition {
                ambulance: ambulance.id.clone(),
                status,
                event,
            })
        }
    };
    ambulance.status = next;
    match event {
        LifecycleEvent::ArrivedAtScene => {
            ambulance.node = assignment.route_to_scene.destination.clone();
        }
        LifecycleEvent::ArrivedAtHospital | LifecycleEvent::ReturnedFree => {
            ambulance.node = assignment.route_to_hospital.destination.clone();
            if next == Free {
                incident.status = IncidentStatus::Served;
            }
        }
        LifecycleEvent::Recalled { at } => {
            ambulance.node = at;
            incident.status = IncidentStatus::Open;
        }
        LifecycleEvent::DepartedScene => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Edge, Node};

    // S1 --20s--> X <--15s-- S2 ; X --30s--> H1 ; X --40s--> H2 ; Z isolated
    fn net() -> RoadNetwork {
        let n = |id: &str| Node {
            id: id.into(),
            x: 0.0,
            y: 0.0,
        };
        RoadNetwork::new(
            vec![n("S1"), n("S2"), n("X"), n("H1"), n("H2"), n("Z")],
            vec![
                Edge::new("s1x", "S1", "X", 200.0, 10.0),
                Edge::new("s2x", "S2", "X", 150.0, 10.0),
                Edge::new("xh1", "X", "H1", 300.0, 10.0),
                Edge::new("xh2", "X", "H2", 400.0, 10.0),
            ],
        )
        .unwrap()
    }

    fn incident(at: &str) -> Incident {
        Incident {
            id: "i1".into(),
            location: at.into(),
            created_at_s: 0.0,
            status: IncidentStatus::Open,
        }
    }

    #[test]
    fn single_free_unit() {
        let fleet = [Ambulance::free("a", "S1", 15.0)];
        let (id, route) = select_ambulance(&incident("X"), &fleet, &net()).unwrap();
        assert_eq!(id, "a".into());
        assert_eq!(route.total_time_s, 20.0);
    }

    #[test]
    fn picks_faster_unit() {
        let fleet = [
            Ambulance::free("a", "S1", 15.0),
            Ambulance::free("b", "S2", 15.0),
        ];
        let (id, route) = select_ambulance(&incident("X"), &fleet, &net()).unwrap();
        assert_eq!(id, "b".into());
        assert_eq!(route.total_time_s, 15.0);
    }

    #[test]
    fn ties_go_to_lower_id() {
        let fleet = [
            Ambulance::free("b", "S1", 15.0),
            Ambulance::free("a", "S1", 15.0),
        ];
        let (id, _) = select_ambulance(&incident("X"), &fleet, &net()).unwrap();
        assert_eq!(id, "a".into());
    }

    #[test]
    fn busy_or_unreachable_fleet() {
        let mut unit = Ambulance::free("a", "S1", 15.0);
        unit.status = AmbulanceStatus::EnRoute;
        assert_eq!(
            select_ambulance(&incident("X"), &[unit], &net()),
            Err(DispatchError::NoFreeAmbulance)
        );
        let fleet = [Ambulance::free("a", "S1", 15.0)];
        assert_eq!(
            select_ambulance(&incident("Z"), &fleet, &net()),
            Err(DispatchError::NoRoute("Z".into()))
        );
    }

    #[test]
    fn hospital_selection() {
        let h = |id: &str, at: &str| Hospital {
            id: id.into(),
            location: at.into(),
        };
        let (id, r) = select_hospital(&"X".into(), &[h("h2", "H2")], &net()).unwrap();
        assert_eq!((id, r.total_time_s), ("h2".into(), 40.0));
        let (id, r) =
            select_hospital(&"X".into(), &[h("h2", "H2"), h("h1", "H1")], &net()).unwrap();
        assert_eq!((id, r.total_time_s), ("h1".into(), 30.0));
        assert_eq!(
            select_hospital(&"Z".into(), &[h("h1", "H1")], &net()),
            Err(DispatchError::NoHospitalRoute("Z".into()))
        );
        assert_eq!(
            select_hospital(&"X".into(), &[], &net()),
            Err(DispatchError::NoHospital)
        );
    }

    fn assignment() -> Assignment {
        let net = net();
        Assignment {
            incident: "i1".into(),
            ambulance: "a".into(),
            route_to_scene: net.shortest_path(&"S1".into(), &"X".into()).unwrap(),
            hospital: "h1".into(),
            route_to_hospital: net.shortest_path(&"X".into(), &"H1".into()).unwrap(),
            decided_at_s: 0.0,
            manual_override: false,
            recommended: "a".into(),
        }
    }

    #[test]
    fn lifecycle_chain() {
        let asg = assignment();
        let mut unit = Ambulance::free("a", "S1", 15.0);
        let mut inc = incident("X");
        inc.status = IncidentStatus::Assigned;
        unit.status = AmbulanceStatus::EnRoute;

        advance(&asg, &mut unit, &mut inc, LifecycleEvent::ArrivedAtScene).unwrap();
        assert_eq!(unit.status, AmbulanceStatus::OnScene);
        assert_eq!(unit.node, "X".into());
        advance(&asg, &mut unit, &mut inc, LifecycleEvent::DepartedScene).unwrap();
        advance(&asg, &mut unit, &mut inc, LifecycleEvent::ArrivedAtHospital).unwrap();
        assert_eq!(unit.status, AmbulanceStatus::AtHospital);
        assert_eq!(inc.status, IncidentStatus::Assigned);
        advance(&asg, &mut unit, &mut inc, LifecycleEvent::ReturnedFree).unwrap();
        assert_eq!(unit.status, AmbulanceStatus::Free);
        assert_eq!(unit.node, "H1".into());
        assert_eq!(inc.status, IncidentStatus::Served);
    }

    #[test]
    fn illegal_transition() {
        let asg = assignment();
        let mut unit = Ambulance::free("a", "S1", 15.0);
        let mut inc = incident("X");
        let err = advance(&asg, &mut unit, &mut inc, LifecycleEvent::ArrivedAtHospital);
        assert!(matches!(
            err,
            Err(DispatchError::IllegalTransition {
                status: AmbulanceStatus::Free,
                ..
            })
        ));
        assert_eq!(unit.status, AmbulanceStatus::Free);
    }
}
