//! Fixed-step simulation of the fleet, the signal controllers and the
//! dispatch loop.
//!
//! A step over `[t, t + dt]` runs in this order:
//!
//! 1. scripted incidents due by `t` are taken in and open incidents are
//!    dispatched at `t`;
//! 2. every controller is ticked to `t + dt`, recording its phase changes
//!    at their exact times;
//! 3. ambulances drive through the interval, reading the signal at the
//!    moment they reach a stop line from the recorded changes. A red
//!    signal holds the vehicle at the line until the next green start;
//! 4. stop-line crossings release priorities, then vehicles that entered
//!    a detection zone issue priority requests, both stamped `t + dt`.
//!
//! Events carry exact (interpolated) times and are sorted by time within
//! the step before they get sequence numbers.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{
    self, Ambulance, AmbulanceStatus, Assignment, Hospital, Incident, IncidentStatus,
    LifecycleEvent,
};
use crate::ids::{AmbulanceId, ApproachId, ControllerId, EdgeId, HospitalId, IncidentId, NodeId};
use crate::network::{MapPosition, Node, RoadNetwork, Route, StopLine};
use crate::recognition::{self, MatchResult};
use crate::scenario::{Camera, EdgeDoc, Scenario};
use crate::signal::{
    ControllerMode, ControllerState, PhaseChange, PhaseChangeKind, PhasePlan, PriorityGrant,
    PriorityRequest, Signal, SignalError,
};

pub const DEFAULT_DT_S: f64 = 0.5;
pub const DEFAULT_DURATION_S: f64 = 3600.0;
pub const DEFAULT_DETECTION_DISTANCE_M: f64 = 150.0;
pub const DEFAULT_SERVICE_TIME_S: f64 = 120.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("vehicle speed is zero; cannot predict arrival")]
    ZeroSpeed,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scenario is invalid: {0}")]
    ScenarioInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt_s: f64,
    pub duration_s: f64,
    pub priority_enabled: bool,
    pub detection_distance_m: f64,
    /// Time spent on scene before leaving for hospital.
    pub service_time_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_s: DEFAULT_DT_S,
            duration_s: DEFAULT_DURATION_S,
            priority_enabled: true,
            detection_distance_m: DEFAULT_DETECTION_DISTANCE_M,
            service_time_s: DEFAULT_SERVICE_TIME_S,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_owned()));
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return bad("dt_s must be > 0");
        }
        if !(self.detection_distance_m.is_finite() && self.detection_distance_m > 0.0) {
            return bad("detection_distance_m must be > 0");
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return bad("duration_s must be >= 0");
        }
        if !(self.service_time_s.is_finite() && self.service_time_s >= 0.0) {
            return bad("service_time_s must be >= 0");
        }
        Ok(())
    }
}

/// Where a unit is along its current route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleKinematics {
    pub route: Route,
    pub route_offset_m: f64,
    /// Current speed; zero while held at a stop line.
    pub speed_mps: f64,
    pub stopped: bool,
}

/// Time to cover `distance_m` at the vehicle's current speed.
pub fn predict_t_d(v: &VehicleKinematics, distance_m: f64) -> Result<f64, SimError> {
    if v.speed_mps.is_nan() || v.speed_mps <= 0.0 {
        return Err(SimError::ZeroSpeed);
    }
    Ok(distance_m / v.speed_mps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leg {
    ToScene,
    ToHospital,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTime {
    pub ambulance: AmbulanceId,
    pub predicted_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionSummary {
    #[serde(rename = "D")]
    pub dissimilarity: u64,
    pub per_point: f64,
    pub is_ambulance: bool,
}

impl From<&MatchResult> for RecognitionSummary {
    fn from(r: &MatchResult) -> Self {
        Self {
            dissimilarity: r.dissimilarity,
            per_point: r.per_point,
            is_ambulance: r.is_ambulance,
        }
    }
}

/// What the controller did with a detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DetectionOutcome {
    Granted {
        #[serde(flatten)]
        grant: PriorityGrant,
    },
    Queued {
        holder: AmbulanceId,
        position: usize,
    },
    /// Priority is switched off for this run.
    Disabled,
    /// The camera did not confirm an ambulance.
    NotRecognized,
    Rejected {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    IncidentCreated {
        incident: IncidentId,
        node: NodeId,
        created_at_s: f64,
    },
    Dispatch {
        incident: IncidentId,
        ambulance: AmbulanceId,
        recommended: AmbulanceId,
        manual_override: bool,
        hospital: HospitalId,
        route_to_scene: Vec<EdgeId>,
        predicted_time_s: f64,
        candidates: Vec<CandidateTime>,
    },
    Recalled {
        incident: IncidentId,
        ambulance: AmbulanceId,
        at: NodeId,
    },
    Detection {
        ambulance: AmbulanceId,
        controller: ControllerId,
        approach: ApproachId,
        edge: EdgeId,
        distance_m: f64,
        t_d_s: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        recognition: Option<RecognitionSummary>,
        #[serde(flatten)]
        outcome: DetectionOutcome,
    },
    /// A queued request became active when the holder crossed.
    PriorityPromoted {
        ambulance: AmbulanceId,
        controller: ControllerId,
        approach: ApproachId,
        #[serde(flatten)]
        grant: PriorityGrant,
    },
    PhaseChange {
        controller: ControllerId,
        phase: crate::ids::PhaseId,
        #[serde(flatten)]
        change: PhaseChangeKind,
    },
    StopLineCross {
        ambulance: AmbulanceId,
        controller: ControllerId,
        approach: ApproachId,
        edge: EdgeId,
        /// Time held at this stop line.
        delay_s: f64,
    },
    SceneArrival {
        incident: IncidentId,
        ambulance: AmbulanceId,
        response_time_s: f64,
    },
    SceneDeparture {
        incident: IncidentId,
        ambulance: AmbulanceId,
        hospital: HospitalId,
    },
    HospitalArrival {
        incident: IncidentId,
        ambulance: AmbulanceId,
        hospital: HospitalId,
    },
    UnitFree {
        ambulance: AmbulanceId,
        node: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub seq: u64,
    pub t_s: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl SimEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

/// Event log as JSON lines, one event per line.
pub fn events_to_jsonl(events: &[SimEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_json_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentMetrics {
    pub id: IncidentId,
    pub node: NodeId,
    pub created_at_s: f64,
    pub status: IncidentStatus,
    pub ambulance: Option<AmbulanceId>,
    pub manual_override: bool,
    pub dispatched_at_s: Option<f64>,
    pub scene_arrival_s: Option<f64>,
    pub response_time_s: Option<f64>,
    pub hospital: Option<HospitalId>,
    pub hospital_arrival_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbulanceMetrics {
    pub id: AmbulanceId,
    /// Total time held at stop lines.
    pub intersection_delay_s: f64,
    pub stops: u32,
    pub stop_lines_crossed: u32,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingMetrics {
    pub ambulance: AmbulanceId,
    pub controller: ControllerId,
    pub approach: ApproachId,
    pub crossed_at_s: f64,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerMetrics {
    pub id: ControllerId,
    pub detections: u32,
    pub no_change: u32,
    pub extensions: u32,
    pub holds: u32,
    pub preemptions: u32,
    pub queued: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub priority_enabled: bool,
    pub end_time_s: f64,
    pub steps: u64,
    pub incidents: Vec<IncidentMetrics>,
    pub ambulances: Vec<AmbulanceMetrics>,
    pub crossings: Vec<CrossingMetrics>,
    pub controllers: Vec<ControllerMetrics>,
    pub extensions: u32,
    pub preemptions: u32,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn incident(&self, id: &str) -> Option<&IncidentMetrics> {
        self.incidents.iter().find(|i| i.id.as_str() == id)
    }

    pub fn ambulance(&self, id: &str) -> Option<&AmbulanceMetrics> {
        self.ambulances.iter().find(|a| a.id.as_str() == id)
    }
}

#[derive(Debug, Clone)]
struct Trip {
    incident: IncidentId,
    leg: Leg,
    kin: VehicleKinematics,
    /// Route offset at the end of each edge.
    cum_end_m: Vec<f64>,
    edge_idx: usize,
    /// Waiting at the stop line that ends `edge_idx`.
    at_line: bool,
    line_delay_s: f64,
    /// Route edge indices whose stop line has been detected.
    detected: BTreeSet<usize>,
    ready_at_s: f64,
}

impl Trip {
    fn new(incident: IncidentId, leg: Leg, route: Route, ready_at_s: f64) -> Self {
        Self {
            incident,
            leg,
            kin: VehicleKinematics {
                route,
                route_offset_m: 0.0,
                speed_mps: 0.0,
                stopped: false,
            },
            cum_end_m: Vec::new(),
            edge_idx: 0,
            at_line: false,
            line_delay_s: 0.0,
            detected: BTreeSet::new(),
            ready_at_s,
        }
    }
}

#[derive(Debug, Clone)]
enum Activity {
    Idle,
    Driving(Box<Trip>),
    OnScene { incident: IncidentId, until_s: f64 },
}

/// A unit's position for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitPosition {
    pub edge: EdgeId,
    pub offset_m: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbulanceView {
    pub id: AmbulanceId,
    pub status: AmbulanceStatus,
    pub node: NodeId,
    pub speed_mps: f64,
    pub incident: Option<IncidentId>,
    pub leg: Option<Leg>,
    pub position: Option<UnitPosition>,
    pub route: Vec<EdgeId>,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentView {
    pub id: IncidentId,
    pub node: NodeId,
    pub created_at_s: f64,
    pub status: IncidentStatus,
    pub ambulance: Option<AmbulanceId>,
    pub recommended: Option<AmbulanceId>,
    pub manual_override: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerView {
    pub id: ControllerId,
    pub mode: ControllerMode,
    pub phase: crate::ids::PhaseId,
    pub phase_elapsed_s: f64,
    pub remaining_green_s: f64,
    pub granted_extension_s: f64,
    pub signals: BTreeMap<ApproachId, Signal>,
    pub active_priority: Option<AmbulanceId>,
    pub queue: Vec<AmbulanceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkView {
    pub nodes: Vec<Node>,
    pub edges: Vec<EdgeDoc>,
}

/// Consistent picture of the world between two steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub scenario: String,
    pub time_s: f64,
    pub step: u64,
    pub last_seq: Option<u64>,
    pub priority_enabled: bool,
    pub ambulances: Vec<AmbulanceView>,
    pub incidents: Vec<IncidentView>,
    pub hospitals: Vec<Hospital>,
    pub controllers: Vec<ControllerView>,
    pub network: NetworkView,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommandError {
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("incident `{0}` already exists")]
    DuplicateIncident(IncidentId),
    #[error("unknown incident `{0}`")]
    UnknownIncident(IncidentId),
    #[error("unknown ambulance `{0}`")]
    UnknownAmbulance(AmbulanceId),
    #[error("ambulance `{ambulance}` is {status:?}, not Free")]
    UnitNotFree {
        ambulance: AmbulanceId,
        status: AmbulanceStatus,
    },
    #[error("incident `{incident}` cannot be reassigned: {reason}")]
    NotReassignable {
        incident: IncidentId,
        reason: String,
    },
    #[error("dispatch failed: {0}")]
    Dispatch(String),
}

/// Detection-zone entry found at the end of a step.
struct PendingDetection {
    ambulance: AmbulanceId,
    stop_line: StopLine,
    edge: EdgeId,
    distance_m: f64,
    t_d_s: f64,
}

struct Crossing {
    ambulance: AmbulanceId,
    stop_line: StopLine,
}

/// Phase changes recorded while ticking, for signal lookups mid-step.
struct Timeline {
    before: BTreeMap<ControllerId, ControllerState>,
    changes: BTreeMap<ControllerId, Vec<PhaseChange>>,
    end_s: f64,
}

impl Timeline {
    /// Earliest time in `[from, end]` at which the approach is green.
    fn green_from(
        &self,
        plans: &BTreeMap<ControllerId, PhasePlan>,
        sl: &StopLine,
        from: f64,
    ) -> Option<f64> {
        let plan = &plans[&sl.controller];
        let phase = &plan.phases[plan.phase_of(&sl.approach)?].id;
        let mut green = self.before[&sl.controller].is_green(plan, &sl.approach);
        let changes = &self.changes[&sl.controller];
        for c in changes.iter().filter(|c| c.at_s <= from) {
            match c.kind {
                PhaseChangeKind::GreenStart if &c.phase == phase => green = true,
                PhaseChangeKind::GreenEnd { .. } if &c.phase == phase => green = false,
                _ => {}
            }
        }
        if green {
            return Some(from);
        }
        changes
            .iter()
            .find(|c| {
                c.at_s > from
                    && c.at_s <= self.end_s
                    && &c.phase == phase
                    && c.kind == PhaseChangeKind::GreenStart
            })
            .map(|c| c.at_s)
    }
}

enum DriveEnd {
    /// Still on the road at the end of the interval.
    Running,
    Arrived(f64),
}

#[derive(Debug, Clone)]
pub struct World {
    name: String,
    config: SimConfig,
    net: RoadNetwork,
    plans: BTreeMap<ControllerId, PhasePlan>,
    controllers: BTreeMap<ControllerId, ControllerState>,
    fleet: BTreeMap<AmbulanceId, Ambulance>,
    activity: BTreeMap<AmbulanceId, Activity>,
    hospitals: Vec<Hospital>,
    incidents: Vec<Incident>,
    scripted: VecDeque<Incident>,
    assignments: BTreeMap<IncidentId, Assignment>,
    recognized: BTreeMap<AmbulanceId, MatchResult>,
    time_s: f64,
    step_index: u64,
    next_seq: u64,
    events: Vec<SimEvent>,
    incident_metrics: BTreeMap<IncidentId, IncidentMetrics>,
    unit_metrics: BTreeMap<AmbulanceId, AmbulanceMetrics>,
    controller_metrics: BTreeMap<ControllerId, ControllerMetrics>,
}

impl World {
    pub fn new(
        scenario: &Scenario,
        config: SimConfig,
        camera: Option<&Camera>,
    ) -> Result<Self, SimError> {
        config.validate()?;
        let issues = scenario.validate();
        if let Some(first) = issues.first() {
            return Err(SimError::ScenarioInvalid(first.to_string()));
        }
        let net = scenario.network();
        let plans: BTreeMap<_, _> = scenario
            .controllers
            .iter()
            .map(|c| (c.plan.controller_id.clone(), c.plan.clone()))
            .collect();
        let controllers = scenario
            .controllers
            .iter()
            .map(|c| (c.plan.controller_id.clone(), c.initial_state()))
            .collect();
        let fleet: BTreeMap<_, _> = scenario
            .fleet()
            .into_iter()
            .map(|a| (a.id.clone(), a))
            .collect();
        let activity = fleet
            .keys()
            .map(|id| (id.clone(), Activity::Idle))
            .collect();
        let unit_metrics = fleet
            .keys()
            .map(|id| {
                let m = AmbulanceMetrics {
                    id: id.clone(),
                    intersection_delay_s: 0.0,
                    stops: 0,
                    stop_lines_crossed: 0,
                    distance_m: 0.0,
                };
                (id.clone(), m)
            })
            .collect();
        let controller_metrics = plans
            .keys()
            .map(|id| {
                let m = ControllerMetrics {
                    id: id.clone(),
                    detections: 0,
                    no_change: 0,
                    extensions: 0,
                    holds: 0,
                    preemptions: 0,
                    queued: 0,
                };
                (id.clone(), m)
            })
            .collect();
        let scripted = scenario
            .incidents
            .iter()
            .map(|i| Incident {
                id: i.id.clone(),
                location: i.node.clone(),
                created_at_s: i.t_s,
                status: IncidentStatus::Open,
            })
            .collect();

        let mut recognized = BTreeMap::new();
        if let Some(cam) = camera {
            for (unit, frame) in &cam.frames {
                let result = match recognition::recognize(
                    frame,
                    &cam.pattern,
                    cam.sobel_threshold,
                    cam.tau_per_point,
                ) {
                    Ok(r) => r,
                    Err(recognition::RecognitionError::NotRecognizable) => MatchResult {
                        best_translation: recognition::Point::new(0, 0),
                        dissimilarity: u64::MAX,
                        n: cam.pattern.len(),
                        per_point: f64::INFINITY,
                        is_ambulance: false,
                    },
                    Err(e) => return Err(SimError::ScenarioInvalid(e.to_string())),
                };
                recognized.insert(unit.clone(), result);
            }
        }

        Ok(Self {
            name: scenario.name.clone(),
            config,
            net,
            plans,
            controllers,
            fleet,
            activity,
            hospitals: scenario.hospitals.clone(),
            incidents: Vec::new(),
            scripted,
            assignments: BTreeMap::new(),
            recognized,
            time_s: 0.0,
            step_index: 0,
            next_seq: 0,
            events: Vec::new(),
            incident_metrics: BTreeMap::new(),
            unit_metrics,
            controller_metrics,
        })
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn steps(&self) -> u64 {
        self.step_index
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.net
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    /// Events with sequence number greater than `seq` (all when `None`).
    pub fn events_after(&self, seq: Option<u64>) -> &[SimEvent] {
        let start = match seq {
            None => 0,
            Some(k) => self.events.partition_point(|e| e.seq <= k),
        };
        &self.events[start..]
    }

    pub fn controller(&self, id: &str) -> Option<&ControllerState> {
        self.controllers.get(&ControllerId::new(id))
    }

    pub fn ambulance(&self, id: &str) -> Option<&Ambulance> {
        self.fleet.get(&AmbulanceId::new(id))
    }

    pub fn incident(&self, id: &str) -> Option<&Incident> {
        self.incidents.iter().find(|i| i.id.as_str() == id)
    }

    pub fn kinematics(&self, id: &str) -> Option<&VehicleKinematics> {
        match self.activity.get(&AmbulanceId::new(id))? {
            Activity::Driving(trip) => Some(&trip.kin),
            _ => None,
        }
    }

    /// Nothing left to happen: no scripted incidents pending and every
    /// unit idle.
    pub fn is_quiescent(&self) -> bool {
        self.scripted.is_empty()
            && self.activity.values().all(|a| matches!(a, Activity::Idle))
            && !self
                .incidents
                .iter()
                .any(|i| i.status == IncidentStatus::Open && self.can_dispatch(i))
    }

    fn can_dispatch(&self, incident: &Incident) -> bool {
        dispatch::select_ambulance(incident, &self.fleet_vec(), &self.net).is_ok()
    }

    pub fn is_finished(&self) -> bool {
        self.time_s >= self.config.duration_s - 1e-9 || self.is_quiescent()
    }

    fn fleet_vec(&self) -> Vec<Ambulance> {
        self.fleet.values().cloned().collect()
    }

    fn emit(&mut self, mut batch: Vec<(f64, EventKind)>) -> Vec<SimEvent> {
        batch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let out: Vec<SimEvent> = batch
            .into_iter()
            .map(|(t_s, kind)| {
                let e = SimEvent {
                    seq: self.next_seq,
                    t_s,
                    kind,
                };
                self.next_seq += 1;
                e
            })
            .collect();
        self.events.extend(out.iter().cloned());
        out
    }

    /// Adds a new open incident at the current time.
    pub fn inject_incident(
        &mut self,
        id: Option<IncidentId>,
        node: NodeId,
    ) -> Result<Vec<SimEvent>, CommandError> {
        if !self.net.contains_node(&node) {
            return Err(CommandError::UnknownNode(node));
        }
        let id = match id {
            Some(id) => id,
            None => {
                let mut n = self.incidents.len() + self.scripted.len() + 1;
                loop {
                    let candidate = IncidentId::new(format!("inc-{n}"));
                    if !self.incident_exists(&candidate) {
                        break candidate;
                    }
                    n += 1;
                }
            }
        };
        if self.incident_exists(&id) {
            return Err(CommandError::DuplicateIncident(id));
        }
        let incident = Incident {
            id,
            location: node,
            created_at_s: self.time_s,
            status: IncidentStatus::Open,
        };
        let mut batch = Vec::new();
        self.take_in(incident, self.time_s, &mut batch);
        Ok(self.emit(batch))
    }

    fn incident_exists(&self, id: &IncidentId) -> bool {
        self.incidents.iter().any(|i| &i.id == id) || self.scripted.iter().any(|i| &i.id == id)
    }

    /// Dispatcher's manual choice of unit for an incident.
    ///
    /// The unit must be Free. An incident whose unit is still driving to
    /// the scene can be reassigned; that unit is recalled and parks at the
    /// start node of the edge it is on.
    pub fn dispatch_override(
        &mut self,
        incident: &IncidentId,
        ambulance: &AmbulanceId,
    ) -> Result<Vec<SimEvent>, CommandError> {
        let idx = self
            .incidents
            .iter()
            .position(|i| &i.id == incident)
            .ok_or_else(|| CommandError::UnknownIncident(incident.clone()))?;
        let unit = self
            .fleet
            .get(ambulance)
            .ok_or_else(|| CommandError::UnknownAmbulance(ambulance.clone()))?;
        if !unit.is_free() {
            return Err(CommandError::UnitNotFree {
                ambulance: ambulance.clone(),
                status: unit.status,
            });
        }
        // Checked before any recall so a failed override changes nothing.
        let scene = &self.incidents[idx].location;
        if self.net.shortest_path(&unit.node, scene).is_err() {
            return Err(CommandError::Dispatch(format!(
                "no route from `{ambulance}` to `{scene}`"
            )));
        }
        dispatch::select_hospital(scene, &self.hospitals, &self.net)
            .map_err(|e| CommandError::Dispatch(e.to_string()))?;
        let mut batch = Vec::new();
        match self.incidents[idx].status {
            IncidentStatus::Open => {}
            IncidentStatus::Served => {
                return Err(CommandError::NotReassignable {
                    incident: incident.clone(),
                    reason: "already served".into(),
                })
            }
            IncidentStatus::Assigned => {
                let current = self.assignments[incident].ambulance.clone();
                if self.fleet[&current].status != AmbulanceStatus::EnRoute {
                    return Err(CommandError::NotReassignable {
                        incident: incident.clone(),
                        reason: format!("unit `{current}` has already reached the scene"),
                    });
                }
                self.recall(&current, idx, &mut batch);
            }
        }
        self.assign(idx, Some(ambulance.clone()), &mut batch)
            .map_err(|e| CommandError::Dispatch(e.to_string()))?;
        Ok(self.emit(batch))
    }

    fn recall(
        &mut self,
        unit: &AmbulanceId,
        incident_idx: usize,
        batch: &mut Vec<(f64, EventKind)>,
    ) {
        let at = match &self.activity[unit] {
            Activity::Driving(trip) if !trip.kin.route.is_empty() => {
                let edge = &trip.kin.route.edges[trip.edge_idx];
                let edge = self.net.edge(edge).expect("route edge");
                if trip.at_line {
                    edge.to.clone()
                } else {
                    edge.from.clone()
                }
            }
            _ => self.fleet[unit].node.clone(),
        };
        self.release_priority(unit, batch);
        let incident_id = self.incidents[incident_idx].id.clone();
        let assignment = self.assignments.remove(&incident_id).expect("assigned");
        let amb = self.fleet.get_mut(unit).expect("unit");
        dispatch::advance(
            &assignment,
            amb,
            &mut self.incidents[incident_idx],
            LifecycleEvent::Recalled { at: at.clone() },
        )
        .expect("en-route unit can be recalled");
        self.activity.insert(unit.clone(), Activity::Idle);
        batch.push((
            self.time_s,
            EventKind::Recalled {
                incident: incident_id,
                ambulance: unit.clone(),
                at,
            },
        ));
    }

    /// Drops any active or queued priority held by `unit`.
    fn release_priority(&mut self, unit: &AmbulanceId, batch: &mut Vec<(f64, EventKind)>) {
        let ids: Vec<ControllerId> = self.controllers.keys().cloned().collect();
        for c in ids {
            let plan = &self.plans[&c];
            let state = self.controllers.get_mut(&c).expect("controller");
            let outcome = state.on_stop_line_crossed(plan, unit);
            self.record_crossing_outcome(&c, outcome, batch);
        }
    }

    fn take_in(&mut self, incident: Incident, t: f64, batch: &mut Vec<(f64, EventKind)>) {
        batch.push((
            t,
            EventKind::IncidentCreated {
                incident: incident.id.clone(),
                node: incident.location.clone(),
                created_at_s: incident.created_at_s,
            },
        ));
        self.incident_metrics.insert(
            incident.id.clone(),
            IncidentMetrics {
                id: incident.id.clone(),
                node: incident.location.clone(),
                created_at_s: incident.created_at_s,
                status: IncidentStatus::Open,
                ambulance: None,
                manual_override: false,
                dispatched_at_s: None,
                scene_arrival_s: None,
                response_time_s: None,
                hospital: None,
                hospital_arrival_s: None,
            },
        );
        self.incidents.push(incident);
    }

    /// Assigns the recommended unit, or `chosen` when the dispatcher
    /// overrides the recommendation.
    fn assign(
        &mut self,
        idx: usize,
        chosen: Option<AmbulanceId>,
        batch: &mut Vec<(f64, EventKind)>,
    ) -> Result<(), dispatch::DispatchError> {
        let t = self.time_s;
        let incident = self.incidents[idx].clone();
        let fleet = self.fleet_vec();
        let ranked = dispatch::rank_free_units(&incident.location, &fleet, &self.net)?;
        let (recommended, _) = dispatch::select_ambulance(&incident, &fleet, &self.net)?;
        let (hospital, route_to_hospital) =
            dispatch::select_hospital(&incident.location, &self.hospitals, &self.net)?;
        let unit = chosen.unwrap_or_else(|| recommended.clone());
        let route_to_scene = ranked
            .iter()
            .find(|c| c.ambulance == unit)
            .map(|c| c.route.clone())
            .ok_or_else(|| dispatch::DispatchError::NoRoute(incident.location.clone()))?;
        let assignment = Assignment {
            incident: incident.id.clone(),
            ambulance: unit.clone(),
            route_to_scene: route_to_scene.clone(),
            hospital: hospital.clone(),
            route_to_hospital,
            decided_at_s: t,
            manual_override: unit != recommended,
            recommended: recommended.clone(),
        };
        batch.push((
            t,
            EventKind::Dispatch {
                incident: incident.id.clone(),
                ambulance: unit.clone(),
                recommended,
                manual_override: assignment.manual_override,
                hospital: hospital.clone(),
                route_to_scene: route_to_scene.edges.clone(),
                predicted_time_s: route_to_scene.total_time_s,
                candidates: ranked
                    .iter()
                    .map(|c| CandidateTime {
                        ambulance: c.ambulance.clone(),
                        predicted_time_s: c.route.total_time_s,
                    })
                    .collect(),
            },
        ));
        let m = self
            .incident_metrics
            .get_mut(&incident.id)
            .expect("metrics");
        m.status = IncidentStatus::Assigned;
        m.ambulance = Some(unit.clone());
        m.manual_override = assignment.manual_override;
        m.dispatched_at_s = Some(t);
        m.hospital = Some(hospital);

        self.incidents[idx].status = IncidentStatus::Assigned;
        self.fleet.get_mut(&unit).expect("unit").status = AmbulanceStatus::EnRoute;
        let trip = self.new_trip(incident.id.clone(), Leg::ToScene, route_to_scene, t);
        self.activity
            .insert(unit, Activity::Driving(Box::new(trip)));
        self.assignments.insert(incident.id, assignment);
        Ok(())
    }

    fn new_trip(&self, incident: IncidentId, leg: Leg, route: Route, ready_at_s: f64) -> Trip {
        let mut trip = Trip::new(incident, leg, route, ready_at_s);
        let mut acc = 0.0;
        for e in &trip.kin.route.edges {
            acc += self.net.edge(e).expect("route edge").length_m;
            trip.cum_end_m.push(acc);
        }
        trip
    }

    /// Advances the world by one step of `config.dt_s`.
    pub fn step(&mut self) -> Vec<SimEvent> {
        let t0 = self.time_s;
        let t1 = (self.step_index + 1) as f64 * self.config.dt_s;
        let mut batch = Vec::new();

        while self.scripted.front().is_some_and(|i| i.created_at_s <= t0) {
            let incident = self.scripted.pop_front().expect("front");
            self.take_in(incident, t0, &mut batch);
        }
        for idx in 0..self.incidents.len() {
            if self.incidents[idx].status == IncidentStatus::Open {
                // no free or reachable unit: retried next step
                let _ = self.assign(idx, None, &mut batch);
            }
        }

        let before = self.controllers.clone();
        let mut changes = BTreeMap::new();
        for (id, state) in self.controllers.iter_mut() {
            let plan = &self.plans[id];
            state.clock_s = t0;
            let out = state.tick(plan, t1 - t0);
            state.clock_s = t1;
            for c in &out.changes {
                batch.push((c.at_s, phase_event(id, c)));
                if matches!(c.kind, PhaseChangeKind::Hold { .. }) {
                    self.controller_metrics.get_mut(id).expect("metrics").holds += 1;
                }
            }
            changes.insert(id.clone(), out.changes);
        }
        let timeline = Timeline {
            before,
            changes,
            end_s: t1,
        };

        let mut crossings = Vec::new();
        let units: Vec<AmbulanceId> = self.fleet.keys().cloned().collect();
        for unit in &units {
            self.advance_unit(unit, t0, t1, &timeline, &mut crossings, &mut batch);
        }

        for c in crossings {
            let plan = &self.plans[&c.stop_line.controller];
            let state = self
                .controllers
                .get_mut(&c.stop_line.controller)
                .expect("controller");
            let outcome = state.on_stop_line_crossed(plan, &c.ambulance);
            let id = c.stop_line.controller.clone();
            self.record_crossing_outcome(&id, outcome, &mut batch);
        }

        for d in self.find_detections() {
            self.detect(d, t1, &mut batch);
        }

        self.time_s = t1;
        self.step_index += 1;
        self.emit(batch)
    }

    fn record_crossing_outcome(
        &mut self,
        controller: &ControllerId,
        outcome: crate::signal::CrossingOutcome,
        batch: &mut Vec<(f64, EventKind)>,
    ) {
        for c in &outcome.changes {
            batch.push((c.at_s, phase_event(controller, c)));
        }
        if let Some((req, grant)) = outcome.promoted {
            self.count_grant(controller, &grant);
            let at = self.controllers[controller].clock_s;
            batch.push((
                at,
                EventKind::PriorityPromoted {
                    ambulance: req.vehicle,
                    controller: controller.clone(),
                    approach: req.approach,
                    grant,
                },
            ));
        }
    }

    fn count_grant(&mut self, controller: &ControllerId, grant: &PriorityGrant) {
        let m = self
            .controller_metrics
            .get_mut(controller)
            .expect("metrics");
        match grant {
            PriorityGrant::NoChange { .. } => m.no_change += 1,
            PriorityGrant::Extended { .. } => m.extensions += 1,
            PriorityGrant::Preempt { .. } => m.preemptions += 1,
            PriorityGrant::AlreadyActive => {}
        }
    }

    /// Runs one unit through `[t0, t1]`, chaining arrivals, service and
    /// the trip to hospital when they fall inside the interval.
    fn advance_unit(
        &mut self,
        unit: &AmbulanceId,
        t0: f64,
        t1: f64,
        timeline: &Timeline,
        crossings: &mut Vec<Crossing>,
        batch: &mut Vec<(f64, EventKind)>,
    ) {
        let cruise = self.fleet[unit].speed_mps;
        loop {
            let activity = self.activity.get_mut(unit).expect("unit");
            match activity {
                Activity::Idle => return,
                Activity::OnScene { incident, until_s } => {
                    if *until_s >= t1 {
                        return;
                    }
                    let at = until_s.max(t0);
                    let incident = incident.clone();
                    let assignment = self.assignments[&incident].clone();
                    let idx = self.incident_index(&incident);
                    let amb = self.fleet.get_mut(unit).expect("unit");
                    dispatch::advance(
                        &assignment,
                        amb,
                        &mut self.incidents[idx],
                        LifecycleEvent::DepartedScene,
                    )
                    .expect("on-scene unit departs");
                    batch.push((
                        at,
                        EventKind::SceneDeparture {
                            incident: incident.clone(),
                            ambulance: unit.clone(),
                            hospital: assignment.hospital.clone(),
                        },
                    ));
                    let trip =
                        self.new_trip(incident, Leg::ToHospital, assignment.route_to_hospital, at);
                    self.activity
                        .insert(unit.clone(), Activity::Driving(Box::new(trip)));
                }
                Activity::Driving(trip) => {
                    let metrics = self.unit_metrics.get_mut(unit).expect("metrics");
                    let end = drive(
                        &self.net,
                        &self.plans,
                        timeline,
                        trip,
                        cruise,
                        t0,
                        t1,
                        unit,
                        metrics,
                        crossings,
                        batch,
                    );
                    let DriveEnd::Arrived(at) = end else {
                        return;
                    };
                    let (incident, leg) = (trip.incident.clone(), trip.leg);
                    self.arrive(unit, incident, leg, at, batch);
                }
            }
        }
    }

    fn incident_index(&self, id: &IncidentId) -> usize {
        self.incidents
            .iter()
            .position(|i| &i.id == id)
            .expect("known incident")
    }

    fn arrive(
        &mut self,
        unit: &AmbulanceId,
        incident: IncidentId,
        leg: Leg,
        at: f64,
        batch: &mut Vec<(f64, EventKind)>,
    ) {
        let assignment = self.assignments[&incident].clone();
        let idx = self.incident_index(&incident);
        let amb = self.fleet.get_mut(unit).expect("unit");
        match leg {
            Leg::ToScene => {
                dispatch::advance(
                    &assignment,
                    amb,
                    &mut self.incidents[idx],
                    LifecycleEvent::ArrivedAtScene,
                )
                .expect("en-route unit arrives");
                let response = at - self.incidents[idx].created_at_s;
                let m = self.incident_metrics.get_mut(&incident).expect("metrics");
                m.scene_arrival_s = Some(at);
                m.response_time_s = Some(response);
                batch.push((
                    at,
                    EventKind::SceneArrival {
                        incident: incident.clone(),
                        ambulance: unit.clone(),
                        response_time_s: response,
                    },
                ));
                self.activity.insert(
                    unit.clone(),
                    Activity::OnScene {
                        incident,
                        until_s: at + self.config.service_time_s,
                    },
                );
            }
            Leg::ToHospital => {
                let inc = &mut self.incidents[idx];
                dispatch::advance(&assignment, amb, inc, LifecycleEvent::ArrivedAtHospital)
                    .expect("transporting unit arrives");
                dispatch::advance(&assignment, amb, inc, LifecycleEvent::ReturnedFree)
                    .expect("unit at hospital frees");
                let m = self.incident_metrics.get_mut(&incident).expect("metrics");
                m.hospital_arrival_s = Some(at);
                m.status = IncidentStatus::Served;
                batch.push((
                    at,
                    EventKind::HospitalArrival {
                        incident,
                        ambulance: unit.clone(),
                        hospital: assignment.hospital.clone(),
                    },
                ));
                batch.push((
                    at,
                    EventKind::UnitFree {
                        ambulance: unit.clone(),
                        node: amb.node.clone(),
                    },
                ));
                self.activity.insert(unit.clone(), Activity::Idle);
            }
        }
    }

    fn find_detections(&self) -> Vec<PendingDetection> {
        let mut out = Vec::new();
        for (unit, activity) in &self.activity {
            let Activity::Driving(trip) = activity else {
                continue;
            };
            let n = trip.kin.route.edges.len();
            let offset = trip.kin.route_offset_m;
            if n == 0 {
                continue;
            }
            // the last edge ends at the destination, not at a crossing
            for j in trip.edge_idx..n - 1 {
                let distance = trip.cum_end_m[j] - offset;
                if distance > self.config.detection_distance_m {
                    break;
                }
                if trip.detected.contains(&j) {
                    continue;
                }
                let edge = self.net.edge(&trip.kin.route.edges[j]).expect("route edge");
                let Some(sl) = &edge.stop_line else {
                    continue;
                };
                let current = self
                    .net
                    .edge(&trip.kin.route.edges[trip.edge_idx])
                    .expect("route edge");
                let view = VehicleKinematics {
                    speed_mps: self.fleet[unit]
                        .speed_mps
                        .min(current.effective_speed_mps()),
                    ..trip.kin.clone()
                };
                let t_d = predict_t_d(&view, distance.max(0.0)).expect("cruise speed is positive");
                out.push(PendingDetection {
                    ambulance: unit.clone(),
                    stop_line: sl.clone(),
                    edge: edge.id.clone(),
                    distance_m: distance.max(0.0),
                    // a vehicle already at the line still needs a positive request
                    t_d_s: t_d.max(1e-6),
                });
            }
        }
        out
    }

    fn detect(&mut self, d: PendingDetection, t: f64, batch: &mut Vec<(f64, EventKind)>) {
        if let Some(Activity::Driving(trip)) = self.activity.get_mut(&d.ambulance) {
            let j = trip
                .kin
                .route
                .edges
                .iter()
                .enumerate()
                .skip(trip.edge_idx)
                .find(|(_, e)| **e == d.edge)
                .map(|(j, _)| j)
                .expect("detected edge on route");
            trip.detected.insert(j);
        }
        let controller = d.stop_line.controller.clone();
        self.controller_metrics
            .get_mut(&controller)
            .expect("metrics")
            .detections += 1;
        let recognition = self
            .recognized
            .get(&d.ambulance)
            .map(RecognitionSummary::from);
        let outcome = if !self.config.priority_enabled {
            DetectionOutcome::Disabled
        } else if recognition.as_ref().is_some_and(|r| !r.is_ambulance) {
            DetectionOutcome::NotRecognized
        } else {
            let plan = &self.plans[&controller];
            let state = self.controllers.get_mut(&controller).expect("controller");
            let req = PriorityRequest {
                vehicle: d.ambulance.clone(),
                approach: d.stop_line.approach.clone(),
                t_d_s: d.t_d_s,
                issued_at_s: t,
            };
            match state.on_detection(plan, req) {
                Ok((grant, changes)) => {
                    for c in &changes {
                        batch.push((c.at_s, phase_event(&controller, c)));
                    }
                    self.count_grant(&controller, &grant);
                    DetectionOutcome::Granted { grant }
                }
                Err(SignalError::PriorityConflict { holder, position }) => {
                    self.controller_metrics
                        .get_mut(&controller)
                        .expect("metrics")
                        .queued += 1;
                    DetectionOutcome::Queued { holder, position }
                }
                Err(e) => DetectionOutcome::Rejected {
                    reason: e.to_string(),
                },
            }
        };
        batch.push((
            t,
            EventKind::Detection {
                ambulance: d.ambulance,
                controller,
                approach: d.stop_line.approach,
                edge: d.edge,
                distance_m: d.distance_m,
                t_d_s: d.t_d_s,
                recognition,
                outcome,
            },
        ));
    }

    pub fn metrics(&self) -> MetricsReport {
        let controllers: Vec<ControllerMetrics> =
            self.controller_metrics.values().cloned().collect();
        MetricsReport {
            scenario: self.name.clone(),
            priority_enabled: self.config.priority_enabled,
            end_time_s: self.time_s,
            steps: self.step_index,
            incidents: self.incident_metrics.values().cloned().collect(),
            ambulances: self.unit_metrics.values().cloned().collect(),
            crossings: self.crossings_sorted(),
            extensions: controllers.iter().map(|c| c.extensions).sum(),
            preemptions: controllers.iter().map(|c| c.preemptions).sum(),
            controllers,
        }
    }

    fn crossings_sorted(&self) -> Vec<CrossingMetrics> {
        self.events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::StopLineCross {
                    ambulance,
                    controller,
                    approach,
                    delay_s,
                    ..
                } => Some(CrossingMetrics {
                    ambulance: ambulance.clone(),
                    controller: controller.clone(),
                    approach: approach.clone(),
                    crossed_at_s: e.t_s,
                    delay_s: *delay_s,
                }),
                _ => None,
            })
            .collect()
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        let ambulances = self
            .fleet
            .values()
            .map(|a| {
                let (incident, leg, position, route, stopped) = match &self.activity[&a.id] {
                    Activity::Driving(trip) => (
                        Some(trip.incident.clone()),
                        Some(trip.leg),
                        self.position_of(trip),
                        trip.kin.route.edges.clone(),
                        trip.kin.stopped,
                    ),
                    Activity::OnScene { incident, .. } => {
                        (Some(incident.clone()), None, None, Vec::new(), false)
                    }
                    Activity::Idle => (None, None, None, Vec::new(), false),
                };
                AmbulanceView {
                    id: a.id.clone(),
                    status: a.status,
                    node: a.node.clone(),
                    speed_mps: a.speed_mps,
                    incident,
                    leg,
                    position,
                    route,
                    stopped,
                }
            })
            .collect();
        let incidents = self
            .incidents
            .iter()
            .map(|i| {
                let a = self.assignments.get(&i.id);
                IncidentView {
                    id: i.id.clone(),
                    node: i.location.clone(),
                    created_at_s: i.created_at_s,
                    status: i.status,
                    ambulance: a.map(|a| a.ambulance.clone()),
                    recommended: a.map(|a| a.recommended.clone()),
                    manual_override: a.is_some_and(|a| a.manual_override),
                }
            })
            .collect();
        let controllers = self
            .controllers
            .iter()
            .map(|(id, s)| {
                let plan = &self.plans[id];
                ControllerView {
                    id: id.clone(),
                    mode: s.mode,
                    phase: plan.phases[s.current_phase].id.clone(),
                    phase_elapsed_s: s.phase_elapsed_s,
                    remaining_green_s: s.remaining_green(plan),
                    granted_extension_s: s.granted_extension_s,
                    signals: s.signals(plan),
                    active_priority: s.active_priority.as_ref().map(|r| r.vehicle.clone()),
                    queue: s.queue.iter().map(|r| r.vehicle.clone()).collect(),
                }
            })
            .collect();
        let edges = self
            .net
            .edges()
            .iter()
            .map(|e| EdgeDoc {
                id: e.id.clone(),
                from: e.from.clone(),
                to: e.to.clone(),
                length_m: e.length_m,
                free_speed_mps: e.free_speed_mps,
                congestion_factor: e.congestion_factor,
                controller: e.stop_line.as_ref().map(|s| s.controller.clone()),
                approach: e.stop_line.as_ref().map(|s| s.approach.clone()),
            })
            .collect();
        WorldSnapshot {
            scenario: self.name.clone(),
            time_s: self.time_s,
            step: self.step_index,
            last_seq: self.next_seq.checked_sub(1),
            priority_enabled: self.config.priority_enabled,
            ambulances,
            incidents,
            hospitals: self.hospitals.clone(),
            controllers,
            network: NetworkView {
                nodes: self.net.nodes().to_vec(),
                edges,
            },
        }
    }

    fn position_of(&self, trip: &Trip) -> Option<UnitPosition> {
        let n = trip.kin.route.edges.len();
        if n == 0 {
            return None;
        }
        let i = trip.edge_idx.min(n - 1);
        let edge = self.net.edge(&trip.kin.route.edges[i]).ok()?;
        let start = if i == 0 { 0.0 } else { trip.cum_end_m[i - 1] };
        let offset_m = (trip.kin.route_offset_m - start).clamp(0.0, edge.length_m);
        let (a, b) = (
            self.net.node(&edge.from).ok()?,
            self.net.node(&edge.to).ok()?,
        );
        let f = offset_m / edge.length_m;
        Some(UnitPosition {
            edge: edge.id.clone(),
            offset_m,
            x: a.x + (b.x - a.x) * f,
            y: a.y + (b.y - a.y) * f,
        })
    }

    /// The unit's position as a point on the network.
    pub fn map_position(&self, id: &str) -> Option<MapPosition> {
        match self.activity.get(&AmbulanceId::new(id))? {
            Activity::Driving(trip) => self.position_of(trip).map(|p| MapPosition {
                edge: p.edge,
                offset_m: p.offset_m,
            }),
            _ => None,
        }
    }
}

fn phase_event(controller: &ControllerId, c: &PhaseChange) -> EventKind {
    EventKind::PhaseChange {
        controller: controller.clone(),
        phase: c.phase.clone(),
        change: c.kind.clone(),
    }
}

/// Moves a vehicle along its trip through `[t0, t1]`.
#[allow(clippy::too_many_arguments)]
fn drive(
    net: &RoadNetwork,
    plans: &BTreeMap<ControllerId, PhasePlan>,
    timeline: &Timeline,
    trip: &mut Trip,
    cruise_mps: f64,
    t0: f64,
    t1: f64,
    unit: &AmbulanceId,
    metrics: &mut AmbulanceMetrics,
    crossings: &mut Vec<Crossing>,
    batch: &mut Vec<(f64, EventKind)>,
) -> DriveEnd {
    let mut time = t0.max(trip.ready_at_s);
    let n = trip.kin.route.edges.len();
    if n == 0 {
        return DriveEnd::Arrived(time);
    }
    if time >= t1 {
        return DriveEnd::Running;
    }
    loop {
        let i = trip.edge_idx;
        let edge = net.edge(&trip.kin.route.edges[i]).expect("route edge");
        if trip.at_line {
            let sl = edge.stop_line.as_ref().expect("waiting at a stop line");
            match timeline.green_from(plans, sl, time) {
                None => {
                    if !trip.kin.stopped {
                        metrics.stops += 1;
                    }
                    trip.kin.stopped = true;
                    trip.kin.speed_mps = 0.0;
                    trip.line_delay_s += t1 - time;
                    metrics.intersection_delay_s += t1 - time;
                    return DriveEnd::Running;
                }
                Some(g) => {
                    trip.line_delay_s += g - time;
                    metrics.intersection_delay_s += g - time;
                    time = g;
                    batch.push((
                        g,
                        EventKind::StopLineCross {
                            ambulance: unit.clone(),
                            controller: sl.controller.clone(),
                            approach: sl.approach.clone(),
                            edge: edge.id.clone(),
                            delay_s: trip.line_delay_s,
                        },
                    ));
                    crossings.push(Crossing {
                        ambulance: unit.clone(),
                        stop_line: sl.clone(),
                    });
                    metrics.stop_lines_crossed += 1;
                    trip.line_delay_s = 0.0;
                    trip.at_line = false;
                    trip.kin.stopped = false;
                    trip.edge_idx += 1;
                    continue;
                }
            }
        }
        let speed = cruise_mps.min(edge.effective_speed_mps());
        trip.kin.speed_mps = speed;
        let end = trip.cum_end_m[i];
        let need = (end - trip.kin.route_offset_m) / speed;
        if time + need > t1 {
            let moved = speed * (t1 - time);
            trip.kin.route_offset_m = (trip.kin.route_offset_m + moved).min(end);
            metrics.distance_m += moved;
            return DriveEnd::Running;
        }
        metrics.distance_m += end - trip.kin.route_offset_m;
        time += need;
        trip.kin.route_offset_m = end;
        if i + 1 == n {
            trip.kin.speed_mps = 0.0;
            return DriveEnd::Arrived(time);
        }
        if edge.stop_line.is_some() {
            trip.at_line = true;
        } else {
            trip.edge_idx += 1;
        }
    }
}

/// Result of a headless run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub events: Vec<SimEvent>,
}

/// Runs until the configured duration or until nothing is left to do.
pub fn run(
    scenario: &Scenario,
    config: &SimConfig,
    camera: Option<&Camera>,
) -> Result<RunOutput, SimError> {
    let mut world = World::new(scenario, config.clone(), camera)?;
    while !world.is_finished() {
        world.step();
    }
    Ok(RunOutput {
        report: world.metrics(),
        events: world.events,
    })
}
