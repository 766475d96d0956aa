//! Scenario documents: network, signal plans, fleet, hospitals, scripted
//! incidents and simulation settings, as JSON.
//!
//! Loading parses and then checks every cross-reference, reporting all
//! problems at once with the JSON path of the offending field.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{Ambulance, Hospital};
use crate::ids::{AmbulanceId, ControllerId, EdgeId, HospitalId, IncidentId, NodeId, PhaseId};
use crate::network::{Edge, Node, RoadNetwork, StopLine};
use crate::recognition::{self, GrayImage, Pattern};
use crate::signal::{ControllerState, PhasePlan};
use crate::sim::{
    SimConfig, DEFAULT_DETECTION_DISTANCE_M, DEFAULT_DT_S, DEFAULT_DURATION_S,
    DEFAULT_SERVICE_TIME_S,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario:\n{}", list(.0))]
    Invalid(Vec<Issue>),
}

fn list(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ScenarioError {
    pub fn issues(&self) -> &[Issue] {
        match self {
            ScenarioError::Invalid(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub free_speed_mps: f64,
    #[serde(default = "one")]
    pub congestion_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approach: Option<crate::ids::ApproachId>,
}

fn one() -> f64 {
    1.0
}

impl EdgeDoc {
    pub fn to_edge(&self) -> Edge {
        let stop_line = match (&self.controller, &self.approach) {
            (Some(c), Some(a)) => Some(StopLine {
                controller: c.clone(),
                approach: a.clone(),
            }),
            _ => None,
        };
        Edge {
            id: self.id.clone(),
            from: self.from.clone(),
            to: self.to.clone(),
            length_m: self.length_m,
            free_speed_mps: self.free_speed_mps,
            congestion_factor: self.congestion_factor,
            stop_line,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkDoc {
    #[serde(default)]
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub edges: Vec<EdgeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerDoc {
    #[serde(flatten)]
    pub plan: PhasePlan,
    /// Phase that is green at t = 0; the first phase when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_phase: Option<PhaseId>,
    /// Green already shown by the initial phase at t = 0.
    #[serde(default)]
    pub initial_elapsed_s: f64,
}

impl ControllerDoc {
    pub fn initial_state(&self) -> ControllerState {
        let phase = self
            .initial_phase
            .as_ref()
            .and_then(|id| self.plan.phases.iter().position(|p| &p.id == id))
            .unwrap_or(0);
        ControllerState::starting_at(&self.plan, phase, self.initial_elapsed_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitDoc {
    pub id: AmbulanceId,
    pub node: NodeId,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedIncident {
    pub id: IncidentId,
    pub node: NodeId,
    pub t_s: f64,
}

/// Camera check applied to detections. File paths are relative to the
/// scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionDoc {
    pub pattern: String,
    #[serde(default = "default_threshold")]
    pub sobel_threshold: u32,
    #[serde(default = "default_tau")]
    pub tau_per_point: f64,
    /// PGM frame showing each unit as the roadside camera sees it.
    #[serde(default)]
    pub frames: BTreeMap<AmbulanceId, String>,
}

fn default_threshold() -> u32 {
    recognition::DEFAULT_SOBEL_THRESHOLD
}

fn default_tau() -> f64 {
    recognition::DEFAULT_TAU_PER_POINT
}

/// Optional overrides of [`SimConfig`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority_enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_distance_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub network: NetworkDoc,
    #[serde(default)]
    pub controllers: Vec<ControllerDoc>,
    #[serde(default)]
    pub fleet: Vec<UnitDoc>,
    #[serde(default)]
    pub hospitals: Vec<Hospital>,
    #[serde(default)]
    pub incidents: Vec<ScriptedIncident>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recognition: Option<RecognitionDoc>,
    #[serde(default)]
    pub config: ConfigDoc,
}

/// Pattern and frames resolved from a [`RecognitionDoc`].
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub pattern: Pattern,
    pub sobel_threshold: u32,
    pub tau_per_point: f64,
    pub frames: BTreeMap<AmbulanceId, GrayImage>,
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let issues = s.validate();
        if issues.is_empty() {
            Ok(s)
        } else {
            Err(ScenarioError::Invalid(issues))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn network(&self) -> RoadNetwork {
        let edges = self.network.edges.iter().map(EdgeDoc::to_edge).collect();
        RoadNetwork::new(self.network.nodes.clone(), edges)
            .expect("validated scenario builds a network")
    }

    pub fn fleet(&self) -> Vec<Ambulance> {
        self.fleet
            .iter()
            .map(|u| Ambulance::free(u.id.as_str(), u.node.as_str(), u.speed_mps))
            .collect()
    }

    pub fn sim_config(&self) -> SimConfig {
        let c = &self.config;
        SimConfig {
            dt_s: c.dt_s.unwrap_or(DEFAULT_DT_S),
            duration_s: c.duration_s.unwrap_or(DEFAULT_DURATION_S),
            priority_enabled: c.priority_enabled.unwrap_or(true),
            detection_distance_m: c
                .detection_distance_m
                .unwrap_or(DEFAULT_DETECTION_DISTANCE_M),
            service_time_s: c.service_time_s.unwrap_or(DEFAULT_SERVICE_TIME_S),
        }
    }

    /// Loads the pattern and frames named by the `recognition` section.
    pub fn camera(&self, base_dir: &Path) -> Result<Option<Camera>, ScenarioError> {
        let Some(doc) = &self.recognition else {
            return Ok(None);
        };
        let pattern_path = base_dir.join(&doc.pattern);
        let text = read_text(&pattern_path)?;
        let pattern: Pattern = serde_json::from_str(&text)
            .map_err(|e| ScenarioError::Parse(format!("{}: {e}", pattern_path.display())))?;
        let mut frames = BTreeMap::new();
        for (unit, file) in &doc.frames {
            let path = base_dir.join(file);
            let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
            let img = recognition::read_pgm(&bytes)
                .map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?;
            frames.insert(unit.clone(), img);
        }
        Ok(Some(Camera {
            pattern,
            sobel_threshold: doc.sobel_threshold,
            tau_per_point: doc.tau_per_point,
            frames,
        }))
    }

    /// Every broken reference or out-of-range value, with its JSON path.
    pub fn validate(&self) -> Vec<Issue> {
        let mut v = Validator::default();
        if self.schema_version != SCHEMA_VERSION {
            v.push(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            );
        }

        let mut nodes = BTreeSet::new();
        for (i, n) in self.network.nodes.iter().enumerate() {
            let path = format!("network.nodes[{i}]");
            if !nodes.insert(&n.id) {
                v.push(
                    format!("{path}.id"),
                    format!("duplicate node id `{}`", n.id),
                );
            }
            if !(n.x.is_finite() && n.y.is_finite()) {
                v.push(path, "coordinates must be finite");
            }
        }

        let mut plans: BTreeMap<&ControllerId, &PhasePlan> = BTreeMap::new();
        for (i, c) in self.controllers.iter().enumerate() {
            let path = format!("controllers[{i}]");
            if plans.insert(&c.plan.controller_id, &c.plan).is_some() {
                v.push(
                    format!("{path}.controller_id"),
                    format!("duplicate controller `{}`", c.plan.controller_id),
                );
            }
            if let Err(e) = c.plan.validate() {
                v.push(path.clone(), e.to_string());
            }
            if let Some(p) = &c.initial_phase {
                if !c.plan.phases.iter().any(|ph| &ph.id == p) {
                    v.push(format!("{path}.initial_phase"), format!("no phase `{p}`"));
                }
            }
            if !(c.initial_elapsed_s.is_finite() && c.initial_elapsed_s >= 0.0) {
                v.push(format!("{path}.initial_elapsed_s"), "must be >= 0");
            }
        }

        let mut edges = BTreeSet::new();
        for (i, e) in self.network.edges.iter().enumerate() {
            let path = format!("network.edges[{i}]");
            if !edges.insert(&e.id) {
                v.push(
                    format!("{path}.id"),
                    format!("duplicate edge id `{}`", e.id),
                );
            }
            for (field, node) in [("from", &e.from), ("to", &e.to)] {
                if !nodes.contains(node) {
                    v.push(
                        format!("{path}.{field}"),
                        format!("edge `{}` references unknown node `{node}`", e.id),
                    );
                }
            }
            if !(e.length_m.is_finite() && e.length_m > 0.0) {
                v.push(format!("{path}.length_m"), "must be > 0");
            }
            if !(e.free_speed_mps.is_finite() && e.free_speed_mps > 0.0) {
                v.push(format!("{path}.free_speed_mps"), "must be > 0");
            }
            if !(e.congestion_factor.is_finite() && e.congestion_factor >= 1.0) {
                v.push(format!("{path}.congestion_factor"), "must be >= 1");
            }
            match (&e.controller, &e.approach) {
                (None, None) => {}
                (Some(c), Some(a)) => match plans.get(c) {
                    None => v.push(
                        format!("{path}.controller"),
                        format!("unknown controller `{c}`"),
                    ),
                    Some(plan) if plan.phase_of(a).is_none() => v.push(
                        format!("{path}.approach"),
                        format!("controller `{c}` has no approach `{a}`"),
                    ),
                    Some(_) => {}
                },
                _ => v.push(path, "controller and approach must be given together"),
            }
        }

        let mut units = BTreeSet::new();
        for (i, u) in self.fleet.iter().enumerate() {
            let path = format!("fleet[{i}]");
            if !units.insert(&u.id) {
                v.push(format!("{path}.id"), format!("duplicate unit `{}`", u.id));
            }
            if !nodes.contains(&u.node) {
                v.push(format!("{path}.node"), format!("unknown node `{}`", u.node));
            }
            if !(u.speed_mps.is_finite() && u.speed_mps > 0.0) {
                v.push(format!("{path}.speed_mps"), "must be > 0");
            }
        }

        let mut hospitals: BTreeSet<&HospitalId> = BTreeSet::new();
        for (i, h) in self.hospitals.iter().enumerate() {
            let path = format!("hospitals[{i}]");
            if !hospitals.insert(&h.id) {
                v.push(
                    format!("{path}.id"),
                    format!("duplicate hospital `{}`", h.id),
                );
            }
            if !nodes.contains(&h.location) {
                v.push(
                    format!("{path}.location"),
                    format!("unknown node `{}`", h.location),
                );
            }
        }

        let mut incidents = BTreeSet::new();
        let mut last_t = f64::NEG_INFINITY;
        for (i, inc) in self.incidents.iter().enumerate() {
            let path = format!("incidents[{i}]");
            if !incidents.insert(&inc.id) {
                v.push(
                    format!("{path}.id"),
                    format!("duplicate incident `{}`", inc.id),
                );
            }
            if !nodes.contains(&inc.node) {
                v.push(
                    format!("{path}.node"),
                    format!("unknown node `{}`", inc.node),
                );
            }
            if !inc.t_s.is_finite() || inc.t_s < 0.0 {
                v.push(format!("{path}.t_s"), "incident scheduled before t = 0");
            } else if inc.t_s < last_t {
                v.push(
                    format!("{path}.t_s"),
                    "scripted times must be non-decreasing",
                );
            }
            last_t = last_t.max(inc.t_s);
        }

        if let Some(r) = &self.recognition {
            for unit in r.frames.keys() {
                if !units.contains(unit) {
                    v.push(
                        format!("recognition.frames.{unit}"),
                        format!("unknown unit `{unit}`"),
                    );
                }
            }
            if !(r.tau_per_point.is_finite() && r.tau_per_point >= 0.0) {
                v.push("recognition.tau_per_point", "must be >= 0");
            }
        }

        let c = &self.config;
        let positive = [
            ("config.dt_s", c.dt_s),
            ("config.detection_distance_m", c.detection_distance_m),
        ];
        for (path, value) in positive {
            if value.is_some_and(|x| !(x.is_finite() && x > 0.0)) {
                v.push(path, "must be > 0");
            }
        }
        let non_negative = [
            ("config.duration_s", c.duration_s),
            ("config.service_time_s", c.service_time_s),
        ];
        for (path, value) in non_negative {
            if value.is_some_and(|x| !(x.is_finite() && x >= 0.0)) {
                v.push(path, "must be >= 0");
            }
        }
        v.issues
    }
}

#[derive(Default)]
struct Validator {
    issues: Vec<Issue>,
}

impl Validator {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ScenarioError {
    ScenarioError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// A scenario read from disk, with its directory for resolving fixtures.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub base_dir: PathBuf,
}

impl LoadedScenario {
    pub fn camera(&self) -> Result<Option<Camera>, ScenarioError> {
        self.scenario.camera(&self.base_dir)
    }
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let scenario = Scenario::from_json(&read_text(path)?)?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(LoadedScenario { scenario, base_dir })
}
