//! Fixed-time signal controller with ambulance priority.
//!
//! A controller cycles its phases in list order (nominal green, then an
//! all-red intergreen). A detected ambulance either leaves the timing
//! alone (it will reach the stop line within the remaining green), gets the
//! current green extended past its nominal end, or preempts the conflicting
//! phase, which is cut back to its minimum green before the ambulance's
//! phase is started.
//!
//! An active priority is only ever cleared by the holder crossing the stop
//! line. Requests from other ambulances wait in a FIFO queue.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AmbulanceId, ApproachId, ControllerId, PhaseId};

pub const DEFAULT_CLEARANCE_MARGIN_S: f64 = 1.0;
pub const DEFAULT_MAX_EXTENSION_S: f64 = 300.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("controller `{controller}` has no approach `{approach}`")]
    UnknownApproach {
        controller: ControllerId,
        approach: ApproachId,
    },
    #[error("priority held by `{holder}`; request queued at position {position}")]
    PriorityConflict {
        holder: AmbulanceId,
        position: usize,
    },
    #[error("predicted time to stop line must be positive, got {0}")]
    InvalidRequest(f64),
    #[error("controller `{controller}`: {reason}")]
    InvalidPlan {
        controller: ControllerId,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signal {
    Green,
    Red,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub id: PhaseId,
    pub approaches: Vec<ApproachId>,
    pub green_min_s: f64,
    pub green_nominal_s: f64,
    pub green_max_s: f64,
}

fn default_margin() -> f64 {
    DEFAULT_CLEARANCE_MARGIN_S
}

fn default_max_extension() -> f64 {
    DEFAULT_MAX_EXTENSION_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub controller_id: ControllerId,
    pub intergreen_s: f64,
    pub phases: Vec<Phase>,
    /// Added on top of the strict need when extending a green.
    #[serde(default = "default_margin")]
    pub clearance_margin_s: f64,
    /// Hard ceiling on the total extension granted to one request.
    #[serde(default = "default_max_extension")]
    pub max_extension_s: f64,
}

impl PhasePlan {
    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |reason: String| SignalError::InvalidPlan {
            controller: self.controller_id.clone(),
            reason,
        };
        if self.phases.len() < 2 {
            return Err(bad("at least two phases are required".into()));
        }
        if !(self.intergreen_s.is_finite() && self.intergreen_s >= 0.0) {
            return Err(bad("intergreen_s must be >= 0".into()));
        }
        if !(self.clearance_margin_s.is_finite() && self.clearance_margin_s > 0.0) {
            return Err(bad("clearance_margin_s must be > 0".into()));
        }
        if !(self.max_extension_s.is_finite() && self.max_extension_s >= 0.0) {
            return Err(bad("max_extension_s must be >= 0".into()));
        }
        let mut seen = BTreeMap::new();
        for p in &self.phases {
            let ordered = p.green_min_s > 0.0
                && p.green_min_s <= p.green_nominal_s
                && p.green_nominal_s <= p.green_max_s
                && p.green_max_s.is_finite();
            if !ordered {
                return Err(bad(format!(
                    "phase `{}` needs 0 < green_min_s <= green_nominal_s <= green_max_s",
                    p.id
                )));
            }
            for a in &p.approaches {
                if let Some(other) = seen.insert(a.clone(), p.id.clone()) {
                    return Err(bad(format!(
                        "approach `{a}` served by both `{other}` and `{}`",
                        p.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Index of the phase serving `approach`.
    pub fn phase_of(&self, approach: &ApproachId) -> Option<usize> {
        self.phases
            .iter()
            .position(|p| p.approaches.contains(approach))
    }

    pub fn approaches(&self) -> impl Iterator<Item = &ApproachId> {
        self.phases.iter().flat_map(|p| p.approaches.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerMode {
    Normal,
    Extended,
    PreemptPending,
    Intergreen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityRequest {
    pub vehicle: AmbulanceId,
    pub approach: ApproachId,
    /// Predicted time for the vehicle to reach the stop line.
    pub t_d_s: f64,
    pub issued_at_s: f64,
}

/// How a priority request was honoured at grant time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "grant", rename_all = "snake_case")]
pub enum PriorityGrant {
    /// The approach is green long enough already.
    NoChange { remaining_green_s: f64 },
    /// The current green is held `extension_s` beyond what remained.
    Extended {
        remaining_green_s: f64,
        extension_s: f64,
    },
    /// The conflicting phase ends at `truncate_at_elapsed_s`; the
    /// ambulance's phase turns green `green_in_s` from now.
    Preempt {
        truncate_at_elapsed_s: f64,
        green_in_s: f64,
    },
    /// A request from the same vehicle was already active.
    AlreadyActive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "snake_case")]
pub enum PhaseChangeKind {
    GreenEnd {
        green_s: f64,
        preempted: bool,
    },
    GreenStart,
    /// Priority hold re-extended a green that was about to end.
    Hold {
        extension_s: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseChange {
    pub at_s: f64,
    pub phase: PhaseId,
    #[serde(flatten)]
    pub kind: PhaseChangeKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickOutput {
    pub signals: BTreeMap<ApproachId, Signal>,
    pub changes: Vec<PhaseChange>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrossingOutcome {
    pub cleared: bool,
    pub changes: Vec<PhaseChange>,
    /// Queued request promoted to active, with its grant.
    pub promoted: Option<(PriorityRequest, PriorityGrant)>,
}

/// Live state of one controller.
///
/// `phase_elapsed_s` is the green time of `current_phase`, except in
/// `Intergreen` where it counts the all-red interval; `current_phase` is
/// then the phase that just ended and `next_phase` the one to start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub current_phase: usize,
    pub phase_elapsed_s: f64,
    pub mode: ControllerMode,
    pub active_priority: Option<PriorityRequest>,
    pub remaining_green_s: f64,
    pub granted_extension_s: f64,
    pub next_phase: usize,
    pub truncate_at_s: Option<f64>,
    pub extension_used_s: f64,
    pub queue: VecDeque<PriorityRequest>,
    pub clock_s: f64,
    /// Green shown by the most recently ended phase.
    pub last_green_s: f64,
}

impl ControllerState {
    pub fn new(plan: &PhasePlan) -> Self {
        Self::starting_at(plan, 0, 0.0)
    }

    /// State with `phase` already green for `elapsed_s` seconds.
    pub fn starting_at(plan: &PhasePlan, phase: usize, elapsed_s: f64) -> Self {
        let phase = phase % plan.phases.len();
        let elapsed_s = elapsed_s.clamp(0.0, plan.phases[phase].green_nominal_s);
        let mut s = Self {
            current_phase: phase,
            phase_elapsed_s: elapsed_s,
            mode: ControllerMode::Normal,
            active_priority: None,
            remaining_green_s: 0.0,
            granted_extension_s: 0.0,
            next_phase: (phase + 1) % plan.phases.len(),
            truncate_at_s: None,
            extension_used_s: 0.0,
            queue: VecDeque::new(),
            clock_s: 0.0,
            last_green_s: 0.0,
        };
        s.remaining_green_s = s.remaining_green(plan);
        s
    }

    /// Green still to run on the current phase, including any extension.
    pub fn remaining_green(&self, plan: &PhasePlan) -> f64 {
        let nominal = plan.phases[self.current_phase].green_nominal_s;
        match self.mode {
            ControllerMode::Intergreen => 0.0,
            ControllerMode::PreemptPending => {
                let until = self.truncate_at_s.unwrap_or(self.phase_elapsed_s);
                (until - self.phase_elapsed_s).max(0.0)
            }
            ControllerMode::Normal | ControllerMode::Extended => {
                (nominal - self.phase_elapsed_s).max(0.0) + self.granted_extension_s
            }
        }
    }

    pub fn is_green(&self, plan: &PhasePlan, approach: &ApproachId) -> bool {
        self.mode != ControllerMode::Intergreen
            && plan.phases[self.current_phase]
                .approaches
                .contains(approach)
    }

    pub fn signals(&self, plan: &PhasePlan) -> BTreeMap<ApproachId, Signal> {
        plan.approaches()
            .map(|a| {
                let s = if self.is_green(plan, a) {
                    Signal::Green
                } else {
                    Signal::Red
                };
                (a.clone(), s)
            })
            .collect()
    }

    /// Registers an ambulance detected upstream of `req.approach`.
    ///
    /// When another ambulance holds the priority the request is appended to
    /// the queue and `PriorityConflict` reports its position.
    pub fn on_detection(
        &mut self,
        plan: &PhasePlan,
        req: PriorityRequest,
    ) -> Result<(PriorityGrant, Vec<PhaseChange>), SignalError> {
        let phase = plan
            .phase_of(&req.approach)
            .ok_or_else(|| SignalError::UnknownApproach {
                controller: plan.controller_id.clone(),
                approach: req.approach.clone(),
            })?;
        if !(req.t_d_s.is_finite() && req.t_d_s > 0.0) {
            return Err(SignalError::InvalidRequest(req.t_d_s));
        }
        if let Some(active) = &self.active_priority {
            if active.vehicle == req.vehicle {
                return Ok((PriorityGrant::AlreadyActive, Vec::new()));
            }
            let holder = active.vehicle.clone();
            let req_vehicle = req.vehicle.clone();
            if !self.queue.iter().any(|q| q.vehicle == req.vehicle) {
                self.queue.push_back(req);
            }
            let position = self
                .queue
                .iter()
                .position(|q| q.vehicle == req_vehicle)
                .map_or(self.queue.len(), |i| i + 1);
            return Err(SignalError::PriorityConflict { holder, position });
        }
        let grant = self.grant(plan, req, phase);
        let changes = self.advance(plan, 0.0);
        Ok((grant, changes))
    }

    fn grant(&mut self, plan: &PhasePlan, req: PriorityRequest, phase: usize) -> PriorityGrant {
        let since = (self.clock_s - req.issued_at_s).max(0.0);
        let t_d = (req.t_d_s - since).max(0.0);
        self.active_priority = Some(req);
        self.extension_used_s = 0.0;

        let grant = match self.mode {
            ControllerMode::Intergreen => {
                self.next_phase = phase;
                PriorityGrant::Preempt {
                    truncate_at_elapsed_s: self.last_green_s,
                    green_in_s: (plan.intergreen_s - self.phase_elapsed_s).max(0.0),
                }
            }
            _ if self.current_phase == phase => {
                let g_k = self.remaining_green(plan);
                if t_d <= g_k {
                    PriorityGrant::NoChange {
                        remaining_green_s: g_k,
                    }
                } else {
                    let extension = (t_d - g_k + plan.clearance_margin_s).min(plan.max_extension_s);
                    self.mode = ControllerMode::Extended;
                    self.granted_extension_s += extension;
                    self.extension_used_s = extension;
                    PriorityGrant::Extended {
                        remaining_green_s: g_k,
                        extension_s: extension,
                    }
                }
            }
            _ => {
                let min = plan.phases[self.current_phase].green_min_s;
                let truncate_at = self.phase_elapsed_s.max(min);
                self.mode = ControllerMode::PreemptPending;
                self.truncate_at_s = Some(truncate_at);
                self.granted_extension_s = 0.0;
                self.next_phase = phase;
                PriorityGrant::Preempt {
                    truncate_at_elapsed_s: truncate_at,
                    green_in_s: truncate_at - self.phase_elapsed_s + plan.intergreen_s,
                }
            }
        };
        self.remaining_green_s = self.remaining_green(plan);
        grant
    }

    /// Advances the controller by `dt_s` seconds.
    ///
    /// Boundaries falling inside the interval are applied at their exact
    /// time, so the result does not depend on how time is sliced.
    pub fn tick(&mut self, plan: &PhasePlan, dt_s: f64) -> TickOutput {
        let changes = self.advance(plan, dt_s.max(0.0));
        TickOutput {
            signals: self.signals(plan),
            changes,
        }
    }

    fn advance(&mut self, plan: &PhasePlan, dt_s: f64) -> Vec<PhaseChange> {
        let mut changes = Vec::new();
        let mut left = dt_s;
        loop {
            let phase = &plan.phases[self.current_phase];
            let nominal = phase.green_nominal_s;
            match self.mode {
                ControllerMode::Normal => {
                    let to_end = (nominal - self.phase_elapsed_s).max(0.0);
                    if to_end > left {
                        self.consume(left);
                        break;
                    }
                    self.consume(to_end);
                    left -= to_end;
                    self.phase_elapsed_s = nominal;
                    self.green_end_reached(plan, &mut changes);
                }
                ControllerMode::Extended if self.phase_elapsed_s < nominal => {
                    let to_nominal = nominal - self.phase_elapsed_s;
                    if to_nominal > left {
                        self.consume(left);
                        break;
                    }
                    self.consume(to_nominal);
                    left -= to_nominal;
                    self.phase_elapsed_s = nominal;
                }
                ControllerMode::Extended => {
                    let ext = self.granted_extension_s;
                    if ext > left {
                        self.consume(left);
                        self.granted_extension_s -= left;
                        break;
                    }
                    self.consume(ext);
                    left -= ext;
                    self.granted_extension_s = 0.0;
                    self.green_end_reached(plan, &mut changes);
                }
                ControllerMode::PreemptPending => {
                    let at = self.truncate_at_s.unwrap_or(self.phase_elapsed_s);
                    let to_cut = (at - self.phase_elapsed_s).max(0.0);
                    if to_cut > left {
                        self.consume(left);
                        break;
                    }
                    self.consume(to_cut);
                    left -= to_cut;
                    self.phase_elapsed_s = at;
                    let next = self.next_phase;
                    self.start_intergreen_at(plan, next, true, &mut changes);
                }
                ControllerMode::Intergreen => {
                    let to_green = (plan.intergreen_s - self.phase_elapsed_s).max(0.0);
                    if to_green > left {
                        self.consume(left);
                        break;
                    }
                    self.consume(to_green);
                    left -= to_green;
                    self.start_green(plan, &mut changes);
                }
            }
        }
        self.remaining_green_s = self.remaining_green(plan);
        changes
    }

    fn consume(&mut self, dt: f64) {
        self.phase_elapsed_s += dt;
        self.clock_s += dt;
    }

    /// Current green has run out: hold it for an ambulance still on its
    /// way, otherwise move to the next phase.
    fn green_end_reached(&mut self, plan: &PhasePlan, changes: &mut Vec<PhaseChange>) {
        let priority_phase = self
            .active_priority
            .as_ref()
            .and_then(|r| plan.phase_of(&r.approach).map(|p| (p, r)));
        if let Some((p, req)) = priority_phase {
            if p == self.current_phase {
                let since = (self.clock_s - req.issued_at_s).max(0.0);
                let needed = (req.t_d_s - since).max(0.0) + plan.clearance_margin_s;
                let budget = (plan.max_extension_s - self.extension_used_s).max(0.0);
                let extension = needed.min(budget);
                if extension > 0.0 {
                    self.mode = ControllerMode::Extended;
                    self.granted_extension_s = extension;
                    self.extension_used_s += extension;
                    changes.push(PhaseChange {
                        at_s: self.clock_s,
                        phase: plan.phases[self.current_phase].id.clone(),
                        kind: PhaseChangeKind::Hold {
                            extension_s: extension,
                        },
                    });
                    return;
                }
            }
            let next = if p == self.current_phase {
                (self.current_phase + 1) % plan.phases.len()
            } else {
                p
            };
            self.start_intergreen_at(plan, next, false, changes);
            return;
        }
        let next = (self.current_phase + 1) % plan.phases.len();
        self.start_intergreen_at(plan, next, false, changes);
    }

    fn start_intergreen_at(
        &mut self,
        plan: &PhasePlan,
        next: usize,
        preempted: bool,
        changes: &mut Vec<PhaseChange>,
    ) {
        changes.push(PhaseChange {
            at_s: self.clock_s,
            phase: plan.phases[self.current_phase].id.clone(),
            kind: PhaseChangeKind::GreenEnd {
                green_s: self.phase_elapsed_s,
                preempted,
            },
        });
        self.last_green_s = self.phase_elapsed_s;
        self.mode = ControllerMode::Intergreen;
        self.next_phase = next;
        self.phase_elapsed_s = 0.0;
        self.granted_extension_s = 0.0;
        self.truncate_at_s = None;
    }

    fn start_green(&mut self, plan: &PhasePlan, changes: &mut Vec<PhaseChange>) {
        self.current_phase = self.next_phase;
        self.next_phase = (self.current_phase + 1) % plan.phases.len();
        self.phase_elapsed_s = 0.0;
        self.mode = ControllerMode::Normal;
        changes.push(PhaseChange {
            at_s: self.clock_s,
            phase: plan.phases[self.current_phase].id.clone(),
            kind: PhaseChangeKind::GreenStart,
        });
    }

    /// Clears the priority if `vehicle` holds it and promotes the next
    /// queued request.
    pub fn on_stop_line_crossed(
        &mut self,
        plan: &PhasePlan,
        vehicle: &AmbulanceId,
    ) -> CrossingOutcome {
        let holds = self
            .active_priority
            .as_ref()
            .is_some_and(|r| &r.vehicle == vehicle);
        if !holds {
            self.queue.retain(|r| &r.vehicle != vehicle);
            return CrossingOutcome::default();
        }
        self.active_priority = None;
        self.extension_used_s = 0.0;
        match self.mode {
            ControllerMode::Extended => {
                self.granted_extension_s = 0.0;
                let nominal = plan.phases[self.current_phase].green_nominal_s;
                if self.phase_elapsed_s < nominal {
                    self.mode = ControllerMode::Normal;
                }
            }
            ControllerMode::PreemptPending => {
                self.mode = ControllerMode::Normal;
                self.truncate_at_s = None;
                self.next_phase = (self.current_phase + 1) % plan.phases.len();
            }
            ControllerMode::Normal | ControllerMode::Intergreen => {}
        }
        let mut changes = self.advance(plan, 0.0);

        let mut promoted = None;
        if let Some(next) = self.queue.pop_front() {
            if let Some(phase) = plan.phase_of(&next.approach) {
                let grant = self.grant(plan, next.clone(), phase);
                changes.extend(self.advance(plan, 0.0));
                promoted = Some((next, grant));
            }
        }
        self.remaining_green_s = self.remaining_green(plan);
        CrossingOutcome {
            cleared: true,
            changes,
            promoted,
        }
    }
}
