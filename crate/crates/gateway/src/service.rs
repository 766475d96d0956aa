//! HTTP service around a live [`World`].
//!
//! One thread owns the world. Handlers talk to it through a command queue
//! and read what it publishes after every step or command, so a client
//! never sees a half-applied step.

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use siren_core::scenario::{load_scenario, LoadedScenario, Scenario};
use siren_core::sim::{MetricsReport, SimEvent, World, WorldSnapshot};
use siren_core::{AmbulanceId, IncidentId, NodeId};
use tokio::sync::{oneshot, watch};

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEnvelope {
    pub client_id: String,
    /// Must increase strictly for each client.
    pub seq: u64,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Command {
    InjectIncident {
        node: NodeId,
        #[serde(default)]
        id: Option<IncidentId>,
    },
    DispatchOverride {
        incident: IncidentId,
        ambulance: AmbulanceId,
    },
    Start,
    Pause,
    StepN {
        n: u64,
    },
    /// Replaces the world. Either a path on the server or an inline
    /// scenario document.
    Load {
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        document: Option<Value>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandReply {
    pub accepted: bool,
    pub client_id: String,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Events the command itself produced (stepping included).
    #[serde(default)]
    pub events: Vec<SimEvent>,
    pub time_s: f64,
}

/// Body of `GET /state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    /// Bumped whenever `load` replaces the world.
    pub epoch: u64,
    pub running: bool,
    pub finished: bool,
    #[serde(flatten)]
    pub world: WorldSnapshot,
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Simulated seconds per wall second; `None` steps as fast as possible.
    pub pace: Option<f64>,
    pub autostart: bool,
    /// Overrides the scenario's priority setting.
    pub priority: Option<bool>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            pace: Some(1.0),
            autostart: false,
            priority: None,
        }
    }
}

struct Published {
    epoch: u64,
    state: Arc<StateView>,
    metrics: Arc<MetricsReport>,
    events: Vec<Arc<SimEvent>>,
}

struct Job {
    envelope: CommandEnvelope,
    reply: oneshot::Sender<CommandReply>,
}

struct Shared {
    published: RwLock<Published>,
    version: watch::Sender<u64>,
    jobs: mpsc::Sender<Job>,
}

/// Handle to a running simulation. Cloning shares the same world.
#[derive(Clone)]
pub struct Service {
    shared: Arc<Shared>,
}

fn build_world(loaded: &LoadedScenario, priority: Option<bool>) -> Result<World, GatewayError> {
    let mut config = loaded.scenario.sim_config();
    if let Some(p) = priority {
        config.priority_enabled = p;
    }
    let camera = loaded.camera()?;
    Ok(World::new(&loaded.scenario, config, camera.as_ref())?)
}

impl Service {
    /// Builds the world and starts its simulation thread.
    pub fn start(loaded: LoadedScenario, options: ServiceOptions) -> Result<Self, GatewayError> {
        if let Some(p) = options.pace {
            if !(p.is_finite() && p > 0.0) {
                return Err(GatewayError::Invalid(format!("pace must be > 0, got {p}")));
            }
        }
        let world = build_world(&loaded, options.priority)?;
        let (jobs, rx) = mpsc::channel();
        let (version, _) = watch::channel(0);
        let sim = SimThread {
            world,
            epoch: 0,
            running: options.autostart,
            options,
            client_seq: HashMap::new(),
            published_events: 0,
        };
        let shared = Arc::new(Shared {
            published: RwLock::new(Published {
                epoch: 0,
                state: Arc::new(sim.state()),
                metrics: Arc::new(sim.world.metrics()),
                events: Vec::new(),
            }),
            version,
            jobs,
        });
        let weak = Arc::downgrade(&shared);
        thread::Builder::new()
            .name("siren-sim".into())
            .spawn(move || sim.run(rx, weak))
            .map_err(|e| GatewayError::Failed(format!("cannot start simulation thread: {e}")))?;
        Ok(Self { shared })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/state", get(get_state))
            .route("/metrics", get(get_metrics))
            .route("/commands", post(post_command))
            .route("/events", get(get_events))
            .with_state(self.shared.clone())
    }

    /// Queues a command and waits for the simulation thread's verdict.
    pub async fn submit(&self, envelope: CommandEnvelope) -> CommandReply {
        submit(&self.shared, envelope).await
    }

    pub fn state(&self) -> Arc<StateView> {
        self.shared.published.read().expect("lock").state.clone()
    }
}

async fn submit(shared: &Shared, envelope: CommandEnvelope) -> CommandReply {
    let (reply, rx) = oneshot::channel();
    let fallback = CommandReply {
        accepted: false,
        client_id: envelope.client_id.clone(),
        seq: envelope.seq,
        reason: Some("simulation thread stopped".into()),
        events: Vec::new(),
        time_s: 0.0,
    };
    if shared.jobs.send(Job { envelope, reply }).is_err() {
        return fallback;
    }
    rx.await.unwrap_or(fallback)
}

struct SimThread {
    world: World,
    epoch: u64,
    running: bool,
    options: ServiceOptions,
    client_seq: HashMap<String, u64>,
    published_events: usize,
}

impl SimThread {
    fn state(&self) -> StateView {
        StateView {
            epoch: self.epoch,
            running: self.running,
            finished: self.world.is_finished(),
            world: self.world.snapshot(),
        }
    }

    fn interval(&self) -> Duration {
        match self.options.pace {
            Some(pace) => Duration::from_secs_f64(self.world.config().dt_s / pace),
            None => Duration::ZERO,
        }
    }

    fn run(mut self, rx: mpsc::Receiver<Job>, shared: std::sync::Weak<Shared>) {
        let mut next_step = Instant::now();
        loop {
            let stepping = self.running && !self.world.is_finished();
            let job = if stepping {
                match rx.recv_timeout(next_step.saturating_duration_since(Instant::now())) {
                    Ok(job) => Some(job),
                    Err(RecvTimeoutError::Timeout) => None,
                    Err(RecvTimeoutError::Disconnected) => return,
                }
            } else {
                match rx.recv() {
                    Ok(job) => Some(job),
                    Err(_) => return,
                }
            };
            let Some(shared) = shared.upgrade() else {
                return;
            };
            match job {
                Some(Job { envelope, reply }) => {
                    let was_running = self.running;
                    let out = self.apply(envelope);
                    if self.running && !was_running {
                        next_step = Instant::now() + self.interval();
                    }
                    self.publish(&shared);
                    let _ = reply.send(out);
                }
                None => {
                    self.world.step();
                    self.publish(&shared);
                    next_step += self.interval();
                    // After a long stall, do not try to catch up in a burst.
                    let now = Instant::now();
                    if next_step < now {
                        next_step = now;
                    }
                }
            }
        }
    }

    fn apply(&mut self, env: CommandEnvelope) -> CommandReply {
        let mut reply = CommandReply {
            accepted: false,
            client_id: env.client_id.clone(),
            seq: env.seq,
            reason: None,
            events: Vec::new(),
            time_s: self.world.time_s(),
        };
        if let Some(&last) = self.client_seq.get(&env.client_id) {
            if env.seq <= last {
                reply.reason = Some(format!(
                    "sequence number {} is not above {last} for client `{}`",
                    env.seq, env.client_id
                ));
                return reply;
            }
        }
        self.client_seq.insert(env.client_id.clone(), env.seq);

        let result: Result<Vec<SimEvent>, String> = match env.command {
            Command::InjectIncident { node, id } => self
                .world
                .inject_incident(id, node)
                .map_err(|e| e.to_string()),
            Command::DispatchOverride {
                incident,
                ambulance,
            } => self
                .world
                .dispatch_override(&incident, &ambulance)
                .map_err(|e| e.to_string()),
            Command::Start => {
                self.running = true;
                Ok(Vec::new())
            }
            Command::Pause => {
                self.running = false;
                Ok(Vec::new())
            }
            Command::StepN { n } => {
                let mut out = Vec::new();
                for _ in 0..n {
                    if self.world.is_finished() {
                        break;
                    }
                    out.extend(self.world.step());
                }
                Ok(out)
            }
            Command::Load { path, document } => self.load(path, document).map(|()| Vec::new()),
        };
        match result {
            Ok(events) => {
                reply.accepted = true;
                reply.events = events;
            }
            Err(reason) => reply.reason = Some(reason),
        }
        reply.time_s = self.world.time_s();
        reply
    }

    fn load(&mut self, path: Option<PathBuf>, document: Option<Value>) -> Result<(), String> {
        let loaded = match (path, document) {
            (Some(path), None) => load_scenario(&path).map_err(|e| e.to_string())?,
            (None, Some(doc)) => LoadedScenario {
                scenario: Scenario::from_json(&doc.to_string()).map_err(|e| e.to_string())?,
                base_dir: PathBuf::from("."),
            },
            _ => return Err("load needs exactly one of `path` or `document`".into()),
        };
        self.world = build_world(&loaded, self.options.priority).map_err(|e| e.to_string())?;
        self.epoch += 1;
        self.running = false;
        self.published_events = 0;
        Ok(())
    }

    fn publish(&mut self, shared: &Shared) {
        let state = Arc::new(self.state());
        let metrics = Arc::new(self.world.metrics());
        {
            let mut p = shared.published.write().expect("lock");
            if p.epoch != self.epoch {
                p.epoch = self.epoch;
                p.events.clear();
            }
            let fresh = &self.world.events()[self.published_events..];
            p.events.extend(fresh.iter().cloned().map(Arc::new));
            self.published_events = self.world.events().len();
            p.state = state;
            p.metrics = metrics;
        }
        shared.version.send_modify(|v| *v += 1);
    }
}

async fn get_state(State(shared): State<Arc<Shared>>) -> Json<StateView> {
    let state = shared.published.read().expect("lock").state.clone();
    Json(StateView::clone(&state))
}

async fn get_metrics(State(shared): State<Arc<Shared>>) -> Json<MetricsReport> {
    let metrics = shared.published.read().expect("lock").metrics.clone();
    Json(MetricsReport::clone(&metrics))
}

async fn post_command(
    State(shared): State<Arc<Shared>>,
    Json(env): Json<CommandEnvelope>,
) -> Response {
    let reply = submit(&shared, env).await;
    let status = if reply.accepted {
        StatusCode::OK
    } else {
        StatusCode::CONFLICT
    };
    (status, Json(reply)).into_response()
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    /// Last sequence number already seen; replay starts after it.
    since: Option<u64>,
    /// With `follow=false` the stream ends once the backlog is sent.
    #[serde(default = "yes")]
    follow: bool,
}

fn yes() -> bool {
    true
}

struct Cursor {
    shared: Arc<Shared>,
    version: watch::Receiver<u64>,
    epoch: u64,
    after: Option<u64>,
    follow: bool,
    /// The backlog has been read at least once.
    drained: bool,
    pending: VecDeque<Event>,
}

fn sse_event(e: &SimEvent) -> Event {
    Event::default()
        .id(e.seq.to_string())
        .event("sim")
        .data(e.to_json_line())
}

impl Cursor {
    /// Moves every published event past the cursor into `pending`.
    fn fill(&mut self) {
        let p = self.shared.published.read().expect("lock");
        if p.epoch != self.epoch {
            self.epoch = p.epoch;
            self.after = None;
            self.pending
                .push_back(Event::default().event("reset").data(p.epoch.to_string()));
        }
        let start = p.events.partition_point(|e| Some(e.seq) <= self.after);
        for e in &p.events[start..] {
            self.pending.push_back(sse_event(e));
            self.after = Some(e.seq);
        }
    }
}

async fn get_events(
    State(shared): State<Arc<Shared>>,
    headers: HeaderMap,
    Query(q): Query<EventsQuery>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let mut version = shared.version.subscribe();
    version.mark_unchanged();
    let epoch = shared.published.read().expect("lock").epoch;
    let cursor = Cursor {
        shared,
        version,
        epoch,
        after: resume.or(q.since),
        follow: q.follow,
        drained: false,
        pending: VecDeque::new(),
    };
    let stream = futures::stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(ev) = c.pending.pop_front() {
                return Some((Ok(ev), c));
            }
            if c.drained && (!c.follow || c.version.changed().await.is_err()) {
                return None;
            }
            c.fill();
            c.drained = true;
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
