//! `siren` command line.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use siren_core::recognition::{
    read_pgm, recognize, Pattern, DEFAULT_SOBEL_THRESHOLD, DEFAULT_TAU_PER_POINT,
};
use siren_core::scenario::load_scenario;
use siren_core::sim::{events_to_jsonl, run};
use siren_core::NodeId;

use crate::service::{Service, ServiceOptions};
use crate::GatewayError;

#[derive(Debug, Parser)]
#[command(
    name = "siren",
    version,
    about = "Ambulance dispatch and signal priority simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run a scenario headless and print or write the metrics report.
    Simulate {
        scenario: PathBuf,
        /// Overrides the scenario's priority setting.
        #[arg(long, value_enum)]
        priority: Option<Switch>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the event log as JSON lines.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Match a point pattern against a PGM frame.
    Recognize {
        image: PathBuf,
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SOBEL_THRESHOLD)]
        sobel_threshold: u32,
        /// Accept when D / n is at most this.
        #[arg(long, default_value_t = DEFAULT_TAU_PER_POINT)]
        tau: f64,
    },
    /// Fastest route between two nodes of a scenario's network.
    Route {
        scenario: PathBuf,
        from: String,
        to: String,
    },
    /// Serve the HTTP API for a scenario.
    Serve {
        scenario: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Simulated seconds per wall second.
        #[arg(long, default_value_t = 1.0)]
        pace: f64,
        /// Step as fast as possible, ignoring --pace.
        #[arg(long)]
        unpaced: bool,
        /// Start stepping immediately instead of waiting for a start command.
        #[arg(long)]
        autostart: bool,
        #[arg(long, value_enum)]
        priority: Option<Switch>,
    },
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), GatewayError> {
    fs::write(path, text)
        .map_err(|e| GatewayError::Failed(format!("cannot write {}: {e}", path.display())))
}

fn read(path: &Path) -> Result<Vec<u8>, GatewayError> {
    fs::read(path).map_err(|e| GatewayError::Failed(format!("cannot read {}: {e}", path.display())))
}

pub fn execute(cmd: Cmd) -> Result<(), GatewayError> {
    match cmd {
        Cmd::Simulate {
            scenario,
            priority,
            out,
            events,
        } => {
            let loaded = load_scenario(&scenario)?;
            let mut config = loaded.scenario.sim_config();
            if let Some(p) = priority {
                config.priority_enabled = p == Switch::On;
            }
            let camera = loaded.camera()?;
            let output = run(&loaded.scenario, &config, camera.as_ref())?;
            let report = output.report.to_json();
            match out {
                Some(path) => write(&path, &report)?,
                None => println!("{report}"),
            }
            if let Some(path) = events {
                write(&path, &events_to_jsonl(&output.events))?;
            }
            Ok(())
        }
        Cmd::Recognize {
            image,
            pattern,
            sobel_threshold,
            tau,
        } => {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(GatewayError::Invalid(format!(
                    "--tau must be >= 0, got {tau}"
                )));
            }
            let img = read_pgm(&read(&image)?)
                .map_err(|e| GatewayError::Invalid(format!("{}: {e}", image.display())))?;
            let pattern: Pattern = serde_json::from_slice(&read(&pattern)?)
                .map_err(|e| GatewayError::Invalid(format!("{}: {e}", pattern.display())))?;
            let result = recognize(&img, &pattern, sobel_threshold, tau)
                .map_err(|e| GatewayError::Failed(e.to_string()))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&result).expect("serializes")
            );
            Ok(())
        }
        Cmd::Route { scenario, from, to } => {
            let loaded = load_scenario(&scenario)?;
            let net = loaded.scenario.network();
            let (from, to) = (NodeId::new(from), NodeId::new(to));
            for n in [&from, &to] {
                if !net.contains_node(n) {
                    return Err(GatewayError::Invalid(format!("unknown node `{n}`")));
                }
            }
            let route = net
                .shortest_path(&from, &to)
                .map_err(|e| GatewayError::Failed(e.to_string()))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&route).expect("serializes")
            );
            Ok(())
        }
        Cmd::Serve {
            scenario,
            port,
            host,
            pace,
            unpaced,
            autostart,
            priority,
        } => {
            let loaded = load_scenario(&scenario)?;
            let options = ServiceOptions {
                pace: (!unpaced).then_some(pace),
                autostart,
                priority: priority.map(|p| p == Switch::On),
            };
            let service = Service::start(loaded, options)?;
            serve_blocking(service, SocketAddr::new(host, port))
        }
    }
}

fn serve_blocking(service: Service, addr: SocketAddr) -> Result<(), GatewayError> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| GatewayError::Failed(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| GatewayError::Failed(format!("cannot bind {addr}: {e}")))?;
        let local = listener
            .local_addr()
            .map_err(|e| GatewayError::Failed(e.to_string()))?;
        println!("listening on http://{local}");
        axum::serve(listener, service.router())
            .await
            .map_err(|e| GatewayError::Failed(e.to_string()))
    })
}
