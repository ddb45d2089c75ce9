//! The `servnet` command line. Every subcommand except `serve` and `txn-sim`
//! talks to a running node through the admin API.
//!
//! Exit codes: 0 success, 1 user error, 2 internal error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use servnet_core::admin::{DemoAction, HandleRef, LinkEdit, NetworkView, ViewNode};
use servnet_core::autonomic::{run_experiment, ExperimentConfig};
use servnet_core::par::Execution;
use servnet_core::trust::{run_scenario, Scenario};
use thiserror::Error;

use crate::client::{ApiClient, ClientError};
use crate::config::{ServerConfig, CONFIG_ENV};
use crate::http::{ExperimentRequest, ServeError, ServerHandle};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "servnet", version, about = "Run and steer a network of nested services")]
pub struct Cli {
    /// Admin API of the node to talk to.
    #[arg(long, global = true, env = "SERVNET_URL", default_value = "http://127.0.0.1:8080")]
    pub url: String,
    /// Shared admin token, sent as X-Admin-Token.
    #[arg(long, global = true, env = "SERVNET_ADMIN_TOKEN")]
    pub token: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start a node and serve until interrupted.
    Serve(ServeArgs),
    /// Print the service tree.
    View {
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long)]
        json: bool,
    },
    /// Edit permanent links or list dynamic links.
    #[command(subcommand)]
    Link(LinkCommand),
    /// Print the metadata document of a service, or of the whole network.
    Meta { path: Option<String> },
    /// Drive the id self-organisation demo.
    #[command(subcommand)]
    Demo(DemoCommand),
    /// Run the linked-search experiment.
    Experiment(ExperimentArgs),
    /// Run transaction scenarios from JSON files and print the event log.
    TxnSim {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Overrides `bind` from the config file.
    #[arg(long)]
    pub bind: Option<std::net::SocketAddr>,
    #[arg(long)]
    pub base_uri: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum LinkCommand {
    Create {
        a: String,
        b: String,
        #[arg(long)]
        mutual: bool,
    },
    Destroy {
        a: String,
        b: String,
        #[arg(long)]
        mutual: bool,
    },
    /// Dynamic links held for a service.
    Dynamic { path: String },
}

#[derive(Debug, Subcommand)]
pub enum DemoCommand {
    Create {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        id_len: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        fanout: Option<usize>,
    },
    Start {
        #[arg(long)]
        period_ms: Option<u64>,
    },
    Stop,
    Step,
    Status,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub queries: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub sequential: bool,
    /// Run in this process instead of on the node.
    #[arg(long)]
    pub local: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Decode(_) => CliError::Internal(e.to_string()),
            ClientError::Api { .. } if !e.is_user_error() => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Runtime(_) => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

fn io(e: std::io::Error) -> CliError {
    CliError::Internal(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))
}

fn render_node(n: &ViewNode, indent: usize, out: &mut String) {
    let sid = n.sid.as_deref().unwrap_or("-");
    let shared = if n.shared { " shared" } else { "" };
    let more = if n.collapsed {
        format!(" [+{}]", n.child_count)
    } else {
        String::new()
    };
    out.push_str(&format!("{:indent$}{} ({}, sid {sid}{shared}){more}\n", "", n.name, n.class_name));
    for l in &n.links {
        if let HandleRef::Full { path, .. } = l {
            out.push_str(&format!("{:indent$}  -> {}\n", "", path.join("/")));
        }
    }
    for c in &n.children {
        render_node(c, indent + 2, out);
    }
}

pub fn render_view(v: &NetworkView) -> String {
    let mut out = format!("{} (depth {})\n", v.base_uri, v.depth);
    for s in &v.services {
        render_node(s, 2, &mut out);
    }
    out
}

fn serve(args: &ServeArgs, token: Option<String>) -> Result<(), CliError> {
    let mut cfg = ServerConfig::resolve(args.config.as_deref()).map_err(|e| CliError::User(e.to_string()))?;
    if let Some(b) = args.bind {
        cfg.bind = b;
    }
    if args.base_uri.is_some() {
        cfg.base_uri = args.base_uri.clone();
    }
    if token.is_some() {
        cfg.admin_token = token;
    }
    let server = ServerHandle::start(&cfg)?;
    eprintln!("servnet listening on {} as {}", server.url(), server.node().base_uri());
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(io)?;
    rt.block_on(tokio::signal::ctrl_c()).map_err(io)?;
    server.shutdown()?;
    Ok(())
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let client = || ApiClient::new(cli.url.clone(), cli.token.clone());
    let text = match &cli.command {
        Command::Serve(args) => return serve(args, cli.token.clone()),
        Command::View { depth, json: as_json } => {
            let v = client().view(*depth)?;
            if *as_json {
                json(&v)?
            } else {
                render_view(&v)
            }
        }
        Command::Link(cmd) => match cmd {
            LinkCommand::Create { a, b, mutual } | LinkCommand::Destroy { a, b, mutual } => {
                client().link(&LinkEdit {
                    a: HandleRef::Path(a.clone()),
                    b: HandleRef::Path(b.clone()),
                    create: matches!(cmd, LinkCommand::Create { .. }),
                    mutual: *mutual,
                })?;
                "ok".to_string()
            }
            LinkCommand::Dynamic { path } => json(&client().dynamic_links(path)?)?,
        },
        Command::Meta { path } => match path {
            Some(p) => client().meta(p)?,
            None => client().network_meta()?,
        },
        Command::Demo(cmd) => {
            let action = match cmd {
                DemoCommand::Create { n, id_len, seed, fanout } => DemoAction::CreateServices {
                    n: *n,
                    id_len: *id_len,
                    seed: *seed,
                    fanout: *fanout,
                },
                DemoCommand::Start { period_ms } => DemoAction::Start { period_ms: *period_ms },
                DemoCommand::Stop => DemoAction::Stop,
                DemoCommand::Step => DemoAction::Step,
                DemoCommand::Status => DemoAction::Status,
            };
            json(&client().demo(&action)?)?
        }
        Command::Experiment(a) => {
            let req = ExperimentRequest {
                config: ExperimentConfig::new(a.n, a.queries, a.seed),
                execution: if a.sequential {
                    Execution::Sequential
                } else {
                    Execution::Parallel
                },
            };
            let report = if a.local {
                run_experiment(&req.config, req.execution)
                    .map_err(|e| CliError::User(e.to_string()))?
                    .report
            } else {
                client().experiment(&req)?.report
            };
            if a.json {
                json(&report)?
            } else {
                report.summary()
            }
        }
        Command::TxnSim { files } => {
            let mut lines = Vec::new();
            let mut failed = Vec::new();
            for f in files {
                let src = std::fs::read_to_string(f).map_err(|e| CliError::User(format!("{}: {e}", f.display())))?;
                let s: Scenario =
                    serde_json::from_str(&src).map_err(|e| CliError::User(format!("{}: {e}", f.display())))?;
                let r = run_scenario(&s);
                for l in &r.log {
                    lines.push(serde_json::to_string(l).map_err(|e| CliError::Internal(e.to_string()))?);
                }
                lines.push(format!(
                    "{} {}: {:?} (expected {:?})",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.final_state,
                    r.expected
                ));
                if !r.passed {
                    failed.push(r.name);
                }
            }
            writeln!(out, "{}", lines.join("\n")).map_err(io)?;
            if !failed.is_empty() {
                return Err(CliError::User(format!("scenarios not as expected: {}", failed.join(", "))));
            }
            return Ok(());
        }
    };
    writeln!(out, "{}", text.trim_end()).map_err(io)
}

/// Parses `args` and runs the command, returning the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(CliError::User(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USER
        }
        Err(CliError::Internal(m)) => {
            let _ = writeln!(err, "internal error: {m}");
            EXIT_INTERNAL
        }
    }
}
