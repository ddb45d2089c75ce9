//! Node configuration file.
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! base_uri = "http://127.0.0.1:8080"   # defaults to http://<bind>
//! packet_size = 1024
//! admin_token = "secret"              # omit to leave /admin open
//!
//! [[service]]
//! path = "Group"
//! class = "Group"
//!
//! [[service]]
//! path = "Group/Service1"
//! class = "Echo"
//! args = [5]
//! admin_doc = "service1_admin.xml"    # relative to this file
//!
//! [[link]]
//! a = "Group/Service1"
//! b = "Group"
//! mutual = true
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use servnet_core::metadata::AdminDoc;
use servnet_core::model::Handle;
use servnet_core::node::{Node, NodeConfig, NodeError, DEFAULT_PACKET_SIZE};
use servnet_core::wire::{ParamValue, DEFAULT_REASSEMBLY_TIMEOUT};
use thiserror::Error;

pub const CONFIG_ENV: &str = "SERVNET_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("service {path:?}: {message}")]
    Service { path: String, message: String },
    #[error(transparent)]
    Node(#[from] NodeError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    #[serde(default)]
    pub base_uri: Option<String>,
    #[serde(default = "default_packet_size")]
    pub packet_size: usize,
    #[serde(default = "default_timeout")]
    pub reassembly_timeout_secs: u64,
    #[serde(default)]
    pub admin_token: Option<String>,
    #[serde(default = "yes")]
    pub admin_enabled: bool,
    #[serde(default, rename = "service")]
    pub services: Vec<ServiceEntry>,
    #[serde(default, rename = "link")]
    pub links: Vec<LinkEntry>,
    #[serde(skip)]
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceEntry {
    pub path: String,
    pub class: String,
    #[serde(default)]
    pub args: Vec<toml::Value>,
    #[serde(default)]
    pub admin_doc: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub mutual: bool,
}

fn default_bind() -> SocketAddr {
    "127.0.0.1:8080".parse().expect("valid address")
}

fn default_packet_size() -> usize {
    DEFAULT_PACKET_SIZE
}

fn default_timeout() -> u64 {
    DEFAULT_REASSEMBLY_TIMEOUT.as_secs()
}

fn yes() -> bool {
    true
}

impl Default for ServerConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults parse")
    }
}

impl ServerConfig {
    pub fn parse(src: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ServerConfig = toml::from_str(src).map_err(|e| ConfigError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        cfg.dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        ServerConfig::parse(&src, path)
    }

    /// `explicit`, else `$SERVNET_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from)) {
            Some(p) => ServerConfig::load(&p),
            None => Ok(ServerConfig::default()),
        }
    }

    pub fn node_config(&self, bound: SocketAddr) -> NodeConfig {
        let base = self.base_uri.clone().unwrap_or_else(|| format!("http://{bound}"));
        let mut nc = NodeConfig::new(base).with_packet_size(self.packet_size);
        nc.reassembly_timeout = Duration::from_secs(self.reassembly_timeout_secs);
        nc.admin_enabled = self.admin_enabled;
        nc
    }

    /// Registers the configured services and links on a fresh node.
    pub fn populate(&self, node: &Node) -> Result<(), ConfigError> {
        for s in &self.services {
            let err = |message: String| ConfigError::Service {
                path: s.path.clone(),
                message,
            };
            let h = local_handle(node, &s.path).map_err(|e| err(e.to_string()))?;
            let parent = h.parent().ok_or_else(|| err("the root cannot be configured".into()))?;
            let name = h.name().expect("non-root");
            let args = s.args.iter().map(toml_param).collect::<Result<Vec<_>, _>>().map_err(err)?;
            node.register(&parent, name, &s.class, &args)?;
            if let Some(doc) = &s.admin_doc {
                let p = self.dir.join(doc);
                let src = std::fs::read_to_string(&p).map_err(|source| ConfigError::Read { path: p, source })?;
                let doc = AdminDoc::parse(&src).map_err(|e| err(e.to_string()))?;
                node.apply_admin_doc(&h, &doc)?;
            }
        }
        for l in &self.links {
            let a = local_handle(node, &l.a).map_err(NodeError::from)?;
            let b = local_handle(node, &l.b).map_err(NodeError::from)?;
            node.link_permanent(&a, &b, true)?;
            if l.mutual {
                node.link_permanent(&b, &a, true)?;
            }
        }
        Ok(())
    }
}

fn local_handle(node: &Node, path: &str) -> Result<Handle, servnet_core::model::ModelError> {
    Handle::new(node.base_uri(), path.split('/').filter(|s| !s.is_empty()))
}

fn toml_param(v: &toml::Value) -> Result<ParamValue, String> {
    match v {
        toml::Value::Integer(i) => Ok((*i).into()),
        toml::Value::Float(f) => Ok((*f).into()),
        toml::Value::Boolean(b) => Ok((*b).into()),
        toml::Value::String(s) => Ok(s.as_str().into()),
        other => Err(format!("unsupported constructor argument {other}")),
    }
}
