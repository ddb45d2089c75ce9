//! Operations behind the admin HTTP API: network views built from metadata,
//! link editing, dynamic-link inspection, the self-organisation demo and the
//! linked-search experiment.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autonomic::{
    id_similarity, run_experiment, AutonomicError, ExperimentConfig, ExperimentReport, LinkGraph, LinkSummary,
    SelforgConfig, SelforgState,
};
use crate::metadata::{MetadataDoc, MetadataError};
use crate::model::{Handle, ModelError};
use crate::node::{Node, NodeError};
use crate::par::Execution;
use crate::wire::ParamValue;
use crate::xml::{self, Element, XmlNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdminError {
    #[error("no demo services have been created")]
    DemoNotCreated,
    #[error("view depth must be at least 1")]
    InvalidDepth,
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Autonomic(#[from] AutonomicError),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
}

impl From<ModelError> for AdminError {
    fn from(e: ModelError) -> Self {
        AdminError::Node(NodeError::Model(e))
    }
}

impl AdminError {
    /// The model error underneath, if any.
    pub fn model(&self) -> Option<&ModelError> {
        match self {
            AdminError::Node(NodeError::Model(m)) | AdminError::Autonomic(AutonomicError::Node(NodeError::Model(m))) => {
                Some(m)
            }
            _ => None,
        }
    }
}

/// A handle in admin JSON: either a `/`-separated path on this node or a
/// full address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HandleRef {
    Path(String),
    Full { base_uri: String, path: Vec<String> },
}

impl HandleRef {
    pub fn resolve(&self, base_uri: &str) -> Result<Handle, ModelError> {
        match self {
            HandleRef::Path(p) => Handle::new(base_uri, p.split('/').filter(|s| !s.is_empty())),
            HandleRef::Full { base_uri, path } => Handle::new(base_uri.as_str(), path.iter().map(String::as_str)),
        }
    }
}

impl From<&Handle> for HandleRef {
    fn from(h: &Handle) -> Self {
        HandleRef::Full {
            base_uri: h.base_uri().to_string(),
            path: h.path().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewNode {
    pub name: String,
    pub path: Vec<String>,
    pub class_name: String,
    pub service_type: String,
    pub sid: Option<String>,
    pub shared: bool,
    pub depth: usize,
    pub links: Vec<HandleRef>,
    pub child_count: usize,
    /// Set when children exist but lie below the requested depth.
    pub collapsed: bool,
    pub children: Vec<ViewNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkView {
    pub base_uri: String,
    pub depth: usize,
    pub services: Vec<ViewNode>,
}

fn view_node(doc: &MetadataDoc, depth: usize) -> ViewNode {
    let sid = doc.service_id();
    let level = doc.handle.depth();
    let children: Vec<ViewNode> = if level < depth {
        doc.child_meta.iter().map(|c| view_node(c, depth)).collect()
    } else {
        Vec::new()
    };
    ViewNode {
        name: doc.handle.name().unwrap_or_default().to_string(),
        path: doc.handle.path().to_vec(),
        class_name: doc.class_name.clone(),
        service_type: doc.service_type.clone(),
        shared: sid.as_ref().is_some_and(|s| s.shared),
        sid: sid.map(|s| s.id),
        depth: level,
        links: doc.link_meta.iter().map(|l| HandleRef::from(&l.handle)).collect(),
        child_count: doc.child_meta.len(),
        collapsed: !doc.child_meta.is_empty() && children.is_empty(),
        children,
    }
}

/// Builds a view from metadata documents alone. Depth 1 shows the top-level
/// services.
pub fn view_from_metadata(base_uri: &str, docs: &[MetadataDoc], depth: usize) -> Result<NetworkView, AdminError> {
    if depth == 0 {
        return Err(AdminError::InvalidDepth);
    }
    Ok(NetworkView {
        base_uri: base_uri.to_string(),
        depth,
        services: docs.iter().map(|d| view_node(d, depth)).collect(),
    })
}

impl NetworkView {
    /// The same view cut at a smaller depth.
    pub fn truncate(&self, depth: usize) -> NetworkView {
        fn cut(n: &ViewNode, depth: usize) -> ViewNode {
            let mut out = n.clone();
            if n.depth >= depth {
                out.children.clear();
                out.collapsed = n.child_count > 0;
            } else {
                out.children = n.children.iter().map(|c| cut(c, depth)).collect();
            }
            out
        }
        NetworkView {
            base_uri: self.base_uri.clone(),
            depth,
            services: self.services.iter().map(|s| cut(s, depth)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        fn count(n: &ViewNode) -> usize {
            1 + n.children.iter().map(count).sum::<usize>()
        }
        self.services.iter().map(count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }
}

/// All top-level metadata documents wrapped in one `Network_Meta` element.
pub fn network_meta_xml(base_uri: &str, docs: &[MetadataDoc]) -> Result<String, AdminError> {
    let mut root = Element::new("Network_Meta").with_attr("base", base_uri);
    for d in docs {
        root.push(d.to_element());
    }
    Ok(root.to_xml().map_err(MetadataError::from)?)
}

pub fn parse_network_meta_xml(s: &str) -> Result<(String, Vec<MetadataDoc>), AdminError> {
    let root = xml::parse_document(s).map_err(MetadataError::from)?;
    if root.name != "Network_Meta" {
        return Err(MetadataError::SchemaViolation(format!("expected Network_Meta, found {}", root.name)).into());
    }
    let base = root.attr("base").unwrap_or_default().to_string();
    let docs = root
        .children
        .iter()
        .filter_map(|n| match n {
            XmlNode::Element(e) => Some(MetadataDoc::from_element(e)),
            _ => None,
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((base, docs))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkEdit {
    pub a: HandleRef,
    pub b: HandleRef,
    pub create: bool,
    #[serde(default)]
    pub mutual: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum DemoAction {
    CreateServices {
        n: usize,
        id_len: usize,
        seed: u64,
        #[serde(default)]
        fanout: Option<usize>,
    },
    Start {
        #[serde(default)]
        period_ms: Option<u64>,
    },
    Stop,
    Status,
    /// Runs a single round synchronously.
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoStatus {
    pub created: bool,
    pub running: bool,
    pub container: Option<String>,
    pub round: usize,
    pub converged: bool,
    pub ids: Vec<String>,
    pub graph: LinkGraph,
}

pub const DEFAULT_DEMO_PERIOD: Duration = Duration::from_millis(200);
const DEMO_CHAIN: &str = "id";

struct DemoRun {
    container: Handle,
    services: Vec<Handle>,
    state: SelforgState,
}

struct Runner {
    stop: Arc<AtomicBool>,
    thread: JoinHandle<()>,
}

struct DemoShared {
    node: Arc<Node>,
    run: Mutex<Option<DemoRun>>,
}

impl DemoShared {
    fn step(&self) -> Result<bool, AdminError> {
        let mut guard = self.run.lock();
        let run = guard.as_mut().ok_or(AdminError::DemoNotCreated)?;
        let before = run.state.edges();
        let changed = run.state.step(Execution::Parallel);
        let after = run.state.edges();
        let chain = [DEMO_CHAIN.to_string()];
        let mut links = self.node.links().write();
        links.tick(1);
        for (i, j) in before.iter().filter(|e| !after.contains(e)) {
            links.remove(&run.services[*i], &run.services[*j], &chain);
        }
        let ids = run.state.ids();
        for (i, j) in &after {
            let score = id_similarity(&ids[*i], &ids[*j]).max(f64::EPSILON);
            links.reinforce(&run.services[*i], &run.services[*j], &chain, score);
        }
        Ok(changed)
    }
}

/// Owns the demo state and its single background runner.
pub struct DemoController {
    shared: Arc<DemoShared>,
    runner: Mutex<Option<Runner>>,
    seq: AtomicU64,
}

impl DemoController {
    pub fn new(node: Arc<Node>) -> Self {
        DemoController {
            shared: Arc::new(DemoShared {
                node,
                run: Mutex::new(None),
            }),
            runner: Mutex::new(None),
            seq: AtomicU64::new(1),
        }
    }

    pub fn control(&self, action: DemoAction) -> Result<DemoStatus, AdminError> {
        match action {
            DemoAction::CreateServices { n, id_len, seed, fanout } => {
                let mut cfg = SelforgConfig::new(n, id_len, usize::MAX, seed);
                cfg.fanout = fanout;
                self.create(cfg)?;
            }
            DemoAction::Start { period_ms } => {
                self.start(period_ms.map(Duration::from_millis).unwrap_or(DEFAULT_DEMO_PERIOD))?
            }
            DemoAction::Stop => self.stop(),
            DemoAction::Step => {
                self.shared.step()?;
            }
            DemoAction::Status => {}
        }
        Ok(self.status())
    }

    pub fn create(&self, cfg: SelforgConfig) -> Result<(), AdminError> {
        self.stop();
        let state = SelforgState::new(cfg)?;
        let node = &self.shared.node;
        let name = format!("selforg-{}", self.seq.fetch_add(1, Ordering::Relaxed));
        let container = node.register(&node.root(), &name, "Group", &[])?;
        let mut services = Vec::with_capacity(state.ids().len());
        for (i, id) in state.ids().iter().enumerate() {
            let arg = ParamValue::from(id.as_str());
            services.push(node.register(&container, &format!("s{i}"), "Auto", &[arg])?);
        }
        *self.shared.run.lock() = Some(DemoRun {
            container,
            services,
            state,
        });
        Ok(())
    }

    pub fn start(&self, period: Duration) -> Result<(), AdminError> {
        if self.shared.run.lock().is_none() {
            return Err(AdminError::DemoNotCreated);
        }
        let mut runner = self.runner.lock();
        if runner.as_ref().is_some_and(|r| !r.thread.is_finished()) {
            return Ok(());
        }
        let stop = Arc::new(AtomicBool::new(false));
        let shared = Arc::clone(&self.shared);
        let flag = Arc::clone(&stop);
        let thread = std::thread::spawn(move || {
            while !flag.load(Ordering::Acquire) {
                match shared.step() {
                    Ok(_) => {}
                    Err(e) => {
                        tracing::warn!("demo step failed: {e}");
                        break;
                    }
                }
                if shared.run.lock().as_ref().is_none_or(|r| r.state.converged()) {
                    break;
                }
                std::thread::park_timeout(period);
            }
        });
        *runner = Some(Runner { stop, thread });
        Ok(())
    }

    pub fn stop(&self) {
        if let Some(r) = self.runner.lock().take() {
            r.stop.store(true, Ordering::Release);
            r.thread.thread().unpark();
            let _ = r.thread.join();
        }
    }

    pub fn is_running(&self) -> bool {
        self.runner.lock().as_ref().is_some_and(|r| !r.thread.is_finished())
    }

    pub fn status(&self) -> DemoStatus {
        let running = self.is_running();
        match self.shared.run.lock().as_ref() {
            Some(r) => DemoStatus {
                created: true,
                running,
                container: Some(r.container.path().join("/")),
                round: r.state.round(),
                converged: r.state.converged(),
                ids: r.state.ids().to_vec(),
                graph: r.state.graph(),
            },
            None => DemoStatus {
                created: false,
                running,
                container: None,
                round: 0,
                converged: false,
                ids: Vec::new(),
                graph: LinkGraph::new(),
            },
        }
    }
}

impl Drop for DemoController {
    fn drop(&mut self) {
        self.stop();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentInstall {
    pub container: String,
    pub report: ExperimentReport,
}

/// Everything the HTTP layer needs, over one node.
pub struct Admin {
    node: Arc<Node>,
    demo: DemoController,
    experiments: AtomicU64,
}

impl Admin {
    pub fn new(node: Arc<Node>) -> Self {
        Admin {
            demo: DemoController::new(Arc::clone(&node)),
            node,
            experiments: AtomicU64::new(1),
        }
    }

    pub fn node(&self) -> &Arc<Node> {
        &self.node
    }

    pub fn handle(&self, r: &HandleRef) -> Result<Handle, AdminError> {
        Ok(r.resolve(self.node.base_uri())?)
    }

    pub fn view(&self, depth: usize) -> Result<NetworkView, AdminError> {
        view_from_metadata(self.node.base_uri(), &self.node.network_metadata(), depth)
    }

    pub fn network_meta(&self) -> Result<String, AdminError> {
        network_meta_xml(self.node.base_uri(), &self.node.network_metadata())
    }

    pub fn meta(&self, path: &str) -> Result<String, AdminError> {
        let h = self.handle(&HandleRef::Path(path.to_string()))?;
        Ok(self.node.metadata(&h)?.to_xml()?)
    }

    pub fn edit_link(&self, e: &LinkEdit) -> Result<(), AdminError> {
        let a = self.handle(&e.a)?;
        let b = self.handle(&e.b)?;
        self.node.link_permanent(&a, &b, e.create)?;
        if e.mutual {
            self.node.link_permanent(&b, &a, e.create)?;
        }
        Ok(())
    }

    pub fn dynamic_links(&self, path: &str) -> Result<Vec<LinkSummary>, AdminError> {
        let h = self.handle(&HandleRef::Path(path.to_string()))?;
        self.node.metadata(&h)?;
        Ok(self.node.links().read().summaries(&h))
    }

    pub fn demo(&self, action: DemoAction) -> Result<DemoStatus, AdminError> {
        self.demo.control(action)
    }

    pub fn demo_controller(&self) -> &DemoController {
        &self.demo
    }

    /// Runs the experiment and installs its services and trained links.
    pub fn experiment(&self, cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentInstall, AdminError> {
        let run = run_experiment(cfg, exec)?;
        let name = format!("experiment-{}", self.experiments.fetch_add(1, Ordering::Relaxed));
        let top = run.install(&self.node, &name)?;
        Ok(ExperimentInstall {
            container: top.path().join("/"),
            report: run.report,
        })
    }

    /// Hash over the metadata, the dynamic links and the demo status.
    pub fn state_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.network_meta().unwrap_or_default().as_bytes());
        for l in self.node.links().read().iter() {
            h.update(format!("{}|{}|{:?}|{}|{}\n", l.source, l.target, l.chain, l.weight, l.hits).as_bytes());
        }
        h.update(serde_json::to_vec(&self.demo.status()).unwrap_or_default());
        hex::encode(h.finalize())
    }
}
