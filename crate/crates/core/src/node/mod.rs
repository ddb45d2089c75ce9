//! The base server: hosts one network, receives every call, and is also the
//! client side for calls to other nodes.
//!
//! All service execution goes through [`Node::dispatch`]. A call resolves its
//! target under the tree read lock, then runs under that service's own
//! execution lock, so one service handles one call at a time while
//! independent services run concurrently.

mod kinds;
mod transport;

pub use kinds::{void, Auto, Echo, Factory, KindRegistry, ServiceKind};
pub use transport::{Loopback, Transport, TransportError};

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use thiserror::Error;
use tracing::{debug, warn};

use crate::access::{AccessConfig, AccessError, Decision};
use crate::autonomic::{self, AutoSetup, Behavior, LinkTable};
use crate::metadata::{self, AdminDoc, MetadataDoc, MetadataError, ServiceInfo};
use crate::model::{Handle, ModelError, Network, ServiceId, ServiceNode, GET_DATA};
use crate::service::{CallContext, MethodTable};
use crate::wire::{
    decode_envelope, decode_reply, encode_envelope, encode_reply, reassemble_packets, split_packets,
    CallEnvelope, Fault, FaultKind, Packet, ParamValue, Reassembler, ReplyEnvelope, WireError,
    DEFAULT_REASSEMBLY_TIMEOUT,
};
use crate::xml::{XmlFragment, XmlNode};

pub const DEFAULT_PACKET_SIZE: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("unknown service kind {0:?}")]
    UnknownServiceKind(String),
    #[error("constructor arguments do not match any constructor of {0}")]
    ConstructorMismatch(String),
    #[error("remote fault {0}")]
    RemoteFault(Fault),
    #[error("no transport configured for remote calls")]
    NoTransport,
    #[error("invalid node config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeConfig {
    pub base_uri: String,
    /// Largest packet payload in bytes, at least 1.
    pub packet_size: usize,
    pub reassembly_timeout: Duration,
    pub admin_enabled: bool,
}

impl NodeConfig {
    pub fn new(base_uri: impl Into<String>) -> Self {
        NodeConfig {
            base_uri: base_uri.into(),
            packet_size: DEFAULT_PACKET_SIZE,
            reassembly_timeout: DEFAULT_REASSEMBLY_TIMEOUT,
            admin_enabled: true,
        }
    }

    pub fn with_packet_size(mut self, size: usize) -> Self {
        self.packet_size = size;
        self
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        if self.packet_size < 1 {
            return Err(NodeError::Config("packet_size must be at least 1".into()));
        }
        crate::model::validate_uri(&self.base_uri)?;
        Ok(())
    }
}

struct Outgoing {
    packets: Vec<Packet>,
    created: Instant,
}

pub struct Node {
    config: NodeConfig,
    network: RwLock<Network>,
    kinds: KindRegistry,
    reassembler: Reassembler,
    outbox: Mutex<HashMap<String, Outgoing>>,
    links: RwLock<LinkTable>,
    autos: Mutex<HashMap<Handle, AutoSetup>>,
    transport: RwLock<Option<Arc<dyn Transport>>>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node").field("config", &self.config).finish_non_exhaustive()
    }
}

fn fault(kind: FaultKind, message: impl Into<String>) -> Fault {
    Fault {
        kind,
        message: message.into(),
    }
}

impl From<&ModelError> for Fault {
    fn from(e: &ModelError) -> Fault {
        let kind = match e {
            ModelError::ForeignNode { .. } => FaultKind::ForeignNode,
            ModelError::UnknownService(_) => FaultKind::UnknownService,
            _ => FaultKind::BadRequest,
        };
        fault(kind, e.to_string())
    }
}

impl Node {
    pub fn new(config: NodeConfig) -> Result<Self, NodeError> {
        Node::with_kinds(config, KindRegistry::builtin())
    }

    pub fn with_kinds(config: NodeConfig, kinds: KindRegistry) -> Result<Self, NodeError> {
        config.validate()?;
        Ok(Node {
            network: RwLock::new(Network::new(config.base_uri.clone())?),
            reassembler: Reassembler::new(config.reassembly_timeout),
            config,
            kinds,
            outbox: Mutex::new(HashMap::new()),
            links: RwLock::new(LinkTable::default()),
            autos: Mutex::new(HashMap::new()),
            transport: RwLock::new(None),
        })
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn base_uri(&self) -> &str {
        &self.config.base_uri
    }

    pub fn root(&self) -> Handle {
        self.network.read().root_handle()
    }

    pub fn kinds(&self) -> &KindRegistry {
        &self.kinds
    }

    pub fn set_transport(&self, t: Arc<dyn Transport>) {
        *self.transport.write() = Some(t);
    }

    /// Runs `f` with shared access to the network tree.
    pub fn with_network<R>(&self, f: impl FnOnce(&Network) -> R) -> R {
        f(&self.network.read())
    }

    pub fn links(&self) -> &RwLock<LinkTable> {
        &self.links
    }

    // ---- registration -------------------------------------------------

    /// Constructs a service of the kind named by `spec.class_name` with
    /// `args` and nests it under `parent`. Non-empty descriptive fields of
    /// `spec` override the kind's defaults. A `Service_Id` element in
    /// `spec.other_meta` sets the service id; otherwise the kind's shared id
    /// or a fresh unique id is used.
    pub fn register_service(
        &self,
        parent: &Handle,
        name: &str,
        spec: &MetadataDoc,
        args: &[ParamValue],
    ) -> Result<Handle, NodeError> {
        let kind = self
            .kinds
            .get(&spec.class_name)
            .ok_or_else(|| NodeError::UnknownServiceKind(spec.class_name.clone()))?;
        if !kind.accepts_args(args) {
            return Err(NodeError::ConstructorMismatch(kind.class_name.clone()));
        }
        let service = kind
            .construct(args)
            .map_err(|_| NodeError::ConstructorMismatch(kind.class_name.clone()))?;

        let uuid = uuid::Uuid::new_v4().to_string();
        let (explicit_sid, other_meta) = split_service_id(&spec.other_meta);
        let sid = explicit_sid.unwrap_or_else(|| match &kind.shared_id {
            Some(id) => ServiceId::shared(id.clone()),
            None => ServiceId::unique(uuid.clone()),
        });
        let description = if spec.description.is_empty() {
            XmlFragment::text(&kind.description).unwrap_or_default()
        } else {
            spec.description.clone()
        };
        let info = ServiceInfo {
            service_type: if spec.service_type.is_empty() {
                kind.service_type.clone()
            } else {
                spec.service_type.clone()
            },
            description,
            other_meta,
            private_meta: XmlFragment::default(),
            class_name: kind.class_name.clone(),
            archive_uris: spec.archive_uris.clone(),
            constructors: kind.constructors.clone(),
            uuid: Some(uuid),
            autonomic_managers: Vec::new(),
        };
        let node = ServiceNode::new(sid, info, service);

        let mut net = self.network.write();
        let h = parent.child(name)?;
        check_shared_consistency(&net, &h, &node)?;
        Ok(net.add_nested(parent, name, node)?)
    }

    /// Registers a service of `class_name` with default metadata.
    pub fn register(
        &self,
        parent: &Handle,
        name: &str,
        class_name: &str,
        args: &[ParamValue],
    ) -> Result<Handle, NodeError> {
        let spec = MetadataDoc::minimal("", class_name, parent.clone());
        self.register_service(parent, name, &spec, args)
    }

    pub fn link_permanent(&self, a: &Handle, b: &Handle, create: bool) -> Result<(), NodeError> {
        Ok(self.network.write().link_permanent(a, b, create)?)
    }

    pub fn add_association(&self, s: &Handle, uri: &str) -> Result<(), NodeError> {
        Ok(self.network.write().add_association(s, uri)?)
    }

    // ---- metadata and access ------------------------------------------

    pub fn metadata(&self, h: &Handle) -> Result<MetadataDoc, NodeError> {
        Ok(metadata::generate_metadata(&self.network.read(), h)?)
    }

    pub fn network_metadata(&self) -> Vec<MetadataDoc> {
        metadata::generate_network_metadata(&self.network.read())
    }

    pub fn private_meta(&self, h: &Handle) -> Result<XmlFragment, NodeError> {
        Ok(self.network.read().resolve(h)?.info().private_meta.clone())
    }

    pub fn describe_methods(&self, h: &Handle) -> Result<MethodTable, NodeError> {
        Ok(self.network.read().resolve(h)?.methods().clone())
    }

    /// Replaces the access config of `s`. The config must map exactly the
    /// service's methods.
    pub fn install_config(&self, s: &Handle, cfg: AccessConfig) -> Result<(), NodeError> {
        let mut net = self.network.write();
        let node = net.resolve_mut(s)?;
        cfg.check_coverage(node.methods())?;
        set_access(node, cfg);
        Ok(())
    }

    /// Applies an admin document atomically: everything is validated before
    /// anything changes.
    pub fn apply_admin_doc(&self, s: &Handle, doc: &AdminDoc) -> Result<(), NodeError> {
        let invalid = |m: String| NodeError::Metadata(MetadataError::InvalidAdminDoc(m));
        let behaviors = doc
            .autonomic_managers
            .iter()
            .map(|name| autonomic::behavior_by_name(name).ok_or_else(|| invalid(format!("unknown autonomic manager {name:?}"))))
            .collect::<Result<Vec<_>, _>>()?;

        let mut net = self.network.write();
        let current = net.resolve(s)?;
        if let Some(cfg) = &doc.access {
            cfg.check_coverage(current.methods()).map_err(|e| invalid(e.to_string()))?;
        }
        let mut info = current.info().clone();
        if let Some(t) = &doc.service_type {
            info.service_type = t.clone();
        }
        if let Some(d) = &doc.description {
            info.description = d.clone();
        }
        if let Some(extra) = &doc.extra_meta {
            info.other_meta = info.other_meta.merged(extra);
        }
        if let Some(private) = &doc.private_meta {
            info.private_meta = info.private_meta.merged(private);
        }
        info.autonomic_managers.extend(doc.autonomic_managers.iter().cloned());
        let mut methods = current.methods().clone();
        if let Some(cfg) = &doc.access {
            for (m, g) in cfg.method_groups() {
                if let Some(d) = methods.get_mut(m) {
                    d.access_level = Some(g.to_owned());
                }
            }
        }
        if current.sid().shared {
            let changed = metadata::doc_from_parts(s, current.sid(), &info, &methods);
            check_shared_doc(&net, s, current.sid(), &changed)?;
        }

        let node = net.resolve_mut(s)?;
        node.info = info;
        if let Some(cfg) = &doc.access {
            set_access(node, cfg.clone());
        }
        if let Some(data) = &doc.data {
            node.cell.lock().data = Some(data.as_str().to_owned());
        }
        drop(net);
        if let Some(b) = behaviors.into_iter().last() {
            self.install_behavior(s, b, Vec::new())?;
        }
        Ok(())
    }

    // ---- autonomic hooks ----------------------------------------------

    /// Installs (or replaces) the behavior and peer list driving `s`.
    pub fn install_behavior(&self, s: &Handle, behavior: Arc<dyn Behavior>, peers: Vec<Handle>) -> Result<(), NodeError> {
        self.network.read().resolve(s)?;
        self.autos.lock().insert(s.clone(), AutoSetup { behavior, peers });
        Ok(())
    }

    pub fn set_peers(&self, s: &Handle, peers: Vec<Handle>) -> Result<(), NodeError> {
        let mut autos = self.autos.lock();
        match autos.get_mut(s) {
            Some(setup) => {
                setup.peers = peers;
                Ok(())
            }
            None => Err(NodeError::Model(ModelError::UnknownService(s.clone()))),
        }
    }

    pub fn auto_setup(&self, s: &Handle) -> Option<AutoSetup> {
        self.autos.lock().get(s).cloned()
    }

    // ---- dispatch -----------------------------------------------------

    /// Runs one call against a locally hosted service.
    pub fn dispatch(&self, e: &CallEnvelope) -> Result<ParamValue, Fault> {
        let (cell, builtin_get_data) = {
            let net = self.network.read();
            let node = net.resolve(&e.target).map_err(|err| Fault::from(&err))?;
            let desc = node
                .methods()
                .get(&e.method)
                .ok_or_else(|| fault(FaultKind::UnknownMethod, format!("{} has no method {:?}", e.target, e.method)))?;
            if let Some(cfg) = node.access() {
                match cfg.authorize(&e.method, e.credential.as_deref()) {
                    Ok(Decision::Grant) => {}
                    Ok(Decision::Deny) => {
                        return Err(fault(FaultKind::AccessDenied, format!("access to {} denied", e.method)))
                    }
                    Err(err) => return Err(fault(FaultKind::UnknownMethod, err.to_string())),
                }
            }
            let arity_ok = desc.params.len() == e.params.len();
            if !arity_ok || !desc.params.iter().zip(&e.params).all(|(t, p)| t.accepts(p)) {
                let tags: Vec<&str> = desc.params.iter().map(|t| t.as_str()).collect();
                return Err(fault(
                    FaultKind::BadRequest,
                    format!("{} expects parameters ({})", e.method, tags.join(", ")),
                ));
            }
            (Arc::clone(&node.cell), node.builtin_get_data && e.method == GET_DATA)
        };
        let mut guard = cell.lock();
        let cell = &mut *guard;
        if builtin_get_data {
            return Ok(cell.data.clone().unwrap_or_default().into());
        }
        let mut ctx = CallContext {
            handle: &e.target,
            data: &mut cell.data,
        };
        cell.service
            .invoke(&mut ctx, &e.method, &e.params)
            .map_err(|m| fault(FaultKind::MethodFault, m))
    }

    /// Calls a method on any service: locally through [`Node::dispatch`] when
    /// the target lives here, otherwise through the transport.
    pub fn call(
        &self,
        target: &Handle,
        method: &str,
        params: Vec<ParamValue>,
        credential: Option<&str>,
    ) -> Result<ParamValue, NodeError> {
        if target.base_uri() == self.base_uri() {
            let env = CallEnvelope::new(target.clone(), method, params).with_credential(credential.map(str::to_owned));
            self.dispatch(&env).map_err(NodeError::RemoteFault)
        } else {
            self.call_remote(target, method, params, credential)
        }
    }

    /// Sends a call through the transport even when the target is local.
    pub fn call_remote(
        &self,
        target: &Handle,
        method: &str,
        params: Vec<ParamValue>,
        credential: Option<&str>,
    ) -> Result<ParamValue, NodeError> {
        let env = CallEnvelope::new(target.clone(), method, params).with_credential(credential.map(str::to_owned));
        let reply = self.send_envelope(&env)?;
        reply.outcome.map_err(NodeError::RemoteFault)
    }

    /// Splits, sends and reassembles one call exchange.
    pub fn send_envelope(&self, env: &CallEnvelope) -> Result<ReplyEnvelope, NodeError> {
        let transport = self.transport.read().clone().ok_or(NodeError::NoTransport)?;
        let base = env.target.base_uri();
        let bytes = encode_envelope(env)?;
        let mut first = None;
        for p in split_packets(&env.message_id, &bytes, self.config.packet_size)? {
            if let Some(reply) = transport.send_packet(base, &p)? {
                first = Some(reply);
            }
        }
        let first = first.ok_or_else(|| {
            TransportError::Protocol(base.to_owned(), "message complete but no reply received".into())
        })?;
        let mut packets = Vec::with_capacity(first.total as usize);
        let total = first.total;
        packets.push(first);
        for i in 1..total {
            packets.push(transport.fetch_reply(base, &env.message_id, i)?);
        }
        Ok(decode_reply(&reassemble_packets(packets)?)?)
    }

    // ---- packet endpoint ----------------------------------------------

    /// Accepts one incoming packet. When it completes a message, the call is
    /// dispatched and the first packet of the reply is returned; the rest
    /// wait in the outbox for [`Node::reply_packet`].
    pub fn handle_packet(&self, p: Packet) -> Result<Option<Packet>, WireError> {
        self.expire(Instant::now());
        let message_id = p.message_id.clone();
        let Some(bytes) = self.reassembler.insert(p)? else {
            return Ok(None);
        };
        let reply = match decode_envelope(&bytes) {
            Ok(env) => {
                debug!(target = %env.target, method = %env.method, "dispatch");
                ReplyEnvelope {
                    message_id: env.message_id.clone(),
                    outcome: self.dispatch(&env),
                }
            }
            Err(e) => ReplyEnvelope {
                message_id: message_id.clone(),
                outcome: Err(fault(FaultKind::BadRequest, e.to_string())),
            },
        };
        let encoded = match encode_reply(&reply) {
            Ok(b) => b,
            Err(e) => encode_reply(&ReplyEnvelope {
                message_id: message_id.clone(),
                outcome: Err(fault(FaultKind::Internal, e.to_string())),
            })?,
        };
        let mut packets = split_packets(&message_id, &encoded, self.config.packet_size)?;
        let first = packets.remove(0);
        if !packets.is_empty() {
            self.outbox.lock().insert(
                message_id,
                Outgoing {
                    packets,
                    created: Instant::now(),
                },
            );
        }
        Ok(Some(first))
    }

    /// Reply packet `index` (≥ 1) of an answered call. The outbox entry is
    /// dropped once its last packet has been fetched.
    pub fn reply_packet(&self, message_id: &str, index: u32) -> Option<Packet> {
        let mut outbox = self.outbox.lock();
        let entry = outbox.get(message_id)?;
        let p = entry.packets.iter().find(|p| p.index == index)?.clone();
        if index + 1 == p.total {
            outbox.remove(message_id);
        }
        Some(p)
    }

    fn expire(&self, now: Instant) {
        for e in self.reassembler.expire(now) {
            warn!("dropping incomplete message: {e}");
        }
        let timeout = self.config.reassembly_timeout;
        self.outbox
            .lock()
            .retain(|_, o| now.duration_since(o.created) <= timeout);
    }

    pub fn pending_messages(&self) -> usize {
        self.reassembler.pending_count()
    }
}

fn set_access(node: &mut ServiceNode, cfg: AccessConfig) {
    let levels: Vec<(String, String)> = cfg
        .method_groups()
        .map(|(m, g)| (m.to_owned(), g.to_owned()))
        .collect();
    for (m, g) in levels {
        if let Some(d) = node.methods_mut().get_mut(&m) {
            d.access_level = Some(g);
        }
    }
    node.access = Some(Arc::new(cfg));
}

/// Separates a leading `Service_Id` element from the rest of `other`.
fn split_service_id(other: &XmlFragment) -> (Option<ServiceId>, XmlFragment) {
    let mut sid = None;
    let rest: Vec<XmlNode> = other
        .nodes()
        .into_iter()
        .filter(|n| match n {
            XmlNode::Element(e) if e.name == "Service_Id" && sid.is_none() => {
                sid = Some(ServiceId {
                    id: e.text(),
                    shared: e.attr("shared") == Some("true"),
                });
                false
            }
            _ => true,
        })
        .collect();
    (sid, XmlFragment::from_nodes(&rest).unwrap_or_default())
}

fn check_shared_consistency(net: &Network, h: &Handle, candidate: &ServiceNode) -> Result<(), NodeError> {
    if !candidate.sid().shared {
        return Ok(());
    }
    let doc = metadata::generate_for(net, h, candidate);
    check_shared_doc(net, h, candidate.sid(), &doc)
}

fn check_shared_doc(net: &Network, h: &Handle, sid: &ServiceId, doc: &MetadataDoc) -> Result<(), NodeError> {
    let form = doc.public_static_form()?;
    let mut conflict = false;
    net.walk(|other_h, other| {
        if conflict || other_h == h || other.sid() != sid {
            return;
        }
        let other_form = metadata::generate_for(net, other_h, other).public_static_form();
        conflict = other_form.as_ref() != Ok(&form);
    });
    if conflict {
        return Err(MetadataError::SharedMetadataConflict { id: sid.id.clone() }.into());
    }
    Ok(())
}
