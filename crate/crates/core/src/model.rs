//! The network tree: nested services, handles, permanent links and
//! associations. Dynamic links are kept by the autonomic engine, not here.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use indexmap::{IndexMap, IndexSet};
use parking_lot::Mutex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::access::AccessConfig;
use crate::metadata::ServiceInfo;
use crate::service::{MethodDescriptor, MethodTable, Service, TypeTag};
use crate::xml::{self, Element, XmlNode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown parent {0}")]
    UnknownParent(Handle),
    #[error("a child named {0:?} already exists")]
    DuplicateChildName(String),
    #[error("unknown service {0}")]
    UnknownService(Handle),
    #[error("handle {found} does not belong to node {expected}")]
    ForeignNode { expected: String, found: String },
    #[error("permanent links must stay within one network ({from} -> {to})")]
    CrossNetworkPermanentLink { from: String, to: String },
    #[error("malformed uri {0:?}")]
    MalformedUri(String),
    #[error("invalid service name {0:?}")]
    InvalidName(String),
    #[error("handle parse error: {0}")]
    Parse(String),
}

/// Relation kinds between services.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    Nesting,
    Permanent,
    Dynamic,
    Association,
}

/// Checks that `s` is an absolute URI: `scheme ":" rest`, where the scheme is
/// `ALPHA *(ALPHA / DIGIT / "+" / "-" / ".")` and the rest is non-empty with
/// no whitespace, control characters or `<`, `>`, `"`.
///
/// Host parts are not interpreted, so addresses such as
/// `http://1234.5.6.7:8888` are accepted as written.
pub fn validate_uri(s: &str) -> Result<(), ModelError> {
    let bad = || ModelError::MalformedUri(s.to_owned());
    let (scheme, rest) = s.split_once(':').ok_or_else(bad)?;
    let mut chars = scheme.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return Err(bad()),
    }
    if !chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')) {
        return Err(bad());
    }
    if rest.is_empty()
        || rest
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || matches!(c, '<' | '>' | '"'))
    {
        return Err(bad());
    }
    Ok(())
}

pub fn validate_name(name: &str) -> Result<(), ModelError> {
    if name.is_empty()
        || name
            .chars()
            .any(|c| matches!(c, '<' | '>' | '/') || c.is_control() || !xml::is_xml_char(c))
    {
        return Err(ModelError::InvalidName(name.to_owned()));
    }
    Ok(())
}

/// A service address: the hosting node's base URI plus the nesting path from
/// the network root. An empty path addresses the root of the node itself.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Handle {
    base_uri: String,
    path: Vec<String>,
}

impl Handle {
    pub fn new<I, S>(base_uri: impl Into<String>, path: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let base_uri = base_uri.into();
        validate_uri(&base_uri)?;
        let path: Vec<String> = path.into_iter().map(Into::into).collect();
        for name in &path {
            validate_name(name)?;
        }
        Ok(Handle { base_uri, path })
    }

    pub fn root(base_uri: impl Into<String>) -> Result<Self, ModelError> {
        Handle::new(base_uri, Vec::<String>::new())
    }

    pub fn base_uri(&self) -> &str {
        &self.base_uri
    }

    pub fn path(&self) -> &[String] {
        &self.path
    }

    pub fn is_root(&self) -> bool {
        self.path.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.path.len()
    }

    /// Last path segment, i.e. the service's own name.
    pub fn name(&self) -> Option<&str> {
        self.path.last().map(String::as_str)
    }

    pub fn child(&self, name: &str) -> Result<Handle, ModelError> {
        validate_name(name)?;
        let mut path = self.path.clone();
        path.push(name.to_owned());
        Ok(Handle {
            base_uri: self.base_uri.clone(),
            path,
        })
    }

    pub fn parent(&self) -> Option<Handle> {
        if self.path.is_empty() {
            return None;
        }
        Some(Handle {
            base_uri: self.base_uri.clone(),
            path: self.path[..self.path.len() - 1].to_vec(),
        })
    }

    /// The same path re-based onto another node.
    pub fn rebased(&self, base_uri: &str) -> Result<Handle, ModelError> {
        Handle::new(base_uri, self.path.clone())
    }

    /// `<U>base</U><S>name</S>...` with no whitespace between elements.
    pub fn to_wire(&self) -> String {
        let mut out = String::new();
        for el in self.wire_elements() {
            // Names and URIs were validated to contain only XML characters.
            el.write_to(&mut out).expect("validated handle is representable");
        }
        out
    }

    pub(crate) fn wire_elements(&self) -> Vec<Element> {
        let mut els = Vec::with_capacity(self.path.len() + 1);
        els.push(Element::new("U").with_text(self.base_uri.clone()));
        for s in &self.path {
            els.push(Element::new("S").with_text(s.clone()));
        }
        els
    }

    pub fn from_wire(s: &str) -> Result<Handle, ModelError> {
        let nodes = xml::parse_fragment(s).map_err(|e| ModelError::Parse(e.to_string()))?;
        Handle::from_nodes(&nodes)
    }

    /// Parses the `<U>`/`<S>` children of an element such as `Handle` or
    /// `Target`.
    pub(crate) fn from_nodes(nodes: &[XmlNode]) -> Result<Handle, ModelError> {
        let mut iter = nodes.iter().filter(|n| match n {
            XmlNode::Text(t) => !t.trim().is_empty(),
            XmlNode::Element(_) => true,
        });
        let base = match iter.next() {
            Some(XmlNode::Element(e)) if e.name == "U" && !e.has_elements() => e.text(),
            _ => return Err(ModelError::Parse("expected a leading <U> element".into())),
        };
        let mut path = Vec::new();
        for node in iter {
            match node {
                XmlNode::Element(e) if e.name == "S" && !e.has_elements() => path.push(e.text()),
                XmlNode::Element(e) => {
                    return Err(ModelError::Parse(format!("unexpected element <{}>", e.name)))
                }
                XmlNode::Text(t) => return Err(ModelError::Parse(format!("unexpected text {t:?}"))),
            }
        }
        Handle::new(base, path)
    }
}

impl fmt::Display for Handle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_wire())
    }
}

impl FromStr for Handle {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Handle::from_wire(s)
    }
}

impl Serialize for Handle {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_wire())
    }
}

impl<'de> Deserialize<'de> for Handle {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Handle::from_wire(&s).map_err(serde::de::Error::custom)
    }
}

/// Service identity. Shared ids mark utility services whose public static
/// metadata must be identical across instances.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServiceId {
    pub id: String,
    pub shared: bool,
}

impl ServiceId {
    pub fn unique(id: impl Into<String>) -> Self {
        ServiceId {
            id: id.into(),
            shared: false,
        }
    }

    pub fn shared(id: impl Into<String>) -> Self {
        ServiceId {
            id: id.into(),
            shared: true,
        }
    }
}

pub(crate) struct ServiceCell {
    pub service: Box<dyn Service>,
    pub data: Option<String>,
}

/// A hosted service instance with its nested children.
pub struct ServiceNode {
    sid: ServiceId,
    pub(crate) info: ServiceInfo,
    children: IndexMap<String, ServiceNode>,
    permanent_links: IndexSet<Handle>,
    associations: IndexSet<String>,
    methods: MethodTable,
    pub(crate) builtin_get_data: bool,
    pub(crate) access: Option<Arc<AccessConfig>>,
    pub(crate) cell: Arc<Mutex<ServiceCell>>,
}

impl fmt::Debug for ServiceNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServiceNode")
            .field("sid", &self.sid)
            .field("class_name", &self.info.class_name)
            .field("children", &self.children.keys().collect::<Vec<_>>())
            .field("permanent_links", &self.permanent_links)
            .field("associations", &self.associations)
            .finish()
    }
}

pub const GET_DATA: &str = "getData";

impl ServiceNode {
    pub fn new(sid: ServiceId, info: ServiceInfo, service: Box<dyn Service>) -> Self {
        let mut methods: MethodTable = service.methods().into_iter().collect();
        let builtin_get_data = !methods.contains(GET_DATA);
        if builtin_get_data {
            methods.insert(MethodDescriptor::new(GET_DATA, &[], TypeTag::Str));
        }
        ServiceNode {
            sid,
            info,
            children: IndexMap::new(),
            permanent_links: IndexSet::new(),
            associations: IndexSet::new(),
            methods,
            builtin_get_data,
            access: None,
            cell: Arc::new(Mutex::new(ServiceCell {
                service,
                data: None,
            })),
        }
    }

    pub fn sid(&self) -> &ServiceId {
        &self.sid
    }

    pub fn info(&self) -> &ServiceInfo {
        &self.info
    }

    pub fn class_name(&self) -> &str {
        &self.info.class_name
    }

    pub fn children(&self) -> impl Iterator<Item = (&str, &ServiceNode)> {
        self.children.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn child(&self, name: &str) -> Option<&ServiceNode> {
        self.children.get(name)
    }

    pub fn permanent_links(&self) -> impl Iterator<Item = &Handle> {
        self.permanent_links.iter()
    }

    pub fn associations(&self) -> impl Iterator<Item = &str> {
        self.associations.iter().map(String::as_str)
    }

    pub fn methods(&self) -> &MethodTable {
        &self.methods
    }

    pub(crate) fn methods_mut(&mut self) -> &mut MethodTable {
        &mut self.methods
    }

    pub fn access(&self) -> Option<&Arc<AccessConfig>> {
        self.access.as_ref()
    }

    pub fn data(&self) -> Option<String> {
        self.cell.lock().data.clone()
    }
}

/// The tree of services hosted by one node.
pub struct Network {
    base_uri: String,
    services: IndexMap<String, ServiceNode>,
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network")
            .field("base_uri", &self.base_uri)
            .field("services", &self.services.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Network {
    pub fn new(base_uri: impl Into<String>) -> Result<Self, ModelError> {
        let base_uri = base_uri.into();
        validate_uri(&base_uri)?;
        Ok(Network {
            base_uri,
            services: IndexMap::new(),
        })
    }

    pub fn base_uri(&self) -> &str {
        &self.base_uri
    }

    pub fn root_handle(&self) -> Handle {
        Handle {
            base_uri: self.base_uri.clone(),
            path: Vec::new(),
        }
    }

    fn check_local(&self, h: &Handle) -> Result<(), ModelError> {
        if h.base_uri != self.base_uri {
            return Err(ModelError::ForeignNode {
                expected: self.base_uri.clone(),
                found: h.base_uri.clone(),
            });
        }
        Ok(())
    }

    fn children_of_mut(&mut self, parent: &Handle) -> Option<&mut IndexMap<String, ServiceNode>> {
        let mut level = &mut self.services;
        for name in &parent.path {
            level = &mut level.get_mut(name)?.children;
        }
        Some(level)
    }

    pub fn add_nested(
        &mut self,
        parent: &Handle,
        name: &str,
        node: ServiceNode,
    ) -> Result<Handle, ModelError> {
        self.check_local(parent)?;
        validate_name(name)?;
        let children = self
            .children_of_mut(parent)
            .ok_or_else(|| ModelError::UnknownParent(parent.clone()))?;
        if children.contains_key(name) {
            return Err(ModelError::DuplicateChildName(name.to_owned()));
        }
        children.insert(name.to_owned(), node);
        parent.child(name)
    }

    pub fn resolve(&self, h: &Handle) -> Result<&ServiceNode, ModelError> {
        self.check_local(h)?;
        let unknown = || ModelError::UnknownService(h.clone());
        let (first, rest) = h.path.split_first().ok_or_else(unknown)?;
        let mut node = self.services.get(first).ok_or_else(unknown)?;
        for name in rest {
            node = node.children.get(name).ok_or_else(unknown)?;
        }
        Ok(node)
    }

    pub fn resolve_mut(&mut self, h: &Handle) -> Result<&mut ServiceNode, ModelError> {
        self.check_local(h)?;
        let unknown = || ModelError::UnknownService(h.clone());
        let (first, rest) = h.path.split_first().ok_or_else(unknown)?;
        let mut node = self.services.get_mut(first).ok_or_else(unknown)?;
        for name in rest {
            node = node.children.get_mut(name).ok_or_else(unknown)?;
        }
        Ok(node)
    }

    pub fn contains(&self, h: &Handle) -> bool {
        self.resolve(h).is_ok()
    }

    /// Adds (`create`) or removes a directed permanent link `a -> b`. Both
    /// operations are idempotent.
    pub fn link_permanent(&mut self, a: &Handle, b: &Handle, create: bool) -> Result<(), ModelError> {
        if a.base_uri != b.base_uri {
            return Err(ModelError::CrossNetworkPermanentLink {
                from: a.base_uri.clone(),
                to: b.base_uri.clone(),
            });
        }
        self.resolve(b)?;
        let source = self.resolve_mut(a)?;
        if create {
            source.permanent_links.insert(b.clone());
        } else {
            source.permanent_links.shift_remove(b);
        }
        Ok(())
    }

    pub fn add_association(&mut self, s: &Handle, uri: &str) -> Result<(), ModelError> {
        validate_uri(uri)?;
        let node = self.resolve_mut(s)?;
        node.associations.insert(uri.to_owned());
        Ok(())
    }

    pub fn top_level(&self) -> impl Iterator<Item = (&str, &ServiceNode)> {
        self.services.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Children of `h`; the root handle yields the top-level services.
    pub fn children_of(&self, h: &Handle) -> Result<Vec<(Handle, &ServiceNode)>, ModelError> {
        let level: Box<dyn Iterator<Item = (&String, &ServiceNode)>> = if h.is_root() {
            self.check_local(h)?;
            Box::new(self.services.iter())
        } else {
            Box::new(self.resolve(h)?.children.iter())
        };
        level
            .map(|(name, node)| Ok((h.child(name)?, node)))
            .collect()
    }

    /// Depth-first pre-order walk over every service.
    pub fn walk(&self, mut visit: impl FnMut(&Handle, &ServiceNode)) {
        fn go(
            h: &Handle,
            level: &IndexMap<String, ServiceNode>,
            visit: &mut dyn FnMut(&Handle, &ServiceNode),
        ) {
            for (name, node) in level {
                let mut path = h.path.clone();
                path.push(name.clone());
                let child = Handle {
                    base_uri: h.base_uri.clone(),
                    path,
                };
                visit(&child, node);
                go(&child, &node.children, visit);
            }
        }
        go(&self.root_handle(), &self.services, &mut visit);
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        self.walk(|_, _| n += 1);
        n
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::Inert;

    const BASE: &str = "http://1234.5.6.7:8888";

    fn node(id: &str) -> ServiceNode {
        ServiceNode::new(
            ServiceId::unique(id),
            ServiceInfo::new("test", "Inert"),
            Box::new(Inert),
        )
    }

    fn h(path: &[&str]) -> Handle {
        Handle::new(BASE, path.iter().copied()).unwrap()
    }

    #[test]
    fn wire_form_matches_path_example() {
        assert_eq!(
            h(&["Service1", "Service2"]).to_wire(),
            "<U>http://1234.5.6.7:8888</U><S>Service1</S><S>Service2</S>"
        );
        assert_eq!(h(&["Service1"]).to_wire(), "<U>http://1234.5.6.7:8888</U><S>Service1</S>");
    }

    #[test]
    fn wire_parse_errors() {
        assert!(matches!(Handle::from_wire("<S>Service1</S>"), Err(ModelError::Parse(_))));
        assert!(matches!(Handle::from_wire("<U>http://x</U><X>a</X>"), Err(ModelError::Parse(_))));
        assert!(Handle::from_wire("<U>http://x</U><S>a").is_err());
        assert!(matches!(Handle::from_wire("<U>not a uri</U>"), Err(ModelError::MalformedUri(_))));
    }

    #[test]
    fn ampersands_in_uris_are_escaped_on_the_wire() {
        let handle = Handle::new("http://n:1/?a=1&b=2", ["x"]).unwrap();
        assert_eq!(handle.to_wire(), "<U>http://n:1/?a=1&amp;b=2</U><S>x</S>");
        assert_eq!(Handle::from_wire(&handle.to_wire()).unwrap(), handle);
    }

    #[test]
    fn add_nested_builds_paths() {
        let mut net = Network::new(BASE).unwrap();
        let s1 = net.add_nested(&net.root_handle(), "Service1", node("a")).unwrap();
        assert_eq!(s1.depth(), 1);
        let s2 = net.add_nested(&s1, "Service2", node("b")).unwrap();
        assert_eq!(s2, h(&["Service1", "Service2"]));
        assert_eq!(net.resolve(&s2).unwrap().sid().id, "b");
        assert_eq!(
            net.add_nested(&s1, "Service2", node("c")).unwrap_err(),
            ModelError::DuplicateChildName("Service2".into())
        );
        assert!(matches!(
            net.add_nested(&h(&["Nope"]), "x", node("d")),
            Err(ModelError::UnknownParent(_))
        ));
        assert!(matches!(
            net.add_nested(&s1, "a/b", node("d")),
            Err(ModelError::InvalidName(_))
        ));
    }

    #[test]
    fn resolve_errors() {
        let net = Network::new(BASE).unwrap();
        assert!(matches!(net.resolve(&h(&["NoSuch"])), Err(ModelError::UnknownService(_))));
        let foreign = Handle::new("http://other:1", ["x"]).unwrap();
        assert!(matches!(net.resolve(&foreign), Err(ModelError::ForeignNode { .. })));
    }

    #[test]
    fn permanent_links_are_local_and_idempotent() {
        let mut net = Network::new(BASE).unwrap();
        let root = net.root_handle();
        let a = net.add_nested(&root, "A", node("a")).unwrap();
        let b = net.add_nested(&root, "B", node("b")).unwrap();
        net.link_permanent(&a, &b, true).unwrap();
        net.link_permanent(&a, &b, true).unwrap();
        assert_eq!(net.resolve(&a).unwrap().permanent_links().collect::<Vec<_>>(), vec![&b]);
        // directed
        assert_eq!(net.resolve(&b).unwrap().permanent_links().count(), 0);
        net.link_permanent(&a, &b, false).unwrap();
        net.link_permanent(&a, &b, false).unwrap();
        assert_eq!(net.resolve(&a).unwrap().permanent_links().count(), 0);

        let remote = Handle::new("http://elsewhere:9", ["B"]).unwrap();
        assert!(matches!(
            net.link_permanent(&a, &remote, true),
            Err(ModelError::CrossNetworkPermanentLink { .. })
        ));
        assert!(matches!(
            net.link_permanent(&a, &h(&["Ghost"]), true),
            Err(ModelError::UnknownService(_))
        ));
    }

    #[test]
    fn associations_are_an_ordered_set() {
        let mut net = Network::new(BASE).unwrap();
        let a = net.add_nested(&net.root_handle(), "A", node("a")).unwrap();
        net.add_association(&a, "http://remote.example:8080").unwrap();
        net.add_association(&a, "urn:service:z").unwrap();
        net.add_association(&a, "http://remote.example:8080").unwrap();
        assert_eq!(
            net.resolve(&a).unwrap().associations().collect::<Vec<_>>(),
            vec!["http://remote.example:8080", "urn:service:z"]
        );
        assert!(matches!(
            net.add_association(&a, "not a uri"),
            Err(ModelError::MalformedUri(_))
        ));
    }

    #[test]
    fn uri_validation() {
        for ok in ["http://1234.5.6.7:8888", "urn:x", "sim://experiment", "a+b-c.d:x"] {
            validate_uri(ok).unwrap();
        }
        for bad in ["", "nocolon", "1http://x", "http:", "http://a b", "http://<x>", ":x"] {
            assert!(validate_uri(bad).is_err(), "{bad}");
        }
    }
}
