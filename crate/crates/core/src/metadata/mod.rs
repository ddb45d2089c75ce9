//! Service metadata documents.
//!
//! A document follows the `Service_Meta` layout shipped in
//! `schemas/service_meta.xsd`: `Service_Type`, `Description`, `Other_Meta`,
//! `Class_Name`, `Handle` (`U` + `S*`), any number of `Jar_File`, then
//! optional `Constructors`, `Methods`, `Child_Service_Meta` and
//! `Link_Service_Meta`, with an optional `uuid` attribute. The content models
//! of the four optional container elements are defined by this crate.
//!
//! Private metadata is never part of a serialized document.

mod admin_doc;

pub use admin_doc::AdminDoc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Handle, ModelError, Network, ServiceId, ServiceNode};
use crate::service::{MethodDescriptor, MethodTable, TypeTag};
use crate::xml::{self, Element, XmlError, XmlFragment, XmlNode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetadataError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("invalid admin document: {0}")]
    InvalidAdminDoc(String),
    #[error("shared service id {id:?} already has different public static metadata")]
    SharedMetadataConflict { id: String },
}

impl From<XmlError> for MetadataError {
    fn from(e: XmlError) -> Self {
        MetadataError::SchemaViolation(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub tag: TypeTag,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, tag: TypeTag) -> Self {
        ParamSpec {
            name: name.into(),
            tag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConstructorDescriptor {
    pub params: Vec<ParamSpec>,
}

impl ConstructorDescriptor {
    pub fn new(params: Vec<ParamSpec>) -> Self {
        ConstructorDescriptor { params }
    }

    pub fn tags(&self) -> Vec<TypeTag> {
        self.params.iter().map(|p| p.tag).collect()
    }
}

/// The per-service metadata that is not derived from the tree: what the
/// service was created from plus whatever admin documents added.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ServiceInfo {
    pub service_type: String,
    pub description: XmlFragment,
    pub other_meta: XmlFragment,
    pub private_meta: XmlFragment,
    pub class_name: String,
    pub archive_uris: Vec<String>,
    pub constructors: Vec<ConstructorDescriptor>,
    pub uuid: Option<String>,
    pub autonomic_managers: Vec<String>,
}

impl ServiceInfo {
    pub fn new(service_type: impl Into<String>, class_name: impl Into<String>) -> Self {
        ServiceInfo {
            service_type: service_type.into(),
            class_name: class_name.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataDoc {
    pub service_type: String,
    pub description: XmlFragment,
    pub other_meta: XmlFragment,
    pub class_name: String,
    pub handle: Handle,
    /// Kept verbatim as `Jar_File` elements; never fetched.
    pub archive_uris: Vec<String>,
    pub constructors: Vec<ConstructorDescriptor>,
    pub methods: Vec<MethodDescriptor>,
    pub child_meta: Vec<MetadataDoc>,
    pub link_meta: Vec<MetadataDoc>,
    pub uuid: Option<String>,
}

impl MetadataDoc {
    /// A document holding only the mandatory fields.
    pub fn minimal(service_type: impl Into<String>, class_name: impl Into<String>, handle: Handle) -> Self {
        MetadataDoc {
            service_type: service_type.into(),
            description: XmlFragment::default(),
            other_meta: XmlFragment::default(),
            class_name: class_name.into(),
            handle,
            archive_uris: Vec::new(),
            constructors: Vec::new(),
            methods: Vec::new(),
            child_meta: Vec::new(),
            link_meta: Vec::new(),
            uuid: None,
        }
    }

    pub fn method_table(&self) -> MethodTable {
        self.methods.iter().cloned().collect()
    }

    /// The `Service_Id` element recorded in `Other_Meta`, if present.
    pub fn service_id(&self) -> Option<ServiceId> {
        self.other_meta.nodes().into_iter().find_map(|n| match n {
            XmlNode::Element(e) if e.name == "Service_Id" => Some(ServiceId {
                id: e.text(),
                shared: e.attr("shared") == Some("true"),
            }),
            _ => None,
        })
    }

    pub fn to_element(&self) -> Element {
        let mut root = Element::new("Service_Meta");
        if let Some(u) = &self.uuid {
            root = root.with_attr("uuid", u.clone());
        }
        self.push_static(&mut root, true);
        let mut children = Element::new("Child_Service_Meta");
        for c in &self.child_meta {
            children.push(c.to_element());
        }
        root.push(children);
        let mut links = Element::new("Link_Service_Meta");
        for l in &self.link_meta {
            links.push(l.to_element());
        }
        root.push(links);
        root
    }

    fn push_static(&self, root: &mut Element, with_handle: bool) {
        root.push(Element::new("Service_Type").with_text(self.service_type.clone()));
        root.push(fragment_element("Description", &self.description));
        root.push(fragment_element("Other_Meta", &self.other_meta));
        root.push(Element::new("Class_Name").with_text(self.class_name.clone()));
        if with_handle {
            let mut h = Element::new("Handle");
            for part in self.handle.wire_elements() {
                h.push(part);
            }
            root.push(h);
        }
        for uri in &self.archive_uris {
            root.push(Element::new("Jar_File").with_text(uri.clone()));
        }
        let mut ctors = Element::new("Constructors");
        for c in &self.constructors {
            let mut el = Element::new("Constructor");
            for p in &c.params {
                el.push(
                    Element::new("Param")
                        .with_attr("name", p.name.clone())
                        .with_attr("type", p.tag.as_str()),
                );
            }
            ctors.push(el);
        }
        root.push(ctors);
        let mut methods = Element::new("Methods");
        for m in &self.methods {
            let mut el = Element::new("Method")
                .with_attr("name", m.name.clone())
                .with_attr("returns", m.returns.as_str());
            if let Some(level) = &m.access_level {
                el = el.with_attr("level", level.clone());
            }
            for p in &m.params {
                el.push(Element::new("Param").with_attr("type", p.as_str()));
            }
            methods.push(el);
        }
        root.push(methods);
    }

    pub fn to_xml(&self) -> Result<String, MetadataError> {
        Ok(self.to_element().to_xml()?)
    }

    /// The public, position-independent part of the document: everything
    /// except the handle, uuid, children and links. Services sharing an id
    /// must agree on this byte for byte.
    pub fn public_static_form(&self) -> Result<String, MetadataError> {
        let mut root = Element::new("Service_Meta");
        self.push_static(&mut root, false);
        Ok(root.to_xml()?)
    }

    pub fn from_xml(s: &str) -> Result<MetadataDoc, MetadataError> {
        let root = xml::parse_document(s)?;
        MetadataDoc::from_element(&root)
    }

    pub fn from_element(root: &Element) -> Result<MetadataDoc, MetadataError> {
        let violation = |m: String| MetadataError::SchemaViolation(m);
        if root.name != "Service_Meta" {
            return Err(violation(format!("root element must be Service_Meta, found {}", root.name)));
        }
        let mut uuid = None;
        for (k, v) in &root.attrs {
            match k.as_str() {
                "uuid" => uuid = Some(v.clone()),
                other => return Err(violation(format!("unexpected attribute {other:?} on Service_Meta"))),
            }
        }
        if root.children.iter().any(|n| matches!(n, XmlNode::Text(t) if !t.trim().is_empty())) {
            return Err(violation("stray text in Service_Meta".into()));
        }
        let mut it = root.elements().peekable();
        let mut required = |name: &str| -> Result<&Element, MetadataError> {
            it.next_if(|e| e.name == name)
                .ok_or_else(|| violation(format!("missing required element {name}")))
        };
        let service_type = leaf(required("Service_Type")?)?;
        let description = XmlFragment::from_nodes(&required("Description")?.children)?;
        let other_meta = XmlFragment::from_nodes(&required("Other_Meta")?.children)?;
        let class_name = leaf(required("Class_Name")?)?;
        let handle_el = required("Handle")?;
        let handle = Handle::from_nodes(&handle_el.children)
            .map_err(|e| violation(format!("bad Handle: {e}")))?;
        let mut archive_uris = Vec::new();
        while let Some(el) = it.next_if(|e| e.name == "Jar_File") {
            archive_uris.push(leaf(el)?);
        }
        let mut constructors = Vec::new();
        if let Some(el) = it.next_if(|e| e.name == "Constructors") {
            for c in el.elements() {
                if c.name != "Constructor" {
                    return Err(violation(format!("unexpected {} in Constructors", c.name)));
                }
                let params = c
                    .elements()
                    .map(|p| {
                        if p.name != "Param" {
                            return Err(violation(format!("unexpected {} in Constructor", p.name)));
                        }
                        Ok(ParamSpec {
                            name: p.attr("name").unwrap_or_default().to_owned(),
                            tag: tag_attr(p, "type")?,
                        })
                    })
                    .collect::<Result<_, _>>()?;
                constructors.push(ConstructorDescriptor { params });
            }
        }
        let mut methods = Vec::new();
        if let Some(el) = it.next_if(|e| e.name == "Methods") {
            for m in el.elements() {
                if m.name != "Method" {
                    return Err(violation(format!("unexpected {} in Methods", m.name)));
                }
                let name = m
                    .attr("name")
                    .ok_or_else(|| violation("Method without name".into()))?
                    .to_owned();
                let params = m
                    .elements()
                    .map(|p| {
                        if p.name != "Param" {
                            return Err(violation(format!("unexpected {} in Method", p.name)));
                        }
                        tag_attr(p, "type")
                    })
                    .collect::<Result<_, _>>()?;
                methods.push(MethodDescriptor {
                    name,
                    params,
                    returns: tag_attr(m, "returns")?,
                    access_level: m.attr("level").map(str::to_owned),
                });
            }
        }
        let nested = |el: &Element| -> Result<Vec<MetadataDoc>, MetadataError> {
            el.elements().map(MetadataDoc::from_element).collect()
        };
        let child_meta = match it.next_if(|e| e.name == "Child_Service_Meta") {
            Some(el) => nested(el)?,
            None => Vec::new(),
        };
        let link_meta = match it.next_if(|e| e.name == "Link_Service_Meta") {
            Some(el) => nested(el)?,
            None => Vec::new(),
        };
        if let Some(extra) = it.next() {
            return Err(violation(format!("unexpected or out-of-order element {}", extra.name)));
        }
        Ok(MetadataDoc {
            service_type,
            description,
            other_meta,
            class_name,
            handle,
            archive_uris,
            constructors,
            methods,
            child_meta,
            link_meta,
            uuid,
        })
    }
}

fn fragment_element(name: &str, frag: &XmlFragment) -> Element {
    let mut el = Element::new(name);
    el.children = frag.nodes();
    el
}

fn leaf(el: &Element) -> Result<String, MetadataError> {
    if el.has_elements() {
        return Err(MetadataError::SchemaViolation(format!("{} must hold only text", el.name)));
    }
    Ok(el.text())
}

fn tag_attr(el: &Element, attr: &str) -> Result<TypeTag, MetadataError> {
    let raw = el
        .attr(attr)
        .ok_or_else(|| MetadataError::SchemaViolation(format!("{} without {attr}", el.name)))?;
    TypeTag::parse(raw).ok_or_else(|| MetadataError::SchemaViolation(format!("unknown type tag {raw:?}")))
}

fn service_id_element(sid: &ServiceId) -> Element {
    Element::new("Service_Id")
        .with_attr("shared", if sid.shared { "true" } else { "false" })
        .with_text(sid.id.clone())
}

fn static_doc(handle: &Handle, node: &ServiceNode) -> MetadataDoc {
    doc_from_parts(handle, node.sid(), node.info(), node.methods())
}

/// A childless, linkless document from registration parts.
pub(crate) fn doc_from_parts(handle: &Handle, sid: &ServiceId, info: &ServiceInfo, methods: &MethodTable) -> MetadataDoc {
    let mut other = vec![XmlNode::Element(service_id_element(sid))];
    other.extend(info.other_meta.nodes());
    MetadataDoc {
        service_type: info.service_type.clone(),
        description: info.description.clone(),
        other_meta: XmlFragment::from_nodes(&other).unwrap_or_default(),
        class_name: info.class_name.clone(),
        handle: handle.clone(),
        archive_uris: info.archive_uris.clone(),
        constructors: info.constructors.clone(),
        methods: methods.iter().cloned().collect(),
        child_meta: Vec::new(),
        link_meta: Vec::new(),
        uuid: info.uuid.clone(),
    }
}

/// Builds the document for the service at `h` from its registration info and
/// its current position in the tree. Children are described recursively;
/// permanent link targets get a shallow document (no children or links).
pub fn generate_metadata(net: &Network, h: &Handle) -> Result<MetadataDoc, ModelError> {
    let node = net.resolve(h)?;
    Ok(generate_for(net, h, node))
}

pub(crate) fn generate_for(net: &Network, h: &Handle, node: &ServiceNode) -> MetadataDoc {
    let mut doc = static_doc(h, node);
    for (name, child) in node.children() {
        if let Ok(ch) = h.child(name) {
            doc.child_meta.push(generate_for(net, &ch, child));
        }
    }
    for target in node.permanent_links() {
        if let Ok(t) = net.resolve(target) {
            doc.link_meta.push(static_doc(target, t));
        }
    }
    doc
}

/// Documents for every top-level service, each with its subtree.
pub fn generate_network_metadata(net: &Network) -> Vec<MetadataDoc> {
    let root = net.root_handle();
    net.top_level()
        .filter_map(|(name, node)| Some(generate_for(net, &root.child(name).ok()?, node)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MutationTarget {
    /// Metadata stored for the service itself.
    This,
    /// Metadata stored on its behalf by another (parent) service.
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Volatility {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MutationRequest {
    pub target: MutationTarget,
    pub visibility: Visibility,
    pub volatility: Volatility,
    pub sid: ServiceId,
}

/// Whether metadata of the requested kind may be held. The only forbidden
/// combination is dynamic public metadata stored by a shared-id service for
/// itself: shared ids promise identical public metadata across instances.
pub fn check_mutation_allowed(req: &MutationRequest) -> bool {
    !(req.sid.shared
        && req.volatility == Volatility::Dynamic
        && req.visibility == Visibility::Public
        && req.target == MutationTarget::This)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn handle() -> Handle {
        Handle::new("http://1234.5.6.7:8888", ["Service1", "Service2"]).unwrap()
    }

    fn sample() -> MetadataDoc {
        let mut doc = MetadataDoc::minimal("query engine", "Echo", handle());
        doc.description = XmlFragment::parse("<p>Answers <b>queries</b></p>").unwrap();
        doc.other_meta = XmlFragment::parse("<Service_Id shared=\"false\">x</Service_Id>").unwrap();
        doc.archive_uris = vec!["http://repo.example/echo.jar".into()];
        doc.constructors = vec![
            ConstructorDescriptor::default(),
            ConstructorDescriptor::new(vec![ParamSpec::new("id", TypeTag::Str)]),
        ];
        doc.methods = vec![MethodDescriptor {
            access_level: Some("g1".into()),
            ..MethodDescriptor::new("echo", &[TypeTag::Any], TypeTag::Any)
        }];
        doc.child_meta = vec![MetadataDoc::minimal("leaf", "Inert", handle().child("Leaf").unwrap())];
        doc.uuid = Some("0f8fad5b-d9cb-469f-a165-70867728950e".into());
        doc
    }

    #[test]
    fn round_trip() {
        let doc = sample();
        let xml = doc.to_xml().unwrap();
        assert!(xml.contains("<Handle><U>http://1234.5.6.7:8888</U><S>Service1</S><S>Service2</S></Handle>"));
        assert_eq!(MetadataDoc::from_xml(&xml).unwrap(), doc);
        assert_eq!(doc.service_id(), Some(ServiceId::unique("x")));
    }

    #[test]
    fn minimal_fixture_parses() {
        let doc = MetadataDoc::from_xml(include_str!("../../fixtures/minimal_meta.xml")).unwrap();
        assert_eq!(doc.service_type, "query engine");
        assert_eq!(doc.class_name, "Echo");
        assert!(doc.methods.is_empty() && doc.child_meta.is_empty());
        assert_eq!(doc.handle.path(), &["Service1".to_string()]);
    }

    #[test]
    fn missing_service_type_is_a_violation() {
        let xml = sample().to_xml().unwrap();
        let start = xml.find("<Service_Type>").unwrap();
        let end = xml.find("</Service_Type>").unwrap() + "</Service_Type>".len();
        let broken = format!("{}{}", &xml[..start], &xml[end..]);
        assert!(matches!(MetadataDoc::from_xml(&broken), Err(MetadataError::SchemaViolation(_))));
    }

    #[test]
    fn out_of_order_and_unknown_elements_are_violations() {
        let xml = sample().to_xml().unwrap();
        let unknown = xml.replacen("<Constructors>", "<Bogus/><Constructors>", 1);
        assert!(MetadataDoc::from_xml(&unknown).is_err());
        let attr = xml.replacen("<Service_Meta ", "<Service_Meta extra=\"1\" ", 1);
        assert!(MetadataDoc::from_xml(&attr).is_err());
    }

    #[test]
    fn mutation_matrix() {
        let mut denied = Vec::new();
        let mut allowed = 0;
        for shared in [false, true] {
            for volatility in [Volatility::Static, Volatility::Dynamic] {
                for visibility in [Visibility::Public, Visibility::Private] {
                    for target in [MutationTarget::This, MutationTarget::Other] {
                        let req = MutationRequest {
                            target,
                            visibility,
                            volatility,
                            sid: ServiceId { id: "svc".into(), shared },
                        };
                        if check_mutation_allowed(&req) {
                            allowed += 1;
                        } else {
                            denied.push((shared, volatility, visibility, target));
                        }
                    }
                }
            }
        }
        assert_eq!(allowed, 15);
        assert_eq!(denied, vec![(true, Volatility::Dynamic, Visibility::Public, MutationTarget::This)]);
    }
}
