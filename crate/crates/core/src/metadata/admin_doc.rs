//! Admin documents: XML supplied at registration (or later) that adds
//! metadata, access groups, autonomic managers and initial data to a service.
//!
//! ```xml
//! <Admin_Doc>
//!   <Service_Type>..</Service_Type>
//!   <Description>..</Description>
//!   <Access>
//!     <Group id="g1" level="1" password="..">      <!-- or password_hash="hex" -->
//!       <Exclude>g0</Exclude>
//!     </Group>
//!     <Method name="echo" group="g1"/>
//!   </Access>
//!   <Autonomic_Manager>threshold</Autonomic_Manager>
//!   <Extra_Meta>..</Extra_Meta>
//!   <Private_Meta>..</Private_Meta>
//!   <Data>..</Data>
//! </Admin_Doc>
//! ```
//!
//! Every child is optional; all but `Autonomic_Manager` may appear once.

use crate::access::{AccessConfig, AccessGroup, PasswordHash};
use crate::xml::{self, Element, XmlFragment, XmlNode};

use super::MetadataError;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AdminDoc {
    pub service_type: Option<String>,
    pub description: Option<XmlFragment>,
    pub access: Option<AccessConfig>,
    pub autonomic_managers: Vec<String>,
    pub extra_meta: Option<XmlFragment>,
    pub private_meta: Option<XmlFragment>,
    /// Stored verbatim as the service's data and returned by `getData`.
    pub data: Option<XmlFragment>,
}

fn invalid(msg: impl Into<String>) -> MetadataError {
    MetadataError::InvalidAdminDoc(msg.into())
}

fn once<T>(slot: &mut Option<T>, name: &str, value: T) -> Result<(), MetadataError> {
    if slot.replace(value).is_some() {
        return Err(invalid(format!("{name} given twice")));
    }
    Ok(())
}

impl AdminDoc {
    pub fn parse(s: &str) -> Result<AdminDoc, MetadataError> {
        let root = xml::parse_document(s).map_err(|e| invalid(e.to_string()))?;
        if root.name != "Admin_Doc" {
            return Err(invalid(format!("root element must be Admin_Doc, found {}", root.name)));
        }
        let frag = |el: &Element| XmlFragment::from_nodes(&el.children).map_err(|e| invalid(e.to_string()));
        let mut doc = AdminDoc::default();
        for el in root.elements() {
            match el.name.as_str() {
                "Service_Type" => once(&mut doc.service_type, "Service_Type", el.text())?,
                "Description" => once(&mut doc.description, "Description", frag(el)?)?,
                "Access" => once(&mut doc.access, "Access", parse_access(el)?)?,
                "Autonomic_Manager" => doc.autonomic_managers.push(el.text().trim().to_owned()),
                "Extra_Meta" => once(&mut doc.extra_meta, "Extra_Meta", frag(el)?)?,
                "Private_Meta" => once(&mut doc.private_meta, "Private_Meta", frag(el)?)?,
                "Data" => once(&mut doc.data, "Data", frag(el)?)?,
                other => return Err(invalid(format!("unexpected element {other}"))),
            }
        }
        Ok(doc)
    }

    pub fn to_xml(&self) -> Result<String, MetadataError> {
        let mut root = Element::new("Admin_Doc");
        let frag = |name: &str, f: &XmlFragment| {
            let mut el = Element::new(name);
            el.children = f.nodes();
            el
        };
        if let Some(t) = &self.service_type {
            root.push(Element::new("Service_Type").with_text(t.clone()));
        }
        if let Some(d) = &self.description {
            root.push(frag("Description", d));
        }
        if let Some(access) = &self.access {
            let mut el = Element::new("Access");
            for g in access.groups() {
                let mut group = Element::new("Group")
                    .with_attr("id", g.group_id.clone())
                    .with_attr("level", g.level.to_string())
                    .with_attr("password_hash", g.password_hash.to_hex());
                for ex in &g.excluded {
                    group.push(Element::new("Exclude").with_text(ex.clone()));
                }
                el.push(group);
            }
            for (m, g) in access.method_groups() {
                el.push(Element::new("Method").with_attr("name", m).with_attr("group", g));
            }
            root.push(el);
        }
        for m in &self.autonomic_managers {
            root.push(Element::new("Autonomic_Manager").with_text(m.clone()));
        }
        if let Some(x) = &self.extra_meta {
            root.push(frag("Extra_Meta", x));
        }
        if let Some(x) = &self.private_meta {
            root.push(frag("Private_Meta", x));
        }
        if let Some(x) = &self.data {
            root.push(frag("Data", x));
        }
        root.to_xml().map_err(|e| invalid(e.to_string()))
    }
}

fn parse_access(el: &Element) -> Result<AccessConfig, MetadataError> {
    let mut groups = Vec::new();
    let mut methods = Vec::new();
    for child in el.elements() {
        match child.name.as_str() {
            "Group" => {
                let id = child.attr("id").ok_or_else(|| invalid("Group without id"))?;
                let level = child
                    .attr("level")
                    .ok_or_else(|| invalid(format!("group {id:?} without level")))?
                    .parse::<u32>()
                    .map_err(|e| invalid(format!("group {id:?} level: {e}")))?;
                let password_hash = match (child.attr("password"), child.attr("password_hash")) {
                    (Some(p), None) => PasswordHash::of(p),
                    (None, Some(h)) => PasswordHash::from_hex(h).map_err(|e| invalid(e.to_string()))?,
                    _ => return Err(invalid(format!("group {id:?} needs exactly one of password, password_hash"))),
                };
                let mut excluded = std::collections::BTreeSet::new();
                for ex in child.elements() {
                    if ex.name != "Exclude" {
                        return Err(invalid(format!("unexpected {} in Group", ex.name)));
                    }
                    excluded.insert(ex.text().trim().to_owned());
                }
                groups.push(AccessGroup {
                    group_id: id.to_owned(),
                    level,
                    password_hash,
                    excluded,
                });
            }
            "Method" => {
                let name = child.attr("name").ok_or_else(|| invalid("Method without name"))?;
                let group = child.attr("group").ok_or_else(|| invalid(format!("method {name:?} without group")))?;
                methods.push((name.to_owned(), group.to_owned()));
            }
            other => return Err(invalid(format!("unexpected {other} in Access"))),
        }
    }
    if el.children.iter().any(|n| matches!(n, XmlNode::Text(t) if !t.trim().is_empty())) {
        return Err(invalid("stray text in Access"));
    }
    AccessConfig::new(groups, methods).map_err(|e| invalid(e.to_string()))
}
