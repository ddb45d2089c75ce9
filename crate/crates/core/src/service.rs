//! The service abstraction: what a hosted service exposes to the base server.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::model::Handle;
use crate::wire::{ParamValue, Value};

/// Parameter / return type tags used in method and constructor descriptors.
/// The tag strings match the element names of the structured encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TypeTag {
    #[serde(rename = "i")]
    Int,
    #[serde(rename = "f")]
    Float,
    #[serde(rename = "b")]
    Bool,
    #[serde(rename = "s")]
    Str,
    #[serde(rename = "l")]
    List,
    #[serde(rename = "m")]
    Map,
    #[serde(rename = "o")]
    Opaque,
    #[serde(rename = "any")]
    Any,
    #[serde(rename = "void")]
    Void,
}

impl TypeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeTag::Int => "i",
            TypeTag::Float => "f",
            TypeTag::Bool => "b",
            TypeTag::Str => "s",
            TypeTag::List => "l",
            TypeTag::Map => "m",
            TypeTag::Opaque => "o",
            TypeTag::Any => "any",
            TypeTag::Void => "void",
        }
    }

    pub fn parse(s: &str) -> Option<TypeTag> {
        Some(match s {
            "i" => TypeTag::Int,
            "f" => TypeTag::Float,
            "b" => TypeTag::Bool,
            "s" => TypeTag::Str,
            "l" => TypeTag::List,
            "m" => TypeTag::Map,
            "o" => TypeTag::Opaque,
            "any" => TypeTag::Any,
            "void" => TypeTag::Void,
            _ => return None,
        })
    }

    /// Whether `value` is acceptable for a parameter declared with this tag.
    pub fn accepts(self, value: &ParamValue) -> bool {
        match (self, value) {
            (TypeTag::Any, _) => true,
            (TypeTag::Opaque, ParamValue::Opaque(_)) => true,
            (TypeTag::Void, _) => false,
            (tag, ParamValue::Structured(v)) => matches!(
                (tag, v),
                (TypeTag::Int, Value::Int(_))
                    | (TypeTag::Float, Value::Float(_))
                    | (TypeTag::Float, Value::Int(_))
                    | (TypeTag::Bool, Value::Bool(_))
                    | (TypeTag::Str, Value::Str(_))
                    | (TypeTag::List, Value::List(_))
                    | (TypeTag::Map, Value::Map(_))
            ),
            _ => false,
        }
    }
}

impl std::fmt::Display for TypeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodDescriptor {
    pub name: String,
    pub params: Vec<TypeTag>,
    pub returns: TypeTag,
    /// Access group id; `None` while the service runs without an access config.
    pub access_level: Option<String>,
}

impl MethodDescriptor {
    pub fn new(name: impl Into<String>, params: &[TypeTag], returns: TypeTag) -> Self {
        MethodDescriptor {
            name: name.into(),
            params: params.to_vec(),
            returns,
            access_level: None,
        }
    }
}

/// Method name → descriptor, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MethodTable {
    entries: IndexMap<String, MethodDescriptor>,
}

impl MethodTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a descriptor. Returns false (and leaves the table unchanged)
    /// when the name is already present.
    pub fn insert(&mut self, desc: MethodDescriptor) -> bool {
        if self.entries.contains_key(&desc.name) {
            return false;
        }
        self.entries.insert(desc.name.clone(), desc);
        true
    }

    pub fn get(&self, name: &str) -> Option<&MethodDescriptor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut MethodDescriptor> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MethodDescriptor> {
        self.entries.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl FromIterator<MethodDescriptor> for MethodTable {
    fn from_iter<I: IntoIterator<Item = MethodDescriptor>>(iter: I) -> Self {
        let mut table = MethodTable::new();
        for d in iter {
            table.insert(d);
        }
        table
    }
}

/// Per-call view of the hosting node handed to a service method.
pub struct CallContext<'a> {
    pub handle: &'a Handle,
    /// Initial data installed by an admin document, if any.
    pub data: &'a mut Option<String>,
}

/// A hosted service. Only the base server invokes it; services never listen
/// on their own.
pub trait Service: Send {
    fn methods(&self) -> Vec<MethodDescriptor>;

    fn invoke(
        &mut self,
        ctx: &mut CallContext<'_>,
        method: &str,
        params: &[ParamValue],
    ) -> Result<ParamValue, String>;
}

/// A service with no methods of its own, used for containers.
#[derive(Debug, Default)]
pub struct Inert;

impl Service for Inert {
    fn methods(&self) -> Vec<MethodDescriptor> {
        Vec::new()
    }

    fn invoke(
        &mut self,
        _ctx: &mut CallContext<'_>,
        method: &str,
        _params: &[ParamValue],
    ) -> Result<ParamValue, String> {
        Err(format!("no method {method}"))
    }
}
