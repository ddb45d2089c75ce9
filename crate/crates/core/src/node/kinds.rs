//! The built-in registry of service kinds, keyed by class name.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::metadata::{ConstructorDescriptor, ParamSpec};
use crate::service::{CallContext, Inert, MethodDescriptor, Service, TypeTag};
use crate::wire::{ParamValue, Value};

pub type Factory = Arc<dyn Fn(&[ParamValue]) -> Result<Box<dyn Service>, String> + Send + Sync>;

/// A constructible service class.
#[derive(Clone)]
pub struct ServiceKind {
    pub class_name: String,
    pub service_type: String,
    pub description: String,
    pub constructors: Vec<ConstructorDescriptor>,
    /// Instances of a kind with a shared id all carry this id.
    pub shared_id: Option<String>,
    factory: Factory,
}

impl std::fmt::Debug for ServiceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceKind")
            .field("class_name", &self.class_name)
            .field("constructors", &self.constructors)
            .field("shared_id", &self.shared_id)
            .finish()
    }
}

impl ServiceKind {
    pub fn new<F>(class_name: &str, service_type: &str, constructors: Vec<ConstructorDescriptor>, factory: F) -> Self
    where
        F: Fn(&[ParamValue]) -> Result<Box<dyn Service>, String> + Send + Sync + 'static,
    {
        ServiceKind {
            class_name: class_name.to_owned(),
            service_type: service_type.to_owned(),
            description: String::new(),
            constructors,
            shared_id: None,
            factory: Arc::new(factory),
        }
    }

    pub fn with_description(mut self, d: &str) -> Self {
        self.description = d.to_owned();
        self
    }

    pub fn with_shared_id(mut self, id: &str) -> Self {
        self.shared_id = Some(id.to_owned());
        self
    }

    /// Whether `args` match one of the declared constructors.
    pub fn accepts_args(&self, args: &[ParamValue]) -> bool {
        self.constructors.iter().any(|c| {
            c.params.len() == args.len() && c.params.iter().zip(args).all(|(p, a)| p.tag.accepts(a))
        })
    }

    pub fn construct(&self, args: &[ParamValue]) -> Result<Box<dyn Service>, String> {
        (self.factory)(args)
    }
}

#[derive(Clone, Default, Debug)]
pub struct KindRegistry {
    kinds: HashMap<String, ServiceKind>,
    aliases: HashMap<String, String>,
}

impl KindRegistry {
    pub fn empty() -> Self {
        KindRegistry::default()
    }

    /// `Echo`, `Auto`, `Group` and `Link`.
    pub fn builtin() -> Self {
        let mut r = KindRegistry::default();
        r.register(echo_kind());
        r.register(auto_kind());
        r.register(
            ServiceKind::new("Group", "group", vec![ConstructorDescriptor::default()], |_| Ok(Box::new(Inert)))
                .with_description("A container for nested services"),
        );
        r.register(
            ServiceKind::new("Link", "link", vec![ConstructorDescriptor::default()], |_| Ok(Box::new(Inert)))
                .with_description("A shared-id marker service")
                .with_shared_id("link"),
        );
        r
    }

    pub fn register(&mut self, kind: ServiceKind) {
        self.kinds.insert(kind.class_name.clone(), kind);
    }

    /// Makes `alias` name the kind registered as `class_name`.
    pub fn alias(&mut self, alias: &str, class_name: &str) -> bool {
        if !self.kinds.contains_key(class_name) {
            return false;
        }
        self.aliases.insert(alias.to_owned(), class_name.to_owned());
        true
    }

    pub fn get(&self, name: &str) -> Option<&ServiceKind> {
        let name = self.aliases.get(name).map(String::as_str).unwrap_or(name);
        self.kinds.get(name)
    }

    pub fn class_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.kinds.keys().map(String::as_str).collect();
        names.sort_unstable();
        names
    }
}

fn arg_i64(args: &[ParamValue], i: usize) -> Result<i64, String> {
    args.get(i)
        .and_then(ParamValue::as_i64)
        .ok_or_else(|| format!("argument {i} must be an integer"))
}

fn arg_str(args: &[ParamValue], i: usize) -> Result<&str, String> {
    args.get(i)
        .and_then(ParamValue::as_str)
        .ok_or_else(|| format!("argument {i} must be a string"))
}

/// Reply value of methods declared `void`.
pub fn void() -> ParamValue {
    ParamValue::Structured(Value::Bool(true))
}

/// Test and demo service: echo, arithmetic and a read-modify-write counter.
#[derive(Debug, Default)]
pub struct Echo {
    count: i64,
}

impl Service for Echo {
    fn methods(&self) -> Vec<MethodDescriptor> {
        use TypeTag::*;
        vec![
            MethodDescriptor::new("echo", &[Any], Any),
            MethodDescriptor::new("add", &[Int, Int], Int),
            MethodDescriptor::new("concat", &[Str, Str], Str),
            MethodDescriptor::new("size", &[Opaque], Int),
            MethodDescriptor::new("increment", &[], Int),
            MethodDescriptor::new("getCount", &[], Int),
            MethodDescriptor::new("fail", &[Str], Void),
        ]
    }

    fn invoke(&mut self, _ctx: &mut CallContext<'_>, method: &str, params: &[ParamValue]) -> Result<ParamValue, String> {
        match method {
            "echo" => Ok(params[0].clone()),
            "add" => arg_i64(params, 0)?
                .checked_add(arg_i64(params, 1)?)
                .map(ParamValue::from)
                .ok_or_else(|| "integer overflow".to_owned()),
            "concat" => Ok(format!("{}{}", arg_str(params, 0)?, arg_str(params, 1)?).into()),
            "size" => Ok((params[0].as_bytes().map_or(0, <[u8]>::len) as i64).into()),
            "increment" => {
                // Deliberately split read and write so unserialized calls would lose updates.
                let seen = self.count;
                std::thread::yield_now();
                self.count = seen + 1;
                Ok(self.count.into())
            }
            "getCount" => Ok(self.count.into()),
            "fail" => Err(arg_str(params, 0)?.to_owned()),
            other => Err(format!("no method {other}")),
        }
    }
}

fn echo_kind() -> ServiceKind {
    ServiceKind::new(
        "Echo",
        "echo",
        vec![
            ConstructorDescriptor::default(),
            ConstructorDescriptor::new(vec![ParamSpec::new("start", TypeTag::Int)]),
        ],
        |args| {
            let count = if args.is_empty() { 0 } else { arg_i64(args, 0)? };
            Ok(Box::new(Echo { count }))
        },
    )
    .with_description("Echoes and counts")
}

/// The default autonomic service: a string id plus a key/quality item store
/// that peers can query.
#[derive(Debug, Default)]
pub struct Auto {
    id: String,
    items: BTreeMap<String, f64>,
}

impl Auto {
    pub fn new(id: impl Into<String>) -> Self {
        Auto {
            id: id.into(),
            items: BTreeMap::new(),
        }
    }
}

impl Service for Auto {
    fn methods(&self) -> Vec<MethodDescriptor> {
        use TypeTag::*;
        vec![
            MethodDescriptor::new("getId", &[], Str),
            MethodDescriptor::new("setId", &[Str], Void),
            MethodDescriptor::new("put", &[Str, Float], Void),
            MethodDescriptor::new("lookup", &[Str], Float),
        ]
    }

    fn invoke(&mut self, _ctx: &mut CallContext<'_>, method: &str, params: &[ParamValue]) -> Result<ParamValue, String> {
        match method {
            "getId" => Ok(self.id.as_str().into()),
            "setId" => {
                self.id = arg_str(params, 0)?.to_owned();
                Ok(void())
            }
            "put" => {
                let q = params[1].as_f64().ok_or("quality must be a number")?;
                self.items.insert(arg_str(params, 0)?.to_owned(), q);
                Ok(void())
            }
            // Absent keys have quality 0.
            "lookup" => Ok(self.items.get(arg_str(params, 0)?).copied().unwrap_or(0.0).into()),
            other => Err(format!("no method {other}")),
        }
    }
}

fn auto_kind() -> ServiceKind {
    ServiceKind::new(
        "Auto",
        "auto",
        vec![ConstructorDescriptor::new(vec![ParamSpec::new("id", TypeTag::Str)])],
        |args| Ok(Box::new(Auto::new(arg_str(args, 0)?))),
    )
    .with_description("Autonomic service with a string id")
}
