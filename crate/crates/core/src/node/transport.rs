//! How packets reach other nodes. The HTTP implementation lives in the
//! server crate; [`Loopback`] delivers in-process and is used by tests.

use std::collections::HashMap;
use std::sync::{Arc, Weak};

use parking_lot::RwLock;
use thiserror::Error;

use crate::wire::Packet;

use super::Node;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("node {0} is unreachable: {1}")]
    Unreachable(String, String),
    #[error("protocol error talking to {0}: {1}")]
    Protocol(String, String),
}

pub trait Transport: Send + Sync {
    /// Delivers one packet of a call. Returns the first reply packet once the
    /// receiving node has the whole message, `None` while it is incomplete.
    fn send_packet(&self, base_uri: &str, packet: &Packet) -> Result<Option<Packet>, TransportError>;

    /// Fetches reply packet `index` of an already answered call.
    fn fetch_reply(&self, base_uri: &str, message_id: &str, index: u32) -> Result<Packet, TransportError>;
}

/// In-process transport over a set of nodes keyed by base URI.
#[derive(Default)]
pub struct Loopback {
    nodes: RwLock<HashMap<String, Weak<Node>>>,
}

impl Loopback {
    pub fn new() -> Arc<Self> {
        Arc::new(Loopback::default())
    }

    pub fn attach(&self, node: &Arc<Node>) {
        self.nodes
            .write()
            .insert(node.base_uri().to_owned(), Arc::downgrade(node));
    }

    fn node(&self, base_uri: &str) -> Result<Arc<Node>, TransportError> {
        self.nodes
            .read()
            .get(base_uri)
            .and_then(Weak::upgrade)
            .ok_or_else(|| TransportError::Unreachable(base_uri.to_owned(), "no such node".into()))
    }
}

impl Transport for Loopback {
    fn send_packet(&self, base_uri: &str, packet: &Packet) -> Result<Option<Packet>, TransportError> {
        self.node(base_uri)?
            .handle_packet(packet.clone())
            .map_err(|e| TransportError::Protocol(base_uri.to_owned(), e.to_string()))
    }

    fn fetch_reply(&self, base_uri: &str, message_id: &str, index: u32) -> Result<Packet, TransportError> {
        self.node(base_uri)?.reply_packet(message_id, index).ok_or_else(|| {
            TransportError::Protocol(base_uri.to_owned(), format!("no reply packet {index} for {message_id}"))
        })
    }
}
