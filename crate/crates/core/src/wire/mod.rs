//! XML call envelopes, the two parameter encodings, and packet framing.
//!
//! Over HTTP every packet is one `POST /call` whose body is the packet
//! payload and whose headers are [`HEADER_MSG_ID`], [`HEADER_PKT_INDEX`] and
//! [`HEADER_PKT_TOTAL`]. See `docs/wire-protocol.md` for the full exchange.

mod envelope;
mod packet;
mod value;

pub use envelope::{
    decode_envelope, decode_reply, encode_envelope, encode_reply, CallEnvelope, Fault, FaultKind,
    ReplyEnvelope,
};
pub use packet::{
    packet_count, reassemble_packets, split_packets, Packet, Reassembler, DEFAULT_REASSEMBLY_TIMEOUT,
};
pub use value::{decode_param, encode_param, Encoding, ParamValue, Value, OPAQUE_FORMAT_VERSION};

use thiserror::Error;

use crate::xml::XmlError;

pub const HEADER_MSG_ID: &str = "X-Msg-Id";
pub const HEADER_PKT_INDEX: &str = "X-Pkt-Index";
pub const HEADER_PKT_TOTAL: &str = "X-Pkt-Total";
/// Set by a caller fetching the remaining packets of a split reply.
pub const HEADER_REPLY_INDEX: &str = "X-Reply-Index";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("cannot encode: {0}")]
    Encode(String),
    #[error("cannot decode: {0}")]
    Decode(String),
    #[error("unsupported type for structured encoding: {0}")]
    UnsupportedType(String),
    #[error("packet size must be at least 1, got {0}")]
    BadPacketSize(usize),
    #[error("message {message_id} is missing packets {missing:?}")]
    MissingPacket { message_id: String, missing: Vec<u32> },
    #[error("conflicting packets for message {message_id}: {reason}")]
    ConflictingPackets { message_id: String, reason: String },
}

impl WireError {
    pub(crate) fn encode(e: XmlError) -> Self {
        WireError::Encode(e.to_string())
    }

    pub(crate) fn decode(e: XmlError) -> Self {
        WireError::Decode(e.to_string())
    }
}
