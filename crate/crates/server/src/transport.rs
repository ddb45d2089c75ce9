//! Packet delivery over HTTP with a blocking client.

use std::time::Duration;

use servnet_core::node::{Transport, TransportError};
use servnet_core::wire::{Packet, HEADER_MSG_ID, HEADER_PKT_INDEX, HEADER_PKT_TOTAL, HEADER_REPLY_INDEX};
use ureq::http::{HeaderMap, Response, StatusCode};
use ureq::{Agent, Body};

pub const CALL_PATH: &str = "/call";

pub struct HttpTransport {
    agent: Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        HttpTransport::new(Duration::from_secs(30))
    }
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        HttpTransport {
            agent: Agent::new_with_config(config),
        }
    }
}

fn url(base: &str) -> String {
    format!("{}{CALL_PATH}", base.trim_end_matches('/'))
}

fn header<T: std::str::FromStr>(h: &HeaderMap, name: &str) -> Option<T> {
    h.get(name)?.to_str().ok()?.parse().ok()
}

fn read_packet(base: &str, mut resp: Response<Body>) -> Result<Packet, TransportError> {
    let proto = |m: String| TransportError::Protocol(base.to_owned(), m);
    let h = resp.headers().clone();
    let (Some(message_id), Some(index), Some(total)) = (
        header::<String>(&h, HEADER_MSG_ID),
        header::<u32>(&h, HEADER_PKT_INDEX),
        header::<u32>(&h, HEADER_PKT_TOTAL),
    ) else {
        return Err(proto("reply is missing packet headers".into()));
    };
    let payload = resp.body_mut().read_to_vec().map_err(|e| proto(e.to_string()))?;
    Ok(Packet {
        message_id,
        index,
        total,
        payload,
    })
}

fn error_text(mut resp: Response<Body>) -> String {
    let status = resp.status();
    let body = resp.body_mut().read_to_string().unwrap_or_default();
    format!("HTTP {status}: {body}")
}

impl Transport for HttpTransport {
    fn send_packet(&self, base_uri: &str, p: &Packet) -> Result<Option<Packet>, TransportError> {
        let resp = self
            .agent
            .post(url(base_uri))
            .header(HEADER_MSG_ID, &p.message_id)
            .header(HEADER_PKT_INDEX, p.index.to_string())
            .header(HEADER_PKT_TOTAL, p.total.to_string())
            .content_type("application/octet-stream")
            .send(&p.payload[..])
            .map_err(|e| TransportError::Unreachable(base_uri.to_owned(), e.to_string()))?;
        match resp.status() {
            StatusCode::ACCEPTED => Ok(None),
            StatusCode::OK => read_packet(base_uri, resp).map(Some),
            _ => Err(TransportError::Protocol(base_uri.to_owned(), error_text(resp))),
        }
    }

    fn fetch_reply(&self, base_uri: &str, message_id: &str, index: u32) -> Result<Packet, TransportError> {
        let resp = self
            .agent
            .get(url(base_uri))
            .header(HEADER_MSG_ID, message_id)
            .header(HEADER_REPLY_INDEX, index.to_string())
            .call()
            .map_err(|e| TransportError::Unreachable(base_uri.to_owned(), e.to_string()))?;
        if resp.status() != StatusCode::OK {
            return Err(TransportError::Protocol(base_uri.to_owned(), error_text(resp)));
        }
        read_packet(base_uri, resp)
    }
}
