//! Call and reply envelopes.
//!
//! ```xml
//! <Call>
//!   <Id>msg-1</Id>
//!   <Target><U>http://host:8888</U><S>Service1</S></Target>
//!   <Method>echo</Method>
//!   <Params><i>42</i></Params>
//!   <Credential>secret</Credential>          <!-- optional -->
//!   <Reply_To><U>http://caller:9</U></Reply_To>  <!-- optional -->
//! </Call>
//! ```
//!
//! The encoded form is canonical (no whitespace, fixed element order), so
//! `encode(decode(b)) == b` for every `b` produced by [`encode_envelope`].

use serde::{Deserialize, Serialize};

use super::{ParamValue, WireError};
use crate::model::Handle;
use crate::xml::{self, Element, XmlNode};

#[derive(Debug, Clone, PartialEq)]
pub struct CallEnvelope {
    pub message_id: String,
    pub target: Handle,
    pub method: String,
    pub params: Vec<ParamValue>,
    pub credential: Option<String>,
    pub reply_to: Option<Handle>,
}

impl CallEnvelope {
    pub fn new(target: Handle, method: impl Into<String>, params: Vec<ParamValue>) -> Self {
        CallEnvelope {
            message_id: uuid::Uuid::new_v4().to_string(),
            target,
            method: method.into(),
            params,
            credential: None,
            reply_to: None,
        }
    }

    pub fn with_credential(mut self, credential: Option<String>) -> Self {
        self.credential = credential;
        self
    }
}

/// Error categories carried back to a remote caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultKind {
    UnknownService,
    UnknownMethod,
    AccessDenied,
    MethodFault,
    ForeignNode,
    BadRequest,
    Internal,
}

impl FaultKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::UnknownService => "UnknownService",
            FaultKind::UnknownMethod => "UnknownMethod",
            FaultKind::AccessDenied => "AccessDenied",
            FaultKind::MethodFault => "MethodFault",
            FaultKind::ForeignNode => "ForeignNode",
            FaultKind::BadRequest => "BadRequest",
            FaultKind::Internal => "Internal",
        }
    }

    pub fn parse(s: &str) -> Option<FaultKind> {
        Some(match s {
            "UnknownService" => FaultKind::UnknownService,
            "UnknownMethod" => FaultKind::UnknownMethod,
            "AccessDenied" => FaultKind::AccessDenied,
            "MethodFault" => FaultKind::MethodFault,
            "ForeignNode" => FaultKind::ForeignNode,
            "BadRequest" => FaultKind::BadRequest,
            "Internal" => FaultKind::Internal,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?}: {message}")]
pub struct Fault {
    pub kind: FaultKind,
    pub message: String,
}

/// `<Reply><Id/><Result>value</Result></Reply>` or
/// `<Reply><Id/><Fault kind="...">message</Fault></Reply>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplyEnvelope {
    pub message_id: String,
    pub outcome: Result<ParamValue, Fault>,
}

fn text_el(name: &str, text: &str) -> Element {
    Element::new(name).with_text(text.to_owned())
}

fn handle_el(name: &str, h: &Handle) -> Element {
    let mut el = Element::new(name);
    for part in h.wire_elements() {
        el.push(part);
    }
    el
}

pub fn encode_envelope(e: &CallEnvelope) -> Result<Vec<u8>, WireError> {
    if e.message_id.is_empty() {
        return Err(WireError::Encode("empty message id".into()));
    }
    let mut root = Element::new("Call")
        .with_child(text_el("Id", &e.message_id))
        .with_child(handle_el("Target", &e.target))
        .with_child(text_el("Method", &e.method));
    let mut params = Element::new("Params");
    for p in &e.params {
        params.push(p.to_xml_element());
    }
    root.push(params);
    if let Some(c) = &e.credential {
        root.push(text_el("Credential", c));
    }
    if let Some(r) = &e.reply_to {
        root.push(handle_el("Reply_To", r));
    }
    Ok(root.to_xml().map_err(WireError::encode)?.into_bytes())
}

fn parse_root(bytes: &[u8], expected: &str) -> Result<Element, WireError> {
    let text = std::str::from_utf8(bytes).map_err(|e| WireError::Decode(e.to_string()))?;
    let root = xml::parse_document(text).map_err(WireError::decode)?;
    if root.name != expected {
        return Err(WireError::Decode(format!("expected <{expected}>, found <{}>", root.name)));
    }
    if !root.attrs.is_empty() {
        return Err(WireError::Decode(format!("<{expected}> takes no attributes")));
    }
    if root.children.iter().any(|n| matches!(n, XmlNode::Text(t) if !t.trim().is_empty())) {
        return Err(WireError::Decode(format!("stray text inside <{expected}>")));
    }
    Ok(root)
}

fn leaf_text(el: &Element) -> Result<String, WireError> {
    if el.has_elements() || !el.attrs.is_empty() {
        return Err(WireError::Decode(format!("<{}> must hold only text", el.name)));
    }
    Ok(el.text())
}

fn take<'a>(
    iter: &mut std::iter::Peekable<impl Iterator<Item = &'a Element>>,
    name: &str,
) -> Option<&'a Element> {
    iter.next_if(|e| e.name == name)
}

fn require<'a>(
    iter: &mut std::iter::Peekable<impl Iterator<Item = &'a Element>>,
    name: &str,
) -> Result<&'a Element, WireError> {
    take(iter, name).ok_or_else(|| WireError::Decode(format!("missing <{name}>")))
}

fn handle_of(el: &Element) -> Result<Handle, WireError> {
    Handle::from_nodes(&el.children).map_err(|e| WireError::Decode(e.to_string()))
}

pub fn decode_envelope(bytes: &[u8]) -> Result<CallEnvelope, WireError> {
    let root = parse_root(bytes, "Call")?;
    let mut iter = root.elements().peekable();
    let message_id = leaf_text(require(&mut iter, "Id")?)?;
    let target = handle_of(require(&mut iter, "Target")?)?;
    let method = leaf_text(require(&mut iter, "Method")?)?;
    let params_el = require(&mut iter, "Params")?;
    if !params_el.attrs.is_empty() || !params_el.text().trim().is_empty() {
        return Err(WireError::Decode("<Params> holds only value elements".into()));
    }
    let params = params_el
        .elements()
        .map(ParamValue::from_xml_element)
        .collect::<Result<Vec<_>, _>>()?;
    let credential = take(&mut iter, "Credential").map(leaf_text).transpose()?;
    let reply_to = take(&mut iter, "Reply_To").map(handle_of).transpose()?;
    if let Some(extra) = iter.next() {
        return Err(WireError::Decode(format!("unknown element <{}>", extra.name)));
    }
    if message_id.is_empty() {
        return Err(WireError::Decode("empty message id".into()));
    }
    Ok(CallEnvelope {
        message_id,
        target,
        method,
        params,
        credential,
        reply_to,
    })
}

pub fn encode_reply(r: &ReplyEnvelope) -> Result<Vec<u8>, WireError> {
    let mut root = Element::new("Reply").with_child(text_el("Id", &r.message_id));
    match &r.outcome {
        Ok(v) => root.push(Element::new("Result").with_child(v.to_xml_element())),
        Err(f) => root.push(
            Element::new("Fault")
                .with_attr("kind", f.kind.as_str())
                .with_text(f.message.clone()),
        ),
    }
    Ok(root.to_xml().map_err(WireError::encode)?.into_bytes())
}

pub fn decode_reply(bytes: &[u8]) -> Result<ReplyEnvelope, WireError> {
    let root = parse_root(bytes, "Reply")?;
    let mut iter = root.elements().peekable();
    let message_id = leaf_text(require(&mut iter, "Id")?)?;
    let outcome = if let Some(res) = take(&mut iter, "Result") {
        let mut values = res.elements();
        match (values.next(), values.next()) {
            (Some(v), None) if res.attrs.is_empty() => Ok(ParamValue::from_xml_element(v)?),
            _ => return Err(WireError::Decode("<Result> must hold exactly one value".into())),
        }
    } else if let Some(fault) = take(&mut iter, "Fault") {
        let kind = fault
            .attr("kind")
            .and_then(FaultKind::parse)
            .ok_or_else(|| WireError::Decode("fault without a known kind".into()))?;
        if fault.has_elements() {
            return Err(WireError::Decode("<Fault> must hold only text".into()));
        }
        Err(Fault {
            kind,
            message: fault.text(),
        })
    } else {
        return Err(WireError::Decode("reply without <Result> or <Fault>".into()));
    };
    if let Some(extra) = iter.next() {
        return Err(WireError::Decode(format!("unknown element <{}>", extra.name)));
    }
    Ok(ReplyEnvelope {
        message_id,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::Value;

    fn target() -> Handle {
        Handle::new("http://1234.5.6.7:8888", ["Service1", "Service2"]).unwrap()
    }

    #[test]
    fn integer_param_round_trip_and_layout() {
        let mut e = CallEnvelope::new(target(), "echo", vec![ParamValue::from(42i64)]);
        e.message_id = "m1".into();
        let bytes = encode_envelope(&e).unwrap();
        assert_eq!(
            std::str::from_utf8(&bytes).unwrap(),
            "<Call><Id>m1</Id><Target><U>http://1234.5.6.7:8888</U><S>Service1</S><S>Service2</S></Target>\
             <Method>echo</Method><Params><i>42</i></Params></Call>"
        );
        assert_eq!(decode_envelope(&bytes).unwrap(), e);
    }

    #[test]
    fn optional_fields_round_trip() {
        let mut e = CallEnvelope::new(target(), "put", vec![ParamValue::opaque(vec![0, 1, 2]), Value::Bool(true).into()]);
        e.credential = Some("pa<ss>&word".into());
        e.reply_to = Some(Handle::root("http://caller:9").unwrap());
        let bytes = encode_envelope(&e).unwrap();
        assert_eq!(decode_envelope(&bytes).unwrap(), e);
    }

    #[test]
    fn truncated_and_unknown_input_rejected() {
        let e = CallEnvelope::new(target(), "echo", vec![ParamValue::from("x")]);
        let bytes = encode_envelope(&e).unwrap();
        for cut in [1, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode_envelope(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let s = String::from_utf8(bytes).unwrap();
        let extra = s.replace("</Call>", "<Extra/></Call>");
        assert!(matches!(decode_envelope(extra.as_bytes()), Err(WireError::Decode(_))));
        let reordered = s.replace("<Method>echo</Method>", "").replace("</Params>", "</Params><Method>echo</Method>");
        assert!(decode_envelope(reordered.as_bytes()).is_err());
    }

    #[test]
    fn replies_round_trip() {
        for outcome in [
            Ok(ParamValue::from("done")),
            Err(Fault {
                kind: FaultKind::AccessDenied,
                message: "bad password".into(),
            }),
        ] {
            let r = ReplyEnvelope {
                message_id: "m9".into(),
                outcome,
            };
            assert_eq!(decode_reply(&encode_reply(&r).unwrap()).unwrap(), r);
        }
    }
}
