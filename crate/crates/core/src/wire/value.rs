use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::WireError;
use crate::xml::Element;

/// Format version written in front of every opaque payload.
pub const OPAQUE_FORMAT_VERSION: u8 = 1;

/// The structured type lattice: everything that has an XML form.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
}

/// A call parameter or result, in one of the two encodings.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    /// A typed XML tree.
    Structured(Value),
    /// A serialized byte blob, sent base64 encoded.
    Opaque(Vec<u8>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Structured,
    Opaque,
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

impl<T: Into<Value>> From<T> for ParamValue {
    fn from(v: T) -> Self {
        ParamValue::Structured(v.into())
    }
}

impl Value {
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(f) => Some(*f),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn to_xml_element(&self) -> Element {
        match self {
            Value::Int(i) => Element::new("i").with_text(i.to_string()),
            Value::Float(f) => Element::new("f").with_text(format!("{f:?}")),
            Value::Bool(b) => Element::new("b").with_text(b.to_string()),
            Value::Str(s) => Element::new("s").with_text(s.clone()),
            Value::List(items) => {
                let mut el = Element::new("l");
                for item in items {
                    el.push(item.to_xml_element());
                }
                el
            }
            Value::Map(entries) => {
                let mut el = Element::new("m");
                for (k, v) in entries {
                    el.push(Element::new("e").with_attr("n", k.clone()).with_child(v.to_xml_element()));
                }
                el
            }
        }
    }

    pub fn from_xml_element(el: &Element) -> Result<Value, WireError> {
        let scalar = |el: &Element| -> Result<String, WireError> {
            if el.has_elements() || !el.attrs.is_empty() {
                return Err(WireError::Decode(format!("<{}> must hold only text", el.name)));
            }
            Ok(el.text())
        };
        let bad = |what: &str, text: &str| WireError::Decode(format!("bad {what} literal {text:?}"));
        Ok(match el.name.as_str() {
            "i" => {
                let t = scalar(el)?;
                Value::Int(t.parse().map_err(|_| bad("integer", &t))?)
            }
            "f" => {
                let t = scalar(el)?;
                Value::Float(t.parse().map_err(|_| bad("float", &t))?)
            }
            "b" => {
                let t = scalar(el)?;
                match t.as_str() {
                    "true" => Value::Bool(true),
                    "false" => Value::Bool(false),
                    _ => return Err(bad("boolean", &t)),
                }
            }
            "s" => Value::Str(scalar(el)?),
            "l" => {
                if !el.text().trim().is_empty() || !el.attrs.is_empty() {
                    return Err(WireError::Decode("<l> holds only value elements".into()));
                }
                Value::List(
                    el.elements()
                        .map(Value::from_xml_element)
                        .collect::<Result<_, _>>()?,
                )
            }
            "m" => {
                if !el.text().trim().is_empty() || !el.attrs.is_empty() {
                    return Err(WireError::Decode("<m> holds only <e> elements".into()));
                }
                let mut map = BTreeMap::new();
                for entry in el.elements() {
                    if entry.name != "e" {
                        return Err(WireError::Decode(format!("unexpected <{}> in map", entry.name)));
                    }
                    let key = entry
                        .attr("n")
                        .ok_or_else(|| WireError::Decode("map entry without name".into()))?;
                    let mut values = entry.elements();
                    let value = match (values.next(), values.next()) {
                        (Some(v), None) => Value::from_xml_element(v)?,
                        _ => return Err(WireError::Decode("map entry must hold one value".into())),
                    };
                    if map.insert(key.to_owned(), value).is_some() {
                        return Err(WireError::Decode(format!("duplicate map key {key:?}")));
                    }
                }
                Value::Map(map)
            }
            other => return Err(WireError::Decode(format!("unknown value element <{other}>"))),
        })
    }

    fn from_json(v: serde_json::Value) -> Result<Value, WireError> {
        Ok(match v {
            serde_json::Value::Null => {
                return Err(WireError::UnsupportedType("null / unit values".into()))
            }
            serde_json::Value::Bool(b) => Value::Bool(b),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Value::Int(i)
                } else if n.is_u64() {
                    return Err(WireError::UnsupportedType(format!("integer {n} exceeds 64-bit signed range")));
                } else {
                    Value::Float(n.as_f64().unwrap_or(f64::NAN))
                }
            }
            serde_json::Value::String(s) => Value::Str(s),
            serde_json::Value::Array(items) => {
                Value::List(items.into_iter().map(Value::from_json).collect::<Result<_, _>>()?)
            }
            serde_json::Value::Object(map) => Value::Map(
                map.into_iter()
                    .map(|(k, v)| Ok((k, Value::from_json(v)?)))
                    .collect::<Result<_, WireError>>()?,
            ),
        })
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Float(f) => serde_json::Value::from(*f),
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Str(s) => serde_json::Value::String(s.clone()),
            Value::List(items) => serde_json::Value::Array(items.iter().map(Value::to_json).collect()),
            Value::Map(m) => serde_json::Value::Object(m.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()),
        }
    }
}

impl ParamValue {
    pub fn opaque(bytes: impl Into<Vec<u8>>) -> Self {
        ParamValue::Opaque(bytes.into())
    }

    pub fn encoding(&self) -> Encoding {
        match self {
            ParamValue::Structured(_) => Encoding::Structured,
            ParamValue::Opaque(_) => Encoding::Opaque,
        }
    }

    pub fn as_value(&self) -> Option<&Value> {
        match self {
            ParamValue::Structured(v) => Some(v),
            ParamValue::Opaque(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        self.as_value().and_then(Value::as_str)
    }

    pub fn as_i64(&self) -> Option<i64> {
        self.as_value().and_then(Value::as_i64)
    }

    pub fn as_f64(&self) -> Option<f64> {
        self.as_value().and_then(Value::as_f64)
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            ParamValue::Opaque(b) => Some(b),
            ParamValue::Structured(_) => None,
        }
    }

    /// Opaque values are written as `<o>` holding base64 of
    /// `[version byte][u32 big-endian length][bytes]`.
    pub fn to_xml_element(&self) -> Element {
        match self {
            ParamValue::Structured(v) => v.to_xml_element(),
            ParamValue::Opaque(bytes) => {
                let mut framed = Vec::with_capacity(bytes.len() + 5);
                framed.push(OPAQUE_FORMAT_VERSION);
                framed.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
                framed.extend_from_slice(bytes);
                Element::new("o").with_text(BASE64.encode(framed))
            }
        }
    }

    pub fn from_xml_element(el: &Element) -> Result<ParamValue, WireError> {
        if el.name != "o" {
            return Value::from_xml_element(el).map(ParamValue::Structured);
        }
        if el.has_elements() || !el.attrs.is_empty() {
            return Err(WireError::Decode("<o> must hold only base64 text".into()));
        }
        let framed = BASE64
            .decode(el.text().trim())
            .map_err(|e| WireError::Decode(format!("bad base64: {e}")))?;
        let (header, body) = framed
            .split_at_checked(5)
            .ok_or_else(|| WireError::Decode("opaque payload shorter than its header".into()))?;
        if header[0] != OPAQUE_FORMAT_VERSION {
            return Err(WireError::Decode(format!("unsupported opaque format version {}", header[0])));
        }
        let len = u32::from_be_bytes([header[1], header[2], header[3], header[4]]) as usize;
        if len != body.len() {
            return Err(WireError::Decode(format!(
                "opaque length prefix {len} does not match payload of {} bytes",
                body.len()
            )));
        }
        Ok(ParamValue::Opaque(body.to_vec()))
    }

    /// Canonical XML of this value on its own; used to compare results
    /// byte-for-byte.
    pub fn to_xml_bytes(&self) -> Result<Vec<u8>, WireError> {
        Ok(self.to_xml_element().to_xml().map_err(WireError::encode)?.into_bytes())
    }
}

/// Encodes a serializable value.
///
/// `Structured` maps the value onto the typed XML lattice and fails with
/// [`WireError::UnsupportedType`] for values outside it (unit/`None`, integers
/// beyond `i64`, types whose serializer refuses). `Opaque` serializes the
/// value into a self-describing byte blob.
pub fn encode_param<T: Serialize + ?Sized>(v: &T, mode: Encoding) -> Result<ParamValue, WireError> {
    match mode {
        Encoding::Structured => {
            let json = serde_json::to_value(v).map_err(|e| WireError::UnsupportedType(e.to_string()))?;
            let value = Value::from_json(json)?;
            check_representable(&value)?;
            Ok(ParamValue::Structured(value))
        }
        Encoding::Opaque => serde_json::to_vec(v)
            .map(ParamValue::Opaque)
            .map_err(|e| WireError::UnsupportedType(e.to_string())),
    }
}

/// Inverse of [`encode_param`] for either encoding.
pub fn decode_param<T: DeserializeOwned>(p: &ParamValue) -> Result<T, WireError> {
    match p {
        ParamValue::Structured(v) => {
            serde_json::from_value(v.to_json()).map_err(|e| WireError::Decode(e.to_string()))
        }
        ParamValue::Opaque(bytes) => {
            serde_json::from_slice(bytes).map_err(|e| WireError::Decode(e.to_string()))
        }
    }
}

fn check_representable(v: &Value) -> Result<(), WireError> {
    v.to_xml_element().to_xml().map(|_| ()).map_err(WireError::encode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::ser::Error as _;

    #[test]
    fn integer_structured_form() {
        let p = encode_param(&42i64, Encoding::Structured).unwrap();
        assert_eq!(p, ParamValue::Structured(Value::Int(42)));
        assert_eq!(p.to_xml_element().to_xml().unwrap(), "<i>42</i>");
    }

    #[test]
    fn large_blob_round_trips_opaque() {
        let blob: Vec<u8> = (0..1 << 20).map(|i: u32| (i.wrapping_mul(2654435761) >> 13) as u8).collect();
        let p = ParamValue::opaque(blob.clone());
        let el = p.to_xml_element();
        let back = ParamValue::from_xml_element(&crate::xml::parse_document(&el.to_xml().unwrap()).unwrap()).unwrap();
        assert_eq!(back.as_bytes().unwrap(), &blob[..]);
    }

    struct Closure;

    impl Serialize for Closure {
        fn serialize<S: serde::Serializer>(&self, _s: S) -> Result<S::Ok, S::Error> {
            Err(S::Error::custom("functions cannot be serialized"))
        }
    }

    #[test]
    fn unsupported_structured_values() {
        assert!(matches!(encode_param(&Closure, Encoding::Structured), Err(WireError::UnsupportedType(_))));
        assert!(matches!(encode_param(&(), Encoding::Structured), Err(WireError::UnsupportedType(_))));
        assert!(matches!(encode_param(&u64::MAX, Encoding::Structured), Err(WireError::UnsupportedType(_))));
        assert!(matches!(encode_param("bell\u{7}", Encoding::Structured), Err(WireError::Encode(_))));
    }

    #[test]
    fn serde_types_decode_back() {
        #[derive(Serialize, serde::Deserialize, PartialEq, Debug)]
        struct Booking {
            city: String,
            nights: i64,
            tags: Vec<String>,
        }
        let b = Booking {
            city: "Paris".into(),
            nights: 3,
            tags: vec!["conference".into()],
        };
        for mode in [Encoding::Structured, Encoding::Opaque] {
            let p = encode_param(&b, mode).unwrap();
            assert_eq!(p.encoding(), mode);
            assert_eq!(decode_param::<Booking>(&p).unwrap(), b);
        }
    }

    #[test]
    fn opaque_header_is_checked() {
        let bad_version = Element::new("o").with_text(BASE64.encode([9u8, 0, 0, 0, 0]));
        assert!(ParamValue::from_xml_element(&bad_version).is_err());
        let bad_len = Element::new("o").with_text(BASE64.encode([1u8, 0, 0, 0, 3, 1]));
        assert!(ParamValue::from_xml_element(&bad_len).is_err());
    }
}
