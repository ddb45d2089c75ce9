//! Minimal XML element tree used by every codec in the crate.
//!
//! Parsing goes through `quick-xml`; writing is canonical: no declaration, no
//! whitespace between elements, attributes in stored order, `<a/>` for empty
//! elements. Whitespace-only text is dropped from elements that also contain
//! child elements, so pretty-printed input parses to the same tree as its
//! canonical form.


use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum XmlError {
    #[error("malformed xml: {0}")]
    Malformed(String),
    #[error("unexpected end of document")]
    Truncated,
    #[error("expected a single root element")]
    NotSingleRoot,
    #[error("character {0:?} cannot be represented in xml")]
    UnrepresentableChar(char),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XmlNode {
    Element(Element),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<XmlNode>,
}

impl Element {
    pub fn new(name: impl Into<String>) -> Self {
        Element {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.push((key.into(), value.into()));
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        let text = text.into();
        if !text.is_empty() {
            self.children.push(XmlNode::Text(text));
        }
        self
    }

    pub fn with_child(mut self, child: Element) -> Self {
        self.children.push(XmlNode::Element(child));
        self
    }

    pub fn push(&mut self, child: Element) {
        self.children.push(XmlNode::Element(child));
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|n| match n {
            XmlNode::Element(e) => Some(e),
            XmlNode::Text(_) => None,
        })
    }

    pub fn has_elements(&self) -> bool {
        self.elements().next().is_some()
    }

    /// Concatenated direct text content.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for node in &self.children {
            if let XmlNode::Text(t) = node {
                out.push_str(t);
            }
        }
        out
    }

    pub fn write_to(&self, out: &mut String) -> Result<(), XmlError> {
        out.push('<');
        out.push_str(&self.name);
        for (k, v) in &self.attrs {
            out.push(' ');
            out.push_str(k);
            out.push_str("=\"");
            escape_into(out, v, true)?;
            out.push('"');
        }
        if self.children.is_empty() {
            out.push_str("/>");
            return Ok(());
        }
        out.push('>');
        write_nodes(out, &self.children)?;
        out.push_str("</");
        out.push_str(&self.name);
        out.push('>');
        Ok(())
    }

    pub fn to_xml(&self) -> Result<String, XmlError> {
        let mut out = String::new();
        self.write_to(&mut out)?;
        Ok(out)
    }
}

pub fn write_nodes(out: &mut String, nodes: &[XmlNode]) -> Result<(), XmlError> {
    for node in nodes {
        match node {
            XmlNode::Element(e) => e.write_to(out)?,
            XmlNode::Text(t) => escape_into(out, t, false)?,
        }
    }
    Ok(())
}

pub fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..='\u{10FFFF}')
}

fn escape_into(out: &mut String, text: &str, attr: bool) -> Result<(), XmlError> {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attr => out.push_str("&quot;"),
            '\r' => out.push_str("&#13;"),
            '\n' if attr => out.push_str("&#10;"),
            '\t' if attr => out.push_str("&#9;"),
            c if !is_xml_char(c) => return Err(XmlError::UnrepresentableChar(c)),
            c => out.push(c),
        }
    }
    Ok(())
}

/// Escape plain text for inclusion in a canonical document.
pub fn escape_text(text: &str) -> Result<String, XmlError> {
    let mut out = String::with_capacity(text.len());
    escape_into(&mut out, text, false)?;
    Ok(out)
}

/// Parses a document with exactly one root element (an XML declaration and
/// surrounding whitespace are tolerated).
pub fn parse_document(input: &str) -> Result<Element, XmlError> {
    let nodes = parse_nodes(input)?;
    let mut root = None;
    for node in nodes {
        match node {
            XmlNode::Element(e) if root.is_none() => root = Some(e),
            XmlNode::Text(t) if t.trim().is_empty() => {}
            _ => return Err(XmlError::NotSingleRoot),
        }
    }
    root.ok_or(XmlError::NotSingleRoot)
}

/// Parses a sequence of nodes (a fragment such as element content).
pub fn parse_fragment(input: &str) -> Result<Vec<XmlNode>, XmlError> {
    parse_nodes(input)
}

fn parse_nodes(input: &str) -> Result<Vec<XmlNode>, XmlError> {
    let mut reader = Reader::from_str(input);
    reader.config_mut().check_end_names = true;
    reader.config_mut().expand_empty_elements = false;

    let mut stack: Vec<Element> = Vec::new();
    let mut top: Vec<XmlNode> = Vec::new();

    fn push_node(stack: &mut [Element], top: &mut Vec<XmlNode>, node: XmlNode) {
        let target = match stack.last_mut() {
            Some(parent) => &mut parent.children,
            None => top,
        };
        if let (XmlNode::Text(new), Some(XmlNode::Text(prev))) = (&node, target.last_mut()) {
            prev.push_str(new);
            return;
        }
        target.push(node);
    }

    loop {
        let event = reader
            .read_event()
            .map_err(|e| XmlError::Malformed(e.to_string()))?;
        match event {
            Event::Start(start) => {
                stack.push(element_from_start(&start)?);
            }
            Event::Empty(start) => {
                let el = element_from_start(&start)?;
                push_node(&mut stack, &mut top, XmlNode::Element(el));
            }
            Event::End(_) => {
                let mut el = stack.pop().ok_or_else(|| {
                    XmlError::Malformed("closing tag without opening tag".into())
                })?;
                normalize_children(&mut el.children);
                push_node(&mut stack, &mut top, XmlNode::Element(el));
            }
            Event::Text(text) => {
                let t = text
                    .unescape()
                    .map_err(|e| XmlError::Malformed(e.to_string()))?;
                if !t.is_empty() {
                    push_node(&mut stack, &mut top, XmlNode::Text(t.into_owned()));
                }
            }
            Event::CData(data) => {
                let t = std::str::from_utf8(&data)
                    .map_err(|e| XmlError::Malformed(e.to_string()))?
                    .to_owned();
                if !t.is_empty() {
                    push_node(&mut stack, &mut top, XmlNode::Text(t));
                }
            }
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) => {}
            Event::DocType(_) => {
                return Err(XmlError::Malformed("doctype declarations are not accepted".into()))
            }
            Event::Eof => break,
        }
    }
    if !stack.is_empty() {
        return Err(XmlError::Truncated);
    }
    normalize_children(&mut top);
    Ok(top)
}

fn element_from_start(start: &quick_xml::events::BytesStart<'_>) -> Result<Element, XmlError> {
    let name = std::str::from_utf8(start.name().as_ref())
        .map_err(|e| XmlError::Malformed(e.to_string()))?
        .to_owned();
    let mut el = Element::new(name);
    for attr in start.attributes() {
        let attr = attr.map_err(|e| XmlError::Malformed(e.to_string()))?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|e| XmlError::Malformed(e.to_string()))?
            .to_owned();
        let value = attr
            .unescape_value()
            .map_err(|e| XmlError::Malformed(e.to_string()))?
            .into_owned();
        el.attrs.push((key, value));
    }
    Ok(el)
}

fn normalize_children(children: &mut Vec<XmlNode>) {
    let mixed = children.iter().any(|n| matches!(n, XmlNode::Element(_)));
    if mixed {
        children.retain(|n| !matches!(n, XmlNode::Text(t) if t.trim().is_empty()));
    }
}

/// Writes `nodes` canonically.
pub fn nodes_to_string(nodes: &[XmlNode]) -> Result<String, XmlError> {
    let mut out = String::new();
    write_nodes(&mut out, nodes)?;
    Ok(out)
}

/// A well-formed XML fragment held in canonical form, so two fragments that
/// differ only in formatting compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct XmlFragment(String);

impl XmlFragment {
    pub fn parse(raw: &str) -> Result<Self, XmlError> {
        let nodes = parse_fragment(raw)?;
        Ok(XmlFragment(nodes_to_string(&nodes)?))
    }

    pub fn from_nodes(nodes: &[XmlNode]) -> Result<Self, XmlError> {
        let mut copy = nodes.to_vec();
        normalize_children(&mut copy);
        Ok(XmlFragment(nodes_to_string(&copy)?))
    }

    /// Plain text, escaped.
    pub fn text(text: &str) -> Result<Self, XmlError> {
        Ok(XmlFragment(escape_text(text)?))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn nodes(&self) -> Vec<XmlNode> {
        // Canonical fragments were produced by this module and always parse.
        parse_fragment(&self.0).unwrap_or_default()
    }

    /// Appends the nodes of `other` after this fragment's nodes.
    pub fn merged(&self, other: &XmlFragment) -> XmlFragment {
        let mut nodes = self.nodes();
        nodes.extend(other.nodes());
        XmlFragment::from_nodes(&nodes).unwrap_or_else(|_| self.clone())
    }
}

impl std::fmt::Display for XmlFragment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
