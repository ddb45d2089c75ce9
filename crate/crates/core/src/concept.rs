//! Records stored under concept chains, with co-entry links.
//!
//! Chains form a prefix tree: `["hotel", "country", "city"]` lives below
//! `["hotel"]`. Records entered together are linked pairwise; a link becomes
//! reliable once the same pair has been entered together `threshold` times.
//! Records are identified by content, so a second visitor uploading the same
//! hotel reinforces the existing record instead of creating a new one.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::str::FromStr;

use chrono::NaiveDate;
use indexmap::IndexMap;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autonomic::RELIABILITY_THRESHOLD;
use crate::model::Handle;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConceptError {
    #[error("concept chain is empty")]
    EmptyChain,
    #[error("concept chain contains an empty concept")]
    EmptyConcept,
    #[error("unknown field {0}")]
    UnknownField(String),
    #[error("unknown record {0}")]
    UnknownRecord(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ConceptChain(Vec<String>);

impl ConceptChain {
    pub fn new<I, S>(concepts: I) -> Result<Self, ConceptError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let v: Vec<String> = concepts.into_iter().map(Into::into).collect();
        if v.is_empty() {
            return Err(ConceptError::EmptyChain);
        }
        if v.iter().any(|c| c.is_empty()) {
            return Err(ConceptError::EmptyConcept);
        }
        Ok(ConceptChain(v))
    }

    pub fn concepts(&self) -> &[String] {
        &self.0
    }

    pub fn base(&self) -> &str {
        &self.0[0]
    }

    pub fn starts_with(&self, prefix: &ConceptChain) -> bool {
        self.0.starts_with(&prefix.0)
    }
}

impl TryFrom<Vec<String>> for ConceptChain {
    type Error = ConceptError;
    fn try_from(v: Vec<String>) -> Result<Self, ConceptError> {
        ConceptChain::new(v)
    }
}

impl From<ConceptChain> for Vec<String> {
    fn from(c: ConceptChain) -> Self {
        c.0
    }
}

/// Typed payload value. In JSON a date is written `{"date": "2009-12-01"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Date { date: NaiveDate },
    Int(i64),
    Decimal(f64),
    Str(String),
}

impl Literal {
    pub fn date(y: i32, m: u32, d: u32) -> Literal {
        Literal::Date {
            date: NaiveDate::from_ymd_opt(y, m, d).expect("valid date"),
        }
    }

    /// `None` when the two values are of incomparable types.
    pub fn compare(&self, other: &Literal) -> Option<Ordering> {
        use Literal::*;
        match (self, other) {
            (Str(a), Str(b)) => Some(a.cmp(b)),
            (Int(a), Int(b)) => Some(a.cmp(b)),
            (Date { date: a }, Date { date: b }) => Some(a.cmp(b)),
            (Int(a), Decimal(b)) => (*a as f64).partial_cmp(b),
            (Decimal(a), Int(b)) => a.partial_cmp(&(*b as f64)),
            (Decimal(a), Decimal(b)) => a.partial_cmp(b),
            _ => None,
        }
    }

    fn canonical(&self) -> String {
        match self {
            Literal::Date { date } => format!("d:{date}"),
            Literal::Int(i) => format!("i:{i}"),
            Literal::Decimal(f) => format!("f:{}", f.to_bits()),
            Literal::Str(s) => format!("s:{s}"),
        }
    }
}

impl From<&str> for Literal {
    fn from(s: &str) -> Self {
        Literal::Str(s.to_string())
    }
}

impl From<i64> for Literal {
    fn from(i: i64) -> Self {
        Literal::Int(i)
    }
}

impl From<f64> for Literal {
    fn from(f: f64) -> Self {
        Literal::Decimal(f)
    }
}

pub type Payload = IndexMap<String, Literal>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub record_id: String,
    pub chain: ConceptChain,
    pub payload: Payload,
    pub source: Handle,
}

/// A record as submitted, before it is given an id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewRecord {
    pub chain: ConceptChain,
    #[serde(default)]
    pub payload: Payload,
    #[serde(default = "default_source")]
    pub source: Handle,
}

fn default_source() -> Handle {
    Handle::root("local://concepts").expect("valid uri")
}

impl NewRecord {
    pub fn new(chain: ConceptChain, payload: impl IntoIterator<Item = (String, Literal)>) -> Self {
        NewRecord {
            chain,
            payload: payload.into_iter().collect(),
            source: default_source(),
        }
    }

    /// Content id: chain plus payload with keys sorted. The source is not
    /// part of the identity.
    pub fn content_id(&self) -> String {
        let mut h = Sha256::new();
        for c in self.chain.concepts() {
            h.update(c.as_bytes());
            h.update([0]);
        }
        h.update([1]);
        let sorted: BTreeMap<&String, &Literal> = self.payload.iter().collect();
        for (k, v) in sorted {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.canonical().as_bytes());
            h.update([0]);
        }
        format!("r-{}", &hex::encode(h.finalize())[..12])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub enum Op {
    Eq,
    Lt,
    Gt,
}

impl FromStr for Op {
    type Err = ConceptError;
    fn from_str(s: &str) -> Result<Self, ConceptError> {
        match s {
            "=" | "eq" | "equals" => Ok(Op::Eq),
            "<" | "lt" | "less_than" => Ok(Op::Lt),
            ">" | "gt" | "greater_than" => Ok(Op::Gt),
            // Fuzzy comparisons such as "near" need a service that knows
            // about distances; the store does not.
            other => Err(ConceptError::UnknownField(other.to_string())),
        }
    }
}

impl TryFrom<String> for Op {
    type Error = ConceptError;
    fn try_from(s: String) -> Result<Self, ConceptError> {
        s.parse()
    }
}

impl From<Op> for &'static str {
    fn from(op: Op) -> Self {
        match op {
            Op::Eq => "equals",
            Op::Lt => "less_than",
            Op::Gt => "greater_than",
        }
    }
}

impl Op {
    fn holds(self, ord: Ordering) -> bool {
        matches!(
            (self, ord),
            (Op::Eq, Ordering::Equal) | (Op::Lt, Ordering::Less) | (Op::Gt, Ordering::Greater)
        )
    }
}

/// A field of the record matched by target `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldRef {
    pub target: usize,
    pub field: String,
}

impl FieldRef {
    pub fn new(target: usize, field: impl Into<String>) -> Self {
        FieldRef {
            target,
            field: field.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Atom {
    Compare { left: FieldRef, op: Op, value: Literal },
    Join { left: FieldRef, equals: FieldRef },
}

/// Conjunction of atoms; the empty predicate is true.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterPredicate {
    pub atoms: Vec<Atom>,
}

impl FilterPredicate {
    pub fn all() -> Self {
        FilterPredicate::default()
    }

    pub fn cmp(mut self, target: usize, field: &str, op: Op, value: impl Into<Literal>) -> Self {
        self.atoms.push(Atom::Compare {
            left: FieldRef::new(target, field),
            op,
            value: value.into(),
        });
        self
    }

    pub fn eq(self, target: usize, field: &str, value: impl Into<Literal>) -> Self {
        self.cmp(target, field, Op::Eq, value)
    }

    pub fn lt(self, target: usize, field: &str, value: impl Into<Literal>) -> Self {
        self.cmp(target, field, Op::Lt, value)
    }

    pub fn gt(self, target: usize, field: &str, value: impl Into<Literal>) -> Self {
        self.cmp(target, field, Op::Gt, value)
    }

    pub fn join(mut self, a: usize, fa: &str, b: usize, fb: &str) -> Self {
        self.atoms.push(Atom::Join {
            left: FieldRef::new(a, fa),
            equals: FieldRef::new(b, fb),
        });
        self
    }

    fn fields(&self) -> impl Iterator<Item = &FieldRef> {
        self.atoms.iter().flat_map(|a| match a {
            Atom::Compare { left, .. } => vec![left],
            Atom::Join { left, equals } => vec![left, equals],
        })
    }

    /// A missing field or an incomparable pair makes the atom false.
    pub fn holds(&self, tuple: &[&Record]) -> bool {
        let get = |f: &FieldRef| tuple.get(f.target).and_then(|r| r.payload.get(&f.field));
        self.atoms.iter().all(|a| match a {
            Atom::Compare { left, op, value } => get(left)
                .and_then(|v| v.compare(value))
                .is_some_and(|o| op.holds(o)),
            Atom::Join { left, equals } => match (get(left), get(equals)) {
                (Some(x), Some(y)) => x.compare(y) == Some(Ordering::Equal),
                _ => false,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoLink {
    pub a: String,
    pub b: String,
    pub hits: u32,
    pub reliable: bool,
}

#[derive(Debug, Default)]
struct TrieNode {
    records: Vec<usize>,
    children: BTreeMap<String, TrieNode>,
}

impl TrieNode {
    fn collect(&self, out: &mut Vec<usize>) {
        out.extend(&self.records);
        for c in self.children.values() {
            c.collect(out);
        }
    }
}

#[derive(Debug, Default)]
struct Inner {
    records: Vec<Record>,
    by_id: HashMap<String, usize>,
    trie: TrieNode,
    colinks: BTreeMap<(String, String), u32>,
}

impl Inner {
    fn find(&self, prefix: &ConceptChain) -> Vec<usize> {
        let mut node = &self.trie;
        for c in prefix.concepts() {
            match node.children.get(c) {
                Some(n) => node = n,
                None => return Vec::new(),
            }
        }
        let mut out = Vec::new();
        node.collect(&mut out);
        out
    }

    fn hits(&self, a: &str, b: &str) -> u32 {
        self.colinks.get(&pair(a, b)).copied().unwrap_or(0)
    }
}

fn pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Single-writer, multi-reader store. `add_entry` commits records and link
/// hits under one write lock.
#[derive(Debug)]
pub struct ConceptStore {
    inner: RwLock<Inner>,
    threshold: u32,
}

impl Default for ConceptStore {
    fn default() -> Self {
        ConceptStore::new(RELIABILITY_THRESHOLD)
    }
}

impl ConceptStore {
    pub fn new(threshold: u32) -> Self {
        ConceptStore {
            inner: RwLock::new(Inner::default()),
            threshold,
        }
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.inner.read().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores the records of one upload and links every pair of them.
    /// Returns the ids, in input order.
    pub fn add_entry(&self, records: Vec<NewRecord>) -> Result<Vec<String>, ConceptError> {
        let mut inner = self.inner.write();
        let mut ids = Vec::with_capacity(records.len());
        for nr in records {
            let id = nr.content_id();
            if !inner.by_id.contains_key(&id) {
                let idx = inner.records.len();
                let mut node = &mut inner.trie;
                for c in nr.chain.concepts() {
                    node = node.children.entry(c.clone()).or_default();
                }
                node.records.push(idx);
                inner.by_id.insert(id.clone(), idx);
                inner.records.push(Record {
                    record_id: id.clone(),
                    chain: nr.chain,
                    payload: nr.payload,
                    source: nr.source,
                });
            }
            ids.push(id);
        }
        let distinct: BTreeSet<&String> = ids.iter().collect();
        let distinct: Vec<&String> = distinct.into_iter().collect();
        for (i, a) in distinct.iter().enumerate() {
            for b in &distinct[i + 1..] {
                *inner.colinks.entry(pair(a, b)).or_insert(0) += 1;
            }
        }
        Ok(ids)
    }

    pub fn get(&self, id: &str) -> Option<Record> {
        let inner = self.inner.read();
        inner.by_id.get(id).map(|&i| inner.records[i].clone())
    }

    pub fn records(&self) -> Vec<Record> {
        self.inner.read().records.clone()
    }

    /// Records whose chain starts with `prefix`, depth first with sibling
    /// concepts in lexical order and records at one node in entry order.
    pub fn query_chain(&self, prefix: &ConceptChain) -> Vec<Record> {
        let inner = self.inner.read();
        inner.find(prefix).into_iter().map(|i| inner.records[i].clone()).collect()
    }

    /// Tuples with one record per target, in `query_chain` order, that
    /// satisfy `pred` and, if `reliable_only`, are pairwise reliable.
    pub fn query_filtered(
        &self,
        targets: &[ConceptChain],
        pred: &FilterPredicate,
        reliable_only: bool,
    ) -> Result<Vec<Vec<Record>>, ConceptError> {
        let inner = self.inner.read();
        let matched: Vec<Vec<usize>> = targets.iter().map(|t| inner.find(t)).collect();
        for f in pred.fields() {
            let Some(m) = matched.get(f.target) else {
                return Err(ConceptError::UnknownField(format!("#{}.{}", f.target, f.field)));
            };
            // A field is known when some record under the target has it.
            if !m.is_empty() && !m.iter().any(|&i| inner.records[i].payload.contains_key(&f.field)) {
                return Err(ConceptError::UnknownField(format!("{}.{}", targets[f.target].base(), f.field)));
            }
        }
        if targets.is_empty() || matched.iter().any(Vec::is_empty) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let mut idx = vec![0usize; targets.len()];
        loop {
            let tuple: Vec<&Record> = idx.iter().zip(&matched).map(|(&k, m)| &inner.records[m[k]]).collect();
            let linked = !reliable_only
                || tuple.iter().enumerate().all(|(i, a)| {
                    tuple[i + 1..]
                        .iter()
                        .all(|b| a.record_id != b.record_id && inner.hits(&a.record_id, &b.record_id) >= self.threshold)
                });
            if linked && pred.holds(&tuple) {
                out.push(tuple.into_iter().cloned().collect());
            }
            // Odometer increment, last target fastest.
            let mut pos = targets.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < matched[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }

    pub fn hits(&self, a: &str, b: &str) -> Result<u32, ConceptError> {
        let inner = self.inner.read();
        for id in [a, b] {
            if !inner.by_id.contains_key(id) {
                return Err(ConceptError::UnknownRecord(id.to_string()));
            }
        }
        Ok(inner.hits(a, b))
    }

    pub fn is_reliable(&self, a: &str, b: &str) -> Result<bool, ConceptError> {
        Ok(a != b && self.hits(a, b)? >= self.threshold)
    }

    pub fn colinks(&self) -> Vec<CoLink> {
        self.inner
            .read()
            .colinks
            .iter()
            .map(|((a, b), &hits)| CoLink {
                a: a.clone(),
                b: b.clone(),
                hits,
                reliable: hits >= self.threshold,
            })
            .collect()
    }

    /// Loads JSON lines. Lines sharing an `entry` value form one upload;
    /// lines without one are uploads of their own. Uploads are applied in
    /// order of first appearance.
    pub fn load_jsonl(&self, reader: impl BufRead) -> Result<usize, ConceptError> {
        #[derive(Deserialize)]
        struct Line {
            entry: Option<String>,
            #[serde(flatten)]
            record: NewRecord,
        }
        let mut groups: IndexMap<String, Vec<NewRecord>> = IndexMap::new();
        for (n, line) in reader.lines().enumerate() {
            let err = |message: String| ConceptError::Parse { line: n + 1, message };
            let line = line.map_err(|e| err(e.to_string()))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let l: Line = serde_json::from_str(trimmed).map_err(|e| err(e.to_string()))?;
            let key = l.entry.unwrap_or_else(|| format!("\0line{n}"));
            groups.entry(key).or_default().push(l.record);
        }
        let count = groups.len();
        for (_, recs) in groups {
            self.add_entry(recs)?;
        }
        Ok(count)
    }
}

pub fn chain(concepts: &[&str]) -> ConceptChain {
    ConceptChain::new(concepts.iter().copied()).expect("non-empty chain")
}
