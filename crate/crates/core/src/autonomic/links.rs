//! Dynamic links and the per-node link table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::Handle;

/// Co-occurrences after which a link is retrievable in searches.
pub const RELIABILITY_THRESHOLD: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicLink {
    pub source: Handle,
    /// May live on another node.
    pub target: Handle,
    pub chain: Vec<String>,
    pub weight: f64,
    pub hits: u32,
    /// Logical time of the last reinforcement.
    pub last_used: u64,
}

impl DynamicLink {
    pub fn new(source: Handle, target: Handle, chain: Vec<String>) -> Self {
        DynamicLink {
            source,
            target,
            chain,
            weight: 0.0,
            hits: 0,
            last_used: 0,
        }
    }

    pub fn is_reliable(&self, threshold: u32) -> bool {
        self.hits >= threshold
    }
}

/// Adds `delta` to the weight and counts one more hit.
///
/// # Panics
/// If `delta` is not a positive finite number.
pub fn reinforce_link(mut l: DynamicLink, delta: f64) -> DynamicLink {
    assert!(delta > 0.0 && delta.is_finite(), "reinforcement delta must be positive, got {delta}");
    l.weight += delta;
    l.hits = l.hits.saturating_add(1);
    l
}

/// What the admin API reports about one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub target: Handle,
    pub chain: Vec<String>,
    pub weight: f64,
    pub hits: u32,
    pub reliable: bool,
}

type LinkKey = (Handle, Vec<String>, Handle);

#[derive(Debug, Clone, PartialEq)]
pub struct LinkTable {
    links: BTreeMap<LinkKey, DynamicLink>,
    threshold: u32,
    /// Half-life in logical ticks; `None` disables decay.
    half_life: Option<f64>,
    clock: u64,
}

impl Default for LinkTable {
    fn default() -> Self {
        LinkTable::new(RELIABILITY_THRESHOLD)
    }
}

fn key(source: &Handle, chain: &[String], target: &Handle) -> LinkKey {
    (source.clone(), chain.to_vec(), target.clone())
}

impl LinkTable {
    pub fn new(threshold: u32) -> Self {
        LinkTable {
            links: BTreeMap::new(),
            threshold,
            half_life: None,
            clock: 0,
        }
    }

    /// Enables exponential weight decay applied by [`LinkTable::tick`].
    pub fn with_decay(mut self, half_life_ticks: f64) -> Self {
        self.half_life = Some(half_life_ticks);
        self
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Advances logical time, decaying weights when decay is enabled. Hit
    /// counts, and so reliability, are never reduced.
    pub fn tick(&mut self, ticks: u64) {
        self.clock += ticks;
        if let Some(h) = self.half_life {
            let factor = 0.5f64.powf(ticks as f64 / h);
            for l in self.links.values_mut() {
                l.weight *= factor;
            }
        }
    }

    pub fn reinforce(&mut self, source: &Handle, target: &Handle, chain: &[String], delta: f64) -> &DynamicLink {
        self.clock += 1;
        let clock = self.clock;
        let slot = self
            .links
            .entry(key(source, chain, target))
            .or_insert_with(|| DynamicLink::new(source.clone(), target.clone(), chain.to_vec()));
        *slot = reinforce_link(slot.clone(), delta);
        slot.last_used = clock;
        slot
    }

    pub fn get(&self, source: &Handle, target: &Handle, chain: &[String]) -> Option<&DynamicLink> {
        self.links.get(&key(source, chain, target))
    }

    pub fn remove(&mut self, source: &Handle, target: &Handle, chain: &[String]) -> bool {
        self.links.remove(&key(source, chain, target)).is_some()
    }

    /// Removes every link leaving `source`.
    pub fn clear_source(&mut self, source: &Handle) {
        self.links.retain(|k, _| &k.0 != source);
    }

    pub fn iter(&self) -> impl Iterator<Item = &DynamicLink> {
        self.links.values()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn from_source<'a>(&'a self, source: &'a Handle) -> impl Iterator<Item = &'a DynamicLink> + 'a {
        self.links.values().filter(move |l| &l.source == source)
    }

    pub fn targets(&self, source: &Handle, chain: &[String]) -> Vec<Handle> {
        self.from_source(source)
            .filter(|l| l.chain == chain)
            .map(|l| l.target.clone())
            .collect()
    }

    /// Reliable links for `chain` leaving `source`, heaviest first (ties by
    /// target).
    pub fn reliable(&self, source: &Handle, chain: &[String]) -> Vec<&DynamicLink> {
        let mut out: Vec<&DynamicLink> = self
            .links
            .values()
            .filter(|l| &l.source == source)
            .filter(|l| l.chain == chain && l.is_reliable(self.threshold))
            .collect();
        out.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.target.cmp(&b.target)));
        out
    }

    pub fn summaries(&self, source: &Handle) -> Vec<LinkSummary> {
        self.from_source(source)
            .map(|l| LinkSummary {
                target: l.target.clone(),
                chain: l.chain.clone(),
                weight: l.weight,
                hits: l.hits,
                reliable: l.is_reliable(self.threshold),
            })
            .collect()
    }

    /// Copies every link of `other` into this table with handles rewritten
    /// by `map`.
    pub fn absorb(&mut self, other: &LinkTable, map: impl Fn(&Handle) -> Handle) {
        for l in other.iter() {
            let (s, t) = (map(&l.source), map(&l.target));
            self.links.insert(
                key(&s, &l.chain, &t),
                DynamicLink {
                    source: s,
                    target: t,
                    ..l.clone()
                },
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(name: &str) -> Handle {
        Handle::new("http://n1:1", [name]).unwrap()
    }

    #[test]
    fn three_hits_make_a_link_reliable() {
        let mut l = DynamicLink::new(h("a"), h("b"), vec!["id".into()]);
        for i in 0..3 {
            assert!(!l.is_reliable(3), "reliable after {i} hits");
            l = reinforce_link(l, 0.5);
        }
        assert!(l.is_reliable(3));
        let w = l.weight;
        l = reinforce_link(l, 0.5);
        assert!(l.is_reliable(3) && l.weight > w);
    }

    #[test]
    #[should_panic]
    fn zero_delta_is_rejected() {
        reinforce_link(DynamicLink::new(h("a"), h("b"), vec![]), 0.0);
    }

    #[test]
    fn table_orders_reliable_links_by_weight() {
        let chain = vec!["item".to_string(), "k".to_string()];
        let mut t = LinkTable::default();
        for _ in 0..3 {
            t.reinforce(&h("a"), &h("b"), &chain, 1.0);
            t.reinforce(&h("a"), &h("c"), &chain, 2.0);
        }
        t.reinforce(&h("a"), &h("d"), &chain, 10.0);
        let r: Vec<_> = t.reliable(&h("a"), &chain).iter().map(|l| l.target.clone()).collect();
        assert_eq!(r, vec![h("c"), h("b")]);
        assert!(t.remove(&h("a"), &h("c"), &chain));
        assert!(!t.remove(&h("a"), &h("c"), &chain));
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn decay_keeps_reliability() {
        let chain = vec!["x".to_string()];
        let mut t = LinkTable::default().with_decay(1.0);
        for _ in 0..3 {
            t.reinforce(&h("a"), &h("b"), &chain, 1.0);
        }
        t.tick(2);
        let l = t.get(&h("a"), &h("b"), &chain).unwrap();
        assert!((l.weight - 0.75).abs() < 1e-12);
        assert!(l.is_reliable(3));
    }
}
