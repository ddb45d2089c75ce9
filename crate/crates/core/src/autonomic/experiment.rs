//! The linked-search experiment: train dynamic links with a skewed query
//! stream, then compare linked against exhaustive search on held-out
//! queries.
//!
//! The world is a 10-ary tree of `n` services (breadth-first numbering, so
//! service `i` has parent `(i - 1) / 10`). Each of `n_keys` keys is held by
//! `providers_per_key` distinct services with a quality drawn from
//! `U(0.2, 1)`. Queries enter at the root service. During warmup every query
//! is answered exhaustively and the link root → best provider is reinforced
//! by the answer's quality. Afterwards a fraction `drift` of all items get a
//! fresh quality, so learned links can go stale, and a held-out batch is
//! evaluated both ways.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::model::Handle;
use crate::node::{Node, NodeError};
use crate::par::Execution;
use crate::wire::ParamValue;

use super::search::{exhaustive_search, linked_search, SearchSpace};
use super::{AutonomicError, LinkTable, RELIABILITY_THRESHOLD};

/// The figures reported for the original system, shown for comparison.
pub const REFERENCE_CLAIM: &str = "80-90% search reduction with 5-10% quality loss";

const SIM_BASE: &str = "sim://experiment";

const STREAM_WORLD: u64 = 0;
const STREAM_WARMUP: u64 = 1;
const STREAM_DRIFT: u64 = 2;
const STREAM_HELDOUT: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_services: usize,
    pub n_queries: usize,
    pub seed: u64,
    pub n_keys: usize,
    pub providers_per_key: usize,
    pub zipf_exponent: f64,
    pub heldout_queries: usize,
    pub drift: f64,
    pub threshold: u32,
    /// Visit budget of linked search; `None` means every service.
    pub budget: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_services: 100,
            n_queries: 500,
            seed: 1,
            n_keys: 100,
            providers_per_key: 5,
            zipf_exponent: 1.1,
            heldout_queries: 200,
            drift: 0.1,
            threshold: RELIABILITY_THRESHOLD,
            budget: None,
        }
    }
}

impl ExperimentConfig {
    pub fn new(n_services: usize, n_queries: usize, seed: u64) -> Self {
        ExperimentConfig {
            n_services,
            n_queries,
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), AutonomicError> {
        let bad = |m: &str| Err(AutonomicError::InvalidParameters(m.to_owned()));
        if self.n_services < 2 {
            return bad("n_services must be at least 2");
        }
        if self.n_keys == 0 || self.heldout_queries == 0 {
            return bad("n_keys and heldout_queries must be positive");
        }
        if self.providers_per_key == 0 || self.providers_per_key > self.n_services - 1 {
            return bad("providers_per_key must be between 1 and n_services - 1");
        }
        if self.zipf_exponent.is_nan() || self.zipf_exponent <= 0.0 || !(0.0..=1.0).contains(&self.drift) {
            return bad("zipf_exponent must be positive and drift within [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub nodes_visited_linked: usize,
    pub nodes_visited_exhaustive: usize,
    /// Mean answer quality over the held-out batch.
    pub quality_linked: f64,
    pub quality_exhaustive: f64,
    /// `1 - visited_linked / visited_exhaustive`.
    pub reduction: f64,
    /// `1 - quality_linked / quality_exhaustive`.
    pub quality_loss: f64,
    pub links_formed: usize,
    pub reliable_links: usize,
    pub reference_claim: String,
}

impl ExperimentReport {
    pub fn summary(&self) -> String {
        let c = &self.config;
        format!(
            "services={} warmup={} heldout={} seed={}\n\
             {:<22}{:>12}{:>12}\n\
             {:<22}{:>12}{:>12}\n\
             {:<22}{:>12.4}{:>12.4}\n\
             links formed {} (reliable {})\n\
             search reduction {:.1}%  quality loss {:.1}%\n\
             reference: {}\n",
            c.n_services,
            c.n_queries,
            c.heldout_queries,
            c.seed,
            "",
            "linked",
            "exhaustive",
            "nodes visited",
            self.nodes_visited_linked,
            self.nodes_visited_exhaustive,
            "mean quality",
            self.quality_linked,
            self.quality_exhaustive,
            self.links_formed,
            self.reliable_links,
            self.reduction * 100.0,
            self.quality_loss * 100.0,
            self.reference_claim,
        )
    }
}

/// The simulated services and their items.
#[derive(Debug, Clone)]
pub struct World {
    handles: Vec<Handle>,
    index: HashMap<Handle, usize>,
    /// `items[service][key]` = quality.
    items: Vec<HashMap<String, f64>>,
    keys: Vec<String>,
}

pub fn item_chain(key: &str) -> Vec<String> {
    vec!["item".to_owned(), key.to_owned()]
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl World {
    fn build(cfg: &ExperimentConfig) -> World {
        let mut rng = stream(cfg.seed, STREAM_WORLD);
        let mut handles: Vec<Handle> = Vec::with_capacity(cfg.n_services);
        for i in 0..cfg.n_services {
            let h = if i == 0 {
                Handle::new(SIM_BASE, ["s0"])
            } else {
                handles[(i - 1) / 10].child(&format!("s{i}"))
            };
            handles.push(h.expect("generated names are valid"));
        }
        let keys: Vec<String> = (0..cfg.n_keys).map(|k| format!("k{k}")).collect();
        let mut items = vec![HashMap::new(); cfg.n_services];
        for key in &keys {
            // The entry service holds nothing.
            for idx in sample(&mut rng, cfg.n_services - 1, cfg.providers_per_key) {
                items[idx + 1].insert(key.clone(), rng.random_range(0.2..1.0));
            }
        }
        let index = handles.iter().cloned().enumerate().map(|(i, h)| (h, i)).collect();
        World {
            handles,
            index,
            items,
            keys,
        }
    }

    pub fn entry(&self) -> &Handle {
        &self.handles[0]
    }

    pub fn handles(&self) -> &[Handle] {
        &self.handles
    }

    pub fn items_of(&self, i: usize) -> &HashMap<String, f64> {
        &self.items[i]
    }

    fn drift(&mut self, cfg: &ExperimentConfig) {
        let mut rng = stream(cfg.seed, STREAM_DRIFT);
        for service in &mut self.items {
            let mut keys: Vec<&String> = service.keys().collect();
            keys.sort();
            let changed: Vec<String> = keys
                .into_iter()
                .filter(|_| rng.random_bool(cfg.drift))
                .cloned()
                .collect();
            for k in changed {
                service.insert(k, rng.random_range(0.2..1.0));
            }
        }
    }
}

impl SearchSpace for World {
    fn order(&self) -> &[Handle] {
        &self.handles
    }

    fn answer(&self, h: &Handle, chain: &[String]) -> Option<f64> {
        let [kind, key] = chain else { return None };
        if kind != "item" {
            return None;
        }
        self.items[*self.index.get(h)?].get(key).copied()
    }
}

fn queries(cfg: &ExperimentConfig, stream_id: u64, count: usize, keys: &[String]) -> Vec<String> {
    let mut rng = stream(cfg.seed, stream_id);
    let zipf = Zipf::new(keys.len() as f64, cfg.zipf_exponent).expect("validated parameters");
    (0..count)
        .map(|_| {
            let rank = zipf.sample(&mut rng) as usize;
            keys[rank.clamp(1, keys.len()) - 1].clone()
        })
        .collect()
}

/// Everything an experiment produced, for reporting or installing.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub world: World,
    pub links: LinkTable,
}

pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentRun, AutonomicError> {
    cfg.validate()?;
    let mut world = World::build(cfg);
    let mut links = LinkTable::new(cfg.threshold);
    let entry = world.entry().clone();

    for key in queries(cfg, STREAM_WARMUP, cfg.n_queries, &world.keys) {
        let chain = item_chain(&key);
        if let Some((best, q)) = exhaustive_search(&world, &chain)?.answer {
            links.reinforce(&entry, &best, &chain, q);
        }
    }
    world.drift(cfg);

    let heldout = queries(cfg, STREAM_HELDOUT, cfg.heldout_queries, &world.keys);
    let budget = cfg.budget.unwrap_or(cfg.n_services);
    let results = exec.map(&heldout, |key| {
        let chain = item_chain(key);
        let linked = linked_search(&world, &links, &entry, &chain, budget)?;
        let exhaustive = exhaustive_search(&world, &chain)?;
        Ok::<_, AutonomicError>((linked, exhaustive))
    });
    let (mut vl, mut ve, mut ql, mut qe) = (0usize, 0usize, 0.0f64, 0.0f64);
    for r in results {
        let (linked, exhaustive) = r?;
        vl += linked.visited;
        ve += exhaustive.visited;
        ql += linked.answer.map_or(0.0, |a| a.1);
        qe += exhaustive.answer.map_or(0.0, |a| a.1);
    }
    let m = cfg.heldout_queries as f64;
    let report = ExperimentReport {
        config: cfg.clone(),
        nodes_visited_linked: vl,
        nodes_visited_exhaustive: ve,
        quality_linked: ql / m,
        quality_exhaustive: qe / m,
        reduction: 1.0 - vl as f64 / ve as f64,
        quality_loss: if qe > 0.0 { 1.0 - ql / qe } else { 0.0 },
        links_formed: links.len(),
        reliable_links: links.iter().filter(|l| l.is_reliable(cfg.threshold)).count(),
        reference_claim: REFERENCE_CLAIM.to_owned(),
    };
    Ok(ExperimentRun { report, world, links })
}

impl ExperimentRun {
    /// Recreates the experiment's services as `Auto` services under a new
    /// `Group` named `container` below the node root, and copies the trained
    /// links into the node's link table. Returns the container handle.
    pub fn install(&self, node: &Node, container: &str) -> Result<Handle, NodeError> {
        let root = node.root();
        let top = node.register(&root, container, "Group", &[])?;
        let rebase = |h: &Handle| -> Handle {
            let mut out = top.clone();
            for name in h.path() {
                out = out.child(name).expect("names were valid in the simulation");
            }
            out
        };
        for (i, h) in self.world.handles().iter().enumerate() {
            let parent = rebase(&h.parent().expect("experiment handles are never the root"));
            let name = h.name().expect("non-root handle");
            let installed = node.register(&parent, name, "Auto", &[ParamValue::from(name)])?;
            let mut items: Vec<(&String, &f64)> = self.world.items_of(i).iter().collect();
            items.sort_by(|a, b| a.0.cmp(b.0));
            for (k, q) in items {
                node.call(&installed, "put", vec![k.as_str().into(), (*q).into()], None)?;
            }
        }
        node.links().write().absorb(&self.links, rebase);
        Ok(top)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_warmup_means_no_gain_and_no_loss() {
        let run = run_experiment(&ExperimentConfig::new(30, 0, 3), Execution::Sequential).unwrap();
        assert_eq!(run.report.reduction, 0.0);
        assert_eq!(run.report.quality_loss, 0.0);
        assert_eq!(run.report.links_formed, 0);
    }

    #[test]
    fn tree_numbering_is_breadth_first() {
        let w = World::build(&ExperimentConfig::new(25, 0, 1));
        assert_eq!(w.handles[0].path(), &["s0".to_string()]);
        assert_eq!(w.handles[10].path(), &["s0".to_string(), "s10".to_string()]);
        assert_eq!(w.handles[11].path(), &["s0".to_string(), "s1".to_string(), "s11".to_string()]);
        assert!(w.handles.windows(2).all(|p| p[0].depth() <= p[1].depth()));
    }

    #[test]
    fn rejects_tiny_networks() {
        assert!(run_experiment(&ExperimentConfig::new(1, 10, 1), Execution::Sequential).is_err());
    }
}
