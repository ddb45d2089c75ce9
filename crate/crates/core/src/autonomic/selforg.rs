//! ID self-organisation: services with random string ids repeatedly look at
//! peers and keep links to the ones whose ids are most similar to their own.
//!
//! In each round service `i` scores the next `fanout` peers of a rotating
//! window plus the peers it already links to, finds the best score, and keeps
//! the peers within `tolerance` of it (score descending, then id ascending)
//! up to `max_links`. All services decide from the previous round's state.
//! The run has converged once a whole sweep of the window passes without any
//! change.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::Execution;

use super::behavior::id_similarity;
use super::AutonomicError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelforgConfig {
    pub n: usize,
    pub id_len: usize,
    /// Upper bound on rounds.
    pub rounds: usize,
    pub seed: u64,
    /// Peers examined per round besides current links; `None` means all.
    pub fanout: Option<usize>,
    pub tolerance: f64,
    pub max_links: usize,
}

impl Default for SelforgConfig {
    fn default() -> Self {
        SelforgConfig {
            n: 10,
            id_len: 8,
            rounds: 1000,
            seed: 1,
            fanout: None,
            tolerance: 1.0,
            max_links: 1,
        }
    }
}

impl SelforgConfig {
    pub fn new(n: usize, id_len: usize, rounds: usize, seed: u64) -> Self {
        SelforgConfig {
            n,
            id_len,
            rounds,
            seed,
            ..Default::default()
        }
    }
}

/// Service id → ids it links to.
pub type LinkGraph = BTreeMap<String, Vec<String>>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelforgState {
    config: SelforgConfig,
    ids: Vec<String>,
    links: Vec<Vec<usize>>,
    round: usize,
    quiet_rounds: usize,
    converged: bool,
}

/// `n` distinct lowercase ids of length `id_len` from `seed`.
pub fn random_ids(n: usize, id_len: usize, seed: u64) -> Result<Vec<String>, AutonomicError> {
    if n < 2 || id_len == 0 {
        return Err(AutonomicError::InvalidParameters("need n >= 2 and id_len >= 1".into()));
    }
    let space = 26f64.powi(id_len.min(64) as i32);
    if (n as f64) > space {
        return Err(AutonomicError::InvalidParameters(format!(
            "cannot draw {n} distinct ids of length {id_len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut ids = Vec::with_capacity(n);
    while ids.len() < n {
        let id: String = (0..id_len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
        if seen.insert(id.clone()) {
            ids.push(id);
        }
    }
    Ok(ids)
}

impl SelforgState {
    pub fn new(config: SelforgConfig) -> Result<Self, AutonomicError> {
        let ids = random_ids(config.n, config.id_len, config.seed)?;
        Ok(SelforgState::with_ids(config, ids))
    }

    pub fn with_ids(config: SelforgConfig, ids: Vec<String>) -> Self {
        let n = ids.len();
        SelforgState {
            config,
            ids,
            links: vec![Vec::new(); n],
            round: 0,
            quiet_rounds: 0,
            converged: false,
        }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    fn fanout(&self) -> usize {
        let peers = self.ids.len().saturating_sub(1);
        self.config.fanout.unwrap_or(peers).clamp(1, peers.max(1))
    }

    /// Rounds needed for the window to pass every peer once.
    pub fn sweep_len(&self) -> usize {
        self.ids.len().saturating_sub(1).div_ceil(self.fanout()).max(1)
    }

    fn decide(&self, i: usize) -> Vec<usize> {
        let n = self.ids.len();
        let fanout = self.fanout();
        let start = self.round * fanout;
        let mut cand: BTreeSet<usize> = self.links[i].iter().copied().collect();
        for k in 0..fanout {
            // Offsets 1..n-1 cycle through every other service.
            let offset = 1 + (start + k) % (n - 1);
            cand.insert((i + offset) % n);
        }
        let scored: Vec<(usize, f64)> = cand
            .into_iter()
            .map(|j| (j, id_similarity(&self.ids[i], &self.ids[j])))
            .collect();
        let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let mut keep: Vec<(usize, f64)> = scored
            .into_iter()
            .filter(|(_, s)| *s >= best * self.config.tolerance)
            .collect();
        keep.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| self.ids[a.0].cmp(&self.ids[b.0])));
        keep.truncate(self.config.max_links);
        keep.into_iter().map(|(j, _)| j).collect()
    }

    /// Runs one round; returns whether any link changed.
    pub fn step(&mut self, exec: Execution) -> bool {
        if self.converged {
            return false;
        }
        let next = exec.map_range(self.ids.len(), |i| self.decide(i));
        let changed = next != self.links;
        self.links = next;
        self.round += 1;
        self.quiet_rounds = if changed { 0 } else { self.quiet_rounds + 1 };
        if self.round >= self.sweep_len() && self.quiet_rounds >= self.sweep_len() {
            self.converged = true;
        }
        changed
    }

    pub fn graph(&self) -> LinkGraph {
        self.ids
            .iter()
            .zip(&self.links)
            .map(|(id, ls)| (id.clone(), ls.iter().map(|&j| self.ids[j].clone()).collect()))
            .collect()
    }

    /// Index pairs `(from, to)` of the current links.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.links
            .iter()
            .enumerate()
            .flat_map(|(i, ls)| ls.iter().map(move |&j| (i, j)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelforgResult {
    pub ids: Vec<String>,
    pub graph: LinkGraph,
    pub rounds: usize,
    pub converged: bool,
}

pub fn run_selforg_demo(cfg: &SelforgConfig, exec: Execution) -> Result<SelforgResult, AutonomicError> {
    let mut state = SelforgState::new(cfg.clone())?;
    while !state.converged() && state.round() < cfg.rounds {
        state.step(exec);
    }
    Ok(SelforgResult {
        ids: state.ids.clone(),
        graph: state.graph(),
        rounds: state.round(),
        converged: state.converged(),
    })
}
