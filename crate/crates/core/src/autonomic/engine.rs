//! One autonomic cycle, and the thread that repeats it.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Serialize;
use tracing::warn;

use crate::model::Handle;
use crate::node::Node;

use super::{AutonomicError, Behavior};

/// Default pause between two cycles of a runner.
pub const DEFAULT_CYCLE_PERIOD: Duration = Duration::from_secs(1);

/// The behavior driving an Auto service and the peers it consults.
#[derive(Debug, Clone)]
pub struct AutoSetup {
    pub behavior: Arc<dyn Behavior>,
    pub peers: Vec<Handle>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CycleReport {
    pub created: Vec<Handle>,
    pub reinforced: Vec<Handle>,
    pub removed: Vec<Handle>,
    pub failures: Vec<(Handle, String)>,
}

impl CycleReport {
    pub fn is_empty(&self) -> bool {
        self.created.is_empty() && self.reinforced.is_empty() && self.removed.is_empty() && self.failures.is_empty()
    }
}

/// Asks every configured peer, scores the replies and applies the
/// behavior's decision to the node's link table. Calls go through the
/// node's dispatch path (or the transport for remote peers). A peer that
/// fails is recorded and skipped.
pub fn run_auto_cycle(node: &Node, s: &Handle) -> Result<CycleReport, AutonomicError> {
    let setup = node
        .auto_setup(s)
        .ok_or_else(|| AutonomicError::NoBehaviorInstalled(s.clone()))?;
    let mut report = CycleReport::default();
    if setup.peers.is_empty() {
        return Ok(report);
    }
    let method = setup.behavior.query_method();
    let own = node.call(s, method, Vec::new(), None)?;
    let mut scored = Vec::with_capacity(setup.peers.len());
    for peer in &setup.peers {
        match node.call(peer, method, Vec::new(), None) {
            Ok(reply) => scored.push((peer.clone(), setup.behavior.evaluation().score(&own, &reply))),
            Err(e) => {
                warn!(%peer, "peer failed: {e}");
                report.failures.push((peer.clone(), e.to_string()));
            }
        }
    }
    if scored.is_empty() {
        return Ok(report);
    }
    let chain = setup.behavior.chain();
    let mut links = node.links().write();
    let current = links.targets(s, &chain);
    let decision = setup.behavior.decide(&scored, &current);
    for (target, score) in decision.link {
        // Zero scores still count as a use of the link.
        let delta = score.max(f64::EPSILON);
        if current.contains(&target) {
            report.reinforced.push(target.clone());
        } else {
            report.created.push(target.clone());
        }
        links.reinforce(s, &target, &chain, delta);
    }
    for target in decision.unlink {
        if links.remove(s, &target, &chain) {
            report.removed.push(target);
        }
    }
    Ok(report)
}

/// A background thread running cycles for one service at a fixed period.
pub struct CycleRunner {
    stop: Arc<AtomicBool>,
    cycles: Arc<AtomicU64>,
    thread: Option<JoinHandle<()>>,
}

impl CycleRunner {
    pub fn start(node: Arc<Node>, s: Handle, period: Duration) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let cycles = Arc::new(AtomicU64::new(0));
        let (stop2, cycles2) = (Arc::clone(&stop), Arc::clone(&cycles));
        let thread = std::thread::spawn(move || {
            while !stop2.load(Ordering::Acquire) {
                if let Err(e) = run_auto_cycle(&node, &s) {
                    warn!(service = %s, "cycle failed: {e}");
                }
                cycles2.fetch_add(1, Ordering::AcqRel);
                std::thread::park_timeout(period);
            }
        });
        CycleRunner {
            stop,
            cycles,
            thread: Some(thread),
        }
    }

    pub fn cycles(&self) -> u64 {
        self.cycles.load(Ordering::Acquire)
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(t) = self.thread.take() {
            t.thread().unpark();
            let _ = t.join();
        }
    }
}

impl Drop for CycleRunner {
    fn drop(&mut self) {
        self.shutdown();
    }
}
