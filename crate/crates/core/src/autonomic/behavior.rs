//! Behaviors decide which peers to link with; evaluation functions score
//! what a peer replied.

use std::sync::Arc;

use crate::model::Handle;
use crate::wire::ParamValue;

pub trait EvaluationFunction: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Scores a peer's reply against the service's own value, in `[0, 1]`.
    fn score(&self, own: &ParamValue, peer: &ParamValue) -> f64;
}

/// `1 - hamming / len` over characters. Strings of different length count
/// the missing positions as mismatches.
pub fn id_similarity(a: &str, b: &str) -> f64 {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let len = a.len().max(b.len());
    if len == 0 {
        return 1.0;
    }
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    same as f64 / len as f64
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdSimilarity;

impl EvaluationFunction for IdSimilarity {
    fn name(&self) -> &'static str {
        "id-similarity"
    }

    fn score(&self, own: &ParamValue, peer: &ParamValue) -> f64 {
        match (own.as_str(), peer.as_str()) {
            (Some(a), Some(b)) => id_similarity(a, b),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatch;

impl EvaluationFunction for ExactMatch {
    fn name(&self) -> &'static str {
        "exact-match"
    }

    fn score(&self, own: &ParamValue, peer: &ParamValue) -> f64 {
        if own == peer {
            1.0
        } else {
            0.0
        }
    }
}

/// Links to add (with the score that reinforces them) and links to drop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkDecision {
    pub link: Vec<(Handle, f64)>,
    pub unlink: Vec<Handle>,
}

pub trait Behavior: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &str;

    /// Method asked of the service itself and of every peer.
    fn query_method(&self) -> &str {
        "getId"
    }

    /// Concept chain the links this behavior makes are filed under.
    fn chain(&self) -> Vec<String> {
        vec!["id".to_owned()]
    }

    fn evaluation(&self) -> &dyn EvaluationFunction;

    /// `scored` holds the peers that answered this cycle; `current` the
    /// targets already linked.
    fn decide(&self, scored: &[(Handle, f64)], current: &[Handle]) -> LinkDecision;
}

/// Links every peer scoring at least `threshold`; drops linked peers that
/// answered with a lower score.
#[derive(Debug, Clone)]
pub struct ThresholdBehavior {
    pub threshold: f64,
    pub eval: Arc<dyn EvaluationFunction>,
}

impl ThresholdBehavior {
    pub fn new(threshold: f64, eval: Arc<dyn EvaluationFunction>) -> Self {
        ThresholdBehavior { threshold, eval }
    }
}

impl Behavior for ThresholdBehavior {
    fn name(&self) -> &str {
        "threshold"
    }

    fn evaluation(&self) -> &dyn EvaluationFunction {
        self.eval.as_ref()
    }

    fn decide(&self, scored: &[(Handle, f64)], current: &[Handle]) -> LinkDecision {
        let mut d = LinkDecision::default();
        for (h, s) in scored {
            if *s >= self.threshold {
                d.link.push((h.clone(), *s));
            } else if current.contains(h) {
                d.unlink.push(h.clone());
            }
        }
        d
    }
}

/// Keeps the peers scoring within `tolerance` of the best answer, at most
/// `max_links` of them, ordered by score and then handle.
#[derive(Debug, Clone)]
pub struct BestMatchBehavior {
    pub tolerance: f64,
    pub max_links: usize,
    pub eval: Arc<dyn EvaluationFunction>,
}

impl BestMatchBehavior {
    pub fn new(tolerance: f64, max_links: usize, eval: Arc<dyn EvaluationFunction>) -> Self {
        BestMatchBehavior {
            tolerance,
            max_links,
            eval,
        }
    }
}

impl Behavior for BestMatchBehavior {
    fn name(&self) -> &str {
        "best-match"
    }

    fn evaluation(&self) -> &dyn EvaluationFunction {
        self.eval.as_ref()
    }

    fn decide(&self, scored: &[(Handle, f64)], current: &[Handle]) -> LinkDecision {
        let Some(best) = scored.iter().map(|(_, s)| *s).max_by(f64::total_cmp) else {
            return LinkDecision::default();
        };
        let mut keep: Vec<(Handle, f64)> = scored
            .iter()
            .filter(|(_, s)| *s >= best * self.tolerance)
            .cloned()
            .collect();
        keep.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        keep.truncate(self.max_links);
        let unlink = current
            .iter()
            .filter(|h| !keep.iter().any(|(k, _)| k == *h))
            .cloned()
            .collect();
        LinkDecision { link: keep, unlink }
    }
}

/// Behaviors that admin documents may name.
pub fn behavior_by_name(name: &str) -> Option<Arc<dyn Behavior>> {
    match name {
        "threshold" => Some(Arc::new(ThresholdBehavior::new(0.5, Arc::new(IdSimilarity)))),
        "best-match" => Some(Arc::new(BestMatchBehavior::new(1.0, 1, Arc::new(IdSimilarity)))),
        _ => None,
    }
}
