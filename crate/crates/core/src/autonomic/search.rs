//! Exhaustive and link-guided search over a set of services.

use std::collections::HashSet;

use serde::Serialize;

use crate::model::Handle;

use super::{AutonomicError, LinkTable};

/// What a search can see: a visiting order and the answer each service
/// gives for a concept chain.
pub trait SearchSpace {
    /// Every service, breadth first from the root.
    fn order(&self) -> &[Handle];

    /// Quality of the service's answer to `chain`, if it has one.
    fn answer(&self, h: &Handle, chain: &[String]) -> Option<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    /// Best `(service, quality)` among the visited services. Ties go to the
    /// service visited first.
    pub answer: Option<(Handle, f64)>,
    pub visited: usize,
}

fn better(best: &Option<(Handle, f64)>, q: f64) -> bool {
    best.as_ref().is_none_or(|(_, b)| q > *b)
}

/// Visits every service and returns the best answer.
pub fn exhaustive_search(space: &dyn SearchSpace, chain: &[String]) -> Result<SearchOutcome, AutonomicError> {
    let order = space.order();
    if order.is_empty() {
        return Err(AutonomicError::EmptyNetwork);
    }
    let mut answer = None;
    for h in order {
        if let Some(q) = space.answer(h, chain).filter(|q| better(&answer, *q)) {
            answer = Some((h.clone(), q));
        }
    }
    Ok(SearchOutcome {
        answer,
        visited: order.len(),
    })
}

/// Follows the reliable links from `entry` for `chain`, heaviest first. If
/// they yield an answer the search stops there; otherwise it continues
/// breadth first over the unvisited services until `budget` visits.
pub fn linked_search(
    space: &dyn SearchSpace,
    links: &LinkTable,
    entry: &Handle,
    chain: &[String],
    budget: usize,
) -> Result<SearchOutcome, AutonomicError> {
    if space.order().is_empty() {
        return Err(AutonomicError::EmptyNetwork);
    }
    let mut seen: HashSet<&Handle> = HashSet::new();
    let mut answer = None;
    let mut visited = 0;
    let reliable = links.reliable(entry, chain);
    for l in &reliable {
        if visited >= budget {
            break;
        }
        if !seen.insert(&l.target) {
            continue;
        }
        visited += 1;
        if let Some(q) = space.answer(&l.target, chain).filter(|q| better(&answer, *q)) {
            answer = Some((l.target.clone(), q));
        }
    }
    if answer.is_none() {
        for h in space.order() {
            if visited >= budget {
                break;
            }
            if !seen.insert(h) {
                continue;
            }
            visited += 1;
            if let Some(q) = space.answer(h, chain).filter(|q| better(&answer, *q)) {
                answer = Some((h.clone(), q));
            }
        }
    }
    Ok(SearchOutcome { answer, visited })
}
