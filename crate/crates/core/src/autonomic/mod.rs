//! Auto services: cyclic behaviors that score peers and maintain weighted
//! dynamic links, plus the linked-search experiment and the id
//! self-organisation demo built on them.

mod behavior;
mod engine;
mod experiment;
mod links;
mod search;
mod selforg;

pub use behavior::{
    behavior_by_name, id_similarity, Behavior, BestMatchBehavior, EvaluationFunction, ExactMatch, IdSimilarity,
    LinkDecision, ThresholdBehavior,
};
pub use engine::{run_auto_cycle, AutoSetup, CycleReport, CycleRunner, DEFAULT_CYCLE_PERIOD};
pub use experiment::{item_chain, run_experiment, ExperimentConfig, ExperimentReport, ExperimentRun, World, REFERENCE_CLAIM};
pub use links::{reinforce_link, DynamicLink, LinkSummary, LinkTable, RELIABILITY_THRESHOLD};
pub use search::{exhaustive_search, linked_search, SearchOutcome, SearchSpace};
pub use selforg::{random_ids, run_selforg_demo, LinkGraph, SelforgConfig, SelforgResult, SelforgState};

use thiserror::Error;

use crate::model::Handle;
use crate::node::NodeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutonomicError {
    #[error("no behavior installed for {0}")]
    NoBehaviorInstalled(Handle),
    #[error("cannot search an empty network")]
    EmptyNetwork,
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Node(#[from] NodeError),
}
