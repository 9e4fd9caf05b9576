//! Population search over workflow graphs: history buffer, parent sampling,
//! candidate generation with checker feedback, judge selection, evaluation.

pub mod adapter;
pub mod config;
pub mod engine;
pub mod evaluator;
pub mod history;
pub mod judge;
pub mod proposer;
pub mod sampling;

use thiserror::Error;

pub use adapter::{AdapterEvaluator, AdapterJudge, AdapterProposer, ProcessAdapter};
pub use config::EvolutionConfig;
pub use engine::{generate_candidates, optimize_workflow, round_rng, run_evolution, Attempt, Candidate, Checker, Evolution, Generation, Manifest, RoundReport, RoundStatus, TryOutcome};
pub use evaluator::{ConstantEvaluator, Evaluator, SyntheticTaskEvaluator, TargetProfile};
pub use history::{History, HistoryEntry, HistoryRecord};
pub use judge::{judge_select, Judge, RubricScores, StructuralJudge};
pub use proposer::{OperatorProposer, PrevAttempt, Proposal, Proposer};
pub use sampling::{p_mixed, sample_parent, sample_parent_pair, ParentSelection};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolveError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("seed workflow {index} does not validate: {detail}")]
    InvalidSeed { index: usize, detail: String },
    #[error("invalid history entry: {0}")]
    InvalidEntry(String),
    #[error("proposer failed: {0}")]
    Proposer(String),
    #[error("judge failed: {0}")]
    Judge(String),
    #[error("evaluator failed: {0}")]
    Evaluator(String),
    #[error("no candidate survived in this round")]
    RoundFailed,
    #[error("adapter: {0}")]
    Adapter(String),
    #[error("json: {0}")]
    Json(String),
}
