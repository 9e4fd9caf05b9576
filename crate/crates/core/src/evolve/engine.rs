use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EvolutionConfig;
use super::evaluator::Evaluator;
use super::history::{History, HistoryEntry};
use super::judge::{judge_select, Judge, RubricScores};
use super::proposer::{PrevAttempt, Proposer};
use super::sampling::{sample_parent_pair, ParentSelection};
use super::EvolveError;
use crate::diagnostic::Diagnostic;
use crate::graph::{Domain, Registry, WorkflowGraph};
use crate::mermaid::{lower_to_graph, parse_workflow, serialize_workflow};
use crate::ops::OperatorKind;
use crate::validate::{validate_graph, validate_text};

/// Hard check followed by the soft check, against a fixed registry and domain.
#[derive(Debug, Clone)]
pub struct Checker {
    pub registry: Arc<Registry>,
    pub domain: Option<Domain>,
}

impl Checker {
    pub fn new(registry: Arc<Registry>, domain: Option<Domain>) -> Self {
        Checker { registry, domain }
    }

    /// Checks candidates in the registry and domain of `parent`.
    pub fn for_parent(parent: &WorkflowGraph) -> Self {
        Checker::new(parent.registry_arc().clone(), Some(parent.domain()))
    }

    pub fn check(&self, text: &str) -> Result<WorkflowGraph, Vec<Diagnostic>> {
        let verdict = validate_text(text, self.registry.clone(), self.domain);
        if !verdict.passed() {
            return Err(verdict.diagnostics);
        }
        Ok(lower_to_graph(&parse_workflow(text), self.registry.clone(), self.domain).graph)
    }
}

/// A proposal that failed the checker, or a proposer failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub text: String,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A candidate that passed both checks. `text` is canonical.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub graph: WorkflowGraph,
    pub text: String,
    pub modification: String,
    pub operator: Option<OperatorKind>,
    /// Failed tries before this one succeeded.
    pub failed: Vec<Attempt>,
}

impl Candidate {
    pub fn tries(&self) -> usize {
        self.failed.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TryOutcome {
    Success(Candidate),
    /// Every try failed; the last entry holds the final diagnostics.
    Exhausted { attempts: Vec<Attempt> },
}

/// Asks the proposer up to `num_tries` times, feeding each failure back into
/// the next request.
pub fn optimize_workflow(
    parents: &[&WorkflowGraph],
    cfg: &EvolutionConfig,
    proposer: &dyn Proposer,
    checker: &Checker,
    rng: &mut ChaCha8Rng,
) -> TryOutcome {
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut prev: Option<PrevAttempt> = None;
    for _ in 0..cfg.num_tries.max(1) {
        match proposer.propose(parents, prev.as_ref(), rng) {
            Ok(p) => match checker.check(&p.text) {
                Ok(graph) => {
                    let text = serialize_workflow(&graph);
                    return TryOutcome::Success(Candidate { graph, text, modification: p.modification, operator: p.operator, failed: attempts });
                }
                Err(diagnostics) => {
                    prev = Some(PrevAttempt { text: p.text.clone(), errors: diagnostics.clone() });
                    attempts.push(Attempt { text: p.text, diagnostics, error: None });
                }
            },
            Err(e) => attempts.push(Attempt { text: String::new(), diagnostics: Vec::new(), error: Some(e.to_string()) }),
        }
    }
    TryOutcome::Exhausted { attempts }
}

/// Survivors of one round's candidate slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub candidates: Vec<Candidate>,
    /// Attempts of each slot that ran out of tries.
    pub exhausted: Vec<Vec<Attempt>>,
    /// Slots whose text duplicated an earlier slot and were asked again.
    pub resampled: usize,
}

fn run_slots(
    seeds: &[u64],
    parents: &[&WorkflowGraph],
    cfg: &EvolutionConfig,
    proposer: &dyn Proposer,
    checker: &Checker,
) -> Vec<TryOutcome> {
    let one = |s: &u64| optimize_workflow(parents, cfg, proposer, checker, &mut ChaCha8Rng::seed_from_u64(*s));
    if proposer.reentrant() {
        seeds.par_iter().map(one).collect()
    } else {
        seeds.iter().map(one).collect()
    }
}

/// Runs `candidate_pool` independent slots, each on its own rng stream drawn
/// from `rng`. A slot whose canonical text repeats an earlier slot is asked
/// once more; exhausted slots are dropped.
pub fn generate_candidates(
    parents: &[&WorkflowGraph],
    cfg: &EvolutionConfig,
    proposer: &dyn Proposer,
    checker: &Checker,
    rng: &mut ChaCha8Rng,
) -> Result<Generation, EvolveError> {
    let seeds: Vec<u64> = (0..cfg.candidate_pool.max(1)).map(|_| rng.gen()).collect();
    let mut out = Generation { candidates: Vec::new(), exhausted: Vec::new(), resampled: 0 };
    for outcome in run_slots(&seeds, parents, cfg, proposer, checker) {
        match outcome {
            TryOutcome::Success(c) => {
                if out.candidates.iter().any(|k| k.text == c.text) {
                    out.resampled += 1;
                    match optimize_workflow(parents, cfg, proposer, checker, &mut ChaCha8Rng::seed_from_u64(rng.gen())) {
                        TryOutcome::Success(again) => out.candidates.push(again),
                        TryOutcome::Exhausted { .. } => out.candidates.push(c),
                    }
                } else {
                    out.candidates.push(c);
                }
            }
            TryOutcome::Exhausted { attempts } => out.exhausted.push(attempts),
        }
    }
    if out.candidates.is_empty() {
        return Err(EvolveError::RoundFailed);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RoundStatus {
    Accepted { entry: usize, score: f64 },
    Skipped { reason: String },
}

/// Audit record of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub parents: Vec<usize>,
    pub candidates: usize,
    pub exhausted: usize,
    pub resampled: usize,
    pub judge: Vec<RubricScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winner: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorKind>,
    #[serde(flatten)]
    pub status: RoundStatus,
    /// Best score in the history after this round.
    pub best_score: f64,
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: EvolutionConfig,
    /// Canonical text of each seed workflow.
    pub seeds: Vec<String>,
    pub rounds: Vec<RoundReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub history: History,
    pub rounds: Vec<RoundReport>,
}

impl Evolution {
    pub fn manifest(&self, cfg: &EvolutionConfig) -> Manifest {
        let seeds = self.history.entries().iter().filter(|e| e.round == 0).map(|e| e.source.clone()).collect();
        Manifest { config: cfg.clone(), seeds, rounds: self.rounds.clone() }
    }
}

/// Rng for one round: the configured seed on a stream numbered by the round,
/// so each round is reproducible on its own.
pub fn round_rng(seed: u64, round: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    rng
}

fn score_of(evaluator: &dyn Evaluator, g: &WorkflowGraph) -> Result<f64, EvolveError> {
    let s = evaluator.evaluate(g)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(EvolveError::Evaluator(format!("score {s} outside [0, 1]")));
    }
    Ok(s)
}

/// Scores the seeds as round 0, then runs `max_rounds` rounds of sample,
/// generate, judge, evaluate, append. Failed rounds are reported and skipped.
pub fn run_evolution(
    seeds: &[WorkflowGraph],
    cfg: &EvolutionConfig,
    proposer: &dyn Proposer,
    judge: &dyn Judge,
    evaluator: &dyn Evaluator,
) -> Result<Evolution, EvolveError> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(EvolveError::EmptyHistory);
    }
    let mut history = History::new();
    for (index, g) in seeds.iter().enumerate() {
        let verdict = validate_graph(g);
        if !verdict.passed() {
            let detail = verdict.errors().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            return Err(EvolveError::InvalidSeed { index, detail });
        }
        let score = score_of(evaluator, g)?;
        history.push(HistoryEntry::new(0, score, Vec::new(), "seed", g.clone()))?;
    }
    let mut rounds = Vec::with_capacity(cfg.max_rounds);
    for round in 1..=cfg.max_rounds {
        let report = run_round(round, &mut history, cfg, proposer, judge, evaluator)?;
        rounds.push(report);
    }
    Ok(Evolution { history, rounds })
}

fn run_round(
    round: usize,
    history: &mut History,
    cfg: &EvolutionConfig,
    proposer: &dyn Proposer,
    judge: &dyn Judge,
    evaluator: &dyn Evaluator,
) -> Result<RoundReport, EvolveError> {
    let mut rng = round_rng(cfg.seed, round);
    let selection = if history.len() >= 2 {
        sample_parent_pair(&history.scores(), cfg.lambda, cfg.alpha, &mut rng)?
    } else {
        ParentSelection::Single(0)
    };
    let picked = selection.indices();
    let parents: Vec<&WorkflowGraph> = picked.iter().map(|i| &history.entries()[*i].workflow).collect();
    let checker = Checker::for_parent(parents[0]);
    let mut report = RoundReport {
        round,
        parents: picked.clone(),
        candidates: 0,
        exhausted: 0,
        resampled: 0,
        judge: Vec::new(),
        winner: None,
        operator: None,
        status: RoundStatus::Skipped { reason: String::new() },
        best_score: history.best_score().unwrap_or(0.0),
    };
    let skip = |mut r: RoundReport, reason: String| {
        r.status = RoundStatus::Skipped { reason };
        Ok(r)
    };
    let generation = match generate_candidates(&parents, cfg, proposer, &checker, &mut rng) {
        Ok(g) => g,
        Err(EvolveError::RoundFailed) => {
            report.exhausted = cfg.candidate_pool;
            return skip(report, EvolveError::RoundFailed.to_string());
        }
        Err(e) => return Err(e),
    };
    report.candidates = generation.candidates.len();
    report.exhausted = generation.exhausted.len();
    report.resampled = generation.resampled;
    let pairs: Vec<(&WorkflowGraph, &str)> = generation.candidates.iter().map(|c| (&c.graph, c.modification.as_str())).collect();
    let (best, table) = match judge_select(&pairs, &parents, history, judge) {
        Ok(x) => x,
        Err(e) => return skip(report, e.to_string()),
    };
    report.judge = table;
    report.winner = Some(best);
    let winner = &generation.candidates[best];
    report.operator = winner.operator;
    let score = match score_of(evaluator, &winner.graph) {
        Ok(s) => s,
        Err(e) => return skip(report, e.to_string()),
    };
    // Unary operators only read the first parent.
    let lineage = match winner.operator {
        Some(op) if !op.is_binary() => picked[..1].to_vec(),
        _ => picked,
    };
    let entry = history.push(HistoryEntry::new(round, score, lineage, winner.modification.clone(), winner.graph.clone()))?;
    report.status = RoundStatus::Accepted { entry, score };
    report.best_score = history.best_score().unwrap_or(score);
    Ok(report)
}
