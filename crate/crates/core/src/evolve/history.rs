use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::graph::{Domain, Registry, WorkflowGraph};
use crate::mermaid::{read_graph, serialize_workflow};
use crate::validate::validate_graph;

/// One scored workflow in the population.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub round: usize,
    pub score: f64,
    /// Indices of the entries this one was derived from.
    pub parents: Vec<usize>,
    pub modification: String,
    /// Canonical text of `workflow`.
    pub source: String,
    pub workflow: WorkflowGraph,
}

/// The persisted form of a history entry: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryRecord {
    pub round: usize,
    pub score: f64,
    pub parents: Vec<usize>,
    pub modification: String,
    pub source: String,
}

impl HistoryEntry {
    pub fn new(round: usize, score: f64, parents: Vec<usize>, modification: impl Into<String>, workflow: WorkflowGraph) -> Self {
        HistoryEntry { round, score, parents, modification: modification.into(), source: serialize_workflow(&workflow), workflow }
    }

    pub fn record(&self) -> HistoryRecord {
        HistoryRecord {
            round: self.round,
            score: self.score,
            parents: self.parents.clone(),
            modification: self.modification.clone(),
            source: self.source.clone(),
        }
    }
}

/// Append-only population buffer. Entries are checked on insert and never
/// changed afterwards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    entries: Vec<HistoryEntry>,
}

impl History {
    pub fn new() -> Self {
        History::default()
    }

    pub fn push(&mut self, entry: HistoryEntry) -> Result<usize, EvolveError> {
        if !(0.0..=1.0).contains(&entry.score) {
            return Err(EvolveError::InvalidEntry(format!("score {} outside [0, 1]", entry.score)));
        }
        if entry.parents.len() > 2 {
            return Err(EvolveError::InvalidEntry(format!("{} parents; at most 2 allowed", entry.parents.len())));
        }
        if let Some(p) = entry.parents.iter().find(|p| **p >= self.entries.len()) {
            return Err(EvolveError::InvalidEntry(format!("parent index {p} does not refer to an earlier entry")));
        }
        let verdict = validate_graph(&entry.workflow);
        if !verdict.passed() {
            return Err(EvolveError::InvalidEntry(format!(
                "workflow does not validate: {}",
                verdict.errors().map(ToString::to_string).collect::<Vec<_>>().join("; ")
            )));
        }
        if entry.source != serialize_workflow(&entry.workflow) {
            return Err(EvolveError::InvalidEntry("source is not the canonical text of the workflow".into()));
        }
        self.entries.push(entry);
        Ok(self.entries.len() - 1)
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> Option<&HistoryEntry> {
        self.entries.get(i)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn best_score(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.score).reduce(f64::max)
    }

    /// Index of the highest score, earliest on ties.
    pub fn best(&self) -> Option<usize> {
        let best = self.best_score()?;
        self.entries.iter().position(|e| e.score == best)
    }

    /// Best score among entries up to and including `round`.
    pub fn best_through(&self, round: usize) -> Option<f64> {
        self.entries.iter().filter(|e| e.round <= round).map(|e| e.score).reduce(f64::max)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(&e.record()).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Reads a history file, re-parsing and re-validating every workflow.
    pub fn from_jsonl(text: &str, registry: Arc<Registry>, domain: Option<Domain>) -> Result<History, EvolveError> {
        let mut h = History::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: HistoryRecord = serde_json::from_str(line).map_err(|e| EvolveError::Json(format!("line {}: {e}", n + 1)))?;
            let lowered = read_graph(&rec.source, registry.clone(), domain)
                .map_err(|d| EvolveError::InvalidEntry(format!("line {}: {}", n + 1, d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))))?;
            let entry = HistoryEntry {
                round: rec.round,
                score: rec.score,
                parents: rec.parents,
                modification: rec.modification,
                source: rec.source,
                workflow: lowered.graph,
            };
            h.push(entry).map_err(|e| EvolveError::InvalidEntry(format!("line {}: {e}", n + 1)))?;
        }
        Ok(h)
    }
}
