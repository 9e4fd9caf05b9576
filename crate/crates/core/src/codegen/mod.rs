//! Lowering of valid graphs to a call sequence, template-driven emission of
//! program text, and a structural differ that audits the emitted text.

pub mod diff;
pub mod emit;
pub mod ir;

use thiserror::Error;

pub use diff::{structural_diff, DiffReport, FlowMismatch};
pub use emit::{emit, Emitted, KindTemplate, Templates};
pub use ir::{lower_to_ir, Call, Guard, Operand, ProgramIR, Step};

use crate::graph::{NodeId, WorkflowGraph};
use crate::validate::Verdict;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("exit fed directly by entry; nothing to emit")]
    NothingToEmit,
    #[error("graph does not validate ({} error(s))", .0.errors().count())]
    Invalid(Verdict),
    #[error("{kind} {node} has no emission semantics")]
    Unlowered { kind: String, node: NodeId },
    #[error("graph has a cycle through {0:?}")]
    Cyclic(Vec<NodeId>),
    #[error("cannot lower branch at {node}: {detail}")]
    RepairShape { node: NodeId, detail: String },
    #[error("exit {0} is fed by more than one value")]
    Terminal(NodeId),
    #[error("no template for {0}")]
    MissingTemplate(String),
    #[error("{template} template has hole {{{{{hole}}}}} with no value")]
    MissingHole { template: String, hole: String },
    #[error("template: {0}")]
    Template(String),
}

/// Lowers and emits in one step.
pub fn generate(g: &WorkflowGraph, templates: &Templates) -> Result<Emitted, CodegenError> {
    emit(&lower_to_ir(g)?, templates)
}

#[cfg(test)]
mod tests;
