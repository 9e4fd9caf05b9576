//! The Mermaid flowchart dialect: parsing, lowering, canonical serialization
//! and the syntax-level hard check.

pub mod lower;
pub mod parse;
pub mod serialize;

use std::sync::Arc;

pub use lower::{lower_to_graph, Lowered};
pub use parse::{parse_workflow, MermaidDocument};
pub use serialize::serialize_workflow;

use crate::diagnostic::Diagnostic;
use crate::graph::{Domain, Registry, WorkflowGraph};

/// Syntax-level check: passes iff the text parses without findings.
pub fn hard_check(text: &str) -> (bool, Vec<Diagnostic>) {
    let doc = parse_workflow(text);
    (doc.diagnostics.is_empty(), doc.diagnostics)
}

/// Parses and lowers in one step, refusing text that fails the hard check.
pub fn read_graph(text: &str, registry: Arc<Registry>, domain: Option<Domain>) -> Result<Lowered, Vec<Diagnostic>> {
    let doc = parse_workflow(text);
    if !doc.diagnostics.is_empty() {
        return Err(doc.diagnostics);
    }
    Ok(lower_to_graph(&doc, registry, domain))
}

/// Parses with the default registry, ignoring lowering findings.
pub fn graph_from_str(text: &str) -> Result<WorkflowGraph, Vec<Diagnostic>> {
    read_graph(text, Registry::shared_default(), None).map(|l| l.graph)
}
