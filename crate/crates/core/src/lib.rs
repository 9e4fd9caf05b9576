//! Typed agent-workflow graphs written in a Mermaid flowchart dialect.
//!
//! The crate is organised around one immutable value, [`WorkflowGraph`]:
//!
//! - [`mermaid`] parses and serializes the text form and implements the
//!   syntax-level hard check,
//! - [`validate`] runs the structural soft checks (W1–W5 plus structural
//!   hygiene) and produces a [`Verdict`],
//! - [`ops`] holds the six constraint-preserving rewrite operators and the
//!   closure guard that re-validates every product,
//! - [`evolve`] is the population loop (history buffer, mixed softmax parent
//!   sampling, candidate generation with checker feedback, judge selection),
//! - [`codegen`] lowers a valid graph to a call sequence and emits program text
//!   through templates, with a structural differ to audit the result,
//! - [`dot`] exports graphs for Graphviz.

pub mod codegen;
pub mod corpus;
pub mod diagnostic;
pub mod dot;
pub mod evolve;
pub mod graph;
pub mod mermaid;
pub mod ops;
pub mod validate;

pub use diagnostic::{Diagnostic, Rule, Severity, SourceSpan, Subject};
pub use graph::registry::{NodeTypeSchema, Registry};
pub use graph::{build_graph, Domain, Edge, GraphError, Node, NodeId, NodeKind, PromptTable, WorkflowGraph};
pub use validate::{soft_check, validate_graph, validate_text, Verdict};
