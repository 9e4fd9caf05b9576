//! Graphviz export. Works on any parsed graph, valid or not; diagnostics
//! passed in are listed as comments at the top of the output.

use std::fmt::Write;

use crate::diagnostic::Diagnostic;
use crate::graph::WorkflowGraph;

/// Shape, fill and stroke for a node kind, following the Mermaid class palette.
pub fn style_of(kind: &str) -> (&'static str, &'static str, &'static str) {
    match kind {
        "Interface" => ("ellipse", "#e2e2f2", "#6a6ab2"),
        "CustomOp" => ("box", "#d0e1f9", "#4378a2"),
        "ProgrammerOp" | "CustomCodeGenerateOp" => ("box", "#f9c2c2", "#c23737"),
        "ScEnsembleOp" => ("box", "#f9e4b7", "#b99b37"),
        "TestOp" => ("box", "#d8f0d8", "#2e8b57"),
        "DecisionOp" => ("diamond", "#ffffff", "#444444"),
        _ => ("box", "#ffffff", "#000000"),
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

fn node_label(display: &str) -> String {
    display.replace("<br/>", "\n").replace("<br>", "\n").trim().to_string()
}

/// Renders `g` as a DOT digraph. Every edge carries a label attribute, empty
/// when the Mermaid edge had none.
pub fn to_dot(g: &WorkflowGraph, diagnostics: &[Diagnostic]) -> String {
    let mut out = String::new();
    for d in diagnostics {
        let _ = writeln!(out, "// {}", d.to_string().replace('\n', " "));
    }
    out.push_str("digraph workflow {\n  rankdir=TB;\n  node [style=filled, fontname=\"Helvetica\"];\n");
    for n in g.nodes() {
        let kind = g.registry().canonical(n.kind.as_str()).unwrap_or(n.kind.as_str());
        let (shape, fill, stroke) = style_of(kind);
        let dashed = if kind == "DecisionOp" { ", style=\"filled,dashed\"" } else { "" };
        let label = if n.display_label.is_empty() { n.id.to_string() } else { node_label(&n.display_label) };
        let _ = writeln!(
            out,
            "  {} [label={}, shape={shape}, fillcolor={}, color={}, kind={}{dashed}];",
            quote(n.id.as_str()),
            quote(&label),
            quote(fill),
            quote(stroke),
            quote(kind)
        );
    }
    for e in g.edges() {
        let _ = writeln!(
            out,
            "  {} -> {} [label={}];",
            quote(e.source.as_str()),
            quote(e.target.as_str()),
            quote(e.label().unwrap_or(""))
        );
    }
    out.push_str("}\n");
    out
}
