use std::fmt;

use serde::{Deserialize, Serialize};

use super::{bound_port, find_edge, free_port, guard, is_arm, node_or_err, OperatorError, OperatorKind, RewriteOutcome};
use crate::graph::{Edge, WorkflowGraph};

/// Which endpoint of `va -> vb` moves to the third node `vc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewireDirection {
    /// `va -> vb` becomes `va -> vc`.
    ToThird,
    /// `va -> vb` becomes `vc -> vb`.
    FromThird,
}

impl fmt::Display for RewireDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewireDirection::ToThird => "to_third",
            RewireDirection::FromThird => "from_third",
        })
    }
}

/// Replaces the edge `va -> vb` with an edge through `vc`.
pub fn rewire_edge(g: &WorkflowGraph, (va, vb): (&str, &str), vc: &str, direction: RewireDirection) -> Result<RewriteOutcome, OperatorError> {
    let old = find_edge(g, va, vb)?.clone();
    let third = node_or_err(g, vc)?;
    if vc == va || vc == vb {
        return Err(OperatorError::Precondition(format!("{vc} is already an endpoint of {va}->{vb}")));
    }
    let (src, dst) = match direction {
        RewireDirection::ToThird => (va, vc),
        RewireDirection::FromThird => (vc, vb),
    };
    if g.has_edge(src, dst) {
        return Err(OperatorError::Precondition(format!("edge {src}->{dst} already exists")));
    }
    let t = g.type_of_output(src)?;
    let label = match direction {
        RewireDirection::ToThird => {
            let port = free_port(g, vc, t).ok_or_else(|| OperatorError::TypeMismatch {
                boundary: format!("{src}->{dst}"),
                detail: format!("{} {vc} has no free input port accepting {t}", third.kind),
            })?;
            if is_arm(g, &old) {
                old.label.clone()
            } else {
                port.edge_label()
            }
        }
        RewireDirection::FromThird => {
            let port = bound_port(g, &old);
            if let Some(p) = &port {
                if !p.accepts(t) {
                    return Err(OperatorError::TypeMismatch {
                        boundary: format!("{src}->{dst}"),
                        detail: format!("port {} of {vb} does not accept {t}", p.label),
                    });
                }
            }
            if is_arm(g, &old) {
                port.and_then(|p| p.edge_label())
            } else {
                old.label.clone()
            }
        }
    };

    let (nodes, mut edges, prompts) = g.to_parts();
    edges.retain(|e| *e != old);
    let new = Edge::new(src.parse()?, dst.parse()?, label);
    let description = format!("Rewiring: replaced {va}->{vb} with {new}.");
    edges.push(new);
    let product = g.rebuild(nodes, edges, prompts)?;
    guard(OperatorKind::Rewiring, vec![product], description)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::testing::*;
    use crate::validate::validate_graph;

    #[test]
    fn entry_point_moves_to_the_test() {
        let g = mbpp();
        let out = rewire_edge(&g, ("ENTRY_POINT", "C4"), "T", RewireDirection::ToThird).unwrap();
        let h = out.graph();
        assert_eq!(h.edge_count(), g.edge_count());
        let e = h.outgoing_edges("ENTRY_POINT").find(|e| e.target.as_str() == "T").unwrap();
        assert_eq!(e.label(), Some("entry_point"));
        assert!(out.description.starts_with("Rewiring: replaced ENTRY_POINT->C4"));
    }

    #[test]
    fn occupied_ports_refuse_new_edges() {
        let g = gsm8k();
        let err = rewire_edge(&g, ("P5", "ENSEMBLE"), "P6", RewireDirection::ToThird).unwrap_err();
        assert!(matches!(err, OperatorError::TypeMismatch { .. }), "{err}");
    }

    #[test]
    fn disconnecting_rewire_is_rejected() {
        let g = gsm8k();
        // PROBLEM -> P1 becomes C -> P1; fine on types, and P1 stays reachable.
        assert!(rewire_edge(&g, ("PROBLEM", "P1"), "C", RewireDirection::FromThird).is_ok());
        // P6 -> RETURN becomes C -> RETURN and P6 is left without a path to the exit.
        let err = rewire_edge(&g, ("P6", "RETURN"), "C", RewireDirection::FromThird).unwrap_err();
        match err {
            OperatorError::Rejected { diagnostics } => assert!(!diagnostics.is_empty()),
            other => panic!("{other}"),
        }
        assert!(validate_graph(&g).passed());
    }

    #[test]
    fn preconditions() {
        let g = gsm8k();
        assert!(matches!(rewire_edge(&g, ("P1", "ENSEMBLE"), "ENSEMBLE", RewireDirection::ToThird), Err(OperatorError::Precondition(_))));
        assert!(matches!(rewire_edge(&g, ("P1", "ENSEMBLE"), "C", RewireDirection::FromThird), Err(OperatorError::Precondition(_))));
        let err = rewire_edge(&g, ("P1", "ENSEMBLE"), "PROBLEM", RewireDirection::FromThird).unwrap_err();
        assert!(matches!(err, OperatorError::TypeMismatch { .. }), "{err}");
        assert!(matches!(rewire_edge(&g, ("P1", "P2"), "C", RewireDirection::ToThird), Err(OperatorError::NoSuchEdge(..))));
    }
}
