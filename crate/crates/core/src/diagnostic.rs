//! Validator findings shared by the parser, the lowering pass and the soft checks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;

/// 1-based position of a finding in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl SourceSpan {
    pub fn new(line: usize, column: usize, length: usize) -> Self {
        debug_assert!(line >= 1 && column >= 1);
        SourceSpan { line, column, length }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "SYNTAX")]
    Syntax,
    W1,
    W2,
    W3,
    W4,
    W5,
    #[serde(rename = "STRUCT")]
    Struct,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Syntax => "SYNTAX",
            Rule::W1 => "W1",
            Rule::W2 => "W2",
            Rule::W3 => "W3",
            Rule::W4 => "W4",
            Rule::W5 => "W5",
            Rule::Struct => "STRUCT",
        }
    }

    pub fn is_soft_rule(self) -> bool {
        matches!(self, Rule::W1 | Rule::W2 | Rule::W3 | Rule::W4 | Rule::W5)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// What a finding is about.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Subject {
    Node { id: NodeId },
    Edge { source: NodeId, target: NodeId, label: Option<String> },
}

impl Subject {
    pub fn node(id: &NodeId) -> Self {
        Subject::Node { id: id.clone() }
    }

    /// The node a finding is anchored to: the node itself, or an edge's target.
    pub fn anchor(&self) -> &NodeId {
        match self {
            Subject::Node { id } => id,
            Subject::Edge { target, .. } => target,
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Node { id } => write!(f, "{id}"),
            Subject::Edge { source, target, .. } => write!(f, "{source}->{target}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub rule: Rule,
    pub severity: Severity,
    pub message: String,
    pub subject: Option<Subject>,
    pub span: Option<SourceSpan>,
}

impl Diagnostic {
    pub fn error(rule: Rule, message: impl Into<String>) -> Self {
        Diagnostic { rule, severity: Severity::Error, message: message.into(), subject: None, span: None }
    }

    pub fn warning(rule: Rule, message: impl Into<String>) -> Self {
        Diagnostic { rule, severity: Severity::Warning, message: message.into(), subject: None, span: None }
    }

    pub fn on(mut self, subject: Subject) -> Self {
        self.subject = Some(subject);
        self
    }

    pub fn on_node(self, id: &NodeId) -> Self {
        self.on(Subject::node(id))
    }

    pub fn at(mut self, span: SourceSpan) -> Self {
        self.span = Some(span);
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// Sort key used for the stable soft-check order: rule, then subject.
    pub(crate) fn order_key(&self) -> (Rule, Option<&NodeId>, String) {
        (self.rule, self.subject.as_ref().map(Subject::anchor), self.subject.as_ref().map(ToString::to_string).unwrap_or_default())
    }
}

/// One line per finding: `RULE severity subject:location message`.
impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let subject = self.subject.as_ref().map(ToString::to_string).unwrap_or_else(|| "-".into());
        let location = match self.span {
            Some(span) => format!("{}:{}", span.line, span.column),
            None => "-".into(),
        };
        write!(f, "{} {} {}:{} {}", self.rule, self.severity, subject, location, self.message)
    }
}

pub fn render_lines(diagnostics: &[Diagnostic]) -> String {
    let mut out = String::new();
    for d in diagnostics {
        out.push_str(&d.to_string());
        out.push('\n');
    }
    out
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(Diagnostic::is_error)
}
