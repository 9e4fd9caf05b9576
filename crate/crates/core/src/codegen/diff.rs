//! Recovers the call graph from emitted program text and compares it with
//! the source graph.
//!
//! The reader understands the subset of Python the templates produce:
//! operator objects declared as `self.<attr> = operator.<Class>(...)`,
//! awaited calls `<name> = await self.<attr>(<port>=<expr>, ...)`, plain
//! assignments, `if` blocks and a final `return <expr>, ...`. Dataflow through
//! variables is tracked; an assignment inside an `if` block adds to what the
//! variable may hold instead of replacing it.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::emit::Templates;
use crate::graph::ports::{bind_ports, PortFeed};
use crate::graph::{InterfaceRole, NodeId, WorkflowGraph};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Src {
    Param(String),
    Call(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Name(String),
    Str(String),
    Num,
    Punct(char),
    Other,
}

#[derive(Debug, Clone)]
struct ParsedCall {
    binding: String,
    kind: Option<String>,
    kwargs: Vec<(String, Vec<Src>)>,
    literals: Vec<String>,
    block: Option<usize>,
}

#[derive(Debug, Default)]
struct Parsed {
    calls: Vec<ParsedCall>,
    terminal: Option<Vec<Src>>,
    errors: Vec<String>,
}

/// One argument whose sources disagree with the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowMismatch {
    pub node: String,
    pub port: String,
    pub expected: Vec<String>,
    pub found: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DiffReport {
    /// Graph nodes with no call.
    pub missing_calls: Vec<String>,
    /// Calls (by binding) that stand for no graph node.
    pub orphan_calls: Vec<String>,
    pub flow_mismatches: Vec<FlowMismatch>,
    pub parse_errors: Vec<String>,
    /// Node matched to each call, in program order; re-tests and orphans are `None`.
    pub call_nodes: Vec<Option<String>>,
}

impl DiffReport {
    pub fn is_empty(&self) -> bool {
        self.missing_calls.is_empty() && self.orphan_calls.is_empty() && self.flow_mismatches.is_empty() && self.parse_errors.is_empty()
    }
}

/// Logical lines with their indentation: comments dropped, bracketed
/// continuations and triple-quoted strings joined.
fn logical_lines(text: &str) -> (Vec<(usize, String)>, Vec<String>) {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let mut cur = String::new();
    let mut indent: Option<usize> = None;
    let mut depth: i32 = 0;
    let mut quote: Option<(char, bool)> = None;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut col = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if let Some((q, triple)) = quote {
            cur.push(c);
            if c == '\\' && i + 1 < chars.len() {
                cur.push(chars[i + 1]);
                i += 2;
                continue;
            }
            if c == q {
                if !triple {
                    quote = None;
                } else if i + 2 < chars.len() && chars[i + 1] == q && chars[i + 2] == q {
                    cur.push(q);
                    cur.push(q);
                    i += 2;
                    quote = None;
                }
            } else if c == '\n' && !triple {
                errors.push("unterminated string".into());
                quote = None;
            }
            i += 1;
            continue;
        }
        match c {
            '\n' => {
                if depth <= 0 && !cur.ends_with('\\') {
                    if !cur.trim().is_empty() {
                        out.push((indent.unwrap_or(0), cur.trim().to_string()));
                    }
                    cur.clear();
                    indent = None;
                    depth = 0;
                } else {
                    if cur.ends_with('\\') {
                        cur.pop();
                    }
                    cur.push(' ');
                }
                col = 0;
                i += 1;
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            ' ' | '\t' if indent.is_none() => {
                col += 1;
                i += 1;
                continue;
            }
            _ => {}
        }
        if indent.is_none() {
            indent = Some(col);
        }
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            '\'' | '"' => {
                let triple = i + 2 < chars.len() && chars[i + 1] == c && chars[i + 2] == c;
                quote = Some((c, triple));
                if triple {
                    cur.push(c);
                    cur.push(c);
                    i += 2;
                }
            }
            _ => {}
        }
        cur.push(c);
        i += 1;
    }
    if quote.is_some() {
        errors.push("unterminated string at end of text".into());
    }
    if depth != 0 {
        errors.push("unbalanced brackets at end of text".into());
    }
    if !cur.trim().is_empty() {
        out.push((indent.unwrap_or(0), cur.trim().to_string()));
    }
    (out, errors)
}

fn tokenize(line: &str) -> Vec<Tok> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            // String prefixes such as f"..." or r'...'.
            if i < chars.len() && (chars[i] == '"' || chars[i] == '\'') && word.len() <= 2 && word.chars().all(|c| "rRbBfFuU".contains(c)) {
                continue;
            }
            out.push(Tok::Name(word));
        } else if c.is_ascii_digit() {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Num);
        } else if c == '"' || c == '\'' {
            let triple = i + 2 < chars.len() && chars[i + 1] == c && chars[i + 2] == c;
            let q = if triple { 3 } else { 1 };
            i += q;
            let mut s = String::new();
            while i < chars.len() {
                if chars[i] == '\\' && i + 1 < chars.len() {
                    s.push(chars[i + 1]);
                    i += 2;
                    continue;
                }
                if chars[i] == c && (!triple || (i + 2 < chars.len() && chars[i + 1] == c && chars[i + 2] == c)) {
                    i += q;
                    break;
                }
                s.push(chars[i]);
                i += 1;
            }
            out.push(Tok::Str(s));
        } else if "()[]{},:=".contains(c) {
            if c == '=' && i + 1 < chars.len() && chars[i + 1] == '=' {
                out.push(Tok::Other);
                i += 2;
            } else {
                out.push(Tok::Punct(c));
                i += 1;
            }
        } else {
            // Operators such as `!=`, `<=`, `->`.
            if i + 1 < chars.len() && chars[i + 1] == '=' {
                i += 1;
            }
            out.push(Tok::Other);
            i += 1;
        }
    }
    out
}

/// Splits at top-level occurrences of `sep`.
fn split_top(toks: &[Tok], sep: &Tok) -> Vec<Vec<Tok>> {
    let mut parts = vec![Vec::new()];
    let mut depth = 0i32;
    for t in toks {
        match t {
            Tok::Punct('(' | '[' | '{') => depth += 1,
            Tok::Punct(')' | ']' | '}') => depth -= 1,
            _ => {}
        }
        if depth == 0 && t == sep {
            parts.push(Vec::new());
        } else {
            parts.last_mut().expect("nonempty").push(t.clone());
        }
    }
    parts
}

fn position_top(toks: &[Tok], want: &Tok) -> Option<usize> {
    let mut depth = 0i32;
    for (i, t) in toks.iter().enumerate() {
        match t {
            Tok::Punct('(' | '[' | '{') => depth += 1,
            Tok::Punct(')' | ']' | '}') => depth -= 1,
            _ => {}
        }
        if depth == 0 && t == want {
            return Some(i);
        }
    }
    None
}

const NON_VARS: [&str; 8] = ["None", "True", "False", "not", "and", "or", "await", "in"];

struct Reader<'a> {
    templates: &'a Templates,
    graph: &'a WorkflowGraph,
    decls: BTreeMap<String, String>,
    env: BTreeMap<String, Vec<Src>>,
    parsed: Parsed,
}

impl Reader<'_> {
    fn kind_of_class(&self, class: &str) -> Option<String> {
        if let Some((k, _)) = self.templates.kind.iter().find(|(_, t)| t.class == class) {
            return Some(k.clone());
        }
        self.graph.registry().kinds().find(|k| k.display == class || k.name == class).map(|k| k.name.clone())
    }

    /// Sources an expression may carry. In `a if c else b` the condition is skipped.
    fn sources(&self, toks: &[Tok]) -> Vec<Src> {
        if let Some(i) = position_top(toks, &Tok::Name("if".into())) {
            let rest = &toks[i + 1..];
            let mut out = self.sources(&toks[..i]);
            if let Some(j) = position_top(rest, &Tok::Name("else".into())) {
                out.extend(self.sources(&rest[j + 1..]));
            }
            return out;
        }
        let mut out = Vec::new();
        for (i, t) in toks.iter().enumerate() {
            if let Tok::Name(n) = t {
                let called = matches!(toks.get(i + 1), Some(Tok::Punct('(')));
                if called || NON_VARS.contains(&n.as_str()) {
                    continue;
                }
                if let Some(s) = self.env.get(n) {
                    out.extend(s.iter().cloned());
                }
            }
        }
        out
    }

    fn assign(&mut self, name: &str, value: Vec<Src>, conditional: bool) {
        let mut v: Vec<Src> = value;
        if conditional {
            if let Some(old) = self.env.get(name) {
                v.extend(old.iter().cloned());
            }
        }
        let set: BTreeSet<Src> = v.into_iter().collect();
        self.env.insert(name.to_string(), set.into_iter().collect());
    }

    fn statement(&mut self, toks: &[Tok], block: Option<usize>) {
        let Some(Tok::Name(first)) = toks.first() else { return };
        match first.as_str() {
            "return" => {
                let first_item = split_top(&toks[1..], &Tok::Punct(',')).into_iter().next().unwrap_or_default();
                self.parsed.terminal = Some(self.sources(&first_item));
                return;
            }
            "async" | "def" => {
                self.params(toks);
                return;
            }
            "import" | "from" | "class" | "if" | "elif" | "else" | "pass" => return,
            _ => {}
        }
        let Some(eq) = position_top(toks, &Tok::Punct('=')) else { return };
        let [Tok::Name(target)] = &toks[..eq] else { return };
        let rhs = &toks[eq + 1..];
        if let (Some(attr), [Tok::Name(ctor), Tok::Punct('('), ..]) = (target.strip_prefix("self."), rhs) {
            if let Some(class) = ctor.strip_prefix("operator.") {
                self.decls.insert(attr.to_string(), class.to_string());
                return;
            }
        }
        if let [Tok::Name(aw), Tok::Name(callee), Tok::Punct('('), inner @ .., Tok::Punct(')')] = rhs {
            if aw == "await" {
                if let Some(attr) = callee.strip_prefix("self.") {
                    self.call(target, attr, inner, block);
                    return;
                }
            }
        }
        let s = self.sources(rhs);
        self.assign(target, s, block.is_some());
    }

    fn params(&mut self, toks: &[Tok]) {
        let Some(open) = toks.iter().position(|t| *t == Tok::Punct('(')) else { return };
        let is_entry = toks.iter().any(|t| *t == Tok::Name("__call__".into()));
        if !is_entry {
            return;
        }
        let close = toks.iter().rposition(|t| *t == Tok::Punct(')')).unwrap_or(toks.len());
        self.env.clear();
        for part in split_top(&toks[open + 1..close], &Tok::Punct(',')) {
            if let Some(Tok::Name(n)) = part.first() {
                if n != "self" {
                    self.env.insert(n.clone(), vec![Src::Param(n.clone())]);
                }
            }
        }
    }

    fn call(&mut self, target: &str, attr: &str, inner: &[Tok], block: Option<usize>) {
        let kind = self.decls.get(attr).and_then(|c| self.kind_of_class(c));
        if kind.is_none() {
            self.parsed.errors.push(format!("call through self.{attr}, which is not a declared operator"));
        }
        let mut kwargs = Vec::new();
        let mut literals = Vec::new();
        for part in split_top(inner, &Tok::Punct(',')) {
            if let [Tok::Name(k), Tok::Punct('='), value @ ..] = part.as_slice() {
                kwargs.push((k.clone(), self.sources(value)));
                literals.extend(value.iter().filter_map(|t| match t {
                    Tok::Str(s) => Some(s.clone()),
                    Tok::Name(n) => n.rsplit('.').next().map(str::to_string),
                    _ => None,
                }));
            }
        }
        let idx = self.parsed.calls.len();
        self.parsed.calls.push(ParsedCall { binding: target.to_string(), kind, kwargs, literals, block });
        self.assign(target, vec![Src::Call(idx)], block.is_some());
    }
}

fn read(text: &str, graph: &WorkflowGraph, templates: &Templates) -> Parsed {
    let (lines, errors) = logical_lines(text);
    let mut r = Reader { templates, graph, decls: BTreeMap::new(), env: BTreeMap::new(), parsed: Parsed { errors, ..Parsed::default() } };
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut next_block = 0;
    for (indent, line) in lines {
        let toks = tokenize(&line);
        let head = match toks.first() {
            Some(Tok::Name(n)) => n.as_str(),
            _ => "",
        };
        if matches!(toks.first(), Some(Tok::Str(_))) && toks.len() == 1 {
            continue;
        }
        let continues = matches!(head, "else" | "elif");
        while let Some(&(bi, _)) = blocks.last() {
            if indent < bi || (indent == bi && !continues) {
                blocks.pop();
            } else {
                break;
            }
        }
        if head == "if" {
            blocks.push((indent, next_block));
            next_block += 1;
            continue;
        }
        if continues {
            continue;
        }
        // Statements one level inside an `if` take the innermost block.
        let block = blocks.last().filter(|(bi, _)| indent > *bi).map(|(_, id)| *id);
        r.statement(&toks, block);
    }
    r.parsed
}

/// Matches calls to graph nodes and reports every disagreement. Emitted text
/// compared with its own graph always yields an empty report.
pub fn structural_diff(program: &str, g: &WorkflowGraph, templates: &Templates) -> DiffReport {
    let parsed = read(program, g, templates);
    let mut report = DiffReport { parse_errors: parsed.errors.clone(), ..DiffReport::default() };

    // Re-tests: a branching call inside a block whose edge-fed inputs come from
    // calls in the same block.
    let sugar: Vec<bool> = parsed
        .calls
        .iter()
        .map(|c| {
            let branching = c.kind.as_ref().and_then(|k| g.registry().schema(k)).is_some_and(|s| !s.branches.is_empty());
            let Some(b) = c.block else { return false };
            let inner: Vec<usize> = c.kwargs.iter().flat_map(|(_, s)| s).filter_map(|s| match s {
                Src::Call(j) => Some(*j),
                Src::Param(_) => None,
            }).collect();
            branching && !inner.is_empty() && inner.iter().all(|j| parsed.calls[*j].block == Some(b))
        })
        .collect();

    let entry_of_payload: BTreeMap<String, NodeId> = g
        .entries()
        .into_iter()
        .map(|e| (g.entry_payload(e.as_str()).to_string(), e.clone()))
        .collect();
    let mut matched: BTreeMap<usize, NodeId> = BTreeMap::new();
    let name_of = |s: &Src, matched: &BTreeMap<usize, NodeId>| -> String {
        match s {
            Src::Param(p) => entry_of_payload.get(p).map_or_else(|| format!("?{p}"), |n| n.to_string()),
            Src::Call(j) => matched.get(j).map_or_else(|| format!("?{}", parsed.calls[*j].binding), |n| n.to_string()),
        }
    };

    let ports = bind_ports(g);
    let (order, _) = g.topological_order();
    struct Want {
        id: NodeId,
        kind: String,
        ports: Vec<(String, Vec<String>, Vec<String>)>,
        attrs: Vec<String>,
    }
    let mut wants: Vec<Want> = Vec::new();
    for id in order.iter().filter(|id| !g.node(id.as_str()).expect("exists").kind.is_interface()) {
        let node = g.node(id.as_str()).expect("exists");
        let kind = g.registry().canonical(node.kind.as_str()).unwrap_or(node.kind.as_str()).to_string();
        let Some(binding) = ports.binding(id.as_str()) else {
            report.missing_calls.push(id.to_string());
            continue;
        };
        let expected = binding
            .ports
            .iter()
            .map(|(p, feed)| {
                let mut names: Vec<String> = match feed {
                    PortFeed::Edges(es) => es.iter().map(|e| e.source.to_string()).collect(),
                    PortFeed::Fallback(pl) => entry_of_payload.get(pl).map(|n| vec![n.to_string()]).unwrap_or_default(),
                    PortFeed::Inline(_) | PortFeed::Empty => Vec::new(),
                };
                names.sort();
                let mut labels = vec![p.label.clone()];
                labels.extend(p.aliases.iter().cloned());
                (p.label.clone(), labels, names)
            })
            .collect();
        let attrs = node.attributes.values().map(|v| v.trim().trim_matches(|c| c == '\'' || c == '"').to_string()).collect();
        wants.push(Want { id: id.clone(), kind, ports: expected, attrs });
    }

    let compare = |w: &Want, c: &ParsedCall, matched: &BTreeMap<usize, NodeId>| -> (Vec<FlowMismatch>, bool) {
        let mut mismatches = Vec::new();
        for (label, labels, want) in &w.ports {
            let mut found: Vec<String> =
                c.kwargs.iter().filter(|(k, _)| labels.contains(k)).flat_map(|(_, s)| s.iter().map(|x| name_of(x, matched))).collect();
            found.sort();
            if &found != want {
                mismatches.push(FlowMismatch { node: w.id.to_string(), port: label.clone(), expected: want.clone(), found });
            }
        }
        let hits = w.attrs.iter().all(|v| c.literals.iter().any(|l| l == v || l.eq_ignore_ascii_case(v)));
        (mismatches, hits)
    };

    // Repeatedly take the closest node/call pair overall: fewest argument
    // mismatches, then matching attributes, then graph order, then text order.
    let mut done: BTreeSet<usize> = BTreeSet::new();
    loop {
        let mut best: Option<((usize, bool, usize, usize), usize, usize)> = None;
        for (wi, w) in wants.iter().enumerate() {
            if done.contains(&wi) {
                continue;
            }
            for (idx, c) in parsed.calls.iter().enumerate() {
                if sugar[idx] || matched.contains_key(&idx) || c.kind.as_deref() != Some(w.kind.as_str()) {
                    continue;
                }
                let (m, hits) = compare(w, c, &matched);
                let key = (m.len(), !hits, wi, idx);
                if best.as_ref().is_none_or(|b| key < b.0) {
                    best = Some((key, wi, idx));
                }
            }
        }
        let Some((_, wi, idx)) = best else { break };
        matched.insert(idx, wants[wi].id.clone());
        done.insert(wi);
    }
    for (wi, w) in wants.iter().enumerate() {
        if !done.contains(&wi) {
            report.missing_calls.push(w.id.to_string());
        }
    }
    for (idx, id) in &matched {
        let w = wants.iter().find(|w| &w.id == id).expect("matched wants exist");
        report.flow_mismatches.extend(compare(w, &parsed.calls[*idx], &matched).0);
    }

    for (idx, c) in parsed.calls.iter().enumerate() {
        if !sugar[idx] && !matched.contains_key(&idx) {
            report.orphan_calls.push(c.binding.clone());
        }
        report.call_nodes.push(matched.get(&idx).map(ToString::to_string));
    }

    if let Some(exit) = g.exit() {
        let mut want: Vec<String> = g.incoming_edges(exit.as_str()).map(|e| e.source.to_string()).collect();
        want.sort();
        let mut found: Vec<String> = parsed.terminal.iter().flatten().map(|s| name_of(s, &matched)).collect();
        found.sort();
        found.dedup();
        if want != found {
            report.flow_mismatches.push(FlowMismatch { node: exit.to_string(), port: "return".into(), expected: want, found });
        }
    }
    if g.interface_role(g.exit().map_or("", |e| e.as_str())) != Some(InterfaceRole::Exit) {
        report.parse_errors.push("graph has no single exit".into());
    }
    report
}
