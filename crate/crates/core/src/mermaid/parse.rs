//! Line-oriented parser for the flowchart dialect.

use serde::Serialize;

use crate::diagnostic::{Diagnostic, Rule, SourceSpan};
use crate::graph::is_identifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    TD,
    TB,
    LR,
    RL,
    BT,
}

impl Direction {
    fn parse(s: &str) -> Option<Direction> {
        Some(match s {
            "TD" => Direction::TD,
            "TB" => Direction::TB,
            "LR" => Direction::LR,
            "RL" => Direction::RL,
            "BT" => Direction::BT,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeShape {
    /// `ID` with no brackets.
    Bare,
    /// `ID[...]`
    Box,
    /// `ID(...)`
    Round,
    /// `ID([...])`
    Stadium,
    /// `ID{...}`
    Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeDecl {
    pub id: String,
    pub shape: NodeShape,
    pub display: String,
    pub attributes: Vec<(String, String)>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EdgeStmt {
    pub source: String,
    pub target: String,
    pub label: Option<String>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Statement {
    Node(NodeDecl),
    ClassDef { name: String, style: String, span: SourceSpan },
    ClassAssign { ids: Vec<String>, class: String, span: SourceSpan },
    Edge(EdgeStmt),
    Comment { text: String, span: SourceSpan },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptEntry {
    pub name: String,
    pub text: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MermaidDocument {
    pub header: Option<Direction>,
    pub statements: Vec<Statement>,
    pub prompts: Option<Vec<PromptEntry>>,
    /// Syntax findings; empty iff the text is inside the dialect.
    pub diagnostics: Vec<Diagnostic>,
}

impl MermaidDocument {
    pub fn node_decls(&self) -> impl Iterator<Item = &NodeDecl> {
        self.statements.iter().filter_map(|s| match s {
            Statement::Node(d) => Some(d),
            _ => None,
        })
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeStmt> {
        self.statements.iter().filter_map(|s| match s {
            Statement::Edge(e) => Some(e),
            _ => None,
        })
    }

    /// Value of a `%% domain: X` directive comment, if present.
    pub fn domain_directive(&self) -> Option<&str> {
        self.statements.iter().find_map(|s| match s {
            Statement::Comment { text, .. } => text.strip_prefix("domain:").map(str::trim),
            _ => None,
        })
    }
}

const UNSUPPORTED: &[&str] = &["subgraph", "end", "style", "linkStyle", "click", "direction", "callback"];

/// Parses flowchart text. Never fails; problems are recorded as diagnostics.
pub fn parse_workflow(text: &str) -> MermaidDocument {
    let mut p = Parser { doc: MermaidDocument { header: None, statements: Vec::new(), prompts: None, diagnostics: Vec::new() }, declared: Vec::new(), classes: Vec::new() };
    let lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    let mut in_prompt = false;
    let mut prompt_closed = false;
    let mut prompt_open_line = 0;
    for (idx, raw) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let indent = raw.len() - raw.trim_start().len();
        let col = raw[..indent].chars().count() + 1;
        let line = raw.trim();
        let span = SourceSpan::new(line_no, col, line.chars().count());
        if in_prompt {
            let (body, closes) = match line.strip_suffix("</prompt>") {
                Some(b) => (b.trim_end(), true),
                None => (line, false),
            };
            if !body.is_empty() {
                p.prompt_entry(body, span);
            }
            if closes {
                in_prompt = false;
                prompt_closed = true;
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix("%%") {
            p.doc.statements.push(Statement::Comment { text: c.trim().to_string(), span });
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            p.doc.statements.push(Statement::Comment { text: c.trim().to_string(), span });
            continue;
        }
        if prompt_closed {
            p.error("statement after the prompt block", span);
            continue;
        }
        if let Some(rest) = line.strip_prefix("<prompt>") {
            if p.doc.prompts.is_some() {
                p.error("second prompt block", span);
            }
            p.doc.prompts.get_or_insert_with(Vec::new);
            prompt_open_line = line_no;
            in_prompt = true;
            let (body, closes) = match rest.trim().strip_suffix("</prompt>") {
                Some(b) => (b.trim(), true),
                None => (rest.trim(), false),
            };
            if !body.is_empty() {
                let off = line.len() - rest.len() + (rest.len() - rest.trim_start().len());
                p.prompt_entry(body, SourceSpan::new(line_no, col + off, body.chars().count()));
            }
            if closes {
                in_prompt = false;
                prompt_closed = true;
            }
            continue;
        }
        if p.doc.header.is_none() {
            p.header(line, span);
            continue;
        }
        p.statement(line, span);
    }
    if in_prompt {
        let len = lines.get(prompt_open_line - 1).map_or(0, |l| l.trim().chars().count());
        let col = lines.get(prompt_open_line - 1).map_or(1, |l| l.len() - l.trim_start().len() + 1);
        p.error("unterminated prompt block", SourceSpan::new(prompt_open_line, col, len));
    }
    if p.doc.header.is_none() {
        p.error("missing flowchart header", SourceSpan::new(1, 1, lines.first().map_or(0, |l| l.chars().count())));
    }
    p.doc
}

struct Parser {
    doc: MermaidDocument,
    declared: Vec<String>,
    classes: Vec<(String, String)>,
}

impl Parser {
    fn error(&mut self, msg: impl Into<String>, span: SourceSpan) {
        self.doc.diagnostics.push(Diagnostic::error(Rule::Syntax, msg).at(span));
    }

    fn header(&mut self, line: &str, span: SourceSpan) {
        let line = line.trim_end_matches(';');
        let mut words = line.split_whitespace();
        let kw = words.next().unwrap_or("");
        if kw != "flowchart" && kw != "graph" {
            self.error("expected a flowchart header such as `flowchart TD`", span);
            self.doc.header = Some(Direction::TD);
            return;
        }
        let dir = words.next().unwrap_or("TD");
        match Direction::parse(dir) {
            Some(d) if words.next().is_none() => self.doc.header = Some(d),
            _ => {
                self.error(format!("unsupported flowchart direction {dir:?}"), span);
                self.doc.header = Some(Direction::TD);
            }
        }
    }

    fn prompt_entry(&mut self, body: &str, span: SourceSpan) {
        let Some(eq) = body.find('=') else {
            self.error("prompt entry must look like NAME=\"text\"", span);
            return;
        };
        let name = body[..eq].trim();
        let value = body[eq + 1..].trim();
        if !is_identifier(name) {
            self.error(format!("invalid prompt name {name:?}"), span);
            return;
        }
        let Some(inner) = value.strip_prefix('"') else {
            self.error(format!("prompt {name} text must be double-quoted"), span);
            return;
        };
        let Some(text) = unescape_prompt(inner) else {
            self.error(format!("unterminated string in prompt {name}"), span);
            return;
        };
        let prompts = self.doc.prompts.get_or_insert_with(Vec::new);
        if prompts.iter().any(|p| p.name == name) {
            self.error(format!("duplicate prompt {name}"), span);
            return;
        }
        prompts.push(PromptEntry { name: name.to_string(), text, span });
    }

    fn statement(&mut self, line: &str, span: SourceSpan) {
        let body = line.strip_suffix(';').map_or(line, str::trim_end);
        let first = body.split_whitespace().next().unwrap_or("");
        if first == "classDef" {
            return self.class_def(body, span);
        }
        if first == "class" {
            return self.class_assign(body, span);
        }
        if UNSUPPORTED.contains(&first) {
            return self.error(format!("unsupported statement `{first}`"), span);
        }
        self.chain(body, span);
    }

    fn class_def(&mut self, body: &str, span: SourceSpan) {
        let rest = body["classDef".len()..].trim();
        let (name, style) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        if !is_identifier(name) {
            return self.error("classDef needs a class name", span);
        }
        self.doc.statements.push(Statement::ClassDef { name: name.to_string(), style: style.trim().to_string(), span });
    }

    fn class_assign(&mut self, body: &str, span: SourceSpan) {
        let parts: Vec<&str> = body.split_whitespace().collect();
        let (ids, class): (Vec<String>, &str) = match parts.as_slice() {
            [_, rest @ ..] if rest.len() >= 2 => {
                let joined = rest[..rest.len() - 1].concat();
                (joined.split(',').map(|s| s.trim().to_string()).collect(), rest[rest.len() - 1])
            }
            _ => return self.error("class statement must look like `class ID[,ID...] NAME`", span),
        };
        if ids.iter().any(|i| !is_identifier(i)) || !is_identifier(class) {
            return self.error("class statement must look like `class ID[,ID...] NAME`", span);
        }
        for id in &ids {
            if let Some((_, prev)) = self.classes.iter().find(|(i, _)| i == id) {
                if prev != class {
                    let msg = format!("conflicting class assignment for {id}");
                    self.error(msg, span);
                }
                continue;
            }
            self.classes.push((id.clone(), class.to_string()));
        }
        self.doc.statements.push(Statement::ClassAssign { ids, class: class.to_string(), span });
    }

    /// Node declaration or edge chain `A[..] --> |l| B --> C`.
    fn chain(&mut self, body: &str, span: SourceSpan) {
        let mut cur = Cursor { s: body, pos: 0 };
        let at = |pos: usize| SourceSpan::new(span.line, span.column + body[..pos].chars().count(), 1);
        let mut out = Vec::new();
        let mut prev = match self.endpoint(&mut cur, span) {
            Ok(Some(decl)) => {
                let id = decl.id.clone();
                out.push(Statement::Node(decl));
                id
            }
            Ok(None) => return self.error("unrecognized statement", span),
            Err(msg) => return self.error(msg, span),
        };
        loop {
            cur.skip_ws();
            if cur.done() {
                break;
            }
            let op_pos = cur.pos;
            let label = if cur.eat("-->") {
                cur.skip_ws();
                if cur.eat("|") {
                    match cur.take_until("|") {
                        Some(l) => Some(decode_entities(strip_quotes(l.trim()))),
                        None => return self.error("unterminated edge label", at(op_pos)),
                    }
                } else {
                    None
                }
            } else if cur.eat("-- ") || cur.eat("--\t") {
                match cur.take_until("-->") {
                    Some(l) => Some(decode_entities(strip_quotes(l.trim()))),
                    None => return self.error("unterminated edge text", at(op_pos)),
                }
            } else {
                return self.error("unrecognized statement", span);
            };
            let label = label.filter(|l| !l.is_empty());
            cur.skip_ws();
            if cur.done() {
                return self.error("edge is missing its target node", span);
            }
            let target = match self.endpoint(&mut cur, span) {
                Ok(Some(decl)) => decl,
                Ok(None) => return self.error("edge is missing its target node", span),
                Err(msg) => return self.error(msg, span),
            };
            let tid = target.id.clone();
            if target.shape != NodeShape::Bare {
                out.push(Statement::Node(target));
            }
            out.push(Statement::Edge(EdgeStmt { source: prev, target: tid.clone(), label, span }));
            prev = tid;
        }
        // A lone bare id is a declaration; bare endpoints of edges are not.
        let is_edge = out.iter().any(|s| matches!(s, Statement::Edge(_)));
        for st in out {
            if let Statement::Node(d) = &st {
                if d.shape == NodeShape::Bare {
                    if is_edge || self.declared.contains(&d.id) {
                        continue;
                    }
                    self.doc.statements.push(st);
                    continue;
                }
                if self.declared.contains(&d.id) {
                    let msg = format!("duplicate node declaration {}", d.id);
                    self.error(msg, span);
                    continue;
                }
                self.declared.push(d.id.clone());
            }
            self.doc.statements.push(st);
        }
    }

    /// Reads `ID` with an optional shape. `Ok(None)` when no id starts here.
    fn endpoint(&mut self, cur: &mut Cursor, span: SourceSpan) -> Result<Option<NodeDecl>, String> {
        let start = cur.pos;
        let id = cur.ident();
        if id.is_empty() {
            return Ok(None);
        }
        let (shape, closer) = if cur.eat("([") {
            (NodeShape::Stadium, "])")
        } else if cur.eat("[") {
            (NodeShape::Box, "]")
        } else if cur.eat("(") {
            (NodeShape::Round, ")")
        } else if cur.eat("{") {
            (NodeShape::Decision, "}")
        } else {
            let span = SourceSpan::new(span.line, span.column + cur.s[..start].chars().count(), id.chars().count());
            return Ok(Some(NodeDecl { id: id.to_string(), shape: NodeShape::Bare, display: id.to_string(), attributes: Vec::new(), span }));
        };
        let label = if cur.eat("\"") {
            let Some(l) = cur.take_until("\"") else { return Err("unterminated string".into()) };
            if !cur.eat(closer) {
                return Err(format!("unterminated label: expected `{closer}` after the quoted text"));
            }
            l
        } else {
            match cur.take_until(closer) {
                Some(l) => l,
                None => return Err(format!("unterminated label: missing `{closer}`")),
            }
        };
        let (display, attributes) = split_label(&decode_entities(label))?;
        let len = cur.s[start..cur.pos].chars().count();
        let span = SourceSpan::new(span.line, span.column + cur.s[..start].chars().count(), len);
        Ok(Some(NodeDecl { id: id.to_string(), shape, display, attributes, span }))
    }
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn done(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn skip_ws(&mut self) {
        let r = self.rest();
        self.pos += r.len() - r.trim_start().len();
    }

    fn eat(&mut self, tok: &str) -> bool {
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> &'a str {
        let r = self.rest();
        let mut end = 0;
        for (i, c) in r.char_indices() {
            let ok = if i == 0 { c.is_ascii_alphabetic() || c == '_' } else { c.is_ascii_alphanumeric() || c == '_' };
            if !ok {
                break;
            }
            end = i + c.len_utf8();
        }
        self.pos += end;
        &r[..end]
    }

    fn take_until(&mut self, tok: &str) -> Option<&'a str> {
        let r = self.rest();
        let i = r.find(tok)?;
        self.pos += i + tok.len();
        Some(&r[..i])
    }
}

fn strip_quotes(s: &str) -> &str {
    s.strip_prefix('"').and_then(|x| x.strip_suffix('"')).unwrap_or(s)
}

const ENTITIES: &[(&str, char)] = &[("#quot;", '"'), ("#35;", '#'), ("#lt;", '<'), ("#gt;", '>'), ("#124;", '|')];

pub(crate) fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('#') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        match ENTITIES.iter().find(|(e, _)| rest.starts_with(e)) {
            Some((e, c)) => {
                out.push(*c);
                rest = &rest[e.len()..];
            }
            None => {
                out.push('#');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

pub(crate) fn encode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match ENTITIES.iter().find(|(_, ch)| *ch == c) {
            Some((e, _)) => out.push_str(e),
            None => out.push(c),
        }
    }
    out
}

const BREAKS: &[&str] = &["<br/>", "<br />", "<br>"];

/// Splits `Display<br/>(k: v, ...)` into the display text and attributes.
fn split_label(label: &str) -> Result<(String, Vec<(String, String)>), String> {
    let Some((pos, br)) = BREAKS.iter().filter_map(|b| label.find(b).map(|p| (p, *b))).min() else {
        return Ok((label.trim().to_string(), Vec::new()));
    };
    let display = label[..pos].trim().to_string();
    let rest = label[pos + br.len()..].trim();
    if rest.is_empty() {
        return Ok((display, Vec::new()));
    }
    if !rest.starts_with('(') {
        return Ok((label.trim().to_string(), Vec::new()));
    }
    let inner = attribute_list_body(rest)?;
    Ok((display, parse_attributes(inner)?))
}

/// Body of a parenthesised attribute list. A list that runs to the end of the
/// label and ends in `]` is treated as closed by that bracket.
fn attribute_list_body(s: &str) -> Result<&str, String> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    if !s[i + 1..].trim().is_empty() {
                        return Err(format!("unexpected text after attribute list: {:?}", s[i + 1..].trim()));
                    }
                    return Ok(&s[1..i]);
                }
            }
            _ => {}
        }
    }
    if quote.is_none() && depth == 1 {
        if let Some(body) = s.strip_suffix(']') {
            return Ok(&body[1..]);
        }
    }
    Err(if quote.is_some() { "unterminated string in attribute list".into() } else { "unterminated attribute list".into() })
}

fn parse_attributes(body: &str) -> Result<Vec<(String, String)>, String> {
    let mut out: Vec<(String, String)> = Vec::new();
    for item in split_top_level(body) {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let Some((k, v)) = item.split_once(':') else {
            return Err(format!("malformed attribute {item:?}, expected `key: value`"));
        };
        let k = k.trim();
        if !is_identifier(k) {
            return Err(format!("invalid attribute key {k:?}"));
        }
        if out.iter().any(|(x, _)| x == k) {
            return Err(format!("attribute {k} given twice"));
        }
        out.push((k.to_string(), unquote_value(v.trim())?));
    }
    Ok(out)
}

fn split_top_level(body: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in body.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&body[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&body[start..]);
    parts
}

fn unquote_value(v: &str) -> Result<String, String> {
    let Some(q) = v.chars().next().filter(|c| *c == '\'' || *c == '"') else {
        return Ok(v.to_string());
    };
    let inner = &v[1..];
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some(n) => out.push(n),
                None => break,
            }
        } else if c == q {
            let tail: String = chars.collect();
            if !tail.trim().is_empty() {
                return Err(format!("unexpected text after quoted value: {:?}", tail.trim()));
            }
            return Ok(out);
        } else {
            out.push(c);
        }
    }
    Err("unterminated string in attribute value".into())
}

/// Unescapes the body of a prompt string up to its closing quote.
fn unescape_prompt(s: &str) -> Option<String> {
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next()? {
                'n' => out.push('\n'),
                't' => out.push('\t'),
                '"' => out.push('"'),
                '\\' => out.push('\\'),
                other => {
                    out.push('\\');
                    out.push(other);
                }
            },
            '"' => {
                return chars.as_str().trim().is_empty().then_some(out);
            }
            c => out.push(c),
        }
    }
    None
}

pub(crate) fn escape_prompt(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}
