use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ir::{Call, Guard, Operand, ProgramIR, Step};
use super::CodegenError;
use crate::graph::Registry;

const DEFAULT_TEMPLATES: &str = include_str!("../../data/templates/templates.toml");

/// Text templates for one operator kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindTemplate {
    /// Operator class instantiated in the prologue.
    pub class: String,
    /// Attribute the operator object is stored under.
    pub attr: String,
    /// Result field holding the call's output.
    pub output: String,
    /// Result field holding the pass/fail verdict, for branching kinds.
    #[serde(default)]
    pub result: Option<String>,
    pub call: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    #[serde(default = "default_indent")]
    pub indent: String,
    /// Indentation depth of the program body.
    #[serde(default = "default_depth")]
    pub body_depth: usize,
    pub program: String,
    pub operator: String,
    pub prompt: String,
    pub guard_fail: String,
    pub guard_keep: String,
    pub assign: String,
    pub kind: BTreeMap<String, KindTemplate>,
}

fn default_indent() -> String {
    "    ".into()
}

fn default_depth() -> usize {
    2
}

/// Program text and the prompt module it imports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Emitted {
    pub program: String,
    pub prompts: String,
}

/// Replaces every `{{name}}` in `template`. A hole without a value is an error.
pub fn fill(template: &str, what: &str, values: &BTreeMap<&str, String>) -> Result<String, CodegenError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| CodegenError::Template(format!("unclosed hole in {what} template")))?;
        let name = after[..end].trim();
        let v = values.get(name).ok_or_else(|| CodegenError::MissingHole { template: what.to_string(), hole: name.to_string() })?;
        out.push_str(v);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// A Python string literal.
pub fn py_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

impl Templates {
    pub fn default_set() -> Templates {
        Templates::from_toml_str(DEFAULT_TEMPLATES).expect("shipped templates parse")
    }

    pub fn from_toml_str(text: &str) -> Result<Templates, CodegenError> {
        toml::from_str(text).map_err(|e| CodegenError::Template(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Templates, CodegenError> {
        let text = std::fs::read_to_string(path).map_err(|e| CodegenError::Template(format!("{}: {e}", path.display())))?;
        Templates::from_toml_str(&text)
    }

    /// Executable registered kinds without a template.
    pub fn missing_kinds(&self, registry: &Registry) -> Vec<String> {
        registry.kinds().filter(|k| k.executable && !self.kind.contains_key(&k.name)).map(|k| k.name.clone()).collect()
    }

    fn of(&self, kind: &str) -> Result<&KindTemplate, CodegenError> {
        self.kind.get(kind).ok_or_else(|| CodegenError::MissingTemplate(kind.to_string()))
    }

    fn operand(&self, o: &Operand) -> Result<String, CodegenError> {
        Ok(match o {
            Operand::Param { name } | Operand::Var { name } => name.clone(),
            Operand::Output { binding, kind } => format!("{binding}[{}]", py_str_single(&self.of(kind)?.output)),
            Operand::Literal { value } => py_str(value),
            Operand::List { items } => {
                let parts: Result<Vec<String>, _> = items.iter().map(|i| self.operand(i)).collect();
                format!("[{}]", parts?.join(", "))
            }
            Operand::None => "None".into(),
        })
    }

    fn call_line(&self, c: &Call) -> Result<String, CodegenError> {
        let t = self.of(&c.kind)?;
        let mut values: BTreeMap<&str, String> = BTreeMap::new();
        values.insert("binding", c.binding.clone());
        for (port, op) in &c.args {
            values.insert(port.as_str(), self.operand(op)?);
        }
        for (key, v) in &c.attrs {
            values.entry(key.as_str()).or_insert_with(|| py_str(v));
        }
        let prompt_keys: BTreeMap<String, String> = c.prompts.iter().map(|(k, name)| (format!("{k}_prompt"), format!("prompt_custom.{name}"))).collect();
        for (k, v) in &prompt_keys {
            values.insert(k.as_str(), v.clone());
        }
        fill(&t.call, &c.kind, &values)
    }

    fn guard_lines(&self, g: &Guard, depth: usize, out: &mut Vec<(usize, String)>) -> Result<(), CodegenError> {
        let t = self.of(&g.test.kind)?;
        let result = t.result.clone().ok_or_else(|| CodegenError::Template(format!("{} template has no result field", g.test.kind)))?;
        out.push((depth, self.call_line(&g.test)?));
        let test_out = self.operand(&Operand::Output { binding: g.test.binding.clone(), kind: g.test.kind.clone() })?;
        out.push((depth, fill(&self.assign, "assign", &BTreeMap::from([("name", g.merged.clone()), ("value", test_out)]))?));
        out.push((depth, fill(&self.guard_fail, "guard_fail", &BTreeMap::from([("test", g.test.binding.clone()), ("result", result.clone())]))?));
        out.push((depth + 1, self.call_line(&g.repair)?));
        out.push((depth + 1, self.call_line(&g.retest)?));
        out.push((depth + 1, fill(&self.guard_keep, "guard_keep", &BTreeMap::from([("retest", g.retest.binding.clone()), ("result", result)]))?));
        let repair_out = self.operand(&Operand::Output { binding: g.repair.binding.clone(), kind: g.repair.kind.clone() })?;
        out.push((depth + 2, fill(&self.assign, "assign", &BTreeMap::from([("name", g.merged.clone()), ("value", repair_out)]))?));
        Ok(())
    }
}

/// Result-field subscripts use single quotes, as in hand-written programs.
fn py_str_single(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

/// Renders the program and its prompt module. Pure text substitution.
pub fn emit(ir: &ProgramIR, templates: &Templates) -> Result<Emitted, CodegenError> {
    let indent = |depth: usize, line: &str| -> String {
        line.lines().map(|l| format!("{}{l}", templates.indent.repeat(depth))).collect::<Vec<_>>().join("\n")
    };
    let depth = templates.body_depth;

    let mut operators: Vec<String> = Vec::new();
    let mut declared: Vec<&str> = Vec::new();
    for c in ir.calls() {
        if declared.contains(&c.kind.as_str()) {
            continue;
        }
        declared.push(&c.kind);
        let t = templates.of(&c.kind)?;
        let line = fill(&templates.operator, "operator", &BTreeMap::from([("attr", t.attr.clone()), ("class", t.class.clone())]))?;
        operators.push(indent(depth, &line));
    }

    let mut lines: Vec<(usize, String)> = Vec::new();
    for s in &ir.steps {
        match s {
            Step::Call(c) => lines.push((depth, templates.call_line(c)?)),
            Step::Guard(g) => templates.guard_lines(g, depth, &mut lines)?,
        }
    }
    let body: Vec<String> = lines.iter().map(|(d, l)| indent(*d, l)).collect();

    let params = ir.params.iter().map(|p| format!("{p}: str")).collect::<Vec<_>>().join(", ");
    let values = BTreeMap::from([
        ("operators", operators.join("\n")),
        ("params", params),
        ("body", body.join("\n")),
        ("terminal", templates.operand(&ir.terminal)?),
    ]);
    let program = fill(&templates.program, "program", &values)?;

    let mut prompts = String::new();
    for (name, text) in ir.prompts.iter() {
        prompts.push_str(&fill(&templates.prompt, "prompt", &BTreeMap::from([("name", name.to_string()), ("text", py_str(text))]))?);
        prompts.push('\n');
    }
    Ok(Emitted { program, prompts })
}
