//! Node-type registry: port signatures, attribute keys and styling per kind.
//!
//! The shipped default lives in `data/registry.toml`; a replacement file with
//! the same layout can be loaded with [`Registry::from_path`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Domain, NodeKind};

const DEFAULT_REGISTRY: &str = include_str!("../../data/registry.toml");

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read registry {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed registry: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid registry: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainRestriction {
    #[default]
    Any,
    Math,
    Code,
}

impl DomainRestriction {
    pub fn allows(self, domain: Domain) -> bool {
        match self {
            DomainRestriction::Any => true,
            DomainRestriction::Math => domain == Domain::Math,
            DomainRestriction::Code => domain == Domain::Code,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Box,
    Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortSchema {
    pub label: String,
    pub accepts: Vec<String>,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub multi: bool,
    #[serde(default)]
    pub min_count: usize,
    #[serde(default)]
    pub label_required: bool,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub fallback: Option<String>,
}

impl PortSchema {
    pub fn accepts(&self, ty: &str) -> bool {
        self.accepts.iter().any(|a| a == ty)
    }

    pub fn matches_label(&self, label: &str) -> bool {
        self.label == label || self.aliases.iter().any(|a| a == label)
    }

    /// Label written on edges created into this port.
    pub fn edge_label(&self) -> Option<String> {
        self.label_required.then(|| self.label.clone())
    }

    /// Smallest number of edges the port needs when nothing else feeds it.
    pub fn needed(&self) -> usize {
        if self.multi {
            self.min_count.max(usize::from(self.required))
        } else {
            usize::from(self.required)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSchema {
    pub key: String,
    #[serde(default)]
    pub required: bool,
    /// Values of this key name an entry in the prompt table.
    #[serde(default)]
    pub prompt_ref: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeTypeSchema {
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub display: String,
    pub style: String,
    #[serde(default)]
    pub domain: DomainRestriction,
    pub output: String,
    #[serde(default)]
    pub branches: Vec<String>,
    #[serde(default)]
    pub input: Vec<PortSchema>,
    #[serde(default)]
    pub attribute: Vec<AttributeSchema>,
    #[serde(default)]
    pub shape: Shape,
    #[serde(default = "yes")]
    pub executable: bool,
    /// Not part of the always-emitted class block.
    #[serde(default)]
    pub optional: bool,
}

fn yes() -> bool {
    true
}

impl NodeTypeSchema {
    pub fn kind(&self) -> NodeKind {
        NodeKind::new(self.name.clone())
    }

    pub fn port(&self, label: &str) -> Option<&PortSchema> {
        self.input.iter().find(|p| p.matches_label(label))
    }

    pub fn required_attributes(&self) -> impl Iterator<Item = &AttributeSchema> {
        self.attribute.iter().filter(|a| a.required)
    }

    pub fn prompt_keys(&self) -> impl Iterator<Item = &str> {
        self.attribute.iter().filter(|a| a.prompt_ref).map(|a| a.key.as_str())
    }

    pub fn is_branch(&self, label: &str) -> bool {
        self.branches.iter().any(|b| b == label)
    }

    /// Port that accepts `ty`, preferring the first declared.
    pub fn port_accepting(&self, ty: &str) -> Option<&PortSchema> {
        self.input.iter().find(|p| p.accepts(ty))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceSchema {
    pub kind: String,
    pub display: String,
    pub style: String,
    pub entry_hints: Vec<String>,
    pub exit_hints: Vec<String>,
    pub default_payload: String,
    #[serde(default)]
    pub payloads: BTreeMap<String, String>,
    pub exit_accepts: Vec<String>,
    #[serde(skip)]
    exit_port: Vec<PortSchema>,
}

impl InterfaceSchema {
    /// Payload carried by an entry with this id.
    pub fn payload_of<'a>(&'a self, id: &str) -> &'a str {
        self.payloads.get(id).map_or(self.default_payload.as_str(), String::as_str)
    }

    pub fn exit_port(&self) -> &PortSchema {
        &self.exit_port[0]
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    interface: InterfaceSchema,
    #[serde(default)]
    kind: Vec<NodeTypeSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    pub interface: InterfaceSchema,
    kinds: BTreeMap<String, NodeTypeSchema>,
    /// Declaration order, used for class blocks.
    order: Vec<String>,
    aliases: BTreeMap<String, String>,
}

impl Default for Registry {
    fn default() -> Self {
        Registry::from_toml_str(DEFAULT_REGISTRY).expect("shipped registry parses")
    }
}

impl Registry {
    /// Process-wide shared copy of the default registry.
    pub fn shared_default() -> Arc<Registry> {
        static DEFAULT: OnceLock<Arc<Registry>> = OnceLock::new();
        DEFAULT.get_or_init(|| Arc::new(Registry::default())).clone()
    }

    pub fn default_toml() -> &'static str {
        DEFAULT_REGISTRY
    }

    pub fn from_path(path: &Path) -> Result<Registry, RegistryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| RegistryError::Io { path: path.display().to_string(), source })?;
        Registry::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Registry, RegistryError> {
        let file: RegistryFile = toml::from_str(text)?;
        let mut interface = file.interface;
        if interface.kind != NodeKind::INTERFACE {
            return Err(RegistryError::Invalid(format!("interface kind must be named {}", NodeKind::INTERFACE)));
        }
        interface.exit_port = vec![PortSchema {
            label: "solution".into(),
            accepts: interface.exit_accepts.clone(),
            required: true,
            multi: false,
            min_count: 0,
            label_required: false,
            aliases: Vec::new(),
            fallback: None,
        }];
        let mut kinds = BTreeMap::new();
        let mut order = Vec::new();
        let mut aliases = BTreeMap::new();
        for schema in file.kind {
            check_schema(&schema)?;
            if schema.name == NodeKind::INTERFACE || schema.name == NodeKind::UNCLASSIFIED {
                return Err(RegistryError::Invalid(format!("kind name {} is reserved", schema.name)));
            }
            for alias in &schema.aliases {
                if aliases.insert(alias.clone(), schema.name.clone()).is_some() {
                    return Err(RegistryError::Invalid(format!("alias {alias} declared twice")));
                }
            }
            order.push(schema.name.clone());
            if kinds.insert(schema.name.clone(), schema).is_some() {
                return Err(RegistryError::Invalid(format!("kind {} declared twice", order.last().unwrap())));
            }
        }
        if let Some(clash) = aliases.keys().find(|a| kinds.contains_key(*a)) {
            return Err(RegistryError::Invalid(format!("alias {clash} shadows a kind")));
        }
        Ok(Registry { interface, kinds, order, aliases })
    }

    /// Canonical kind name for a class name, following aliases.
    pub fn canonical<'a>(&'a self, name: &'a str) -> Option<&'a str> {
        if name == NodeKind::INTERFACE {
            return Some(NodeKind::INTERFACE);
        }
        if let Some((k, _)) = self.kinds.get_key_value(name) {
            return Some(k.as_str());
        }
        self.aliases.get(name).map(String::as_str)
    }

    pub fn is_known(&self, name: &str) -> bool {
        self.canonical(name).is_some()
    }

    /// Schema of a non-interface kind.
    pub fn schema(&self, name: &str) -> Option<&NodeTypeSchema> {
        self.kinds.get(name).or_else(|| self.aliases.get(name).and_then(|n| self.kinds.get(n)))
    }

    /// Kinds in declaration order.
    pub fn kinds(&self) -> impl Iterator<Item = &NodeTypeSchema> {
        self.order.iter().map(|n| &self.kinds[n])
    }

    /// Kinds always present in a serialized class block, plus Interface.
    pub fn standard_class_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.kinds().filter(|k| !k.optional).map(|k| k.name.as_str()).collect();
        names.push(NodeKind::INTERFACE);
        names
    }

    pub fn style_of(&self, name: &str) -> Option<&str> {
        if name == NodeKind::INTERFACE {
            return Some(&self.interface.style);
        }
        self.schema(name).map(|s| s.style.as_str())
    }

    pub fn display_of(&self, name: &str) -> Option<&str> {
        if name == NodeKind::INTERFACE {
            return Some(&self.interface.display);
        }
        self.schema(name).map(|s| s.display.as_str())
    }

    /// Input ports of a kind. Interface nodes are given the exit port.
    pub fn input_ports(&self, kind: &NodeKind) -> &[PortSchema] {
        if kind.is_interface() {
            return std::slice::from_ref(self.interface.exit_port());
        }
        self.schema(kind.as_str()).map_or(&[], |s| s.input.as_slice())
    }

    /// Every semantic type named anywhere in the registry.
    pub fn semantic_types(&self) -> BTreeSet<&str> {
        let mut out: BTreeSet<&str> = BTreeSet::new();
        out.insert(&self.interface.default_payload);
        out.extend(self.interface.payloads.values().map(String::as_str));
        for k in self.kinds.values() {
            out.insert(&k.output);
            for p in &k.input {
                out.extend(p.accepts.iter().map(String::as_str));
            }
        }
        out
    }
}

fn check_schema(s: &NodeTypeSchema) -> Result<(), RegistryError> {
    let bad = |msg: String| Err(RegistryError::Invalid(format!("kind {}: {msg}", s.name)));
    if !super::is_identifier(&s.name) {
        return bad("name is not an identifier".into());
    }
    let mut labels = BTreeSet::new();
    for p in &s.input {
        for l in std::iter::once(&p.label).chain(&p.aliases) {
            if !labels.insert(l.as_str()) {
                return bad(format!("port label {l} used twice"));
            }
        }
        if p.accepts.is_empty() {
            return bad(format!("port {} accepts nothing", p.label));
        }
        if !p.multi && p.min_count > 1 {
            return bad(format!("port {} has min_count {} but is not multi", p.label, p.min_count));
        }
    }
    for b in &s.branches {
        if labels.contains(b.as_str()) {
            return bad(format!("branch {b} collides with a port label"));
        }
    }
    let mut keys = BTreeSet::new();
    for a in &s.attribute {
        if !keys.insert(a.key.as_str()) {
            return bad(format!("attribute {} declared twice", a.key));
        }
    }
    Ok(())
}
