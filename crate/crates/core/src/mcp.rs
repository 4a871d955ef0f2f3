//! MCP tool registry, prompt-block rendering, and call dispatch.
//!
//! The registry is immutable after construction. Dispatch validates the call
//! against the tool schema before any transport round-trip, forwards
//! `{tool, arguments}` over a [`ToolTransport`], and shapes the reply into a
//! [`ToolResult`] with head-truncation above the configured content cap.
//! A fixture transport replays canned responses keyed by (tool, canonical
//! params digest) so whole task suites run offline.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::device::transport::TransportError;

pub const DEFAULT_CONTENT_CAP: usize = 4_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum McpError {
    #[error("duplicate tool {server}/{name}")]
    DuplicateTool { server: String, name: String },
    #[error("catalog {path}: {reason}")]
    BadCatalog { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(rename = "type")]
    pub param_type: String,
    #[serde(default)]
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub server: String,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub param_schema: BTreeMap<String, ParamSpec>,
}

/// Immutable tool registry indexed by (server, name).
#[derive(Debug, Clone, Default)]
pub struct Registry {
    tools: BTreeMap<(String, String), ToolSpec>,
}

pub fn register_catalog(specs: impl IntoIterator<Item = ToolSpec>) -> Result<Registry, McpError> {
    let mut tools = BTreeMap::new();
    for spec in specs {
        let key = (spec.server.clone(), spec.name.clone());
        if tools.insert(key, spec.clone()).is_some() {
            return Err(McpError::DuplicateTool { server: spec.server, name: spec.name });
        }
    }
    Ok(Registry { tools })
}

impl Registry {
    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// Tool count per server, in server name order.
    pub fn server_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for (server, _) in self.tools.keys() {
            *counts.entry(server.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn tools(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.values()
    }

    /// Looks a tool up by bare name, the only identifier an `mcp_call`
    /// carries. Shipped catalogs keep tool names globally unique.
    pub fn find_by_name(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.values().find(|t| t.name == name)
    }

    pub fn contains(&self, server: &str, name: &str) -> bool {
        self.tools.contains_key(&(server.to_string(), name.to_string()))
    }

    /// A new registry restricted to an allowlist of (server, name) pairs.
    pub fn restricted_to(&self, allowlist: &BTreeSet<(String, String)>) -> Registry {
        Registry {
            tools: self
                .tools
                .iter()
                .filter(|(key, _)| allowlist.contains(*key))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

/// Renders the tool specifications injected into the planner system prompt:
/// deterministic (server, name) order, one block per tool. An empty
/// allowlist renders an explicit no-tools line.
pub fn render_tool_block(registry: &Registry, allowlist: &BTreeSet<(String, String)>) -> String {
    let mut blocks = Vec::new();
    for ((server, name), spec) in &registry.tools {
        if !allowlist.contains(&(server.clone(), name.clone())) {
            continue;
        }
        let mut lines = vec![format!("### {server} / {name}"), spec.description.clone()];
        if spec.param_schema.is_empty() {
            lines.push("Parameters: none".to_string());
        } else {
            let params = spec
                .param_schema
                .iter()
                .map(|(pname, p)| {
                    format!("{pname} ({}, {})", p.param_type, if p.required { "required" } else { "optional" })
                })
                .collect::<Vec<_>>()
                .join("; ");
            lines.push(format!("Parameters: {params}"));
        }
        blocks.push(lines.join("\n"));
    }
    if blocks.is_empty() {
        "No MCP tools are available for this task.".to_string()
    } else {
        blocks.join("\n\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Ok,
    ToolError,
    TransportError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub status: ToolStatus,
    pub content: String,
    pub truncated: bool,
    pub original_length: usize,
}

impl ToolResult {
    fn ok(content: String) -> Self {
        let original_length = content.chars().count();
        Self { status: ToolStatus::Ok, content, truncated: false, original_length }
    }

    fn tool_error(message: impl Into<String>) -> Self {
        let content = message.into();
        let original_length = content.chars().count();
        Self { status: ToolStatus::ToolError, content, truncated: false, original_length }
    }

    fn transport_error(message: impl Into<String>) -> Self {
        let content = message.into();
        let original_length = content.chars().count();
        Self { status: ToolStatus::TransportError, content, truncated: false, original_length }
    }

    /// Head-truncates the content to `cap` characters, appending a marker
    /// naming how much was dropped. Idempotent: an already-truncated result
    /// is returned unchanged, as is anything within the cap.
    pub fn truncated_to(self, cap: usize) -> Self {
        if self.truncated || self.original_length <= cap {
            return self;
        }
        let head: String = self.content.chars().take(cap).collect();
        let omitted = self.original_length - cap;
        Self {
            status: self.status,
            content: format!("{head}…[truncated, {omitted} chars omitted]"),
            truncated: true,
            original_length: self.original_length,
        }
    }
}

/// Reply shapes a tool transport can produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolReply {
    Content(String),
    Error(String),
}

pub trait ToolTransport {
    fn call(&mut self, tool: &str, arguments: &Map<String, Value>) -> Result<ToolReply, TransportError>;
}

/// Sends one `mcp_call` through the registry. Unknown tools and missing
/// required parameters are tool errors decided locally, with no transport
/// round-trip; transport failures surface as `transport_error` results.
pub fn dispatch(
    registry: &Registry,
    tool_name: &str,
    params: &Map<String, Value>,
    transport: &mut dyn ToolTransport,
    content_cap: usize,
) -> ToolResult {
    let Some(spec) = registry.find_by_name(tool_name) else {
        return ToolResult::tool_error(format!("unknown tool {tool_name:?}"));
    };

    let missing: Vec<&str> = spec
        .param_schema
        .iter()
        .filter(|(name, p)| p.required && !params.contains_key(*name))
        .map(|(name, _)| name.as_str())
        .collect();
    if !missing.is_empty() {
        return ToolResult::tool_error(format!("missing required params: {}", missing.join(", ")));
    }

    match transport.call(tool_name, params) {
        Ok(ToolReply::Content(content)) => ToolResult::ok(content).truncated_to(content_cap),
        Ok(ToolReply::Error(message)) => ToolResult::tool_error(message),
        Err(e) => ToolResult::transport_error(e.to_string()),
    }
}

/// Hex SHA-256 of the canonical (key-ordered) JSON of a params map; the
/// fixture transport keys its records by (tool, this digest).
pub fn canonical_params_digest(params: &Map<String, Value>) -> String {
    let canonical = serde_json::to_vec(&Value::Object(params.clone())).expect("params serialize");
    hex::encode(Sha256::digest(canonical))
}

#[derive(Debug, Clone, Deserialize)]
struct FixtureRecord {
    tool: String,
    /// Either inline params (digested at load) or a precomputed digest.
    #[serde(default)]
    params: Option<Map<String, Value>>,
    #[serde(default)]
    params_digest: Option<String>,
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

/// Offline transport replaying recorded responses.
#[derive(Debug, Clone, Default)]
pub struct FixtureTransport {
    responses: BTreeMap<(String, String), ToolReply>,
}

impl FixtureTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tool: &str, params: &Map<String, Value>, reply: ToolReply) {
        self.responses.insert((tool.to_string(), canonical_params_digest(params)), reply);
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, McpError> {
        let path = path.as_ref();
        let bad = |reason: String| McpError::BadCatalog { path: path.display().to_string(), reason };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let records: Vec<FixtureRecord> = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;

        let mut transport = Self::new();
        for (i, rec) in records.into_iter().enumerate() {
            let digest = match (&rec.params, &rec.params_digest) {
                (Some(params), None) => canonical_params_digest(params),
                (None, Some(d)) => d.clone(),
                _ => return Err(bad(format!("record {i}: exactly one of params / params_digest required"))),
            };
            let reply = match (rec.content, rec.error) {
                (Some(content), None) => ToolReply::Content(content),
                (None, Some(error)) => ToolReply::Error(error),
                _ => return Err(bad(format!("record {i}: exactly one of content / error required"))),
            };
            if transport.responses.insert((rec.tool.clone(), digest), reply).is_some() {
                return Err(bad(format!("record {i}: duplicate (tool, params) key for {}", rec.tool)));
            }
        }
        Ok(transport)
    }
}

impl ToolTransport for FixtureTransport {
    fn call(&mut self, tool: &str, arguments: &Map<String, Value>) -> Result<ToolReply, TransportError> {
        let digest = canonical_params_digest(arguments);
        Ok(self
            .responses
            .get(&(tool.to_string(), digest.clone()))
            .cloned()
            .unwrap_or_else(|| {
                ToolReply::Error(format!("no fixture response for tool {tool:?} with params digest {digest}"))
            }))
    }
}

/// Catalog file: servers with their tool lists.
#[derive(Debug, Deserialize)]
struct CatalogFile {
    servers: Vec<CatalogServer>,
}

#[derive(Debug, Deserialize)]
struct CatalogServer {
    name: String,
    tools: Vec<CatalogTool>,
}

#[derive(Debug, Deserialize)]
struct CatalogTool {
    name: String,
    description: String,
    #[serde(default)]
    params: BTreeMap<String, ParamSpec>,
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<ToolSpec>, McpError> {
    let path = path.as_ref();
    let bad = |reason: String| McpError::BadCatalog { path: path.display().to_string(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let file: CatalogFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    Ok(file
        .servers
        .into_iter()
        .flat_map(|server| {
            server.tools.into_iter().map(move |tool| ToolSpec {
                server: server.name.clone(),
                name: tool.name,
                description: tool.description,
                param_schema: tool.params,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn spec(server: &str, name: &str, required: &[&str], optional: &[&str]) -> ToolSpec {
        let mut param_schema = BTreeMap::new();
        for p in required {
            param_schema.insert(p.to_string(), ParamSpec { param_type: "string".into(), required: true });
        }
        for p in optional {
            param_schema.insert(p.to_string(), ParamSpec { param_type: "string".into(), required: false });
        }
        ToolSpec { server: server.into(), name: name.into(), description: format!("{name} tool"), param_schema }
    }

    fn params(pairs: &[(&str, &str)]) -> Map<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), json!(v))).collect()
    }

    #[test]
    fn empty_and_duplicate_catalogs() {
        assert!(register_catalog([]).unwrap().is_empty());
        let err = register_catalog([spec("A", "t", &[], &[]), spec("A", "t", &[], &[])]).unwrap_err();
        assert_eq!(err, McpError::DuplicateTool { server: "A".into(), name: "t".into() });
        // Same name under different servers is fine.
        assert_eq!(register_catalog([spec("A", "t", &[], &[]), spec("B", "t", &[], &[])]).unwrap().len(), 2);
    }

    #[test]
    fn server_counts_by_name() {
        let reg = register_catalog([spec("A", "x", &[], &[]), spec("A", "y", &[], &[]), spec("B", "z", &[], &[])])
            .unwrap();
        let counts = reg.server_counts();
        assert_eq!(counts["A"], 2);
        assert_eq!(counts["B"], 1);
    }

    #[test]
    fn tool_block_is_ordered_and_explicit_when_empty() {
        let reg = register_catalog([
            spec("Maps", "geo", &["address"], &["city"]),
            spec("Arxiv", "search", &["query"], &[]),
        ])
        .unwrap();
        let all: BTreeSet<(String, String)> =
            [("Maps".into(), "geo".into()), ("Arxiv".into(), "search".into())].into();
        let block = render_tool_block(&reg, &all);
        let geo_pos = block.find("Maps / geo").unwrap();
        let search_pos = block.find("Arxiv / search").unwrap();
        assert!(search_pos < geo_pos, "servers render in name order");
        assert!(block.contains("address (string, required)"));
        assert!(block.contains("city (string, optional)"));
        assert_eq!(render_tool_block(&reg, &BTreeSet::new()), "No MCP tools are available for this task.");
        assert_eq!(render_tool_block(&reg, &all), block, "pure function of inputs");
    }

    #[test]
    fn dispatch_rejects_unknown_tools_without_transport() {
        struct Exploding;
        impl ToolTransport for Exploding {
            fn call(&mut self, _: &str, _: &Map<String, Value>) -> Result<ToolReply, TransportError> {
                panic!("transport must not be reached");
            }
        }
        let reg = register_catalog([spec("Maps", "maps_geo", &["address"], &[])]).unwrap();
        let r = dispatch(&reg, "no_such_tool", &params(&[]), &mut Exploding, DEFAULT_CONTENT_CAP);
        assert_eq!(r.status, ToolStatus::ToolError);
        assert!(r.content.contains("unknown tool"));

        let r = dispatch(&reg, "maps_geo", &params(&[]), &mut Exploding, DEFAULT_CONTENT_CAP);
        assert_eq!(r.status, ToolStatus::ToolError);
        assert_eq!(r.content, "missing required params: address");
    }

    #[test]
    fn missing_param_errors_name_exactly_the_absent_required_ones() {
        let reg = register_catalog([spec("S", "t", &["alpha", "beta"], &["gamma"])]).unwrap();
        let mut fixture = FixtureTransport::new();
        let r = dispatch(&reg, "t", &params(&[("beta", "1")]), &mut fixture, DEFAULT_CONTENT_CAP);
        assert_eq!(r.content, "missing required params: alpha");
        let r = dispatch(&reg, "t", &params(&[("gamma", "1")]), &mut fixture, DEFAULT_CONTENT_CAP);
        assert_eq!(r.content, "missing required params: alpha, beta");
    }

    #[test]
    fn fixture_transport_replays_by_params_digest() {
        let reg = register_catalog([spec("Maps", "maps_geo", &["address"], &[])]).unwrap();
        let mut fixture = FixtureTransport::new();
        let p = params(&[("address", "Tianjin")]);
        fixture.insert("maps_geo", &p, ToolReply::Content("{\"location\":\"117.2,39.1\"}".into()));

        let r = dispatch(&reg, "maps_geo", &p, &mut fixture, DEFAULT_CONTENT_CAP);
        assert_eq!(r.status, ToolStatus::Ok);
        assert!(r.content.contains("location"));

        let r = dispatch(&reg, "maps_geo", &params(&[("address", "Beijing")]), &mut fixture, DEFAULT_CONTENT_CAP);
        assert_eq!(r.status, ToolStatus::ToolError);
        assert!(r.content.contains("no fixture response"));
    }

    #[test]
    fn transport_failures_become_transport_error_results() {
        struct Dead;
        impl ToolTransport for Dead {
            fn call(&mut self, _: &str, _: &Map<String, Value>) -> Result<ToolReply, TransportError> {
                Err(TransportError::Timeout)
            }
        }
        let reg = register_catalog([spec("S", "t", &[], &[])]).unwrap();
        let r = dispatch(&reg, "t", &params(&[]), &mut Dead, DEFAULT_CONTENT_CAP);
        assert_eq!(r.status, ToolStatus::TransportError);
    }

    #[test]
    fn truncation_keeps_the_head_and_reports_the_omission() {
        let long: String = "x".repeat(20_000);
        let r = ToolResult::ok(long.clone()).truncated_to(4_000);
        assert!(r.truncated);
        assert_eq!(r.original_length, 20_000);
        assert!(r.content.starts_with(&long[..4_000]));
        assert!(r.content.ends_with("…[truncated, 16000 chars omitted]"));

        let within = ToolResult::ok("short".into()).truncated_to(4_000);
        assert!(!within.truncated);
        assert_eq!(within.content, "short");
    }

    #[test]
    fn truncation_is_idempotent() {
        let r = ToolResult::ok("y".repeat(10_000)).truncated_to(4_000);
        let again = r.clone().truncated_to(4_000);
        assert_eq!(r, again);
        let tighter = r.clone().truncated_to(100);
        assert_eq!(r, tighter, "already-truncated results are never re-cut");
    }

    #[test]
    fn params_digest_is_key_order_independent() {
        let a = params(&[("x", "1"), ("y", "2")]);
        let mut b = Map::new();
        b.insert("y".into(), json!("2"));
        b.insert("x".into(), json!("1"));
        assert_eq!(canonical_params_digest(&a), canonical_params_digest(&b));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn truncation_preserves_head_and_is_idempotent(content in "[a-zA-Z0-9 ]{0,600}", cap in 1usize..400) {
                let r = ToolResult::ok(content.clone()).truncated_to(cap);
                if content.chars().count() <= cap {
                    prop_assert_eq!(&r.content, &content);
                    prop_assert!(!r.truncated);
                } else {
                    prop_assert!(r.truncated);
                    let head: String = content.chars().take(cap).collect();
                    prop_assert!(r.content.starts_with(&head));
                    prop_assert_eq!(r.original_length, content.chars().count());
                }
                let again = r.clone().truncated_to(cap);
                prop_assert_eq!(r, again);
            }
        }
    }
}
