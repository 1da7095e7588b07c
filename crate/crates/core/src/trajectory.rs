//! Trajectory data model: ordered steps of unordered tool calls plus optional
//! cross-step dependency edges.
//!
//! A trajectory is read from a JSON document of the form
//!
//! ```json
//! {"meta": {"model": "m"},
//!  "steps": [{"index": 0, "calls": [{"tool": "srv/name", "arguments": {}}]}],
//!  "deps": [[[0, 0], [1, 0]]]}
//! ```
//!
//! The position of a call inside `calls` becomes its slot index. `deps` and
//! `meta` are optional.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Argument tree of a call. The root is always a mapping.
pub type Arguments = serde_json::Map<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct ToolCall {
    tool: String,
    arguments: Arguments,
    step_index: usize,
    slot_index: usize,
}

impl ToolCall {
    pub fn new(tool: impl Into<String>, arguments: Arguments, step_index: usize, slot_index: usize) -> Result<Self> {
        let tool = tool.into();
        validate_tool_name(&tool).map_err(|message| Error::Invariant {
            path: format!("steps[{step_index}].calls[{slot_index}].tool"),
            message,
        })?;
        Ok(Self {
            tool,
            arguments,
            step_index,
            slot_index,
        })
    }

    /// Qualified `server/tool` name.
    pub fn tool(&self) -> &str {
        &self.tool
    }

    pub fn arguments(&self) -> &Arguments {
        &self.arguments
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn slot_index(&self) -> usize {
        self.slot_index
    }
}

/// Checks the `server/tool` shape: exactly one separator, both halves non-empty.
pub fn validate_tool_name(tool: &str) -> std::result::Result<(), String> {
    match tool.split_once('/') {
        None => Err(format!("tool name {tool:?} must have the form server/tool")),
        Some((server, name)) if server.is_empty() || name.is_empty() => {
            Err(format!("tool name {tool:?} has an empty server or tool part"))
        }
        Some((_, name)) if name.contains('/') => Err(format!("tool name {tool:?} contains more than one '/'")),
        Some(_) => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    index: usize,
    calls: Vec<ToolCall>,
}

impl Step {
    pub fn index(&self) -> usize {
        self.index
    }

    /// Calls ordered by slot index. The ordering carries no meaning beyond labels.
    pub fn calls(&self) -> &[ToolCall] {
        &self.calls
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }
}

/// Position of a call: `(step, slot)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallRef {
    pub step: usize,
    pub slot: usize,
}

/// Directed dependency `from -> to` between calls in strictly increasing steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DepEdge {
    pub from: CallRef,
    pub to: CallRef,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    steps: Vec<Step>,
    deps: BTreeSet<DepEdge>,
    meta: BTreeMap<String, String>,
}

impl Trajectory {
    /// Builds a trajectory from per-step `(tool, arguments)` lists. Slot indices
    /// are the positions within each inner list.
    pub fn from_steps(
        steps: Vec<Vec<(String, Arguments)>>,
        deps: impl IntoIterator<Item = DepEdge>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut built = Vec::with_capacity(steps.len());
        for (index, calls) in steps.into_iter().enumerate() {
            if calls.is_empty() {
                return Err(Error::Invariant {
                    path: format!("steps[{index}]"),
                    message: "step has no calls".into(),
                });
            }
            let calls = calls
                .into_iter()
                .enumerate()
                .map(|(slot, (tool, args))| ToolCall::new(tool, args, index, slot))
                .collect::<Result<Vec<_>>>()?;
            built.push(Step { index, calls });
        }
        let mut trajectory = Trajectory {
            steps: built,
            deps: BTreeSet::new(),
            meta,
        };
        for (k, edge) in deps.into_iter().enumerate() {
            trajectory.check_edge(&edge, k)?;
            trajectory.deps.insert(edge);
        }
        Ok(trajectory)
    }

    fn check_edge(&self, edge: &DepEdge, k: usize) -> Result<()> {
        let path = format!("deps[{k}]");
        for end in [edge.from, edge.to] {
            let exists = self.steps.get(end.step).is_some_and(|s| end.slot < s.calls.len());
            if !exists {
                return Err(Error::Invariant {
                    path,
                    message: format!("edge endpoint ({}, {}) does not exist", end.step, end.slot),
                });
            }
        }
        if edge.from.step == edge.to.step {
            return Err(Error::Invariant {
                path,
                message: "intra-step dependency edges are not allowed".into(),
            });
        }
        if edge.from.step > edge.to.step {
            return Err(Error::Invariant {
                path,
                message: "dependency edge points to an earlier step".into(),
            });
        }
        Ok(())
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn deps(&self) -> &BTreeSet<DepEdge> {
        &self.deps
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// All calls flattened in (step, slot) order; the position in this list is
    /// the call's global index.
    pub fn calls(&self) -> Vec<&ToolCall> {
        self.steps.iter().flat_map(|s| s.calls.iter()).collect()
    }

    /// Per-step call counts and their total.
    pub fn call_counts(&self) -> (Vec<usize>, usize) {
        let counts: Vec<usize> = self.steps.iter().map(Step::len).collect();
        let total = counts.iter().sum();
        (counts, total)
    }

    pub fn num_calls(&self) -> usize {
        self.steps.iter().map(Step::len).sum()
    }

    /// At least two steps and a declared dependency from an earlier step to a later one.
    pub fn is_multi_hop(&self) -> bool {
        self.steps.len() >= 2 && self.deps.iter().any(|e| e.from.step < e.to.step)
    }

    /// Step `step` holds two or more calls with no declared dependency between any pair.
    pub fn is_multi_threaded_step(&self, step: usize) -> Result<bool> {
        let s = self.steps.get(step).ok_or(Error::Index {
            index: step,
            len: self.steps.len(),
        })?;
        if s.calls.len() < 2 {
            return Ok(false);
        }
        let linked = self.deps.iter().any(|e| e.from.step == step && e.to.step == step);
        Ok(!linked)
    }

    /// Parses a trajectory document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawDocument = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: display_path(e.path()),
            message: e.inner().to_string(),
        })?;
        raw.into_trajectory()
    }

    pub fn to_document(&self) -> Value {
        let steps: Vec<Value> = self
            .steps
            .iter()
            .map(|s| {
                let calls: Vec<Value> = s
                    .calls
                    .iter()
                    .map(|c| {
                        serde_json::json!({
                            "tool": c.tool,
                            "arguments": Value::Object(c.arguments.clone()),
                        })
                    })
                    .collect();
                serde_json::json!({ "index": s.index, "calls": calls })
            })
            .collect();
        let mut doc = serde_json::Map::new();
        doc.insert("meta".into(), serde_json::to_value(&self.meta).unwrap_or_default());
        doc.insert("steps".into(), Value::Array(steps));
        if !self.deps.is_empty() {
            let deps: Vec<Value> = self
                .deps
                .iter()
                .map(|e| serde_json::json!([[e.from.step, e.from.slot], [e.to.step, e.to.slot]]))
                .collect();
            doc.insert("deps".into(), Value::Array(deps));
        }
        Value::Object(doc)
    }
}

/// Parses a trajectory from an already-decoded JSON value.
pub fn parse_trajectory(doc: &Value) -> Result<Trajectory> {
    let raw: RawDocument = serde_path_to_error::deserialize(doc).map_err(|e| Error::Schema {
        path: display_path(e.path()),
        message: e.inner().to_string(),
    })?;
    raw.into_trajectory()
}

fn display_path(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s == "." || s == "?" {
        "$".to_string()
    } else {
        s
    }
}

#[derive(Deserialize)]
struct RawDocument {
    #[serde(default)]
    meta: BTreeMap<String, Value>,
    steps: Vec<RawStep>,
    #[serde(default)]
    deps: Vec<[[usize; 2]; 2]>,
}

#[derive(Deserialize)]
struct RawStep {
    index: usize,
    calls: Vec<RawCall>,
}

#[derive(Deserialize)]
struct RawCall {
    #[serde(alias = "name")]
    tool: String,
    arguments: Value,
}

impl RawDocument {
    fn into_trajectory(self) -> Result<Trajectory> {
        let meta = self
            .meta
            .into_iter()
            .map(|(k, v)| match v {
                Value::String(s) => (k, s),
                other => (k, other.to_string()),
            })
            .collect();

        let mut seen = BTreeSet::new();
        for (pos, step) in self.steps.iter().enumerate() {
            if !seen.insert(step.index) {
                return Err(Error::Invariant {
                    path: format!("steps[{pos}].index"),
                    message: format!("duplicate step index {}", step.index),
                });
            }
        }
        let n = self.steps.len();
        if seen.iter().copied().ne(0..n) {
            return Err(Error::Invariant {
                path: "steps".into(),
                message: format!(
                    "non-contiguous steps: indices {:?} are not 0..{}",
                    seen.iter().collect::<Vec<_>>(),
                    n
                ),
            });
        }

        let mut ordered: Vec<(usize, RawStep)> = self.steps.into_iter().enumerate().collect();
        ordered.sort_by_key(|(_, s)| s.index);

        let mut steps = Vec::with_capacity(n);
        for (pos, step) in ordered {
            let mut calls = Vec::with_capacity(step.calls.len());
            for (slot, call) in step.calls.into_iter().enumerate() {
                let arguments = match call.arguments {
                    Value::Object(map) => map,
                    other => {
                        return Err(Error::Schema {
                            path: format!("steps[{pos}].calls[{slot}].arguments"),
                            message: format!("arguments must be a mapping, found {}", kind(&other)),
                        })
                    }
                };
                calls.push((call.tool, arguments));
            }
            steps.push(calls);
        }
        let deps = self.deps.into_iter().map(|[[i, a], [j, b]]| DepEdge {
            from: CallRef { step: i, slot: a },
            to: CallRef { step: j, slot: b },
        });
        Trajectory::from_steps(steps, deps, meta)
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "mapping",
    }
}
