//! Canonical text signature of a tool call.
//!
//! A call renders as `tool=<tool> | <path>=<value> | ...`. Nested mappings
//! flatten into dotted key paths, key paths are sorted, and lists render as
//! `[a,b,...]`. Lists whose key path is registered as set-typed have their
//! elements sorted by their own rendering, so element order does not matter.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::trajectory::ToolCall;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FloatFormat {
    /// Shortest decimal that round-trips.
    #[default]
    Shortest,
    /// Fixed number of decimals.
    Fixed(u8),
}

impl FromStr for FloatFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "shortest" => Ok(FloatFormat::Shortest),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|d| d.parse::<u8>().ok())
                .map(FloatFormat::Fixed)
                .ok_or_else(|| format!("float format {s:?} is not `shortest` or `fixed:<digits>`")),
        }
    }
}

impl TryFrom<String> for FloatFormat {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<FloatFormat> for String {
    fn from(f: FloatFormat) -> String {
        f.to_string()
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FloatFormat::Shortest => f.write_str("shortest"),
            FloatFormat::Fixed(d) => write!(f, "fixed:{d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SerializationPolicy {
    /// Dotted key paths whose list values are unordered sets.
    pub set_typed_paths: BTreeSet<String>,
    pub float_format: FloatFormat,
    /// Maximum container nesting; the argument root counts as depth 1.
    pub max_depth: usize,
}

impl Default for SerializationPolicy {
    fn default() -> Self {
        Self {
            set_typed_paths: BTreeSet::new(),
            float_format: FloatFormat::Shortest,
            max_depth: 16,
        }
    }
}

impl SerializationPolicy {
    pub fn with_set_paths<I, S>(paths: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            set_typed_paths: paths.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        for path in &self.set_typed_paths {
            if path.split('.').any(str::is_empty) {
                return Err(Error::Config(format!("invalid set-typed path {path:?}")));
            }
        }
        Ok(())
    }
}

/// Renders the canonical signature of `call`.
pub fn serialize_call(call: &ToolCall, policy: &SerializationPolicy) -> Result<String> {
    let mut fields = Vec::new();
    let mut renderer = Renderer {
        policy,
        fields: &mut fields,
    };
    renderer.mapping(call.arguments(), "", 1)?;
    fields.sort();

    let mut out = format!("tool={}", call.tool());
    for (path, value) in fields {
        out.push_str(" | ");
        out.push_str(&path);
        out.push('=');
        out.push_str(&value);
    }
    Ok(out)
}

struct Renderer<'a> {
    policy: &'a SerializationPolicy,
    fields: &'a mut Vec<(String, String)>,
}

impl Renderer<'_> {
    fn mapping(&mut self, map: &serde_json::Map<String, Value>, prefix: &str, depth: usize) -> Result<()> {
        if depth > self.policy.max_depth {
            return Err(depth_error(prefix, self.policy.max_depth));
        }
        for (key, value) in map {
            check_key(key, prefix)?;
            let path = if prefix.is_empty() {
                key.clone()
            } else {
                format!("{prefix}.{key}")
            };
            match value {
                Value::Object(inner) if !inner.is_empty() => self.mapping(inner, &path, depth + 1)?,
                Value::Array(items) => {
                    let set_typed = self.policy.set_typed_paths.contains(&path);
                    let rendered = list(items, set_typed, &path, depth + 1, self.policy)?;
                    self.fields.push((path, rendered));
                }
                other => {
                    let rendered = inline(other, &path, depth + 1, self.policy)?;
                    self.fields.push((path, rendered));
                }
            }
        }
        Ok(())
    }
}

fn list(items: &[Value], set_typed: bool, path: &str, depth: usize, policy: &SerializationPolicy) -> Result<String> {
    if depth > policy.max_depth {
        return Err(depth_error(path, policy.max_depth));
    }
    let mut parts = items
        .iter()
        .enumerate()
        .map(|(i, v)| inline(v, &format!("{path}[{i}]"), depth + 1, policy))
        .collect::<Result<Vec<_>>>()?;
    if set_typed {
        parts.sort();
    }
    Ok(format!("[{}]", parts.join(",")))
}

fn inline(value: &Value, path: &str, depth: usize, policy: &SerializationPolicy) -> Result<String> {
    match value {
        Value::Null => Ok("null".into()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => number(n, path, policy.float_format),
        Value::Array(items) => list(items, false, path, depth, policy),
        Value::Object(map) => {
            if depth > policy.max_depth {
                return Err(depth_error(path, policy.max_depth));
            }
            let mut parts = Vec::with_capacity(map.len());
            for (k, v) in map {
                check_key(k, path)?;
                parts.push(format!("{k}={}", inline(v, &format!("{path}.{k}"), depth + 1, policy)?));
            }
            parts.sort();
            Ok(format!("{{{}}}", parts.join(",")))
        }
    }
}

fn number(n: &serde_json::Number, path: &str, format: FloatFormat) -> Result<String> {
    if n.is_i64() || n.is_u64() {
        return Ok(n.to_string());
    }
    let f = n.as_f64().ok_or_else(|| Error::NonSerializable {
        path: path.to_string(),
        reason: format!("number {n} is not representable"),
    })?;
    if !f.is_finite() {
        return Err(Error::NonSerializable {
            path: path.to_string(),
            reason: "non-finite float".into(),
        });
    }
    Ok(match format {
        FloatFormat::Shortest => n.to_string(),
        FloatFormat::Fixed(d) => format!("{f:.prec$}", prec = d as usize),
    })
}

fn check_key(key: &str, parent: &str) -> Result<()> {
    if key.is_empty() || key.contains('=') || key.contains('|') {
        let at = if parent.is_empty() { "$" } else { parent };
        return Err(Error::NonSerializable {
            path: at.to_string(),
            reason: format!("argument key {key:?} is empty or contains '=' or '|'"),
        });
    }
    Ok(())
}

fn depth_error(path: &str, max_depth: usize) -> Error {
    Error::Depth {
        path: if path.is_empty() { "$".into() } else { path.to_string() },
        max_depth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn call(tool: &str, args: Value) -> ToolCall {
        let Value::Object(map) = args else {
            panic!("not a mapping")
        };
        ToolCall::new(tool, map, 0, 0).unwrap()
    }

    #[test]
    fn single_scalar_argument() {
        let c = call("wiki/summary", json!({"title": "Rabbit"}));
        assert_eq!(
            serialize_call(&c, &SerializationPolicy::default()).unwrap(),
            "tool=wiki/summary | title=Rabbit"
        );
    }

    #[test]
    fn key_order_irrelevant() {
        let p = SerializationPolicy::default();
        let a = serialize_call(&call("a/b", json!({"b": 2, "a": 1})), &p).unwrap();
        let b = serialize_call(&call("a/b", json!({"a": 1, "b": 2})), &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, "tool=a/b | a=1 | b=2");
    }

    #[test]
    fn set_typed_lists_sorted() {
        let c = call("db/get", json!({"ids": [3, 1, 2]}));
        let set = SerializationPolicy::with_set_paths(["ids"]);
        assert_eq!(serialize_call(&c, &set).unwrap(), "tool=db/get | ids=[1,2,3]");
        let plain = SerializationPolicy::default();
        assert_eq!(serialize_call(&c, &plain).unwrap(), "tool=db/get | ids=[3,1,2]");
    }

    #[test]
    fn nested_paths_and_scalars() {
        let c = call(
            "srv/t",
            json!({"z": {"b": true, "a": {"x": 1.5}}, "flag": false, "none": null, "empty": {},
                   "rows": [{"k": 2, "j": "s"}, [1, 2]]}),
        );
        assert_eq!(
            serialize_call(&c, &SerializationPolicy::default()).unwrap(),
            "tool=srv/t | empty={} | flag=false | none=null | rows=[{j=s,k=2},[1,2]] | z.a.x=1.5 | z.b=true"
        );
    }

    #[test]
    fn nested_set_path() {
        let c = call("s/t", json!({"filter": {"tags": ["b", "a"]}}));
        let p = SerializationPolicy::with_set_paths(["filter.tags"]);
        assert_eq!(serialize_call(&c, &p).unwrap(), "tool=s/t | filter.tags=[a,b]");
    }

    #[test]
    fn float_formats() {
        let c = call("s/t", json!({"x": 0.1, "y": 2.0, "n": 7}));
        let p = SerializationPolicy::default();
        assert_eq!(serialize_call(&c, &p).unwrap(), "tool=s/t | n=7 | x=0.1 | y=2.0");
        let fixed = SerializationPolicy {
            float_format: FloatFormat::Fixed(3),
            ..SerializationPolicy::default()
        };
        assert_eq!(
            serialize_call(&c, &fixed).unwrap(),
            "tool=s/t | n=7 | x=0.100 | y=2.000"
        );
        assert_eq!("fixed:3".parse::<FloatFormat>().unwrap(), FloatFormat::Fixed(3));
        assert!("fixed".parse::<FloatFormat>().is_err());
    }

    #[test]
    fn depth_limit() {
        let c = call("s/t", json!({"a": {"b": {"c": 1}}}));
        let p = SerializationPolicy {
            max_depth: 2,
            ..SerializationPolicy::default()
        };
        let err = serialize_call(&c, &p).unwrap_err();
        assert_eq!(err.code(), "DepthError");
        let p3 = SerializationPolicy {
            max_depth: 3,
            ..SerializationPolicy::default()
        };
        assert!(serialize_call(&c, &p3).is_ok());

        let list = call("s/t", json!({"a": [[1]]}));
        assert_eq!(serialize_call(&list, &p).unwrap_err().code(), "DepthError");
    }

    #[test]
    fn bad_keys_rejected() {
        let c = call("s/t", json!({"a=b": 1}));
        let err = serialize_call(&c, &SerializationPolicy::default()).unwrap_err();
        assert_eq!(err.code(), "NonSerializableError");
    }

    #[test]
    fn policy_validation() {
        let p = SerializationPolicy {
            max_depth: 0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = SerializationPolicy::with_set_paths(["a..b"]);
        assert!(p.validate().is_err());
    }

    fn leaf() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<bool>().prop_map(Value::Bool),
            (-50i64..50).prop_map(|n| json!(n)),
            "[a-z]{1,4}".prop_map(Value::String),
        ]
    }

    fn tree() -> impl Strategy<Value = Value> {
        leaf().prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
                prop::collection::btree_map("[a-d]", inner, 1..4).prop_map(|m| Value::Object(m.into_iter().collect())),
            ]
        })
    }

    fn args() -> impl Strategy<Value = serde_json::Map<String, Value>> {
        prop::collection::btree_map("[a-e]", tree(), 0..5).prop_map(|m| m.into_iter().collect())
    }

    /// Replaces the first leaf (in key order) with a different value of the same type.
    fn mutate_leaf(v: &mut Value) -> bool {
        match v {
            Value::Bool(b) => {
                *b = !*b;
                true
            }
            Value::Number(n) => {
                *v = json!(n.as_i64().unwrap() + 1000);
                true
            }
            Value::String(s) => {
                s.push('Z');
                true
            }
            Value::Array(items) => items.iter_mut().any(mutate_leaf),
            Value::Object(map) => map.values_mut().any(mutate_leaf),
            Value::Null => false,
        }
    }

    proptest! {
        #[test]
        fn distinct_values_give_distinct_signatures(a in args()) {
            let p = SerializationPolicy::default();
            let mut changed = Value::Object(a.clone());
            prop_assume!(mutate_leaf(&mut changed));
            let Value::Object(b) = changed else { unreachable!() };
            let sa = serialize_call(&ToolCall::new("s/t", a, 0, 0).unwrap(), &p).unwrap();
            let sb = serialize_call(&ToolCall::new("s/t", b, 0, 0).unwrap(), &p).unwrap();
            prop_assert_ne!(sa, sb);
        }

        #[test]
        fn set_typed_permutation_invariant(
            mut items in prop::collection::vec(leaf(), 0..6),
            seed in any::<u64>(),
            a in args(),
        ) {
            let p = SerializationPolicy::with_set_paths(["items"]);
            let mut first = a.clone();
            first.insert("items".into(), Value::Array(items.clone()));
            // deterministic shuffle driven by the seed
            let n = items.len();
            if n > 1 {
                let mut s = seed;
                for i in (1..n).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    items.swap(i, (s >> 33) as usize % (i + 1));
                }
            }
            let mut second = a;
            second.insert("items".into(), Value::Array(items));
            let sa = serialize_call(&ToolCall::new("s/t", first, 0, 0).unwrap(), &p).unwrap();
            let sb = serialize_call(&ToolCall::new("s/t", second.clone(), 0, 0).unwrap(), &p).unwrap();
            prop_assert_eq!(&sa, &sb);
            let again = serialize_call(&ToolCall::new("s/t", second, 0, 0).unwrap(), &p).unwrap();
            prop_assert_eq!(sb, again);
        }
    }
}
