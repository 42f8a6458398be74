//! Declarative checks over resource bodies.
//!
//! A predicate answers one question: does this rule fire on this resource?
//! Paths are dot-separated keys evaluated against the current focus; a
//! leading `^` moves one focus up (for example from a container back to its
//! pod spec). Numeric segments index into lists.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::manifest::{ResourceDocument, ResourceRef};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldPath {
    up: usize,
    segments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid field path `{0}`")]
pub struct InvalidPath(pub String);

impl FromStr for FieldPath {
    type Err = InvalidPath;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.chars().take_while(|c| *c == '^').count();
        let rest = &s[up..];
        if rest.is_empty() {
            return Ok(FieldPath { up, segments: Vec::new() });
        }
        let segments: Vec<String> = rest.split('.').map(str::to_string).collect();
        if segments.iter().any(String::is_empty) {
            return Err(InvalidPath(s.to_string()));
        }
        Ok(FieldPath { up, segments })
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", "^".repeat(self.up), self.segments.join("."))
    }
}

impl Serialize for FieldPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FieldPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

impl FieldPath {
    fn resolve<'v>(&self, frames: &[&'v Value]) -> Option<&'v Value> {
        let idx = frames.len().checked_sub(1 + self.up)?;
        let mut cur = frames[idx];
        for seg in &self.segments {
            cur = match cur {
                Value::Object(map) => map.get(seg)?,
                Value::Array(items) => items.get(seg.parse::<usize>().ok()?)?,
                _ => return None,
            };
        }
        (!cur.is_null()).then_some(cur)
    }
}

/// Regex wrapper that (de)serializes as its source pattern.
#[derive(Debug, Clone)]
pub struct Pattern(Regex);

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.0.as_str() == other.0.as_str()
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.0.as_str())
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Regex::new(&s).map(Pattern).map_err(serde::de::Error::custom)
    }
}

fn default_min_len() -> usize {
    16
}

fn default_min_entropy() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
    Not(Box<Predicate>),
    /// Path resolves to a non-null value.
    Exists(FieldPath),
    Absent(FieldPath),
    Equals { path: FieldPath, value: Value },
    /// Path resolves to a list that contains `value`.
    Contains { path: FieldPath, value: Value },
    /// Path resolves to a string, or a list with a string element, matching the pattern.
    Matches { path: FieldPath, pattern: Pattern },
    /// Some element of the list at `path` satisfies `check` (element becomes the focus).
    AnyItem { path: FieldPath, check: Box<Predicate> },
    /// The list at `path` is non-empty and every element satisfies `check`.
    AllItems { path: FieldPath, check: Box<Predicate> },
    /// Evaluate against the pod spec of a workload, whatever its kind.
    PodSpec(Box<Predicate>),
    /// Map at `path` holds a credential-looking entry.
    Credentials {
        path: FieldPath,
        key_patterns: Vec<String>,
        #[serde(default = "default_min_len")]
        min_value_length: usize,
        #[serde(default = "default_min_entropy")]
        min_entropy_bits: f64,
    },
    /// Image reference at `path` comes from a registry outside `allowed`.
    RegistryNotIn { path: FieldPath, allowed: Vec<String> },
    /// The resource's namespace holds no object of `kind` in the evaluated set.
    NamespaceLacks { kind: String },
    /// Another resource earlier in the evaluated set has the same ref.
    DuplicateRef(bool),
}

/// Cross-resource facts shared by every predicate evaluation.
pub struct EvalContext<'a> {
    kinds_by_namespace: HashMap<Option<&'a str>, HashSet<&'a str>>,
    first_index: HashMap<ResourceRef, usize>,
}

impl<'a> EvalContext<'a> {
    pub fn new(resources: &'a [ResourceDocument]) -> Self {
        let mut kinds_by_namespace: HashMap<Option<&str>, HashSet<&str>> = HashMap::new();
        let mut first_index = HashMap::new();
        for (i, doc) in resources.iter().enumerate() {
            kinds_by_namespace
                .entry(doc.namespace.as_deref())
                .or_default()
                .insert(doc.kind.as_str());
            first_index.entry(doc.resource_ref()).or_insert(i);
        }
        EvalContext {
            kinds_by_namespace,
            first_index,
        }
    }
}

/// Location of the pod template spec inside each workload kind.
pub fn pod_spec(doc: &ResourceDocument) -> Option<&Value> {
    let spec = doc.body.get("spec")?;
    match doc.kind.as_str() {
        "Pod" => Some(spec),
        "CronJob" => spec.get("jobTemplate")?.get("spec")?.get("template")?.get("spec"),
        "Deployment" | "StatefulSet" | "DaemonSet" | "ReplicaSet" | "ReplicationController" | "Job" => {
            spec.get("template")?.get("spec")
        }
        _ => None,
    }
}

/// Registry host of an image reference; bare names resolve to `docker.io`.
pub fn image_registry(image: &str) -> &str {
    match image.split_once('/') {
        Some((first, _)) if first.contains('.') || first.contains(':') || first == "localhost" => first,
        _ => "docker.io",
    }
}

/// Shannon entropy in bits per character.
pub fn shannon_entropy(s: &str) -> f64 {
    let mut counts: HashMap<char, usize> = HashMap::new();
    let mut total = 0usize;
    for c in s.chars() {
        *counts.entry(c).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn credential_like(key: &str, value: &Value, patterns: &[String], min_len: usize, min_entropy: f64) -> bool {
    let Some(value) = value.as_str() else { return false };
    let key = key.to_ascii_lowercase();
    if !value.trim().is_empty() && patterns.iter().any(|p| key.contains(&p.to_ascii_lowercase())) {
        return true;
    }
    // Only single-token values; embedded config files are not secrets themselves.
    value.chars().count() >= min_len
        && !value.chars().any(char::is_whitespace)
        && shannon_entropy(value) >= min_entropy
}

impl Predicate {
    pub fn fires(&self, doc: &ResourceDocument, index: usize, ctx: &EvalContext<'_>) -> bool {
        self.eval(&[&doc.body], doc, index, ctx)
    }

    fn eval(&self, frames: &[&Value], doc: &ResourceDocument, index: usize, ctx: &EvalContext<'_>) -> bool {
        match self {
            Predicate::All(ps) => ps.iter().all(|p| p.eval(frames, doc, index, ctx)),
            Predicate::Any(ps) => ps.iter().any(|p| p.eval(frames, doc, index, ctx)),
            Predicate::Not(p) => !p.eval(frames, doc, index, ctx),
            Predicate::Exists(path) => path.resolve(frames).is_some(),
            Predicate::Absent(path) => path.resolve(frames).is_none(),
            Predicate::Equals { path, value } => path.resolve(frames) == Some(value),
            Predicate::Contains { path, value } => path
                .resolve(frames)
                .and_then(Value::as_array)
                .is_some_and(|items| items.contains(value)),
            Predicate::Matches { path, pattern } => match path.resolve(frames) {
                Some(Value::String(s)) => pattern.0.is_match(s),
                Some(Value::Array(items)) => items
                    .iter()
                    .filter_map(Value::as_str)
                    .any(|s| pattern.0.is_match(s)),
                _ => false,
            },
            Predicate::AnyItem { path, check } => {
                let Some(items) = path.resolve(frames).and_then(Value::as_array) else {
                    return false;
                };
                items.iter().any(|item| {
                    let mut next = frames.to_vec();
                    next.push(item);
                    check.eval(&next, doc, index, ctx)
                })
            }
            Predicate::AllItems { path, check } => {
                let Some(items) = path.resolve(frames).and_then(Value::as_array) else {
                    return false;
                };
                !items.is_empty()
                    && items.iter().all(|item| {
                        let mut next = frames.to_vec();
                        next.push(item);
                        check.eval(&next, doc, index, ctx)
                    })
            }
            Predicate::PodSpec(check) => match pod_spec(doc) {
                Some(spec) => {
                    let mut next = frames.to_vec();
                    next.push(spec);
                    check.eval(&next, doc, index, ctx)
                }
                None => false,
            },
            Predicate::Credentials {
                path,
                key_patterns,
                min_value_length,
                min_entropy_bits,
            } => path
                .resolve(frames)
                .and_then(Value::as_object)
                .is_some_and(|map| {
                    map.iter().any(|(k, v)| {
                        credential_like(k, v, key_patterns, *min_value_length, *min_entropy_bits)
                    })
                }),
            Predicate::RegistryNotIn { path, allowed } => path
                .resolve(frames)
                .and_then(Value::as_str)
                .is_some_and(|image| {
                    let registry = image_registry(image);
                    !allowed.iter().any(|a| a.eq_ignore_ascii_case(registry))
                }),
            Predicate::NamespaceLacks { kind } => match doc.namespace.as_deref() {
                Some(ns) => !ctx
                    .kinds_by_namespace
                    .get(&Some(ns))
                    .is_some_and(|kinds| kinds.contains(kind.as_str())),
                None => false,
            },
            Predicate::DuplicateRef(enabled) => {
                *enabled && ctx.first_index.get(&doc.resource_ref()).is_some_and(|first| *first < index)
            }
        }
    }

    /// Kinds this predicate needs to see in the evaluated set besides the
    /// resources it applies to.
    pub fn referenced_kinds(&self, out: &mut Vec<String>) {
        match self {
            Predicate::All(ps) | Predicate::Any(ps) => ps.iter().for_each(|p| p.referenced_kinds(out)),
            Predicate::Not(p) | Predicate::PodSpec(p) => p.referenced_kinds(out),
            Predicate::AnyItem { check, .. } | Predicate::AllItems { check, .. } => check.referenced_kinds(out),
            Predicate::NamespaceLacks { kind } => out.push(kind.clone()),
            _ => {}
        }
    }
}
