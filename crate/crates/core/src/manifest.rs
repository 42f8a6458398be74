//! Kubernetes manifest ingestion.
//!
//! Multi-document YAML streams and JSON documents are parsed into a uniform
//! [`ResourceDocument`] model. `List`-style objects are flattened into their
//! items. Unknown kinds are kept.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

/// Namespace placeholder used in rendered refs of cluster-scoped objects.
pub const CLUSTER_SCOPE: &str = "_cluster";

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{file}: document {document_index}: malformed document: {message}")]
    MalformedDocument {
        file: String,
        document_index: usize,
        message: String,
    },
    #[error("{file}: document {document_index}: object has no `kind`")]
    MissingKind { file: String, document_index: usize },
    #[error("{file}: document {document_index}: object has no `metadata.name`")]
    MissingName { file: String, document_index: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ManifestError {
    pub fn document_index(&self) -> Option<usize> {
        match self {
            ManifestError::MalformedDocument { document_index, .. }
            | ManifestError::MissingKind { document_index, .. }
            | ManifestError::MissingName { document_index, .. } => Some(*document_index),
            ManifestError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceLocation {
    pub file_path: String,
    pub document_index: usize,
}

/// One parsed Kubernetes object.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceDocument {
    pub api_version: String,
    pub kind: String,
    pub name: String,
    pub namespace: Option<String>,
    pub labels: BTreeMap<String, String>,
    pub body: Value,
    pub source: SourceLocation,
}

impl ResourceDocument {
    /// Build a document from an already decoded object tree.
    pub fn from_value(body: Value, source: SourceLocation) -> Result<Self, ManifestError> {
        let kind = body
            .get("kind")
            .and_then(Value::as_str)
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ManifestError::MissingKind {
                file: source.file_path.clone(),
                document_index: source.document_index,
            })?
            .to_string();
        let metadata = body.get("metadata");
        let name = metadata
            .and_then(|m| m.get("name"))
            .and_then(Value::as_str)
            .filter(|n| !n.is_empty())
            .ok_or_else(|| ManifestError::MissingName {
                file: source.file_path.clone(),
                document_index: source.document_index,
            })?
            .to_string();
        let namespace = metadata
            .and_then(|m| m.get("namespace"))
            .and_then(Value::as_str)
            .filter(|n| !n.is_empty())
            .map(str::to_string);
        let labels = metadata
            .and_then(|m| m.get("labels"))
            .and_then(Value::as_object)
            .map(|labels| {
                labels
                    .iter()
                    .filter_map(|(k, v)| v.as_str().map(|v| (k.clone(), v.to_string())))
                    .collect()
            })
            .unwrap_or_default();
        let api_version = body
            .get("apiVersion")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        Ok(ResourceDocument {
            api_version,
            kind,
            name,
            namespace,
            labels,
            body,
            source,
        })
    }

    pub fn resource_ref(&self) -> ResourceRef {
        resource_ref(self)
    }
}

/// Canonical `namespace/kind/name` identity of a resource.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResourceRef {
    pub namespace: Option<String>,
    pub kind: String,
    pub name: String,
}

pub fn resource_ref(doc: &ResourceDocument) -> ResourceRef {
    ResourceRef {
        namespace: doc.namespace.clone(),
        kind: doc.kind.clone(),
        name: doc.name.clone(),
    }
}

impl fmt::Display for ResourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ns = self.namespace.as_deref().unwrap_or(CLUSTER_SCOPE);
        write!(f, "{ns}/{}/{}", self.kind, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{0}` is not a namespace/kind/name resource reference")]
pub struct InvalidResourceRef(pub String);

impl FromStr for ResourceRef {
    type Err = InvalidResourceRef;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, '/');
        let (Some(ns), Some(kind), Some(name)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(InvalidResourceRef(s.to_string()));
        };
        if ns.is_empty() || kind.is_empty() || name.is_empty() || name.contains('/') {
            return Err(InvalidResourceRef(s.to_string()));
        }
        Ok(ResourceRef {
            namespace: (ns != CLUSTER_SCOPE).then(|| ns.to_string()),
            kind: kind.to_string(),
            name: name.to_string(),
        })
    }
}

impl Serialize for ResourceRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ResourceRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-document accounting for one stream.
#[derive(Debug, Default)]
pub struct StreamOutcome {
    pub documents: Vec<ResourceDocument>,
    /// Source documents that decoded successfully (a `List` counts once).
    pub parsed: usize,
    /// Empty or comment-only documents.
    pub skipped_empty: usize,
    pub errors: Vec<ManifestError>,
}

impl StreamOutcome {
    pub fn encountered(&self) -> usize {
        self.parsed + self.skipped_empty + self.errors.len()
    }
}

fn is_separator(line: &str) -> bool {
    let line = line.trim_end();
    line == "---" || line.starts_with("--- ")
}

/// Split a YAML stream on `---` lines. JSON documents pass through as one chunk.
fn split_documents(text: &str) -> Vec<&str> {
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut offset = 0;
    let mut first_content = true;
    for line in text.split_inclusive('\n') {
        if is_separator(line) {
            // A leading separator before any content does not open an empty document.
            let chunk = &text[start..offset];
            if !(first_content && chunk.trim().is_empty() && chunks.is_empty()) {
                chunks.push(chunk);
            }
            start = offset + line.len();
        } else if !line.trim().is_empty() && !line.trim_start().starts_with('#') {
            first_content = false;
        }
        offset += line.len();
    }
    let tail = &text[start..];
    if !chunks.is_empty() || !tail.is_empty() {
        chunks.push(tail);
    }
    chunks
}

fn decode_chunk(chunk: &str, is_json: bool) -> Result<Value, String> {
    if is_json {
        serde_json::from_str(chunk).map_err(|e| e.to_string())
    } else {
        serde_yaml::from_str(chunk).map_err(|e| e.to_string())
    }
}

/// Expand `List`-style objects into their items. Items without a `kind`
/// take it from the list kind with the `List` suffix removed.
pub(crate) fn flatten_list(value: Value) -> Result<Vec<Value>, Value> {
    let is_list = value
        .get("kind")
        .and_then(Value::as_str)
        .is_some_and(|k| k.ends_with("List"))
        && value.get("items").is_some_and(Value::is_array);
    if !is_list {
        return Err(value);
    }
    let list_kind = value["kind"].as_str().unwrap_or_default();
    let item_kind = list_kind.strip_suffix("List").filter(|k| !k.is_empty()).map(str::to_string);
    let api_version = value.get("apiVersion").cloned();
    let Value::Object(mut map) = value else { unreachable!() };
    let Some(Value::Array(items)) = map.remove("items") else { unreachable!() };
    Ok(items
        .into_iter()
        .map(|mut item| {
            if let Value::Object(obj) = &mut item {
                if !obj.contains_key("kind") {
                    if let Some(kind) = &item_kind {
                        obj.insert("kind".into(), Value::String(kind.clone()));
                    }
                }
                if !obj.contains_key("apiVersion") {
                    if let Some(v) = &api_version {
                        obj.insert("apiVersion".into(), v.clone());
                    }
                }
            }
            item
        })
        .collect())
}

/// Parse a stream, recording every per-document outcome without stopping at
/// the first error.
pub fn scan_manifest_stream(text: &[u8], origin: &str) -> StreamOutcome {
    let mut outcome = StreamOutcome::default();
    let text = match std::str::from_utf8(text) {
        Ok(t) => t,
        Err(e) => {
            outcome.errors.push(ManifestError::MalformedDocument {
                file: origin.to_string(),
                document_index: 0,
                message: format!("invalid UTF-8: {e}"),
            });
            return outcome;
        }
    };
    let is_json = origin.to_ascii_lowercase().ends_with(".json");
    let chunks = if is_json { vec![text] } else { split_documents(text) };
    for (document_index, chunk) in chunks.into_iter().enumerate() {
        let source = SourceLocation {
            file_path: origin.to_string(),
            document_index,
        };
        if chunk.trim().is_empty() {
            outcome.skipped_empty += 1;
            continue;
        }
        let value = match decode_chunk(chunk, is_json) {
            Ok(Value::Null) => {
                outcome.skipped_empty += 1;
                continue;
            }
            Ok(v) => v,
            Err(message) => {
                outcome.errors.push(ManifestError::MalformedDocument {
                    file: origin.to_string(),
                    document_index,
                    message,
                });
                continue;
            }
        };
        if !value.is_object() {
            outcome.errors.push(ManifestError::MalformedDocument {
                file: origin.to_string(),
                document_index,
                message: "document is not a mapping".into(),
            });
            continue;
        }
        let objects = match flatten_list(value) {
            Ok(items) => items,
            Err(single) => vec![single],
        };
        let mut decoded = Vec::with_capacity(objects.len());
        let mut failure = None;
        for object in objects {
            match ResourceDocument::from_value(object, source.clone()) {
                Ok(doc) => decoded.push(doc),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        match failure {
            Some(e) => outcome.errors.push(e),
            None => {
                outcome.parsed += 1;
                outcome.documents.extend(decoded);
            }
        }
    }
    outcome
}

/// Parse a multi-document stream, failing on the first bad document.
pub fn parse_manifest_stream(text: &[u8], origin: &str) -> Result<Vec<ResourceDocument>, ManifestError> {
    let mut outcome = scan_manifest_stream(text, origin);
    if outcome.errors.is_empty() {
        Ok(outcome.documents)
    } else {
        Err(outcome.errors.swap_remove(0))
    }
}

/// Namespace / kind selection applied after parsing. Empty sets select all.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResourceFilter {
    pub namespaces: BTreeSet<String>,
    pub kinds: BTreeSet<String>,
}

impl ResourceFilter {
    pub fn namespace(ns: impl Into<String>) -> Self {
        ResourceFilter {
            namespaces: BTreeSet::from([ns.into()]),
            kinds: BTreeSet::new(),
        }
    }

    pub fn with_kind(mut self, kind: impl Into<String>) -> Self {
        self.kinds.insert(kind.into());
        self
    }

    /// Cluster-scoped objects never match a namespace selection.
    pub fn matches(&self, doc: &ResourceDocument) -> bool {
        let ns_ok = self.namespaces.is_empty()
            || doc.namespace.as_ref().is_some_and(|ns| self.namespaces.contains(ns));
        let kind_ok = self.kinds.is_empty() || self.kinds.contains(&doc.kind);
        ns_ok && kind_ok
    }
}

/// Result of loading a directory tree: documents plus non-fatal parse errors.
#[derive(Debug, Default)]
pub struct LoadOutcome {
    pub documents: Vec<ResourceDocument>,
    pub errors: Vec<ManifestError>,
    pub skipped_empty: usize,
    pub parsed: usize,
    /// Documents dropped by the filter.
    pub filtered_out: usize,
}

fn is_manifest_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("yaml" | "yml" | "json")
    )
}

/// Recursively load manifests under `root` (a directory or a single file).
///
/// Files are parsed in parallel; the result is ordered by file path then
/// document index. Per-file parse errors are collected, not fatal.
pub fn load_directory(root: &Path, filter: Option<&ResourceFilter>) -> Result<LoadOutcome, ManifestError> {
    let meta = std::fs::metadata(root).map_err(|source| ManifestError::Io {
        path: root.display().to_string(),
        source,
    })?;
    let mut files: Vec<PathBuf> = if meta.is_file() {
        vec![root.to_path_buf()]
    } else {
        let mut files = Vec::new();
        for entry in walkdir::WalkDir::new(root).follow_links(true) {
            let entry = entry.map_err(|e| ManifestError::Io {
                path: e.path().unwrap_or(root).display().to_string(),
                source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk error")),
            })?;
            if entry.file_type().is_file() && is_manifest_file(entry.path()) {
                files.push(entry.into_path());
            }
        }
        files
    };
    files.sort();

    let per_file: Vec<StreamOutcome> = files
        .par_iter()
        .map(|path| {
            let origin = path.display().to_string();
            match std::fs::read(path) {
                Ok(bytes) => scan_manifest_stream(&bytes, &origin),
                Err(source) => StreamOutcome {
                    errors: vec![ManifestError::Io { path: origin, source }],
                    ..StreamOutcome::default()
                },
            }
        })
        .collect();

    let mut out = LoadOutcome::default();
    for stream in per_file {
        out.parsed += stream.parsed;
        out.skipped_empty += stream.skipped_empty;
        out.errors.extend(stream.errors);
        for doc in stream.documents {
            if filter.map_or(true, |f| f.matches(&doc)) {
                out.documents.push(doc);
            } else {
                out.filtered_out += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stream_yields_nothing() {
        assert!(parse_manifest_stream(b"", "x.yaml").unwrap().is_empty());
        assert!(parse_manifest_stream(b"---\n# just a comment\n---\n", "x.yaml").unwrap().is_empty());
    }

    #[test]
    fn three_documents_keep_their_indices() {
        let text = "\
apiVersion: v1
kind: Pod
metadata: {name: a, namespace: ricplt}
---
apiVersion: v1
kind: Service
metadata: {name: b, namespace: ricplt}
---
apiVersion: rbac.authorization.k8s.io/v1
kind: ClusterRole
metadata: {name: c}
";
        let docs = parse_manifest_stream(text.as_bytes(), "three.yaml").unwrap();
        assert_eq!(docs.len(), 3);
        let idx: Vec<_> = docs.iter().map(|d| d.source.document_index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(docs[2].namespace, None);
        assert_eq!(docs[1].kind, "Service");
    }

    #[test]
    fn leading_separator_does_not_shift_indices() {
        let text = "---\nkind: Pod\nmetadata: {name: a}\n---\nkind: Pod\nmetadata: {name: b}\n";
        let docs = parse_manifest_stream(text.as_bytes(), "x.yaml").unwrap();
        assert_eq!(docs.iter().map(|d| d.source.document_index).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn missing_kind_and_name() {
        let err = parse_manifest_stream(br#"{"apiVersion":"v1","metadata":{"name":"x"}}"#, "x.json").unwrap_err();
        assert!(matches!(err, ManifestError::MissingKind { document_index: 0, .. }));
        let err = parse_manifest_stream(b"kind: Pod\nmetadata: {}\n", "x.yaml").unwrap_err();
        assert!(matches!(err, ManifestError::MissingName { .. }));
    }

    #[test]
    fn malformed_document_reports_index() {
        let text = "kind: Pod\nmetadata: {name: ok}\n---\nkind: [unclosed\n";
        let err = parse_manifest_stream(text.as_bytes(), "bad.yaml").unwrap_err();
        assert_eq!(err.document_index(), Some(1));
        assert!(matches!(err, ManifestError::MalformedDocument { .. }));
    }

    #[test]
    fn lists_are_flattened() {
        let text = r#"{"apiVersion":"v1","kind":"PodList","items":[
            {"metadata":{"name":"a","namespace":"ricplt"}},
            {"kind":"Pod","metadata":{"name":"b","namespace":"ricplt"}}]}"#;
        let docs = parse_manifest_stream(text.as_bytes(), "list.json").unwrap();
        assert_eq!(docs.len(), 2);
        assert!(docs.iter().all(|d| d.kind == "Pod" && d.api_version == "v1"));
        assert!(docs.iter().all(|d| d.source.document_index == 0));
    }

    #[test]
    fn unknown_kinds_are_retained() {
        let docs = parse_manifest_stream(b"kind: FancyThing\nmetadata: {name: f}\n", "x.yml").unwrap();
        assert_eq!(docs[0].kind, "FancyThing");
    }

    #[test]
    fn resource_ref_rendering() {
        let docs = parse_manifest_stream(
            b"kind: Pod\nmetadata: {name: e2term, namespace: ricplt}\n---\nkind: ClusterRole\nmetadata: {name: admin}\n---\nkind: Deployment\nmetadata: {name: ricplt-rtmgr, namespace: ricplt}\n",
            "x.yaml",
        )
        .unwrap();
        let refs: Vec<_> = docs.iter().map(|d| resource_ref(d).to_string()).collect();
        assert_eq!(refs, ["ricplt/Pod/e2term", "_cluster/ClusterRole/admin", "ricplt/Deployment/ricplt-rtmgr"]);
        for r in &refs {
            assert_eq!(&r.parse::<ResourceRef>().unwrap().to_string(), r);
        }
        assert!("a/b".parse::<ResourceRef>().is_err());
        assert!("a//c".parse::<ResourceRef>().is_err());
    }

    #[test]
    fn completeness_accounting() {
        let text = "kind: Pod\nmetadata: {name: a}\n---\n# empty\n---\nkind: [\n---\nkind: Pod\nmetadata: {}\n";
        let outcome = scan_manifest_stream(text.as_bytes(), "x.yaml");
        assert_eq!(outcome.documents.len(), 1);
        assert_eq!(outcome.skipped_empty, 1);
        assert_eq!(outcome.errors.len(), 2);
        assert_eq!(outcome.encountered(), 4);
    }

    #[test]
    fn filter_excludes_cluster_scoped_when_namespace_set() {
        let docs = parse_manifest_stream(b"kind: ClusterRole\nmetadata: {name: admin}\n", "x.yaml").unwrap();
        assert!(!ResourceFilter::namespace("ricplt").matches(&docs[0]));
        assert!(ResourceFilter::default().matches(&docs[0]));
    }
}
