//! Container image vulnerability ingestion and per-container aggregation.
//!
//! Scan reports use a small native schema (one document per container) so
//! that adapters for any scanner can feed the same model.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::manifest::{ResourceDocument, ResourceRef};
use crate::rules::{image_registry, pod_spec, Finding};
use crate::severity::{classify_severity, Cvss, CvssError, SeverityClass, SeverityHistogram};

/// `registry/repository:tag`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ImageRef {
    pub registry: String,
    pub repository: String,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{0}` is not a registry/repository:tag image reference")]
pub struct InvalidImageRef(pub String);

impl ImageRef {
    pub fn new(registry: impl Into<String>, repository: impl Into<String>, tag: impl Into<String>) -> Self {
        ImageRef {
            registry: registry.into(),
            repository: repository.into(),
            tag: tag.into(),
        }
    }

    /// Resolve an image string as written in a pod spec. Bare names get the
    /// `docker.io` registry and a missing tag reads as `latest`.
    pub fn from_pod_image(image: &str) -> Self {
        let registry = image_registry(image);
        let rest = if image.starts_with(registry) && image.len() > registry.len() {
            &image[registry.len() + 1..]
        } else {
            image
        };
        let (rest, digest) = match rest.split_once('@') {
            Some((r, d)) => (r, Some(d)),
            None => (rest, None),
        };
        let (repository, tag) = match rest.rsplit_once(':') {
            Some((repo, tag)) => (repo, tag.to_string()),
            None => (rest, digest.map_or_else(|| "latest".to_string(), |d| format!("@{d}"))),
        };
        ImageRef::new(registry, repository, tag)
    }

    /// Last repository segment with its tag, e.g. `ric-plt-e2:6.0.3`.
    pub fn short_tag(&self) -> String {
        let name = self.repository.rsplit('/').next().unwrap_or(&self.repository);
        format!("{name}:{}", self.tag)
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}:{}", self.registry, self.repository, self.tag)
    }
}

impl FromStr for ImageRef {
    type Err = InvalidImageRef;

    /// Split at the first `/` and the last `:`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InvalidImageRef(s.to_string());
        let (registry, rest) = s.split_once('/').ok_or_else(bad)?;
        let (repository, tag) = rest.rsplit_once(':').ok_or_else(bad)?;
        if registry.is_empty() || repository.is_empty() || tag.is_empty() || tag.contains('/') {
            return Err(bad());
        }
        Ok(ImageRef::new(registry, repository, tag))
    }
}

#[derive(Serialize, Deserialize)]
struct ImageRepr {
    registry: String,
    repository: String,
    tag: String,
}

impl Serialize for ImageRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ImageRepr {
            registry: self.registry.clone(),
            repository: self.repository.clone(),
            tag: self.tag.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ImageRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = ImageRepr::deserialize(deserializer)?;
        Ok(ImageRef::new(r.registry, r.repository, r.tag))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VulnRecord {
    pub cve_id: String,
    pub package: String,
    pub installed_version: String,
    pub fixed_version: Option<String>,
    pub cvss: Option<Cvss>,
    pub vendor_severity: Option<SeverityClass>,
    pub severity: SeverityClass,
    pub remote_code_execution: bool,
    pub container: String,
    pub image: ImageRef,
}

impl VulnRecord {
    /// A fix is published.
    pub fn is_actionable(&self) -> bool {
        self.fixed_version.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("scan report is not a valid document: {0}")]
    Document(String),
    #[error("scan report field `{field}`: {message}")]
    Header { field: &'static str, message: String },
    #[error("scan report entry {index}: {message}")]
    Entry { index: usize, message: String },
}

impl SchemaError {
    pub fn entry_index(&self) -> Option<usize> {
        match self {
            SchemaError::Entry { index, .. } => Some(*index),
            _ => None,
        }
    }
}

/// An entry dropped because its CVSS score is invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedEntry {
    pub index: usize,
    pub cve_id: String,
    pub reason: CvssError,
}

impl fmt::Display for RejectedEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "entry {} ({}): {}", self.index, self.cve_id, self.reason)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedScanReport {
    pub container: String,
    pub image: Option<ImageRef>,
    pub records: Vec<VulnRecord>,
    pub rejected: Vec<RejectedEntry>,
}

#[derive(Deserialize)]
struct EntryRepr {
    cve_id: String,
    package: String,
    installed_version: String,
    #[serde(default)]
    fixed_version: Option<String>,
    #[serde(default)]
    cvss: Option<f64>,
    #[serde(default)]
    vendor_severity: Option<String>,
    #[serde(default)]
    rce: bool,
}

/// Parse one native scan report (YAML or JSON).
///
/// Entries with a CVSS score outside `[0, 10]` are dropped individually and
/// listed in `rejected`; any other schema violation fails the whole report.
pub fn parse_scan_report(text: &[u8]) -> Result<ParsedScanReport, SchemaError> {
    let text = std::str::from_utf8(text).map_err(|e| SchemaError::Document(e.to_string()))?;
    let doc: Value = serde_yaml::from_str(text).map_err(|e| SchemaError::Document(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| SchemaError::Document("top level must be a mapping".into()))?;

    let container = obj
        .get("container")
        .and_then(Value::as_str)
        .filter(|c| !c.is_empty())
        .ok_or(SchemaError::Header {
            field: "container",
            message: "missing or not a non-empty string".into(),
        })?
        .to_string();
    let image: ImageRef = serde_json::from_value(obj.get("image").cloned().unwrap_or(Value::Null)).map_err(|e| {
        SchemaError::Header {
            field: "image",
            message: e.to_string(),
        }
    })?;
    let entries = match obj.get("entries") {
        Some(Value::Array(items)) => items.as_slice(),
        Some(Value::Null) | None => &[],
        Some(_) => {
            return Err(SchemaError::Header {
                field: "entries",
                message: "must be a list".into(),
            })
        }
    };

    let mut report = ParsedScanReport {
        container: container.clone(),
        image: Some(image.clone()),
        ..Default::default()
    };
    for (index, raw) in entries.iter().enumerate() {
        let entry_err = |message: String| SchemaError::Entry { index, message };
        let entry: EntryRepr = serde_json::from_value(raw.clone()).map_err(|e| entry_err(e.to_string()))?;
        if entry.cve_id.trim().is_empty() {
            return Err(entry_err("empty cve_id".into()));
        }
        let vendor_severity = entry
            .vendor_severity
            .as_deref()
            .map(|s| s.parse::<SeverityClass>().map_err(|e| entry_err(e.to_string())))
            .transpose()?;
        let cvss = match entry.cvss.map(Cvss::from_f64).transpose() {
            Ok(c) => c,
            Err(reason) => {
                report.rejected.push(RejectedEntry {
                    index,
                    cve_id: entry.cve_id,
                    reason,
                });
                continue;
            }
        };
        report.records.push(VulnRecord {
            severity: classify_severity(cvss, vendor_severity),
            cve_id: entry.cve_id,
            package: entry.package,
            installed_version: entry.installed_version,
            fixed_version: entry.fixed_version.filter(|v| !v.is_empty()),
            cvss,
            vendor_severity,
            remote_code_execution: entry.rce,
            container: container.clone(),
            image: image.clone(),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContainerScanSummary {
    pub container: String,
    /// Absent for containers known only from manifests.
    pub image: Option<ImageRef>,
    pub vuln_histogram: SeverityHistogram,
    pub misconfig_histogram: SeverityHistogram,
}

impl ContainerScanSummary {
    fn empty(container: &str) -> Self {
        ContainerScanSummary {
            container: container.to_string(),
            image: None,
            vuln_histogram: SeverityHistogram::new(),
            misconfig_histogram: SeverityHistogram::new(),
        }
    }

    /// Combine two summaries of the same container.
    pub fn merge(mut self, other: &ContainerScanSummary) -> Self {
        debug_assert_eq!(self.container, other.container);
        self.image = match (self.image.take(), other.image.clone()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.vuln_histogram += other.vuln_histogram;
        self.misconfig_histogram += other.misconfig_histogram;
        self
    }
}

/// One summary per container, sorted by name, with zero-filled histograms.
///
/// When a container's records disagree on the image, the smallest image
/// reference is kept so the result does not depend on record order.
pub fn aggregate_by_container(
    records: &[VulnRecord],
    misconfig_by_container: &BTreeMap<String, SeverityHistogram>,
) -> Vec<ContainerScanSummary> {
    let mut by_name: BTreeMap<&str, ContainerScanSummary> = BTreeMap::new();
    for r in records {
        let s = by_name
            .entry(r.container.as_str())
            .or_insert_with(|| ContainerScanSummary::empty(&r.container));
        s.vuln_histogram.record(r.severity);
        if s.image.as_ref().map_or(true, |img| r.image < *img) {
            s.image = Some(r.image.clone());
        }
    }
    for (name, hist) in misconfig_by_container {
        by_name
            .entry(name.as_str())
            .or_insert_with(|| ContainerScanSummary::empty(name))
            .misconfig_histogram += *hist;
    }
    by_name.into_values().collect()
}

/// Merge two aggregations container by container.
pub fn merge_summaries(a: &[ContainerScanSummary], b: &[ContainerScanSummary]) -> Vec<ContainerScanSummary> {
    let mut by_name: BTreeMap<String, ContainerScanSummary> = BTreeMap::new();
    for s in a.iter().chain(b) {
        let merged = match by_name.remove(&s.container) {
            Some(prev) => prev.merge(s),
            None => s.clone(),
        };
        by_name.insert(s.container.clone(), merged);
    }
    by_name.into_values().collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VulnTotals {
    pub occurrences: u64,
    pub unique_cves: u64,
    pub critical_rce: u64,
    pub critical_actionable: u64,
}

/// Occurrences count every record; the other three count distinct CVE ids.
pub fn occurrence_and_unique_totals(records: &[VulnRecord]) -> VulnTotals {
    let mut unique = BTreeSet::new();
    let mut rce = BTreeSet::new();
    let mut actionable = BTreeSet::new();
    for r in records {
        unique.insert(r.cve_id.as_str());
        if r.severity == SeverityClass::Critical {
            if r.remote_code_execution {
                rce.insert(r.cve_id.as_str());
            }
            if r.is_actionable() {
                actionable.insert(r.cve_id.as_str());
            }
        }
    }
    VulnTotals {
        occurrences: records.len() as u64,
        unique_cves: unique.len() as u64,
        critical_rce: rce.len() as u64,
        critical_actionable: actionable.len() as u64,
    }
}

/// Label keys tried, in order, to name the container a resource belongs to.
pub const CONTAINER_LABELS: [&str; 2] = ["app.kubernetes.io/name", "app"];

/// Container name a resource is attributed to: its first matching label,
/// else its own name.
pub fn container_of(doc: &ResourceDocument) -> &str {
    CONTAINER_LABELS
        .iter()
        .find_map(|k| doc.labels.get(*k))
        .map_or(doc.name.as_str(), String::as_str)
}

/// Misconfiguration histogram per container. Findings on resources that are
/// not in `resources` are ignored.
pub fn misconfig_by_container(findings: &[Finding], resources: &[ResourceDocument]) -> BTreeMap<String, SeverityHistogram> {
    let owners: HashMap<ResourceRef, &str> = resources.iter().map(|d| (d.resource_ref(), container_of(d))).collect();
    let mut out: BTreeMap<String, SeverityHistogram> = BTreeMap::new();
    for f in findings {
        if let Some(owner) = owners.get(&f.resource) {
            out.entry(owner.to_string()).or_default().record(f.severity);
        }
    }
    out
}

/// First container image of every workload, keyed by attributed container.
pub fn container_images(resources: &[ResourceDocument]) -> BTreeMap<String, ImageRef> {
    let mut out = BTreeMap::new();
    for doc in resources {
        let image = pod_spec(doc)
            .and_then(|s| s.get("containers"))
            .and_then(Value::as_array)
            .and_then(|cs| cs.first())
            .and_then(|c| c.get("image"))
            .and_then(Value::as_str);
        if let Some(image) = image {
            out.entry(container_of(doc).to_string())
                .or_insert_with(|| ImageRef::from_pod_image(image));
        }
    }
    out
}

/// Fill in missing summary images from workload manifests.
pub fn attach_manifest_images(summaries: &mut [ContainerScanSummary], images: &BTreeMap<String, ImageRef>) {
    for s in summaries.iter_mut().filter(|s| s.image.is_none()) {
        s.image = images.get(&s.container).cloned();
    }
}
