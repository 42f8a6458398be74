//! Outdated-component audit against an advisory database.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::catalog::{decode_structured, BUNDLED_ADVISORIES};
use crate::severity::{classify_severity, Cvss, SeverityClass};

/// Numeric `major.minor.patch` version. Equality and ordering ignore the
/// original spelling (`v1.2.3` equals `1.2.3`).
#[derive(Debug, Clone)]
pub struct Version {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
    pub original: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed version `{0}` (expected [v]MAJOR.MINOR[.PATCH])")]
pub struct MalformedVersion(pub String);

fn version_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^v?(0|[1-9]\d*)\.(0|[1-9]\d*)(?:\.(0|[1-9]\d*))?$").unwrap())
}

pub fn parse_version(text: &str) -> Result<Version, MalformedVersion> {
    let caps = version_regex()
        .captures(text)
        .ok_or_else(|| MalformedVersion(text.to_string()))?;
    let num = |i: usize| -> Result<u64, MalformedVersion> {
        caps.get(i)
            .map_or(Ok(0), |m| m.as_str().parse().map_err(|_| MalformedVersion(text.to_string())))
    };
    Ok(Version {
        major: num(1)?,
        minor: num(2)?,
        patch: num(3)?,
        original: text.to_string(),
    })
}

impl Version {
    pub fn new(major: u64, minor: u64, patch: u64) -> Self {
        Version {
            major,
            minor,
            patch,
            original: format!("{major}.{minor}.{patch}"),
        }
    }

    pub fn triple(&self) -> (u64, u64, u64) {
        (self.major, self.minor, self.patch)
    }
}

impl FromStr for Version {
    type Err = MalformedVersion;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_version(s)
    }
}

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.triple() == other.triple()
    }
}

impl Eq for Version {}

impl Hash for Version {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.triple().hash(state);
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        self.triple().cmp(&other.triple())
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.original)
    }
}

impl Serialize for Version {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.original)
    }
}

impl<'de> Deserialize<'de> for Version {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Which installed versions an advisory covers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum VersionPredicate {
    Exact(Version),
    AtMost(Version),
}

impl VersionPredicate {
    pub fn matches(&self, v: &Version) -> bool {
        match self {
            VersionPredicate::Exact(x) => v == x,
            VersionPredicate::AtMost(x) => v <= x,
        }
    }
}

impl fmt::Display for VersionPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VersionPredicate::Exact(v) => write!(f, "{v}"),
            VersionPredicate::AtMost(v) => write!(f, "<={v}"),
        }
    }
}

impl FromStr for VersionPredicate {
    type Err = MalformedVersion;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("<=") {
            Ok(VersionPredicate::AtMost(parse_version(rest.trim())?))
        } else {
            Ok(VersionPredicate::Exact(parse_version(s.strip_prefix('=').unwrap_or(s).trim())?))
        }
    }
}

impl Serialize for VersionPredicate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VersionPredicate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvisoryEntry {
    pub component: String,
    pub affected: VersionPredicate,
    pub cve_count: u32,
    pub cvss_min: Cvss,
    pub cvss_max: Cvss,
    #[serde(default)]
    pub vulnerability_classes: Vec<String>,
    #[serde(default)]
    pub recommended_min_version: Option<Version>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdvisoryError {
    #[error("advisory for `{component}`: cvss_min {min} exceeds cvss_max {max}")]
    InvertedRange { component: String, min: Cvss, max: Cvss },
    #[error("advisory for `{0}` has a zero cve_count")]
    NoCves(String),
    #[error("advisory component `{0}` must be non-empty lower-case")]
    BadComponent(String),
    #[error("{path}: {message}")]
    Load { path: String, message: String },
}

impl AdvisoryEntry {
    pub fn validate(&self) -> Result<(), AdvisoryError> {
        if self.component.is_empty() || self.component != self.component.to_lowercase() {
            return Err(AdvisoryError::BadComponent(self.component.clone()));
        }
        if self.cvss_min > self.cvss_max {
            return Err(AdvisoryError::InvertedRange {
                component: self.component.clone(),
                min: self.cvss_min,
                max: self.cvss_max,
            });
        }
        if self.cve_count == 0 {
            return Err(AdvisoryError::NoCves(self.component.clone()));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdvisoryFile {
    #[serde(default)]
    #[allow(dead_code)]
    snapshot: Option<String>,
    advisories: Vec<AdvisoryEntry>,
}

pub fn parse_advisories(text: &str, origin: &str) -> Result<Vec<AdvisoryEntry>, AdvisoryError> {
    let file: AdvisoryFile = decode_structured(text).map_err(|message| AdvisoryError::Load {
        path: origin.to_string(),
        message,
    })?;
    for entry in &file.advisories {
        entry.validate()?;
    }
    Ok(file.advisories)
}

pub fn load_advisories(path: &Path) -> Result<Vec<AdvisoryEntry>, AdvisoryError> {
    let text = std::fs::read_to_string(path).map_err(|e| AdvisoryError::Load {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_advisories(&text, &path.display().to_string())
}

/// The embedded advisory snapshot for the RIC dependency installer.
pub fn bundled_advisories() -> Vec<AdvisoryEntry> {
    parse_advisories(BUNDLED_ADVISORIES, "data/advisories.yaml").expect("embedded advisories are valid")
}

/// Overlay user advisories, replacing entries with the same component and
/// affected range.
pub fn merge_advisories(base: Vec<AdvisoryEntry>, overlay: Vec<AdvisoryEntry>) -> Vec<AdvisoryEntry> {
    let mut merged: Vec<AdvisoryEntry> = base
        .into_iter()
        .filter(|b| !overlay.iter().any(|o| o.component == b.component && o.affected == b.affected))
        .collect();
    merged.extend(overlay);
    merged
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VersionFinding {
    pub component: String,
    pub installed: Version,
    pub matched_entry: AdvisoryEntry,
    pub severity: SeverityClass,
}

/// One inventory line: a component and its version text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryItem {
    pub component: String,
    pub version: String,
}

impl InventoryItem {
    pub fn new(component: impl Into<String>, version: impl Into<String>) -> Self {
        InventoryItem {
            component: component.into(),
            version: version.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{component}: {error}")]
pub struct InventoryItemError {
    pub component: String,
    pub error: MalformedVersion,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VersionAudit {
    pub findings: Vec<VersionFinding>,
    /// Items whose version could not be parsed; the rest were still audited.
    pub errors: Vec<InventoryItemError>,
}

pub fn sort_version_findings(findings: &mut [VersionFinding]) {
    findings.sort_by(|a, b| {
        b.severity
            .cmp(&a.severity)
            .then_with(|| a.component.cmp(&b.component))
            .then_with(|| a.installed.cmp(&b.installed))
            .then_with(|| a.matched_entry.affected.to_string().cmp(&b.matched_entry.affected.to_string()))
    });
}

/// Match each inventory item against every advisory for its component.
pub fn audit_components(inventory: &[InventoryItem], advisories: &[AdvisoryEntry]) -> VersionAudit {
    let mut audit = VersionAudit::default();
    for item in inventory {
        let component = item.component.trim().to_lowercase();
        let installed = match parse_version(item.version.trim()) {
            Ok(v) => v,
            Err(error) => {
                audit.errors.push(InventoryItemError { component, error });
                continue;
            }
        };
        for entry in advisories.iter().filter(|a| a.component == component) {
            if entry.affected.matches(&installed) {
                audit.findings.push(VersionFinding {
                    component: component.clone(),
                    installed: installed.clone(),
                    matched_entry: entry.clone(),
                    severity: classify_severity(Some(entry.cvss_max), None),
                });
            }
        }
    }
    sort_version_findings(&mut audit.findings);
    audit
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InventoryFile {
    Wrapped {
        components: Vec<InventoryItem>,
    },
    Bare(Vec<InventoryItem>),
}

#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct InventoryError {
    pub path: String,
    pub message: String,
}

/// Parse an inventory document: `components: [{component, version}, ...]`
/// or a bare list of the same items.
/// Versions must be strings (quote them in YAML so `3.10` is not read as a float).
pub fn parse_inventory(text: &str, origin: &str) -> Result<Vec<InventoryItem>, InventoryError> {
    decode_structured::<InventoryFile>(text)
        .map(|f| match f {
            InventoryFile::Wrapped { components } | InventoryFile::Bare(components) => components,
        })
        .map_err(|message| InventoryError {
            path: origin.to_string(),
            message,
        })
}

pub fn load_inventory(path: &Path) -> Result<Vec<InventoryItem>, InventoryError> {
    let text = std::fs::read_to_string(path).map_err(|e| InventoryError {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_inventory(&text, &path.display().to_string())
}
