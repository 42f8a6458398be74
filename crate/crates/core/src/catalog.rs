//! Loading of rule, framework and advisory data files.
//!
//! The bundled catalogs are embedded at compile time. User catalogs are
//! YAML or JSON files with optional top-level `rules` and `frameworks` lists.

use std::collections::HashSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::compliance::{Control, Framework};
use crate::rules::{CatalogError, Rule};
use crate::versions::AdvisoryEntry;

const BUILTIN_RULES: &str = include_str!("../data/rules.yaml");
const BUNDLED_FRAMEWORKS: [(&str, &str); 3] = [
    ("nsa-cisa.yaml", include_str!("../data/frameworks/nsa-cisa.yaml")),
    ("mitre-attack.yaml", include_str!("../data/frameworks/mitre-attack.yaml")),
    ("cis-v1.23-t1.0.1.yaml", include_str!("../data/frameworks/cis-v1.23-t1.0.1.yaml")),
];
pub(crate) const BUNDLED_ADVISORIES: &str = include_str!("../data/advisories.yaml");

/// Decode YAML (or JSON, which YAML accepts) through a JSON tree so that
/// enum-tagged maps behave the same in both syntaxes.
pub(crate) fn decode_structured<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let value: serde_json::Value = serde_yaml::from_str(text).map_err(|e| e.to_string())?;
    serde_json::from_value(value).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlRepr {
    control_id: String,
    title: String,
    #[serde(default)]
    rule_ids: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameworkRepr {
    id: String,
    title: String,
    /// Recorded control count, checked against the list when present.
    #[serde(default)]
    control_count: Option<usize>,
    controls: Vec<ControlRepr>,
}

impl FrameworkRepr {
    fn into_framework(self) -> Result<Framework, CatalogError> {
        let invalid = |message: String| CatalogError::InvalidFramework {
            framework: self.id.clone(),
            message,
        };
        if self.controls.is_empty() {
            return Err(invalid("framework has no controls".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.controls {
            if !seen.insert(c.control_id.as_str()) {
                return Err(invalid(format!("duplicate control id `{}`", c.control_id)));
            }
        }
        if let Some(expected) = self.control_count {
            if expected != self.controls.len() {
                return Err(invalid(format!(
                    "control_count says {expected} but {} controls are listed",
                    self.controls.len()
                )));
            }
        }
        let controls = self
            .controls
            .into_iter()
            .map(|c| Control {
                framework_id: self.id.clone(),
                control_id: c.control_id,
                title: c.title,
                rule_ids: c.rule_ids,
            })
            .collect();
        Ok(Framework {
            id: self.id,
            title: self.title,
            controls,
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogRepr {
    #[serde(default)]
    rules: Vec<Rule>,
    #[serde(default)]
    frameworks: Vec<FrameworkRepr>,
    #[serde(default)]
    advisories: Vec<AdvisoryEntry>,
}

/// Contents of one catalog file.
#[derive(Debug, Clone, Default)]
pub struct CatalogFile {
    pub rules: Vec<Rule>,
    pub frameworks: Vec<Framework>,
    pub advisories: Vec<AdvisoryEntry>,
}

/// Parse catalog text (`rules`, `frameworks` and `advisories` lists, all
/// optional). Duplicate rule or framework ids inside one file are errors.
pub fn parse_catalog(text: &str, origin: &str) -> Result<CatalogFile, CatalogError> {
    let repr: CatalogRepr = decode_structured(text).map_err(|message| CatalogError::Load {
        path: origin.to_string(),
        message,
    })?;
    let mut ids = HashSet::new();
    for rule in &repr.rules {
        if !ids.insert(rule.id.clone()) {
            return Err(CatalogError::DuplicateRuleId(rule.id.clone()));
        }
    }
    let mut fw_ids = HashSet::new();
    let mut frameworks = Vec::with_capacity(repr.frameworks.len());
    for f in repr.frameworks {
        if !fw_ids.insert(f.id.clone()) {
            return Err(CatalogError::DuplicateFramework(f.id));
        }
        frameworks.push(f.into_framework()?);
    }
    for advisory in &repr.advisories {
        advisory.validate().map_err(|e| CatalogError::Load {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
    }
    Ok(CatalogFile {
        rules: repr.rules,
        frameworks,
        advisories: repr.advisories,
    })
}

pub fn load_catalog_file(path: &Path) -> Result<CatalogFile, CatalogError> {
    let text = std::fs::read_to_string(path).map_err(|e| CatalogError::Load {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_catalog(&text, &path.display().to_string())
}

/// The embedded rule catalog.
pub fn builtin_catalog() -> Vec<Rule> {
    parse_catalog(BUILTIN_RULES, "data/rules.yaml")
        .expect("embedded rule catalog is valid")
        .rules
}

/// The three embedded framework catalogs: nsa-cisa, mitre-attack, cis-v1.23-t1.0.1.
pub fn bundled_frameworks() -> Vec<Framework> {
    BUNDLED_FRAMEWORKS
        .iter()
        .flat_map(|(name, text)| {
            parse_catalog(text, name)
                .expect("embedded framework catalog is valid")
                .frameworks
        })
        .collect()
}

/// Overlay user frameworks on a base list, replacing same-id entries.
pub fn merge_frameworks(base: Vec<Framework>, overlay: Vec<Framework>) -> Vec<Framework> {
    let mut merged: Vec<Framework> = base
        .into_iter()
        .filter(|b| !overlay.iter().any(|o| o.id == b.id))
        .collect();
    merged.extend(overlay);
    merged
}
