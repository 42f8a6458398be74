//! Misconfiguration rule engine.
//!
//! Rules are data: each carries a declarative [`Predicate`], the kinds it
//! applies to, a fixed severity and the framework controls it evidences.
//! [`evaluate`] runs a validated [`RuleCatalog`] over a resource set and
//! returns findings in a deterministic order.

mod predicate;

use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use predicate::{image_registry, pod_spec, shannon_entropy, EvalContext, FieldPath, Pattern, Predicate};

use crate::compliance::Framework;
use crate::manifest::{ResourceDocument, ResourceRef};
pub use crate::severity::{SeverityClass, SeverityHistogram};

/// Kind wildcard accepted in `applies_to`.
pub const ANY_KIND: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThreatCategory {
    AuthAndAccessControl,
    NetworkSegmentation,
    SupplyChain,
    OutdatedComponents,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlRef {
    pub framework: String,
    pub control: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub id: String,
    pub title: String,
    pub description: String,
    pub severity: SeverityClass,
    pub category: ThreatCategory,
    pub applies_to: BTreeSet<String>,
    pub check: Predicate,
    #[serde(default)]
    pub control_refs: Vec<ControlRef>,
    pub remediation: String,
}

impl Rule {
    pub fn applies_to_kind(&self, kind: &str) -> bool {
        self.applies_to.contains(ANY_KIND) || self.applies_to.contains(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub resource: ResourceRef,
    pub severity: SeverityClass,
    pub message: String,
    pub remediation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("duplicate rule id `{0}`")]
    DuplicateRuleId(String),
    #[error("rule `{0}` has an empty applies_to set")]
    EmptyAppliesTo(String),
    #[error("rule `{rule}` references unknown control {framework}/{control}")]
    UnresolvedControlRef {
        rule: String,
        framework: String,
        control: String,
    },
    #[error("duplicate framework id `{0}`")]
    DuplicateFramework(String),
    #[error("framework `{framework}`: {message}")]
    InvalidFramework { framework: String, message: String },
    #[error("{path}: {message}")]
    Load { path: String, message: String },
}

/// A rule list that has passed the catalog invariants.
#[derive(Debug, Clone)]
pub struct RuleCatalog {
    rules: Vec<Rule>,
}

impl RuleCatalog {
    /// Validate ids, `applies_to` and control references against `frameworks`.
    pub fn new(rules: Vec<Rule>, frameworks: &[Framework]) -> Result<Self, CatalogError> {
        let mut seen = HashSet::new();
        for rule in &rules {
            if !seen.insert(rule.id.as_str()) {
                return Err(CatalogError::DuplicateRuleId(rule.id.clone()));
            }
            if rule.applies_to.is_empty() {
                return Err(CatalogError::EmptyAppliesTo(rule.id.clone()));
            }
            for cref in &rule.control_refs {
                let resolved = frameworks
                    .iter()
                    .find(|f| f.id == cref.framework)
                    .is_some_and(|f| f.controls.iter().any(|c| c.control_id == cref.control));
                if !resolved {
                    return Err(CatalogError::UnresolvedControlRef {
                        rule: rule.id.clone(),
                        framework: cref.framework.clone(),
                        control: cref.control.clone(),
                    });
                }
            }
        }
        Ok(RuleCatalog { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Every kind the catalog needs to see, for fetching from a live cluster.
    pub fn required_kinds(&self) -> BTreeSet<String> {
        let mut kinds = BTreeSet::new();
        for rule in &self.rules {
            kinds.extend(rule.applies_to.iter().filter(|k| *k != ANY_KIND).cloned());
            let mut extra = Vec::new();
            rule.check.referenced_kinds(&mut extra);
            kinds.extend(extra);
        }
        kinds
    }
}

/// Overlay user rules on a base list; a user rule replaces a base rule with the same id.
pub fn merge_rules(base: Vec<Rule>, overlay: Vec<Rule>) -> Vec<Rule> {
    let mut merged: Vec<Rule> = base
        .into_iter()
        .filter(|b| !overlay.iter().any(|o| o.id == b.id))
        .collect();
    merged.extend(overlay);
    merged
}

pub fn sort_findings(findings: &mut [Finding]) {
    findings.sort_by(|a, b| {
        b.severity
            .cmp(&a.severity)
            .then_with(|| a.rule_id.cmp(&b.rule_id))
            .then_with(|| a.resource.cmp(&b.resource))
    });
}

/// Run every rule over every resource of a kind it applies to.
///
/// Exactly one finding per firing (rule, resource) pair, sorted by severity
/// (descending), rule id, then resource ref.
pub fn evaluate(catalog: &RuleCatalog, resources: &[ResourceDocument]) -> Vec<Finding> {
    let ctx = EvalContext::new(resources);
    let mut findings: Vec<Finding> = resources
        .par_iter()
        .enumerate()
        .flat_map_iter(|(index, doc)| {
            let ctx = &ctx;
            catalog
                .rules
                .iter()
                .filter(move |rule| rule.applies_to_kind(&doc.kind) && rule.check.fires(doc, index, ctx))
                .map(move |rule| Finding {
                    rule_id: rule.id.clone(),
                    resource: doc.resource_ref(),
                    severity: rule.severity,
                    message: rule.title.clone(),
                    remediation: rule.remediation.clone(),
                })
        })
        .collect();
    sort_findings(&mut findings);
    findings
}

pub fn severity_histogram(findings: &[Finding]) -> SeverityHistogram {
    findings.iter().map(|f| f.severity).collect()
}

pub use crate::catalog::builtin_catalog;
