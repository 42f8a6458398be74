//! The audit workflows behind the command-line sub-commands.
//!
//! Each workflow turns a [`RunConfig`] into an [`AuditResult`]. Non-fatal
//! problems (rejected CVSS scores, malformed inventory versions) are written
//! to the diagnostic sink and processing continues; everything else is a
//! [`ToolError`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::catalog::{builtin_catalog, bundled_frameworks, load_catalog_file, merge_frameworks};
use crate::cluster::{api_resource, fetch_resources, ClusterEndpoint, ClusterError};
use crate::compliance::{evaluate_framework, ComplianceError, Framework};
use crate::manifest::{load_directory, ManifestError, ResourceDocument, ResourceFilter};
use crate::report::AuditResult;
use crate::rules::{evaluate, merge_rules, CatalogError, Finding, RuleCatalog};
use crate::severity::SeverityClass;
use crate::versions::{
    audit_components, bundled_advisories, load_inventory, merge_advisories, AdvisoryEntry, InventoryError,
};
use crate::vulns::{
    aggregate_by_container, attach_manifest_images, container_images, merge_summaries, misconfig_by_container,
    occurrence_and_unique_totals, parse_scan_report, ContainerScanSummary, SchemaError, VulnRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Table,
    Json,
    Both,
}

/// Everything a workflow needs, already merged from flags and config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub input_paths: Vec<PathBuf>,
    pub namespace_filter: Option<String>,
    /// Rule, framework and advisory catalogs layered over the built-in ones.
    pub catalogs: Vec<PathBuf>,
    /// Framework ids to score; empty means every known framework.
    pub frameworks: Vec<String>,
    pub scan_reports: Vec<PathBuf>,
    pub inventory_path: Option<PathBuf>,
    pub endpoint: Option<ClusterEndpoint>,
    pub format: OutputFormat,
    pub fail_on: SeverityClass,
    pub output_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input_paths: Vec::new(),
            namespace_filter: None,
            catalogs: Vec::new(),
            frameworks: Vec::new(),
            scan_reports: Vec::new(),
            inventory_path: None,
            endpoint: None,
            format: OutputFormat::Table,
            fail_on: SeverityClass::Critical,
            output_path: None,
        }
    }
}

impl RunConfig {
    fn has_resources(&self) -> bool {
        !self.input_paths.is_empty() || self.endpoint.is_some()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("{0}")]
    Usage(String),
    #[error("{count} manifest error(s) under {path}")]
    Manifests { path: String, count: usize },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("{path}: {source}")]
    ScanReport {
        path: String,
        #[source]
        source: SchemaError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Inventory(#[from] InventoryError),
    #[error(transparent)]
    Compliance(#[from] ComplianceError),
    #[error("unknown framework `{0}`")]
    UnknownFramework(String),
}

/// Built-in rules, frameworks and advisories with every user catalog applied
/// in command-line order.
pub struct LoadedCatalog {
    pub rules: RuleCatalog,
    pub frameworks: Vec<Framework>,
    pub advisories: Vec<AdvisoryEntry>,
}

pub fn load_catalogs(paths: &[PathBuf]) -> Result<LoadedCatalog, ToolError> {
    let mut rules = builtin_catalog();
    let mut frameworks = bundled_frameworks();
    let mut advisories = bundled_advisories();
    for path in paths {
        let file = load_catalog_file(path)?;
        rules = merge_rules(rules, file.rules);
        frameworks = merge_frameworks(frameworks, file.frameworks);
        advisories = merge_advisories(advisories, file.advisories);
    }
    let rules = RuleCatalog::new(rules, &frameworks)?;
    Ok(LoadedCatalog {
        rules,
        frameworks,
        advisories,
    })
}

fn selected_frameworks<'a>(catalog: &'a LoadedCatalog, ids: &[String]) -> Result<Vec<&'a Framework>, ToolError> {
    if ids.is_empty() {
        return Ok(catalog.frameworks.iter().collect());
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for id in ids {
        let fw = catalog
            .frameworks
            .iter()
            .find(|f| &f.id == id)
            .ok_or_else(|| ToolError::UnknownFramework(id.clone()))?;
        if seen.insert(id.as_str()) {
            out.push(fw);
        }
    }
    Ok(out)
}

/// Manifests from every input path plus, when configured, the cluster.
///
/// All per-document errors are reported before failing.
pub fn load_resources(
    config: &RunConfig,
    catalog: &RuleCatalog,
    diag: &mut dyn Write,
) -> Result<Vec<ResourceDocument>, ToolError> {
    let filter = config.namespace_filter.as_ref().map(|ns| ResourceFilter::namespace(ns.clone()));
    let mut documents = Vec::new();
    for path in &config.input_paths {
        let outcome = load_directory(path, filter.as_ref())?;
        if !outcome.errors.is_empty() {
            for e in &outcome.errors {
                let _ = writeln!(diag, "error: {e}");
            }
            return Err(ToolError::Manifests {
                path: path.display().to_string(),
                count: outcome.errors.len(),
            });
        }
        documents.extend(outcome.documents);
    }
    if let Some(endpoint) = &config.endpoint {
        let kinds: BTreeSet<String> = catalog
            .required_kinds()
            .into_iter()
            .filter(|k| api_resource(k).is_some())
            .collect();
        documents.extend(fetch_resources(endpoint, &kinds, config.namespace_filter.as_deref())?);
    }
    Ok(documents)
}

struct ScanOutput {
    resources: Vec<ResourceDocument>,
    findings: Vec<Finding>,
    summaries: Vec<ContainerScanSummary>,
}

fn run_scan(config: &RunConfig, catalog: &LoadedCatalog, diag: &mut dyn Write) -> Result<ScanOutput, ToolError> {
    let resources = load_resources(config, &catalog.rules, diag)?;
    let findings = evaluate(&catalog.rules, &resources);
    let mut summaries = aggregate_by_container(&[], &misconfig_by_container(&findings, &resources));
    attach_manifest_images(&mut summaries, &container_images(&resources));
    Ok(ScanOutput {
        resources,
        findings,
        summaries,
    })
}

/// Parse every report (in parallel), keeping records in argument order.
pub fn load_scan_reports(paths: &[PathBuf], diag: &mut dyn Write) -> Result<Vec<VulnRecord>, ToolError> {
    let parsed: Vec<_> = paths
        .par_iter()
        .map(|path| {
            let display = path.display().to_string();
            let bytes = std::fs::read(path).map_err(|source| ToolError::Io {
                path: display.clone(),
                source,
            })?;
            parse_scan_report(&bytes).map_err(|source| ToolError::ScanReport { path: display, source })
        })
        .collect();
    let mut records = Vec::new();
    for (path, report) in paths.iter().zip(parsed) {
        let report = report?;
        for r in &report.rejected {
            let _ = writeln!(
                diag,
                "warning: {}: entry {} ({}) skipped: {}",
                path.display(),
                r.index,
                r.cve_id,
                r.reason
            );
        }
        records.extend(report.records);
    }
    Ok(records)
}

fn score_frameworks(
    config: &RunConfig,
    catalog: &LoadedCatalog,
    scan: &ScanOutput,
) -> Result<Vec<crate::compliance::FrameworkScore>, ToolError> {
    selected_frameworks(catalog, &config.frameworks)?
        .into_iter()
        .map(|fw| {
            evaluate_framework(fw, &catalog.rules, &scan.findings, &scan.resources)
                .map(|e| e.score)
                .map_err(ToolError::from)
        })
        .collect()
}

fn audit_inventory(
    path: &Path,
    catalog: &LoadedCatalog,
    diag: &mut dyn Write,
) -> Result<Vec<crate::versions::VersionFinding>, ToolError> {
    let inventory = load_inventory(path)?;
    let audit = audit_components(&inventory, &catalog.advisories);
    for e in &audit.errors {
        let _ = writeln!(diag, "warning: {}: {e}", path.display());
    }
    Ok(audit.findings)
}

fn require(ok: bool, message: &str) -> Result<(), ToolError> {
    if ok {
        Ok(())
    } else {
        Err(ToolError::Usage(message.to_string()))
    }
}

/// Misconfiguration scan of manifests and/or a live cluster.
pub fn cmd_scan(config: &RunConfig, diag: &mut dyn Write) -> Result<AuditResult, ToolError> {
    require(config.has_resources(), "scan needs manifest paths or --endpoint")?;
    let catalog = load_catalogs(&config.catalogs)?;
    let scan = run_scan(config, &catalog, diag)?;
    Ok(AuditResult {
        summaries: scan.summaries,
        findings: scan.findings,
        ..AuditResult::default()
    })
}

/// Per-container vulnerability counts from scan reports.
pub fn cmd_vulns(config: &RunConfig, diag: &mut dyn Write) -> Result<AuditResult, ToolError> {
    require(!config.scan_reports.is_empty(), "vulns needs at least one --scan-report")?;
    let records = load_scan_reports(&config.scan_reports, diag)?;
    Ok(AuditResult {
        summaries: aggregate_by_container(&records, &BTreeMap::new()),
        totals: occurrence_and_unique_totals(&records),
        ..AuditResult::default()
    })
}

/// Framework compliance scores, with the findings they were computed from.
pub fn cmd_score(config: &RunConfig, diag: &mut dyn Write) -> Result<AuditResult, ToolError> {
    require(config.has_resources(), "score needs manifest paths or --endpoint")?;
    let catalog = load_catalogs(&config.catalogs)?;
    selected_frameworks(&catalog, &config.frameworks)?;
    let scan = run_scan(config, &catalog, diag)?;
    let framework_scores = score_frameworks(config, &catalog, &scan)?;
    Ok(AuditResult {
        findings: scan.findings,
        framework_scores,
        ..AuditResult::default()
    })
}

/// Outdated-component audit of an inventory file.
pub fn cmd_versions(config: &RunConfig, diag: &mut dyn Write) -> Result<AuditResult, ToolError> {
    let path = config
        .inventory_path
        .as_deref()
        .ok_or_else(|| ToolError::Usage("versions needs --inventory".into()))?;
    let catalog = load_catalogs(&config.catalogs)?;
    Ok(AuditResult {
        version_findings: audit_inventory(path, &catalog, diag)?,
        ..AuditResult::default()
    })
}

/// Every workflow whose inputs are present, combined into one result.
pub fn cmd_report(config: &RunConfig, diag: &mut dyn Write) -> Result<AuditResult, ToolError> {
    require(
        config.has_resources() || !config.scan_reports.is_empty() || config.inventory_path.is_some(),
        "report needs manifest paths, --endpoint, --scan-report or --inventory",
    )?;
    let catalog = load_catalogs(&config.catalogs)?;
    selected_frameworks(&catalog, &config.frameworks)?;
    let mut result = AuditResult::default();

    let mut scan = None;
    if config.has_resources() {
        let s = run_scan(config, &catalog, diag)?;
        result.framework_scores = score_frameworks(config, &catalog, &s)?;
        scan = Some(s);
    }
    let records = load_scan_reports(&config.scan_reports, diag)?;
    let vuln_summaries = aggregate_by_container(&records, &BTreeMap::new());
    result.totals = occurrence_and_unique_totals(&records);
    if let Some(path) = &config.inventory_path {
        result.version_findings = audit_inventory(path, &catalog, diag)?;
    }

    result.summaries = match scan {
        Some(s) => {
            let mut merged = merge_summaries(&vuln_summaries, &s.summaries);
            attach_manifest_images(&mut merged, &container_images(&s.resources));
            result.findings = s.findings;
            merged
        }
        None => vuln_summaries,
    };
    Ok(result)
}
