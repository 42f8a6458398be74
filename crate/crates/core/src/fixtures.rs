//! Check the bundled fixture corpus against its recorded expectations.
//!
//! `fixtures/expected.yaml` holds every per-container cell, the critical
//! totals, the outdated-component findings and the compliance scores of the
//! hardened and planted manifest sets. [`verify_fixtures`] recomputes all of
//! them and stops at the first cell that differs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::pipeline::{cmd_report, cmd_score, RunConfig, ToolError};
use crate::report::{AuditResult, OCCURRENCES_LABEL, UNIQUE_LABEL};
use crate::severity::{SeverityClass, SeverityHistogram};

pub fn default_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedRow {
    pub container: String,
    pub registry: String,
    pub image_tag: String,
    pub vulns: [u64; 5],
    pub misconfig: [u64; 5],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedTotals {
    pub critical_occurrences: u64,
    pub critical_rce: u64,
    pub critical_actionable: u64,
    pub occurrences: u64,
    pub unique_cves: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedVersion {
    pub component: String,
    pub installed: String,
    pub cve_count: u32,
    pub cvss_min: f64,
    pub cvss_max: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub namespace: String,
    pub containers: Vec<ExpectedRow>,
    pub totals: ExpectedTotals,
    pub published_total: u64,
    pub versions: Vec<ExpectedVersion>,
    pub planted_scores: BTreeMap<String, u8>,
    pub hardened_scores: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexedAsset {
    pub path: String,
    pub provenance: Provenance,
    pub reproduces: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Published,
    Constructed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureIndex {
    pub assets: Vec<IndexedAsset>,
}

/// The first recomputed value that differs from its expectation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureDrift {
    /// Slash-separated cell name, e.g. `ricplt-e2term/vulns/M`.
    pub cell: String,
    pub expected: String,
    pub actual: String,
}

impl fmt::Display for FixtureDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fixture drift at {}: expected {}, got {}", self.cell, self.expected, self.actual)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{0}")]
    Drift(FixtureDrift),
    #[error("{path}: {message}")]
    Load { path: String, message: String },
    #[error(transparent)]
    Pipeline(#[from] ToolError),
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub cells_checked: usize,
    pub occurrences: u64,
    pub unique_cves: u64,
    pub published_total: u64,
    /// The combined result the table cells were checked against.
    pub result: AuditResult,
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "fixtures ok: {} values match", self.cells_checked)?;
        writeln!(f, "{OCCURRENCES_LABEL}: {}", self.occurrences)?;
        writeln!(f, "{UNIQUE_LABEL}: {}", self.unique_cves)?;
        writeln!(
            f,
            "Published cumulative total: {} (differs from the occurrence sum by {}; unresolved)",
            self.published_total,
            self.occurrences.abs_diff(self.published_total)
        )
    }
}

fn load_yaml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, FixtureError> {
    let load = |message: String| FixtureError::Load {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| load(e.to_string()))?;
    serde_yaml::from_str(&text).map_err(|e| load(e.to_string()))
}

struct Checker {
    checked: usize,
}

impl Checker {
    fn eq<T: PartialEq + fmt::Display>(&mut self, cell: impl Into<String>, expected: T, actual: T) -> Result<(), FixtureError> {
        self.checked += 1;
        if expected == actual {
            Ok(())
        } else {
            Err(FixtureError::Drift(FixtureDrift {
                cell: cell.into(),
                expected: expected.to_string(),
                actual: actual.to_string(),
            }))
        }
    }

    fn histogram(&mut self, prefix: &str, expected: [u64; 5], actual: &SeverityHistogram) -> Result<(), FixtureError> {
        for (class, want) in SeverityClass::DESCENDING.into_iter().zip(expected) {
            self.eq(format!("{prefix}/{}", class.letter()), want, actual[class])?;
        }
        Ok(())
    }

    fn scores(&mut self, set: &str, expected: &BTreeMap<String, u8>, result: &AuditResult) -> Result<(), FixtureError> {
        self.eq(format!("{set}/frameworks"), expected.len(), result.framework_scores.len())?;
        for (id, want) in expected {
            let got = result
                .framework_scores
                .iter()
                .find(|s| &s.framework_id == id)
                .and_then(|s| s.percent)
                .map_or_else(|| "n/a".to_string(), |p| p.to_string());
            self.eq(format!("{set}/{id}"), want.to_string(), got)?;
        }
        Ok(())
    }
}

fn scan_report_paths(dir: &Path) -> Result<Vec<PathBuf>, FixtureError> {
    let entries = std::fs::read_dir(dir).map_err(|e| FixtureError::Load {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// The combined fixture run: vulnerable manifests in the expected namespace,
/// every scan report and the outdated inventory.
pub fn fixture_report(root: &Path, expected: &Expectations) -> Result<AuditResult, FixtureError> {
    let config = RunConfig {
        input_paths: vec![root.join("manifests/ric-vulnerable")],
        namespace_filter: Some(expected.namespace.clone()),
        scan_reports: scan_report_paths(&root.join("scan-reports"))?,
        inventory_path: Some(root.join("inventory/osc-ric-dep.yaml")),
        ..RunConfig::default()
    };
    Ok(cmd_report(&config, &mut std::io::sink())?)
}

pub fn load_expectations(root: &Path) -> Result<Expectations, FixtureError> {
    load_yaml(&root.join("expected.yaml"))
}

pub fn verify_fixtures(root: &Path) -> Result<VerificationReport, FixtureError> {
    let expected = load_expectations(root)?;
    let result = fixture_report(root, &expected)?;
    let mut c = Checker { checked: 0 };

    for row in &expected.containers {
        let name = &row.container;
        let Some(s) = result.summaries.iter().find(|s| &s.container == name) else {
            return Err(FixtureError::Drift(FixtureDrift {
                cell: name.clone(),
                expected: "a table row".into(),
                actual: "no row".into(),
            }));
        };
        let (registry, tag) = s
            .image
            .as_ref()
            .map_or(("-".to_string(), "-".to_string()), |i| (i.registry.clone(), i.short_tag()));
        c.eq(format!("{name}/registry"), row.registry.clone(), registry)?;
        c.eq(format!("{name}/image_tag"), row.image_tag.clone(), tag)?;
        c.histogram(&format!("{name}/vulns"), row.vulns, &s.vuln_histogram)?;
        c.histogram(&format!("{name}/misconfig"), row.misconfig, &s.misconfig_histogram)?;
    }
    c.eq("rows", expected.containers.len(), result.summaries.len())?;

    let t = &expected.totals;
    c.eq("totals/critical_occurrences", t.critical_occurrences, result.vuln_histogram()[SeverityClass::Critical])?;
    c.eq("totals/critical_rce", t.critical_rce, result.totals.critical_rce)?;
    c.eq("totals/critical_actionable", t.critical_actionable, result.totals.critical_actionable)?;
    c.eq("totals/occurrences", t.occurrences, result.totals.occurrences)?;
    c.eq("totals/unique_cves", t.unique_cves, result.totals.unique_cves)?;

    c.eq("versions/count", expected.versions.len(), result.version_findings.len())?;
    for want in &expected.versions {
        let cell = format!("versions/{}", want.component);
        let Some(got) = result.version_findings.iter().find(|v| v.component == want.component) else {
            return Err(FixtureError::Drift(FixtureDrift {
                cell,
                expected: "a finding".into(),
                actual: "none".into(),
            }));
        };
        let e = &got.matched_entry;
        c.eq(format!("{cell}/installed"), want.installed.clone(), got.installed.to_string())?;
        c.eq(format!("{cell}/cve_count"), want.cve_count, e.cve_count)?;
        c.eq(format!("{cell}/cvss_min"), format!("{:.1}", want.cvss_min), e.cvss_min.to_string())?;
        c.eq(format!("{cell}/cvss_max"), format!("{:.1}", want.cvss_max), e.cvss_max.to_string())?;
    }

    for (set, scores) in [("planted", &expected.planted_scores), ("ric-hardened", &expected.hardened_scores)] {
        let config = RunConfig {
            input_paths: vec![root.join("manifests").join(set)],
            ..RunConfig::default()
        };
        let scored = cmd_score(&config, &mut std::io::sink())?;
        c.scores(set, scores, &scored)?;
        if set == "ric-hardened" {
            c.eq("ric-hardened/findings", 0, scored.findings.len())?;
        }
    }

    let index: FixtureIndex = load_yaml(&root.join("index.yaml"))?;
    for asset in &index.assets {
        c.eq(format!("index/{}", asset.path), true, root.join(&asset.path).exists())?;
    }
    for report in scan_report_paths(&root.join("scan-reports"))? {
        let rel = format!("scan-reports/{}", report.file_name().unwrap_or_default().to_string_lossy());
        let listed = index.assets.iter().any(|a| a.path == rel);
        c.eq(format!("index/{rel}/listed"), true, listed)?;
    }

    Ok(VerificationReport {
        cells_checked: c.checked,
        occurrences: result.totals.occurrences,
        unique_cves: result.totals.unique_cves,
        published_total: expected.published_total,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_fixtures_verify() {
        let report = verify_fixtures(&default_root()).unwrap();
        assert_eq!(report.occurrences, 888);
        assert_eq!(report.published_total, 792);
        let text = report.to_string();
        assert!(text.contains(OCCURRENCES_LABEL) && text.contains(UNIQUE_LABEL));
    }

    #[test]
    fn missing_root_is_a_load_error() {
        let err = verify_fixtures(Path::new("/nonexistent/fixtures")).unwrap_err();
        assert!(matches!(err, FixtureError::Load { .. }), "{err}");
    }
}
