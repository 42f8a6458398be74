//! Report rendering: a fixed-width text table, a canonical JSON document
//! and the CI exit code.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::compliance::FrameworkScore;
use crate::rules::Finding;
use crate::severity::{SeverityClass, SeverityHistogram};
use crate::versions::VersionFinding;
use crate::vulns::{ContainerScanSummary, VulnTotals};

/// Version of the JSON output layout. Bumped on any incompatible change.
pub const SCHEMA_VERSION: u32 = 1;

/// The JSON schema describing [`render_json`] output.
pub const OUTPUT_SCHEMA: &str = include_str!("../schema/audit-report.schema.json");

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_TOOL_ERROR: i32 = 2;

pub const OCCURRENCES_LABEL: &str = "Vulnerability occurrences (sum of per-container counts)";
pub const UNIQUE_LABEL: &str = "Unique CVE ids (deduplicated across containers)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditResult {
    pub schema_version: u32,
    pub tool_version: String,
    /// RFC 3339 timestamp. Not part of canonical comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub summaries: Vec<ContainerScanSummary>,
    pub findings: Vec<Finding>,
    pub framework_scores: Vec<FrameworkScore>,
    pub version_findings: Vec<VersionFinding>,
    pub totals: VulnTotals,
}

impl Default for AuditResult {
    fn default() -> Self {
        AuditResult {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            generated_at: None,
            summaries: Vec::new(),
            findings: Vec::new(),
            framework_scores: Vec::new(),
            version_findings: Vec::new(),
            totals: VulnTotals::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InconsistentResult {
    #[error("vulnerability histograms sum to {histograms} but totals report {occurrences} occurrences")]
    Occurrences { histograms: u64, occurrences: u64 },
    #[error("framework `{0}` is scored more than once")]
    DuplicateFramework(String),
    #[error("unique CVE count {unique} exceeds {occurrences} occurrences")]
    UniqueExceedsOccurrences { unique: u64, occurrences: u64 },
}

impl AuditResult {
    pub fn vuln_histogram(&self) -> SeverityHistogram {
        self.summaries.iter().map(|s| s.vuln_histogram).fold(SeverityHistogram::new(), |a, b| a + b)
    }

    pub fn misconfig_histogram(&self) -> SeverityHistogram {
        self.summaries.iter().map(|s| s.misconfig_histogram).fold(SeverityHistogram::new(), |a, b| a + b)
    }

    pub fn validate(&self) -> Result<(), InconsistentResult> {
        let histograms = self.vuln_histogram().total();
        if histograms != self.totals.occurrences {
            return Err(InconsistentResult::Occurrences {
                histograms,
                occurrences: self.totals.occurrences,
            });
        }
        if self.totals.unique_cves > self.totals.occurrences {
            return Err(InconsistentResult::UniqueExceedsOccurrences {
                unique: self.totals.unique_cves,
                occurrences: self.totals.occurrences,
            });
        }
        let mut seen = HashSet::new();
        for s in &self.framework_scores {
            if !seen.insert(s.framework_id.as_str()) {
                return Err(InconsistentResult::DuplicateFramework(s.framework_id.clone()));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.summaries.is_empty()
            && self.findings.is_empty()
            && self.framework_scores.is_empty()
            && self.version_findings.is_empty()
    }
}

fn histogram_cells(h: &SeverityHistogram) -> String {
    h.chmln().iter().map(|n| format!("{n:>4}")).collect()
}

/// Fixed-width ASCII table, one row per container, followed by totals and
/// framework scores.
pub fn render_table(result: &AuditResult) -> String {
    let headers = ["Container Name", "Registry", "Image Tag"];
    let rows: Vec<[String; 3]> = result
        .summaries
        .iter()
        .map(|s| {
            let (registry, tag) = s
                .image
                .as_ref()
                .map_or(("-".to_string(), "-".to_string()), |i| (i.registry.clone(), i.short_tag()));
            [s.container.clone(), registry, tag]
        })
        .collect();
    let mut widths = headers.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let group_width = 4 * 5;
    let rule = {
        let mut line = String::from("+");
        for w in widths {
            line.push_str(&"-".repeat(w + 2));
            line.push('+');
        }
        for _ in 0..2 {
            line.push_str(&"-".repeat(group_width + 1));
            line.push('+');
        }
        line
    };
    let letters: String = SeverityClass::DESCENDING.iter().map(|c| format!("{:>4}", c.letter())).collect();

    let mut out = String::new();
    out.push_str(&rule);
    out.push('\n');
    let _ = writeln!(
        out,
        "| {:w0$} | {:w1$} | {:w2$} |{:^g$} |{:^g$} |",
        "",
        "",
        "",
        "Vulnerabilities",
        "Misconfigurations",
        w0 = widths[0],
        w1 = widths[1],
        w2 = widths[2],
        g = group_width
    );
    let _ = writeln!(
        out,
        "| {:w0$} | {:w1$} | {:w2$} |{letters} |{letters} |",
        headers[0],
        headers[1],
        headers[2],
        w0 = widths[0],
        w1 = widths[1],
        w2 = widths[2],
    );
    out.push_str(&rule);
    out.push('\n');
    for (row, s) in rows.iter().zip(&result.summaries) {
        let _ = writeln!(
            out,
            "| {:w0$} | {:w1$} | {:w2$} |{} |{} |",
            row[0],
            row[1],
            row[2],
            histogram_cells(&s.vuln_histogram),
            histogram_cells(&s.misconfig_histogram),
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
        );
    }
    if !rows.is_empty() {
        out.push_str(&rule);
        out.push('\n');
    }

    if result.is_empty() {
        out.push_str("no findings\n");
        return out;
    }
    let t = &result.totals;
    let _ = writeln!(out, "{OCCURRENCES_LABEL}: {}", t.occurrences);
    let _ = writeln!(out, "{UNIQUE_LABEL}: {}", t.unique_cves);
    let _ = writeln!(out, "Critical vulnerability occurrences: {}", result.vuln_histogram()[SeverityClass::Critical]);
    let _ = writeln!(out, "Distinct critical CVEs enabling remote code execution: {}", t.critical_rce);
    let _ = writeln!(out, "Distinct critical CVEs with a published fix: {}", t.critical_actionable);
    let _ = writeln!(out, "Misconfiguration findings: {}", result.findings.len());
    for s in &result.framework_scores {
        let percent = s.percent.map_or_else(|| "n/a".to_string(), |p| format!("{p}%"));
        let _ = writeln!(
            out,
            "Compliance {}: {percent} ({} controls evaluated, {} not applicable)",
            s.framework_id, s.evaluated_controls, s.not_applicable_controls
        );
    }
    out
}

/// Findings grouped by severity with their remediation.
pub fn render_remediation(result: &AuditResult) -> String {
    let mut out = String::new();
    if result.findings.is_empty() {
        return out;
    }
    out.push_str("Misconfiguration findings\n");
    for class in SeverityClass::DESCENDING {
        let group: Vec<&Finding> = result.findings.iter().filter(|f| f.severity == class).collect();
        if group.is_empty() {
            continue;
        }
        let _ = writeln!(out, "  [{}] {}", class.letter(), class);
        let mut last_rule = "";
        for f in group {
            if f.rule_id != last_rule {
                let _ = writeln!(out, "    {} {}", f.rule_id, f.message);
                let _ = writeln!(out, "      fix: {}", f.remediation);
                last_rule = &f.rule_id;
            }
            let _ = writeln!(out, "      - {}", f.resource);
        }
    }
    out
}

pub fn render_versions(result: &AuditResult) -> String {
    let mut out = String::new();
    if result.version_findings.is_empty() {
        return out;
    }
    out.push_str("Outdated components\n");
    for v in &result.version_findings {
        let e = &v.matched_entry;
        let _ = writeln!(
            out,
            "  [{}] {} {}: {} CVEs, CVSS {}-{} ({})",
            v.severity.letter(),
            v.component,
            v.installed,
            e.cve_count,
            e.cvss_min,
            e.cvss_max,
            e.vulnerability_classes.join(", ")
        );
        if let Some(min) = &e.recommended_min_version {
            let _ = writeln!(out, "      upgrade to {min} or later");
        }
    }
    out
}

/// Table, remediation listing and version section.
pub fn render_text(result: &AuditResult) -> String {
    let mut out = render_table(result);
    for section in [render_remediation(result), render_versions(result)] {
        if !section.is_empty() {
            out.push('\n');
            out.push_str(&section);
        }
    }
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => {
                let _ = write!(out, "{u}");
            }
            (None, Some(i), _) => {
                let _ = write!(out, "{i}");
            }
            // the only non-integers in a report are CVSS scores (one decimal)
            (None, None, Some(f)) => {
                let _ = write!(out, "{f:.1}");
            }
            _ => unreachable!("serde_json numbers are u64, i64 or f64"),
        },
        other => out.push_str(&other.to_string()),
    }
}

/// Canonical JSON: keys sorted, no insignificant whitespace, scores with one
/// decimal. Equal results render to identical bytes.
pub fn render_json(result: &AuditResult) -> String {
    let value = serde_json::to_value(result).expect("audit results always serialize");
    let mut out = String::new();
    write_canonical(&value, &mut out);
    out
}

/// The canonical rendering with `generated_at` removed, for byte comparison.
pub fn canonical_payload(result: &AuditResult) -> String {
    render_json(&AuditResult {
        generated_at: None,
        ..result.clone()
    })
}

pub fn parse_json(text: &str) -> Result<AuditResult, serde_json::Error> {
    serde_json::from_str(text)
}

/// 1 when any misconfiguration finding, vulnerability or outdated component
/// is at or above `fail_on`, else 0. Tool errors (2) are the caller's.
pub fn exit_code(result: &AuditResult, fail_on: SeverityClass) -> i32 {
    let failing = result.findings.iter().any(|f| f.severity >= fail_on)
        || result.vuln_histogram().at_or_above(fail_on) > 0
        || result.version_findings.iter().any(|v| v.severity >= fail_on);
    if failing {
        EXIT_FINDINGS
    } else {
        EXIT_CLEAN
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::ResourceRef;
    use crate::vulns::ImageRef;

    fn finding(severity: SeverityClass) -> Finding {
        Finding {
            rule_id: "MISC-X".into(),
            resource: "ricplt/Pod/p".parse::<ResourceRef>().unwrap(),
            severity,
            message: "m".into(),
            remediation: "r".into(),
        }
    }

    fn one_row() -> AuditResult {
        AuditResult {
            summaries: vec![ContainerScanSummary {
                container: "ricplt-e2term".into(),
                image: Some(ImageRef::new("nexus3.o-ran-sc.org:10002", "o-ran-sc/ric-plt-e2", "6.0.3")),
                vuln_histogram: SeverityHistogram::from_chmln([0, 0, 30, 31, 13]),
                misconfig_histogram: SeverityHistogram::from_chmln([0, 1, 3, 9, 0]),
            }],
            totals: VulnTotals {
                occurrences: 74,
                unique_cves: 74,
                critical_rce: 0,
                critical_actionable: 0,
            },
            ..Default::default()
        }
    }

    #[test]
    fn exit_code_examples() {
        let empty = AuditResult::default();
        for c in SeverityClass::DESCENDING {
            assert_eq!(exit_code(&empty, c), 0);
        }
        let high = AuditResult {
            findings: vec![finding(SeverityClass::High)],
            ..Default::default()
        };
        assert_eq!(exit_code(&high, SeverityClass::High), 1);
        assert_eq!(exit_code(&high, SeverityClass::Critical), 0);
        assert_eq!(exit_code(&one_row(), SeverityClass::Critical), 0);
        assert_eq!(exit_code(&one_row(), SeverityClass::Medium), 1);
    }

    #[test]
    fn empty_table_says_no_findings() {
        let t = render_table(&AuditResult::default());
        assert!(t.contains("Container Name"));
        assert!(t.trim_end().ends_with("no findings"));
    }

    #[test]
    fn single_row_table() {
        let t = render_table(&one_row());
        let data: Vec<&str> = t.lines().filter(|l| l.starts_with("| ricplt")).collect();
        assert_eq!(data.len(), 1);
        let cells: Vec<u64> = data[0]
            .rsplit('|')
            .skip(1)
            .take(2)
            .flat_map(|g| g.split_whitespace().map(|n| n.parse::<u64>().unwrap()).collect::<Vec<_>>())
            .collect();
        // rsplit walks the misconfig group first
        assert_eq!(cells, [0, 1, 3, 9, 0, 0, 0, 30, 31, 13]);
        assert!(data[0].contains("ric-plt-e2:6.0.3"));
        assert!(t.lines().all(|l| l.is_ascii()));
        assert!(t.contains(OCCURRENCES_LABEL) && t.contains(UNIQUE_LABEL));
    }

    #[test]
    fn json_is_canonical_and_round_trips() {
        let mut r = one_row();
        r.findings.push(finding(SeverityClass::Low));
        let text = render_json(&r);
        assert!(!text.contains('\n'));
        assert_eq!(parse_json(&text).unwrap(), r);
        let keys: Vec<&str> = ["\"findings\"", "\"framework_scores\"", "\"schema_version\"", "\"summaries\""]
            .into_iter()
            .collect();
        let positions: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));

        let stamped = AuditResult {
            generated_at: Some("2024-01-01T00:00:00Z".into()),
            ..r.clone()
        };
        assert_ne!(render_json(&stamped), render_json(&r));
        assert_eq!(canonical_payload(&stamped), canonical_payload(&r));
    }

    #[test]
    fn validate_checks_totals() {
        let mut r = one_row();
        assert!(r.validate().is_ok());
        r.totals.occurrences = 1;
        assert!(matches!(r.validate(), Err(InconsistentResult::Occurrences { .. })));
    }
}
