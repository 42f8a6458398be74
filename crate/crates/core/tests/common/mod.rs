//! Shared fixture paths and proptest strategies for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use ocloud_audit::compliance::FrameworkScore;
use ocloud_audit::manifest::ResourceRef;
use ocloud_audit::report::AuditResult;
use ocloud_audit::rules::Finding;
use ocloud_audit::severity::{SeverityClass, SeverityHistogram};
use ocloud_audit::versions::{audit_components, bundled_advisories, InventoryItem, VersionFinding};
use ocloud_audit::vulns::{ContainerScanSummary, ImageRef, VulnTotals};
use proptest::prelude::*;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn scan_report_paths() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixtures().join("scan-reports"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths
}

pub fn severity() -> impl Strategy<Value = SeverityClass> {
    prop::sample::select(SeverityClass::DESCENDING.to_vec())
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9-]{0,11}"
}

pub fn histogram() -> impl Strategy<Value = SeverityHistogram> {
    prop::array::uniform5(0u64..500).prop_map(SeverityHistogram::from_chmln)
}

fn image() -> impl Strategy<Value = Option<ImageRef>> {
    prop::option::of((ident(), ident(), "[0-9]\\.[0-9]{1,2}\\.[0-9]").prop_map(|(r, repo, tag)| ImageRef::new(r, repo, tag)))
}

fn summary() -> impl Strategy<Value = ContainerScanSummary> {
    (ident(), image(), histogram(), histogram()).prop_map(|(container, image, vuln_histogram, misconfig_histogram)| {
        ContainerScanSummary {
            container,
            image,
            vuln_histogram,
            misconfig_histogram,
        }
    })
}

fn finding() -> impl Strategy<Value = Finding> {
    (
        "MISC-[A-Z]{2,8}",
        prop::option::of(ident()),
        "[A-Z][a-zA-Z]{2,12}",
        ident(),
        severity(),
        ".{0,30}",
    )
        .prop_map(|(rule_id, namespace, kind, name, severity, message)| Finding {
            rule_id,
            resource: ResourceRef { namespace, kind, name },
            severity,
            remediation: format!("fix {message}"),
            message,
        })
}

fn framework_score() -> impl Strategy<Value = FrameworkScore> {
    (ident(), prop::option::of(0u8..=100), 0usize..40, 0usize..40).prop_map(
        |(framework_id, percent, evaluated_controls, not_applicable_controls)| FrameworkScore {
            framework_id,
            percent,
            evaluated_controls,
            not_applicable_controls,
        },
    )
}

fn version_findings() -> impl Strategy<Value = Vec<VersionFinding>> {
    let inventory = [
        ("kubernetes", "1.16.0"),
        ("cni", "0.7.5"),
        ("docker", "20.10.21"),
        ("helm", "v3.5.4"),
    ];
    prop::sample::subsequence(inventory.to_vec(), 0..=4).prop_map(|items| {
        let items: Vec<InventoryItem> = items.into_iter().map(|(c, v)| InventoryItem::new(c, v)).collect();
        audit_components(&items, &bundled_advisories()).findings
    })
}

/// Arbitrary (not necessarily internally consistent) audit results.
pub fn audit_result() -> impl Strategy<Value = AuditResult> {
    (
        prop::collection::vec(summary(), 0..6),
        prop::collection::vec(finding(), 0..8),
        prop::collection::vec(framework_score(), 0..4),
        version_findings(),
        prop::array::uniform4(0u64..2000),
        prop::option::of(Just("2024-06-11T08:30:00Z".to_string())),
    )
        .prop_map(|(summaries, findings, framework_scores, version_findings, t, generated_at)| AuditResult {
            generated_at,
            summaries,
            findings,
            framework_scores,
            version_findings,
            totals: VulnTotals {
                occurrences: t[0],
                unique_cves: t[1],
                critical_rce: t[2],
                critical_actionable: t[3],
            },
            ..AuditResult::default()
        })
}

/// One request seen by [`MockServer`].
#[derive(Debug, Clone)]
pub struct Seen {
    pub method: String,
    pub target: String,
    pub authorization: Option<String>,
}

/// Minimal HTTP/1.1 server answering every request through `route`
/// (method, target) -> (status, body) and logging what it saw.
pub struct MockServer {
    pub base_url: String,
    log: std::sync::Arc<std::sync::Mutex<Vec<Seen>>>,
}

impl MockServer {
    pub fn start<F>(route: F) -> Self
    where
        F: Fn(&str, &str) -> (u16, String) + Send + Sync + 'static,
    {
        use std::io::{BufRead, BufReader, Write};
        use std::sync::{Arc, Mutex};

        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let log: Arc<Mutex<Vec<Seen>>> = Arc::default();
        let route = Arc::new(route);
        let server_log = log.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let log = server_log.clone();
                let route = route.clone();
                std::thread::spawn(move || {
                    let mut reader = BufReader::new(&stream);
                    let mut line = String::new();
                    if reader.read_line(&mut line).is_err() {
                        return;
                    }
                    let mut parts = line.split_whitespace();
                    let method = parts.next().unwrap_or_default().to_string();
                    let target = parts.next().unwrap_or_default().to_string();
                    let mut authorization = None;
                    loop {
                        let mut header = String::new();
                        if reader.read_line(&mut header).unwrap_or(0) <= 2 {
                            break;
                        }
                        if let Some((name, value)) = header.split_once(':') {
                            if name.eq_ignore_ascii_case("authorization") {
                                authorization = Some(value.trim().to_string());
                            }
                        }
                    }
                    let (status, body) = route(&method, &target);
                    log.lock().unwrap().push(Seen {
                        method,
                        target,
                        authorization,
                    });
                    let _ = write!(
                        &stream,
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    );
                });
            }
        });
        MockServer { base_url, log }
    }

    pub fn requests(&self) -> Vec<Seen> {
        self.log.lock().unwrap().clone()
    }
}

pub fn list_body(items: &[serde_json::Value], continue_token: Option<&str>) -> String {
    let mut metadata = serde_json::json!({});
    if let Some(t) = continue_token {
        metadata["continue"] = t.into();
    }
    serde_json::json!({"kind": "List", "apiVersion": "v1", "metadata": metadata, "items": items}).to_string()
}

pub fn pod(name: &str, ns: &str) -> serde_json::Value {
    serde_json::json!({
        "metadata": {"name": name, "namespace": ns, "labels": {"app": name}},
        "spec": {"containers": [{"name": "main", "image": "nexus3.o-ran-sc.org:10002/o-ran-sc/ric-plt-e2:6.0.3"}]}
    })
}
