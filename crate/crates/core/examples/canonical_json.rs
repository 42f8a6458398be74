//! Render a report as canonical JSON, parse it back and show that the
//! bytes are stable.
//!
//!     cargo run --example canonical_json

use ocloud_audit::report::{canonical_payload, parse_json, render_json, AuditResult};
use ocloud_audit::severity::SeverityHistogram;
use ocloud_audit::vulns::{ContainerScanSummary, ImageRef, VulnTotals};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let result = AuditResult {
        generated_at: Some("2024-06-11T00:00:00Z".into()),
        summaries: vec![ContainerScanSummary {
            container: "ricplt-e2term".into(),
            image: Some(ImageRef::new("nexus3.o-ran-sc.org:10002", "o-ran-sc/ric-plt-e2", "6.0.3")),
            vuln_histogram: SeverityHistogram::from_chmln([0, 0, 30, 31, 13]),
            misconfig_histogram: SeverityHistogram::from_chmln([0, 1, 3, 9, 0]),
        }],
        totals: VulnTotals {
            occurrences: 74,
            unique_cves: 74,
            ..VulnTotals::default()
        },
        ..AuditResult::default()
    };
    let text = render_json(&result);
    println!("{text}");

    let back = parse_json(&text)?;
    assert_eq!(back, result);
    assert_eq!(render_json(&back), text);

    let restamped = AuditResult {
        generated_at: Some("2030-01-01T00:00:00Z".into()),
        ..back
    };
    assert_eq!(canonical_payload(&restamped), canonical_payload(&result));
    println!("round trip ok, {} bytes", text.len());
    Ok(())
}
