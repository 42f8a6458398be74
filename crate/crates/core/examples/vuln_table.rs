//! Aggregate container scan reports into the per-container severity table.
//!
//!     cargo run --example vuln_table -- fixtures/scan-reports/*.json

use std::collections::BTreeMap;
use std::path::PathBuf;

use ocloud_audit::report::{render_table, AuditResult};
use ocloud_audit::vulns::{aggregate_by_container, occurrence_and_unique_totals, parse_scan_report};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut paths: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if paths.is_empty() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/scan-reports");
        for entry in std::fs::read_dir(dir)? {
            paths.push(entry?.path());
        }
        paths.sort();
    }

    let mut records = Vec::new();
    for path in &paths {
        let report = parse_scan_report(&std::fs::read(path)?)?;
        for r in &report.rejected {
            eprintln!("{}: entry {} ({}): {}", path.display(), r.index, r.cve_id, r.reason);
        }
        records.extend(report.records);
    }

    let result = AuditResult {
        summaries: aggregate_by_container(&records, &BTreeMap::new()),
        totals: occurrence_and_unique_totals(&records),
        ..AuditResult::default()
    };
    print!("{}", render_table(&result));
    Ok(())
}
