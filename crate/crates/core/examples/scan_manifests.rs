//! Scan a manifest directory with the built-in rules and print the
//! misconfiguration histogram of every container.
//!
//!     cargo run --example scan_manifests -- fixtures/manifests/ric-vulnerable ricplt

use std::path::PathBuf;

use ocloud_audit::compliance::bundled_frameworks;
use ocloud_audit::manifest::{load_directory, ResourceFilter};
use ocloud_audit::rules::{builtin_catalog, evaluate, RuleCatalog};
use ocloud_audit::vulns::misconfig_by_container;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/manifests/ric-vulnerable"));
    let filter = args.next().map(ResourceFilter::namespace);

    let loaded = load_directory(&dir, filter.as_ref())?;
    for err in &loaded.errors {
        eprintln!("skipped: {err}");
    }
    let catalog = RuleCatalog::new(builtin_catalog(), &bundled_frameworks())?;
    let findings = evaluate(&catalog, &loaded.documents);

    println!("{} resources, {} findings", loaded.documents.len(), findings.len());
    for f in &findings {
        println!("  {:<10} {:<20} {}", f.severity, f.rule_id, f.resource);
    }
    println!();
    for (container, hist) in misconfig_by_container(&findings, &loaded.documents) {
        println!("{container:<24} {hist}");
    }
    Ok(())
}
