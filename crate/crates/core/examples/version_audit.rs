//! Match a component inventory against the bundled advisory database.
//!
//!     cargo run --example version_audit -- fixtures/inventory/osc-ric-dep.yaml

use std::path::PathBuf;

use ocloud_audit::versions::{audit_components, bundled_advisories, load_inventory, InventoryItem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inventory = match std::env::args().nth(1) {
        Some(path) => load_inventory(&PathBuf::from(path))?,
        None => vec![
            InventoryItem::new("kubernetes", "1.16.0"),
            InventoryItem::new("cni", "0.7.5"),
            InventoryItem::new("docker", "20.10.21"),
            InventoryItem::new("helm", "v3.5.4"),
            InventoryItem::new("kubernetes", "latest"),
        ],
    };
    let audit = audit_components(&inventory, &bundled_advisories());
    for f in &audit.findings {
        let e = &f.matched_entry;
        println!(
            "{:<8} {:<10} {:<9} {:>2} CVEs  CVSS {}..{}",
            f.severity, f.component, f.installed.to_string(), e.cve_count, e.cvss_min, e.cvss_max
        );
    }
    for e in &audit.errors {
        eprintln!("skipped {e}");
    }
    Ok(())
}
