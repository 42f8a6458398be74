//! Layer a user catalog over the built-in rules: one new rule plus a small
//! framework whose only control is evidenced by it.
//!
//!     cargo run --example custom_rule_catalog

use std::path::PathBuf;

use ocloud_audit::catalog::{builtin_catalog, bundled_frameworks, merge_frameworks, parse_catalog};
use ocloud_audit::compliance::evaluate_framework;
use ocloud_audit::manifest::load_directory;
use ocloud_audit::rules::{evaluate, merge_rules, RuleCatalog};

const USER_CATALOG: &str = r#"
rules:
  - id: SITE-OWNER
    title: Workload has no owning team label
    description: Every workload must name the team that answers for it.
    severity: low
    category: supply-chain
    applies_to: [Deployment, StatefulSet]
    check:
      absent: metadata.labels.team
    control_refs:
      - {framework: site-baseline, control: SITE-1}
    remediation: Add a metadata.labels.team entry.
frameworks:
  - id: site-baseline
    title: Site baseline
    controls:
      - {control_id: SITE-1, title: Workloads have owners, rule_ids: [SITE-OWNER]}
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/manifests/ric-hardened"));
    let user = parse_catalog(USER_CATALOG, "site.yaml")?;
    let frameworks = merge_frameworks(bundled_frameworks(), user.frameworks);
    let catalog = RuleCatalog::new(merge_rules(builtin_catalog(), user.rules), &frameworks)?;

    let resources = load_directory(&dir, None)?.documents;
    let findings = evaluate(&catalog, &resources);
    for f in findings.iter().filter(|f| f.rule_id.starts_with("SITE-")) {
        println!("{} {}", f.rule_id, f.resource);
    }
    let site = frameworks.iter().find(|f| f.id == "site-baseline").expect("merged");
    let score = evaluate_framework(site, &catalog, &findings, &resources)?.score;
    let percent = score.percent.map_or("n/a".to_string(), |p| format!("{p}%"));
    println!("site-baseline: {percent} over {} resources", resources.len());
    Ok(())
}
