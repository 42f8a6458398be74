//! Score the bundled frameworks against a manifest directory and show the
//! per-control breakdown.
//!
//!     cargo run --example compliance_score -- fixtures/manifests/planted

use std::path::PathBuf;

use ocloud_audit::compliance::{bundled_frameworks, evaluate_framework};
use ocloud_audit::manifest::load_directory;
use ocloud_audit::rules::{builtin_catalog, evaluate, RuleCatalog};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/manifests/planted"));
    let resources = load_directory(&dir, None)?.documents;
    let frameworks = bundled_frameworks();
    let catalog = RuleCatalog::new(builtin_catalog(), &frameworks)?;
    let findings = evaluate(&catalog, &resources);

    for fw in &frameworks {
        let eval = evaluate_framework(fw, &catalog, &findings, &resources)?;
        let percent = eval.score.percent.map_or("n/a".to_string(), |p| format!("{p}%"));
        println!("{} {}", fw.id, percent);
        for r in &eval.controls {
            let score = r.score().map_or("n/a".to_string(), |s| format!("{s:.3}"));
            println!("  {:<22} {}/{} {score}", r.control_id, r.passing_resources, r.applicable_resources);
        }
    }
    Ok(())
}
