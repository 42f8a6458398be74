//! Run the combined workflow over the fixture corpus, as `ocloud-audit
//! report` does, and print the text report followed by the CI exit code.
//!
//!     cargo run --example full_report

use std::path::PathBuf;

use ocloud_audit::pipeline::{cmd_report, RunConfig};
use ocloud_audit::report::{exit_code, render_text};
use ocloud_audit::severity::SeverityClass;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut scan_reports: Vec<PathBuf> = std::fs::read_dir(root.join("scan-reports"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    scan_reports.sort();

    let config = RunConfig {
        input_paths: vec![root.join("manifests/ric-vulnerable")],
        namespace_filter: Some("ricplt".into()),
        scan_reports,
        inventory_path: Some(root.join("inventory/osc-ric-dep.yaml")),
        ..RunConfig::default()
    };
    let result = cmd_report(&config, &mut std::io::stderr())?;
    print!("{}", render_text(&result));
    for threshold in SeverityClass::DESCENDING {
        println!("fail-on {threshold:<10} -> exit {}", exit_code(&result, threshold));
    }
    Ok(())
}
