mod common;

use jsonschema::JSONSchema;
use ocloud_audit::fixtures::{default_root, fixture_report, load_expectations};
use ocloud_audit::report::{render_json, AuditResult, OUTPUT_SCHEMA};
use proptest::prelude::*;
use serde_json::Value;

fn schema() -> JSONSchema {
    let schema: Value = serde_json::from_str(OUTPUT_SCHEMA).unwrap();
    JSONSchema::compile(&schema).unwrap()
}

fn violations(schema: &JSONSchema, result: &AuditResult) -> Vec<String> {
    let doc: Value = serde_json::from_str(&render_json(result)).unwrap();
    let found = match schema.validate(&doc) {
        Ok(()) => Vec::new(),
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    found
}

#[test]
fn fixture_report_validates() {
    let root = default_root();
    let mut result = fixture_report(&root, &load_expectations(&root).unwrap()).unwrap();
    result.generated_at = Some("2024-06-11T00:00:00Z".into());
    let schema = schema();
    assert_eq!(violations(&schema, &result), Vec::<String>::new());
    assert!(!result.findings.is_empty() && !result.version_findings.is_empty() && !result.framework_scores.is_empty());
}

#[test]
fn schema_rejects_unknown_fields_and_bad_severity() {
    let schema = schema();
    let mut doc: Value = serde_json::from_str(&render_json(&AuditResult::default())).unwrap();
    assert!(schema.is_valid(&doc));
    doc["extra"] = Value::Bool(true);
    assert!(!schema.is_valid(&doc));
    let mut doc: Value = serde_json::from_str(&render_json(&AuditResult::default())).unwrap();
    doc["schema_version"] = 2.into();
    assert!(!schema.is_valid(&doc));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn random_results_validate(result in common::audit_result()) {
        prop_assert_eq!(violations(&schema(), &result), Vec::<String>::new());
    }
}
