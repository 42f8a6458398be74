//! Framework compliance scoring.
//!
//! A control's score is the fraction of applicable resources that pass it;
//! a framework's percentage is the mean of its applicable control scores,
//! rounded half-up to an integer. Controls without applicable resources are
//! reported as not applicable and left out of the mean.

use std::collections::{HashMap, HashSet};

use num::{BigInt, BigRational, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::manifest::{ResourceDocument, ResourceRef};
use crate::rules::{Finding, RuleCatalog};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Framework {
    pub id: String,
    pub title: String,
    pub controls: Vec<Control>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Control {
    pub framework_id: String,
    pub control_id: String,
    pub title: String,
    /// Rules that evidence this control. Empty means not automatable.
    pub rule_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlResult {
    pub framework_id: String,
    pub control_id: String,
    pub applicable_resources: usize,
    pub passing_resources: usize,
}

impl ControlResult {
    pub fn is_applicable(&self) -> bool {
        self.applicable_resources > 0
    }

    /// `None` when the control is not applicable.
    pub fn score(&self) -> Option<f64> {
        self.is_applicable()
            .then(|| self.passing_resources as f64 / self.applicable_resources as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameworkScore {
    pub framework_id: String,
    /// `None` when no control was applicable.
    pub percent: Option<u8>,
    pub evaluated_controls: usize,
    pub not_applicable_controls: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ComplianceError {
    #[error("control {framework}/{control} references unknown rule `{rule}`")]
    UnknownRuleId {
        framework: String,
        control: String,
        rule: String,
    },
    #[error("results for framework `{framework}` are incomplete: {message}")]
    IncompleteResults { framework: String, message: String },
    #[error("unknown framework `{0}`")]
    UnknownFramework(String),
}

/// Index of (rule id, resource) pairs that produced a finding.
pub struct FindingIndex<'a> {
    hits: HashMap<&'a str, HashSet<&'a ResourceRef>>,
}

impl<'a> FindingIndex<'a> {
    pub fn new(findings: &'a [Finding]) -> Self {
        let mut hits: HashMap<&str, HashSet<&ResourceRef>> = HashMap::new();
        for f in findings {
            hits.entry(f.rule_id.as_str()).or_default().insert(&f.resource);
        }
        FindingIndex { hits }
    }

    fn fired(&self, rule_id: &str, resource: &ResourceRef) -> bool {
        self.hits.get(rule_id).is_some_and(|set| set.contains(resource))
    }
}

pub fn control_compliance(
    control: &Control,
    catalog: &RuleCatalog,
    findings: &[Finding],
    resources: &[ResourceDocument],
) -> Result<ControlResult, ComplianceError> {
    control_compliance_indexed(control, catalog, &FindingIndex::new(findings), resources)
}

fn control_compliance_indexed(
    control: &Control,
    catalog: &RuleCatalog,
    index: &FindingIndex<'_>,
    resources: &[ResourceDocument],
) -> Result<ControlResult, ComplianceError> {
    let rules = control
        .rule_ids
        .iter()
        .map(|id| {
            catalog.get(id).ok_or_else(|| ComplianceError::UnknownRuleId {
                framework: control.framework_id.clone(),
                control: control.control_id.clone(),
                rule: id.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut applicable = 0;
    let mut passing = 0;
    for doc in resources {
        let relevant: Vec<_> = rules.iter().filter(|r| r.applies_to_kind(&doc.kind)).collect();
        if relevant.is_empty() {
            continue;
        }
        applicable += 1;
        let rref = doc.resource_ref();
        if !relevant.iter().any(|r| index.fired(&r.id, &rref)) {
            passing += 1;
        }
    }
    Ok(ControlResult {
        framework_id: control.framework_id.clone(),
        control_id: control.control_id.clone(),
        applicable_resources: applicable,
        passing_resources: passing,
    })
}

/// Round a non-negative rational half-up to the nearest integer.
fn round_half_up(value: &BigRational) -> BigInt {
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    (value + half).floor().to_integer()
}

pub fn framework_score(framework: &Framework, results: &[ControlResult]) -> Result<FrameworkScore, ComplianceError> {
    let incomplete = |message: String| ComplianceError::IncompleteResults {
        framework: framework.id.clone(),
        message,
    };
    let mut by_control: HashMap<&str, &ControlResult> = HashMap::new();
    for r in results {
        if r.framework_id != framework.id {
            return Err(incomplete(format!("result for foreign framework `{}`", r.framework_id)));
        }
        if by_control.insert(r.control_id.as_str(), r).is_some() {
            return Err(incomplete(format!("control `{}` scored more than once", r.control_id)));
        }
    }
    for c in &framework.controls {
        if !by_control.contains_key(c.control_id.as_str()) {
            return Err(incomplete(format!("control `{}` has no result", c.control_id)));
        }
    }
    if by_control.len() != framework.controls.len() {
        return Err(incomplete("results reference controls outside the framework".into()));
    }

    let mut sum = BigRational::zero();
    let mut evaluated = 0usize;
    for r in results.iter().filter(|r| r.is_applicable()) {
        sum += BigRational::new(BigInt::from(r.passing_resources), BigInt::from(r.applicable_resources));
        evaluated += 1;
    }
    let percent = (evaluated > 0).then(|| {
        let mean_percent = sum * BigInt::from(100) / BigInt::from(evaluated);
        round_half_up(&mean_percent).to_u8().expect("percent lies in 0..=100")
    });
    Ok(FrameworkScore {
        framework_id: framework.id.clone(),
        percent,
        evaluated_controls: evaluated,
        not_applicable_controls: framework.controls.len() - evaluated,
    })
}

/// Per-control results together with the framework score.
#[derive(Debug, Clone)]
pub struct FrameworkEvaluation {
    pub score: FrameworkScore,
    pub controls: Vec<ControlResult>,
}

pub fn evaluate_framework(
    framework: &Framework,
    catalog: &RuleCatalog,
    findings: &[Finding],
    resources: &[ResourceDocument],
) -> Result<FrameworkEvaluation, ComplianceError> {
    let index = FindingIndex::new(findings);
    let controls = framework
        .controls
        .iter()
        .map(|c| control_compliance_indexed(c, catalog, &index, resources))
        .collect::<Result<Vec<_>, _>>()?;
    let score = framework_score(framework, &controls)?;
    Ok(FrameworkEvaluation { score, controls })
}

pub use crate::catalog::bundled_frameworks;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin_catalog;
    use crate::manifest::parse_manifest_stream;
    use crate::rules::evaluate;

    fn result(control: &str, applicable: usize, passing: usize) -> ControlResult {
        ControlResult {
            framework_id: "f".into(),
            control_id: control.into(),
            applicable_resources: applicable,
            passing_resources: passing,
        }
    }

    fn framework(ids: &[&str]) -> Framework {
        Framework {
            id: "f".into(),
            title: "F".into(),
            controls: ids
                .iter()
                .map(|id| Control {
                    framework_id: "f".into(),
                    control_id: id.to_string(),
                    title: String::new(),
                    rule_ids: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn four_pods_one_failing() {
        let pod = |name: &str, limits: bool| {
            let res = if limits { "resources: {limits: {cpu: 1, memory: 1Gi}}" } else { "{}" };
            let res = if limits { format!("\n      {res}") } else { String::new() };
            format!("kind: Pod\nmetadata: {{name: {name}, namespace: n}}\nspec:\n  containers:\n    - name: c{res}\n")
        };
        let text = [pod("a", true), pod("b", true), pod("c", false), pod("d", true)].join("---\n");
        let docs = parse_manifest_stream(text.as_bytes(), "t.yaml").unwrap();
        let catalog = RuleCatalog::new(builtin_catalog(), &bundled_frameworks()).unwrap();
        let findings = evaluate(&catalog, &docs);
        let control = Control {
            framework_id: "f".into(),
            control_id: "limits".into(),
            title: String::new(),
            rule_ids: vec!["MISC-LIMITS".into()],
        };
        let r = control_compliance(&control, &catalog, &findings, &docs).unwrap();
        assert_eq!((r.applicable_resources, r.passing_resources), (4, 3));
        assert_eq!(r.score(), Some(0.75));

        let empty = Control { rule_ids: vec![], ..control.clone() };
        let r = control_compliance(&empty, &catalog, &findings, &docs).unwrap();
        assert_eq!(r.score(), None);

        let unknown = Control { rule_ids: vec!["NOPE".into()], ..control };
        assert!(matches!(
            control_compliance(&unknown, &catalog, &findings, &docs),
            Err(ComplianceError::UnknownRuleId { .. })
        ));
    }

    #[test]
    fn mean_excludes_not_applicable() {
        let fw = framework(&["a", "b", "c"]);
        let s = framework_score(&fw, &[result("a", 2, 1), result("b", 3, 3), result("c", 0, 0)]).unwrap();
        assert_eq!(s.percent, Some(75));
        assert_eq!((s.evaluated_controls, s.not_applicable_controls), (2, 1));
    }

    #[test]
    fn all_passing_is_hundred_and_none_applicable_is_none() {
        let fw = framework(&["a", "b"]);
        assert_eq!(framework_score(&fw, &[result("a", 5, 5), result("b", 1, 1)]).unwrap().percent, Some(100));
        assert_eq!(framework_score(&fw, &[result("a", 0, 0), result("b", 0, 0)]).unwrap().percent, None);
    }

    #[test]
    fn rounding_is_half_up_and_exact() {
        let fw = framework(&["a", "b"]);
        // mean of 1/8 and 0 is 6.25% -> 6; mean of 1/4 and 0 is 12.5% -> 13
        assert_eq!(framework_score(&fw, &[result("a", 8, 1), result("b", 1, 0)]).unwrap().percent, Some(6));
        assert_eq!(framework_score(&fw, &[result("a", 4, 1), result("b", 1, 0)]).unwrap().percent, Some(13));
        // 0.145 * 100 = 14.5 exactly -> 15, where binary floating point would give 14
        let fw = framework(&["a"]);
        assert_eq!(framework_score(&fw, &[result("a", 200, 29)]).unwrap().percent, Some(15));
    }

    #[test]
    fn incomplete_results_are_rejected() {
        let fw = framework(&["a", "b"]);
        assert!(matches!(framework_score(&fw, &[result("a", 1, 1)]), Err(ComplianceError::IncompleteResults { .. })));
        assert!(matches!(
            framework_score(&fw, &[result("a", 1, 1), result("a", 1, 1), result("b", 1, 1)]),
            Err(ComplianceError::IncompleteResults { .. })
        ));
        assert!(matches!(
            framework_score(&fw, &[result("a", 1, 1), result("b", 1, 1), result("c", 1, 1)]),
            Err(ComplianceError::IncompleteResults { .. })
        ));
    }
}
