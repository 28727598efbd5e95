//! Verification suites, reports and the command-line front end.

pub mod cli;
pub mod corpus;
mod suites;

pub use suites::{run_suite, Subject, Suite, SuiteConfig};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::estimators::{Budgets, EstimatorError};
use crate::permutativity::AnalysisError;
use crate::rules::{rule_value, RuleError, RuleSpec};

pub const SCHEMA: &str = "erlab/1";

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("check {0} has no anchor or provenance")]
    UntaggedCheck(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Recorded for information; never fails a report.
    Diagnostic,
    /// Not computed: the case is out of budget or does not apply.
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProvenanceKind {
    /// A closed-form value known for this rule family.
    ClosedForm,
    /// A general upper or lower bound.
    Bound,
    /// Another computation, independent of the one being checked.
    Oracle,
    /// An identity that holds by construction.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub kind: ProvenanceKind,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub id: String,
    /// The statement the check instantiates.
    pub anchor: String,
    pub provenance: Provenance,
    pub computed: Value,
    pub expected: Option<Value>,
    pub relation: Option<String>,
    pub tolerance: Option<f64>,
    pub status: Status,
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn new(id: impl Into<String>, anchor: &str, kind: ProvenanceKind, source: &str) -> Self {
        CheckRecord {
            id: id.into(),
            anchor: anchor.to_string(),
            provenance: Provenance {
                kind,
                source: source.to_string(),
            },
            computed: Value::Null,
            expected: None,
            relation: None,
            tolerance: None,
            status: Status::Diagnostic,
            note: None,
        }
    }

    pub fn computed(mut self, v: Value) -> Self {
        self.computed = v;
        self
    }

    pub fn expected(mut self, relation: &str, v: Value) -> Self {
        self.relation = Some(relation.to_string());
        self.expected = Some(v);
        self
    }

    pub fn tolerance(mut self, t: f64) -> Self {
        self.tolerance = Some(t);
        self
    }

    pub fn passes(mut self, ok: bool) -> Self {
        self.status = if ok { Status::Pass } else { Status::Fail };
        self
    }

    pub fn diagnostic(mut self) -> Self {
        self.status = Status::Diagnostic;
        self
    }

    pub fn skipped(mut self, why: impl Into<String>) -> Self {
        self.status = Status::Skipped;
        self.note = Some(why.into());
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleDescriptor {
    pub name: String,
    pub dimension: u8,
    pub q: u32,
    pub r: u32,
    pub rule: Value,
}

impl RuleDescriptor {
    pub fn new(name: impl Into<String>, spec: &RuleSpec) -> Self {
        RuleDescriptor {
            name: name.into(),
            dimension: match spec {
                RuleSpec::TwoD(_) => 2,
                RuleSpec::OneD(_) => 1,
            },
            q: spec.q(),
            r: spec.r(),
            rule: rule_value(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub seed: u64,
    pub samples: u64,
    pub budgets: Budgets,
    pub engine: String,
}

impl Environment {
    pub fn new(config: &SuiteConfig) -> Self {
        Environment {
            seed: config.seed,
            samples: config.samples,
            budgets: config.budgets,
            engine: format!("erlab {}", env!("CARGO_PKG_VERSION")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub diagnostics: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub schema: &'static str,
    pub suite: String,
    pub rule: RuleDescriptor,
    pub environment: Environment,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
}

impl VerificationReport {
    /// Orders checks by id and rejects records without an anchor or a
    /// provenance source.
    pub fn assemble(
        suite: &str,
        rule: RuleDescriptor,
        environment: Environment,
        mut checks: Vec<CheckRecord>,
    ) -> Result<Self, LabError> {
        if let Some(bad) = checks
            .iter()
            .find(|c| c.anchor.trim().is_empty() || c.provenance.source.trim().is_empty())
        {
            return Err(LabError::UntaggedCheck(bad.id.clone()));
        }
        checks.sort_by(|a, b| a.id.cmp(&b.id));
        let mut summary = Summary::default();
        for c in &checks {
            match c.status {
                Status::Pass => summary.passed += 1,
                Status::Fail => summary.failed += 1,
                Status::Diagnostic => summary.diagnostics += 1,
                Status::Skipped => summary.skipped += 1,
            }
        }
        Ok(VerificationReport {
            schema: SCHEMA,
            suite: suite.to_string(),
            rule,
            environment,
            checks,
            summary,
        })
    }

    pub fn failed(&self) -> bool {
        self.summary.failed > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::builtin;

    fn env() -> Environment {
        Environment::new(&SuiteConfig::default())
    }

    #[test]
    fn untagged_records_are_rejected() {
        let rule = RuleDescriptor::new("f1", &RuleSpec::TwoD(builtin("F1", 1).unwrap()));
        let bad = CheckRecord::new("x", "", ProvenanceKind::Oracle, "enumeration");
        assert!(matches!(
            VerificationReport::assemble("s", rule.clone(), env(), vec![bad]),
            Err(LabError::UntaggedCheck(_))
        ));
        let bad = CheckRecord::new("x", "anchor", ProvenanceKind::Oracle, " ");
        assert!(VerificationReport::assemble("s", rule, env(), vec![bad]).is_err());
    }

    #[test]
    fn checks_are_sorted_and_counted() {
        let rule = RuleDescriptor::new("f1", &RuleSpec::TwoD(builtin("F1", 1).unwrap()));
        let checks = vec![
            CheckRecord::new("b", "a", ProvenanceKind::Bound, "s").passes(false),
            CheckRecord::new("a", "a", ProvenanceKind::Bound, "s").passes(true),
            CheckRecord::new("c", "a", ProvenanceKind::Bound, "s").skipped("budget"),
        ];
        let report = VerificationReport::assemble("s", rule, env(), checks).unwrap();
        assert_eq!(
            report
                .checks
                .iter()
                .map(|c| c.id.as_str())
                .collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
        assert_eq!(
            report.summary,
            Summary {
                passed: 1,
                failed: 1,
                diagnostics: 0,
                skipped: 1
            }
        );
        assert!(report.failed());
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["schema"], "erlab/1");
        assert_eq!(json["checks"][2]["status"], "skipped");
    }
}
