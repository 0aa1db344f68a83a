//! Red Team findings, test evidence ingestion and the validation summary.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::actor::AgentRole;
use crate::error::{Error, Result};
use crate::ids::{ChangeRequestId, CycleId, FindingId, RequirementId, RiskId};
use crate::time::Timestamp;
use crate::traceability::{Outcome, TestEvidence};
use crate::workflow::{GateRecord, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Major,
    Minor,
}

impl core::fmt::Display for Severity {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Severity::Major => "MAJOR",
            Severity::Minor => "MINOR",
        })
    }
}

impl core::str::FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MAJOR" | "major" => Ok(Severity::Major),
            "MINOR" | "minor" => Ok(Severity::Minor),
            _ => Err(Error::Parse(format!("unknown severity {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingStatus {
    Open,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub id: FindingId,
    pub severity: Severity,
    pub description: String,
    pub source: AgentRole,
    pub status: FindingStatus,
    pub cycle_id: CycleId,
    pub raised_in_pass: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub resolution_note: Option<String>,
    /// Rework pass that resolved the finding; pass `n` is the rework that
    /// follows verification pass `n`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub resolved_in_pass: Option<u32>,
}

impl Finding {
    pub fn is_open_major(&self) -> bool {
        self.severity == Severity::Major && self.status == FindingStatus::Open
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub total: u32,
    pub passed: u32,
}

/// Appended once per verification pass, when the pass completes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedTeamReport {
    pub cycle_id: CycleId,
    pub pass_index: u32,
    pub findings: Vec<Finding>,
    pub suite_result: SuiteResult,
}

/// Suite totals for one pass: distinct tests, and how many ended Pass.
pub fn suite_result(evidence: &[TestEvidence], cycle: CycleId, pass_index: u32) -> SuiteResult {
    let mut latest: BTreeMap<&str, Outcome> = BTreeMap::new();
    for e in evidence.iter().filter(|e| e.cycle == cycle && e.pass_index == pass_index) {
        latest.insert(&e.test_id, e.outcome);
    }
    SuiteResult {
        total: latest.len() as u32,
        passed: latest.values().filter(|o| **o == Outcome::Pass).count() as u32,
    }
}

/// A test record as read from a report file, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTestRecord {
    pub test_id: String,
    #[serde(default)]
    pub req_ids: Vec<String>,
    pub outcome: Outcome,
    #[serde(default)]
    pub cycle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<Timestamp>,
}

impl RawTestRecord {
    /// Checks the record names a cycle and at least one known requirement.
    pub fn validate(&self, known: impl Fn(RequirementId) -> bool, default_time: Timestamp) -> Result<TestEvidence> {
        let cycle = match self.cycle.as_deref().map(str::trim) {
            None | Some("") => return Err(Error::MissingCycleField(self.test_id.clone())),
            Some(c) => c.parse::<CycleId>()?,
        };
        if self.req_ids.is_empty() {
            return Err(Error::NoRequirementLink(self.test_id.clone()));
        }
        let mut ids = Vec::with_capacity(self.req_ids.len());
        for raw in &self.req_ids {
            let id: RequirementId = raw.trim().parse()?;
            if !known(id) {
                return Err(Error::UnknownRequirement(id));
            }
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        Ok(TestEvidence {
            test_id: self.test_id.clone(),
            requirement_ids: ids,
            outcome: self.outcome,
            cycle,
            timestamp: self.timestamp.unwrap_or(default_time),
            pass_index: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectRate {
    pub major: usize,
    pub minor: usize,
    pub per_requirement: f64,
}

/// Findings raised in pass 0 of `cycle`, per requirement of the cycle.
pub fn first_pass_defects(findings: &[Finding], cycle: CycleId, requirement_count: usize) -> DefectRate {
    let first: Vec<_> = findings.iter().filter(|f| f.cycle_id == cycle && f.raised_in_pass == 0).collect();
    let major = first.iter().filter(|f| f.severity == Severity::Major).count();
    let minor = first.len() - major;
    DefectRate {
        major,
        minor,
        per_requirement: if requirement_count == 0 { 0.0 } else { first.len() as f64 / requirement_count as f64 },
    }
}

/// Requirement-level pass count, computed record-first: evidence is walked
/// newest to oldest and the first record seen for a (requirement, test)
/// pair in the requirement's newest cycle decides that test's outcome.
pub fn requirement_pass_count(requirements: &[RequirementId], evidence: &[TestEvidence], as_of: CycleId) -> usize {
    let mut order: Vec<usize> = (0..evidence.len()).filter(|&i| evidence[i].cycle <= as_of).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&evidence[a], &evidence[b]);
        (y.cycle, y.pass_index, y.timestamp, b).cmp(&(x.cycle, x.pass_index, x.timestamp, a))
    });

    let wanted: BTreeSet<RequirementId> = requirements.iter().copied().collect();
    let mut standing_cycle: BTreeMap<RequirementId, CycleId> = BTreeMap::new();
    let mut decided: BTreeSet<(RequirementId, &str)> = BTreeSet::new();
    let mut failed: BTreeSet<RequirementId> = BTreeSet::new();
    for i in order {
        let e = &evidence[i];
        for id in e.requirement_ids.iter().filter(|id| wanted.contains(id)) {
            let cycle = *standing_cycle.entry(*id).or_insert(e.cycle);
            if e.cycle != cycle || !decided.insert((*id, e.test_id.as_str())) {
                continue;
            }
            if e.outcome == Outcome::Fail {
                failed.insert(*id);
            }
        }
    }
    standing_cycle.keys().filter(|id| !failed.contains(id)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskSeverity {
    Low,
    Medium,
    High,
}

impl core::str::FromStr for RiskSeverity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(RiskSeverity::Low),
            "medium" => Ok(RiskSeverity::Medium),
            "high" => Ok(RiskSeverity::High),
            _ => Err(Error::Parse(format!("unknown risk severity {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskEntry {
    pub id: RiskId,
    pub description: String,
    pub severity: RiskSeverity,
    pub mitigation: String,
    pub status: RiskStatus,
    pub cycle_id: CycleId,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_finding: Option<FindingId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassTotals {
    pub pass_index: u32,
    pub total: u32,
    pub passed: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub cycle: CycleId,
    pub phase: Phase,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub change_request: Option<ChangeRequestId>,
    pub provider_record: String,
    pub prompt_count: u32,
    pub requirements_total: usize,
    pub requirements_passing: usize,
    pub requirement_pass_rate: f64,
    pub standing_tests: usize,
    pub suite_per_pass: Vec<PassTotals>,
    pub findings: Vec<Finding>,
    /// Open MINOR findings carried into the risk register.
    pub minor_carry_overs: Vec<FindingId>,
    /// Open risks created in this cycle.
    pub open_risks: Vec<RiskEntry>,
    pub gate_records: Vec<GateRecord>,
    pub finalized: bool,
}

impl ValidationSummary {
    pub fn render_markdown(&self) -> String {
        let mut out = format!("# Validation Summary ({})\n\n", self.cycle);
        let _ = writeln!(out, "- Phase: {}{}", self.phase, if self.finalized { " (final)" } else { "" });
        if let Some(cr) = self.change_request {
            let _ = writeln!(out, "- Change request: {cr}");
        }
        let _ = writeln!(out, "- Provider: {}", if self.provider_record.is_empty() { "-" } else { &self.provider_record });
        let _ = writeln!(out, "- Human prompts: {}", self.prompt_count);
        let _ = writeln!(
            out,
            "- Requirement pass rate: {}/{} ({:.3})",
            self.requirements_passing, self.requirements_total, self.requirement_pass_rate
        );
        let _ = writeln!(out, "- Standing automated tests: {}", self.standing_tests);

        out.push_str("\n## Test suite per verification pass\n\n| Pass | Passed | Total |\n|---|---|---|\n");
        for p in &self.suite_per_pass {
            let _ = writeln!(out, "| {} | {} | {} |", p.pass_index, p.passed, p.total);
        }

        let major = self.findings.iter().filter(|f| f.severity == Severity::Major).count();
        let _ = writeln!(
            out,
            "\n## Red Team findings\n\n{} finding(s): {} MAJOR, {} MINOR\n\n| Id | Severity | Status | Raised in pass | Resolved in pass | Description | Resolution |\n|---|---|---|---|---|---|---|",
            self.findings.len(),
            major,
            self.findings.len() - major
        );
        for f in &self.findings {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} |",
                f.id,
                f.severity,
                match f.status {
                    FindingStatus::Open => "Open",
                    FindingStatus::Resolved => "Resolved",
                },
                f.raised_in_pass,
                f.resolved_in_pass.map(|p| format!("{p}")).unwrap_or_else(|| "-".into()),
                f.description.replace('|', "\\|"),
                f.resolution_note.as_deref().unwrap_or("-").replace('|', "\\|")
            );
        }

        out.push_str("\n## Carry-over risks\n\n");
        if self.minor_carry_overs.is_empty() && self.open_risks.is_empty() {
            out.push_str("None.\n");
        }
        for r in &self.open_risks {
            let _ = writeln!(
                out,
                "- {} ({:?}): {} | mitigation: {}{}",
                r.id,
                r.severity,
                r.description,
                r.mitigation,
                r.source_finding.map(|f| format!(" | from {f}")).unwrap_or_default()
            );
        }

        out.push_str("\n## Gate records\n\n| Gate | Status | Approver | Decided at | Rationale |\n|---|---|---|---|---|\n");
        for g in &self.gate_records {
            let _ = writeln!(
                out,
                "| {} | {:?} | {} | {} | {} |",
                g.gate,
                g.status,
                g.approver.as_ref().map(|a| format!("{a}")).unwrap_or_else(|| "-".into()),
                g.decided_at.map(|t| format!("{t}")).unwrap_or_else(|| "-".into()),
                g.rationale.replace('|', "\\|")
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn raw(cycle: Option<&str>, reqs: &[&str]) -> RawTestRecord {
        RawTestRecord {
            test_id: "test_capture".into(),
            req_ids: reqs.iter().map(|r| String::from(*r)).collect(),
            outcome: Outcome::Pass,
            cycle: cycle.map(Into::into),
            duration: Some(0.1),
            timestamp: None,
        }
    }

    fn known(id: RequirementId) -> bool {
        id.number() <= 8
    }

    #[test]
    fn record_validation() {
        let t = Timestamp::from_unix(5);
        let ev = raw(Some("C2"), &["REQ-0001", "REQ-0001"]).validate(known, t).unwrap();
        assert_eq!(ev.requirement_ids, vec![RequirementId::new(1)]);
        assert_eq!(ev.cycle, CycleId::new(2));
        assert_eq!(raw(None, &["REQ-0001"]).validate(known, t), Err(Error::MissingCycleField("test_capture".into())));
        assert_eq!(raw(Some(" "), &["REQ-0001"]).validate(known, t).unwrap_err().code(), "MissingCycleField");
        assert_eq!(raw(Some("C2"), &["REQ-9999"]).validate(known, t), Err(Error::UnknownRequirement(RequirementId::new(9999))));
        assert_eq!(raw(Some("C2"), &[]).validate(known, t).unwrap_err().code(), "NoRequirementLink");
    }

    fn finding(n: u32, severity: Severity, pass: u32) -> Finding {
        Finding {
            id: FindingId::new(n),
            severity,
            description: "x".into(),
            source: AgentRole::RedTeamVerifier,
            status: FindingStatus::Open,
            cycle_id: CycleId::new(2),
            raised_in_pass: pass,
            resolution_note: None,
            resolved_in_pass: None,
        }
    }

    #[test]
    fn first_pass_counts_only_pass_zero() {
        let mut fs: Vec<_> = (1..=6).map(|n| finding(n, Severity::Major, 0)).collect();
        fs.extend((7..=10).map(|n| finding(n, Severity::Minor, 0)));
        fs.push(finding(11, Severity::Major, 1));
        let r = first_pass_defects(&fs, CycleId::new(2), 8);
        assert_eq!((r.major, r.minor), (6, 4));
        assert_eq!(r.per_requirement, 1.25);
        let clean = first_pass_defects(&[], CycleId::new(1), 7);
        assert_eq!((clean.major, clean.minor, clean.per_requirement), (0, 0, 0.0));
    }

    #[test]
    fn suite_totals_use_latest_record_per_test() {
        let e = |id: &str, o, pass| TestEvidence {
            test_id: id.into(),
            requirement_ids: vec![RequirementId::new(1)],
            outcome: o,
            cycle: CycleId::new(2),
            timestamp: Timestamp::from_unix(1),
            pass_index: pass,
        };
        let ev = vec![e("a", Outcome::Fail, 0), e("a", Outcome::Pass, 0), e("b", Outcome::Fail, 0), e("b", Outcome::Pass, 1)];
        assert_eq!(suite_result(&ev, CycleId::new(2), 0), SuiteResult { total: 2, passed: 1 });
        assert_eq!(suite_result(&ev, CycleId::new(2), 1), SuiteResult { total: 1, passed: 1 });
    }
}
