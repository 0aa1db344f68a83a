//! Regulatory clause mappings evaluated against the project state, and the
//! decision rationale document.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::actor::ActorKind;
use crate::error::Result;
use crate::ids::CycleId;
use crate::project::{Command, Project};
use crate::verification::{FindingStatus, Severity};
use crate::workflow::{Event, GateId, GateStatus, Phase};

/// The seven documents of the state directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DocumentKind {
    Config,
    ChangeLog,
    Approvals,
    RiskRegister,
    Traceability,
    RedTeam,
    ValidationSummary,
}

impl DocumentKind {
    pub const ALL: [DocumentKind; 7] = [
        DocumentKind::Config,
        DocumentKind::ChangeLog,
        DocumentKind::Approvals,
        DocumentKind::RiskRegister,
        DocumentKind::Traceability,
        DocumentKind::RedTeam,
        DocumentKind::ValidationSummary,
    ];

    pub const fn file_name(self) -> &'static str {
        match self {
            DocumentKind::Config => "config.json",
            DocumentKind::ChangeLog => "change-log.jsonl",
            DocumentKind::Approvals => "approvals.jsonl",
            DocumentKind::RiskRegister => "risk-register.json",
            DocumentKind::Traceability => "traceability.json",
            DocumentKind::RedTeam => "red-team.json",
            DocumentKind::ValidationSummary => "validation-summary.json",
        }
    }
}

/// What a report may look at: the project and which documents exist on disk.
#[derive(Clone, Copy)]
pub struct StoreView<'a> {
    pub project: &'a Project,
    pub documents_present: &'a BTreeSet<DocumentKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClauseStatus {
    Met,
    Unmet,
    NotEvaluated,
}

impl core::fmt::Display for ClauseStatus {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            ClauseStatus::Met => "Met",
            ClauseStatus::Unmet => "Unmet",
            ClauseStatus::NotEvaluated => "NotEvaluated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseMapping {
    pub standard: String,
    pub clause: String,
    pub requirement: String,
    pub mechanism: String,
    /// Name of a predicate in [`PREDICATES`]; rows without one are not evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_query: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingSet {
    pub mappings: Vec<ClauseMapping>,
}

/// Evidence predicates, by name.
pub const PREDICATES: [&str; 6] = [
    "loop-traversed",
    "documents-present",
    "gates-approved",
    "trace-complete",
    "red-team-evidence",
    "corrective-action",
];

/// Clauses that every mapping set must evaluate.
pub const REQUIRED_ISO9001: [(&str, &str); 6] = [
    ("4.4", "loop-traversed"),
    ("7.5", "documents-present"),
    ("8.3.4", "gates-approved"),
    ("8.5.2", "trace-complete"),
    ("9.1", "red-team-evidence"),
    ("10.2", "corrective-action"),
];

impl MappingSet {
    /// Missing ISO 9001 rows and unknown predicate names.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (clause, query) in REQUIRED_ISO9001 {
            let present = self.mappings.iter().any(|m| {
                m.standard == "ISO 9001:2015" && m.clause == clause && m.evidence_query.as_deref() == Some(query)
            });
            if !present {
                out.push(format!("ISO 9001:2015 clause {clause} ({query}) missing"));
            }
        }
        for m in &self.mappings {
            if let Some(q) = &m.evidence_query {
                if !PREDICATES.contains(&q.as_str()) {
                    out.push(format!("{} {}: unknown evidence query {q:?}", m.standard, m.clause));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseResult {
    pub mapping: ClauseMapping,
    pub status: ClauseStatus,
    /// Artifact references backing the status; never empty for Met.
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsoReport {
    pub cycle: CycleId,
    pub rows: Vec<ClauseResult>,
}

pub const CAVEAT: &str = "Design-time analysis: these clause mappings have not been validated by a third-party auditor. \
Each evidence predicate is an interpretation of its clause, not an audit criterion.";

fn evaluate(view: StoreView<'_>, cycle: CycleId, query: &str) -> Option<(bool, Vec<String>)> {
    let p = view.project;
    let c = p.cycle(cycle).ok()?;
    let log_refs = |pred: &dyn Fn(&Command) -> bool| -> Vec<String> {
        p.change_log
            .iter()
            .filter(|e| e.cycle == Some(cycle) && pred(&e.command))
            .map(|e| format!("change-log.jsonl#{}", e.seq))
            .collect()
    };
    Some(match query {
        "loop-traversed" => {
            let ok = c.phase == Phase::Released;
            let refs = if ok { log_refs(&|cmd| matches!(cmd, Command::StartCycle { .. } | Command::GateDecision { .. })) } else { Vec::new() };
            (ok, refs)
        }
        "documents-present" => {
            let ok = DocumentKind::ALL.iter().all(|d| view.documents_present.contains(d));
            let refs = DocumentKind::ALL.iter().filter(|d| view.documents_present.contains(d)).map(|d| String::from(d.file_name())).collect();
            (ok, refs)
        }
        "gates-approved" => {
            let approved = |g: GateId| c.gate_records.iter().any(|r| r.gate == g && r.status == GateStatus::Approved);
            let ok = approved(GateId::G1) && approved(GateId::G2);
            let refs = c
                .gate_records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.status == GateStatus::Approved)
                .map(|(i, r)| format!("approvals.jsonl: {} {} record {}", r.cycle, r.gate, i + 1))
                .collect();
            (ok, refs)
        }
        "trace-complete" => {
            let present = view.documents_present.contains(&DocumentKind::Traceability);
            let links = p.matrix.trace_links(Some(cycle));
            let ok = present && !links.is_empty() && links.iter().all(|l| !l.is_uncovered());
            (ok, if present { alloc::vec![format!("traceability.json ({} requirements, as of {cycle})", links.len())] } else { Vec::new() })
        }
        "red-team-evidence" => {
            let reports: Vec<_> = p.reports.iter().filter(|r| r.cycle_id == cycle && r.suite_result.total > 0).collect();
            let refs = reports
                .iter()
                .map(|r| format!("red-team.json: {cycle} pass {} ({}/{})", r.pass_index, r.suite_result.passed, r.suite_result.total))
                .collect();
            (!reports.is_empty(), refs)
        }
        "corrective-action" => {
            let majors: Vec<_> = p.findings.iter().filter(|f| f.cycle_id == cycle && f.severity == Severity::Major).collect();
            let resolve_seq = |id| {
                p.change_log
                    .iter()
                    .find(|e| matches!(&e.command, Command::ResolveFinding { finding, .. } if *finding == id))
                    .map(|e| e.seq)
            };
            let rework_after = |seq: u64| {
                p.change_log.iter().find(|e| {
                    e.seq > seq && e.cycle == Some(cycle) && matches!(e.command, Command::Advance { event: Event::ReworkSubmitted })
                })
            };
            let mut refs = Vec::new();
            let mut ok = true;
            for f in &majors {
                let linked = (f.status == FindingStatus::Resolved)
                    .then(|| resolve_seq(f.id))
                    .flatten()
                    .and_then(|s| rework_after(s).map(|r| (s, r.seq)));
                match linked {
                    Some((s, r)) => refs.push(format!("{}: change-log.jsonl#{s} resolved, rework #{r}", f.id)),
                    None => ok = false,
                }
            }
            if majors.is_empty() {
                refs.push(format!("red-team.json: no MAJOR findings in {cycle}"));
            }
            (ok, refs)
        }
        _ => return None,
    })
}

/// Evaluates every mapping against `cycle`.
pub fn iso_report(view: StoreView<'_>, mappings: &MappingSet, cycle: CycleId) -> Result<IsoReport> {
    view.project.cycle(cycle)?;
    let rows = mappings
        .mappings
        .iter()
        .map(|m| {
            let (status, evidence) = match m.evidence_query.as_deref().and_then(|q| evaluate(view, cycle, q)) {
                Some((true, refs)) if !refs.is_empty() => (ClauseStatus::Met, refs),
                Some((_, refs)) => (ClauseStatus::Unmet, refs),
                None => (ClauseStatus::NotEvaluated, Vec::new()),
            };
            ClauseResult { mapping: m.clone(), status, evidence }
        })
        .collect();
    Ok(IsoReport { cycle, rows })
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

impl IsoReport {
    pub fn render_markdown(&self) -> String {
        let mut out = format!("# Regulatory Mapping Report ({})\n\n> {CAVEAT}\n\n", self.cycle);
        out.push_str("| Standard | Clause | Requirement | Mechanism | Status | Evidence |\n|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let m = &r.mapping;
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                cell(&m.standard),
                cell(&m.clause),
                cell(&m.requirement),
                cell(&m.mechanism),
                r.status,
                if r.evidence.is_empty() { String::from("-") } else { cell(&r.evidence.join("; ")) }
            );
        }
        out
    }
}

/// Chronological decision records of `cycle` with an actor-kind column.
pub fn decision_log(project: &Project, cycle: CycleId) -> Result<String> {
    let records = project.decision_records(cycle)?;
    let mut out = format!(
        "# Decision Log ({cycle})\n\n| Id | Timestamp | Actor kind | Actor | Decision | Rationale |\n|---|---|---|---|---|---|\n"
    );
    for r in &records {
        let who = match &r.actor {
            crate::actor::Actor::Human { name } => name.clone(),
            crate::actor::Actor::Agent { role } => String::from(role.as_str()),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            r.id,
            r.timestamp,
            r.actor.kind(),
            cell(&who),
            cell(&r.decision),
            cell(&r.rationale)
        );
    }
    Ok(out)
}

/// (human, agent) entry counts for `cycle`.
pub fn actor_kind_counts(project: &Project, cycle: CycleId) -> Result<(usize, usize)> {
    let records = project.decision_records(cycle)?;
    let human = records.iter().filter(|r| r.actor.kind() == ActorKind::Human).count();
    Ok((human, records.len() - human))
}
