//! The Infinity Loop state machine: phases, transition events, gates,
//! cycles and change requests.
//!
//! [`next_phase`] is the pure transition relation. Gate bookkeeping, actor
//! attribution and the finding guards live in [`crate::project::Project`],
//! which is the only place cycles are mutated.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::actor::Actor;
use crate::error::{Error, Result};
use crate::ids::{ChangeRequestId, CycleId, RequirementId};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Intent,
    Decomposition,
    Gate1,
    Synthesis,
    Verification,
    Rework,
    Audit,
    Gate2,
    Released,
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::Intent,
        Phase::Decomposition,
        Phase::Gate1,
        Phase::Synthesis,
        Phase::Verification,
        Phase::Rework,
        Phase::Audit,
        Phase::Gate2,
        Phase::Released,
    ];

    /// The gate awaiting a decision in this phase, if any.
    pub const fn gate(self) -> Option<GateId> {
        match self {
            Phase::Gate1 => Some(GateId::G1),
            Phase::Gate2 => Some(GateId::G2),
            _ => None,
        }
    }

    /// Audit, Gate2 and Released.
    pub const fn is_validated(self) -> bool {
        matches!(self, Phase::Audit | Phase::Gate2 | Phase::Released)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GateId {
    G1,
    G2,
}

impl GateId {
    pub const fn phase(self) -> Phase {
        match self {
            GateId::G1 => Phase::Gate1,
            GateId::G2 => Phase::Gate2,
        }
    }

    pub const fn event(self, decision: Decision) -> Event {
        match (self, decision) {
            (GateId::G1, Decision::Approve) => Event::G1Approved,
            (GateId::G1, Decision::Reject) => Event::G1Rejected,
            (GateId::G2, Decision::Approve) => Event::G2Approved,
            (GateId::G2, Decision::Reject) => Event::G2Rejected,
        }
    }
}

impl fmt::Display for GateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for GateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "G1" | "g1" => Ok(GateId::G1),
            "G2" | "g2" => Ok(GateId::G2),
            _ => Err(Error::InvalidId { kind: "gate", value: s.into() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Approve,
    Reject,
}

impl FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "approve" | "approved" => Ok(Decision::Approve),
            "reject" | "rejected" => Ok(Decision::Reject),
            _ => Err(Error::Parse(alloc::format!("unknown decision {s:?}"))),
        }
    }
}

/// Transition events. Gate events are produced only by gate decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Event {
    DecompositionComplete,
    FeasibilityPass,
    G1Approved,
    G1Rejected,
    SynthesisComplete,
    VerificationComplete,
    ReworkSubmitted,
    AuditComplete,
    G2Approved,
    G2Rejected,
}

impl Event {
    pub const ALL: [Event; 10] = [
        Event::DecompositionComplete,
        Event::FeasibilityPass,
        Event::G1Approved,
        Event::G1Rejected,
        Event::SynthesisComplete,
        Event::VerificationComplete,
        Event::ReworkSubmitted,
        Event::AuditComplete,
        Event::G2Approved,
        Event::G2Rejected,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            Event::DecompositionComplete => "decomposition-complete",
            Event::FeasibilityPass => "feasibility-pass",
            Event::G1Approved => "g1-approved",
            Event::G1Rejected => "g1-rejected",
            Event::SynthesisComplete => "synthesis-complete",
            Event::VerificationComplete => "verification-complete",
            Event::ReworkSubmitted => "rework-submitted",
            Event::AuditComplete => "audit-complete",
            Event::G2Approved => "g2-approved",
            Event::G2Rejected => "g2-rejected",
        }
    }

    pub const fn is_gate_decision(self) -> bool {
        matches!(
            self,
            Event::G1Approved | Event::G1Rejected | Event::G2Approved | Event::G2Rejected
        )
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Event {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Event::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Parse(alloc::format!("unknown event {s:?}")))
    }
}

/// Guard condition attached to a transition-table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Guard {
    OpenMajorFindings,
    NoOpenMajorFindings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: Phase,
    pub event: Event,
    pub to: Phase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guard: Option<Guard>,
}

const fn row(from: Phase, event: Event, to: Phase, guard: Option<Guard>) -> Transition {
    Transition { from, event, to, guard }
}

/// The complete transition relation, in loop order.
pub const TRANSITIONS: [Transition; 11] = [
    row(Phase::Intent, Event::DecompositionComplete, Phase::Decomposition, None),
    row(Phase::Decomposition, Event::FeasibilityPass, Phase::Gate1, None),
    row(Phase::Gate1, Event::G1Approved, Phase::Synthesis, None),
    row(Phase::Gate1, Event::G1Rejected, Phase::Decomposition, None),
    row(Phase::Synthesis, Event::SynthesisComplete, Phase::Verification, None),
    row(Phase::Verification, Event::VerificationComplete, Phase::Rework, Some(Guard::OpenMajorFindings)),
    row(Phase::Rework, Event::ReworkSubmitted, Phase::Verification, None),
    row(Phase::Verification, Event::VerificationComplete, Phase::Audit, Some(Guard::NoOpenMajorFindings)),
    row(Phase::Audit, Event::AuditComplete, Phase::Gate2, None),
    row(Phase::Gate2, Event::G2Approved, Phase::Released, None),
    row(Phase::Gate2, Event::G2Rejected, Phase::Synthesis, None),
];

/// Pure transition relation. `open_major` is the number of unresolved MAJOR
/// findings in the cycle and selects between the two Verification exits.
pub fn next_phase(phase: Phase, event: Event, open_major: usize) -> Result<Phase> {
    TRANSITIONS
        .iter()
        .filter(|t| t.from == phase && t.event == event)
        .find(|t| match t.guard {
            None => true,
            Some(Guard::OpenMajorFindings) => open_major > 0,
            Some(Guard::NoOpenMajorFindings) => open_major == 0,
        })
        .map(|t| t.to)
        .ok_or(Error::IllegalTransition { phase, event })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateStatus {
    Pending,
    Approved,
    Rejected,
}

/// One gate occurrence. Written `Pending` when the cycle enters the gate
/// phase; the decision turns it `Approved`/`Rejected`, after which it is frozen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateRecord {
    pub gate: GateId,
    pub cycle: CycleId,
    pub status: GateStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub approver: Option<Actor>,
    pub rationale: String,
    pub pending_since: Timestamp,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decided_at: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeRequestStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRequest {
    pub cr_id: ChangeRequestId,
    pub title: String,
    pub description: String,
    /// Requirement ids added or modified under this request.
    #[serde(default)]
    pub scope: Vec<RequirementId>,
    pub status: ChangeRequestStatus,
}

impl ChangeRequest {
    pub fn new(cr_id: ChangeRequestId, title: impl Into<String>, description: impl Into<String>) -> Self {
        ChangeRequest {
            cr_id,
            title: title.into(),
            description: description.into(),
            scope: Vec::new(),
            status: ChangeRequestStatus::Open,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.input += other.input;
        self.output += other.output;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleState {
    pub cycle_id: CycleId,
    pub phase: Phase,
    pub intent: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub change_request_id: Option<ChangeRequestId>,
    /// Model ids used by sessions in this cycle, comma separated in first-use order.
    #[serde(default)]
    pub provider_record: String,
    #[serde(default)]
    pub gate_records: Vec<GateRecord>,
    pub prompt_count: u32,
    /// Index of the current (or last) verification pass; `None` before the first.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verification_pass: Option<u32>,
    #[serde(default)]
    pub token_usage: TokenUsage,
    pub opened_at: Timestamp,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub closed_at: Option<Timestamp>,
}

impl CycleState {
    pub fn is_closed(&self) -> bool {
        self.closed_at.is_some()
    }

    pub fn pending_gate(&self) -> Option<&GateRecord> {
        self.gate_records
            .iter()
            .rev()
            .find(|g| g.status == GateStatus::Pending)
    }

    pub fn has_approved(&self, gate: GateId) -> bool {
        self.gate_records
            .iter()
            .any(|g| g.gate == gate && g.status == GateStatus::Approved)
    }

    pub(crate) fn note_provider(&mut self, model: &str) {
        if model.is_empty() || self.provider_record.split(',').any(|p| p == model) {
            return;
        }
        if !self.provider_record.is_empty() {
            self.provider_record.push(',');
        }
        self.provider_record.push_str(model);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_legal_transition() {
        assert_eq!(
            next_phase(Phase::Intent, Event::DecompositionComplete, 0),
            Ok(Phase::Decomposition)
        );
    }

    #[test]
    fn verification_exit_depends_on_open_major_count() {
        assert_eq!(next_phase(Phase::Verification, Event::VerificationComplete, 6), Ok(Phase::Rework));
        assert_eq!(next_phase(Phase::Verification, Event::VerificationComplete, 0), Ok(Phase::Audit));
    }

    #[test]
    fn gate_cannot_be_skipped() {
        let err = next_phase(Phase::Gate1, Event::SynthesisComplete, 0).unwrap_err();
        assert_eq!(err, Error::IllegalTransition { phase: Phase::Gate1, event: Event::SynthesisComplete });
        assert!(alloc::format!("{err}").contains("Gate1"));
    }

    #[test]
    fn rework_only_entered_from_verification() {
        for t in TRANSITIONS.iter().filter(|t| t.to == Phase::Rework) {
            assert_eq!(t.from, Phase::Verification);
        }
    }

    #[test]
    fn rejections_loop_back() {
        assert_eq!(next_phase(Phase::Gate1, Event::G1Rejected, 0), Ok(Phase::Decomposition));
        assert_eq!(next_phase(Phase::Gate2, Event::G2Rejected, 0), Ok(Phase::Synthesis));
    }

    #[test]
    fn released_is_terminal() {
        for e in Event::ALL {
            assert!(next_phase(Phase::Released, e, 0).is_err());
        }
    }

    #[test]
    fn provider_record_deduplicates() {
        let mut c = CycleState {
            cycle_id: CycleId::FIRST,
            phase: Phase::Intent,
            intent: "x".into(),
            change_request_id: None,
            provider_record: String::new(),
            gate_records: Vec::new(),
            prompt_count: 1,
            verification_pass: None,
            token_usage: TokenUsage::default(),
            opened_at: Timestamp::from_unix(0),
            closed_at: None,
        };
        c.note_provider("a");
        c.note_provider("b");
        c.note_provider("a");
        assert_eq!(c.provider_record, "a,b");
    }
}
