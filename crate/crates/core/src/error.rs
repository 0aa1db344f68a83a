use alloc::string::String;
use alloc::vec::Vec;

use crate::actor::{Actor, AgentRole};
use crate::agent::EntryKind;
use crate::ids::{ChangeRequestId, CycleId, FindingId, RequirementId, RiskId, SessionId};
use crate::time::Timestamp;
use crate::workflow::{Event, GateId, Phase};

/// Every failure the engine reports. [`Error::code`] gives the stable
/// machine-readable name used by the CLI and the HTTP service.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    // workflow
    #[error("cycle {0} is still open")]
    CycleAlreadyOpen(CycleId),
    #[error("a change request is required for every cycle after the first")]
    MissingChangeRequest,
    #[error("change request {0} already exists")]
    DuplicateChangeRequest(ChangeRequestId),
    #[error("change request {0} has an empty scope")]
    EmptyChangeRequestScope(ChangeRequestId),
    #[error("no cycle is open")]
    NoOpenCycle,
    #[error("cycle {0} is closed")]
    CycleClosed(CycleId),
    #[error("event {event} is not legal in phase {phase}")]
    IllegalTransition { phase: Phase, event: Event },
    #[error("gate {0} is not pending")]
    GateNotPending(GateId),
    #[error("gate approver must be a human, got {0}")]
    NonHumanApprover(Actor),
    #[error("{0} MAJOR finding(s) still open")]
    OpenMajorFindings(usize),
    #[error("requirements without test evidence: {0:?}")]
    UncoveredRequirements(Vec<RequirementId>),
    #[error("cycle can only be closed once released (phase {0})")]
    NotReleased(Phase),
    #[error("unknown cycle {0}")]
    UnknownCycle(CycleId),
    #[error("cycle {from} must precede {to}")]
    BadOrder { from: CycleId, to: CycleId },

    // audit trail
    #[error("timestamp {at} is earlier than the previous entry ({last})")]
    ClockRegression { last: Timestamp, at: Timestamp },
    #[error("entry carries no actor identity")]
    MissingActor,
    #[error("decision rationale must not be empty")]
    MissingRationale,

    // traceability
    #[error("requirement {0} appears more than once in one registration")]
    DuplicateId(RequirementId),
    #[error("requirement {0} has no acceptance criteria")]
    EmptyCriteria(RequirementId),
    #[error("invalid {kind} id {value:?}")]
    InvalidId { kind: &'static str, value: String },
    #[error("no requirements registered")]
    NoRequirements,

    // verification
    #[error("test record {0:?} has no cycle field")]
    MissingCycleField(String),
    #[error("test record {0:?} names no requirement")]
    NoRequirementLink(String),
    #[error("unknown requirement {0}")]
    UnknownRequirement(RequirementId),
    #[error("{op} is not allowed in phase {phase}")]
    WrongPhase { op: &'static str, phase: Phase },
    #[error("finding {0} is already resolved")]
    AlreadyResolved(FindingId),
    #[error("unknown finding {0}")]
    UnknownFinding(FindingId),
    #[error("no verification pass recorded for {0}")]
    NoVerificationPass(CycleId),
    #[error("validation summary needs Audit or later (phase {0})")]
    TooEarly(Phase),
    #[error("unknown risk {0}")]
    UnknownRisk(RiskId),

    // agent runtime
    #[error("{role} may not receive {kind} entry {reference:?}: {rule}")]
    IsolationViolation {
        role: AgentRole,
        kind: EntryKind,
        reference: String,
        rule: &'static str,
    },
    #[error("manifest uses {used_permille}\u{2030} of the window, cap is {cap_permille}\u{2030}")]
    BudgetExceeded { used_permille: u64, cap_permille: u64 },
    #[error("context entry {0:?} looks like inlined content, not a reference")]
    InlineContent(String),
    #[error("session {0} already exists")]
    DuplicateSession(SessionId),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {0} has already run")]
    SessionAlreadyRun(SessionId),
    #[error("provider {0:?} is not registered")]
    ProviderUnavailable(String),
    #[error("provider failed: {0}")]
    ProviderFailure(String),
    #[error("memory entry rejected by secret screen ({0})")]
    SecretDetected(&'static str),
    #[error("dependency cycle among tasks {0:?}")]
    CyclicDependency(Vec<String>),
    #[error("task {task:?} depends on unknown task {dependency:?}")]
    UnknownDependency { task: String, dependency: String },
    #[error("task {0:?} listed twice")]
    DuplicateTask(String),

    // cost model
    #[error("token counts must be non-negative")]
    NegativeTokens,
    #[error("prices must be non-negative")]
    NegativePrice,
    #[error("invalid scenario: {0}")]
    InvalidScenario(&'static str),
    #[error("Agile V cost is zero; reduction factor undefined")]
    ZeroAgilevCost,

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::CycleAlreadyOpen(_) => "CycleAlreadyOpen",
            Error::MissingChangeRequest => "MissingChangeRequest",
            Error::DuplicateChangeRequest(_) => "DuplicateChangeRequest",
            Error::EmptyChangeRequestScope(_) => "EmptyChangeRequestScope",
            Error::NoOpenCycle => "NoOpenCycle",
            Error::CycleClosed(_) => "CycleClosed",
            Error::IllegalTransition { .. } => "IllegalTransition",
            Error::GateNotPending(_) => "GateNotPending",
            Error::NonHumanApprover(_) => "NonHumanApprover",
            Error::OpenMajorFindings(_) => "OpenMajorFindings",
            Error::UncoveredRequirements(_) => "UncoveredRequirements",
            Error::NotReleased(_) => "NotReleased",
            Error::UnknownCycle(_) => "UnknownCycle",
            Error::BadOrder { .. } => "BadOrder",
            Error::ClockRegression { .. } => "ClockRegression",
            Error::MissingActor => "MissingActor",
            Error::MissingRationale => "MissingRationale",
            Error::DuplicateId(_) => "DuplicateId",
            Error::EmptyCriteria(_) => "EmptyCriteria",
            Error::InvalidId { .. } => "InvalidId",
            Error::NoRequirements => "NoRequirements",
            Error::MissingCycleField(_) => "MissingCycleField",
            Error::NoRequirementLink(_) => "NoRequirementLink",
            Error::UnknownRequirement(_) => "UnknownRequirement",
            Error::WrongPhase { .. } => "WrongPhase",
            Error::AlreadyResolved(_) => "AlreadyResolved",
            Error::UnknownFinding(_) => "UnknownFinding",
            Error::NoVerificationPass(_) => "NoVerificationPass",
            Error::TooEarly(_) => "TooEarly",
            Error::UnknownRisk(_) => "UnknownRisk",
            Error::IsolationViolation { .. } => "IsolationViolation",
            Error::BudgetExceeded { .. } => "BudgetExceeded",
            Error::InlineContent(_) => "InlineContent",
            Error::DuplicateSession(_) => "DuplicateSession",
            Error::UnknownSession(_) => "UnknownSession",
            Error::SessionAlreadyRun(_) => "SessionAlreadyRun",
            Error::ProviderUnavailable(_) => "ProviderUnavailable",
            Error::ProviderFailure(_) => "ProviderFailure",
            Error::SecretDetected(_) => "SecretDetected",
            Error::CyclicDependency(_) => "CyclicDependency",
            Error::UnknownDependency { .. } => "UnknownDependency",
            Error::DuplicateTask(_) => "DuplicateTask",
            Error::NegativeTokens => "NegativeTokens",
            Error::NegativePrice => "NegativePrice",
            Error::InvalidScenario(_) => "InvalidScenario",
            Error::ZeroAgilevCost => "ZeroAgilevCost",
            Error::Parse(_) => "ParseError",
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
