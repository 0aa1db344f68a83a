//! The event-sourced project aggregate.
//!
//! Every mutation is a [`Command`] wrapped in an [`Envelope`] (actor, time,
//! optional rationale). Applying it either fails without touching the
//! project or appends exactly one [`ChangeLogEntry`]. Replaying the change
//! log from an empty project reproduces the project exactly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::actor::{Actor, AgentRole};
use crate::agent::{
    budget_check, check_isolation, render_prompt, AgentSession, BudgetCaps, BudgetClass, BudgetVerdict, ContextManifest,
    MemoryEntry, MemoryKind, MemoryStore, ProviderRegistry, ProviderRequest, ProviderResponse, SessionLog, SessionStatus,
    Transcript,
};
use crate::error::{Error, Result};
use crate::ids::{ChangeRequestId, CycleId, FindingId, RequirementId, RiskId, SessionId};
use crate::time::Timestamp;
use crate::traceability::{CoverageMetrics, RequirementDraft, TestEvidence, TraceMatrix};
use crate::verification::{
    first_pass_defects, suite_result, DefectRate, Finding, FindingStatus, PassTotals, RawTestRecord, RedTeamReport,
    RiskEntry, RiskSeverity, RiskStatus, Severity, ValidationSummary,
};
use crate::workflow::{
    next_phase, ChangeRequest, ChangeRequestStatus, CycleState, Decision, Event, GateId, GateRecord, GateStatus, Phase,
    TokenUsage,
};

/// Version string of the store schema; also the hash-chain genesis input.
pub const SCHEMA_VERSION: &str = "agile-v/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub schema_version: String,
    #[serde(default)]
    pub budget_caps: BudgetCaps,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig { schema_version: SCHEMA_VERSION.into(), budget_caps: BudgetCaps::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Command {
    StartCycle {
        intent: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        change_request: Option<ChangeRequest>,
    },
    Advance {
        event: Event,
    },
    GateDecision {
        gate: GateId,
        decision: Decision,
        rationale: String,
    },
    /// A human instruction to the synthesis agents; counts as one prompt.
    DirectSynthesis {
        note: String,
    },
    CloseCycle,
    RegisterRequirements {
        requirements: Vec<RequirementDraft>,
    },
    LinkArtifacts {
        requirement: RequirementId,
        artifacts: Vec<String>,
    },
    IngestEvidence {
        source: String,
        records: Vec<RawTestRecord>,
    },
    RecordFinding {
        severity: Severity,
        description: String,
    },
    ResolveFinding {
        finding: FindingId,
        note: String,
    },
    SpawnSession {
        session_id: SessionId,
        role: AgentRole,
        manifest: ContextManifest,
        window_tokens: u64,
    },
    RecordSessionRun {
        session_id: SessionId,
        prompt: String,
        response: ProviderResponse,
    },
    RecordRisk {
        description: String,
        severity: RiskSeverity,
        mitigation: String,
    },
    CloseRisk {
        risk: RiskId,
        note: String,
    },
    PutMemory {
        key: String,
        kind: MemoryKind,
        body: String,
        #[serde(default)]
        file_pointers: Vec<String>,
    },
}

impl Command {
    /// Commands a human issues to steer the loop.
    pub fn is_prompt(&self) -> bool {
        matches!(self, Command::StartCycle { .. } | Command::GateDecision { .. } | Command::DirectSynthesis { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub actor: Actor,
    pub at: Timestamp,
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl Envelope {
    pub fn new(actor: Actor, at: Timestamp, command: Command) -> Self {
        Envelope { actor, at, command, rationale: None }
    }

    pub fn because(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = Some(rationale.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeLogEntry {
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<CycleId>,
    pub actor: Actor,
    pub at: Timestamp,
    /// One-line description of what the command did.
    pub decision: String,
    pub rationale: String,
    pub command: Command,
}

impl ChangeLogEntry {
    pub fn envelope(&self) -> Envelope {
        Envelope {
            actor: self.actor.clone(),
            at: self.at,
            command: self.command.clone(),
            rationale: Some(self.rationale.clone()),
        }
    }
}

/// A change-log entry as it appears in the decision rationale document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub id: String,
    pub actor: Actor,
    pub decision: String,
    pub rationale: String,
    pub cycle_id: CycleId,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub config: ProjectConfig,
    pub cycles: Vec<CycleState>,
    pub change_requests: BTreeMap<ChangeRequestId, ChangeRequest>,
    pub change_log: Vec<ChangeLogEntry>,
    pub matrix: TraceMatrix,
    pub evidence: Vec<TestEvidence>,
    pub findings: Vec<Finding>,
    pub reports: Vec<RedTeamReport>,
    pub risks: Vec<RiskEntry>,
    pub sessions: Vec<AgentSession>,
    pub memory: MemoryStore,
    /// Validation summaries frozen at cycle close.
    pub summaries: BTreeMap<CycleId, ValidationSummary>,
}

impl Project {
    pub fn new(config: ProjectConfig) -> Self {
        Project { config, ..Project::default() }
    }

    /// Rebuilds a project from its change log. Each entry must re-derive
    /// to itself.
    pub fn replay(config: ProjectConfig, log: &[ChangeLogEntry]) -> Result<Project> {
        let mut p = Project::new(config);
        for (i, entry) in log.iter().enumerate() {
            let derived = p.apply(entry.envelope())?;
            if derived != entry {
                return Err(Error::Parse(format!("change-log entry {i} does not replay to itself")));
            }
        }
        Ok(p)
    }

    pub fn cycle(&self, id: CycleId) -> Result<&CycleState> {
        self.cycles.iter().find(|c| c.cycle_id == id).ok_or(Error::UnknownCycle(id))
    }

    pub fn latest_cycle(&self) -> Option<&CycleState> {
        self.cycles.last()
    }

    pub fn open_cycle(&self) -> Option<&CycleState> {
        self.cycles.last().filter(|c| !c.is_closed())
    }

    fn open_cycle_mut(&mut self) -> Result<&mut CycleState> {
        match self.cycles.last_mut() {
            Some(c) if c.is_closed() => Err(Error::CycleClosed(c.cycle_id)),
            Some(c) => Ok(c),
            None => Err(Error::NoOpenCycle),
        }
    }

    fn require_open(&self) -> Result<&CycleState> {
        match self.cycles.last() {
            Some(c) if c.is_closed() => Err(Error::CycleClosed(c.cycle_id)),
            Some(c) => Ok(c),
            None => Err(Error::NoOpenCycle),
        }
    }

    pub fn open_major_count(&self, cycle: CycleId) -> usize {
        self.findings.iter().filter(|f| f.cycle_id == cycle && f.is_open_major()).count()
    }

    pub fn session(&self, id: &SessionId) -> Result<&AgentSession> {
        self.sessions.iter().find(|s| &s.session_id == id).ok_or_else(|| Error::UnknownSession(id.clone()))
    }

    /// Next free session id in the open cycle.
    pub fn next_session_id(&self) -> Result<SessionId> {
        let cycle = self.require_open()?.cycle_id;
        let n = self.sessions.iter().filter(|s| s.cycle_id == cycle).count();
        Ok(SessionId::for_cycle(cycle, n + 1))
    }

    /// Applies one command. On error the project is unchanged.
    pub fn apply(&mut self, env: Envelope) -> Result<&ChangeLogEntry> {
        env.actor.validate()?;
        if let Some(last) = self.change_log.last() {
            if env.at < last.at {
                return Err(Error::ClockRegression { last: last.at, at: env.at });
            }
        }
        if matches!(&env.rationale, Some(r) if r.trim().is_empty()) {
            return Err(Error::MissingRationale);
        }
        let mut next = self.clone();
        let (cycle, decision) = next.execute(&env)?;
        if env.command.is_prompt() && env.actor.is_human() && !matches!(env.command, Command::StartCycle { .. }) {
            if let Ok(c) = next.open_cycle_mut() {
                c.prompt_count += 1;
            }
        }
        let rationale = env.rationale.clone().unwrap_or_else(|| match &env.command {
            Command::GateDecision { rationale, .. } => rationale.clone(),
            _ => decision.clone(),
        });
        next.change_log.push(ChangeLogEntry {
            seq: self.change_log.len() as u64 + 1,
            cycle,
            actor: env.actor,
            at: env.at,
            decision,
            rationale,
            command: env.command,
        });
        *self = next;
        Ok(self.change_log.last().expect("pushed above"))
    }

    fn execute(&mut self, env: &Envelope) -> Result<(Option<CycleId>, String)> {
        let at = env.at;
        match &env.command {
            Command::StartCycle { intent, change_request } => self.start_cycle(intent, change_request.as_ref(), at),
            Command::Advance { event } => {
                if event.is_gate_decision() {
                    let phase = self.require_open()?.phase;
                    return Err(Error::IllegalTransition { phase, event: *event });
                }
                let (cycle, from, to) = self.advance(*event, at)?;
                Ok((Some(cycle), format!("{event}: {from} -> {to}")))
            }
            Command::GateDecision { gate, decision, rationale } => {
                self.gate_decision(*gate, *decision, &env.actor, rationale, at)
            }
            Command::DirectSynthesis { note } => {
                let c = self.require_open()?;
                if !matches!(c.phase, Phase::Synthesis | Phase::Rework) {
                    return Err(Error::WrongPhase { op: "direct synthesis", phase: c.phase });
                }
                Ok((Some(c.cycle_id), format!("direct synthesis: {note}")))
            }
            Command::CloseCycle => self.close_cycle(at),
            Command::RegisterRequirements { requirements } => self.register(requirements),
            Command::LinkArtifacts { requirement, artifacts } => {
                let cycle = self.require_open()?.cycle_id;
                self.matrix.link_artifacts(*requirement, artifacts.iter().cloned())?;
                Ok((Some(cycle), format!("link {} artifact(s) to {requirement}", artifacts.len())))
            }
            Command::IngestEvidence { source, records } => self.ingest(source, records, at),
            Command::RecordFinding { severity, description } => self.record_finding(*severity, description, &env.actor),
            Command::ResolveFinding { finding, note } => self.resolve_finding(*finding, note),
            Command::SpawnSession { session_id, role, manifest, window_tokens } => {
                self.spawn_session(session_id, *role, manifest, *window_tokens)
            }
            Command::RecordSessionRun { session_id, prompt, response } => self.record_run(session_id, prompt, response),
            Command::RecordRisk { description, severity, mitigation } => {
                let cycle = self.require_open()?.cycle_id;
                let id = RiskId::new(self.risks.len() as u32 + 1);
                self.risks.push(RiskEntry {
                    id,
                    description: description.clone(),
                    severity: *severity,
                    mitigation: mitigation.clone(),
                    status: RiskStatus::Open,
                    cycle_id: cycle,
                    source_finding: None,
                });
                Ok((Some(cycle), format!("record risk {id}")))
            }
            Command::CloseRisk { risk, note } => {
                let cycle = self.require_open()?.cycle_id;
                let r = self.risks.iter_mut().find(|r| r.id == *risk).ok_or(Error::UnknownRisk(*risk))?;
                r.status = RiskStatus::Closed;
                Ok((Some(cycle), format!("close risk {risk}: {note}")))
            }
            Command::PutMemory { key, kind, body, file_pointers } => {
                let cycle = self.latest_cycle().ok_or(Error::NoOpenCycle)?.cycle_id;
                self.memory.put(MemoryEntry {
                    key: key.clone(),
                    kind: *kind,
                    body: body.clone(),
                    file_pointers: file_pointers.clone(),
                    cycle_id: cycle,
                    author: env.actor.clone(),
                })?;
                Ok((Some(cycle), format!("memory put {key}")))
            }
        }
    }

    fn start_cycle(
        &mut self,
        intent: &str,
        change_request: Option<&ChangeRequest>,
        at: Timestamp,
    ) -> Result<(Option<CycleId>, String)> {
        if let Some(open) = self.open_cycle() {
            return Err(Error::CycleAlreadyOpen(open.cycle_id));
        }
        if !self.cycles.is_empty() && change_request.is_none() {
            return Err(Error::MissingChangeRequest);
        }
        let id = self.cycles.last().map_or(CycleId::FIRST, |c| c.cycle_id.next());
        let cr_id = match change_request {
            Some(cr) => {
                if self.change_requests.contains_key(&cr.cr_id) {
                    return Err(Error::DuplicateChangeRequest(cr.cr_id));
                }
                let mut cr = cr.clone();
                cr.status = ChangeRequestStatus::Open;
                cr.scope.sort();
                cr.scope.dedup();
                self.change_requests.insert(cr.cr_id, cr);
                change_request.map(|c| c.cr_id)
            }
            None => None,
        };
        self.matrix.begin_cycle(id)?;
        self.cycles.push(CycleState {
            cycle_id: id,
            phase: Phase::Intent,
            intent: intent.into(),
            change_request_id: cr_id,
            provider_record: String::new(),
            gate_records: Vec::new(),
            prompt_count: 1,
            verification_pass: None,
            token_usage: TokenUsage::default(),
            opened_at: at,
            closed_at: None,
        });
        let cr = cr_id.map(|c| format!(" under {c}")).unwrap_or_default();
        Ok((Some(id), format!("start cycle {id}{cr}: {intent}")))
    }

    fn advance(&mut self, event: Event, at: Timestamp) -> Result<(CycleId, Phase, Phase)> {
        let c = self.require_open()?;
        let (cycle, from) = (c.cycle_id, c.phase);
        let to = next_phase(from, event, self.open_major_count(cycle))?;
        self.enter(cycle, from, to, at);
        Ok((cycle, from, to))
    }

    /// Side effects of a phase change.
    fn enter(&mut self, cycle: CycleId, from: Phase, to: Phase, at: Timestamp) {
        if from == Phase::Verification {
            // the pass that just completed
            let pass = self.open_cycle().and_then(|c| c.verification_pass).unwrap_or(0);
            self.reports.push(RedTeamReport {
                cycle_id: cycle,
                pass_index: pass,
                findings: self.findings.iter().filter(|f| f.cycle_id == cycle).cloned().collect(),
                suite_result: suite_result(&self.evidence, cycle, pass),
            });
            if to == Phase::Audit {
                self.carry_minor_findings(cycle);
            }
        }
        let c = self.open_cycle_mut().expect("checked by caller");
        c.phase = to;
        if to == Phase::Verification {
            c.verification_pass = Some(c.verification_pass.map_or(0, |p| p + 1));
        }
        if let Some(gate) = to.gate() {
            c.gate_records.push(GateRecord {
                gate,
                cycle,
                status: GateStatus::Pending,
                approver: None,
                rationale: String::new(),
                pending_since: at,
                decided_at: None,
            });
        }
    }

    fn carry_minor_findings(&mut self, cycle: CycleId) {
        let open: Vec<Finding> = self
            .findings
            .iter()
            .filter(|f| f.cycle_id == cycle && f.severity == Severity::Minor && f.status == FindingStatus::Open)
            .filter(|f| !self.risks.iter().any(|r| r.source_finding == Some(f.id)))
            .cloned()
            .collect();
        for f in open {
            let id = RiskId::new(self.risks.len() as u32 + 1);
            self.risks.push(RiskEntry {
                id,
                description: format!("open MINOR finding {}: {}", f.id, f.description),
                severity: RiskSeverity::Low,
                mitigation: String::from("carried into the next cycle's change request"),
                status: RiskStatus::Open,
                cycle_id: cycle,
                source_finding: Some(f.id),
            });
        }
    }

    fn gate_decision(
        &mut self,
        gate: GateId,
        decision: Decision,
        approver: &Actor,
        rationale: &str,
        at: Timestamp,
    ) -> Result<(Option<CycleId>, String)> {
        if !approver.is_human() {
            return Err(Error::NonHumanApprover(approver.clone()));
        }
        if rationale.trim().is_empty() {
            return Err(Error::MissingRationale);
        }
        let c = self.require_open()?;
        let cycle = c.cycle_id;
        let approve = decision == Decision::Approve;
        if gate == GateId::G2 && approve {
            let open = self.open_major_count(cycle);
            if open > 0 {
                return Err(Error::OpenMajorFindings(open));
            }
        }
        if c.phase != gate.phase() || c.pending_gate().map(|g| g.gate) != Some(gate) {
            return Err(Error::GateNotPending(gate));
        }
        if approve {
            match gate {
                GateId::G1 => {
                    if let Some(cr) = c.change_request_id.and_then(|id| self.change_requests.get(&id)) {
                        if cr.scope.is_empty() {
                            return Err(Error::EmptyChangeRequestScope(cr.cr_id));
                        }
                    }
                }
                GateId::G2 => {
                    let uncovered = self.matrix.uncovered(Some(cycle));
                    if !uncovered.is_empty() {
                        return Err(Error::UncoveredRequirements(uncovered));
                    }
                }
            }
        }
        let from = c.phase;
        let event = gate.event(decision);
        let to = next_phase(from, event, self.open_major_count(cycle))?;
        let c = self.open_cycle_mut()?;
        let record = c.gate_records.iter_mut().rev().find(|g| g.status == GateStatus::Pending).expect("pending");
        record.status = if approve { GateStatus::Approved } else { GateStatus::Rejected };
        record.approver = Some(approver.clone());
        record.rationale = rationale.into();
        record.decided_at = Some(at);
        self.enter(cycle, from, to, at);
        let verb = if approve { "approved" } else { "rejected" };
        Ok((Some(cycle), format!("{gate} {verb} by {approver}: {from} -> {to}")))
    }

    fn close_cycle(&mut self, at: Timestamp) -> Result<(Option<CycleId>, String)> {
        let c = self.require_open()?;
        if c.phase != Phase::Released {
            return Err(Error::NotReleased(c.phase));
        }
        let cycle = c.cycle_id;
        let cr = c.change_request_id;
        let c = self.open_cycle_mut()?;
        c.closed_at = Some(at);
        if let Some(cr) = cr.and_then(|id| self.change_requests.get_mut(&id)) {
            cr.status = ChangeRequestStatus::Closed;
        }
        let mut summary = self.compute_summary(cycle)?;
        summary.finalized = true;
        self.summaries.insert(cycle, summary);
        Ok((Some(cycle), format!("close cycle {cycle}")))
    }

    fn register(&mut self, drafts: &[RequirementDraft]) -> Result<(Option<CycleId>, String)> {
        let c = self.require_open()?;
        if !matches!(c.phase, Phase::Intent | Phase::Decomposition) {
            return Err(Error::WrongPhase { op: "register requirements", phase: c.phase });
        }
        let (cycle, cr) = (c.cycle_id, c.change_request_id);
        let delta = self.matrix.register(cycle, drafts)?;
        if let Some(cr) = cr.and_then(|id| self.change_requests.get_mut(&id)) {
            cr.scope.extend(delta.added.iter().chain(&delta.modified));
            cr.scope.sort();
            cr.scope.dedup();
        }
        Ok((
            Some(cycle),
            format!(
                "register {} requirement(s): {} added, {} modified, {} unchanged",
                drafts.len(),
                delta.added.len(),
                delta.modified.len(),
                delta.unchanged.len()
            ),
        ))
    }

    fn ingest(&mut self, source: &str, records: &[RawTestRecord], at: Timestamp) -> Result<(Option<CycleId>, String)> {
        let c = self.require_open()?;
        if c.phase != Phase::Verification {
            return Err(Error::WrongPhase { op: "ingest test results", phase: c.phase });
        }
        let cycle = c.cycle_id;
        let pass = c.verification_pass.unwrap_or(0);
        let snapshot = self.matrix.snapshot(cycle);
        let known = |id: RequirementId| snapshot.is_some_and(|s| s.contains_key(&id));
        let mut validated = Vec::with_capacity(records.len());
        for r in records {
            let mut ev = r.validate(known, at)?;
            if ev.cycle != cycle {
                return Err(match self.cycle(ev.cycle) {
                    Ok(other) if other.is_closed() => Error::CycleClosed(ev.cycle),
                    _ => Error::UnknownCycle(ev.cycle),
                });
            }
            ev.pass_index = pass;
            validated.push(ev);
        }
        for ev in &validated {
            for id in &ev.requirement_ids {
                self.matrix.note_test(*id, cycle, &ev.test_id);
            }
        }
        let n = validated.len();
        self.evidence.extend(validated);
        Ok((Some(cycle), format!("ingest {n} test record(s) from {source} (pass {pass})")))
    }

    fn record_finding(&mut self, severity: Severity, description: &str, actor: &Actor) -> Result<(Option<CycleId>, String)> {
        let c = self.require_open()?;
        if c.phase != Phase::Verification {
            return Err(Error::WrongPhase { op: "record finding", phase: c.phase });
        }
        let cycle = c.cycle_id;
        let id = FindingId::new(self.findings.len() as u32 + 1);
        self.findings.push(Finding {
            id,
            severity,
            description: description.into(),
            source: actor.role().unwrap_or(AgentRole::RedTeamVerifier),
            status: FindingStatus::Open,
            cycle_id: cycle,
            raised_in_pass: c.verification_pass.unwrap_or(0),
            resolution_note: None,
            resolved_in_pass: None,
        });
        Ok((Some(cycle), format!("record {severity} finding {id}: {description}")))
    }

    fn resolve_finding(&mut self, id: FindingId, note: &str) -> Result<(Option<CycleId>, String)> {
        let c = self.require_open()?;
        let (cycle, phase, pass) = (c.cycle_id, c.phase, c.verification_pass);
        let f = self.findings.iter_mut().find(|f| f.id == id).ok_or(Error::UnknownFinding(id))?;
        if f.status == FindingStatus::Resolved {
            return Err(Error::AlreadyResolved(id));
        }
        if f.cycle_id != cycle {
            return Err(Error::CycleClosed(f.cycle_id));
        }
        if phase != Phase::Rework {
            return Err(Error::WrongPhase { op: "resolve finding", phase });
        }
        f.status = FindingStatus::Resolved;
        f.resolution_note = Some(note.into());
        f.resolved_in_pass = pass;
        Ok((Some(cycle), format!("resolve {} finding {id}: {note}", f.severity)))
    }

    fn spawn_session(
        &mut self,
        id: &SessionId,
        role: AgentRole,
        manifest: &ContextManifest,
        window_tokens: u64,
    ) -> Result<(Option<CycleId>, String)> {
        let cycle = self.require_open()?.cycle_id;
        if self.sessions.iter().any(|s| &s.session_id == id) {
            return Err(Error::DuplicateSession(id.clone()));
        }
        manifest.check_references()?;
        check_isolation(role, manifest, SessionLog { sessions: &self.sessions, memory: &self.memory })?;
        let fraction = check_budget(manifest, window_tokens, BudgetClass::SubAgent, &self.config.budget_caps)?;
        self.sessions.push(AgentSession {
            session_id: id.clone(),
            role,
            cycle_id: cycle,
            manifest: manifest.clone(),
            window_tokens,
            budget_fraction: fraction,
            transcript_ref: format!("sessions/{id}.json"),
            status: SessionStatus::Spawned,
            provider: None,
            outputs: Vec::new(),
            usage: TokenUsage::default(),
            transcript: None,
        });
        Ok((Some(cycle), format!("spawn {role} session {id} with {} context entries", manifest.entries.len())))
    }

    /// The provider request for a spawned, not yet run session.
    pub fn prepare_run(&self, id: &SessionId) -> Result<ProviderRequest> {
        let s = self.session(id)?;
        if s.status != SessionStatus::Spawned {
            return Err(Error::SessionAlreadyRun(id.clone()));
        }
        let occurrence = self
            .sessions
            .iter()
            .take_while(|o| &o.session_id != id)
            .filter(|o| o.role == s.role && o.cycle_id == s.cycle_id)
            .count() as u32;
        Ok(ProviderRequest {
            session_id: id.clone(),
            role: s.role,
            cycle: s.cycle_id,
            occurrence,
            prompt: render_prompt(s.role, s.cycle_id, &s.manifest),
        })
    }

    fn record_run(&mut self, id: &SessionId, prompt: &str, response: &ProviderResponse) -> Result<(Option<CycleId>, String)> {
        self.require_open()?;
        let s = self.sessions.iter_mut().find(|s| &s.session_id == id).ok_or_else(|| Error::UnknownSession(id.clone()))?;
        if s.status != SessionStatus::Spawned {
            return Err(Error::SessionAlreadyRun(id.clone()));
        }
        s.status = SessionStatus::Completed;
        s.provider = Some(response.model.clone());
        s.outputs = response.artifacts.clone();
        s.usage = response.usage;
        s.transcript = Some(Transcript { prompt: prompt.into(), response: response.text.clone() });
        let (role, cycle) = (s.role, s.cycle_id);
        let c = self.open_cycle_mut()?;
        if c.cycle_id != cycle {
            return Err(Error::CycleClosed(cycle));
        }
        c.note_provider(&response.model);
        c.token_usage.add(response.usage);
        Ok((
            Some(cycle),
            format!(
                "{role} session {id} ran on {} ({} in / {} out tokens, {} artifact(s))",
                response.model,
                response.usage.input,
                response.usage.output,
                response.artifacts.len()
            ),
        ))
    }

    pub fn coverage(&self, cycle: CycleId) -> Result<CoverageMetrics> {
        self.cycle(cycle)?;
        self.matrix.coverage_metrics_as_of(&self.evidence, cycle)
    }

    pub fn first_pass_defect_rate(&self, cycle: CycleId) -> Result<DefectRate> {
        self.cycle(cycle)?;
        if !self.reports.iter().any(|r| r.cycle_id == cycle) {
            return Err(Error::NoVerificationPass(cycle));
        }
        let reqs = self.matrix.snapshot(cycle).map_or(0, |s| s.len());
        Ok(first_pass_defects(&self.findings, cycle, reqs))
    }

    /// The finalized summary once the cycle is closed, a live one from Audit on.
    pub fn validation_summary(&self, cycle: CycleId) -> Result<ValidationSummary> {
        if let Some(s) = self.summaries.get(&cycle) {
            return Ok(s.clone());
        }
        let c = self.cycle(cycle)?;
        if !c.phase.is_validated() {
            return Err(Error::TooEarly(c.phase));
        }
        self.compute_summary(cycle)
    }

    fn compute_summary(&self, cycle: CycleId) -> Result<ValidationSummary> {
        let c = self.cycle(cycle)?;
        let m = self.matrix.coverage_metrics_as_of(&self.evidence, cycle)?;
        let findings: Vec<Finding> = self.findings.iter().filter(|f| f.cycle_id == cycle).cloned().collect();
        Ok(ValidationSummary {
            cycle,
            phase: c.phase,
            change_request: c.change_request_id,
            provider_record: c.provider_record.clone(),
            prompt_count: c.prompt_count,
            requirements_total: m.req_count,
            requirements_passing: m.passing,
            requirement_pass_rate: m.requirement_pass_rate,
            standing_tests: m.test_count,
            suite_per_pass: self
                .reports
                .iter()
                .filter(|r| r.cycle_id == cycle)
                .map(|r| PassTotals { pass_index: r.pass_index, total: r.suite_result.total, passed: r.suite_result.passed })
                .collect(),
            minor_carry_overs: findings
                .iter()
                .filter(|f| f.severity == Severity::Minor && f.status == FindingStatus::Open)
                .map(|f| f.id)
                .collect(),
            findings,
            open_risks: self.risks.iter().filter(|r| r.cycle_id == cycle && r.status == RiskStatus::Open).cloned().collect(),
            gate_records: c.gate_records.clone(),
            finalized: false,
        })
    }

    /// Change-log entries of `cycle` as decision records, in log order.
    pub fn decision_records(&self, cycle: CycleId) -> Result<Vec<DecisionRecord>> {
        self.cycle(cycle)?;
        Ok(self
            .change_log
            .iter()
            .filter(|e| e.cycle == Some(cycle))
            .map(|e| DecisionRecord {
                id: format!("D-{:04}", e.seq),
                actor: e.actor.clone(),
                decision: e.decision.clone(),
                rationale: e.rationale.clone(),
                cycle_id: cycle,
                timestamp: e.at,
            })
            .collect())
    }
}

/// Budget check that fails with [`Error::BudgetExceeded`]; returns the fraction used.
pub fn check_budget(manifest: &ContextManifest, window_tokens: u64, class: BudgetClass, caps: &BudgetCaps) -> Result<f64> {
    match budget_check(manifest, window_tokens, class, caps) {
        BudgetVerdict::Ok { fraction } => Ok(fraction),
        BudgetVerdict::Violation { fraction, cap } => Err(Error::BudgetExceeded {
            used_permille: if fraction.is_finite() { libm::ceil(fraction * 1000.0) as u64 } else { u64::MAX },
            cap_permille: libm::round(cap * 1000.0) as u64,
        }),
    }
}

/// Builds the command that records a session run, calling the provider
/// registered under `provider_id`.
pub fn run_session(project: &Project, registry: &ProviderRegistry, provider_id: &str, session: &SessionId) -> Result<Command> {
    let request = project.prepare_run(session)?;
    let provider = registry.get(provider_id)?;
    let response = provider.complete(&request)?;
    Ok(Command::RecordSessionRun { session_id: session.clone(), prompt: request.prompt, response })
}
