//! Replay of the two-cycle HIL case study through the scripted provider.
//!
//! The driver issues exactly the commands a project lead and the six agents
//! would: six human prompts per cycle (intent, Gate 1, three synthesis
//! directions, Gate 2). It runs against anything that can execute an
//! envelope, so the same script drives an in-memory [`Project`] and an
//! on-disk [`Store`].

use agilev_core::agent::{ContextEntry, ContextManifest, EntryKind, MemoryKind, ProviderRegistry, ScriptedProvider};
use agilev_core::project::run_session;
use agilev_core::traceability::parse_requirements;
use agilev_core::verification::{RawTestRecord, Severity};
use agilev_core::workflow::ChangeRequest;
use agilev_core::{
    Actor, AgentRole, ChangeRequestId, Command, CycleId, Decision, Envelope, Event, FindingId, GateId, Project,
    RequirementId, SessionId, Timestamp,
};
use serde::Deserialize;

use crate::error::{Result, StoreError};
use crate::ingest::{parse_jsonl, parse_junit};
use crate::store::Store;

pub const REQUIREMENTS_C1: &str = include_str!("../fixtures/case-study/requirements-c1.md");
pub const REQUIREMENTS_C2: &str = include_str!("../fixtures/case-study/requirements-c2.md");
pub const RESULTS_C1: &str = include_str!("../fixtures/case-study/c1-results.jsonl");
pub const RESULTS_C2_PASS0: &str = include_str!("../fixtures/case-study/c2-pass0.jsonl");
pub const RESULTS_C2_PASS1: &str = include_str!("../fixtures/case-study/c2-pass1.xml");
pub const FINDINGS_C2: &str = include_str!("../fixtures/case-study/findings-c2.json");
pub const TRANSCRIPTS: &str = include_str!("../fixtures/case-study/transcripts.json");

pub const PROVIDER_ID: &str = "scripted";
pub const LEAD: &str = "project-lead";
pub const INTENT_C1: &str = "build a HIL test system for this analyzer";
pub const INTENT_C2: &str =
    "Upgrade to vendor-agnostic device abstraction, add multi-cycle traceability, and harden compliance artifacts";
pub const G1_RATIONALE_C1: &str = "The project lead approved the Blueprint";
/// 2026-02-02T09:00:00Z
pub const START: Timestamp = Timestamp::from_unix(1_770_022_800);
const STEP_SECS: i64 = 60;
const WINDOW_TOKENS: u64 = 200_000;

/// Something that applies envelopes: the in-memory aggregate or the store.
pub trait Executor {
    fn project(&self) -> &Project;
    fn execute(&mut self, env: Envelope) -> Result<()>;
}

impl Executor for Project {
    fn project(&self) -> &Project {
        self
    }

    fn execute(&mut self, env: Envelope) -> Result<()> {
        self.apply(env)?;
        Ok(())
    }
}

impl Executor for Store {
    fn project(&self) -> &Project {
        Store::project(self)
    }

    fn execute(&mut self, env: Envelope) -> Result<()> {
        Store::execute(self, env).map(|_| ())
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct FindingScript {
    pub severity: Severity,
    pub description: String,
    pub resolution: String,
}

fn fixture_err(name: &str, e: impl ToString) -> StoreError {
    StoreError::Parse { source_name: name.into(), reason: e.to_string() }
}

pub fn scripted_provider() -> Result<ScriptedProvider> {
    serde_json::from_str(TRANSCRIPTS).map_err(|e| fixture_err("transcripts.json", e))
}

pub fn findings_script() -> Result<Vec<FindingScript>> {
    serde_json::from_str(FINDINGS_C2).map_err(|e| fixture_err("findings-c2.json", e))
}

pub fn registry() -> Result<ProviderRegistry> {
    let mut r = ProviderRegistry::new();
    r.register(PROVIDER_ID, scripted_provider()?);
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    /// Resolve the four MINOR findings during rework instead of carrying
    /// them into the risk register.
    pub resolve_minor: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { resolve_minor: true }
    }
}

/// Where a partial replay stops. Each stage includes the earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    /// C1 released and closed.
    Cycle1,
    /// C2 in Rework with the six MAJOR findings open.
    Cycle2Findings,
    /// C2 at Gate 2, pending the project lead's decision.
    Cycle2Gate2,
    /// C2 released and closed.
    Complete,
}

pub struct Driver<'a, E: Executor> {
    pub exec: &'a mut E,
    registry: ProviderRegistry,
    clock: Timestamp,
    options: Options,
}

fn requirement_refs(p: &Project) -> Vec<ContextEntry> {
    p.matrix.current().map(|r| ContextEntry::new(EntryKind::RequirementRef, r.id.to_string(), 400)).collect()
}

fn entry(kind: EntryKind, reference: &str, tokens: u64) -> ContextEntry {
    ContextEntry::new(kind, reference, tokens)
}

impl<'a, E: Executor> Driver<'a, E> {
    pub fn new(exec: &'a mut E, options: Options) -> Result<Self> {
        let clock = exec.project().change_log.last().map_or(START, |e| e.at.max(START));
        Ok(Driver { exec, registry: registry()?, clock, options })
    }

    fn tick(&mut self) -> Timestamp {
        self.clock = self.clock.plus_secs(STEP_SECS);
        self.clock
    }

    fn run(&mut self, actor: Actor, command: Command, rationale: Option<&str>) -> Result<()> {
        let mut env = Envelope::new(actor, self.tick(), command);
        if let Some(r) = rationale {
            env = env.because(r);
        }
        self.exec.execute(env)
    }

    fn human(&mut self, command: Command, rationale: Option<&str>) -> Result<()> {
        self.run(Actor::human(LEAD), command, rationale)
    }

    fn agent(&mut self, role: AgentRole, command: Command, rationale: Option<&str>) -> Result<()> {
        self.run(Actor::Agent { role }, command, rationale)
    }

    fn session(&mut self, role: AgentRole, entries: Vec<ContextEntry>) -> Result<SessionId> {
        let id = self.exec.project().next_session_id()?;
        let manifest = ContextManifest::new(entries);
        self.agent(role, Command::SpawnSession { session_id: id.clone(), role, manifest, window_tokens: WINDOW_TOKENS }, None)?;
        let cmd = run_session(self.exec.project(), &self.registry, PROVIDER_ID, &id)?;
        self.agent(role, cmd, None)?;
        Ok(id)
    }

    fn advance(&mut self, role: AgentRole, event: Event, rationale: &str) -> Result<()> {
        self.agent(role, Command::Advance { event }, Some(rationale))
    }

    fn gate(&mut self, gate: GateId, rationale: &str) -> Result<()> {
        self.human(Command::GateDecision { gate, decision: Decision::Approve, rationale: rationale.into() }, None)
    }

    fn direct(&mut self, note: &str) -> Result<()> {
        self.human(Command::DirectSynthesis { note: note.into() }, None)
    }

    fn ingest(&mut self, source: &str, records: Vec<RawTestRecord>) -> Result<()> {
        self.agent(AgentRole::RedTeamVerifier, Command::IngestEvidence { source: source.into(), records }, None)
    }

    fn link(&mut self, links: &[(u32, &str)]) -> Result<()> {
        for (n, path) in links {
            let cmd = Command::LinkArtifacts { requirement: RequirementId::new(*n), artifacts: vec![(*path).into()] };
            self.agent(AgentRole::BuildAgent, cmd, None)?;
        }
        Ok(())
    }

    fn cycle(&self) -> Result<CycleId> {
        Ok(self.exec.project().open_cycle().ok_or(agilev_core::Error::NoOpenCycle)?.cycle_id)
    }

    /// Definition wave: intent, decomposition, feasibility, Gate 1.
    fn definition(&mut self, intent: &str, cr: Option<ChangeRequest>, blueprint: &str, g1: &str) -> Result<()> {
        self.human(Command::StartCycle { intent: intent.into(), change_request: cr }, None)?;
        let cycle = self.cycle()?;
        self.session(AgentRole::RequirementArchitect, vec![entry(EntryKind::ReportRef, &format!("intent/{cycle}.md"), 800)])?;
        let requirements = parse_requirements(blueprint)?;
        self.agent(AgentRole::RequirementArchitect, Command::RegisterRequirements { requirements }, None)?;
        self.advance(AgentRole::RequirementArchitect, Event::DecompositionComplete, "requirements carry measurable acceptance criteria")?;
        let refs = requirement_refs(self.exec.project());
        self.session(AgentRole::LogicGatekeeper, refs)?;
        let feasibility = if cycle == CycleId::FIRST {
            "Python 3.10+ and the saleae-automation SDK are available and compatible"
        } else {
            "change scope of the change request validated"
        };
        self.advance(AgentRole::LogicGatekeeper, Event::FeasibilityPass, feasibility)?;
        self.gate(GateId::G1, g1)
    }

    /// Synthesis wave: Build Agent and Test Designer in isolation.
    fn synthesis(&mut self, links: &[(u32, &str)]) -> Result<()> {
        let cycle = self.cycle()?;
        let refs = requirement_refs(self.exec.project());
        self.direct("Build Agent: implement the approved Blueprint under src/hil/")?;
        let mut build = refs.clone();
        build.push(entry(EntryKind::ReportRef, &format!("blueprint/feasibility-{cycle}.md"), 600));
        self.session(AgentRole::BuildAgent, build)?;
        self.link(links)?;
        self.direct("Test Designer: derive the suite from the requirements only")?;
        self.session(AgentRole::TestDesigner, refs)?;
        self.direct("Hand both outputs to the Red Team Verifier")?;
        self.advance(AgentRole::BuildAgent, Event::SynthesisComplete, "build and test-design sessions completed")
    }

    fn red_team(&mut self, extra: Option<&str>) -> Result<()> {
        let mut m = requirement_refs(self.exec.project());
        m.push(entry(EntryKind::TestRef, "tests/", 4_000));
        m.push(entry(EntryKind::SourceRef, "src/hil/", 6_000));
        if let Some(r) = extra {
            m.push(entry(EntryKind::ReportRef, r, 500));
        }
        self.session(AgentRole::RedTeamVerifier, m).map(|_| ())
    }

    fn release(&mut self) -> Result<()> {
        let cycle = self.cycle()?;
        let mut m = requirement_refs(self.exec.project());
        m.push(entry(EntryKind::ReportRef, &format!("reports/red-team-{cycle}-pass0.md"), 500));
        self.session(AgentRole::ComplianceAuditor, m)?;
        self.advance(AgentRole::ComplianceAuditor, Event::AuditComplete, "evidence package complete")?;
        self.gate(GateId::G2, &format!("{cycle} evidence reviewed; release approved"))?;
        self.human(Command::CloseCycle, None)
    }

    pub fn cycle1(&mut self) -> Result<()> {
        self.definition(INTENT_C1, None, REQUIREMENTS_C1, G1_RATIONALE_C1)?;
        self.synthesis(&[
            (1, "src/hil/device_interface.py"),
            (2, "src/hil/logic_analyzer.py"),
            (3, "src/hil/sync.py"),
            (4, "notebooks/capture_overview.ipynb"),
            (5, "src/hil/mock_device.py"),
            (6, "src/hil/results.py"),
            (7, "src/hil/device_manager.py"),
        ])?;
        self.agent(
            AgentRole::ComplianceAuditor,
            Command::PutMemory {
                key: "entrypoint/tests".into(),
                kind: MemoryKind::Entrypoint,
                body: "Tests run via pytest from the repository root; Mock Device mode needs no hardware.".into(),
                file_pointers: vec!["pyproject.toml".into(), "tests/conftest.py".into()],
            },
            None,
        )?;
        self.red_team(None)?;
        self.ingest("c1-results.jsonl", parse_jsonl(RESULTS_C1, "c1-results.jsonl")?)?;
        self.advance(AgentRole::RedTeamVerifier, Event::VerificationComplete, "every requirement passes; no findings")?;
        self.release()
    }

    pub fn cycle2_findings(&mut self) -> Result<()> {
        let cr = ChangeRequest::new(
            ChangeRequestId::new(1),
            "Agile V Skill Upgrade v1.3",
            "Vendor-agnostic device abstraction, multi-cycle traceability, hardened compliance artifacts",
        );
        self.definition(INTENT_C2, Some(cr), REQUIREMENTS_C2, "CR-0001 scope reviewed; Blueprint approved")?;
        self.synthesis(&[
            (1, "src/hil/device_interface.py"),
            (2, "src/hil/adapters/saleae.py"),
            (6, "src/hil/results.py"),
            (7, "src/hil/logging.py"),
            (8, "src/hil/state_dir.py"),
        ])?;
        self.red_team(None)?;
        self.ingest("c2-pass0.jsonl", parse_jsonl(RESULTS_C2_PASS0, "c2-pass0.jsonl")?)?;
        for f in findings_script()? {
            let cmd = Command::RecordFinding { severity: f.severity, description: f.description };
            self.agent(AgentRole::RedTeamVerifier, cmd, None)?;
        }
        self.advance(AgentRole::RedTeamVerifier, Event::VerificationComplete, "6 MAJOR findings open")
    }

    pub fn cycle2_to_gate2(&mut self) -> Result<()> {
        let cycle = self.cycle()?;
        let mut m = vec![entry(EntryKind::ReportRef, &format!("reports/red-team-{cycle}-pass0.md"), 800)];
        m.push(entry(EntryKind::SourceRef, "src/hil/", 6_000));
        self.session(AgentRole::BuildAgent, m)?;
        let first = self.exec.project().findings.iter().filter(|f| f.cycle_id != cycle).count() as u32;
        for (i, f) in findings_script()?.into_iter().enumerate() {
            if f.severity == Severity::Major || self.options.resolve_minor {
                let cmd = Command::ResolveFinding { finding: FindingId::new(first + i as u32 + 1), note: f.resolution };
                self.agent(AgentRole::BuildAgent, cmd, None)?;
            }
        }
        self.advance(AgentRole::BuildAgent, Event::ReworkSubmitted, "MAJOR findings resolved")?;
        self.red_team(Some(&format!("reports/red-team-{cycle}-pass0.md")))?;
        self.ingest("c2-pass1.xml", parse_junit(RESULTS_C2_PASS1, "c2-pass1.xml")?)?;
        self.advance(AgentRole::RedTeamVerifier, Event::VerificationComplete, "54/54 tests pass; no MAJOR finding open")?;
        let mut m = requirement_refs(self.exec.project());
        m.push(entry(EntryKind::ReportRef, &format!("reports/red-team-{cycle}-pass1.md"), 500));
        self.session(AgentRole::ComplianceAuditor, m)?;
        self.advance(AgentRole::ComplianceAuditor, Event::AuditComplete, "evidence package complete")
    }

    pub fn cycle2_release(&mut self) -> Result<()> {
        self.gate(GateId::G2, "C2 evidence reviewed; 54/54 tests pass, all MAJOR findings resolved")?;
        self.human(Command::CloseCycle, None)
    }

    /// Runs every stage up to and including `stage`.
    pub fn run_to(&mut self, stage: Stage) -> Result<()> {
        self.cycle1()?;
        if stage >= Stage::Cycle2Findings {
            self.cycle2_findings()?;
        }
        if stage >= Stage::Cycle2Gate2 {
            self.cycle2_to_gate2()?;
        }
        if stage >= Stage::Complete {
            self.cycle2_release()?;
        }
        Ok(())
    }
}

/// The whole case study from an empty project.
pub fn run_case_study<E: Executor>(exec: &mut E, options: Options) -> Result<()> {
    Driver::new(exec, options)?.run_to(Stage::Complete)
}
