//! Command generators shared by the property, acceptance and store tests.
#![allow(dead_code)]

use agilev_core::traceability::{Outcome, RequirementDraft};
use agilev_core::verification::{RawTestRecord, Severity};
use agilev_core::workflow::ChangeRequest;
use agilev_core::{
    Actor, AgentRole, ChangeRequestId, Command, Decision, Envelope, Event, GateId, Phase, Project, RequirementId, Timestamp,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub const T0: Timestamp = Timestamp::from_unix(1_770_022_800);

pub fn lead() -> Actor {
    Actor::human("lead")
}

pub fn agent(role: AgentRole) -> Actor {
    Actor::Agent { role }
}

pub fn draft(n: u32, variant: u32) -> RequirementDraft {
    RequirementDraft {
        id: RequirementId::new(n),
        title: format!("requirement {n}"),
        statement: format!("statement {n} v{variant}"),
        acceptance_criteria: vec![format!("criterion {n}")],
    }
}

fn env(actor: Actor, command: Command) -> Envelope {
    let rationale = "because";
    Envelope::new(actor, T0, command).because(rationale)
}

fn first_open_finding(p: &Project) -> Option<agilev_core::FindingId> {
    let c = p.open_cycle()?.cycle_id;
    p.findings.iter().find(|f| f.cycle_id == c && f.status == agilev_core::verification::FindingStatus::Open).map(|f| f.id)
}

fn start(p: &Project) -> Command {
    let n = p.cycles.len() as u32;
    let change_request = (n > 0).then(|| ChangeRequest::new(ChangeRequestId::new(n), "change", "next cycle"));
    Command::StartCycle { intent: format!("intent {}", n + 1), change_request }
}

fn ingest(p: &Project, outcome: Outcome) -> Command {
    let cycle = p.open_cycle().map_or("C1".to_string(), |c| c.cycle_id.to_string());
    let records = p
        .matrix
        .current()
        .map(|r| RawTestRecord {
            test_id: format!("t-{}", r.id),
            req_ids: vec![r.id.to_string()],
            outcome,
            cycle: Some(cycle.clone()),
            duration: None,
            timestamp: None,
        })
        .collect();
    Command::IngestEvidence { source: "gen".into(), records }
}

fn gate(gate: GateId, decision: Decision) -> Command {
    Command::GateDecision { gate, decision, rationale: "reviewed".into() }
}

/// Every command the model checker tries from `p`.
pub fn moves(p: &Project) -> Vec<Envelope> {
    let mut out = vec![
        env(lead(), start(p)),
        env(agent(AgentRole::RequirementArchitect), Command::RegisterRequirements { requirements: vec![draft(1, p.cycles.len() as u32)] }),
        env(agent(AgentRole::RedTeamVerifier), ingest(p, Outcome::Pass)),
        env(agent(AgentRole::RedTeamVerifier), Command::RecordFinding { severity: Severity::Major, description: "major".into() }),
        env(agent(AgentRole::RedTeamVerifier), Command::RecordFinding { severity: Severity::Minor, description: "minor".into() }),
        env(lead(), Command::DirectSynthesis { note: "go".into() }),
        env(lead(), Command::CloseCycle),
        env(agent(AgentRole::ComplianceAuditor), gate(GateId::G2, Decision::Approve)),
    ];
    if let Some(f) = first_open_finding(p) {
        out.push(env(agent(AgentRole::BuildAgent), Command::ResolveFinding { finding: f, note: "fixed".into() }));
    }
    for e in Event::ALL {
        out.push(env(agent(AgentRole::BuildAgent), Command::Advance { event: e }));
    }
    for g in [GateId::G1, GateId::G2] {
        for d in [Decision::Approve, Decision::Reject] {
            out.push(env(lead(), gate(g, d)));
        }
    }
    out
}

fn registered(p: &Project, cycle: agilev_core::CycleId) -> bool {
    p.change_log.iter().any(|e| e.cycle == Some(cycle) && matches!(e.command, Command::RegisterRequirements { .. }))
}

/// The move that pushes the open cycle towards release.
pub fn progress_move<R: Rng>(p: &Project, rng: &mut R) -> Envelope {
    let Some(c) = p.open_cycle() else { return env(lead(), start(p)) };
    let a = |e| env(agent(AgentRole::BuildAgent), Command::Advance { event: e });
    match c.phase {
        Phase::Intent if !registered(p, c.cycle_id) => {
            let n = rng.gen_range(1..=4);
            let requirements = (1..=n).map(|i| draft(i, c.cycle_id.number())).collect();
            env(agent(AgentRole::RequirementArchitect), Command::RegisterRequirements { requirements })
        }
        Phase::Intent => a(Event::DecompositionComplete),
        Phase::Decomposition => a(Event::FeasibilityPass),
        Phase::Gate1 => env(lead(), gate(GateId::G1, if rng.gen_bool(0.8) { Decision::Approve } else { Decision::Reject })),
        Phase::Synthesis => a(Event::SynthesisComplete),
        Phase::Verification if rng.gen_bool(0.5) => {
            env(agent(AgentRole::RedTeamVerifier), ingest(p, if rng.gen_bool(0.8) { Outcome::Pass } else { Outcome::Fail }))
        }
        Phase::Verification => a(Event::VerificationComplete),
        Phase::Rework => match first_open_finding(p) {
            Some(f) if rng.gen_bool(0.8) => env(agent(AgentRole::BuildAgent), Command::ResolveFinding { finding: f, note: "fixed".into() }),
            _ => a(Event::ReworkSubmitted),
        },
        Phase::Audit => a(Event::AuditComplete),
        Phase::Gate2 => env(lead(), gate(GateId::G2, if rng.gen_bool(0.8) { Decision::Approve } else { Decision::Reject })),
        Phase::Released => env(lead(), Command::CloseCycle),
    }
}

/// Half progress, half uniformly random moves.
pub fn random_move<R: Rng>(p: &Project, rng: &mut R) -> Envelope {
    if rng.gen_bool(0.5) {
        progress_move(p, rng)
    } else {
        moves(p).choose(rng).expect("non-empty").clone()
    }
}

/// A project built from `steps` random moves; failed moves are skipped.
pub fn random_project<R: Rng>(rng: &mut R, steps: usize) -> Project {
    let mut p = Project::new(agilev_core::ProjectConfig::default());
    for _ in 0..steps {
        let e = random_move(&p, rng);
        let _ = p.apply(e);
    }
    p
}
