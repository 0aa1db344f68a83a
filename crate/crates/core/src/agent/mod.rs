//! Role-typed agent sessions.
//!
//! A session sees exactly its [`ContextManifest`]: a list of references with
//! token estimates, never inlined content. Spawning checks two things:
//!
//! * role isolation: the Test Designer works from requirements (and memory)
//!   only, and the Red Team Verifier never receives Build Agent context,
//!   neither directly nor through reports or memory derived from it;
//! * the token budget of the manifest against the role's cap.

mod memory;
mod provider;
mod secret;
mod waves;

pub use memory::{MemoryEntry, MemoryKind, MemoryStore};
pub use provider::{
    render_prompt, Provider, ProviderRegistry, ProviderRequest, ProviderResponse, ScriptedProvider, ScriptedReply,
};
pub use secret::screen_secrets;
pub use waves::{plan_waves, Task};

use alloc::collections::{BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::actor::{Actor, AgentRole};
use crate::error::{Error, Result};
use crate::ids::{CycleId, SessionId};
use crate::workflow::TokenUsage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    RequirementRef,
    SourceRef,
    TestRef,
    BuildSessionRef,
    MemoryRef,
    ReportRef,
}

impl EntryKind {
    pub const ALL: [EntryKind; 6] = [
        EntryKind::RequirementRef,
        EntryKind::SourceRef,
        EntryKind::TestRef,
        EntryKind::BuildSessionRef,
        EntryKind::MemoryRef,
        EntryKind::ReportRef,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            EntryKind::RequirementRef => "requirement-ref",
            EntryKind::SourceRef => "source-ref",
            EntryKind::TestRef => "test-ref",
            EntryKind::BuildSessionRef => "build-session-ref",
            EntryKind::MemoryRef => "memory-ref",
            EntryKind::ReportRef => "report-ref",
        }
    }

    /// Kinds that carry another session's distilled context rather than a
    /// deliverable.
    const fn is_derived_context(self) -> bool {
        matches!(self, EntryKind::ReportRef | EntryKind::MemoryRef)
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parse(alloc::format!("unknown context entry kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub kind: EntryKind,
    /// Path or id; never the referenced content itself.
    pub reference: String,
    pub estimated_tokens: u64,
}

impl ContextEntry {
    pub fn new(kind: EntryKind, reference: impl Into<String>, estimated_tokens: u64) -> Self {
        ContextEntry { kind, reference: reference.into(), estimated_tokens }
    }
}

const MAX_REFERENCE_LEN: usize = 512;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextManifest {
    pub entries: Vec<ContextEntry>,
}

impl ContextManifest {
    pub fn new(entries: Vec<ContextEntry>) -> Self {
        ContextManifest { entries }
    }

    pub fn total_tokens(&self) -> u64 {
        self.entries.iter().map(|e| e.estimated_tokens).sum()
    }

    /// Every entry must look like a reference: one line, bounded length.
    pub fn check_references(&self) -> Result<()> {
        for e in &self.entries {
            let r = &e.reference;
            if r.trim().is_empty() || r.len() > MAX_REFERENCE_LEN || r.contains(['\n', '\r']) {
                return Err(Error::InlineContent(r.chars().take(40).collect()));
            }
        }
        Ok(())
    }
}

/// Default token estimate for a referenced file: one token per four bytes.
pub const fn estimate_tokens(byte_len: u64) -> u64 {
    byte_len.div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetCaps {
    pub orchestrator: f64,
    pub sub_agent: f64,
}

impl Default for BudgetCaps {
    fn default() -> Self {
        BudgetCaps { orchestrator: 0.15, sub_agent: 0.50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetClass {
    Orchestrator,
    SubAgent,
}

impl BudgetCaps {
    pub fn cap(&self, class: BudgetClass) -> f64 {
        match class {
            BudgetClass::Orchestrator => self.orchestrator,
            BudgetClass::SubAgent => self.sub_agent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum BudgetVerdict {
    Ok { fraction: f64 },
    Violation { fraction: f64, cap: f64 },
}

impl BudgetVerdict {
    pub fn fraction(&self) -> f64 {
        match *self {
            BudgetVerdict::Ok { fraction } | BudgetVerdict::Violation { fraction, .. } => fraction,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, BudgetVerdict::Ok { .. })
    }
}

/// Share of a `window_tokens` context the manifest would occupy, against the cap of `class`.
pub fn budget_check(manifest: &ContextManifest, window_tokens: u64, class: BudgetClass, caps: &BudgetCaps) -> BudgetVerdict {
    let used = manifest.total_tokens();
    let fraction = if used == 0 {
        0.0
    } else if window_tokens == 0 {
        f64::INFINITY
    } else {
        used as f64 / window_tokens as f64
    };
    let cap = caps.cap(class);
    if fraction <= cap {
        BudgetVerdict::Ok { fraction }
    } else {
        BudgetVerdict::Violation { fraction, cap }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Spawned,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSession {
    pub session_id: SessionId,
    pub role: AgentRole,
    pub cycle_id: CycleId,
    pub manifest: ContextManifest,
    pub window_tokens: u64,
    pub budget_fraction: f64,
    /// Relative to the state directory.
    pub transcript_ref: String,
    pub status: SessionStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub provider: Option<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub usage: TokenUsage,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub transcript: Option<Transcript>,
}

/// Where a referenced item came from, as far as the session log knows.
#[derive(Debug, Clone, Copy)]
enum Producer<'a> {
    Session(&'a AgentSession),
    Author(&'a Actor),
}

/// Read-only view over the session log and memory used to resolve references.
#[derive(Clone, Copy)]
pub struct SessionLog<'a> {
    pub sessions: &'a [AgentSession],
    pub memory: &'a MemoryStore,
}

impl<'a> SessionLog<'a> {
    fn producers(&self, entry: &ContextEntry) -> Vec<Producer<'a>> {
        let mut out = Vec::new();
        match entry.kind {
            EntryKind::BuildSessionRef => {
                out.extend(self.sessions.iter().filter(|s| s.session_id.as_str() == entry.reference).map(Producer::Session));
            }
            EntryKind::MemoryRef => {
                let key = entry.reference.strip_prefix("memory:").unwrap_or(&entry.reference);
                if let Some(m) = self.memory.get(key) {
                    out.push(Producer::Author(&m.author));
                }
            }
            _ => {}
        }
        if entry.kind.is_derived_context() {
            out.extend(self.sessions.iter().filter(|s| s.outputs.contains(&entry.reference)).map(Producer::Session));
        }
        out
    }

    /// All entries reachable from `manifest` by following derived context
    /// (reports, memory, session references) back to the manifests of the
    /// sessions that produced it.
    pub fn input_closure(&self, manifest: &ContextManifest) -> Vec<ContextEntry> {
        let mut seen: BTreeSet<(EntryKind, String)> = BTreeSet::new();
        let mut queue: VecDeque<ContextEntry> = manifest.entries.iter().cloned().collect();
        let mut out = Vec::new();
        while let Some(entry) = queue.pop_front() {
            if !seen.insert((entry.kind, entry.reference.clone())) {
                continue;
            }
            for p in self.producers(&entry) {
                if let Producer::Session(s) = p {
                    queue.extend(s.manifest.entries.iter().cloned());
                }
            }
            out.push(entry);
        }
        out
    }

    /// True when the entry is Build Agent context: a build session reference
    /// or a report/memory item a Build Agent produced.
    pub fn is_build_output(&self, entry: &ContextEntry) -> bool {
        if entry.kind == EntryKind::BuildSessionRef {
            return true;
        }
        entry.kind.is_derived_context()
            && self.producers(entry).into_iter().any(|p| match p {
                Producer::Session(s) => s.role == AgentRole::BuildAgent,
                Producer::Author(a) => a.role() == Some(AgentRole::BuildAgent),
            })
    }
}

fn violation(role: AgentRole, entry: &ContextEntry, rule: &'static str) -> Error {
    Error::IsolationViolation { role, kind: entry.kind, reference: entry.reference.clone(), rule }
}

/// Role isolation rules.
pub fn check_isolation(role: AgentRole, manifest: &ContextManifest, log: SessionLog<'_>) -> Result<()> {
    match role {
        AgentRole::TestDesigner => {
            if let Some(e) = manifest
                .entries
                .iter()
                .find(|e| !matches!(e.kind, EntryKind::RequirementRef | EntryKind::MemoryRef))
            {
                return Err(violation(role, e, "test design works from requirements only, never from the code"));
            }
        }
        AgentRole::RedTeamVerifier => {
            if let Some(e) = manifest.entries.iter().find(|e| e.kind == EntryKind::BuildSessionRef) {
                return Err(violation(role, e, "verification never inherits Build Agent context"));
            }
            if let Some(e) = log.input_closure(manifest).iter().find(|e| log.is_build_output(e)) {
                return Err(violation(role, e, "input closure reaches Build Agent context"));
            }
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn req(n: u32) -> ContextEntry {
        ContextEntry::new(EntryKind::RequirementRef, alloc::format!("REQ-{n:04}"), 500)
    }

    fn session(id: &str, role: AgentRole, entries: Vec<ContextEntry>, outputs: Vec<&str>) -> AgentSession {
        AgentSession {
            session_id: id.parse().unwrap(),
            role,
            cycle_id: CycleId::FIRST,
            manifest: ContextManifest::new(entries),
            window_tokens: 100_000,
            budget_fraction: 0.0,
            transcript_ref: String::new(),
            status: SessionStatus::Completed,
            provider: None,
            outputs: outputs.into_iter().map(Into::into).collect(),
            usage: TokenUsage::default(),
            transcript: None,
        }
    }

    #[test]
    fn test_designer_accepts_requirements() {
        let memory = MemoryStore::default();
        let log = SessionLog { sessions: &[], memory: &memory };
        let m = ContextManifest::new((1..=7).map(req).collect());
        assert!(check_isolation(AgentRole::TestDesigner, &m, log).is_ok());
    }

    #[test]
    fn test_designer_rejects_source() {
        let memory = MemoryStore::default();
        let log = SessionLog { sessions: &[], memory: &memory };
        let m = ContextManifest::new(vec![req(1), ContextEntry::new(EntryKind::SourceRef, "src/hil/", 900)]);
        let err = check_isolation(AgentRole::TestDesigner, &m, log).unwrap_err();
        assert!(matches!(err, Error::IsolationViolation { kind: EntryKind::SourceRef, ref reference, .. } if reference == "src/hil/"));
    }

    #[test]
    fn red_team_rejects_build_session() {
        let memory = MemoryStore::default();
        let log = SessionLog { sessions: &[], memory: &memory };
        let m = ContextManifest::new(vec![ContextEntry::new(EntryKind::BuildSessionRef, "S-C1-03", 10)]);
        assert!(matches!(
            check_isolation(AgentRole::RedTeamVerifier, &m, log),
            Err(Error::IsolationViolation { kind: EntryKind::BuildSessionRef, .. })
        ));
    }

    #[test]
    fn red_team_rejects_report_derived_from_build_context() {
        let memory = MemoryStore::default();
        let sessions = vec![
            session("S-C1-03", AgentRole::BuildAgent, vec![req(1)], vec!["src/hil/", "notes/build.md"]),
            session(
                "S-C1-05",
                AgentRole::ComplianceAuditor,
                vec![ContextEntry::new(EntryKind::BuildSessionRef, "S-C1-03", 10)],
                vec!["reports/audit.md"],
            ),
        ];
        let log = SessionLog { sessions: &sessions, memory: &memory };
        // deliverables under test are fine
        let ok = ContextManifest::new(vec![req(1), ContextEntry::new(EntryKind::SourceRef, "src/hil/", 10)]);
        assert!(check_isolation(AgentRole::RedTeamVerifier, &ok, log).is_ok());
        // a build report is not
        let direct = ContextManifest::new(vec![ContextEntry::new(EntryKind::ReportRef, "notes/build.md", 10)]);
        assert!(check_isolation(AgentRole::RedTeamVerifier, &direct, log).is_err());
        // nor is a report whose producer saw the build session
        let indirect = ContextManifest::new(vec![ContextEntry::new(EntryKind::ReportRef, "reports/audit.md", 10)]);
        assert!(check_isolation(AgentRole::RedTeamVerifier, &indirect, log).is_err());
    }

    #[test]
    fn red_team_rejects_memory_written_by_build_agent() {
        let mut memory = MemoryStore::default();
        memory
            .put(MemoryEntry {
                key: "build/notes".into(),
                kind: MemoryKind::DecisionRationale,
                body: "chose the async driver".into(),
                file_pointers: vec![],
                cycle_id: CycleId::FIRST,
                author: Actor::agent(AgentRole::BuildAgent),
            })
            .unwrap();
        let log = SessionLog { sessions: &[], memory: &memory };
        let m = ContextManifest::new(vec![ContextEntry::new(EntryKind::MemoryRef, "memory:build/notes", 10)]);
        assert!(check_isolation(AgentRole::RedTeamVerifier, &m, log).is_err());
        assert!(check_isolation(AgentRole::TestDesigner, &m, log).is_ok());
    }

    #[test]
    fn budget_caps() {
        let caps = BudgetCaps::default();
        let m = |t| ContextManifest::new(vec![ContextEntry::new(EntryKind::ReportRef, "plan.md", t)]);
        assert!(budget_check(&m(12_000), 100_000, BudgetClass::Orchestrator, &caps).is_ok());
        let v = budget_check(&m(55_000), 100_000, BudgetClass::SubAgent, &caps);
        assert_eq!(v, BudgetVerdict::Violation { fraction: 0.55, cap: 0.5 });
        assert_eq!(budget_check(&m(50_000), 100_000, BudgetClass::SubAgent, &caps), BudgetVerdict::Ok { fraction: 0.5 });
        assert_eq!(
            budget_check(&ContextManifest::default(), 100_000, BudgetClass::SubAgent, &caps),
            BudgetVerdict::Ok { fraction: 0.0 }
        );
    }

    #[test]
    fn inline_content_is_refused() {
        let m = ContextManifest::new(vec![ContextEntry::new(EntryKind::SourceRef, "fn main() {\n}", 3)]);
        assert!(matches!(m.check_references(), Err(Error::InlineContent(_))));
    }

    #[test]
    fn token_estimate_rounds_up() {
        assert_eq!(estimate_tokens(0), 0);
        assert_eq!(estimate_tokens(1), 1);
        assert_eq!(estimate_tokens(4000), 1000);
    }
}
