//! Model providers: one synchronous request/response contract.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ContextManifest;
use crate::actor::AgentRole;
use crate::error::{Error, Result};
use crate::ids::{CycleId, SessionId};
use crate::workflow::TokenUsage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub session_id: SessionId,
    pub role: AgentRole,
    pub cycle: CycleId,
    /// Number of earlier sessions with the same role in the same cycle.
    pub occurrence: u32,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderResponse {
    /// Model identifier recorded on the cycle.
    pub model: String,
    pub text: String,
    /// Artifacts the session wrote, by reference.
    #[serde(default)]
    pub artifacts: Vec<String>,
    pub usage: TokenUsage,
}

pub trait Provider: Send + Sync {
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse>;
}

/// The session prompt: role, cycle and the manifest's references. File
/// contents are never inlined.
pub fn render_prompt(role: AgentRole, cycle: CycleId, manifest: &ContextManifest) -> String {
    let mut p = format!("role: {role}\ncycle: {cycle}\ncontext:\n");
    for e in &manifest.entries {
        let _ = writeln!(p, "- {} {}", e.kind, e.reference);
    }
    p
}

#[derive(Default)]
pub struct ProviderRegistry {
    providers: BTreeMap<String, Box<dyn Provider>>,
}

impl ProviderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, id: impl Into<String>, provider: impl Provider + 'static) {
        self.providers.insert(id.into(), Box::new(provider));
    }

    pub fn get(&self, id: &str) -> Result<&dyn Provider> {
        self.providers
            .get(id)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::ProviderUnavailable(id.into()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.providers.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedReply {
    pub model: String,
    pub text: String,
    #[serde(default)]
    pub artifacts: Vec<String>,
    pub usage: TokenUsage,
}

/// Replays recorded replies keyed by role and cycle; the request's
/// `occurrence` picks among several replies for the same key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedProvider {
    replies: BTreeMap<String, Vec<ScriptedReply>>,
}

impl ScriptedProvider {
    pub fn key(role: AgentRole, cycle: CycleId) -> String {
        format!("{role}@{cycle}")
    }

    pub fn push(&mut self, role: AgentRole, cycle: CycleId, reply: ScriptedReply) {
        self.replies.entry(Self::key(role, cycle)).or_default().push(reply);
    }

    pub fn reply(&self, role: AgentRole, cycle: CycleId, occurrence: usize) -> Option<&ScriptedReply> {
        self.replies.get(&Self::key(role, cycle)).and_then(|r| r.get(occurrence))
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse> {
        let occurrence = request.occurrence as usize;
        let reply = self.reply(request.role, request.cycle, occurrence).ok_or_else(|| {
            Error::ProviderFailure(format!(
                "no scripted reply for {} (occurrence {occurrence})",
                Self::key(request.role, request.cycle)
            ))
        })?;
        Ok(ProviderResponse {
            model: reply.model.clone(),
            text: reply.text.clone(),
            artifacts: reply.artifacts.clone(),
            usage: reply.usage,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{ContextEntry, EntryKind};
    use alloc::vec;

    #[test]
    fn prompt_lists_references_only() {
        let m = ContextManifest::new(vec![ContextEntry::new(EntryKind::RequirementRef, "REQ-0001", 100)]);
        assert_eq!(
            render_prompt(AgentRole::TestDesigner, CycleId::FIRST, &m),
            "role: test-designer\ncycle: C1\ncontext:\n- requirement-ref REQ-0001\n"
        );
    }

    #[test]
    fn registry_reports_unknown_ids() {
        let reg = ProviderRegistry::new();
        assert!(matches!(reg.get("gpt-x"), Err(Error::ProviderUnavailable(id)) if id == "gpt-x"));
    }

    #[test]
    fn scripted_replies_by_role_and_cycle() {
        let mut p = ScriptedProvider::default();
        p.push(
            AgentRole::BuildAgent,
            CycleId::FIRST,
            ScriptedReply { model: "m".into(), text: "done".into(), artifacts: vec!["src/".into()], usage: TokenUsage { input: 5, output: 1 } },
        );
        let req = |occurrence| ProviderRequest {
            session_id: SessionId::for_cycle(CycleId::FIRST, 1),
            role: AgentRole::BuildAgent,
            cycle: CycleId::FIRST,
            occurrence,
            prompt: String::new(),
        };
        assert_eq!(p.complete(&req(0)).unwrap().text, "done");
        assert!(matches!(p.complete(&req(1)), Err(Error::ProviderFailure(_))));
    }
}
