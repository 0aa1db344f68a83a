use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The six agent roles of the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentRole {
    RequirementArchitect,
    LogicGatekeeper,
    BuildAgent,
    TestDesigner,
    RedTeamVerifier,
    ComplianceAuditor,
}

impl AgentRole {
    pub const ALL: [AgentRole; 6] = [
        AgentRole::RequirementArchitect,
        AgentRole::LogicGatekeeper,
        AgentRole::BuildAgent,
        AgentRole::TestDesigner,
        AgentRole::RedTeamVerifier,
        AgentRole::ComplianceAuditor,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            AgentRole::RequirementArchitect => "requirement-architect",
            AgentRole::LogicGatekeeper => "logic-gatekeeper",
            AgentRole::BuildAgent => "build-agent",
            AgentRole::TestDesigner => "test-designer",
            AgentRole::RedTeamVerifier => "red-team-verifier",
            AgentRole::ComplianceAuditor => "compliance-auditor",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Parse(alloc::format!("unknown agent role {s:?}")))
    }
}

/// Who made a decision. Every change-log entry carries one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Actor {
    Human { name: String },
    Agent { role: AgentRole },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActorKind {
    Human,
    Agent,
}

impl Actor {
    pub fn human(name: impl Into<String>) -> Self {
        Actor::Human { name: name.into() }
    }

    pub const fn agent(role: AgentRole) -> Self {
        Actor::Agent { role }
    }

    pub fn kind(&self) -> ActorKind {
        match self {
            Actor::Human { .. } => ActorKind::Human,
            Actor::Agent { .. } => ActorKind::Agent,
        }
    }

    pub fn is_human(&self) -> bool {
        matches!(self, Actor::Human { .. })
    }

    pub fn role(&self) -> Option<AgentRole> {
        match self {
            Actor::Agent { role } => Some(*role),
            Actor::Human { .. } => None,
        }
    }

    /// Rejects anonymous humans.
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            Actor::Human { name } if name.trim().is_empty() => Err(Error::MissingActor),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Human { name } => write!(f, "human:{name}"),
            Actor::Agent { role } => write!(f, "agent:{role}"),
        }
    }
}

impl fmt::Display for ActorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActorKind::Human => "Human",
            ActorKind::Agent => "Agent",
        })
    }
}

/// Parses `human:<name>` or `agent:<role>`; a bare name is a human.
impl FromStr for Actor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let actor = if let Some(role) = s.strip_prefix("agent:") {
            Actor::agent(role.parse()?)
        } else {
            Actor::human(s.strip_prefix("human:").unwrap_or(s))
        };
        actor.validate()?;
        Ok(actor)
    }
}
