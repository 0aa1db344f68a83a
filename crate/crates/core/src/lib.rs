//! Core of the Agile V Infinity Loop engine: the cycle state machine, the
//! traceability matrix, agent-session isolation and budgets, Red Team
//! verification, regulatory mapping and the cost model.
//!
//! `no_std` with `alloc`. Persistence, the CLI and the HTTP service live in
//! the `agilev` crate.
#![no_std]

extern crate alloc;

pub mod actor;
pub mod agent;
pub mod compliance;
pub mod cost;
pub mod error;
pub mod ids;
pub mod project;
pub mod time;
pub mod traceability;
pub mod verification;
pub mod workflow;

pub use actor::{Actor, ActorKind, AgentRole};
pub use error::{Error, Result};
pub use ids::{ChangeRequestId, CycleId, FindingId, RequirementId, RiskId, SessionId};
pub use project::{ChangeLogEntry, Command, Envelope, Project, ProjectConfig};
pub use time::Timestamp;
pub use workflow::{Decision, Event, GateId, Phase};
