use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, screen_secrets, ContextEntry, EntryKind};
use crate::actor::Actor;
use crate::error::{Error, Result};
use crate::ids::CycleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryKind {
    Entrypoint,
    Command,
    Invariant,
    DecisionRationale,
}

impl core::str::FromStr for MemoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entrypoint" => Ok(MemoryKind::Entrypoint),
            "command" => Ok(MemoryKind::Command),
            "invariant" => Ok(MemoryKind::Invariant),
            "decision-rationale" => Ok(MemoryKind::DecisionRationale),
            _ => Err(Error::Parse(format!("unknown memory kind {s:?}"))),
        }
    }
}

/// A curated summary plus file pointers; never raw logs or secrets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub key: String,
    pub kind: MemoryKind,
    pub body: String,
    #[serde(default)]
    pub file_pointers: Vec<String>,
    pub cycle_id: CycleId,
    pub author: Actor,
}

impl MemoryEntry {
    pub fn as_context_entry(&self) -> ContextEntry {
        ContextEntry::new(EntryKind::MemoryRef, format!("memory:{}", self.key), estimate_tokens(self.body.len() as u64))
    }
}

/// Keyed memory store. Lookups return entries ordered by key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemoryStore {
    entries: BTreeMap<String, MemoryEntry>,
}

impl MemoryStore {
    /// Inserts or replaces the entry under its key.
    pub fn put(&mut self, entry: MemoryEntry) -> Result<()> {
        for text in core::iter::once(&entry.body).chain(&entry.file_pointers) {
            if let Some(pattern) = screen_secrets(text) {
                return Err(Error::SecretDetected(pattern));
            }
        }
        if entry.key.trim().is_empty() {
            return Err(Error::Parse("memory key must not be empty".into()));
        }
        self.entries.insert(entry.key.clone(), entry);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&MemoryEntry> {
        self.entries.get(key)
    }

    pub fn lookup(&self, kind: Option<MemoryKind>, key_prefix: Option<&str>) -> Vec<&MemoryEntry> {
        self.entries
            .values()
            .filter(|e| kind.is_none_or(|k| e.kind == k))
            .filter(|e| key_prefix.is_none_or(|p| e.key.starts_with(p)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
