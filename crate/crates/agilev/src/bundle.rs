//! Per-cycle evidence bundle: a deterministic tar of the documents an
//! auditor asks for, plus a MANIFEST of SHA-256 digests.

use agilev_core::compliance::decision_log;
use agilev_core::traceability::{render_matrix_as_of, render_requirements};
use agilev_core::{CycleId, Project};
use sha2::{Digest, Sha256};

use crate::canonical;
use crate::error::{Result, StoreError};

pub const MANIFEST: &str = "MANIFEST";

/// Names of the bundled documents, in archive order (MANIFEST last).
pub const ENTRIES: [&str; 7] = [
    "ATM.md",
    "config.json",
    "decision-log.md",
    "requirements-spec.md",
    "risk-register.json",
    "test-log.jsonl",
    "validation-summary.md",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceBundle {
    pub cycle: CycleId,
    /// Unix seconds used as every entry's mtime: the cycle's close time.
    pub mtime: u64,
    pub entries: Vec<(String, Vec<u8>)>,
}

pub fn evidence_bundle(project: &Project, cycle: CycleId) -> Result<EvidenceBundle> {
    let c = project.cycle(cycle)?;
    let closed_at = c.closed_at.ok_or(StoreError::CycleOpen(cycle))?;
    let summary = project
        .summaries
        .get(&cycle)
        .ok_or_else(|| StoreError::Document { document: "validation-summary.json".into(), reason: format!("no summary for {cycle}") })?;

    let risks: Vec<_> = project.risks.iter().filter(|r| r.cycle_id <= cycle).collect();
    let mut test_log = String::new();
    for e in project.evidence.iter().filter(|e| e.cycle == cycle) {
        test_log.push_str(&canonical::to_string(e));
        test_log.push('\n');
    }
    let docs: [(&str, String); 7] = [
        ("ATM.md", render_matrix_as_of(&project.matrix, Some(cycle))),
        ("config.json", canonical::to_pretty(&project.config)),
        ("decision-log.md", decision_log(project, cycle)?),
        ("requirements-spec.md", render_requirements(&project.matrix, cycle)?),
        ("risk-register.json", canonical::to_pretty(&risks)),
        ("test-log.jsonl", test_log),
        ("validation-summary.md", summary.render_markdown()),
    ];
    let mut entries: Vec<(String, Vec<u8>)> = docs.into_iter().map(|(n, s)| (n.to_string(), s.into_bytes())).collect();
    let manifest: String = entries.iter().map(|(n, b)| format!("{}  {n}\n", hex::encode(Sha256::digest(b)))).collect();
    entries.push((MANIFEST.into(), manifest.into_bytes()));
    Ok(EvidenceBundle { cycle, mtime: closed_at.unix().max(0) as u64, entries })
}

impl EvidenceBundle {
    /// Byte-identical for identical inputs: fixed order, owner, mode and mtime.
    pub fn to_tar(&self) -> Vec<u8> {
        let mut builder = tar::Builder::new(Vec::new());
        builder.mode(tar::HeaderMode::Deterministic);
        let dir = format!("evidence-{}", self.cycle);
        for (name, bytes) in &self.entries {
            let mut h = tar::Header::new_ustar();
            h.set_size(bytes.len() as u64);
            h.set_mode(0o644);
            h.set_mtime(self.mtime);
            h.set_uid(0);
            h.set_gid(0);
            h.set_entry_type(tar::EntryType::Regular);
            builder
                .append_data(&mut h, format!("{dir}/{name}"), bytes.as_slice())
                .expect("writing to a Vec cannot fail");
        }
        builder.into_inner().expect("writing to a Vec cannot fail")
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}
