//! Requirements and the cycle-aware traceability matrix.
//!
//! The matrix keeps one requirement snapshot per cycle. Registering a
//! decomposition overlays the drafts onto the previous cycle's snapshot and
//! classifies every requirement of the cycle as Added, Modified or Unchanged
//! by comparing content hashes of statement and acceptance criteria.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ids::{CycleId, RequirementId};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementDraft {
    pub id: RequirementId,
    pub title: String,
    pub statement: String,
    pub acceptance_criteria: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeStatus {
    Added,
    Modified,
    Unchanged,
}

impl core::fmt::Display for ChangeStatus {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        core::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: RequirementId,
    pub title: String,
    pub statement: String,
    pub acceptance_criteria: Vec<String>,
    pub introduced_cycle: CycleId,
    pub last_modified_cycle: CycleId,
    pub status_in_cycle: ChangeStatus,
    /// SHA-256 over statement and criteria, hex.
    pub content_hash: String,
}

/// Hash of the parts of a requirement whose change makes it "Modified".
pub fn content_hash(statement: &str, criteria: &[String]) -> String {
    let mut h = Sha256::new();
    // length-prefixed so that moving text between fields changes the hash
    for part in core::iter::once(statement).chain(criteria.iter().map(String::as_str)) {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Fail,
}

/// One executed test. `cycle` is mandatory; records without it are refused
/// at ingest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestEvidence {
    pub test_id: String,
    pub requirement_ids: Vec<RequirementId>,
    pub outcome: Outcome,
    pub cycle: CycleId,
    pub timestamp: Timestamp,
    /// Verification pass within `cycle` the record belongs to.
    #[serde(default)]
    pub pass_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLink {
    pub requirement_id: RequirementId,
    pub artifact_refs: Vec<String>,
    pub test_ids: Vec<String>,
    /// Cycle the test ids were taken from, `None` when uncovered.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cycle_id: Option<CycleId>,
}

impl TraceLink {
    pub fn is_uncovered(&self) -> bool {
        self.test_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixDelta {
    pub cycle: CycleId,
    pub added: Vec<RequirementId>,
    pub modified: Vec<RequirementId>,
    pub unchanged: Vec<RequirementId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleDiff {
    pub added: Vec<RequirementId>,
    pub modified: Vec<RequirementId>,
    pub unchanged: Vec<RequirementId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMetrics {
    pub requirement_pass_rate: f64,
    pub passing: usize,
    pub req_count: usize,
    pub test_count: usize,
    pub tests_per_req: f64,
    pub uncovered: Vec<RequirementId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMatrix {
    snapshots: BTreeMap<CycleId, BTreeMap<RequirementId, Requirement>>,
    #[serde(default)]
    artifacts: BTreeMap<RequirementId, BTreeSet<String>>,
    #[serde(default)]
    tests: BTreeMap<RequirementId, BTreeMap<CycleId, BTreeSet<String>>>,
}

impl TraceMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cycles(&self) -> impl Iterator<Item = CycleId> + '_ {
        self.snapshots.keys().copied()
    }

    pub fn latest_cycle(&self) -> Option<CycleId> {
        self.snapshots.keys().next_back().copied()
    }

    pub fn snapshot(&self, cycle: CycleId) -> Option<&BTreeMap<RequirementId, Requirement>> {
        self.snapshots.get(&cycle)
    }

    /// Requirement set of the newest cycle.
    pub fn current(&self) -> impl Iterator<Item = &Requirement> {
        self.snapshots.values().next_back().into_iter().flat_map(|s| s.values())
    }

    /// True when the id was registered in any cycle.
    pub fn knows(&self, id: RequirementId) -> bool {
        self.snapshots.values().any(|s| s.contains_key(&id))
    }

    fn baseline(&self, cycle: CycleId) -> Option<&BTreeMap<RequirementId, Requirement>> {
        self.snapshots.range(..cycle).next_back().map(|(_, s)| s)
    }

    /// Opens the snapshot for `cycle`, carrying the previous requirement set
    /// forward as Unchanged. No-op if it already exists.
    pub fn begin_cycle(&mut self, cycle: CycleId) -> Result<()> {
        if self.snapshots.contains_key(&cycle) {
            return Ok(());
        }
        if let Some(latest) = self.latest_cycle() {
            if latest > cycle {
                return Err(Error::BadOrder { from: latest, to: cycle });
            }
        }
        let carried = self
            .baseline(cycle)
            .map(|prev| {
                prev.iter()
                    .map(|(id, r)| {
                        let mut r = r.clone();
                        r.status_in_cycle = ChangeStatus::Unchanged;
                        (*id, r)
                    })
                    .collect()
            })
            .unwrap_or_default();
        self.snapshots.insert(cycle, carried);
        Ok(())
    }

    /// Registers a decomposition output for `cycle` and returns the status of
    /// every requirement of that cycle.
    pub fn register(&mut self, cycle: CycleId, drafts: &[RequirementDraft]) -> Result<MatrixDelta> {
        let mut seen = BTreeSet::new();
        for d in drafts {
            if !seen.insert(d.id) {
                return Err(Error::DuplicateId(d.id));
            }
            if d.acceptance_criteria.iter().all(|c| c.trim().is_empty()) {
                return Err(Error::EmptyCriteria(d.id));
            }
        }
        self.begin_cycle(cycle)?;

        let mut updates = Vec::with_capacity(drafts.len());
        let baseline = self.baseline(cycle);
        for d in drafts {
            let criteria: Vec<String> = d
                .acceptance_criteria
                .iter()
                .filter(|c| !c.trim().is_empty())
                .cloned()
                .collect();
            let hash = content_hash(&d.statement, &criteria);
            let prev = baseline.and_then(|b| b.get(&d.id));
            let (status, introduced, modified) = match prev {
                None => (ChangeStatus::Added, cycle, cycle),
                Some(p) if p.content_hash != hash => (ChangeStatus::Modified, p.introduced_cycle, cycle),
                Some(p) => (ChangeStatus::Unchanged, p.introduced_cycle, p.last_modified_cycle),
            };
            updates.push(Requirement {
                id: d.id,
                title: d.title.clone(),
                statement: d.statement.clone(),
                acceptance_criteria: criteria,
                introduced_cycle: introduced,
                last_modified_cycle: modified,
                status_in_cycle: status,
                content_hash: hash,
            });
        }
        let snapshot = self.snapshots.get_mut(&cycle).expect("begun above");
        for r in updates {
            snapshot.insert(r.id, r);
        }
        Ok(self.delta(cycle))
    }

    fn delta(&self, cycle: CycleId) -> MatrixDelta {
        let mut delta = MatrixDelta { cycle, added: Vec::new(), modified: Vec::new(), unchanged: Vec::new() };
        for r in self.snapshots.get(&cycle).into_iter().flat_map(|s| s.values()) {
            match r.status_in_cycle {
                ChangeStatus::Added => delta.added.push(r.id),
                ChangeStatus::Modified => delta.modified.push(r.id),
                ChangeStatus::Unchanged => delta.unchanged.push(r.id),
            }
        }
        delta
    }

    pub fn link_artifacts<I, S>(&mut self, requirement: RequirementId, refs: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if !self.knows(requirement) {
            return Err(Error::UnknownRequirement(requirement));
        }
        self.artifacts.entry(requirement).or_default().extend(refs.into_iter().map(Into::into));
        Ok(())
    }

    pub(crate) fn note_test(&mut self, requirement: RequirementId, cycle: CycleId, test_id: &str) {
        self.tests
            .entry(requirement)
            .or_default()
            .entry(cycle)
            .or_default()
            .insert(test_id.into());
    }

    /// Links for the requirement set of `as_of` (newest cycle when `None`).
    /// Test ids come from the newest cycle at or before `as_of` with evidence.
    pub fn trace_links(&self, as_of: Option<CycleId>) -> Vec<TraceLink> {
        let Some(cycle) = as_of.or_else(|| self.latest_cycle()) else {
            return Vec::new();
        };
        let Some(snapshot) = self.snapshots.get(&cycle) else {
            return Vec::new();
        };
        snapshot
            .keys()
            .map(|id| {
                let standing = self
                    .tests
                    .get(id)
                    .and_then(|by_cycle| by_cycle.range(..=cycle).next_back());
                TraceLink {
                    requirement_id: *id,
                    artifact_refs: self.artifacts.get(id).map(|s| s.iter().cloned().collect()).unwrap_or_default(),
                    test_ids: standing.map(|(_, t)| t.iter().cloned().collect()).unwrap_or_default(),
                    cycle_id: standing.map(|(c, _)| *c),
                }
            })
            .collect()
    }

    pub fn uncovered(&self, as_of: Option<CycleId>) -> Vec<RequirementId> {
        self.trace_links(as_of)
            .into_iter()
            .filter(TraceLink::is_uncovered)
            .map(|l| l.requirement_id)
            .collect()
    }

    /// Which requirements of `to` were added, modified or left unchanged
    /// relative to `from`.
    pub fn diff_cycles(&self, from: CycleId, to: CycleId) -> Result<CycleDiff> {
        let old = self.snapshots.get(&from).ok_or(Error::UnknownCycle(from))?;
        let new = self.snapshots.get(&to).ok_or(Error::UnknownCycle(to))?;
        if from >= to {
            return Err(Error::BadOrder { from, to });
        }
        let mut diff = CycleDiff { added: Vec::new(), modified: Vec::new(), unchanged: Vec::new() };
        for (id, r) in new {
            match old.get(id) {
                None => diff.added.push(*id),
                Some(o) if o.content_hash != r.content_hash => diff.modified.push(*id),
                Some(_) => diff.unchanged.push(*id),
            }
        }
        Ok(diff)
    }

    pub fn coverage_metrics(&self, evidence: &[TestEvidence]) -> Result<CoverageMetrics> {
        let cycle = self.latest_cycle().ok_or(Error::NoRequirements)?;
        self.coverage_metrics_as_of(evidence, cycle)
    }

    /// Requirement-level pass rate over the requirement set of `as_of`.
    ///
    /// A requirement passes iff it has at least one linked test and, in the
    /// newest cycle holding evidence for it, the latest outcome of every
    /// linked test is Pass.
    pub fn coverage_metrics_as_of(&self, evidence: &[TestEvidence], as_of: CycleId) -> Result<CoverageMetrics> {
        let snapshot = self.snapshots.get(&as_of).ok_or(Error::UnknownCycle(as_of))?;
        if snapshot.is_empty() {
            return Err(Error::NoRequirements);
        }
        for e in evidence {
            if !self.snapshots.contains_key(&e.cycle) && e.cycle <= as_of {
                return Err(Error::UnknownCycle(e.cycle));
            }
        }

        let mut passing = 0;
        let mut all_tests = BTreeSet::new();
        let mut uncovered = Vec::new();
        for id in snapshot.keys() {
            let linked = || evidence.iter().enumerate().filter(|(_, e)| e.cycle <= as_of && e.requirement_ids.contains(id));
            let Some(latest) = linked().map(|(_, e)| e.cycle).max() else {
                uncovered.push(*id);
                continue;
            };
            // latest record per test id within the standing cycle
            let mut per_test: BTreeMap<&str, ((u32, Timestamp, usize), Outcome)> = BTreeMap::new();
            for (i, e) in linked().filter(|(_, e)| e.cycle == latest) {
                let key = (e.pass_index, e.timestamp, i);
                let slot = per_test.entry(&e.test_id).or_insert((key, e.outcome));
                if key > slot.0 {
                    *slot = (key, e.outcome);
                }
            }
            if per_test.values().all(|(_, o)| *o == Outcome::Pass) {
                passing += 1;
            }
            all_tests.extend(per_test.keys().copied());
        }

        let req_count = snapshot.len();
        Ok(CoverageMetrics {
            requirement_pass_rate: passing as f64 / req_count as f64,
            passing,
            req_count,
            test_count: all_tests.len(),
            tests_per_req: all_tests.len() as f64 / req_count as f64,
            uncovered,
        })
    }
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

/// Markdown traceability matrix (`ATM.md`) for the newest cycle.
pub fn render_matrix(matrix: &TraceMatrix) -> String {
    render_matrix_as_of(matrix, matrix.latest_cycle())
}

/// Markdown traceability matrix with one status column per cycle up to `as_of`.
pub fn render_matrix_as_of(matrix: &TraceMatrix, as_of: Option<CycleId>) -> String {
    let cycles: Vec<CycleId> = matrix.cycles().filter(|c| as_of.is_none_or(|a| *c <= a)).collect();
    let mut out = String::from("# Artifact Traceability Matrix\n\n| Requirement | Title |");
    for c in &cycles {
        let _ = write!(out, " {c} |");
    }
    out.push_str(" Artifacts | Tests | Coverage |\n|---|---|");
    for _ in &cycles {
        out.push_str("---|");
    }
    out.push_str("---|---|---|\n");

    let Some(last) = cycles.last().copied() else {
        return out;
    };
    let snapshot = matrix.snapshot(last).expect("listed cycle");
    for link in matrix.trace_links(Some(last)) {
        let req = &snapshot[&link.requirement_id];
        let _ = write!(out, "| {} | {} |", req.id, md_cell(&req.title));
        for c in &cycles {
            match matrix.snapshot(*c).and_then(|s| s.get(&req.id)) {
                Some(r) => {
                    let _ = write!(out, " {} |", r.status_in_cycle);
                }
                None => out.push_str(" - |"),
            }
        }
        let coverage = match link.cycle_id {
            Some(c) => format!("covered ({c})"),
            None => String::from("UNCOVERED"),
        };
        let _ = writeln!(
            out,
            " {} | {} | {} |",
            md_cell(&link.artifact_refs.join(", ")),
            link.test_ids.len(),
            coverage
        );
    }
    out
}

/// Markdown requirements specification for one cycle.
pub fn render_requirements(matrix: &TraceMatrix, cycle: CycleId) -> Result<String> {
    let snapshot = matrix.snapshot(cycle).ok_or(Error::UnknownCycle(cycle))?;
    let mut out = format!("# Requirements Specification ({cycle})\n");
    for r in snapshot.values() {
        let _ = write!(
            out,
            "\n## {}: {}\n\nStatus in {cycle}: {} (introduced {}, last modified {})\n\n{}\n\nAcceptance criteria:\n",
            r.id, r.title, r.status_in_cycle, r.introduced_cycle, r.last_modified_cycle, r.statement
        );
        for c in &r.acceptance_criteria {
            let _ = writeln!(out, "- {c}");
        }
    }
    Ok(out)
}

/// Parses decomposition output written as Markdown blocks:
///
/// ```text
/// ### REQ-0001: Mock device mode
/// Statement: The system shall ...
/// Acceptance criteria:
/// - first measurable criterion
/// ```
pub fn parse_requirements(text: &str) -> Result<Vec<RequirementDraft>> {
    let mut drafts: Vec<RequirementDraft> = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        let heading = line.trim_start_matches('#').trim_start();
        if line.starts_with('#') && heading.starts_with("REQ-") {
            let (id, title) = heading.split_once(':').unwrap_or((heading, ""));
            drafts.push(RequirementDraft {
                id: id.trim().parse()?,
                title: title.trim().into(),
                statement: String::new(),
                acceptance_criteria: Vec::new(),
            });
            continue;
        }
        let Some(current) = drafts.last_mut() else { continue };
        if let Some(s) = line.strip_prefix("Statement:") {
            current.statement = s.trim().into();
        } else if let Some(c) = line.strip_prefix("- ").or_else(|| line.strip_prefix("* ")) {
            current.acceptance_criteria.push(c.trim().into());
        }
    }
    for d in &drafts {
        if d.statement.is_empty() {
            return Err(Error::Parse(format!("{} has no statement", d.id)));
        }
    }
    Ok(drafts)
}
