//! The `.agile-v/` state directory.
//!
//! The change log is the single source of truth: every other document is a
//! snapshot derived from the replayed [`Project`] and rewritten atomically
//! after each command. `change-log.jsonl` and `approvals.jsonl` are
//! hash-chained and only ever appended to.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{ErrorKind, Write as _};
use std::path::{Path, PathBuf};

use agilev_core::agent::AgentSession;
use agilev_core::compliance::DocumentKind;
use agilev_core::project::{ChangeLogEntry, Command, Envelope, Project, ProjectConfig};
use agilev_core::traceability::{TestEvidence, TraceLink, TraceMatrix};
use agilev_core::verification::{Finding, RedTeamReport, RiskEntry, ValidationSummary};
use agilev_core::workflow::{ChangeRequest, CycleState, GateRecord, GateStatus};
use agilev_core::{ChangeRequestId, CycleId};
use agilev_core::agent::MemoryStore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canonical;
use crate::chain;
use crate::error::{Result, StoreError};

pub const STATE_DIR: &str = ".agile-v";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalEntry {
    /// Sequence number of the change-log entry that made the decision.
    pub change_log_seq: u64,
    pub record: GateRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclesDoc {
    pub cycles: Vec<CycleState>,
    pub change_requests: BTreeMap<ChangeRequestId, ChangeRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceabilityDoc {
    pub matrix: TraceMatrix,
    /// Links of the newest cycle.
    pub links: Vec<TraceLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedTeamDoc {
    pub findings: Vec<Finding>,
    pub reports: Vec<RedTeamReport>,
}

/// Snapshot documents other than the two logs, by relative path.
pub const CYCLES_DOC: &str = "cycles.json";
pub const TEST_LOG_DOC: &str = "test-log.json";
pub const MEMORY_DOC: &str = "memory.json";
pub const SESSIONS_DIR: &str = "sessions";

/// Gate decisions in change-log order, paired with the records they wrote.
pub fn approval_entries(project: &Project) -> Vec<ApprovalEntry> {
    let mut out = Vec::new();
    for c in &project.cycles {
        let decided = c.gate_records.iter().filter(|g| g.status != GateStatus::Pending);
        let decisions = project
            .change_log
            .iter()
            .filter(|e| e.cycle == Some(c.cycle_id) && matches!(e.command, Command::GateDecision { .. }));
        out.extend(decisions.zip(decided).map(|(e, g)| ApprovalEntry { change_log_seq: e.seq, record: g.clone() }));
    }
    out.sort_by_key(|a| a.change_log_seq);
    out
}

/// Summaries as persisted: frozen ones plus the live summary of an open
/// cycle that has reached Audit.
pub fn summaries(project: &Project) -> BTreeMap<CycleId, ValidationSummary> {
    let mut out = project.summaries.clone();
    if let Some(c) = project.open_cycle() {
        if let Ok(s) = project.validation_summary(c.cycle_id) {
            out.insert(c.cycle_id, s);
        }
    }
    out
}

/// Every derived document, keyed by path relative to the state directory.
pub fn derived_documents(project: &Project) -> BTreeMap<String, String> {
    let mut docs = BTreeMap::new();
    docs.insert(DocumentKind::Config.file_name().into(), canonical::to_pretty(&project.config));
    docs.insert(DocumentKind::RiskRegister.file_name().into(), canonical::to_pretty(&project.risks));
    docs.insert(
        DocumentKind::Traceability.file_name().into(),
        canonical::to_pretty(&TraceabilityDoc { matrix: project.matrix.clone(), links: project.matrix.trace_links(None) }),
    );
    docs.insert(
        DocumentKind::RedTeam.file_name().into(),
        canonical::to_pretty(&RedTeamDoc { findings: project.findings.clone(), reports: project.reports.clone() }),
    );
    docs.insert(DocumentKind::ValidationSummary.file_name().into(), canonical::to_pretty(&summaries(project)));
    docs.insert(
        CYCLES_DOC.into(),
        canonical::to_pretty(&CyclesDoc { cycles: project.cycles.clone(), change_requests: project.change_requests.clone() }),
    );
    docs.insert(TEST_LOG_DOC.into(), canonical::to_pretty(&project.evidence));
    docs.insert(MEMORY_DOC.into(), canonical::to_pretty(&project.memory));
    for s in &project.sessions {
        docs.insert(format!("{SESSIONS_DIR}/{}.json", s.session_id), canonical::to_pretty(s));
    }
    docs
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(StoreError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(StoreError::io(path))
}

fn append(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new().append(true).open(path).map_err(StoreError::io(path))?;
    f.write_all(line.as_bytes()).map_err(StoreError::io(path))?;
    f.sync_data().map_err(StoreError::io(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(StoreError::io(path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Document { document: path.display().to_string(), reason: e.to_string() })
}

fn read_chain(path: &Path, genesis: &str, document: &'static str) -> Result<(Vec<serde_json::Value>, String)> {
    let bytes = fs::read(path).map_err(StoreError::io(path))?;
    chain::verify(&bytes, genesis).map_err(|f| StoreError::Chain { document, line: f.line, reason: f.reason })
}

fn parse_bodies<T: DeserializeOwned>(bodies: Vec<serde_json::Value>, document: &'static str) -> Result<Vec<T>> {
    bodies
        .into_iter()
        .enumerate()
        .map(|(i, b)| serde_json::from_value(b).map_err(|e| StoreError::Chain { document, line: i, reason: e.to_string() }))
        .collect()
}

pub struct Store {
    dir: PathBuf,
    project: Project,
    change_head: String,
    approvals_head: String,
    approvals_len: usize,
    lock: Option<File>,
}

impl Store {
    pub fn state_dir(root: &Path) -> PathBuf {
        root.join(STATE_DIR)
    }

    /// Creates the skeleton: config, empty logs and empty snapshot documents.
    pub fn init(root: &Path, config: ProjectConfig, force: bool) -> Result<Store> {
        let dir = Self::state_dir(root);
        let unwritable = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StoreError::Unwritable { path, source }
        };
        if dir.join(DocumentKind::Config.file_name()).exists() {
            if !force {
                return Err(StoreError::AlreadyInitialized(dir));
            }
            fs::remove_dir_all(&dir).map_err(unwritable(&dir))?;
        }
        fs::create_dir_all(dir.join(SESSIONS_DIR)).map_err(unwritable(&dir))?;
        let mut store = Store {
            change_head: chain::genesis(&config.schema_version),
            approvals_head: chain::genesis(&config.schema_version),
            approvals_len: 0,
            project: Project::new(config),
            dir,
            lock: None,
        };
        store.acquire_lock()?;
        for log in [DocumentKind::ChangeLog, DocumentKind::Approvals] {
            let path = store.dir.join(log.file_name());
            File::create(&path).map_err(unwritable(&path))?;
        }
        store.write_snapshots()?;
        Ok(store)
    }

    /// Opens for reading: verifies both chains and replays the change log.
    pub fn open(root: &Path) -> Result<Store> {
        let dir = Self::state_dir(root);
        let config_path = dir.join(DocumentKind::Config.file_name());
        if !config_path.exists() {
            return Err(StoreError::NotInitialized(dir));
        }
        let config: ProjectConfig = read_json(&config_path)?;
        let genesis = chain::genesis(&config.schema_version);
        let (bodies, change_head) = read_chain(&dir.join(DocumentKind::ChangeLog.file_name()), &genesis, "change-log.jsonl")?;
        let entries: Vec<ChangeLogEntry> = parse_bodies(bodies, "change-log.jsonl")?;
        let project = Project::replay(config, &entries)?;
        let (approvals, approvals_head) = read_chain(&dir.join(DocumentKind::Approvals.file_name()), &genesis, "approvals.jsonl")?;
        Ok(Store { dir, project, change_head, approvals_head, approvals_len: approvals.len(), lock: None })
    }

    /// Opens for writing; holds the single-writer lock until dropped.
    pub fn open_writer(root: &Path) -> Result<Store> {
        let mut store = Self::open(root)?;
        store.acquire_lock()?;
        // re-read under the lock so no write slipped in between
        let mut fresh = Self::open(root)?;
        fresh.lock = store.lock.take();
        Ok(fresh)
    }

    fn acquire_lock(&mut self) -> Result<()> {
        let path = self.dir.join(LOCK_FILE);
        let f = OpenOptions::new().create(true).truncate(false).write(true).open(&path).map_err(StoreError::io(&path))?;
        match f.try_lock() {
            Ok(()) => {
                self.lock = Some(f);
                Ok(())
            }
            Err(TryLockError::WouldBlock) => Err(StoreError::Locked(path)),
            Err(TryLockError::Error(e)) => Err(StoreError::Io { path, source: e }),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn change_head(&self) -> &str {
        &self.change_head
    }

    /// Applies a command and persists it: change-log line, approvals line
    /// for gate decisions, then the snapshots.
    pub fn execute(&mut self, env: Envelope) -> Result<ChangeLogEntry> {
        if self.lock.is_none() {
            self.acquire_lock()?;
        }
        let mut next = self.project.clone();
        let entry = next.apply(env)?.clone();
        let (line, head) = chain::append_line(&self.change_head, canonical::to_value(&entry));
        append(&self.dir.join(DocumentKind::ChangeLog.file_name()), &line)?;
        self.change_head = head;

        let approvals = approval_entries(&next);
        for a in &approvals[self.approvals_len.min(approvals.len())..] {
            let (line, head) = chain::append_line(&self.approvals_head, canonical::to_value(a));
            append(&self.dir.join(DocumentKind::Approvals.file_name()), &line)?;
            self.approvals_head = head;
        }
        self.approvals_len = approvals.len();
        self.project = next;
        self.write_snapshots()?;
        Ok(entry)
    }

    fn write_snapshots(&self) -> Result<()> {
        for (rel, contents) in derived_documents(&self.project) {
            let path = self.dir.join(&rel);
            if fs::read(&path).ok().as_deref() != Some(contents.as_bytes()) {
                write_atomic(&path, contents.as_bytes())?;
            }
        }
        Ok(())
    }

    pub fn documents_present(&self) -> BTreeSet<DocumentKind> {
        documents_present(&self.dir)
    }

    pub fn session(&self, id: &agilev_core::SessionId) -> Option<&AgentSession> {
        self.project.sessions.iter().find(|s| &s.session_id == id)
    }
}

pub fn documents_present(dir: &Path) -> BTreeSet<DocumentKind> {
    DocumentKind::ALL.into_iter().filter(|d| dir.join(d.file_name()).is_file()).collect()
}

/// SHA-256 over every file of the state directory (path, length, bytes),
/// in path order. The lock file is excluded.
pub fn content_digest(dir: &Path) -> Result<String> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(StoreError::io(dir))? {
            let entry = entry.map_err(StoreError::io(dir))?;
            let path = entry.path();
            if path.is_dir() {
                walk(base, &path, out)?;
            } else {
                let rel = path.strip_prefix(base).expect("under base").to_string_lossy().replace('\\', "/");
                if rel != LOCK_FILE {
                    out.push((rel, path));
                }
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for (rel, path) in files {
        let bytes = fs::read(&path).map_err(StoreError::io(&path))?;
        h.update(rel.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub document: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.document, self.message)
    }
}

/// Schema, chain and cross-reference check of a state directory. An empty
/// list means the store is valid.
pub fn validate_store(root: &Path) -> Vec<Violation> {
    let dir = Store::state_dir(root);
    let mut out = Vec::new();
    let mut v = |document: &str, message: String| out.push(Violation { document: document.into(), message });

    for d in DocumentKind::ALL {
        if !dir.join(d.file_name()).is_file() {
            v(d.file_name(), "required document is missing".into());
        }
    }
    let config: ProjectConfig = match read_json(&dir.join(DocumentKind::Config.file_name())) {
        Ok(c) => c,
        Err(e) => {
            if dir.join(DocumentKind::Config.file_name()).is_file() {
                v("config.json", e.to_string());
            }
            return out;
        }
    };
    if config.schema_version != agilev_core::project::SCHEMA_VERSION {
        v("config.json", format!("unsupported schema version {:?}", config.schema_version));
    }
    let genesis = chain::genesis(&config.schema_version);

    let project = match read_chain(&dir.join(DocumentKind::ChangeLog.file_name()), &genesis, "change-log.jsonl")
        .and_then(|(b, _)| parse_bodies::<ChangeLogEntry>(b, "change-log.jsonl"))
    {
        Ok(entries) => match Project::replay(config.clone(), &entries) {
            Ok(p) => Some(p),
            Err(e) => {
                v("change-log.jsonl", format!("does not replay: {e}"));
                None
            }
        },
        Err(e) => {
            if dir.join(DocumentKind::ChangeLog.file_name()).is_file() {
                v("change-log.jsonl", e.to_string());
            }
            None
        }
    };
    match read_chain(&dir.join(DocumentKind::Approvals.file_name()), &genesis, "approvals.jsonl")
        .and_then(|(b, _)| parse_bodies::<ApprovalEntry>(b, "approvals.jsonl"))
    {
        Ok(approvals) => {
            if let Some(p) = &project {
                if approvals != approval_entries(p) {
                    v("approvals.jsonl", "does not match the gate decisions in the change log".into());
                }
            }
        }
        Err(e) => {
            if dir.join(DocumentKind::Approvals.file_name()).is_file() {
                v("approvals.jsonl", e.to_string());
            }
        }
    }

    // schemas and cross-references of the snapshots as found on disk
    let cycles: Option<CyclesDoc> = parse_doc(&dir, CYCLES_DOC, &mut v);
    let known_cycles: BTreeSet<CycleId> = cycles.iter().flat_map(|c| c.cycles.iter().map(|c| c.cycle_id)).collect();
    let trace: Option<TraceabilityDoc> = parse_doc(&dir, DocumentKind::Traceability.file_name(), &mut v);
    if let Some(t) = &trace {
        for c in t.matrix.cycles() {
            if cycles.is_some() && !known_cycles.contains(&c) {
                v("traceability.json", format!("snapshot for unknown cycle {c}"));
            }
        }
        for l in &t.links {
            if !t.matrix.knows(l.requirement_id) {
                v("traceability.json", format!("link for unknown requirement {}", l.requirement_id));
            }
        }
    }
    let evidence: Option<Vec<TestEvidence>> = parse_doc(&dir, TEST_LOG_DOC, &mut v);
    for e in evidence.iter().flatten() {
        if cycles.is_some() && !known_cycles.contains(&e.cycle) {
            v(TEST_LOG_DOC, format!("test {} names unknown cycle {}", e.test_id, e.cycle));
        }
        if let Some(t) = &trace {
            for id in e.requirement_ids.iter().filter(|id| !t.matrix.knows(**id)) {
                v(TEST_LOG_DOC, format!("test {} names unknown requirement {id}", e.test_id));
            }
        }
    }
    let red: Option<RedTeamDoc> = parse_doc(&dir, DocumentKind::RedTeam.file_name(), &mut v);
    for f in red.iter().flat_map(|r| &r.findings) {
        if cycles.is_some() && !known_cycles.contains(&f.cycle_id) {
            v("red-team.json", format!("finding {} names unknown cycle {}", f.id, f.cycle_id));
        }
    }
    let risks: Option<Vec<RiskEntry>> = parse_doc(&dir, DocumentKind::RiskRegister.file_name(), &mut v);
    for r in risks.iter().flatten() {
        if cycles.is_some() && !known_cycles.contains(&r.cycle_id) {
            v("risk-register.json", format!("risk {} names unknown cycle {}", r.id, r.cycle_id));
        }
    }
    let _: Option<BTreeMap<CycleId, ValidationSummary>> = parse_doc(&dir, DocumentKind::ValidationSummary.file_name(), &mut v);
    let _: Option<MemoryStore> = parse_doc(&dir, MEMORY_DOC, &mut v);

    // snapshots must be exactly what the change log implies
    if let Some(p) = &project {
        for (rel, expected) in derived_documents(p) {
            match fs::read(dir.join(&rel)) {
                Ok(actual) if actual == expected.as_bytes() => {}
                Ok(_) => v(&rel, "diverges from the state implied by the change log".into()),
                Err(_) if DocumentKind::ALL.iter().any(|d| d.file_name() == rel) => {}
                Err(_) => v(&rel, "derived document is missing".into()),
            }
        }
    }
    out
}

fn parse_doc<T: DeserializeOwned>(dir: &Path, rel: &str, v: &mut impl FnMut(&str, String)) -> Option<T> {
    let path = dir.join(rel);
    match fs::read_to_string(&path) {
        Ok(text) => match serde_json::from_str(&text) {
            Ok(t) => Some(t),
            Err(e) => {
                v(rel, format!("does not parse: {e}"));
                None
            }
        },
        Err(e) if e.kind() == ErrorKind::NotFound => None,
        Err(e) => {
            v(rel, e.to_string());
            None
        }
    }
}
