//! Acceptance suite. Prints one PASS/FAIL line per primary criterion and
//! exits nonzero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use agilev::bundle::{evidence_bundle, ENTRIES, MANIFEST};
use agilev::chain;
use agilev::fixture::{self, Options};
use agilev::store::{derived_documents, CyclesDoc, RedTeamDoc, Store, TraceabilityDoc};
use agilev::{canonical, validate_store};
use agilev_core::agent::{
    check_isolation, plan_waves, AgentSession, ContextEntry, ContextManifest, EntryKind, MemoryEntry, MemoryKind,
    MemoryStore, SessionLog, SessionStatus, Task,
};
use agilev_core::cost::{compute_cost, price_stress, reference_pricing, reference_scenarios, scenario_cost, REFERENCE_TOKENS};
use agilev_core::traceability::{Outcome, RequirementDraft, TestEvidence, TraceMatrix};
use agilev_core::verification::{requirement_pass_count, FindingStatus, RiskEntry, Severity, ValidationSummary};
use agilev_core::workflow::{GateStatus, TokenUsage};
use agilev_core::{
    Actor, AgentRole, ChangeLogEntry, Command, CycleId, Decision, Error, GateId, Phase, Project, ProjectConfig,
    RequirementId, SessionId, Timestamp,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {{
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)*));
        }
    }};
}

fn s(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("case-study replay", case_study_replay),
        ("cost table regression", cost_table),
        ("sensitivity table regression", sensitivity_table),
        ("gate soundness", gate_soundness),
        ("isolation soundness", isolation_soundness),
        ("oracle equivalences", oracle_equivalences),
        ("store integrity", store_integrity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// case study

fn case_study_store() -> Result<(tempfile::TempDir, Store), String> {
    let dir = tempfile::tempdir().map_err(s)?;
    let mut store = Store::init(dir.path(), ProjectConfig::default(), false).map_err(s)?;
    fixture::run_case_study(&mut store, Options::default()).map_err(s)?;
    Ok((dir, store))
}

fn case_study_replay() -> Check {
    let t0 = Instant::now();
    let (dir, store) = case_study_store()?;
    let p = store.project();
    let (c1, c2) = (CycleId::new(1), CycleId::new(2));
    let cycle = p.cycle(c2).map_err(s)?;
    ensure!(cycle.phase == Phase::Released && cycle.is_closed(), "C2 ended in {} (closed: {})", cycle.phase, cycle.is_closed());

    let m = p.coverage(c2).map_err(s)?;
    ensure!(m.req_count == 8 && m.passing == 8, "verified requirements {}/{}", m.passing, m.req_count);
    ensure!(m.requirement_pass_rate == 1.0, "pass rate {}", m.requirement_pass_rate);
    ensure!((m.tests_per_req - 6.75).abs() <= 0.001, "tests per requirement {}", m.tests_per_req);
    let prompts: Vec<u32> = p.cycles.iter().map(|c| c.prompt_count).collect();
    ensure!(prompts == [6, 6], "prompt counts {prompts:?}");

    let findings: Vec<_> = p.findings.iter().filter(|f| f.cycle_id == c2).collect();
    let majors = findings.iter().filter(|f| f.severity == Severity::Major).count();
    ensure!(findings.len() == 10 && majors == 6, "findings {} ({majors} MAJOR)", findings.len());
    ensure!(findings.iter().all(|f| f.status == FindingStatus::Resolved || f.severity == Severity::Minor), "MAJOR finding left open");
    let summary = p.validation_summary(c2).map_err(s)?;
    let last = summary.suite_per_pass.last().ok_or("no verification pass")?;
    ensure!((last.passed, last.total) == (54, 54), "final suite {}/{}", last.passed, last.total);
    ensure!(summary.suite_per_pass.len() == 2, "{} verification passes", summary.suite_per_pass.len());
    ensure!(p.cycle(c1).map_err(s)?.provider_record == "gemini-1.5-pro", "C1 provider {}", p.cycle(c1).map_err(s)?.provider_record);
    ensure!(cycle.provider_record == "claude-opus-4.6", "C2 provider {}", cycle.provider_record);

    let bundle = evidence_bundle(p, c2).map_err(s)?;
    let names: Vec<&str> = bundle.entries.iter().map(|(n, _)| n.as_str()).collect();
    let mut expected: Vec<&str> = ENTRIES.to_vec();
    expected.push(MANIFEST);
    ensure!(names == expected, "bundle entries {names:?}");
    for (name, bytes) in &bundle.entries {
        ensure!(!bytes.is_empty(), "{name} is empty");
    }
    let manifest = String::from_utf8(bundle.get(MANIFEST).unwrap().to_vec()).map_err(s)?;
    for line in manifest.lines() {
        let (digest, name) = line.split_once("  ").ok_or("malformed MANIFEST line")?;
        let bytes = bundle.get(name).ok_or_else(|| format!("MANIFEST names missing {name}"))?;
        ensure!(hex_digest(bytes) == digest, "digest mismatch for {name}");
    }
    ensure!(manifest.lines().count() == ENTRIES.len(), "MANIFEST has {} lines", manifest.lines().count());
    let violations = validate_store(dir.path());
    ensure!(violations.is_empty(), "store violations: {violations:?}");

    let elapsed = t0.elapsed().as_secs_f64();
    ensure!(elapsed < 10.0, "took {elapsed:.2}s");
    Ok(format!(
        "C2 Released; {}/{} requirements verified, pass rate {:.3}, {:.2} tests/req, prompts {prompts:?}, bundle of {} documents + MANIFEST, {elapsed:.2}s",
        m.passing,
        m.req_count,
        m.requirement_pass_rate,
        m.tests_per_req,
        ENTRIES.len()
    ))
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// cost model

/// (model, input $, output $, total $) as published for 500k/25k tokens.
const TABLE_II: [(&str, f64, f64, f64); 5] = [
    ("gemini-2.5-pro", 0.63, 0.25, 0.88),
    ("claude-sonnet-4.6", 1.50, 0.38, 1.88),
    ("claude-opus-4.6", 2.50, 0.63, 3.13),
    ("gpt-5-mini", 0.13, 0.05, 0.18),
    ("gpt-5.2", 0.88, 0.35, 1.23),
];

fn cost_table() -> Check {
    let pricing = reference_pricing();
    let (tin, tout) = REFERENCE_TOKENS;
    let mut worst: f64 = 0.0;
    for (model, input, output, total) in TABLE_II {
        let row = pricing.iter().find(|r| r.model == model).ok_or_else(|| format!("no pricing row for {model}"))?;
        ensure!(!row.observed, "{model} flagged as observed");
        let c = compute_cost(tin, tout, row).map_err(s)?;
        for (what, got, want) in [("input", c.input_cost, input), ("output", c.output_cost, output), ("total", c.total, total)] {
            let d = (got.dollars() - want).abs();
            worst = worst.max(d);
            ensure!(d <= 0.01 + 1e-9, "{model} {what}: {got} vs ${want:.2}");
        }
    }
    Ok(format!("{} list-priced rows reproduced; largest deviation ${worst:.2}", TABLE_II.len()))
}

fn sensitivity_table() -> Check {
    let scenarios = reference_scenarios();
    let want = [(8_000.0, 830.0, 9.64), (15_600.0, 611.0, 25.53), (30_000.0, 608.0, 49.34)];
    let mut factors = Vec::new();
    for (sc, (trad, agilev, factor)) in scenarios.iter().zip(want) {
        let c = scenario_cost(sc).map_err(s)?;
        ensure!(c.traditional == trad, "{}: traditional {}", sc.name, c.traditional);
        ensure!(c.agilev == agilev, "{}: agilev {}", sc.name, c.agilev);
        ensure!((c.reduction_factor - factor).abs() <= 0.01, "{}: factor {}", sc.name, c.reduction_factor);
        factors.push(format!("{:.2}", c.reduction_factor));
    }
    let mut base = scenarios.iter().find(|s| s.name == "base").ok_or("no base scenario")?.clone();
    base.compute_cost_per_cycle = 4.38;
    let stressed = price_stress(&base, 10.0).map_err(s)?;
    ensure!((stressed.agilev - 643.80).abs() <= 0.01, "stressed agilev cost {}", stressed.agilev);
    ensure!(stressed.reduction_factor > 24.0, "stressed factor {}", stressed.reduction_factor);
    Ok(format!(
        "$8,000/$15,600/$30,000 vs $830/$611/$608, factors {}; x10 stress ${:.2}, factor {:.2}",
        factors.join("/"),
        stressed.agilev,
        stressed.reduction_factor
    ))
}

// ---------------------------------------------------------------------------
// gate soundness

fn released_without_approvals(p: &Project) -> Option<CycleId> {
    p.cycles
        .iter()
        .find(|c| {
            c.phase == Phase::Released
                && !(c.has_approved(GateId::G1)
                    && c.gate_records.iter().rev().find(|g| g.gate == GateId::G2).is_some_and(|g| g.status == GateStatus::Approved))
        })
        .map(|c| c.cycle_id)
}

/// What the next transition can depend on. Finding counts are capped: only
/// "none open" versus "some open" steers the machine.
fn signature(p: &Project) -> String {
    let cycles: Vec<_> = p
        .cycles
        .iter()
        .map(|c| {
            let gates: Vec<_> = c.gate_records.iter().map(|g| (g.gate, g.status)).collect();
            let count = |sev, st| p.findings.iter().filter(|f| f.cycle_id == c.cycle_id && f.severity == sev && f.status == st).count().min(2);
            (
                c.phase,
                c.is_closed(),
                gates,
                count(Severity::Major, FindingStatus::Open),
                count(Severity::Major, FindingStatus::Resolved),
                count(Severity::Minor, FindingStatus::Open),
                p.evidence.iter().any(|e| e.cycle == c.cycle_id),
                p.matrix.snapshot(c.cycle_id).map_or(0, |s| s.len()),
                c.verification_pass,
            )
        })
        .collect();
    format!("{cycles:?}")
}

fn gate_soundness() -> Check {
    // exhaustive breadth-first enumeration to depth 20
    let mut frontier = vec![Project::new(ProjectConfig::default())];
    let mut seen: HashSet<String> = HashSet::from([signature(&frontier[0])]);
    let (mut transitions, mut released) = (0usize, 0usize);
    for depth in 1..=20 {
        let mut next = Vec::new();
        for p in &frontier {
            for env in common::moves(p) {
                let agent_gate = matches!(env.command, Command::GateDecision { .. }) && !env.actor.is_human();
                let mut q = p.clone();
                match q.apply(env) {
                    Ok(_) if agent_gate => return Err(format!("agent gate decision accepted at depth {depth}")),
                    Ok(_) => {}
                    Err(_) => continue,
                }
                transitions += 1;
                if let Some(c) = released_without_approvals(&q) {
                    return Err(format!("{c} Released without approved G1 and G2 at depth {depth}"));
                }
                if seen.insert(signature(&q)) {
                    if q.cycles.iter().any(|c| c.phase == Phase::Released) {
                        released += 1;
                    }
                    next.push(q);
                }
            }
        }
        frontier = next;
    }
    ensure!(released > 0, "no Released state reached within depth 20");

    // randomized fuzzing: every G2 approval with an open MAJOR is refused
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a7e);
    let mut attempts = 0;
    for _ in 0..10_000 {
        let mut p = Project::new(ProjectConfig::default());
        for _ in 0..40 {
            let env = common::random_move(&p, &mut rng);
            let g2_approve = env.actor.is_human()
                && matches!(env.command, Command::GateDecision { gate: GateId::G2, decision: Decision::Approve, .. });
            let open = p.open_cycle().map_or(0, |c| p.open_major_count(c.cycle_id));
            let result = p.apply(env).map(|_| ());
            if g2_approve && open > 0 {
                attempts += 1;
                ensure!(result == Err(Error::OpenMajorFindings(open)), "G2 approval with {open} open MAJOR gave {result:?}");
            }
        }
    }
    ensure!(attempts > 0, "fuzzing never attempted G2 approval with an open MAJOR finding");
    Ok(format!(
        "{} distinct states, {transitions} transitions to depth 20 ({released} Released states), all gated; {attempts} G2 approvals with open MAJOR refused over 10^4 sequences",
        seen.len()
    ))
}

// ---------------------------------------------------------------------------
// isolation soundness

struct Pool {
    sessions: Vec<AgentSession>,
    memory: MemoryStore,
}

fn random_pool(rng: &mut ChaCha8Rng) -> Pool {
    let mut memory = MemoryStore::default();
    for k in 0..4 {
        let author = if rng.gen_bool(0.5) { Actor::human("lead") } else { Actor::Agent { role: *AgentRole::ALL.choose(rng).unwrap() } };
        memory
            .put(MemoryEntry {
                key: format!("m{k}"),
                kind: MemoryKind::Invariant,
                body: "curated note".into(),
                file_pointers: vec![],
                cycle_id: CycleId::FIRST,
                author,
            })
            .expect("clean body");
    }
    let mut sessions: Vec<AgentSession> = Vec::new();
    for i in 0..rng.gen_range(2..8) {
        let role = *AgentRole::ALL.choose(rng).unwrap();
        let entries = (0..rng.gen_range(1..4)).map(|_| random_entry(rng, &sessions, false)).collect();
        sessions.push(AgentSession {
            session_id: SessionId::for_cycle(CycleId::FIRST, i + 1),
            role,
            cycle_id: CycleId::FIRST,
            manifest: ContextManifest::new(entries),
            window_tokens: 100_000,
            budget_fraction: 0.0,
            transcript_ref: String::new(),
            status: SessionStatus::Completed,
            provider: None,
            outputs: vec![format!("out/{i}.md")],
            usage: TokenUsage::default(),
            transcript: None,
        });
    }
    Pool { sessions, memory }
}

fn random_entry(rng: &mut ChaCha8Rng, sessions: &[AgentSession], allow_build_ref: bool) -> ContextEntry {
    let choice = rng.gen_range(0..if allow_build_ref || !sessions.is_empty() { 7 } else { 5 });
    let (kind, reference) = match choice {
        0 => (EntryKind::RequirementRef, format!("REQ-{:04}", rng.gen_range(1..9))),
        1 => (EntryKind::SourceRef, "src/hil/".to_string()),
        2 => (EntryKind::TestRef, "tests/".to_string()),
        3 => (EntryKind::MemoryRef, format!("memory:m{}", rng.gen_range(0..4))),
        4 => (EntryKind::ReportRef, "reports/external.md".to_string()),
        5 if !sessions.is_empty() => (EntryKind::ReportRef, format!("out/{}.md", rng.gen_range(0..sessions.len()))),
        _ if !sessions.is_empty() && (allow_build_ref || rng.gen_bool(0.5)) => {
            (EntryKind::BuildSessionRef, sessions.choose(rng).unwrap().session_id.to_string())
        }
        _ => (EntryKind::RequirementRef, "REQ-0001".to_string()),
    };
    ContextEntry::new(kind, reference, 100)
}

/// Independent reachability: can `manifest` reach anything a Build Agent
/// produced, following report, memory and session references backwards?
fn oracle_reaches_build(manifest: &ContextManifest, pool: &Pool) -> bool {
    let mut stack: Vec<ContextEntry> = manifest.entries.clone();
    let mut visited: BTreeSet<(String, String)> = BTreeSet::new();
    while let Some(e) = stack.pop() {
        if !visited.insert((e.kind.to_string(), e.reference.clone())) {
            continue;
        }
        match e.kind {
            EntryKind::BuildSessionRef => return true,
            EntryKind::ReportRef | EntryKind::MemoryRef => {
                if e.kind == EntryKind::MemoryRef {
                    let key = e.reference.trim_start_matches("memory:");
                    if pool.memory.get(key).is_some_and(|m| m.author == Actor::Agent { role: AgentRole::BuildAgent }) {
                        return true;
                    }
                }
                for s in pool.sessions.iter().filter(|s| s.outputs.contains(&e.reference)) {
                    if s.role == AgentRole::BuildAgent {
                        return true;
                    }
                    stack.extend(s.manifest.entries.iter().cloned());
                }
            }
            _ => {}
        }
    }
    false
}

fn isolation_soundness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x150);
    let (mut accepted, mut rejected) = (0, 0);
    for i in 0..1_000 {
        let pool = random_pool(&mut rng);
        let log = SessionLog { sessions: &pool.sessions, memory: &pool.memory };
        let manifest = ContextManifest::new((0..rng.gen_range(1..5)).map(|_| random_entry(&mut rng, &pool.sessions, false)).collect());
        let reaches = oracle_reaches_build(&manifest, &pool);
        match check_isolation(AgentRole::RedTeamVerifier, &manifest, log) {
            Ok(()) => {
                accepted += 1;
                ensure!(!reaches, "manifest {i} accepted although its closure reaches Build Agent output: {manifest:?}");
            }
            Err(Error::IsolationViolation { .. }) => {
                rejected += 1;
                ensure!(reaches, "manifest {i} rejected although its closure is clean: {manifest:?}");
            }
            Err(e) => return Err(format!("unexpected error {e}")),
        }
    }
    ensure!(accepted > 0 && rejected > 0, "degenerate sample: {accepted} accepted, {rejected} rejected");

    let mut td_rejected = 0;
    for _ in 0..1_000 {
        let pool = random_pool(&mut rng);
        let log = SessionLog { sessions: &pool.sessions, memory: &pool.memory };
        let mut entries: Vec<ContextEntry> = (0..rng.gen_range(0..4)).map(|_| random_entry(&mut rng, &pool.sessions, true)).collect();
        let at = rng.gen_range(0..=entries.len());
        entries.insert(at, ContextEntry::new(EntryKind::SourceRef, format!("src/hil/m{at}.py"), 100));
        let manifest = ContextManifest::new(entries);
        ensure!(
            matches!(check_isolation(AgentRole::TestDesigner, &manifest, log), Err(Error::IsolationViolation { .. })),
            "TestDesigner manifest with a SourceRef accepted: {manifest:?}"
        );
        td_rejected += 1;
    }
    Ok(format!(
        "RedTeamVerifier: {accepted} accepted manifests all Build-free, {rejected} rejected all reach Build output; {td_rejected}/1000 TestDesigner manifests with SourceRef rejected"
    ))
}

// ---------------------------------------------------------------------------
// oracle equivalences

type Content = (String, Vec<String>);

fn diff_cycles_oracle(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let mut matrix = TraceMatrix::new();
    let mut model: BTreeMap<u32, BTreeMap<u32, Content>> = BTreeMap::new();
    for c in 1..=3u32 {
        let cycle = CycleId::new(c);
        matrix.begin_cycle(cycle).map_err(s)?;
        let mut current = model.get(&(c - 1)).cloned().unwrap_or_default();
        let mut ids: Vec<u32> = (1..=10).collect();
        ids.shuffle(rng);
        let n = rng.gen_range(1..=6);
        let drafts: Vec<RequirementDraft> = ids[..n]
            .iter()
            .map(|&id| RequirementDraft {
                id: RequirementId::new(id),
                title: format!("r{id}"),
                statement: format!("s{}", rng.gen_range(0..2)),
                acceptance_criteria: vec![format!("c{}", rng.gen_range(0..2))],
            })
            .collect();
        matrix.register(cycle, &drafts).map_err(s)?;
        for d in &drafts {
            current.insert(d.id.number(), (d.statement.clone(), d.acceptance_criteria.clone()));
        }
        model.insert(c, current);
    }
    for (from, to) in [(1, 2), (1, 3), (2, 3)] {
        let d = matrix.diff_cycles(CycleId::new(from), CycleId::new(to)).map_err(s)?;
        let (old, new) = (&model[&from], &model[&to]);
        let added: Vec<u32> = new.keys().filter(|k| !old.contains_key(k)).copied().collect();
        let modified: Vec<u32> = new.iter().filter(|(k, v)| old.get(k).is_some_and(|o| o != *v)).map(|(k, _)| *k).collect();
        let unchanged: Vec<u32> = new.iter().filter(|(k, v)| old.get(k) == Some(*v)).map(|(k, _)| *k).collect();
        let nums = |v: &[RequirementId]| v.iter().map(|r| r.number()).collect::<Vec<_>>();
        ensure!(
            nums(&d.added) == added && nums(&d.modified) == modified && nums(&d.unchanged) == unchanged,
            "diff C{from}->C{to}: {d:?} vs added {added:?} modified {modified:?} unchanged {unchanged:?}"
        );
    }
    Ok(())
}

/// Earliest-possible layering by memoized longest-path recursion.
fn layering_oracle(n: usize, preds: &[Vec<usize>]) -> Vec<usize> {
    fn depth(i: usize, preds: &[Vec<usize>], memo: &mut [Option<usize>]) -> usize {
        if let Some(d) = memo[i] {
            return d;
        }
        let d = preds[i].iter().map(|&p| depth(p, preds, memo) + 1).max().unwrap_or(0);
        memo[i] = Some(d);
        d
    }
    let mut memo = vec![None; n];
    (0..n).map(|i| depth(i, preds, &mut memo)).collect()
}

/// Checks plan_waves on the DAG given by per-node predecessor bitmasks over
/// lower indices, with ids relabelled by rotating through `rot` so edges do
/// not always run from low to high id.
fn check_waves(n: usize, preds: &[u8], rot: usize) -> Result<(), String> {
    let preds: Vec<Vec<usize>> = preds.iter().map(|m| (0..8).filter(|j| m >> j & 1 == 1).collect()).collect();
    let label = |i: usize| ((i + rot) % n) as u8;
    let tasks: Vec<Task<u8>> = (0..n).rev().map(|i| Task::new(label(i), preds[i].iter().map(|&j| label(j)).collect())).collect();
    let waves = plan_waves(&tasks).map_err(s)?;
    let depths = layering_oracle(n, &preds);
    let layers = depths.iter().max().map_or(0, |m| m + 1);
    let mut expected = vec![Vec::new(); layers];
    for i in 0..n {
        expected[depths[i]].push(label(i));
    }
    for w in &mut expected {
        w.sort();
    }
    ensure!(waves == expected, "n={n} preds={preds:?} rot={rot}: {waves:?} vs {expected:?}");
    Ok(())
}

/// Every labelled DAG on `n` nodes: each edge set of the strict upper
/// triangle. Since any DAG has a topological order, this covers all of them
/// up to renaming.
fn all_labelled(n: usize, mut f: impl FnMut(&[u8], usize) -> Result<(), String>) -> Result<u64, String> {
    let edges = n * n.saturating_sub(1) / 2;
    let mut preds = vec![0u8; n];
    for mask in 0..(1u64 << edges) {
        let mut bit = 0;
        for (i, p) in preds.iter_mut().enumerate() {
            *p = ((mask >> bit) & ((1 << i) - 1)) as u8;
            bit += i;
        }
        f(&preds, mask as usize)?;
    }
    Ok(1 << edges)
}

/// One representative per isomorphism class (and some duplicates): nodes
/// ordered by depth, and within a depth by predecessor mask. Any DAG can be
/// renumbered into this form, layer by layer, since nodes of equal depth
/// have no edges between them.
fn canonical_dags(n: usize, f: &mut impl FnMut(&[u8], usize) -> Result<(), String>) -> Result<u64, String> {
    fn rec(
        n: usize,
        i: usize,
        preds: &mut [u8; 8],
        depth: &mut [u8; 8],
        count: &mut u64,
        f: &mut impl FnMut(&[u8], usize) -> Result<(), String>,
    ) -> Result<(), String> {
        if i == n {
            *count += 1;
            return f(&preds[..n], *count as usize);
        }
        for m in 0..(1u16 << i) {
            let m = m as u8;
            let d = (0..i).filter(|j| m >> j & 1 == 1).map(|j| depth[j] + 1).max().unwrap_or(0);
            if i > 0 && (d < depth[i - 1] || (d == depth[i - 1] && m < preds[i - 1])) {
                continue;
            }
            preds[i] = m;
            depth[i] = d;
            rec(n, i + 1, preds, depth, count, f)?;
        }
        Ok(())
    }
    let mut count = 0;
    rec(n, 0, &mut [0; 8], &mut [0; 8], &mut count, f)?;
    Ok(count)
}

fn pass_rate_equivalence(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let mut matrix = TraceMatrix::new();
    let cycles = rng.gen_range(1..=3u32);
    for c in 1..=cycles {
        let cycle = CycleId::new(c);
        matrix.begin_cycle(cycle).map_err(s)?;
        let drafts: Vec<RequirementDraft> = (1..=rng.gen_range(1..=5))
            .map(|id| RequirementDraft {
                id: RequirementId::new(id),
                title: "r".into(),
                statement: format!("s{c}"),
                acceptance_criteria: vec!["c".into()],
            })
            .collect();
        matrix.register(cycle, &drafts).map_err(s)?;
    }
    let as_of = CycleId::new(rng.gen_range(1..=cycles));
    let reqs: Vec<RequirementId> = matrix.snapshot(as_of).unwrap().keys().copied().collect();
    let evidence: Vec<TestEvidence> = (0..rng.gen_range(0..25))
        .map(|_| {
            let cycle = CycleId::new(rng.gen_range(1..=cycles));
            let known: Vec<RequirementId> = matrix.snapshot(cycle).unwrap().keys().copied().collect();
            let k = rng.gen_range(1..=known.len());
            let mut ids: Vec<RequirementId> = known.choose_multiple(rng, k).copied().collect();
            ids.sort();
            TestEvidence {
                test_id: format!("t{}", rng.gen_range(0..6)),
                requirement_ids: ids,
                outcome: if rng.gen_bool(0.75) { Outcome::Pass } else { Outcome::Fail },
                cycle,
                timestamp: Timestamp::from_unix(rng.gen_range(0..3)),
                pass_index: rng.gen_range(0..3),
            }
        })
        .collect();
    let m = matrix.coverage_metrics_as_of(&evidence, as_of).map_err(s)?;
    let passing = requirement_pass_count(&reqs, &evidence, as_of);
    ensure!(passing == m.passing, "verification counts {passing}, traceability {}", m.passing);
    let rate = passing as f64 / reqs.len() as f64;
    ensure!(rate == m.requirement_pass_rate, "rates differ: {rate} vs {}", m.requirement_pass_rate);
    Ok(())
}

fn oracle_equivalences() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dac);
    for _ in 0..1_000 {
        diff_cycles_oracle(&mut rng)?;
    }
    let mut labelled = 0u64;
    for n in 0..=7usize {
        labelled += all_labelled(n, |preds, k| check_waves(n, preds, k))?;
    }
    let classes = canonical_dags(8, &mut |preds, k| check_waves(8, preds, k))?;
    for _ in 0..1_000 {
        pass_rate_equivalence(&mut rng)?;
    }
    Ok(format!(
        "diff_cycles = set-difference oracle on 1000 fixtures; plan_waves = longest-path layering on all {labelled} labelled DAGs with <= 7 nodes and {classes} canonical 8-node DAGs (every isomorphism class); verification and traceability pass rates identical on 1000 evidence sets"
    ))
}

// ---------------------------------------------------------------------------
// store integrity

fn roundtrip<T>(text: &str, what: &str) -> Result<T, String>
where
    T: serde::de::DeserializeOwned + serde::Serialize,
{
    let value: T = serde_json::from_str(text).map_err(|e| format!("{what}: {e}"))?;
    ensure!(canonical::to_pretty(&value) == text, "{what} does not re-serialize identically");
    Ok(value)
}

fn document_roundtrips(p: &Project) -> Result<usize, String> {
    let docs = derived_documents(p);
    let get = |k: &str| docs.get(k).ok_or_else(|| format!("missing {k}"));
    let config: ProjectConfig = roundtrip(get("config.json")?, "config")?;
    ensure!(config == p.config, "config differs after round trip");
    let risks: Vec<RiskEntry> = roundtrip(get("risk-register.json")?, "risk register")?;
    ensure!(risks == p.risks, "risk register differs");
    let trace: TraceabilityDoc = roundtrip(get("traceability.json")?, "traceability")?;
    ensure!(trace.matrix == p.matrix, "matrix differs");
    let red: RedTeamDoc = roundtrip(get("red-team.json")?, "red team")?;
    ensure!(red.findings == p.findings && red.reports == p.reports, "red-team document differs");
    let _: BTreeMap<CycleId, ValidationSummary> = roundtrip(get("validation-summary.json")?, "validation summary")?;
    let cycles: CyclesDoc = roundtrip(get("cycles.json")?, "cycles")?;
    ensure!(cycles.cycles == p.cycles && cycles.change_requests == p.change_requests, "cycles differ");
    let evidence: Vec<TestEvidence> = roundtrip(get("test-log.json")?, "test log")?;
    ensure!(evidence == p.evidence, "test log differs");
    let memory: MemoryStore = roundtrip(get("memory.json")?, "memory")?;
    ensure!(memory == p.memory, "memory differs");
    for e in &p.change_log {
        let back: ChangeLogEntry = serde_json::from_str(&canonical::to_string(e)).map_err(s)?;
        ensure!(&back == e, "change-log entry {} differs", e.seq);
    }
    let whole: Project = serde_json::from_str(&canonical::to_string(p)).map_err(s)?;
    ensure!(&whole == p, "project differs after round trip");
    Ok(docs.len())
}

fn tamper_detection(entries: &[ChangeLogEntry]) -> Result<usize, String> {
    let genesis = chain::genesis(agilev_core::project::SCHEMA_VERSION);
    let mut log = Vec::new();
    let mut head = genesis.clone();
    for e in entries.iter().take(10) {
        let (line, h) = chain::append_line(&head, canonical::to_value(e));
        log.extend_from_slice(line.as_bytes());
        head = h;
    }
    let (bodies, verified_head) = chain::verify(&log, &genesis).map_err(|f| format!("clean log rejected: {f:?}"))?;
    ensure!(bodies.len() == 10 && verified_head == head, "clean log misread");
    let line_of = |pos: usize| log[..pos].iter().filter(|&&b| b == b'\n').count();
    for pos in 0..log.len() {
        let mut bad = log.clone();
        bad[pos] ^= 0x01;
        match chain::verify(&bad, &genesis) {
            Ok(_) => return Err(format!("flip at byte {pos} went undetected")),
            Err(f) => ensure!(f.line == line_of(pos), "flip at byte {pos} (line {}) reported at line {}", line_of(pos), f.line),
        }
    }
    Ok(log.len())
}

fn store_integrity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5707e);
    let mut docs = 0;
    for _ in 0..200 {
        let p = common::random_project(&mut rng, 60);
        docs += document_roundtrips(&p)?;
    }
    let (_dir, store) = case_study_store()?;
    docs += document_roundtrips(store.project())?;

    let flipped = tamper_detection(&store.project().change_log)?;

    let c2 = CycleId::new(2);
    let first = evidence_bundle(store.project(), c2).map_err(s)?.to_tar();
    let second = evidence_bundle(store.project(), c2).map_err(s)?.to_tar();
    ensure!(first == second, "two exports of C2 differ");
    let (_dir2, replayed) = case_study_store()?;
    let third = evidence_bundle(replayed.project(), c2).map_err(s)?.to_tar();
    ensure!(first == third, "export from an independent replay differs");
    Ok(format!(
        "{docs} generated documents round-trip byte-identically; all {flipped} single-byte flips of a 10-entry log detected at the tampered line; C2 bundle export byte-identical ({} bytes, sha256 {})",
        first.len(),
        &hex_digest(&first)[..16]
    ))
}
