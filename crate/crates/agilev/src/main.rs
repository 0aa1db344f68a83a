use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agilev::bundle::evidence_bundle;
use agilev::fixture::{self, Driver, Options, Stage};
use agilev::service::{self, ServiceConfig};
use agilev::{canonical, clock, data, ingest, validate_store, Store, StoreError};
use agilev_core::agent::{ContextManifest, MemoryKind, ProviderRegistry, ScriptedProvider};
use agilev_core::compliance::{decision_log, iso_report, StoreView};
use agilev_core::cost::{
    compute_cost, price_stress, reference_pricing, reference_scenarios, render_sensitivity_table, PricingRow, Scenario,
};
use agilev_core::project::run_session;
use agilev_core::traceability::{parse_requirements, render_matrix_as_of};
use agilev_core::verification::{RiskSeverity, Severity};
use agilev_core::workflow::ChangeRequest;
use agilev_core::{
    Actor, AgentRole, ChangeRequestId, Command, CycleId, Decision, Envelope, Event, FindingId, GateId, Project,
    ProjectConfig, RequirementId, RiskId, SessionId,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "agilev", version, about = "Agile V Infinity Loop engine")]
struct Cli {
    /// Repository root holding `.agile-v/`.
    #[arg(long, global = true, env = "AGILEV_STORE", default_value = ".")]
    root: PathBuf,
    /// Who issues the command: `human:<name>`, `agent:<role>` or a bare name.
    #[arg(long, global = true, env = "AGILEV_ACTOR")]
    actor: Option<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create an empty store.
    Init {
        #[arg(long)]
        force: bool,
        /// Project config (JSON) to start from.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Start, inspect, advance and close cycles.
    #[command(subcommand)]
    Cycle(CycleCmd),
    /// Record a human G1 or G2 decision.
    #[command(subcommand)]
    Gate(GateCmd),
    /// Requirements and trace links.
    #[command(subcommand)]
    Req(ReqCmd),
    /// Ingest test results.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Red-team findings.
    #[command(subcommand)]
    Finding(FindingCmd),
    /// Isolated agent sessions.
    #[command(subcommand)]
    Session(SessionCmd),
    /// Shared project memory.
    #[command(subcommand)]
    Memory(MemoryCmd),
    /// Risk register.
    #[command(subcommand)]
    Risk(RiskCmd),
    /// Compliance reports and evidence bundles.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Token cost and sensitivity tables.
    #[command(subcommand)]
    Cost(CostCmd),
    /// Check the store against its schemas, chains and cross-references.
    Validate,
    /// Run the HTTP gate service.
    Serve {
        #[arg(long, env = "AGILEV_BIND", default_value = "127.0.0.1:8737")]
        bind: SocketAddr,
        #[arg(long, env = "AGILEV_TOKEN", hide_env_values = true)]
        token: String,
        /// Human identity recorded for decisions made through the service.
        #[arg(long, env = "AGILEV_PRINCIPAL")]
        principal: String,
    },
    /// Replay the reference case study into a fresh store.
    #[command(subcommand)]
    Demo(DemoCmd),
}

#[derive(Subcommand)]
enum CycleCmd {
    /// Open a cycle. Every cycle after the first needs a change request.
    Start {
        #[arg(long)]
        intent: String,
        #[arg(long, requires = "cr_title")]
        cr_id: Option<String>,
        #[arg(long)]
        cr_title: Option<String>,
        #[arg(long, default_value = "")]
        cr_description: String,
    },
    /// One line per cycle with phase, prompts and verification totals.
    Status {
        #[arg(long)]
        json: bool,
    },
    /// Fire a non-gate event, e.g. decomposition-complete.
    Advance {
        event: String,
        #[arg(long)]
        rationale: Option<String>,
    },
    /// Give the synthesis agents a direction (one human prompt).
    Direct {
        #[arg(long)]
        note: String,
    },
    /// Close a released cycle.
    Close,
}

#[derive(Subcommand)]
enum GateCmd {
    /// Approve the pending gate.
    Approve(GateArgs),
    /// Reject the pending gate.
    Reject(GateArgs),
}

#[derive(Args)]
struct GateArgs {
    /// G1 or G2.
    gate: String,
    #[arg(long)]
    rationale: String,
}

#[derive(Subcommand)]
enum ReqCmd {
    /// Register requirements from a Markdown file.
    Register { file: PathBuf },
    /// Link a requirement to a source artifact.
    Link {
        requirement: String,
        #[arg(required = true)]
        artifacts: Vec<String>,
    },
    /// Added, modified and unchanged requirements between two cycles.
    Diff { from: String, to: String },
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Ingest a test report (`.xml` JUnit, otherwise JSON lines).
    Ingest { report: PathBuf },
    /// Pass/fail totals per requirement.
    Summary {
        #[arg(long)]
        cycle: Option<String>,
    },
}

#[derive(Subcommand)]
enum FindingCmd {
    /// Record a finding against the open cycle.
    Add {
        /// MAJOR or MINOR.
        #[arg(long)]
        severity: String,
        #[arg(long)]
        description: String,
    },
    /// Mark a finding resolved (during rework).
    Resolve {
        finding: String,
        #[arg(long)]
        note: String,
    },
    /// Print findings as JSON lines.
    List {
        #[arg(long)]
        cycle: Option<String>,
    },
}

#[derive(Subcommand)]
enum SessionCmd {
    /// Register a session with its context manifest (JSON).
    Spawn {
        #[arg(long)]
        role: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 200_000)]
        window: u64,
    },
    /// Run a spawned session against a scripted provider.
    Run {
        session: String,
        /// Recorded replies (JSON), keyed `role@cycle`.
        #[arg(long)]
        transcripts: PathBuf,
    },
}

#[derive(Subcommand)]
enum MemoryCmd {
    /// Store an entry; refuses bodies that look like secrets.
    Put {
        key: String,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        body: String,
        #[arg(long = "file")]
        files: Vec<String>,
    },
    /// Entries whose key starts with a prefix.
    Lookup {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        prefix: Option<String>,
    },
}

#[derive(Subcommand)]
enum RiskCmd {
    /// Add a risk to the register.
    Add {
        #[arg(long)]
        description: String,
        /// low, medium or high.
        #[arg(long)]
        severity: String,
        #[arg(long)]
        mitigation: String,
    },
    /// Close a risk.
    Close {
        risk: String,
        #[arg(long)]
        note: String,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Clause-by-clause ISO status.
    Iso {
        #[arg(long)]
        cycle: Option<String>,
        /// Replacement mapping file (JSON).
        #[arg(long)]
        mappings: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Gate decisions and rationales of a cycle.
    Decisions {
        #[arg(long)]
        cycle: Option<String>,
    },
    /// Write the evidence bundle of a closed cycle as a tar archive.
    Bundle {
        #[arg(long)]
        cycle: String,
        /// Defaults to `evidence-<cycle>.tar`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The traceability matrix as Markdown.
    Matrix {
        #[arg(long)]
        cycle: Option<String>,
    },
}

#[derive(Subcommand)]
enum CostCmd {
    /// Compute cost of a token volume under each pricing row.
    Estimate {
        /// Pricing rows (JSON); defaults to the reference table.
        #[arg(long)]
        pricing: Option<PathBuf>,
        /// Input and output tokens, `in,out`.
        #[arg(long, default_value = "500000,25000")]
        tokens: String,
    },
    /// Traditional versus Agile V cost per scenario.
    Sensitivity {
        /// Scenarios (JSON); defaults to the reference set.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Scale compute cost per cycle by this factor.
        #[arg(long)]
        stress: Option<f64>,
    },
}

#[derive(Subcommand)]
enum DemoCmd {
    /// Replay the two-cycle HIL case study into a fresh store.
    CaseStudy {
        #[arg(long, value_enum, default_value_t = DemoStage::Complete)]
        stage: DemoStage,
        /// Leave the four MINOR findings open.
        #[arg(long)]
        leave_minor_open: bool,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoStage {
    Cycle1,
    Findings,
    Gate2,
    Complete,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Serve(#[from] service::ServeError),
    #[error("{0}")]
    Usage(String),
    #[error("store has {0} violation(s)")]
    Invalid(usize),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Store(e) => e.code(),
            CliError::Serve(service::ServeError::InvalidStore(e)) => e.code(),
            CliError::Serve(_) => "ServeFailure",
            CliError::Usage(_) => "Usage",
            CliError::Invalid(_) => "InvalidStore",
        }
    }
}

impl From<agilev_core::Error> for CliError {
    fn from(e: agilev_core::Error) -> Self {
        CliError::Store(e.into())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.code(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io { path: path.into(), source })?;
    serde_json::from_str(&text)
        .map_err(|e| StoreError::Parse { source_name: path.display().to_string(), reason: e.to_string() }.into())
}

fn parse<T: std::str::FromStr<Err = agilev_core::Error>>(s: &str) -> CliResult<T> {
    Ok(s.parse()?)
}

fn cycle_or_latest(p: &Project, cycle: Option<&str>) -> CliResult<CycleId> {
    match cycle {
        Some(c) => parse(c),
        None => Ok(p.latest_cycle().ok_or(agilev_core::Error::NoOpenCycle)?.cycle_id),
    }
}

struct Ctx {
    root: PathBuf,
    actor: Option<String>,
}

impl Ctx {
    fn actor(&self) -> CliResult<Actor> {
        let a = self.actor.as_deref().ok_or(agilev_core::Error::MissingActor)?;
        parse(a)
    }

    fn reader(&self) -> CliResult<Store> {
        Ok(Store::open(&self.root)?)
    }

    /// Applies one command as the configured actor and reports the entry.
    fn exec(&self, command: Command, rationale: Option<String>) -> CliResult<()> {
        let actor = self.actor()?;
        let mut store = Store::open_writer(&self.root)?;
        let mut env = Envelope::new(actor, clock::now()?, command);
        if let Some(r) = rationale {
            env = env.because(r);
        }
        let entry = store.execute(env)?;
        let cycle = entry.cycle.map(|c| format!(" {c}")).unwrap_or_default();
        println!("#{}{cycle} {}: {}", entry.seq, entry.actor, entry.decision);
        Ok(())
    }
}

fn run(cli: Cli) -> CliResult {
    let ctx = Ctx { root: cli.root, actor: cli.actor };
    match cli.command {
        Cmd::Init { force, config } => {
            let config = match config {
                Some(path) => read_json(&path)?,
                None => ProjectConfig::default(),
            };
            let store = Store::init(&ctx.root, config, force)?;
            println!("initialized {}", store.dir().display());
            Ok(())
        }
        Cmd::Cycle(c) => cycle(&ctx, c),
        Cmd::Gate(g) => {
            let (decision, args) = match g {
                GateCmd::Approve(a) => (Decision::Approve, a),
                GateCmd::Reject(a) => (Decision::Reject, a),
            };
            let gate: GateId = parse(&args.gate)?;
            ctx.exec(Command::GateDecision { gate, decision, rationale: args.rationale }, None)
        }
        Cmd::Req(r) => req(&ctx, r),
        Cmd::Verify(v) => verify(&ctx, v),
        Cmd::Finding(f) => finding(&ctx, f),
        Cmd::Session(s) => session(&ctx, s),
        Cmd::Memory(m) => memory(&ctx, m),
        Cmd::Risk(r) => match r {
            RiskCmd::Add { description, severity, mitigation } => {
                let severity: RiskSeverity = parse(&severity)?;
                ctx.exec(Command::RecordRisk { description, severity, mitigation }, None)
            }
            RiskCmd::Close { risk, note } => {
                let risk: RiskId = parse(&risk)?;
                ctx.exec(Command::CloseRisk { risk, note }, None)
            }
        },
        Cmd::Report(r) => report(&ctx, r),
        Cmd::Cost(c) => cost(c),
        Cmd::Validate => {
            let violations = validate_store(&ctx.root);
            for v in &violations {
                println!("{v}");
            }
            if violations.is_empty() {
                println!("store is valid");
                Ok(())
            } else {
                Err(CliError::Invalid(violations.len()))
            }
        }
        Cmd::Serve { bind, token, principal } => {
            let config = ServiceConfig::new(&ctx.root, token, parse(&principal)?);
            let rt = tokio::runtime::Runtime::new().map_err(service::ServeError::Io)?;
            eprintln!("serving {} on http://{bind}/v1/", ctx.root.display());
            rt.block_on(service::serve(config, bind))?;
            Ok(())
        }
        Cmd::Demo(DemoCmd::CaseStudy { stage, leave_minor_open, force }) => {
            let stage = match stage {
                DemoStage::Cycle1 => Stage::Cycle1,
                DemoStage::Findings => Stage::Cycle2Findings,
                DemoStage::Gate2 => Stage::Cycle2Gate2,
                DemoStage::Complete => Stage::Complete,
            };
            let mut store = Store::init(&ctx.root, ProjectConfig::default(), force)?;
            Driver::new(&mut store, Options { resolve_minor: !leave_minor_open })?.run_to(stage)?;
            let p = store.project();
            for c in &p.cycles {
                println!("{} {} prompts={} closed={}", c.cycle_id, c.phase, c.prompt_count, c.is_closed());
            }
            println!("{} change-log entries in {}", p.change_log.len(), store.dir().display());
            Ok(())
        }
    }
}

fn cycle(ctx: &Ctx, c: CycleCmd) -> CliResult {
    match c {
        CycleCmd::Start { intent, cr_id, cr_title, cr_description } => {
            let change_request = match cr_id {
                Some(id) => Some(ChangeRequest::new(
                    parse::<ChangeRequestId>(&id)?,
                    cr_title.unwrap_or_default(),
                    cr_description,
                )),
                None => None,
            };
            ctx.exec(Command::StartCycle { intent, change_request }, None)
        }
        CycleCmd::Status { json } => {
            let store = ctx.reader()?;
            let p = store.project();
            if json {
                println!("{}", canonical::to_pretty(&p.cycles));
                return Ok(());
            }
            if p.cycles.is_empty() {
                println!("no cycles");
            }
            for c in &p.cycles {
                let state = if c.is_closed() { "closed" } else { "open" };
                print!("{} {} ({state}) prompts={}", c.cycle_id, c.phase, c.prompt_count);
                if let Some(g) = c.pending_gate() {
                    print!(" pending={}", g.gate);
                }
                let open = p.open_major_count(c.cycle_id);
                if open > 0 {
                    print!(" open-major={open}");
                }
                if let Ok(m) = p.coverage(c.cycle_id) {
                    print!(" verified={}/{} tests/req={:.2}", m.passing, m.req_count, m.tests_per_req);
                }
                println!();
            }
            Ok(())
        }
        CycleCmd::Advance { event, rationale } => {
            let event: Event = parse(&event)?;
            if event.is_gate_decision() {
                return Err(CliError::Usage(format!("{event} comes from `agilev gate approve|reject`")));
            }
            ctx.exec(Command::Advance { event }, rationale)
        }
        CycleCmd::Direct { note } => ctx.exec(Command::DirectSynthesis { note }, None),
        CycleCmd::Close => ctx.exec(Command::CloseCycle, None),
    }
}

fn req(ctx: &Ctx, r: ReqCmd) -> CliResult {
    match r {
        ReqCmd::Register { file } => {
            let text = std::fs::read_to_string(&file).map_err(|source| StoreError::Io { path: file.clone(), source })?;
            let requirements = parse_requirements(&text)?;
            ctx.exec(Command::RegisterRequirements { requirements }, None)
        }
        ReqCmd::Link { requirement, artifacts } => {
            let requirement: RequirementId = parse(&requirement)?;
            ctx.exec(Command::LinkArtifacts { requirement, artifacts }, None)
        }
        ReqCmd::Diff { from, to } => {
            let store = ctx.reader()?;
            let diff = store.project().matrix.diff_cycles(parse(&from)?, parse(&to)?)?;
            println!("{}", canonical::to_pretty(&diff));
            Ok(())
        }
    }
}

fn verify(ctx: &Ctx, v: VerifyCmd) -> CliResult {
    match v {
        VerifyCmd::Ingest { report } => {
            let records = ingest::read_report(&report)?;
            let source = report.file_name().map_or_else(|| report.display().to_string(), |n| n.to_string_lossy().into_owned());
            ctx.exec(Command::IngestEvidence { source, records }, None)
        }
        VerifyCmd::Summary { cycle } => {
            let store = ctx.reader()?;
            let p = store.project();
            let id = cycle_or_latest(p, cycle.as_deref())?;
            print!("{}", p.validation_summary(id)?.render_markdown());
            Ok(())
        }
    }
}

fn finding(ctx: &Ctx, f: FindingCmd) -> CliResult {
    match f {
        FindingCmd::Add { severity, description } => {
            let severity: Severity = parse(&severity)?;
            ctx.exec(Command::RecordFinding { severity, description }, None)
        }
        FindingCmd::Resolve { finding, note } => {
            let finding: FindingId = parse(&finding)?;
            ctx.exec(Command::ResolveFinding { finding, note }, None)
        }
        FindingCmd::List { cycle } => {
            let store = ctx.reader()?;
            let p = store.project();
            let only = cycle.as_deref().map(parse::<CycleId>).transpose()?;
            for f in p.findings.iter().filter(|f| only.is_none_or(|c| f.cycle_id == c)) {
                println!("{}", canonical::to_string(f));
            }
            Ok(())
        }
    }
}

fn session(ctx: &Ctx, s: SessionCmd) -> CliResult {
    match s {
        SessionCmd::Spawn { role, manifest, window } => {
            let role: AgentRole = parse(&role)?;
            let manifest: ContextManifest = read_json(&manifest)?;
            let session_id = ctx.reader()?.project().next_session_id()?;
            ctx.exec(Command::SpawnSession { session_id, role, manifest, window_tokens: window }, None)
        }
        SessionCmd::Run { session, transcripts } => {
            let id: SessionId = parse(&session)?;
            let provider: ScriptedProvider = read_json(&transcripts)?;
            let mut registry = ProviderRegistry::new();
            registry.register(fixture::PROVIDER_ID, provider);
            let command = run_session(ctx.reader()?.project(), &registry, fixture::PROVIDER_ID, &id)?;
            ctx.exec(command, None)
        }
    }
}

fn memory(ctx: &Ctx, m: MemoryCmd) -> CliResult {
    match m {
        MemoryCmd::Put { key, kind, body, files } => {
            let kind: MemoryKind = parse(&kind)?;
            ctx.exec(Command::PutMemory { key, kind, body, file_pointers: files }, None)
        }
        MemoryCmd::Lookup { kind, prefix } => {
            let store = ctx.reader()?;
            let kind = kind.as_deref().map(parse::<MemoryKind>).transpose()?;
            for e in store.project().memory.lookup(kind, prefix.as_deref()) {
                println!("{}", canonical::to_string(e));
            }
            Ok(())
        }
    }
}

fn report(ctx: &Ctx, r: ReportCmd) -> CliResult {
    let store = ctx.reader()?;
    let p = store.project();
    match r {
        ReportCmd::Iso { cycle, mappings, json } => {
            let mappings = match mappings {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|source| StoreError::Io { path: path.clone(), source })?;
                    data::parse_mappings(&text, &path.display().to_string())?
                }
                None => data::default_mappings(),
            };
            let id = cycle_or_latest(p, cycle.as_deref())?;
            let present = store.documents_present();
            let report = iso_report(StoreView { project: p, documents_present: &present }, &mappings, id)?;
            if json {
                println!("{}", canonical::to_pretty(&report));
            } else {
                print!("{}", report.render_markdown());
            }
        }
        ReportCmd::Decisions { cycle } => {
            let id = cycle_or_latest(p, cycle.as_deref())?;
            print!("{}", decision_log(p, id)?);
        }
        ReportCmd::Bundle { cycle, out } => {
            let id: CycleId = parse(&cycle)?;
            let tar = evidence_bundle(p, id)?.to_tar();
            let out = out.unwrap_or_else(|| PathBuf::from(format!("evidence-{id}.tar")));
            std::fs::write(&out, &tar).map_err(|source| StoreError::Io { path: out.clone(), source })?;
            println!("wrote {} ({} bytes)", out.display(), tar.len());
        }
        ReportCmd::Matrix { cycle } => {
            let id = cycle.as_deref().map(parse::<CycleId>).transpose()?;
            print!("{}", render_matrix_as_of(&p.matrix, id));
        }
    }
    Ok(())
}

fn cost(c: CostCmd) -> CliResult {
    match c {
        CostCmd::Estimate { pricing, tokens } => {
            let rows: Vec<PricingRow> = match pricing {
                Some(path) => read_json(&path)?,
                None => reference_pricing(),
            };
            let (tin, tout) = tokens
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?)))
                .ok_or_else(|| CliError::Usage(format!("--tokens expects `in,out`, got {tokens:?}")))?;
            println!("| Model | Input | Output | Total |");
            println!("|---|---:|---:|---:|");
            for row in &rows {
                row.validate()?;
                let c = compute_cost(tin, tout, row)?;
                let note = if row.observed { " (observed bill)" } else { "" };
                println!("| {}{note} | {} | {} | {} |", row.model, c.input_cost, c.output_cost, c.total);
            }
            Ok(())
        }
        CostCmd::Sensitivity { scenarios, stress } => {
            let mut scenarios: Vec<Scenario> = match scenarios {
                Some(path) => read_json(&path)?,
                None => reference_scenarios(),
            };
            if let Some(m) = stress {
                for s in &mut scenarios {
                    // rejects non-positive multipliers before scaling
                    price_stress(s, m)?;
                    s.compute_cost_per_cycle *= m;
                }
            }
            print!("{}", render_sensitivity_table(&scenarios)?);
            Ok(())
        }
    }
}
