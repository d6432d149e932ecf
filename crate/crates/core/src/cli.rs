//! Command-line front end: `simulate`, `equilibrium`, `analyze` and
//! `replicate`. Every command validates its inputs before writing anything
//! and records sha256 digests of what it wrote in `manifest.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::econometrics::{analyze, render_text, AnalysisReport, TreatmentSummary};
use crate::equilibrium::{solve, EquilibriumDocument};
use crate::game_core::{FalsificationConvention, Sequence, TreatmentId, TreatmentSpec};
use crate::rng::{label, stream_key};
use crate::session::{
    import_log, run_session, write_records, Pairing, Payout, RosterPolicy, SessionConfig,
    SessionError, SessionLog,
};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn runtime(stage: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{stage}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "infoshare", version, about = "Costly information-sharing game: simulate, solve, analyze")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one session from a JSON config and write its event log.
    Simulate(SimulateArgs),
    /// Solve the low-information stage game exactly.
    Equilibrium(EquilibriumArgs),
    /// Summaries, reaction-function regressions and tests for a log.
    Analyze(AnalyzeArgs),
    /// Both treatment orders with calibrated agents, analysis and checklist.
    Replicate(ReplicateArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; output does not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EquilibriumArgs {
    #[arg(long)]
    pub treatment: String,
    #[arg(long, default_value = "deceptive")]
    pub conventions: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Participants per treatment order.
    #[arg(long, default_value_t = 50)]
    pub participants: u32,
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Equilibrium(a) => cmd_equilibrium(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Replicate(a) => cmd_replicate(&a),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files in memory, then writes them and the manifest.
struct Bundle {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    fn new(dir: &Path) -> Self {
        Bundle {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| runtime("serialize", e))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn write(self, command: &str, seed: Option<u64>, config: serde_json::Value) -> Result<RunManifest, CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| runtime(&format!("create {}", self.dir.display()), e))?;
        let mut artifacts = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes).map_err(|e| runtime(&format!("write {}", path.display()), e))?;
            artifacts.push(Artifact {
                name: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len(),
            });
        }
        let manifest = RunManifest {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            seed,
            config,
            artifacts,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| runtime("serialize", e))?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, bytes).map_err(|e| runtime(&format!("write {}", path.display()), e))?;
        Ok(manifest)
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Validation("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| runtime("thread pool", e))?;
            Ok(pool.install(f))
        }
    }
}

/// Names the config key a validation failure is about.
fn config_error(e: SessionError) -> CliError {
    let key = match &e {
        SessionError::ParticipantCount(_) => "participants",
        SessionError::RosterSize { .. } | SessionError::Policy { .. } | SessionError::MissingTreatmentPolicy(_) => {
            "agents"
        }
        _ => return runtime("session", e),
    };
    CliError::Validation(format!("invalid config key `{key}`: {e}"))
}

pub fn parse_config(text: &str) -> Result<SessionConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Validation(format!("invalid config: {e}")))
}

#[derive(Serialize)]
struct SessionExtras<'a> {
    session_id: u64,
    sequence: Sequence,
    paid_round: u32,
    payouts: &'a [Payout],
    pairings: Vec<(TreatmentId, &'a Pairing)>,
}

fn extras(log: &SessionLog) -> SessionExtras<'_> {
    SessionExtras {
        session_id: log.session_id,
        sequence: log.sequence,
        paid_round: log.paid_round,
        payouts: &log.payouts,
        pairings: log.pairings.iter().map(|p| (p.treatment, &p.pairing)).collect(),
    }
}

fn csv_bytes(records: &[crate::game_core::RoundRecord]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_records(records, &mut buf).map_err(|e| runtime("export", e))?;
    Ok(buf)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate().map_err(config_error)?;
    if args.threads == Some(0) {
        return Err(CliError::Validation("--threads must be at least 1".into()));
    }
    let log = with_threads(args.threads, || run_session(&config))?.map_err(|e| runtime("simulate", e))?;
    let mut bundle = Bundle::new(&args.out);
    bundle.add("log.csv", csv_bytes(&log.records)?);
    bundle.add_json("session.json", &extras(&log))?;
    let resolved = serde_json::to_value(&config).map_err(|e| runtime("serialize", e))?;
    let manifest = bundle.write("simulate", Some(config.seed), resolved)?;
    Ok(format!(
        "wrote {} records to {} (log.csv sha256 {})\n",
        log.records.len(),
        args.out.display(),
        manifest.artifacts[0].sha256
    ))
}

pub fn parse_treatment(s: &str) -> Result<TreatmentId, CliError> {
    s.parse().map_err(|e| CliError::Validation(format!("--treatment: {e}")))
}

pub fn parse_convention(s: &str) -> Result<FalsificationConvention, CliError> {
    s.parse().map_err(|e| CliError::Validation(format!("--conventions: {e}")))
}

pub fn render_equilibrium_text(doc: &EquilibriumDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Treatment {} ({} falsification), expected payoffs in cents (row, column)",
        doc.treatment, doc.convention
    );
    let _ = write!(s, "{:<16}", "");
    for c in &doc.strategies {
        let _ = write!(s, "{c:>20}");
    }
    let _ = writeln!(s);
    for (label, row) in doc.strategies.iter().zip(&doc.matrix) {
        let _ = write!(s, "{label:<16}");
        for cell in row {
            let v = format!("{:.1}, {:.1}", cell.row_payoff.0.to_f(), cell.col_payoff.0.to_f());
            let _ = write!(s, "{v:>20}");
        }
        let _ = writeln!(s);
    }
    let profiles = |ps: &[crate::equilibrium::Profile]| {
        ps.iter()
            .map(|p| format!("{} vs {}", p.row, p.col))
            .collect::<Vec<_>>()
            .join("; ")
    };
    let _ = writeln!(s, "\nPure Nash equilibria: {}", profiles(&doc.report.pure_nash));
    let _ = writeln!(
        s,
        "Maximum total payoff {}: {}",
        doc.report.max_total_payoff.0,
        profiles(&doc.report.max_total_profiles)
    );
    let _ = writeln!(s, "Pareto-optimal profiles: {}", doc.report.pareto_optimal.len());
    let f = &doc.report.falsification;
    if f.never_strict_best_response {
        let _ = writeln!(s, "No falsifying strategy is a strict best response.");
    } else {
        for w in &f.strict_wins {
            let _ = writeln!(
                s,
                "Against {}: {} earns {} > best truthful {}",
                w.opponent,
                w.falsifying.join(", "),
                w.falsifying_payoff.0,
                w.best_truthful_payoff.0
            );
        }
    }
    s
}

trait ToF {
    fn to_f(&self) -> f64;
}

impl ToF for crate::equilibrium::Exact {
    fn to_f(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

fn emit(out: Option<&Path>, content: String) -> Result<String, CliError> {
    match out {
        None => Ok(content),
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| runtime(&format!("create {}", parent.display()), e))?;
            }
            fs::write(path, &content).map_err(|e| runtime(&format!("write {}", path.display()), e))?;
            Ok(format!("wrote {} (sha256 {})\n", path.display(), sha256_hex(content.as_bytes())))
        }
    }
}

pub fn cmd_equilibrium(args: &EquilibriumArgs) -> Result<String, CliError> {
    let t = parse_treatment(&args.treatment)?;
    let conv = parse_convention(&args.conventions)?;
    let doc = solve(&TreatmentSpec::standard(t), conv).map_err(|e| CliError::Validation(e.to_string()))?;
    let content = match args.format {
        Format::Json => serde_json::to_string_pretty(&doc).map_err(|e| runtime("serialize", e))? + "\n",
        Format::Text => render_equilibrium_text(&doc),
    };
    emit(args.out.as_deref(), content)
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<String, CliError> {
    let records = import_log(&args.log).map_err(|e| match e {
        SessionError::Io(_) => CliError::Validation(format!("cannot read log {}: {e}", args.log.display())),
        other => CliError::Validation(format!("{}: {other}", args.log.display())),
    })?;
    let report = analyze(&records);
    let content = match args.format {
        Format::Json => serde_json::to_string_pretty(&report).map_err(|e| runtime("serialize", e))? + "\n",
        Format::Text => render_text(&report),
    };
    emit(args.report.as_deref(), content)
}

/// Target mean #Shared per treatment.
pub const TARGET_MEAN_SHARED: [f64; 4] = [1.616, 1.284, 1.721, 1.140];
pub const MEAN_SHARED_TOLERANCE: f64 = 0.15;
/// Target both-zero pair-round rate per treatment.
pub const TARGET_BOTH_ZERO: [f64; 4] = [0.034, 0.094, 0.16, 0.35];
pub const BOTH_ZERO_TOLERANCE: f64 = 0.05;
pub const ACCURACY_GAP: f64 = 0.10;
/// Band read as "near 50%" for tournament accuracy.
pub const TOURNAMENT_ACCURACY_BAND: (f64, f64) = (0.40, 0.60);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Behavioral checks on per-treatment summaries.
pub fn behavioral_checklist(summaries: &[TreatmentSummary]) -> Vec<CheckItem> {
    let get = |t: TreatmentId| summaries.iter().find(|s| s.treatment == t);
    let mut items = Vec::new();
    let mut check = |name: String, passed: bool, detail: String| items.push(CheckItem { name, passed, detail });
    let all: Option<Vec<&TreatmentSummary>> = TreatmentId::ALL.iter().map(|&t| get(t)).collect();
    let Some(s) = all else {
        check("all four treatments present".into(), false, "log lacks a treatment".into());
        return items;
    };
    for (i, t) in TreatmentId::ALL.iter().enumerate() {
        let m = s[i].mean_shared;
        check(
            format!("mean #Shared {t} within {MEAN_SHARED_TOLERANCE} of {}", TARGET_MEAN_SHARED[i]),
            (m - TARGET_MEAN_SHARED[i]).abs() <= MEAN_SHARED_TOLERANCE,
            format!("{m:.4}"),
        );
    }
    check(
        "mean #Shared A > B".into(),
        s[0].mean_shared > s[1].mean_shared,
        format!("{:.4} vs {:.4}", s[0].mean_shared, s[1].mean_shared),
    );
    check(
        "mean #Shared C > D".into(),
        s[2].mean_shared > s[3].mean_shared,
        format!("{:.4} vs {:.4}", s[2].mean_shared, s[3].mean_shared),
    );
    for (coop, tour) in [(0usize, 1usize), (2, 3)] {
        let (a, b) = (s[coop].accuracy_rate, s[tour].accuracy_rate);
        check(
            format!(
                "accuracy {} exceeds {} by at least {} points",
                TreatmentId::ALL[coop],
                TreatmentId::ALL[tour],
                ACCURACY_GAP * 100.0
            ),
            a - b >= ACCURACY_GAP,
            format!("{a:.4} vs {b:.4}"),
        );
        let (lo, hi) = TOURNAMENT_ACCURACY_BAND;
        check(
            format!("tournament accuracy {} within [{lo}, {hi}]", TreatmentId::ALL[tour]),
            (lo..=hi).contains(&b),
            format!("{b:.4}"),
        );
    }
    let z: Vec<f64> = s.iter().map(|x| x.both_zero_rate).collect();
    check(
        "both-zero rate ordering A < B < C < D".into(),
        z[0] < z[1] && z[1] < z[2] && z[2] < z[3],
        format!("{:.4} {:.4} {:.4} {:.4}", z[0], z[1], z[2], z[3]),
    );
    for (i, t) in TreatmentId::ALL.iter().enumerate() {
        check(
            format!("both-zero rate {t} within {BOTH_ZERO_TOLERANCE} of {}", TARGET_BOTH_ZERO[i]),
            (z[i] - TARGET_BOTH_ZERO[i]).abs() <= BOTH_ZERO_TOLERANCE,
            format!("{:.4}", z[i]),
        );
    }
    items
}

/// Stage-game checks on the deceptive-convention matrices for A and B.
pub fn equilibrium_checklist(a: &EquilibriumDocument, b: &EquilibriumDocument) -> Vec<CheckItem> {
    let zero = "(S0,trust)";
    let zero_ne = b.report.pure_nash.iter().any(|p| p.row == zero && p.col == zero);
    let zero_pareto = b.report.pareto_optimal.iter().any(|p| p.row == zero && p.col == zero);
    let full = |p: &crate::equilibrium::Profile| p.row.starts_with("(S2") || p.col.starts_with("(S2");
    let coop_ne = a
        .report
        .pure_nash
        .iter()
        .find(|p| full(p) && a.report.pareto_optimal.iter().any(|q| q.row == p.row && q.col == p.col));
    let mut items = vec![
        CheckItem {
            name: "tournament zero sharing is a pure Nash equilibrium".into(),
            passed: zero_ne,
            detail: format!("{} equilibria", b.report.pure_nash.len()),
        },
        CheckItem {
            name: "tournament zero-sharing equilibrium is not Pareto-optimal".into(),
            passed: zero_ne && !zero_pareto,
            detail: format!("{} Pareto-optimal profiles", b.report.pareto_optimal.len()),
        },
        CheckItem {
            name: "cooperative full-transfer equilibrium is Pareto-optimal".into(),
            passed: coop_ne.is_some(),
            detail: coop_ne.map(|p| format!("{} vs {}", p.row, p.col)).unwrap_or_default(),
        },
    ];
    for d in [a, b] {
        let f = &d.report.falsification;
        items.push(CheckItem {
            name: format!("treatment {}: no falsifying strict best response ({})", d.treatment, d.convention),
            passed: f.never_strict_best_response,
            detail: f
                .strict_wins
                .iter()
                .map(|w| format!("{} vs {}", w.falsifying.join("/"), w.opponent))
                .collect::<Vec<_>>()
                .join("; "),
        });
    }
    items
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub seed: u64,
    pub participants_per_order: u32,
    pub checklist: Vec<CheckItem>,
    pub passed: usize,
    pub total: usize,
}

pub fn replication_config(seed: u64, participants: u32, sequence: Sequence) -> SessionConfig {
    let mut c = SessionConfig::uniform(
        stream_key(seed, &[label("replicate"), label(&sequence.to_string())]),
        participants,
        sequence,
        RosterPolicy::Calibrated,
    );
    c.session_id = Some(match sequence {
        Sequence::Abcd => 1,
        Sequence::Badc => 2,
    });
    c
}

pub fn cmd_replicate(args: &ReplicateArgs) -> Result<String, CliError> {
    let configs = [Sequence::Abcd, Sequence::Badc].map(|s| replication_config(args.seed, args.participants, s));
    for c in &configs {
        c.validate().map_err(config_error)?;
    }
    if args.threads == Some(0) {
        return Err(CliError::Validation("--threads must be at least 1".into()));
    }
    fs::create_dir_all(&args.out).map_err(|e| runtime(&format!("stage output: create {}", args.out.display()), e))?;
    let probe = args.out.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| runtime(&format!("stage output: {} is not writable", args.out.display()), e))?;
    let _ = fs::remove_file(&probe);

    let logs = with_threads(args.threads, || {
        configs.iter().map(run_session).collect::<Result<Vec<_>, _>>()
    })?
    .map_err(|e| runtime("stage simulate", e))?;
    let records: Vec<_> = logs.iter().flat_map(|l| l.records.iter().cloned()).collect();
    let report: AnalysisReport = analyze(&records);
    let eq = [TreatmentId::A, TreatmentId::B].map(|t| {
        solve(&TreatmentSpec::standard(t), FalsificationConvention::Deceptive).map_err(|e| runtime("stage equilibrium", e))
    });
    let [eq_a, eq_b] = eq;
    let (eq_a, eq_b) = (eq_a?, eq_b?);

    let mut checklist = behavioral_checklist(&report.summaries);
    checklist.extend(equilibrium_checklist(&eq_a, &eq_b));
    let passed = checklist.iter().filter(|c| c.passed).count();
    let summary = ReplicationSummary {
        seed: args.seed,
        participants_per_order: args.participants,
        total: checklist.len(),
        passed,
        checklist,
    };

    let mut bundle = Bundle::new(&args.out);
    bundle.add("log.csv", csv_bytes(&records)?);
    bundle.add_json("sessions.json", &logs.iter().map(extras).collect::<Vec<_>>())?;
    bundle.add_json("report.json", &report)?;
    bundle.add("report.txt", render_text(&report).into_bytes());
    bundle.add_json("equilibrium_A.json", &eq_a)?;
    bundle.add_json("equilibrium_B.json", &eq_b)?;
    bundle.add_json("checklist.json", &summary)?;
    let config = serde_json::to_value(&configs).map_err(|e| runtime("serialize", e))?;
    bundle.write("replicate", Some(args.seed), config)?;

    let mut out = String::new();
    for c in &summary.checklist {
        let _ = writeln!(out, "[{}] {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let _ = writeln!(out, "{passed}/{} checks passed; bundle in {}", summary.total, args.out.display());
    Ok(out)
}
