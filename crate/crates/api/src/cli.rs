//! `twai` command line. Each subcommand opens the workspace, drives the same
//! workbench operations as the HTTP API, prints a human summary (or JSON
//! with `--json`) and exits 0, 1 on operational errors or 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use twai_core::scorecard::{self, TrustItem};
use twai_core::session::{Mode, Turn, VerificationArtifact, VerificationRecord};
use twai_core::source::CorpusDocument;
use twai_core::store::SessionArchive;
use twai_core::{Error, Workbench};

use crate::config::{self, Flags, Settings};
use crate::error::ApiError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OPERATIONAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "twai",
    version,
    about = "Generate, verify and decide with several AI providers"
)]
pub struct Cli {
    /// Workspace directory [env: TWAI_WORKSPACE]
    #[arg(long, global = true)]
    pub workspace: Option<PathBuf>,
    /// Provider specs (JSON array) [env: TWAI_PROVIDERS]
    #[arg(long, global = true)]
    pub providers: Option<PathBuf>,
    /// Search fixture used by double check [env: TWAI_SEARCH_FIXTURE]
    #[arg(long = "search-fixture", global = true)]
    pub search_fixture: Option<PathBuf>,
    /// TOML config file [env: TWAI_CONFIG]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print JSON instead of tables
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API
    Serve {
        /// Port to listen on [env: TWAI_PORT]
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Create, list and inspect sessions
    #[command(subcommand)]
    Session(SessionCommand),
    /// Add text (.txt) or JSON corpus documents used by source verification
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Document id (single file only; default: file stem)
        #[arg(long)]
        doc_id: Option<String>,
        /// Document title (single file only; default: file stem)
        #[arg(long)]
        title: Option<String>,
    },
    /// Send a prompt to providers and record the answers as a new turn
    Generate {
        prompt: String,
        /// Existing session; a new one is created when omitted
        #[arg(long)]
        session: Option<String>,
        /// Title for a new session
        #[arg(long)]
        title: Option<String>,
        /// Provider id, repeatable (default: every configured provider)
        #[arg(id = "provider", long = "provider")]
        providers: Vec<String>,
    },
    /// Verify one response by source or double check
    Verify {
        session: String,
        #[arg(value_enum)]
        method: Method,
        response_id: String,
    },
    /// Compare providers on a prompt, or the responses of an existing turn
    Compare {
        session: String,
        #[arg(long, conflicts_with = "prompt")]
        turn: Option<usize>,
        #[arg(long, required_unless_present = "turn")]
        prompt: Option<String>,
        #[arg(id = "provider", long = "provider")]
        providers: Vec<String>,
    },
    /// Show the decision table, or record a choice with --choose
    Decide {
        session: String,
        #[arg(long)]
        choose: Option<String>,
        #[arg(long, default_value = "")]
        rationale: String,
    },
    /// Trust scorecard entries and reports
    #[command(subcommand)]
    Scorecard(ScorecardCommand),
    /// Write a session archive
    Export { session: String, out: PathBuf },
    /// Load a session archive into the workspace
    Import { archive: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    New {
        #[arg(default_value = "")]
        title: String,
    },
    List,
    Show {
        session: String,
    },
    /// Switch mode
    Mode {
        session: String,
        #[arg(value_enum)]
        mode: ModeArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScorecardCommand {
    /// Record every row of a CSV file
    Record { csv: PathBuf },
    /// Per-item means and overall score for one tool
    Aggregate { tool: String },
    /// Differences b − a between two tools
    Compare { tool_a: String, tool_b: String },
    /// Write all entries as CSV
    Export { out: PathBuf },
    /// List the six statements
    Items,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Method {
    Source,
    DoubleCheck,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Generation,
    Verification,
    Decision,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Generation => Mode::Generation,
            ModeArg::Verification => Mode::Verification,
            ModeArg::Decision => Mode::Decision,
        }
    }
}

/// Entry point used by `main`.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(
        std::env::args_os(),
        |k| std::env::var(k).ok(),
        &mut stdout.lock(),
        &mut stderr.lock(),
    )
}

/// Parse `args` and execute. Environment lookups go through `env`.
pub fn run<I, T>(args: I, env: impl Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match execute(cli, env, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {}", e.code, e.message);
            EXIT_OPERATIONAL
        }
    }
}

struct Output<'a> {
    json: bool,
    out: &'a mut dyn Write,
}

impl Output<'_> {
    /// JSON mode prints `value`; human mode runs `human`.
    fn emit<T: Serialize>(
        &mut self,
        value: &T,
        human: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<(), ApiError> {
        let io = |e: std::io::Error| ApiError::new("IoError", e.to_string());
        if self.json {
            let text = serde_json::to_string_pretty(value).map_err(|e| ApiError::new("IoError", e.to_string()))?;
            writeln!(self.out, "{text}").map_err(io)
        } else {
            human(self.out).map_err(io)
        }
    }
}

fn execute(cli: Cli, env: impl Fn(&str) -> Option<String>, out: &mut dyn Write) -> Result<(), ApiError> {
    let flags = Flags {
        workspace: cli.workspace.clone(),
        port: match &cli.command {
            Command::Serve { port, .. } => *port,
            _ => None,
        },
        providers: cli.providers.clone(),
        search_fixture: cli.search_fixture.clone(),
        config: cli.config.clone(),
    };
    let settings = config::resolve(&flags, env)?;
    let mut o = Output { json: cli.json, out };

    if let Command::Scorecard(ScorecardCommand::Items) = cli.command {
        let items: Vec<_> = TrustItem::ALL
            .iter()
            .map(|i| json!({"item_id": i, "statement": i.statement(), "scored": i.is_scored()}))
            .collect();
        return o.emit(&items, |w| {
            for i in TrustItem::ALL {
                writeln!(w, "{:<20} {}", i.id(), i.statement())?;
            }
            Ok(())
        });
    }

    let wb = config::open_workbench(&settings)?;
    match cli.command {
        Command::Serve { host, .. } => serve(wb, &settings, host, &mut o),
        Command::Session(cmd) => session_command(&wb, cmd, &mut o),
        Command::Ingest { files, doc_id, title } => ingest(&wb, &files, doc_id, title, &mut o),
        Command::Generate {
            prompt,
            session,
            title,
            providers,
        } => {
            let session_id = match session {
                Some(id) => {
                    wb.switch_mode(&id, Mode::Generation)?;
                    id
                }
                None => wb.create_session(title.as_deref().unwrap_or(&prompt))?.id,
            };
            let providers = default_providers(&wb, providers);
            let turn = wb.submit_prompt(&session_id, &prompt, &providers)?;
            o.emit(&json!({"session_id": session_id, "turn": turn}), |w| {
                writeln!(w, "session {session_id}")?;
                print_turn(w, &turn)
            })
        }
        Command::Verify {
            session,
            method,
            response_id,
        } => {
            wb.switch_mode(&session, Mode::Verification)?;
            let rec = match method {
                Method::Source => wb.verify_source(&session, &response_id)?,
                Method::DoubleCheck => wb.double_check(&session, &response_id)?,
            };
            o.emit(&rec, |w| print_verification(w, &rec))
        }
        Command::Compare {
            session,
            turn,
            prompt,
            providers,
        } => {
            let rec = match (turn, prompt) {
                (Some(index), _) => {
                    ensure_compare_mode(&wb, &session)?;
                    wb.compare_turn(&session, index)?
                }
                (None, Some(prompt)) => {
                    ensure_compare_mode(&wb, &session)?;
                    let providers = default_providers(&wb, providers);
                    wb.run_compare(&session, &prompt, &providers)?.1
                }
                (None, None) => return Err(ApiError::invalid_request("give --turn or --prompt")),
            };
            o.emit(&rec, |w| print_verification(w, &rec))
        }
        Command::Decide {
            session,
            choose,
            rationale,
        } => match choose {
            None => {
                let table = wb.decision_table(&session)?;
                o.emit(&table, |w| write!(w, "{}", table.to_text()))
            }
            Some(response_id) => {
                wb.switch_mode(&session, Mode::Decision)?;
                let rec = wb.record_decision(&session, &response_id, &rationale)?;
                o.emit(&rec, |w| {
                    writeln!(w, "decision {} recorded: chose {}", rec.id, rec.chosen_response_id)
                })
            }
        },
        Command::Scorecard(cmd) => scorecard_command(&wb, cmd, &mut o),
        Command::Export { session, out } => {
            let archive = wb.export_session(&session)?;
            archive.write_file(&out).map_err(Error::from)?;
            o.emit(&archive.manifest, |w| {
                writeln!(
                    w,
                    "wrote {} records of session {} to {}",
                    archive.manifest.total,
                    session,
                    out.display()
                )
            })
        }
        Command::Import { archive } => {
            let archive = SessionArchive::read_file(&archive).map_err(Error::from)?;
            let session = wb.import_archive(&archive)?;
            o.emit(
                &json!({"session_id": session.id, "records": archive.manifest.total}),
                |w| {
                    writeln!(
                        w,
                        "imported session {} ({} records)",
                        session.id, archive.manifest.total
                    )
                },
            )
        }
    }
}

fn default_providers(wb: &Workbench, requested: Vec<String>) -> Vec<String> {
    if requested.is_empty() {
        wb.registry().ids()
    } else {
        requested
    }
}

/// Compare runs in generation or verification mode; from decision mode the
/// CLI steps back to generation first.
fn ensure_compare_mode(wb: &Workbench, session: &str) -> Result<(), ApiError> {
    if wb.mode_state(session)?.current == Mode::Decision {
        wb.switch_mode(session, Mode::Generation)?;
    }
    Ok(())
}

fn serve(wb: Workbench, settings: &Settings, host: IpAddr, o: &mut Output<'_>) -> Result<(), ApiError> {
    let addr = SocketAddr::new(host, settings.port);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| ApiError::new("IoError", e.to_string()))?;
    let _ = writeln!(o.out, "listening on http://{addr}");
    let _ = o.out.flush();
    runtime.block_on(crate::http::serve(wb, addr))
}

fn session_command(wb: &Workbench, cmd: SessionCommand, o: &mut Output<'_>) -> Result<(), ApiError> {
    match cmd {
        SessionCommand::New { title } => {
            let s = wb.create_session(&title)?;
            o.emit(&s, |w| writeln!(w, "{}", s.id))
        }
        SessionCommand::List => {
            let list = wb.list_sessions();
            o.emit(&list, |w| {
                writeln!(
                    w,
                    "{:<38} {:<13} {:>5} {:>6} {:>9}  title",
                    "id", "mode", "turns", "checks", "decisions"
                )?;
                for s in &list {
                    writeln!(
                        w,
                        "{:<38} {:<13} {:>5} {:>6} {:>9}  {}",
                        s.id, s.mode, s.turns, s.verifications, s.decisions, s.title
                    )?;
                }
                Ok(())
            })
        }
        SessionCommand::Show { session } => {
            let s = wb.session(&session)?;
            o.emit(&s, |w| {
                writeln!(w, "session {} \"{}\" ({} mode)", s.id, s.title, s.mode)?;
                for turn in &s.turns {
                    print_turn(w, turn)?;
                }
                writeln!(
                    w,
                    "{} verifications, {} decisions",
                    s.verifications.len(),
                    s.decisions.len()
                )
            })
        }
        SessionCommand::Mode { session, mode } => {
            let state = wb.switch_mode(&session, mode.into())?;
            o.emit(&state, |w| writeln!(w, "mode: {}", state.current))
        }
    }
}

fn read_documents(
    path: &Path,
    doc_id: Option<&String>,
    title: Option<&String>,
) -> Result<Vec<CorpusDocument>, ApiError> {
    let raw = fs::read_to_string(path).map_err(|e| ApiError::invalid_request(format!("{}: {e}", path.display())))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "document".into());
    if path.extension().is_some_and(|e| e == "json") {
        let value: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| ApiError::invalid_request(format!("{}: {e}", path.display())))?;
        let docs = if value.is_array() {
            serde_json::from_value::<Vec<CorpusDocument>>(value)
        } else {
            serde_json::from_value::<CorpusDocument>(value).map(|d| vec![d])
        };
        return docs.map_err(|e| ApiError::invalid_request(format!("{}: {e}", path.display())));
    }
    Ok(vec![CorpusDocument::new(
        doc_id.cloned().unwrap_or_else(|| stem.clone()),
        title.cloned().unwrap_or(stem),
        raw,
    )])
}

fn ingest(
    wb: &Workbench,
    files: &[PathBuf],
    doc_id: Option<String>,
    title: Option<String>,
    o: &mut Output<'_>,
) -> Result<(), ApiError> {
    if files.len() > 1 && (doc_id.is_some() || title.is_some()) {
        return Err(ApiError::invalid_request("--doc-id and --title need a single file"));
    }
    let mut results = Vec::new();
    for path in files {
        for doc in read_documents(path, doc_id.as_ref(), title.as_ref())? {
            let id = doc.doc_id.clone();
            let chunks = wb.ingest_document(doc)?;
            results.push(json!({"doc_id": id, "chunks": chunks}));
        }
    }
    o.emit(&results, |w| {
        for r in &results {
            writeln!(
                w,
                "ingested {}: {} chunks",
                r["doc_id"].as_str().unwrap_or(""),
                r["chunks"]
            )?;
        }
        Ok(())
    })
}

fn scorecard_command(wb: &Workbench, cmd: ScorecardCommand, o: &mut Output<'_>) -> Result<(), ApiError> {
    match cmd {
        ScorecardCommand::Record { csv } => {
            let file =
                fs::File::open(&csv).map_err(|e| ApiError::invalid_request(format!("{}: {e}", csv.display())))?;
            let entries = scorecard::read_csv(file).map_err(Error::from)?;
            let n = entries.len();
            for entry in entries {
                wb.record_scorecard(entry)?;
            }
            o.emit(&json!({"recorded": n}), |w| writeln!(w, "recorded {n} entries"))
        }
        ScorecardCommand::Aggregate { tool } => {
            let report = wb.aggregate_scorecard(&tool)?;
            o.emit(&report, |w| {
                writeln!(w, "tool {} ({} raters)", report.tool_id, report.n_raters)?;
                for (item, mean) in &report.per_item_mean {
                    writeln!(w, "  {:<20} {mean:+.3}", item.id())?;
                }
                writeln!(w, "  {:<20} {:+.3}", "satisfaction", report.satisfaction_mean)?;
                writeln!(w, "overall {}", report.overall_mean_of_sums)
            })
        }
        ScorecardCommand::Compare { tool_a, tool_b } => {
            let delta = wb.compare_tools(&tool_a, &tool_b)?;
            o.emit(&delta, |w| {
                writeln!(w, "{} → {}", delta.tool_a, delta.tool_b)?;
                for (item, d) in &delta.per_item_delta {
                    writeln!(w, "  {:<20} {d:+.3}", item.id())?;
                }
                writeln!(w, "overall delta {}", delta.overall_delta)
            })
        }
        ScorecardCommand::Export { out } => {
            let entries = wb.scorecard_entries();
            let file =
                fs::File::create(&out).map_err(|e| ApiError::new("IoError", format!("{}: {e}", out.display())))?;
            scorecard::write_csv(file, &entries).map_err(Error::from)?;
            o.emit(&json!({"exported": entries.len()}), |w| {
                writeln!(w, "wrote {} entries to {}", entries.len(), out.display())
            })
        }
        ScorecardCommand::Items => unreachable!("handled before opening the workspace"),
    }
}

fn print_turn(w: &mut dyn Write, turn: &Turn) -> std::io::Result<()> {
    writeln!(w, "turn {}: {}", turn.index, turn.prompt_text)?;
    for r in &turn.responses {
        writeln!(w, "  [{}] response {} ({} ms)", r.provider_id, r.id, r.latency_ms)?;
        for c in turn.claims_of(&r.id) {
            writeln!(w, "    {} {}", if c.checkable { "•" } else { "·" }, c.text)?;
        }
    }
    for e in &turn.errors {
        writeln!(w, "  [{}] failed: {}", e.provider_id, e.message)?;
    }
    Ok(())
}

fn print_verification(w: &mut dyn Write, rec: &VerificationRecord) -> std::io::Result<()> {
    match &rec.artifact {
        VerificationArtifact::Source(v) => {
            writeln!(
                w,
                "source {}: coverage {:.3} ({}/{} claims), {}",
                v.response_id,
                v.coverage,
                v.matched_claims,
                v.checkable_claims,
                if v.passed { "passed" } else { "not passed" }
            )?;
            for c in &v.citations {
                writeln!(w, "  {}", c.guidance())?;
            }
        }
        VerificationArtifact::DoubleCheck(r) => {
            writeln!(
                w,
                "double check {}: coverage {:.3} ({}/{} claims), {}",
                r.response_id,
                r.coverage,
                r.supported_claims,
                r.checkable_claims,
                if r.passed { "passed" } else { "not passed" }
            )?;
            for h in &r.highlights {
                match h.guidance().as_str() {
                    "" => writeln!(w, "  {:?} {}: not checkable", h.color, h.claim_id)?,
                    g => writeln!(w, "  {:?} {}: {g}", h.color, h.claim_id)?,
                }
            }
            for warning in &r.warnings {
                writeln!(w, "  warning: {warning}")?;
            }
        }
        VerificationArtifact::Compare(c) => {
            writeln!(
                w,
                "compare across {}: {} clusters, {} shared",
                c.provider_ids.join(", "),
                c.clusters.len(),
                c.common_clusters.len()
            )?;
            for cluster in &c.common_clusters {
                writeln!(w, "  shared by {}: {}", cluster.support, cluster.representative_text)?;
            }
            for (response, coverage) in &c.per_response_coverage {
                writeln!(w, "  {response}: coverage {coverage:.3}")?;
            }
            for (provider, reason) in &c.failures {
                writeln!(w, "  {provider} failed: {reason}")?;
            }
        }
    }
    writeln!(w, "verification {}", rec.id)
}
