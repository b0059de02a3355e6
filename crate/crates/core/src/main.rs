use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use concept_induction::config::{AppConfig, BackendSpec, CONFIG_ENV};
use concept_induction::eval::{self, ConceptHierarchy, GenerateOptions, ManualTrial, TrialsFile};
use concept_induction::gateway::{usage_report, Gateway, GatewayError, Tier};
use concept_induction::ingest::{ingest_path, Format, IngestOptions};
use concept_induction::model::{load_session_file, save_session_file, validate_session, Session, SessionConfig, TraceEvent};
use concept_induction::pipeline::{run_iterations, Progress};
use concept_induction::scoring::{matrix_csv, rescore_concept, score_missing, session_outlier_fraction, set_threshold};
use concept_induction::workbench::{router, AppState, GatewayFactory, ServiceOptions};
use concept_induction::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_PROVIDER: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Failure { code: EXIT_DATA, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Gateway(GatewayError::Template(_)) => EXIT_DATA,
            Error::Gateway(_) => EXIT_PROVIDER,
            Error::Session(_)
            | Error::Ingest(_)
            | Error::Predicate(_)
            | Error::Invalid(_)
            | Error::UnknownConcept(_)
            | Error::ConceptInactive(_)
            | Error::Clustering(_) => EXIT_DATA,
            Error::Pipeline(_) | Error::Io(_) => EXIT_OTHER,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_OTHER, message: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "conind", version, about = "Induce, score and inspect concepts in text collections")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a session file from a CSV or JSON-lines dataset.
    Ingest(IngestArgs),
    /// Generate concepts and score them.
    Induce(InduceArgs),
    /// Score unscored concepts, rescore named ones, or change the threshold.
    Score(ScoreArgs),
    /// Write the score matrix, concepts or trace.
    Export(ExportArgs),
    /// Token, cost and time totals by stage and tier.
    Usage(UsageArgs),
    /// Check session invariants.
    Validate { session: PathBuf },
    /// Run the workbench HTTP service.
    Serve(ServeArgs),
    #[command(subcommand)]
    Eval(EvalCommand),
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Args, Default)]
struct SessionFlags {
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    max_concepts: Option<usize>,
    #[arg(long)]
    seed_term: Option<String>,
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long)]
    loops: Option<u32>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    generic_fraction: Option<f64>,
    #[arg(long)]
    min_cluster_size: Option<usize>,
    #[arg(long)]
    max_concurrency: Option<usize>,
}

impl SessionFlags {
    fn apply(&self, cfg: &mut SessionConfig) -> CliResult {
        if let Some(v) = self.sample_size {
            cfg.sample_size = v;
        }
        if let Some(v) = self.max_concepts {
            cfg.max_concepts = v;
        }
        if let Some(v) = &self.seed_term {
            cfg.seed_term = Some(v.clone()).filter(|s| !s.trim().is_empty());
        }
        if let Some(v) = self.rng_seed {
            cfg.rng_seed = v;
        }
        if let Some(v) = self.loops {
            cfg.n_loops = v;
        }
        if let Some(v) = self.threshold {
            cfg.score_threshold = v;
        }
        if let Some(v) = self.generic_fraction {
            cfg.generic_fraction = v;
        }
        if let Some(v) = self.min_cluster_size {
            cfg.min_cluster_size = Some(v);
        }
        if let Some(v) = self.max_concurrency {
            cfg.max_concurrency = v;
        }
        let problems = cfg.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Failure::usage(problems.join("; ")))
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    path: PathBuf,
    #[arg(long)]
    text_col: String,
    /// Row index is used when absent.
    #[arg(long)]
    id_col: Option<String>,
    /// Session file to write; defaults to `<input stem>.session.json`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    session_id: Option<String>,
    #[command(flatten)]
    flags: SessionFlags,
}

#[derive(Args)]
struct InduceArgs {
    session: PathBuf,
    #[arg(long, default_value = "live")]
    backend: BackendSpec,
    /// Output path; the input file is updated when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: SessionFlags,
}

#[derive(Args)]
struct ScoreArgs {
    session: PathBuf,
    #[arg(long, default_value = "live")]
    backend: BackendSpec,
    /// Rescore these concepts.
    #[arg(long = "concept")]
    concepts: Vec<String>,
    /// Rescore every active concept.
    #[arg(long, conflicts_with = "concepts")]
    all: bool,
    /// Relabel with a new threshold; no provider calls.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportWhat {
    Matrix,
    Concepts,
    Trace,
}

#[derive(Args)]
struct ExportArgs {
    session: PathBuf,
    #[arg(long, value_enum)]
    what: ExportWhat,
    /// Standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct UsageArgs {
    session: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    session_dir: Option<PathBuf>,
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    #[arg(long)]
    allow_debug: bool,
    #[arg(long, default_value = "live")]
    backend: BackendSpec,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Generate verified synthetic paragraphs seeded with hierarchy concepts.
    GenerateSynthetic(SyntheticArgs),
    /// Coverage of ground-truth concepts by generated ones.
    Coverage(CoverageArgs),
    /// Accuracy, precision, recall and F1 from two label files.
    Metrics { predicted: PathBuf, gold: PathBuf, #[arg(long)] json: bool },
    /// Cohen's kappa between two label files.
    Kappa { labels_a: PathBuf, labels_b: PathBuf, #[arg(long)] json: bool },
    /// Coverage over repeated trials, reported as CSV.
    Trials(TrialsArgs),
    /// Mean absolute error of automated against manual coverage.
    Mae(MaeArgs),
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long)]
    doc_length: u32,
    #[arg(long)]
    prevalence: f64,
    /// Repeatable; every specific concept of the hierarchy when absent.
    #[arg(long = "seed-concept")]
    seed_concepts: Vec<String>,
    #[arg(long, default_value_t = 1)]
    n_docs: usize,
    #[arg(long, default_value_t = 5)]
    max_attempts: u32,
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    #[arg(long, default_value = "live")]
    backend: BackendSpec,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write JSON (documents with seed sentences) instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CoverageArgs {
    /// JSON list of ground-truth concept strings.
    #[arg(long)]
    ground_truth: PathBuf,
    /// JSON list of generated concept strings.
    #[arg(long, required_unless_present = "session", conflicts_with = "session")]
    generated: Option<PathBuf>,
    /// Use the active concepts of a session as the generated list.
    #[arg(long)]
    session: Option<PathBuf>,
    #[arg(long, default_value = "live")]
    backend: BackendSpec,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TrialsArgs {
    /// JSON with `ground_truth` per dataset and a `trials` list.
    input: PathBuf,
    #[arg(long, default_value_t = 10)]
    n_trials: usize,
    #[arg(long, default_value = "live")]
    backend: BackendSpec,
    /// Per-trial CSV destination.
    #[arg(long)]
    trials_out: Option<PathBuf>,
    /// Summary CSV destination; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MaeArgs {
    input: PathBuf,
    /// JSON list of manual matches per trial.
    #[arg(long)]
    manual: PathBuf,
    #[arg(long, default_value_t = 10)]
    n_trials: usize,
    #[arg(long, default_value = "live")]
    backend: BackendSpec,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Print the effective config as TOML.
    Print,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let app = AppConfig::load(cli.config.as_deref()).map_err(|e| Failure::usage(e.to_string()))?;
    match cli.command {
        Command::Ingest(a) => ingest(&app, a),
        Command::Induce(a) => induce(&app, a),
        Command::Score(a) => score(&app, a),
        Command::Export(a) => export(a),
        Command::Usage(a) => usage(a),
        Command::Validate { session } => validate(&session),
        Command::Serve(a) => serve(app, a),
        Command::Eval(e) => run_eval(&app, e),
        Command::Config(ConfigCommand::Print) => {
            print!("{}", app.to_toml());
            Ok(())
        }
    }
}

fn load(path: &Path) -> CliResult<Session> {
    Ok(load_session_file(path).map_err(Error::from)?)
}

fn save(session: &Session, path: &Path) -> CliResult {
    Ok(save_session_file(session, path).map_err(Error::from)?)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn gateway(backend: &BackendSpec, app: &AppConfig, config: &SessionConfig) -> CliResult<Gateway> {
    backend.gateway(app, config).map_err(|e| Failure { code: EXIT_PROVIDER, message: e.to_string() })
}

fn check_tiers(gw: &Gateway, tiers: &[Tier]) -> CliResult {
    gw.check_tiers(tiers).map_err(|e| Failure { code: EXIT_PROVIDER, message: e.to_string() })
}

fn ingest(app: &AppConfig, a: IngestArgs) -> CliResult {
    let opts = IngestOptions { text_col: a.text_col, id_col: a.id_col };
    Format::from_path(&a.path).map_err(|e| Failure::usage(e.to_string()))?;
    let report = ingest_path(&a.path, &opts).map_err(Error::from)?;
    let mut config = app.session.clone();
    a.flags.apply(&mut config)?;
    let stem = a.path.file_stem().and_then(|s| s.to_str()).unwrap_or("session").to_string();
    let id = a.session_id.unwrap_or_else(|| stem.clone());
    let out = a.out.unwrap_or_else(|| a.path.with_file_name(format!("{stem}.session.json")));
    let session = Session::new(id, report.documents.clone(), config);
    save(&session, &out)?;
    println!("accepted {} rows, rejected {}", report.accepted, report.rejected.len());
    for r in &report.rejected {
        println!("  row {}: {}", r.row, r.reason);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn print_concepts(session: &Session) {
    println!("{:<14} {:<32} {:>3} {:>8}  criteria", "id", "name", "gen", "matches");
    for c in session.active_concepts() {
        let matches = session.matrix.column(&c.id).map(|col| col.iter().filter(|e| e.label).count());
        let m = matches.map_or("-".to_string(), |n| n.to_string());
        let flag = if c.generic { " (generic)" } else { "" };
        println!("{:<14} {:<32} {:>3} {:>8}  {}{flag}", c.id, c.name, c.generation, m, c.criteria_prompt);
    }
    println!("outlier fraction {:.3}", session_outlier_fraction(session));
}

fn induce(app: &AppConfig, a: InduceArgs) -> CliResult {
    let mut session = load(&a.session)?;
    a.flags.apply(&mut session.config)?;
    let gw = gateway(&a.backend, app, &session.config)?;
    check_tiers(&gw, &[Tier::Distill, Tier::Synthesize, Tier::Score, Tier::Embed])?;
    let n_loops = session.config.n_loops;
    session.record(TraceEvent::note("induction-started", format!("n_loops {n_loops}")));
    let progress = |p: &Progress| log::info!("{} {}/{}", p.stage, p.done, p.total);
    let result = run_iterations(&mut session, &gw, n_loops, Some(&progress))?;
    score_missing(&mut session, &gw)?;
    save(&session, a.out.as_deref().unwrap_or(&a.session))?;
    println!("{} generation(s), {} new concept(s)", result.generations.len(), result.concept_ids.len());
    print_concepts(&session);
    Ok(())
}

fn score(app: &AppConfig, a: ScoreArgs) -> CliResult {
    let mut session = load(&a.session)?;
    if let Some(t) = a.threshold {
        set_threshold(&mut session, t)?;
    }
    let rescore: Vec<String> = if a.all {
        session.active_concepts().map(|c| c.id.clone()).collect()
    } else {
        a.concepts.clone()
    };
    let needs_scoring = !rescore.is_empty()
        || session.active_concepts().any(|c| !session.matrix.columns.contains_key(&c.id));
    if needs_scoring && (a.threshold.is_none() || !rescore.is_empty()) {
        let gw = gateway(&a.backend, app, &session.config)?;
        check_tiers(&gw, &[Tier::Score])?;
        for id in &rescore {
            rescore_concept(&mut session, &gw, id)?;
        }
        score_missing(&mut session, &gw)?;
    }
    save(&session, a.out.as_deref().unwrap_or(&a.session))?;
    print_concepts(&session);
    Ok(())
}

fn export(a: ExportArgs) -> CliResult {
    let session = load(&a.session)?;
    let text = match a.what {
        ExportWhat::Matrix => {
            if session.concepts.is_empty() {
                return Err(Failure::data("no concepts"));
            }
            matrix_csv(&session)?
        }
        ExportWhat::Concepts => {
            if session.concepts.is_empty() {
                return Err(Failure::data("no concepts"));
            }
            serde_json::to_string_pretty(&session.concepts).expect("concepts serialize")
        }
        ExportWhat::Trace => serde_json::to_string_pretty(&session.trace).expect("trace serializes"),
    };
    emit(a.out.as_deref(), &text)
}

fn usage(a: UsageArgs) -> CliResult {
    let session = load(&a.session)?;
    let r = usage_report(&session.usage);
    if a.json {
        return emit(None, &serde_json::to_string_pretty(&r).expect("report serializes"));
    }
    let t = &r.totals;
    println!("calls {}  input tokens {}  output tokens {}  cost {:.4}  wall {} ms", t.calls, t.input_tokens, t.output_tokens, t.cost, t.wall_time_ms);
    println!("{:<12} {:>6} {:>10} {:>8} {:>8} {:>8}", "stage", "calls", "tokens", "cost%", "time%", "token%");
    for (stage, s) in &r.by_stage {
        println!(
            "{:<12} {:>6} {:>10} {:>8.1} {:>8.1} {:>8.1}",
            stage.as_str(),
            s.totals.calls,
            s.totals.input_tokens + s.totals.output_tokens,
            s.cost_share,
            s.time_share,
            s.token_share
        );
    }
    println!("{:<20} {:>6} {:>10} {:>10}", "tier", "calls", "tokens", "cost");
    for (tier, s) in &r.by_tier {
        println!("{:<20} {:>6} {:>10} {:>10.4}", tier.as_str(), s.calls, s.input_tokens + s.output_tokens, s.cost);
    }
    Ok(())
}

fn validate(path: &Path) -> CliResult {
    let session = load(path)?;
    let violations = validate_session(&session);
    if violations.is_empty() {
        println!("ok");
        return Ok(());
    }
    for v in &violations {
        println!("{}: {}: {}", v.code, v.subject, v.detail);
    }
    Err(Failure::data(format!("{} violation(s)", violations.len())))
}

fn serve(app: AppConfig, a: ServeArgs) -> CliResult {
    let port = a.port.unwrap_or(app.serve.port);
    let host = a.host.as_deref().unwrap_or("127.0.0.1");
    let addr: SocketAddr = format!("{host}:{port}").parse().map_err(|e| Failure::usage(format!("address: {e}")))?;
    let options = ServiceOptions {
        session_dir: Some(a.session_dir.unwrap_or_else(|| app.serve.session_dir.clone())),
        ui_dir: a.ui_dir.or_else(|| app.serve.ui_dir.clone()),
        base_config: app.session.clone(),
        allow_debug: a.allow_debug || app.serve.allow_debug,
    };
    let backend = a.backend;
    let factory_app = app.clone();
    let factory: GatewayFactory =
        Arc::new(move |cfg: &SessionConfig| backend.gateway(&factory_app, cfg).map(Arc::new).map_err(|e| e.to_string()));
    let state = AppState::new(factory, options)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

fn read_labels(path: &Path) -> CliResult<Vec<bool>> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    eval::parse_labels(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn run_eval(app: &AppConfig, cmd: EvalCommand) -> CliResult {
    match cmd {
        EvalCommand::GenerateSynthetic(a) => {
            let hierarchy = ConceptHierarchy::builtin();
            let concepts: Vec<String> = if a.seed_concepts.is_empty() {
                hierarchy.specifics().map(String::from).collect()
            } else {
                a.seed_concepts.clone()
            };
            let specs: Vec<eval::SyntheticSpec> = concepts
                .into_iter()
                .map(|c| eval::SyntheticSpec {
                    doc_length: a.doc_length,
                    concept_prevalence: a.prevalence,
                    seed_concept: c,
                    n_docs: a.n_docs,
                })
                .collect();
            for s in &specs {
                s.validate().map_err(|e| Failure::usage(e.to_string()))?;
            }
            let gw = gateway(&a.backend, app, &app.session)?;
            check_tiers(&gw, &[Tier::GenerateSynthetic])?;
            let opts = GenerateOptions { max_attempts: a.max_attempts, temperature: a.temperature };
            let ds = eval::generate_synthetic_dataset(&gw, &specs, &opts, &mut Vec::new())?;
            for f in &ds.failures {
                eprintln!("failed: {} #{}: {}", f.seed_concept, f.index, f.error);
            }
            if ds.documents.is_empty() {
                return Err(Failure { code: EXIT_PROVIDER, message: "no document passed verification".into() });
            }
            let text = if a.json {
                serde_json::to_string_pretty(&ds).expect("dataset serializes")
            } else {
                ds.to_csv(&hierarchy)
            };
            emit(a.out.as_deref(), &text)
        }
        EvalCommand::Coverage(a) => {
            let gt: Vec<String> = read_json(&a.ground_truth)?;
            let generated = match (&a.generated, &a.session) {
                (Some(p), _) => read_json(p)?,
                (None, Some(s)) => eval::session_concept_texts(&load(s)?),
                (None, None) => return Err(Failure::usage("--generated or --session is required")),
            };
            let gw = gateway(&a.backend, app, &app.session)?;
            check_tiers(&gw, &[Tier::CoverageMatch])?;
            let mut events = Vec::new();
            let r = eval::auto_coverage(&gw, &gt, &generated, &mut events)?;
            for w in &r.warnings {
                eprintln!("warning: {}: {}", w.code, w.detail);
            }
            if a.json {
                return emit(None, &serde_json::to_string_pretty(&r).expect("result serializes"));
            }
            println!("coverage {} ({}/{})", r.coverage, r.n_matched, gt.len());
            for m in &r.matches {
                println!("  {} -> {}", m.ground_truth, m.item.as_deref().unwrap_or("NONE"));
            }
            Ok(())
        }
        EvalCommand::Metrics { predicted, gold, json } => {
            let m = eval::classification_metrics(&read_labels(&predicted)?, &read_labels(&gold)?)
                .map_err(|e| Failure::data(e.to_string()))?;
            if json {
                return emit(None, &serde_json::to_string_pretty(&m).expect("metrics serialize"));
            }
            let flag = |undefined: bool| if undefined { " (undefined, reported as 0)" } else { "" };
            println!("accuracy {}", m.accuracy);
            println!("precision {}{}", m.precision, flag(m.precision_undefined));
            println!("recall {}{}", m.recall, flag(m.recall_undefined));
            println!("f1 {}", m.f1);
            Ok(())
        }
        EvalCommand::Kappa { labels_a, labels_b, json } => {
            let k = eval::cohens_kappa(&read_labels(&labels_a)?, &read_labels(&labels_b)?)
                .map_err(|e| Failure::data(e.to_string()))?;
            if json {
                return emit(None, &serde_json::to_string_pretty(&k).expect("kappa serializes"));
            }
            println!("kappa {}{}", k.kappa, if k.degenerate { " (degenerate marginals)" } else { "" });
            println!("observed {} expected {}", k.observed_agreement, k.expected_agreement);
            Ok(())
        }
        EvalCommand::Trials(a) => {
            let file: TrialsFile = read_json(&a.input)?;
            let gw = gateway(&a.backend, app, &app.session)?;
            check_tiers(&gw, &[Tier::CoverageMatch])?;
            let report = eval::run_trials(&gw, &file.trials, &file.ground_truth, a.n_trials, &mut Vec::new())
                .map_err(|e| Failure::usage(e.to_string()))?;
            if let Some(p) = &a.trials_out {
                std::fs::write(p, report.trials_csv())?;
            }
            emit(a.out.as_deref(), &report.summary_csv())
        }
        EvalCommand::Mae(a) => {
            let file: TrialsFile = read_json(&a.input)?;
            let manual: Vec<ManualTrial> = read_json(&a.manual)?;
            let keys: BTreeMap<(String, String, u32), ()> =
                manual.iter().map(|m| ((m.method.clone(), m.dataset.clone(), m.trial), ())).collect();
            let wanted: Vec<_> = file
                .trials
                .iter()
                .filter(|t| keys.contains_key(&(t.method.clone(), t.dataset.clone(), t.trial)))
                .cloned()
                .collect();
            let gw = gateway(&a.backend, app, &app.session)?;
            check_tiers(&gw, &[Tier::CoverageMatch])?;
            let report = eval::run_trials(&gw, &wanted, &file.ground_truth, a.n_trials, &mut Vec::new())
                .map_err(|e| Failure::usage(e.to_string()))?;
            let m = eval::matcher_mae(&file, &report, &manual)?;
            if a.json {
                return emit(None, &serde_json::to_string_pretty(&m).expect("report serializes"));
            }
            for p in &m.pairs {
                println!("{}/{}/{}: automated {} manual {}", p.method, p.dataset, p.trial, p.automated, p.manual);
            }
            for k in &m.unpaired {
                eprintln!("unpaired: {k}");
            }
            match m.mae {
                Some(v) => println!("mae {v}"),
                None => return Err(Failure::data("no trial could be paired")),
            }
            Ok(())
        }
    }
}
