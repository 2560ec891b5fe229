//! `blurrank`: corpus generation, training, evaluation, scoring and annotation serving.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.

mod report;

use std::fmt;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blurrank::datasets::{build_corpus, derive_seed, sample_pairs, CorpusPlan, Manifest, Split};
use blurrank::evaluation::{run_benchmark, BenchmarkReport, ImageScorer, LaplacianVarianceScorer};
use blurrank::imaging::read_image;
use blurrank::trainer::{train_with_progress, LabelSet, Mode, TrainConfig, TrainingData};
use blurrank::{Checkpoint, Error};
use blurrank_annotate::campaign::{CampaignError, DEFAULT_TARGET_PER_PAIR};
use blurrank_annotate::{router, serve, AppState, Campaign};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(
    name = "blurrank",
    version,
    about = "Rank-supervised object image blur assessment"
)]
struct Cli {
    /// Seed override; each subcommand documents what it seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Per-epoch and per-split detail on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Generate a synthetic corpus and its manifest.
    GenData(GenDataArgs),
    /// Train a scorer; writes checkpoints and the epoch history.
    Train(TrainArgs),
    /// Benchmark checkpoints on the test splits.
    Eval(EvalArgs),
    /// Score images, printed lowest (blurriest) first.
    Score(ScoreArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Aggregate evaluation reports from several runs into mean ± spread.
    ExportReport(ExportReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    FibDesk,
}

#[derive(Args, Debug, Serialize)]
#[group(required = true, multiple = false, id = "plan")]
struct PlanSource {
    /// Built-in corpus plan.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Corpus plan file (TOML).
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct GenDataArgs {
    #[command(flatten)]
    plan: PlanSource,
    /// Output directory; `manifest.json` is written here.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// Training config (TOML); omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for `checkpoint.json`, `best.json`, `history.jsonl` and `config.toml`.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's mode.
    #[arg(long)]
    mode: Option<String>,
    /// Overrides the config's label set (`full` or `half`).
    #[arg(long)]
    label_set: Option<String>,
    /// Overrides the config's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Checkpoint to evaluate; repeat for one table row each.
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    /// Add the Laplacian-variance reference as a row.
    #[arg(long)]
    oracle: bool,
    /// Corpus directory.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated splits.
    #[arg(long, value_delimiter = ',', default_value = "test1,test2,test3")]
    splits: Vec<String>,
    /// Directory to write one `<row>.report.json` per evaluated scorer.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the reports as a JSON array instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ServeArgs {
    /// Corpus directory; images are served from its manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Annotate the pairs of this manifest pair set.
    #[arg(long, conflicts_with = "sample")]
    pair_set: Option<String>,
    /// Annotate this many random pairs of labeled-pool images (default 1000).
    #[arg(long)]
    sample: Option<usize>,
    /// Judgments needed per pair.
    #[arg(long, default_value_t = DEFAULT_TARGET_PER_PAIR)]
    target: usize,
    /// Judgment log; replayed on start (default `<data>/annotations.jsonl`).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Static annotation UI bundle.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ExportReportArgs {
    /// Directory searched recursively for `*report.json` files.
    #[arg(long)]
    runs: PathBuf,
    /// Print the aggregate as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::Config(_) => 1,
            Error::Io { .. }
            | Error::Image { .. }
            | Error::Manifest(_)
            | Error::Checkpoint(_)
            | Error::MissingSplit(_)
            | Error::Json(_) => 2,
            Error::UndefinedMetric(_) | Error::NonFiniteLoss { .. } => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        Self::data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::GenData(a) => gen_data(&cli, a),
        Command::Train(a) => train(&cli, a),
        Command::Eval(a) => eval(&cli, a),
        Command::Score(a) => score(&cli, a),
        Command::Serve(a) => serve_cmd(&cli, a),
        Command::ExportReport(a) => export_report(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn print_resolved(name: &str, value: &impl Serialize) -> Outcome {
    let text = serde_json::to_string(value).map_err(|e| Failure::runtime(e.to_string()))?;
    eprintln!("{name}: {text}");
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Outcome {
    std::fs::write(path, contents).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn load_manifest(dir: &Path) -> Result<Manifest, Failure> {
    Ok(Manifest::load_dir(dir)?)
}

fn gen_data(cli: &Cli, args: &GenDataArgs) -> Outcome {
    let mut plan = match (&args.plan.preset, &args.plan.spec) {
        (Some(Preset::FibDesk), _) => CorpusPlan::fib_desk(0),
        (None, Some(path)) => toml::from_str(&read_file(path)?)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
        (None, None) => return Err(Failure::usage("one of --preset or --spec is required")),
    };
    if let Some(seed) = cli.seed {
        plan.seed = seed;
    }
    print_resolved("plan", &plan)?;
    let manifest = build_corpus(&plan, &args.out)?;
    let stats = serde_json::to_string_pretty(&manifest.stats())
        .map_err(|e| Failure::runtime(e.to_string()))?;
    println!("{stats}");
    Ok(())
}

fn resolve_train_config(cli: &Cli, args: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::from_toml(&read_file(path)?)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(m) = &args.mode {
        config.mode = Mode::parse(m)?;
    }
    if let Some(l) = &args.label_set {
        config.label_set = LabelSet::parse(l)?;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    config.validate()?;
    Ok(config)
}

fn train(cli: &Cli, args: &TrainArgs) -> Outcome {
    let config = resolve_train_config(cli, args)?;
    print_resolved("config", &config)?;
    let manifest = load_manifest(&args.data)?;
    let data = TrainingData::from_manifest(&manifest)?;
    let verbose = cli.verbose;
    let outcome = train_with_progress(&config, &data, |r| {
        if verbose {
            let acc = r
                .val_pairwise_accuracy
                .map_or_else(|| "-".into(), |a| format!("{a:.4}"));
            eprintln!(
                "epoch {:>3}  lr {:.2e}  sup {:.5}  self {:.5}  val-acc {acc}",
                r.epoch, r.lr, r.supervised_loss, r.self_supervised_loss
            );
        }
    })?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::data(format!("{}: {e}", args.out.display())))?;
    outcome
        .final_checkpoint
        .save(&args.out.join("checkpoint.json"))?;
    outcome.best_checkpoint.save(&args.out.join("best.json"))?;
    write_file(&args.out.join("history.jsonl"), &outcome.history_jsonl()?)?;
    write_file(&args.out.join("config.toml"), &config.to_toml()?)?;
    let last = outcome.history.last().expect("at least one epoch");
    println!(
        "trained {} epochs ({} / {}), final val pairwise accuracy {}; best epoch {}",
        outcome.history.len(),
        config.mode,
        config.label_set.name(),
        last.val_pairwise_accuracy
            .map_or_else(|| "-".into(), |a| format!("{a:.4}")),
        outcome.best_checkpoint.epoch
    );
    Ok(())
}

fn eval(cli: &Cli, args: &EvalArgs) -> Outcome {
    if args.checkpoints.is_empty() && !args.oracle {
        return Err(Failure::usage("give at least one --checkpoint or --oracle"));
    }
    print_resolved("eval", args)?;
    let splits = args
        .splits
        .iter()
        .map(|s| Split::parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = load_manifest(&args.data)?;

    let mut scorers: Vec<Box<dyn ImageScorer>> = Vec::new();
    for path in &args.checkpoints {
        scorers.push(Box::new(Checkpoint::load(path)?));
    }
    if args.oracle {
        scorers.push(Box::new(LaplacianVarianceScorer));
    }
    let mut reports = Vec::with_capacity(scorers.len());
    for s in &scorers {
        let r = run_benchmark(s.as_ref(), &manifest, &splits)?;
        if cli.verbose {
            eprintln!("{}\n{}", report::row_label(&r), r.table());
        }
        reports.push(r);
    }

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
        for r in &reports {
            let name = report_file_name(r);
            write_file(&dir.join(name), &r.to_json()?)?;
        }
    }
    if args.json {
        let text =
            serde_json::to_string_pretty(&reports).map_err(|e| Failure::runtime(e.to_string()))?;
        println!("{text}");
    } else {
        print!("{}", eval_grid(&reports, &splits));
    }
    Ok(())
}

fn report_file_name(r: &BenchmarkReport) -> String {
    let mut stem = report::row_label(r).replace('/', "-");
    if let Some(seed) = r.scorer.seed {
        stem.push_str(&format!("-seed{seed}"));
    }
    format!("{stem}-{}.{}", &r.scorer_hash[..8], report::REPORT_SUFFIX)
}

fn eval_grid(reports: &[BenchmarkReport], splits: &[Split]) -> String {
    let mut out = format!("{:<28}", "SROCC");
    for s in splits {
        out.push_str(&format!(" {:>8}", s.name()));
    }
    out.push('\n');
    for r in reports {
        let mut label = report::row_label(r);
        if let Some(seed) = r.scorer.seed {
            label.push_str(&format!(" seed {seed}"));
        }
        out.push_str(&format!("{label:<28}"));
        for s in splits {
            let cell = r
                .result(*s)
                .and_then(|x| x.srocc)
                .map_or_else(|| "undef".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!(" {cell:>8}"));
        }
        out.push('\n');
    }
    out
}

fn score(_cli: &Cli, args: &ScoreArgs) -> Outcome {
    print_resolved("score", args)?;
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let mut scored = Vec::with_capacity(args.images.len());
    for path in &args.images {
        let img = read_image(path)?;
        scored.push((checkpoint.score_image(&img)?, path));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut stdout = std::io::stdout().lock();
    for (s, path) in scored {
        let _ = writeln!(stdout, "{s:.6}\t{}", path.display());
    }
    Ok(())
}

fn campaign_pairs(
    cli: &Cli,
    args: &ServeArgs,
    manifest: &Manifest,
) -> Result<Vec<(String, String)>, Failure> {
    if let Some(name) = &args.pair_set {
        let set = manifest
            .pairs(name)
            .ok_or_else(|| Failure::data(format!("manifest has no pair set `{name}`")))?;
        return Ok(set.iter().map(|p| (p.id1.clone(), p.id2.clone())).collect());
    }
    let pool: Vec<&str> = manifest
        .images_in(Split::TrainLabeled)
        .map(|r| r.id.as_str())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cli.seed.unwrap_or(0), 0xa11c));
    let picked = sample_pairs(pool.len(), args.sample.unwrap_or(1000), &mut rng)?;
    Ok(picked
        .into_iter()
        .map(|(i, j)| (pool[i].to_string(), pool[j].to_string()))
        .collect())
}

fn serve_cmd(cli: &Cli, args: &ServeArgs) -> Outcome {
    print_resolved("serve", args)?;
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| Failure::usage(format!("bad --host/--port: {e}")))?;
    let manifest = load_manifest(&args.data)?;
    let pairs = campaign_pairs(cli, args, &manifest)?;
    let log = args
        .log
        .clone()
        .unwrap_or_else(|| args.data.join("annotations.jsonl"));
    let campaign = Campaign::new(pairs, cli.seed.unwrap_or(0), args.target)?.with_log(&log)?;
    let info = campaign.info();
    let app = router(
        AppState::new(campaign, Some(manifest)),
        args.ui_dir.as_deref(),
    );

    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::runtime(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::runtime(format!("bind {addr}: {e}")))?;
        eprintln!(
            "serving {} pairs ({} complete) on http://{addr}, log {}",
            info.total_pairs,
            info.complete_pairs,
            log.display()
        );
        serve(listener, app)
            .await
            .map_err(|e| Failure::runtime(e.to_string()))
    })
}

fn export_report(_cli: &Cli, args: &ExportReportArgs) -> Outcome {
    print_resolved("export-report", args)?;
    let paths = report::find_reports(&args.runs)
        .map_err(|e| Failure::data(format!("{}: {e}", args.runs.display())))?;
    if paths.is_empty() {
        return Err(Failure::data(format!(
            "no *{} files under {}",
            report::REPORT_SUFFIX,
            args.runs.display()
        )));
    }
    let mut reports = Vec::with_capacity(paths.len());
    for p in &paths {
        let r: BenchmarkReport = serde_json::from_str(&read_file(p)?)
            .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
        reports.push(r);
    }
    let agg = report::aggregate(&reports);
    if args.json {
        let text =
            serde_json::to_string_pretty(&agg).map_err(|e| Failure::runtime(e.to_string()))?;
        println!("{text}");
    } else {
        print!("{}", agg.table());
    }
    Ok(())
}
