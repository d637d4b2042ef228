//! `deskact`: extract user actions from screen recordings and score them.
//!
//! Exit status is 0 on success, 1 on usage or validation errors and 2 when
//! the extraction pipeline fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use deskact::action::Method;
use deskact::config::{EmbedderKind, ProviderKind, RunConfig};
use deskact::eval::{evaluate_corpus, format_table, load_predictions};
use deskact::extract::{build_gateway, build_provider, extract, load_frames};
use deskact::gateway::{EmbedBackend, RemoteEmbedder, ResponseCache, StubEmbedder};
use deskact::ingest::{load_gt_corpus, read_png, Frame, Fps};
use deskact::localizer::{
    annotate_screenshot, encode_png, localize, regions_to_json, render_region_comparison,
};
use deskact::par::Exec;

#[derive(Parser)]
#[command(name = "deskact", version, about = "Action extraction from desktop screen recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract an action sequence from a directory of frames.
    Extract(ExtractArgs),
    /// Score prediction files against a ground-truth corpus.
    Evaluate(EvaluateArgs),
    /// Localize changed regions between two frames.
    Diff(DiffArgs),
    /// Inspect or prune the response cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Args)]
struct ExtractArgs {
    /// TOML run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Frame directory (frame_%06d.png plus meta.json).
    #[arg(long)]
    frames: PathBuf,
    /// Sampling rate, e.g. 1, 2, 29.97 or 30000/1001.
    #[arg(long, value_parser = parse_fps)]
    fps: Option<Fps>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    overlap: Option<usize>,
    /// Model profile name.
    #[arg(long)]
    model: Option<String>,
    /// live, replay or scripted.
    #[arg(long, value_parser = parse_provider)]
    provider: Option<ProviderKind>,
    /// Response transcript for the scripted provider.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    no_corrector: bool,
    #[arg(long)]
    no_sliding_window: bool,
    #[arg(long)]
    annotate_regions: bool,
    #[arg(long)]
    frames_to_proposer: bool,
    /// Prediction output file.
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the frame directory name.
    #[arg(long)]
    video_id: Option<String>,
    /// Run report path; defaults to `<out stem>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Where to write intermediate difff artifacts.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Prediction file or directory of prediction files.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth corpus directory.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// stub or remote.
    #[arg(long, value_parser = parse_embedder)]
    embed: Option<EmbedderKind>,
    #[arg(long)]
    embed_model: Option<String>,
    /// Metrics report output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiffArgs {
    prev: PathBuf,
    curr: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Writes an annotated screenshot and a comparison image per region.
    #[arg(long)]
    render_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CacheAction {
    Inspect {
        #[arg(long, default_value = "cache")]
        cache: PathBuf,
    },
    /// Removes corrupt entries and, optionally, entries older than N days.
    Prune {
        #[arg(long, default_value = "cache")]
        cache: PathBuf,
        #[arg(long)]
        older_than_days: Option<i64>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_fps(s: &str) -> Result<Fps, String> {
    s.parse()
}

fn parse_provider(s: &str) -> Result<ProviderKind, String> {
    s.parse().map_err(|e: deskact::config::ConfigError| e.to_string())
}

fn parse_embedder(s: &str) -> Result<EmbedderKind, String> {
    match s {
        "stub" => Ok(EmbedderKind::Stub),
        "remote" => Ok(EmbedderKind::Remote),
        other => Err(format!("unknown embedder `{other}` (expected stub or remote)")),
    }
}

/// An error tagged with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn pipeline(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 1, error: e.into() })
    }

    fn pipeline(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 2, error: e.into() })
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn report_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    out.with_file_name(format!("{stem}.report.json"))
}

fn extract_config(args: &ExtractArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(m) = args.method {
        cfg.method = m;
    }
    if let Some(fps) = args.fps {
        cfg.fps = fps;
    }
    if let Some(w) = args.window {
        cfg.window.window_size = w;
    }
    if let Some(o) = args.overlap {
        cfg.window.overlap = o;
    }
    if let Some(m) = &args.model {
        cfg.model = m.clone();
    }
    if let Some(p) = args.provider {
        cfg.provider = p;
    }
    if let Some(t) = &args.transcript {
        cfg.transcript = Some(t.clone());
        if args.provider.is_none() {
            cfg.provider = ProviderKind::Scripted;
        }
    }
    if let Some(c) = &args.cache {
        cfg.cache_dir = c.clone();
    }
    if let Some(p) = args.parallelism {
        cfg.parallelism = p;
    }
    cfg.ablations.no_corrector |= args.no_corrector;
    cfg.ablations.no_sliding_window |= args.no_sliding_window;
    cfg.ablations.annotate_regions |= args.annotate_regions;
    cfg.ablations.frames_to_proposer |= args.frames_to_proposer;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_extract(args: ExtractArgs) -> Result<(), Failure> {
    let cfg = extract_config(&args).usage()?;
    let video_id = args.video_id.clone().unwrap_or_else(|| {
        args.frames
            .canonicalize()
            .unwrap_or_else(|_| args.frames.clone())
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".into())
    });
    let frames = load_frames(&args.frames, &cfg).usage()?;
    let provider = build_provider(&cfg).usage()?;
    let gw = build_gateway(&cfg, provider).usage()?;
    log::info!("extracting {video_id}: {} frames with {}", frames.len(), cfg.method);

    let run = extract(&gw, &cfg, &video_id, &frames);
    let report = args.report.clone().unwrap_or_else(|| report_path(&args.out));
    write_file(&report, &run.report.to_json()).pipeline()?;
    if let Some(dir) = &args.dump_dir {
        let a = &run.artifacts;
        let files = [
            ("regions.json", &a.regions),
            ("changes.json", &a.changes),
            ("proposed.json", &a.proposed),
            ("corrected.json", &a.corrected),
        ];
        for (name, text) in files {
            if let Some(text) = text {
                write_file(&dir.join(name), text).pipeline()?;
            }
        }
    }
    if let Some(err) = run.error {
        return Err(anyhow!(err).context(format!("extraction failed; report at {}", report.display()))).pipeline();
    }
    let prediction = run.prediction.expect("successful run has a prediction");
    write_file(&args.out, &prediction.to_json()).pipeline()?;
    eprintln!(
        "{} actions, {} provider calls, {} cache hits",
        prediction.actions.len(),
        run.report.provider_calls,
        run.report.cache_hits
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let mut cfg = load_config(args.config.as_deref()).usage()?;
    if let Some(t) = args.threshold {
        cfg.eval.threshold = t;
    }
    if let Some(e) = args.embed {
        cfg.eval.embedder = e;
    }
    if let Some(m) = args.embed_model {
        cfg.eval.embed_model = m;
    }
    let predictions = load_predictions(&args.pred).usage()?;
    let gt = load_gt_corpus(&args.gt).usage()?;
    let embedder: Box<dyn EmbedBackend> = match cfg.eval.embedder {
        EmbedderKind::Stub => Box::new(StubEmbedder),
        EmbedderKind::Remote => Box::new(RemoteEmbedder::from_env(&cfg.eval.embed_model).usage()?),
    };
    let report = evaluate_corpus(&predictions, &gt, cfg.eval.threshold, embedder.as_ref(), Exec::default()).usage()?;
    print!("{}", format_table(&report));
    if !report.missing_predictions.is_empty() {
        eprintln!("missing predictions: {}", report.missing_predictions.join(", "));
    }
    if let Some(out) = &args.out {
        let mut json = serde_json::to_string_pretty(&report).usage()?;
        json.push('\n');
        write_file(out, &json).usage()?;
    }
    Ok(())
}

fn cmd_diff(args: DiffArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref()).usage()?;
    cfg.localizer.validate().usage()?;
    let prev = Frame::from_image(0, 0.0, read_png(&args.prev).usage()?);
    let curr = Frame::from_image(1, 1.0, read_png(&args.curr).usage()?);
    let regions = localize(&prev, &curr, &cfg.localizer).usage()?;
    let json = regions_to_json(&regions);
    match &args.out {
        Some(out) => write_file(out, &json).usage()?,
        None => print!("{json}"),
    }
    if let Some(dir) = &args.render_dir {
        fs::create_dir_all(dir).usage()?;
        for region in &regions {
            let id = region.id();
            let shot = annotate_screenshot(&curr, region).pipeline()?;
            let cmp = render_region_comparison(&prev, &curr, region).pipeline()?;
            fs::write(dir.join(format!("{id}_screenshot.png")), encode_png(&shot)).usage()?;
            fs::write(dir.join(format!("{id}_comparison.png")), encode_png(&cmp)).usage()?;
        }
    }
    Ok(())
}

fn cmd_cache(action: CacheAction) -> Result<(), Failure> {
    let out = match action {
        CacheAction::Inspect { cache } => serde_json::to_string_pretty(&ResponseCache::new(cache).inspect()).usage()?,
        CacheAction::Prune { cache, older_than_days } => {
            let cutoff = older_than_days.map(|d| chrono::Utc::now() - chrono::Duration::days(d));
            let removed = ResponseCache::new(cache).prune(cutoff);
            serde_json::to_string_pretty(&serde_json::json!({ "removed": removed })).usage()?
        }
    };
    println!("{out}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Diff(a) => cmd_diff(a),
        Command::Cache { action } => cmd_cache(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
