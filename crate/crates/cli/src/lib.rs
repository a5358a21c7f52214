//! `dynres` command-line tool.
//!
//! Machine-readable results go to stdout as JSON or JSONL. Diagnostics go
//! to stderr; a failing command prints one JSON error line there and exits
//! with 1 (usage), 2 (data) or 3 (transport failure after retries).

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use dynres::catalog::{CatalogEntry, RatioCatalog};
use dynres::mixture::{self, ManifestRecord, MixtureSpec};
use dynres::planner::{self, ImageDims};
use dynres::shuffle::{self, FeatureGrid};
use dynres::tiler::BatchTiler;
use dynres::translate::{
    self, BatchOptions, HttpClientConfig, HttpCompletionClient, JobStatus, RetryPolicy,
    TranslationCache, TranslationJob,
};

use crate::config::{load_config, AppConfig, LogLevel, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Transport(_) => EXIT_TRANSPORT,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Transport(_) => "transport",
        }
    }
}

impl From<dynres::Error> for CliError {
    fn from(e: dynres::Error) -> Self {
        match e {
            dynres::Error::InvalidRange { .. } | dynres::Error::InvalidConfig(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn output_error(context: &str, e: io::Error) -> CliError {
    CliError::Data(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(
    name = "dynres",
    about = "Dynamic-resolution tiling, token accounting, dataset mixing and translation batching",
    disable_version_flag = true
)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    log_level: Option<LogLevel>,

    /// Worker threads for batch work (default: number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Print tool and template versions.
    #[arg(long)]
    version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args, Default)]
struct PlannerFlags {
    #[arg(long)]
    tile_size: Option<u32>,
    #[arg(long)]
    min_tiles: Option<u32>,
    #[arg(long)]
    max_tiles: Option<u32>,
    #[arg(long)]
    tokens_per_tile: Option<u32>,
    #[arg(long, value_name = "BOOL")]
    use_thumbnail: Option<bool>,
}

impl PlannerFlags {
    fn apply(&self, o: &mut Overrides) {
        o.tile_size = self.tile_size;
        o.min_tiles = self.min_tiles;
        o.max_tiles = self.max_tiles;
        o.tokens_per_tile = self.tokens_per_tile;
        o.use_thumbnail = self.use_thumbnail;
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump the tile-grid catalog as JSON lines.
    Catalog {
        #[command(flatten)]
        planner: PlannerFlags,
    },
    /// Print the tile plan for an image size.
    Plan {
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        #[command(flatten)]
        planner: PlannerFlags,
    },
    /// Tile an image file or every PNG/JPEG in a directory.
    Tile {
        /// Image file or directory (default: io.input_dir).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output directory (default: io.output_dir).
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        planner: PlannerFlags,
    },
    /// Apply pixel unshuffle to a JSON feature grid.
    ShuffleDemo {
        /// JSON file with {height, width, channels, values}; `-` reads stdin.
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        factor: usize,
        /// Apply the inverse (depth-to-space) instead.
        #[arg(long)]
        inverse: bool,
    },
    /// Sample a weighted task mixture from a manifest.
    Mix {
        #[arg(long)]
        manifest: PathBuf,
        /// `pretrain-default`, `finetune-default`, or a JSON spec file.
        #[arg(long)]
        spec: Option<String>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Output JSONL (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report task shares of a manifest or sample file.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Translate the `source_text` field of each manifest line.
    Translate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        language: Option<String>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        max_retries: Option<u32>,
        /// Requests per second across the batch.
        #[arg(long)]
        rate_limit: Option<f64>,
        #[arg(long)]
        timeout_secs: Option<u64>,
        /// Output JSONL (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn version_string() -> String {
    format!(
        "dynres {} (translation template {})",
        env!("CARGO_PKG_VERSION"),
        translate::TEMPLATE_VERSION
    )
}

/// Runs the tool on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    if cli.version {
        let _ = writeln!(stdout, "{}", version_string());
        return EXIT_OK;
    }
    let Some(command) = cli.command else {
        let mut cmd = <Cli as clap::CommandFactory>::command();
        let _ = write!(stderr, "{}", cmd.render_usage());
        let _ = writeln!(stderr, "\n\nRun `dynres --help` for the list of subcommands.");
        return EXIT_USAGE;
    };

    let mut overrides = Overrides {
        log_level: cli.log_level,
        jobs: cli.jobs,
        ..Default::default()
    };
    collect_overrides(&command, &mut overrides);

    let result = load_config(cli.config.as_deref(), &overrides)
        .map_err(CliError::from)
        .and_then(|config| {
            init_logging(config.log_level);
            dispatch(command, &config, stdout, stderr)
        });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let line = json!({"level": "error", "kind": e.kind(), "message": e.to_string()});
            let _ = writeln!(stderr, "{line}");
            e.exit_code()
        }
    }
}

fn init_logging(level: LogLevel) {
    let _ = env_logger::Builder::new()
        .filter_level(level.into())
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn collect_overrides(command: &Command, o: &mut Overrides) {
    match command {
        Command::Catalog { planner } | Command::Plan { planner, .. } => planner.apply(o),
        Command::Tile {
            input,
            output,
            planner,
        } => {
            planner.apply(o);
            o.input_dir = input.clone();
            o.output_dir = output.clone();
        }
        Command::ShuffleDemo { .. } | Command::Stats { .. } => {}
        Command::Mix { spec, seed, .. } => {
            o.mixture_spec = spec.clone();
            o.seed = *seed;
        }
        Command::Translate {
            language,
            endpoint,
            model,
            cache_dir,
            concurrency,
            max_retries,
            rate_limit,
            timeout_secs,
            ..
        } => {
            o.language = language.clone();
            o.endpoint = endpoint.clone();
            o.model = model.clone();
            o.cache_dir = cache_dir.clone();
            o.concurrency = *concurrency;
            o.max_retries = *max_retries;
            o.rate_limit = *rate_limit;
            o.timeout_secs = *timeout_secs;
        }
    }
}

fn dispatch(
    command: Command,
    config: &AppConfig,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult {
    match command {
        Command::Catalog { .. } => cmd_catalog(config, stdout),
        Command::Plan { width, height, .. } => cmd_plan(config, width, height, stdout),
        Command::Tile { .. } => cmd_tile(config, stdout, stderr),
        Command::ShuffleDemo {
            input,
            factor,
            inverse,
        } => cmd_shuffle_demo(&input, factor, inverse, stdout),
        Command::Mix {
            manifest, n, out, ..
        } => cmd_mix(config, &manifest, n, out.as_deref(), stdout),
        Command::Stats { input } => cmd_stats(&input, stdout, stderr),
        Command::Translate { manifest, out, .. } => {
            cmd_translate(config, &manifest, out.as_deref(), stdout)
        }
    }
}

fn write_json_line(out: &mut dyn Write, value: &impl serde::Serialize) -> CliResult {
    serde_json::to_writer(&mut *out, value)
        .map_err(|e| CliError::Data(format!("writing output: {e}")))?;
    out.write_all(b"\n")
        .map_err(|e| output_error("writing output", e))
}

fn cmd_catalog(config: &AppConfig, stdout: &mut dyn Write) -> CliResult {
    let catalog = RatioCatalog::build(config.planner.min_tiles, config.planner.max_tiles)?;
    for grid in &catalog {
        write_json_line(stdout, &CatalogEntry::from(*grid))?;
    }
    Ok(())
}

fn cmd_plan(config: &AppConfig, width: u32, height: u32, stdout: &mut dyn Write) -> CliResult {
    let dims = ImageDims::new(width, height).map_err(|e| CliError::Usage(e.to_string()))?;
    let plan = planner::plan(dims, &config.planner)?;
    write_json_line(stdout, &plan.to_record())
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

fn collect_inputs(input: &Path) -> CliResult<Vec<PathBuf>> {
    let meta = fs::metadata(input)
        .map_err(|e| CliError::Data(format!("input {}: {e}", input.display())))?;
    if !meta.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut paths = Vec::new();
    let entries = fs::read_dir(input)
        .map_err(|e| CliError::Data(format!("listing {}: {e}", input.display())))?;
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Data(format!("listing {}: {e}", input.display())))?
            .path();
        if path.is_file() && is_image(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

fn cmd_tile(config: &AppConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let input = config
        .io
        .input_dir
        .as_deref()
        .ok_or_else(|| CliError::Usage("tile needs --input (or io.input_dir)".into()))?;
    let output = config
        .io
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("tiles"));
    let paths = collect_inputs(input)?;
    let tiler = BatchTiler::new(config.planner, config.jobs())?;
    let mut failures = 0;
    for (path, result) in paths.iter().zip(tiler.tile_files(&paths, &output)) {
        match result {
            Ok(sidecar) => write_json_line(
                stdout,
                &json!({"source": path, "sidecar": sidecar}),
            )?,
            Err(e) => {
                failures += 1;
                let line = json!({"level": "error", "kind": "data", "source": path, "message": e.to_string()});
                let _ = writeln!(stderr, "{line}");
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Data(format!(
            "{failures} of {} images failed",
            paths.len()
        )));
    }
    Ok(())
}

fn cmd_shuffle_demo(
    input: &Path,
    factor: usize,
    inverse: bool,
    stdout: &mut dyn Write,
) -> CliResult {
    let text = if input == Path::new("-") {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::Data(format!("reading stdin: {e}")))?;
        s
    } else {
        fs::read_to_string(input)
            .map_err(|e| CliError::Data(format!("reading {}: {e}", input.display())))?
    };
    let grid: FeatureGrid = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("parsing feature grid: {e}")))?;
    let out = if inverse {
        shuffle::shuffle(&grid, factor)?
    } else {
        shuffle::unshuffle(&grid, factor)?
    };
    write_json_line(stdout, &out)
}

fn resolve_spec(config: &AppConfig, records: &[ManifestRecord]) -> CliResult<MixtureSpec> {
    if let Some(inline) = config.mixture.inline_spec() {
        return inline.map_err(|e| CliError::Usage(format!("mixture.buckets: {e}")));
    }
    match config.mixture.spec.as_str() {
        "pretrain-default" => Ok(MixtureSpec::pretrain_default()),
        "finetune-default" => Ok(MixtureSpec::uniform_by_record(records)?),
        path => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("reading spec {path}: {e}")))?;
            MixtureSpec::from_json(&text)
                .map_err(|e| CliError::Data(format!("spec {path}: {e}")))
        }
    }
}

fn open_output(path: Option<&Path>) -> CliResult<Option<BufWriter<fs::File>>> {
    path.map(|p| {
        fs::File::create(p)
            .map(BufWriter::new)
            .map_err(|e| CliError::Data(format!("creating {}: {e}", p.display())))
    })
    .transpose()
}

fn cmd_mix(
    config: &AppConfig,
    manifest: &Path,
    n: usize,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> CliResult {
    let records = mixture::load_manifest(manifest)?;
    let spec = resolve_spec(config, &records)?;
    let samples = mixture::sample(&records, &spec, n, config.mixture.seed)?;
    let mut file = open_output(out)?;
    let sink: &mut dyn Write = match file.as_mut() {
        Some(f) => f,
        None => stdout,
    };
    for s in &samples {
        write_json_line(sink, s)?;
    }
    sink.flush().map_err(|e| output_error("flushing output", e))
}

fn cmd_stats(input: &Path, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let records = mixture::load_manifest(input)?;
    let report = mixture::mixture_report(&records);
    let _ = write!(stderr, "{}", mixture::format_report_table(&report));
    write_json_line(stdout, &report)
}

/// Pulls a job id from common id fields, falling back to the line number.
fn job_id_for(obj: &Map<String, Value>, line: usize) -> String {
    ["job_id", "sample_id", "id"]
        .iter()
        .find_map(|k| match obj.get(*k) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Number(n)) => Some(n.to_string()),
            _ => None,
        })
        .unwrap_or_else(|| format!("line-{line}"))
}

fn read_translation_manifest(
    path: &Path,
    language: &str,
) -> CliResult<Vec<(Map<String, Value>, TranslationJob)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("reading manifest {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |msg: String| CliError::Data(format!("{}:{}: {msg}", path.display(), idx + 1));
        let obj: Map<String, Value> = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        let text = obj
            .get("source_text")
            .and_then(Value::as_str)
            .ok_or_else(|| fail("missing string field `source_text`".into()))?
            .to_owned();
        let job = TranslationJob::new(job_id_for(&obj, idx + 1), text, language);
        rows.push((obj, job));
    }
    Ok(rows)
}

fn cmd_translate(
    config: &AppConfig,
    manifest: &Path,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> CliResult {
    let t = &config.translation;
    let language = t
        .language
        .as_deref()
        .ok_or_else(|| CliError::Usage("translate needs --language".into()))?;
    let endpoint = t
        .endpoint
        .clone()
        .ok_or_else(|| CliError::Usage("translate needs --endpoint".into()))?;
    let model = t
        .model
        .clone()
        .ok_or_else(|| CliError::Usage("translate needs --model".into()))?;
    if t.rate_limit.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
        return Err(CliError::Usage("rate limit must be positive".into()));
    }
    let rows = read_translation_manifest(manifest, language)?;
    let client = HttpCompletionClient::new(HttpClientConfig {
        endpoint,
        model,
        credential: std::env::var(&t.credential_env).ok().filter(|k| !k.is_empty()),
        timeout: Duration::from_secs(t.timeout_secs),
        wire: t.wire.clone(),
    });
    let cache = TranslationCache::open(&t.cache_dir)?;
    let policy = RetryPolicy {
        max_retries: t.max_retries,
        base_delay: Duration::from_millis(t.base_delay_ms),
        ..RetryPolicy::default()
    };
    let options = BatchOptions {
        concurrency: t.concurrency.max(1),
        rate_limit: t.rate_limit,
    };
    let (objects, jobs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let done = translate::translate_batch(jobs, &client, &cache, &policy, &options);

    let mut file = open_output(out)?;
    let sink: &mut dyn Write = match file.as_mut() {
        Some(f) => f,
        None => stdout,
    };
    let mut failed = BTreeMap::new();
    for (mut obj, job) in objects.into_iter().zip(done) {
        obj.insert("target_language".into(), Value::from(job.target_language));
        obj.insert(
            "translation".into(),
            job.result.map_or(Value::Null, Value::from),
        );
        obj.insert("translation_status".into(), json!(job.status));
        obj.insert("translation_attempts".into(), Value::from(job.attempts));
        if job.status == JobStatus::Failed {
            let err = job.error.unwrap_or_default();
            obj.insert("translation_error".into(), Value::from(err.clone()));
            failed.insert(job.job_id, err);
        }
        write_json_line(sink, &obj)?;
    }
    sink.flush().map_err(|e| output_error("flushing output", e))?;
    if let Some((id, err)) = failed.iter().next() {
        return Err(CliError::Transport(format!(
            "{} job(s) failed after retries; first: {id}: {err}",
            failed.len()
        )));
    }
    Ok(())
}
