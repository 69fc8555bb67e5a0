//! Subcommand definitions and handlers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kemeny_core::generators::Direction;
use kemeny_core::ranking::{cost_to_f64, kemeny_distance};
use kemeny_core::rng::{derive_seed, DEFAULT_SEED};
use kemeny_core::{generate, precedence_matrix, GeneratorKind, GeneratorSpec, Method, Profile};
use kemeny_nn::checkpoint::{load_checkpoint, save_checkpoint};
use kemeny_nn::{TrainConfig, TrainState, Trainer};
use serde::Serialize;

use crate::bench::{run_bench, write_report, OracleChoice, ReportFormat};
use crate::error::{exit, CliError, CliResult};
use crate::ingest::{ingest_features_csv, parse_soc};
use crate::instance::{generated_file_name, instance_id, instance_paths, InstanceFile, Provenance};
use crate::solvers::{parse_methods, run_method, SolverContext};

const EXIT_CODES: &str = "Exit codes: 0 success, 1 partial or other failure, 2 usage, \
3 capacity, 4 config mismatch, 5 I/O, 6 malformed or unsupported data.\n\
Set KEMENY_WORKERS to bound the worker pool.";

#[derive(Debug, Parser)]
#[command(name = "kemeny", version, about = "Kemeny rank aggregation toolkit", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate seeded instance files.
    Gen(GenArgs),
    /// Run one method on instance files.
    Solve(SolveArgs),
    /// Train a transformer policy from a TOML config.
    Train(TrainArgs),
    /// Run several methods over a dataset and write Obj / Gap / Time tables.
    Bench(BenchArgs),
    /// Convert a metric table or PrefLib file into an instance file.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long = "type")]
    pub kind: GeneratorKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Copies of the reference ranking (repeat type).
    #[arg(long)]
    pub repeat_count: Option<usize>,
    /// Offset inside the jiggling swap weights.
    #[arg(long, default_value_t = 1.0)]
    pub scale_m: f64,
    #[arg(long, default_value_t = 1)]
    pub swap_passes: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub method: String,
    /// Instance file or directory of instance files.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output JSON file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Model file, required by the transformer method.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also report the gap to the exact optimum (n <= 20).
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Final checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Line-delimited JSON progress records.
    #[arg(long)]
    pub progress: Option<PathBuf>,
    /// Resumable state, rewritten after every epoch. Defaults to `<out>.state.json`.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Continue from the state file instead of starting fresh.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many epochs in this invocation.
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated method names.
    #[arg(long)]
    pub methods: String,
    #[arg(long)]
    pub dataset: PathBuf,
    /// `exact` or `none`.
    #[arg(long, default_value = "exact")]
    pub oracle: String,
    #[arg(long)]
    pub report: PathBuf,
    /// `csv` or `json`.
    #[arg(long, default_value = "csv")]
    pub format: String,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// `features-csv` or `preflib-soc`.
    #[arg(long)]
    pub format: String,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Comma-separated asc/desc, one per metric column (features-csv).
    #[arg(long)]
    pub directions: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<Vec<PathBuf>> {
    if args.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let mut template = GeneratorSpec::new(args.kind, args.n, args.m, args.seed);
    template.repeat_count = args.repeat_count;
    template.scale_m = args.scale_m;
    template.swap_passes = args.swap_passes;
    template.validate()?;
    ensure_dir(&args.out)?;
    let mut written = Vec::with_capacity(args.count);
    for index in 0..args.count {
        let spec = template.clone().with_seed(derive_seed(args.seed, &[index as u64]));
        let profile = generate(&spec)?;
        let path = args.out.join(generated_file_name(&spec, args.seed, index));
        InstanceFile::from_profile(&profile, Provenance::Generator { spec, index }).write(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Loads every instance under `path`, keyed by file stem.
pub fn load_instances(path: &Path) -> CliResult<Vec<(String, Profile)>> {
    instance_paths(path)?
        .into_iter()
        .map(|p| Ok((instance_id(&p), InstanceFile::read(&p)?.to_profile()?)))
        .collect()
}

fn context(seed: u64, checkpoint: Option<&Path>) -> CliResult<SolverContext> {
    let mut ctx = SolverContext::new(seed);
    if let Some(path) = checkpoint {
        ctx.transformer = Some(load_checkpoint::<f32>(path)?.into_model()?);
    }
    Ok(ctx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveRecord {
    pub instance: String,
    pub method: String,
    pub n: usize,
    pub m: usize,
    pub ranking: Vec<usize>,
    pub cost: f64,
    pub disagreements: u64,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
}

pub fn cmd_solve(args: &SolveArgs) -> CliResult<Vec<SolveRecord>> {
    let method: Method = args
        .method
        .parse()
        .map_err(|e: kemeny_core::Error| CliError::Usage(e.to_string()))?;
    if method == Method::Transformer && args.checkpoint.is_none() {
        return Err(CliError::Usage("method transformer requires --checkpoint".into()));
    }
    let ctx = context(args.seed, args.checkpoint.as_deref())?;
    let mut records = Vec::new();
    for (id, profile) in load_instances(&args.input)? {
        let (ranking, elapsed) = run_method(method, &profile, &ctx)?;
        let disagreements = precedence_matrix(&profile).disagreements(ranking.order());
        let cost = cost_to_f64(&kemeny_distance(&ranking, &profile)?);
        let optimal_cost = if args.oracle {
            Some(cost_to_f64(&kemeny_core::solve_subset_dp(&profile)?.cost))
        } else {
            None
        };
        records.push(SolveRecord {
            instance: id,
            method: method.as_str().into(),
            n: profile.n(),
            m: profile.m(),
            ranking: ranking.order().to_vec(),
            cost,
            disagreements,
            seconds: elapsed.as_secs_f64(),
            gap: optimal_cost.map(|o| cost - o),
            optimal_cost,
        });
    }
    let mut text = serde_json::to_string_pretty(&records).expect("records serialize");
    text.push('\n');
    match &args.out {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(records)
}

fn atomic_write(path: &Path, text: &str) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    write_text(&tmp, text)?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<kemeny_nn::TrainReport> {
    let state_path = args.state.clone().unwrap_or_else(|| {
        let mut name = args.out.as_os_str().to_owned();
        name.push(".state.json");
        PathBuf::from(name)
    });
    let mut trainer = if args.resume {
        let text = fs::read_to_string(&state_path).map_err(|e| CliError::io(&state_path, e))?;
        Trainer::<f32>::from_state(TrainState::from_json(&text)?)?
    } else {
        let text = fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
        let config = TrainConfig::from_toml(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", args.config.display())))?;
        Trainer::<f32>::new(config)?
    };
    let mut progress = match &args.progress {
        Some(p) => Some(
            fs::OpenOptions::new()
                .create(true)
                .append(args.resume)
                .write(true)
                .truncate(!args.resume)
                .open(p)
                .map_err(|e| CliError::io(p, e))?,
        ),
        None => None,
    };
    let mut ran = 0;
    while !trainer.is_finished() && args.max_epochs.is_none_or(|cap| ran < cap) {
        let record = trainer.run_epoch()?.clone();
        ran += 1;
        let line = serde_json::to_string(&record).expect("record serializes");
        eprintln!("{line}");
        if let (Some(f), Some(p)) = (progress.as_mut(), &args.progress) {
            writeln!(f, "{line}").map_err(|e| CliError::io(p, e))?;
        }
        atomic_write(&state_path, &trainer.state().to_json()?)?;
    }
    if ran == 0 && !args.resume {
        atomic_write(&state_path, &trainer.state().to_json()?)?;
    }
    save_checkpoint(&trainer.checkpoint(), &args.out)?;
    let report = trainer.report().clone();
    let mut report_path = args.out.as_os_str().to_owned();
    report_path.push(".report.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(Path::new(&report_path), &(text + "\n"))?;
    Ok(report)
}

/// Returns the report and whether every (instance, method) pair succeeded.
pub fn cmd_bench(args: &BenchArgs) -> CliResult<(crate::bench::BenchReport, Vec<PathBuf>)> {
    let methods = parse_methods(&args.methods)?;
    let oracle: OracleChoice = args.oracle.parse()?;
    let format: ReportFormat = args.format.parse()?;
    if methods.contains(&Method::Transformer) && args.checkpoint.is_none() {
        return Err(CliError::Usage("method transformer requires --checkpoint".into()));
    }
    let ctx = context(args.seed, args.checkpoint.as_deref())?;
    let instances = load_instances(&args.dataset)?;
    let report = run_bench(&instances, &methods, oracle, &ctx);
    if let Some(dir) = args.report.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let written = write_report(&report, &args.report, format)?;
    Ok((report, written))
}

pub fn cmd_ingest(args: &IngestArgs) -> CliResult<InstanceFile> {
    let profile = match args.format.as_str() {
        "features-csv" => {
            let directions: Vec<Direction> = args
                .directions
                .as_deref()
                .ok_or_else(|| CliError::Usage("features-csv needs --directions".into()))?
                .split(',')
                .map(|d| d.parse::<Direction>().map_err(|e| CliError::Usage(e.to_string())))
                .collect::<CliResult<_>>()?;
            let file = fs::File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?;
            ingest_features_csv(file, &directions)?
        }
        "preflib-soc" => {
            let text = fs::read_to_string(&args.input).map_err(|e| CliError::io(&args.input, e))?;
            parse_soc(&text)?
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown ingest format `{other}` (features-csv or preflib-soc)"
            )))
        }
    };
    let file = InstanceFile::from_profile(
        &profile,
        Provenance::Ingest {
            format: args.format.clone(),
            path: args.input.display().to_string(),
        },
    );
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    file.write(&args.out)?;
    Ok(file)
}

/// Parses `args` (including the program name) and runs; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    configure_workers();
    let outcome = match &cli.command {
        Command::Gen(a) => cmd_gen(a).map(|paths| {
            eprintln!("wrote {} instance files to {}", paths.len(), a.out.display());
            exit::OK
        }),
        Command::Solve(a) => cmd_solve(a).map(|_| exit::OK),
        Command::Train(a) => cmd_train(a).map(|r| {
            eprintln!(
                "trained {} epochs; validation cost {:.4} -> {:.4}",
                r.epochs.len(),
                r.initial_validation_cost,
                r.final_validation_cost()
            );
            exit::OK
        }),
        Command::Bench(a) => cmd_bench(a).map(|(report, _)| {
            let failures = report.failures();
            if failures > 0 {
                for row in report.rows.iter().filter(|r| r.error.is_some()) {
                    eprintln!(
                        "{} / {}: {}",
                        row.instance,
                        row.method,
                        row.error.as_deref().unwrap_or_default()
                    );
                }
                exit::FAILURE
            } else {
                exit::OK
            }
        }),
        Command::Ingest(a) => cmd_ingest(a).map(|f| {
            eprintln!("ingested {} items and {} rankings into {}", f.n, f.m, a.out.display());
            exit::OK
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_workers() {
    let Ok(value) = std::env::var("KEMENY_WORKERS") else { return };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // Fails only if a pool already exists, which is harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("ignoring KEMENY_WORKERS={value:?}: expected a positive integer"),
    }
}
