//! Command-line runner: seeded experiment batches with CSV traces and JSON
//! summaries, method comparison tables, and the benchmark-constants oracle.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crashbo::acquisition::SearchOptions;
use crashbo::benchmarks::{self, BenchmarkId};
use crashbo::exec;
use crashbo::gpcr::EpOptions;
use crashbo::harness::{self, ExperimentConfig, Method};
use crashbo::hyperopt::{MapOptions, PriorSpec};

#[derive(Parser)]
#[command(name = "crashbo", version, about = "Bayesian optimization under crash constraints")]
struct Cli {
    /// Worker threads for repetitions and inner sweeps
    /// (defaults to the CRASHBO_THREADS environment variable, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded batch of optimization repetitions on one benchmark.
    Run(RunArgs),
    /// Merge run summaries for one benchmark into a comparison CSV.
    Compare(CompareArgs),
    /// Recompute the benchmark reference constants (probe sweep + multistart
    /// refinement), writing them with provenance comments.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Benchmark name: michalewicz10 | hartman6 | eggcrate2.
    #[arg(long)]
    benchmark: String,
    /// Optimizer: eic2 | hc | mc | ac.
    #[arg(long)]
    method: String,
    /// Evaluations per repetition.
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Independent repetitions.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Master seed; repetition seeds derive from it by a counter scheme.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Optional TOML file overriding priors, noise, delta and solver options.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Two or more summary.json files from `crashbo run`, one per method.
    #[arg(required = true)]
    summaries: Vec<PathBuf>,
    /// Destination CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Benchmark name or `all`.
    #[arg(long, default_value = "all")]
    benchmark: String,
    /// Uniform probes per benchmark.
    #[arg(long, default_value_t = 1_000_000)]
    probes: usize,
    /// Refinement starts taken from the lowest probes.
    #[arg(long, default_value_t = 50)]
    refine_starts: usize,
    /// Pattern-search evaluations per refinement start.
    #[arg(long, default_value_t = 4000)]
    refine_evals: usize,
    #[arg(long, default_value_t = 9)]
    seed: u64,
    /// Destination constants file.
    #[arg(long, default_value = "benchmark_constants.toml")]
    out: PathBuf,
}

/// Optional config-file overrides, mirroring the run defaults. Sections are
/// replaced whole when present.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileConfig {
    delta: Option<f64>,
    noise_std_objective: Option<f64>,
    noise_std_constraint: Option<f64>,
    objective_priors: Option<PriorSpec>,
    constraint_priors: Option<PriorSpec>,
    ep: Option<EpOptions>,
    search: Option<SearchOptions>,
    map: Option<MapOptions>,
}

fn apply_file_config(config: &mut ExperimentConfig, path: &PathBuf) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let file: FileConfig =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if let Some(v) = file.delta {
        config.delta = v;
    }
    if file.noise_std_objective.is_some() {
        config.noise_std_objective = file.noise_std_objective;
    }
    if file.noise_std_constraint.is_some() {
        config.noise_std_constraint = file.noise_std_constraint;
    }
    if let Some(v) = file.objective_priors {
        config.objective_priors = v;
    }
    if let Some(v) = file.constraint_priors {
        config.constraint_priors = v;
    }
    if let Some(v) = file.ep {
        config.ep = v;
    }
    if let Some(v) = file.search {
        config.search = v;
    }
    if let Some(v) = file.map {
        config.map = v;
    }
    Ok(())
}

/// Exit status conventions: 0 success, 1 runtime/partial failure, 2 usage.
fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("CRASHBO_THREADS").ok().and_then(|v| v.parse().ok())
    });
    exec::configure_threads(threads);

    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    eprintln!("run `crashbo --help` for usage");
    ExitCode::from(2)
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let Ok(benchmark) = BenchmarkId::from_str(&args.benchmark) else {
        return Ok(usage_error(&format!("unknown benchmark '{}'", args.benchmark)));
    };
    let Ok(method) = Method::from_str(&args.method) else {
        return Ok(usage_error(&format!("unknown method '{}'", args.method)));
    };
    if args.iters == 0 || args.reps == 0 {
        return Ok(usage_error("--iters and --reps must be at least 1"));
    }

    let mut config = ExperimentConfig::defaults(benchmark, method);
    config.iterations = args.iters;
    config.repetitions = args.reps;
    config.seed = args.seed;
    if let Some(path) = &args.config {
        apply_file_config(&mut config, path)?;
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    // The manifest goes to disk before any evaluation runs.
    let manifest = output::write_manifest(&args.out, &config)?;

    let traces = harness::run_all(&config).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    for (rep, trace) in traces.iter().enumerate() {
        output::write_trace_csv(&args.out, rep, &config, trace)?;
    }
    let summary = harness::aggregate(&traces);
    output::write_summary(&args.out, &config, &manifest, &summary, &traces)?;

    println!(
        "{} x{} on {}: mean final regret {}, completed {}/{}",
        method.name(),
        config.repetitions,
        benchmark.name(),
        summary
            .mean_final_regret
            .map_or("n/a".to_string(), |v| format!("{v:.4}")),
        summary.completed_runs,
        summary.runs,
    );
    if summary.completed_runs < summary.runs {
        eprintln!("warning: some repetitions ended early; partial traces preserved");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<ExitCode> {
    if args.summaries.len() < 2 {
        return Ok(usage_error("compare needs at least two summary files"));
    }
    let mut rows = Vec::new();
    let mut benchmark: Option<String> = None;
    for path in &args.summaries {
        let row = output::read_summary_row(path)?;
        match &benchmark {
            None => benchmark = Some(row.benchmark.clone()),
            Some(b) if *b != row.benchmark => {
                return Ok(usage_error(&format!(
                    "summaries mix benchmarks '{b}' and '{}'",
                    row.benchmark
                )));
            }
            _ => {}
        }
        rows.push(row);
    }
    let csv = output::render_comparison(&rows);
    match &args.out {
        Some(path) => std::fs::write(path, csv)
            .with_context(|| format!("writing comparison {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<ExitCode> {
    let ids: Vec<BenchmarkId> = if args.benchmark == "all" {
        BenchmarkId::all().to_vec()
    } else {
        match BenchmarkId::from_str(&args.benchmark) {
            Ok(id) => vec![id],
            Err(_) => {
                return Ok(usage_error(&format!("unknown benchmark '{}'", args.benchmark)));
            }
        }
    };
    let reports: Vec<_> = ids
        .iter()
        .map(|id| {
            let r = benchmarks::constant_oracle(
                *id,
                args.probes,
                args.refine_starts,
                args.refine_evals,
                args.seed,
            );
            println!(
                "{}: f_min {} at {:?} (probe range [{}, {}], hc_bound {})",
                id.name(),
                r.f_min,
                r.argmin,
                r.probe_min,
                r.probe_max,
                r.hc_bound
            );
            r
        })
        .collect();
    std::fs::write(&args.out, benchmarks::render_constants(&reports))
        .with_context(|| format!("writing constants {}", args.out.display()))?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}
