use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rgf_core::benchmarks::{
    run_experiment, write_csv_file, BackendKind, BatchResult, ExperimentConfig, FilterKind, TailPair,
};
use rgf_core::models::RadarConstants;
use rgf_core::selftest::{run_selftest, SelftestOptions};
use rgf_core::{Error, JitterPolicy};

/// Simulation benchmarks for robust Gaussian filtering.
#[derive(Parser, Debug)]
#[command(name = "rgf-bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scalar random walk with a Cauchy-contaminated sensor.
    Linear(LinearArgs),
    /// Reentry vehicle tracked by a radar with glint noise.
    Radar(RadarArgs),
    /// Robust filters with mis-specified tails on the scalar problem.
    Sweep(SweepArgs),
    /// Run the embedded invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<u64>,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Monte Carlo samples per moment computation.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = BackendArg::MonteCarlo)]
    backend: BackendArg,
    /// Per-step CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary output (stdout when absent).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LinearArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated subset of gf-thin, gf-fat, rgf.
    #[arg(long, value_delimiter = ',', default_value = "gf-thin,gf-fat,rgf")]
    filters: Vec<String>,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Tail weight of the simulated sensor and the filters.
    #[arg(long, default_value_t = 0.1)]
    omega: f64,
    /// Cauchy scale of the simulated sensor and the robust filter.
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
}

#[derive(Args, Debug)]
struct RadarArgs {
    #[command(flatten)]
    common: Common,
    /// JSON file overriding the scenario constants.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "gf-thin,gf-fat,rgf")]
    filters: Vec<String>,
    /// Tail weight assumed by the robust filter.
    #[arg(long, default_value_t = 0.1)]
    omega: f64,
    /// Cauchy scale of the robust filter in nominal standard deviations.
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Tail weights, paired element-wise with --gamma.
    #[arg(long, value_delimiter = ',')]
    omega: Vec<f64>,
    /// Cauchy scales, paired element-wise with --omega.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Named pairs: matched (0.1, 10), under (0.001, 1), over (0.5, 100).
    #[arg(long, value_delimiter = ',')]
    pairs: Vec<String>,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Jitter policy for the checks; `none` is a negative control.
    #[arg(long, value_enum, default_value_t = JitterArg::Default, hide = true)]
    jitter: JitterArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    MonteCarlo,
    Unscented,
    ExactLinear,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum JitterArg {
    Default,
    None,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::MonteCarlo => BackendKind::MonteCarlo,
            BackendArg::Unscented => BackendKind::Unscented,
            BackendArg::ExactLinear => BackendKind::ExactLinear,
        }
    }
}

fn apply_common(cfg: &mut ExperimentConfig, c: &Common) {
    let count = c.seeds.unwrap_or(cfg.seeds.len() as u64);
    cfg.seeds = (c.seed_offset..c.seed_offset.saturating_add(count)).collect();
    cfg.samples = c.samples;
    cfg.backend = c.backend.into();
}

fn parse_filters(names: &[String]) -> Result<Vec<FilterKind>, Error> {
    names.iter().map(|n| n.trim().parse()).collect()
}

fn sweep_pairs(args: &SweepArgs) -> Result<Vec<TailPair>, Error> {
    if args.omega.len() != args.gamma.len() {
        return Err(Error::Config(format!(
            "--omega has {} values but --gamma has {}",
            args.omega.len(),
            args.gamma.len()
        )));
    }
    let mut pairs: Vec<TailPair> = args
        .omega
        .iter()
        .zip(&args.gamma)
        .map(|(&omega, &gamma)| TailPair { omega, gamma })
        .collect();
    for name in &args.pairs {
        pairs.push(TailPair::named(name.trim())?);
    }
    let mut unique: Vec<TailPair> = Vec::new();
    for p in pairs {
        if !unique.contains(&p) {
            unique.push(p);
        }
    }
    if unique.is_empty() {
        unique = ExperimentConfig::sweep().pairs;
    }
    Ok(unique)
}

fn resolve(command: &Command) -> Result<(ExperimentConfig, &Common), Error> {
    let (cfg, common) = match command {
        Command::Linear(a) => {
            let mut cfg = ExperimentConfig::linear_example();
            apply_common(&mut cfg, &a.common);
            cfg.filters = parse_filters(&a.filters)?;
            cfg.steps = a.steps;
            cfg.omega = a.omega;
            cfg.gamma = a.gamma;
            (cfg, &a.common)
        }
        Command::Radar(a) => {
            let mut cfg = ExperimentConfig::radar();
            apply_common(&mut cfg, &a.common);
            cfg.filters = parse_filters(&a.filters)?;
            cfg.omega = a.omega;
            cfg.gamma = a.gamma;
            if let Some(path) = &a.config {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                cfg.radar = RadarConstants::from_json(&text)?;
            }
            (cfg, &a.common)
        }
        Command::Sweep(a) => {
            let mut cfg = ExperimentConfig::sweep();
            apply_common(&mut cfg, &a.common);
            cfg.steps = a.steps;
            cfg.pairs = sweep_pairs(a)?;
            (cfg, &a.common)
        }
        Command::Selftest(_) => unreachable!("selftest has no experiment"),
    };
    cfg.validate()?;
    Ok((cfg, common))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Argument(_) | Error::Dimension { .. } => 2,
        _ => 1,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("RGF_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("RGF_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn print_table(result: &BatchResult) {
    let report = &result.report;
    eprintln!("{} ({} seeds)", report.scenario, report.runs.len());
    for s in &report.summary {
        let fmt = |v: Option<f64>| v.map_or("diverged".to_string(), |v| format!("{v:.4}"));
        let mut line = format!(
            "  {:<22} median rmse {:>10}  median position error {:>10}  diverged {}",
            s.filter,
            fmt(s.median_rmse),
            fmt(s.median_position_error),
            s.diverged_runs
        );
        if let Some(r) = s.rmse_ratio {
            line.push_str(&format!("  ratio {r:.4}"));
        }
        eprintln!("{line}");
    }
}

fn run_benchmark(command: &Command) -> Result<(), Error> {
    let (cfg, common) = resolve(command)?;
    configure_threads()?;
    let result = run_experiment(&cfg)?;
    if let Some(path) = &common.out {
        write_csv_file(&result.logs, path)?;
    }
    let json = result.report.to_json()?;
    match &common.summary {
        Some(path) => fs::write(path, json + "\n")
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    print_table(&result);
    Ok(())
}

fn selftest(args: &SelftestArgs) -> ExitCode {
    let jitter = match args.jitter {
        JitterArg::Default => JitterPolicy::default(),
        JitterArg::None => JitterPolicy::none(),
    };
    let results = run_selftest(&SelftestOptions { jitter });
    let mut ok = true;
    for r in &results {
        ok &= r.passed;
        println!(
            "{} {:<22} tol {:<46} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.tolerance,
            r.detail
        );
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Selftest(args) = &cli.command {
        return selftest(args);
    }
    match run_benchmark(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rgf-bench: {e}");
            if exit_code(&e) == 2 {
                eprintln!("run `rgf-bench --help` for usage");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
