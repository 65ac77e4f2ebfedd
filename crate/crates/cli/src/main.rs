//! Command-line driver over the core library: stationary measures, effective
//! generators, forward solves, timescale sweeps, and certificate rechecks.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 for numerical
//! failures, and 4 when `--strict` is set and a certificate verdict is false.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctmc_lumper_core::coarse_graining::effective_generator;
use ctmc_lumper_core::dynamics::solve_constant;
use ctmc_lumper_core::io;
use ctmc_lumper_core::multiscale::Scenario;
use ctmc_lumper_core::study::{emit, run_study, AlphaMode, DEFAULT_N, DEFAULT_T_END};
use ctmc_lumper_core::{Error, Result, StudyConfig, TimeGrid};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VERDICT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ctmc-lumper",
    version,
    about = "Model reduction for finite-state Markov jump processes",
    after_help = "The CTMC_LUMPER_THREADS environment variable caps study parallelism."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the stationary measure of a generator as JSON.
    Stationary {
        /// Path to a generator JSON file.
        generator: PathBuf,
    },
    /// Print the effective generator induced by a lumping map as JSON.
    Effective {
        /// Path to a generator JSON file.
        generator: PathBuf,
        /// Path to a lumping-map JSON file.
        map: PathBuf,
    },
    /// Solve the forward equation and print the trajectory as CSV.
    Solve {
        /// Path to a generator JSON file.
        generator: PathBuf,
        /// Path to an initial-distribution JSON file.
        mu0: PathBuf,
        /// Time horizon.
        #[arg(long = "T")]
        t_end: f64,
        /// Grid policy: "experiment" or "uniform:STEPS".
        #[arg(long, default_value = "experiment")]
        grid: String,
    },
    /// Sweep a slow-fast family over timescale ratios and write artifacts.
    Study(StudyArgs),
    /// Recheck emitted certificates in a study directory.
    VerifyBounds {
        /// Directory holding bounds_eps_*.json files.
        dir: PathBuf,
        /// Exit with status 4 when any certificate verdict is false.
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Args)]
struct StudyArgs {
    /// Preset family: S1, S2, or S3.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    scenario: Option<String>,
    /// Path to a slow-fast specification JSON file.
    #[arg(long, requires = "mu0")]
    spec: Option<PathBuf>,
    /// Path to the initial distribution for a custom specification.
    #[arg(long, requires = "spec")]
    mu0: Option<PathBuf>,
    /// Fast-block size for preset families.
    #[arg(long, default_value_t = DEFAULT_N, conflicts_with = "spec")]
    n: usize,
    /// Comma-separated timescale ratios, largest first.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    /// Time horizon.
    #[arg(long = "T", default_value_t = DEFAULT_T_END)]
    t_end: f64,
    /// Grid policy: "experiment" or "uniform:STEPS".
    #[arg(long, default_value = "experiment")]
    grid: String,
    /// Fixed log-Sobolev constant; omit to estimate one from the fast blocks.
    #[arg(long)]
    alpha: Option<f64>,
    /// Mixing weight pulling the initial datum off the simplex boundary.
    #[arg(long)]
    delta: Option<f64>,
    /// Path to a separate initial distribution for the effective dynamics.
    #[arg(long)]
    eff0: Option<PathBuf>,
    /// Seed for the log-Sobolev search.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for all artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Exit with status 4 when any certificate verdict is false.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(error_exit(&err))
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Stationary { generator } => cmd_stationary(&generator),
        Command::Effective { generator, map } => cmd_effective(&generator, &map),
        Command::Solve {
            generator,
            mu0,
            t_end,
            grid,
        } => cmd_solve(&generator, &mu0, t_end, &grid),
        Command::Study(args) => cmd_study(args),
        Command::VerifyBounds { dir, strict } => cmd_verify_bounds(&dir, strict),
    }
}

/// Distinguishes bad inputs from computations that failed on valid inputs.
fn error_exit(err: &Error) -> u8 {
    match err {
        Error::SolveFailure { .. }
        | Error::EigenFailure { .. }
        | Error::ExpmFailure { .. }
        | Error::NotStationary { .. }
        | Error::DegenerateRatio { .. }
        | Error::MassDrift { .. }
        | Error::NonPositiveMeasure { .. }
        | Error::NonPositiveMarginal { .. }
        | Error::UndefinedConditional { .. }
        | Error::InsufficientDecay { .. }
        | Error::TrajectoryTooShort { .. }
        | Error::MissingFit { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn parse_scenario(tag: &str) -> Result<Scenario> {
    match tag {
        "S1" | "s1" => Ok(Scenario::S1),
        "S2" | "s2" => Ok(Scenario::S2),
        "S3" | "s3" => Ok(Scenario::S3),
        other => Err(Error::BadConfig {
            detail: format!("unknown scenario {other:?}, expected S1, S2, or S3"),
        }),
    }
}

fn parse_grid(policy: &str, t_end: f64) -> Result<Option<TimeGrid>> {
    if policy == "experiment" {
        return Ok(None);
    }
    if let Some(rest) = policy.strip_prefix("uniform:") {
        let steps: usize = rest.parse().map_err(|_| Error::BadConfig {
            detail: format!("grid step count {rest:?} is not an integer"),
        })?;
        return Ok(Some(TimeGrid::uniform(t_end, steps)?));
    }
    Err(Error::BadConfig {
        detail: format!("unknown grid policy {policy:?}, expected \"experiment\" or \"uniform:STEPS\""),
    })
}

fn cmd_stationary(generator: &Path) -> Result<u8> {
    let l = io::parse_generator(&read(generator)?)?;
    let rho = l.stationary_measure()?;
    println!("{}", io::probability_vector_json(&rho));
    Ok(0)
}

fn cmd_effective(generator: &Path, map: &Path) -> Result<u8> {
    let l = io::parse_generator(&read(generator)?)?;
    let map = io::parse_coarse_graining_map(&read(map)?)?;
    let rho = l.stationary_measure()?;
    let n_eff = effective_generator(&l, &rho, &map)?;
    println!("{}", io::generator_json(&n_eff));
    Ok(0)
}

fn cmd_solve(generator: &Path, mu0: &Path, t_end: f64, grid: &str) -> Result<u8> {
    let l = io::parse_generator(&read(generator)?)?;
    let mu0 = io::parse_probability_vector(&read(mu0)?)?;
    let grid = match parse_grid(grid, t_end)? {
        Some(grid) => grid,
        None => TimeGrid::experiment_default(t_end)?,
    };
    let traj = solve_constant(&l, &mu0, &grid)?;
    print!("{}", io::trajectory_csv(&traj));
    Ok(0)
}

fn cmd_study(args: StudyArgs) -> Result<u8> {
    let mut config: StudyConfig = match (&args.scenario, &args.spec) {
        (Some(tag), None) => {
            let mut config = StudyConfig::preset(parse_scenario(tag)?);
            config.n = args.n;
            config
        }
        (None, Some(spec_path)) => {
            let spec = io::parse_multiscale_spec(&read(spec_path)?)?;
            let mu0_path = args.mu0.as_ref().expect("clap ties --mu0 to --spec");
            let mu0 = io::parse_probability_vector(&read(mu0_path)?)?;
            let name = spec_path
                .file_stem()
                .map(|stem| stem.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".to_string());
            StudyConfig::custom(name, spec, mu0)
        }
        _ => unreachable!("clap enforces exactly one of --scenario and --spec"),
    };
    if !args.eps.is_empty() {
        config.epsilons = args.eps.clone();
    }
    config.t_end = args.t_end;
    config.grid = parse_grid(&args.grid, args.t_end)?;
    if let Some(alpha) = args.alpha {
        config.alpha = AlphaMode::Fixed(alpha);
    }
    if args.delta.is_some() {
        config.delta = args.delta;
    }
    if let Some(path) = &args.eff0 {
        config.eff0 = Some(io::parse_probability_vector(&read(path)?)?);
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }

    let output = run_study(&config)?;
    let written = emit(&output, &args.out)?;

    let report = &output.report;
    println!(
        "{} with n = {}, T = {}, alpha = {} ({})",
        report.scenario,
        report.n,
        report.t_end,
        io::full_precision(report.alpha),
        report.alpha_method
    );
    for record in &report.records {
        println!(
            "eps {:e}: sup H = {}, at t = {}, verdict {}",
            record.eps,
            io::full_precision(record.sup_entropy),
            io::full_precision(record.t_argmax),
            record.verdict
        );
    }
    for failure in &report.failures {
        println!("eps {:e}: failed: {}", failure.eps, failure.message);
    }
    match report.slope {
        Some(slope) => println!(
            "slope = {} over {} ratios",
            io::full_precision(slope),
            report.fit_window.len()
        ),
        None => println!("slope undefined"),
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    println!("{} artifacts written to {}", written.len(), args.out.display());

    if !report.failures.is_empty() {
        return Ok(EXIT_NUMERICAL);
    }
    if args.strict && report.records.iter().any(|record| !record.verdict) {
        return Ok(EXIT_VERDICT);
    }
    Ok(0)
}

fn cmd_verify_bounds(dir: &Path, strict: bool) -> Result<u8> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|path| {
            path.file_name()
                .and_then(|name| name.to_str())
                .is_some_and(|name| name.starts_with("bounds_eps_") && name.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::BadConfig {
            detail: format!("no bounds_eps_*.json files in {}", dir.display()),
        });
    }

    let mut all_hold = true;
    for path in &paths {
        let record = io::parse_bound_record(&read(path)?)?;
        let recheck = record.verdict_from_series();
        if recheck != record.verdict {
            return Err(Error::Format {
                detail: format!(
                    "{}: stored verdict {} disagrees with the recomputed {}",
                    path.display(),
                    record.verdict,
                    recheck
                ),
            });
        }
        let name = path.file_name().unwrap().to_string_lossy();
        match record.eps {
            Some(eps) => println!(
                "{name}: eps {eps:e}, sup lhs = {} at t = {}, verdict {}",
                io::full_precision(record.sup_lhs),
                io::full_precision(record.t_argmax),
                record.verdict
            ),
            None => println!(
                "{name}: sup lhs = {} at t = {}, verdict {}",
                io::full_precision(record.sup_lhs),
                io::full_precision(record.t_argmax),
                record.verdict
            ),
        }
        all_hold &= record.verdict;
    }

    if strict && !all_hold {
        return Ok(EXIT_VERDICT);
    }
    Ok(0)
}
