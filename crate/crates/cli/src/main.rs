//! `cesdetect`: batch experiments for adaptive detection in CES clutter.
//!
//! Exit codes: 0 success, 1 selftest failure, 2 config error, 3 numerical
//! failure (partial results are flushed first).

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cesdetect::asymptotics::sandwich_report;
use cesdetect::montecarlo::{fmt_f64, run_h0, run_h1, run_roc, ExperimentConfig, ExperimentResult, DEFAULT_SAMPLE_SIZE};
use cesdetect::{selftest, DetectorKind, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};

use output::{RunDir, Status, CALIBRATION_HEADER};

#[derive(Parser)]
#[command(name = "cesdetect", version = output_version(), about = "Mismatched-model adaptive detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn output_version() -> &'static str {
    Box::leak(output::version().into_boxed_str())
}

#[derive(Subcommand)]
enum Command {
    /// Null or single-amplitude run: rates, KS distances and calibration.
    Simulate(RunArgs),
    /// Detection curves over the SNR grid, one CSV per detector.
    Roc(RunArgs),
    /// Sandwich-matrix report and the weights of the limiting null law.
    Asymptotics(RunArgs),
    /// Built-in identity checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Never changes any output.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Args)]
struct SelftestArgs {
    /// Relative perturbation of the reference fixtures (sensitivity check).
    #[arg(long, default_value_t = 0.0, hide = true)]
    perturb: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        self != Format::Json
    }

    fn json(self) -> bool {
        self != Format::Csv
    }
}

const EXIT_SELFTEST: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => run(&args, "simulate"),
        Command::Roc(args) => run(&args, "roc"),
        Command::Asymptotics(args) => run(&args, "asymptotics"),
        Command::Selftest(args) => cmd_selftest(&args),
    }
}

/// `path:line:col: message` for parse errors, `path:line: message` when the
/// offending key can be located, `path: message` otherwise.
fn anchored(path: &Path, text: &str, err: &Error) -> String {
    let msg = match err {
        Error::InvalidConfig(m) => m.clone(),
        other => other.to_string(),
    };
    let p = path.display();
    if let Some((line, col)) = parse_position(&msg) {
        return format!("{p}:{line}:{col}: {msg}");
    }
    let key: String = msg.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == '.').collect();
    let key = key.rsplit('.').next().unwrap_or("");
    let key = if key == "detector" { "detectors" } else { key };
    if !key.is_empty() {
        let needle = format!("\"{key}\"");
        if let Some(line) = text.lines().position(|l| l.contains(&needle)) {
            return format!("{p}:{}: {msg}", line + 1);
        }
    }
    format!("{p}: {msg}")
}

/// Extracts `line L column C` from a JSON error message.
fn parse_position(msg: &str) -> Option<(usize, usize)> {
    let rest = &msg[msg.rfind("line ")? + 5..];
    let mut parts = rest.split_whitespace();
    let line = parts.next()?.parse().ok()?;
    (parts.next()? == "column").then_some(())?;
    let col = parts.next()?.trim_end_matches(|c: char| !c.is_ascii_digit()).parse().ok()?;
    Some((line, col))
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, String> {
    let text = fs::read_to_string(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text).map_err(|e| anchored(&args.config, &text, &e))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(args: &RunArgs, sub: &str) -> ExitCode {
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut dir = match RunDir::create(&args.out, sub, Some(&args.config), Some(cfg.seed), args.workers) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", args.out.display());
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };
    let started = Instant::now();
    let outcome = match sub {
        "simulate" => simulate(&cfg, args, &mut dir),
        "roc" => roc(&cfg, args, &mut dir),
        _ => asymptotics(&cfg, &mut dir),
    };
    let elapsed = Some(started.elapsed().as_secs_f64());
    let (status, message, code) = match outcome {
        Ok(()) => (Status::Ok, None, ExitCode::SUCCESS),
        Err(e) => {
            eprintln!("error: {e}");
            let status = if matches!(e, Error::PartialRun { .. }) { Status::Partial } else { Status::Failed };
            let code = if matches!(e, Error::InvalidConfig(_)) { EXIT_CONFIG } else { EXIT_NUMERICAL };
            (status, Some(e.to_string()), ExitCode::from(code))
        }
    };
    if let Err(e) = dir.finish(status, elapsed, message) {
        eprintln!("error: cannot finalize manifest: {e}");
        return ExitCode::from(EXIT_NUMERICAL);
    }
    code
}

/// Runs, then writes whatever result exists; a partial result is flushed
/// before the error is passed on.
fn write_with_partial(
    result: Result<ExperimentResult, Error>,
    write: impl FnOnce(&ExperimentResult) -> Result<(), Error>,
) -> Result<(), Error> {
    match result {
        Ok(r) => {
            log::info!("{} trials in {:.2?}", r.requested_trials, r.wall_time);
            write(&r)
        }
        Err(Error::PartialRun { completed, requested, message, result }) => {
            write(&result)?;
            Err(Error::PartialRun { completed, requested, message, result })
        }
        Err(e) => Err(e),
    }
}

fn simulate(cfg: &ExperimentConfig, args: &RunArgs, dir: &mut RunDir) -> Result<(), Error> {
    let result = if cfg.is_null() {
        run_h0(cfg, args.workers)
    } else {
        let mut single = cfg.clone();
        single.snr_db.clear();
        run_h1(&single, &single.threshold_set()?, args.workers)
    };
    let format = args.format;
    write_with_partial(result, |r| {
        if format.json() {
            dir.write("result.json", &serde_json::to_vec_pretty(r)?)?;
        }
        if format.csv() {
            let mut buf = Vec::new();
            r.write_csv(&mut buf)?;
            dir.write("result.csv", &buf)?;
            if r.points.iter().any(|p| p.detectors.iter().any(|d| !d.calibration.is_empty())) {
                dir.write("calibration.csv", &calibration_csv(r)?)?;
            }
        }
        Ok(())
    })
}

fn calibration_csv(r: &ExperimentResult) -> Result<Vec<u8>, Error> {
    let mut w = csv_writer();
    w.write_record(CALIBRATION_HEADER)?;
    for d in r.points.iter().flat_map(|p| &p.detectors) {
        for c in &d.calibration {
            w.write_record([
                d.detector.name().to_string(),
                fmt_f64(c.nominal_pfa),
                fmt_f64(c.empirical_threshold),
                fmt_f64(c.asymptotic_threshold),
                fmt_f64(c.relative_gap),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn roc(cfg: &ExperimentConfig, args: &RunArgs, dir: &mut RunDir) -> Result<(), Error> {
    let format = args.format;
    write_with_partial(run_roc(cfg, args.workers), |r| {
        if format.json() {
            dir.write("result.json", &serde_json::to_vec_pretty(r)?)?;
        }
        if format.csv() {
            for kind in DetectorKind::ALL.iter().filter(|k| r.config.detectors.contains(k)) {
                let mut buf = Vec::new();
                r.write_roc_csv(*kind, &mut buf)?;
                dir.write(&format!("roc_{}.csv", kind.name()), &buf)?;
            }
        }
        Ok(())
    })
}

fn asymptotics(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<(), Error> {
    let sigma = cfg.sigma.build(cfg.n)?;
    let v = cfg.steering.build(cfg.n)?;
    let report = sandwich_report(&cfg.model, &sigma, &v, cfg.sample_size.unwrap_or(DEFAULT_SAMPLE_SIZE), cfg.seed)?;
    dir.write("sandwich.json", &serde_json::to_vec_pretty(&report)?)?;
    println!(
        "lambda = ({:.6}, {:.6}) +/- ({:.2e}, {:.2e})",
        report.lambdas[0], report.lambdas[1], report.lambdas_se[0], report.lambdas_se[1]
    );
    Ok(())
}

fn cmd_selftest(args: &SelftestArgs) -> ExitCode {
    let started = Instant::now();
    let report = match selftest::run(args.perturb) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("selftest could not run: {e}");
            return ExitCode::from(EXIT_SELFTEST);
        }
    };
    for c in &report.checks {
        println!(
            "{} {} [fixture {}] rel_err={:.3e} tol={:.0e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.fixture,
            c.rel_err,
            c.tolerance
        );
    }
    let failed: Vec<_> = report.failures().map(|c| format!("{} [fixture {}]", c.name, c.fixture)).collect();
    println!("{} checks in {:.2?}", report.checks.len(), started.elapsed());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed identities:\n  {}", failed.join("\n  "));
        ExitCode::from(EXIT_SELFTEST)
    }
}
