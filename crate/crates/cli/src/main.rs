use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fgma_core::harness::{average_dataset, estimate_dataset, run_experiment, write_outputs, Dataset};
use fgma_core::harness::{check::run_checks, records_csv_string};
use fgma_core::io::{to_json_string_pretty, write_matrix_csv};
use fgma_core::{Error, ExperimentConfig};
use serde::Serialize;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_FAILURE_RATE: u8 = 3;
const EXIT_CHECK: u8 = 4;
const EXIT_USAGE: u8 = 64;

/// FGLS model averaging for regression with time series errors.
#[derive(Parser)]
#[command(name = "fgma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one dataset from the configured design and error process.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Sample size; defaults to the first configured size.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Estimate the banded inverse covariance of a dataset's errors.
    EstimateCov {
        /// Dataset in CSV (y,x1,...) or JSON form.
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Select FAMMA weights over H_N for a dataset.
    Average {
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the full Monte Carlo experiment.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Run the built-in invariant suite.
    Check {
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults to the AR(1) reference setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file, or directory for `experiment`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Config(_)) { EXIT_CONFIG } else { EXIT_OTHER };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

type Outcome = std::result::Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("fgma: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Simulate { common, n } => simulate(&common, n),
        Command::EstimateCov { data, common } => estimate_cov(&data, &common),
        Command::Average { data, common } => average(&data, &common),
        Command::Experiment { common } => experiment(&common),
        Command::Check { format } => check(format),
    }
}

fn load_config(common: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::ar1_reference(vec![200, 400, 800, 1600], 200, 1),
    };
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn load_dataset(path: &Path) -> std::result::Result<Dataset, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure { code: EXIT_OTHER, message: format!("cannot read {}: {e}", path.display()) })?;
    Dataset::parse(&text).map_err(|e| Failure { code: EXIT_OTHER, message: format!("{}: {e}", path.display()) })
}

/// Writes to `--out` when given, otherwise to stdout.
fn emit(out: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> std::result::Result<(), Failure>) -> Outcome {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            body(&mut f)?;
            f.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(0)
}

fn write_json<T: Serialize>(w: &mut dyn Write, value: &T) -> std::result::Result<(), Failure> {
    writeln!(w, "{}", to_json_string_pretty(value)?)?;
    Ok(())
}

fn simulate(common: &Common, n: Option<usize>) -> Outcome {
    let cfg = load_config(common)?;
    let n = n.unwrap_or(cfg.sample_sizes[0]);
    let ds = Dataset::simulate(&cfg, n, cfg.base_seed)?;
    emit(common.out.as_deref(), |w| match common.format {
        Format::Csv => Ok(ds.write_csv(w)?),
        Format::Json => write_json(w, &ds),
    })
}

#[derive(Serialize)]
struct CovarianceReport {
    n: usize,
    d: usize,
    q: usize,
    bandwidth: usize,
    min_eigenvalue: f64,
    estimate: fgma_core::covest::EstimateSummary,
}

fn estimate_cov(data: &Path, common: &Common) -> Outcome {
    let cfg = load_config(common)?;
    let ds = load_dataset(data)?;
    let (r, est) = estimate_dataset(&ds, &cfg.analysis())?;
    emit(common.out.as_deref(), |w| match common.format {
        Format::Csv => Ok(write_matrix_csv(w, est.matrix())?),
        Format::Json => write_json(
            w,
            &CovarianceReport {
                n: r.n,
                d: r.d,
                q: r.q,
                bandwidth: fgma_core::linalg::bandwidth(est.matrix()),
                min_eigenvalue: fgma_core::linalg::min_eigenvalue(est.matrix()),
                estimate: est.summary(),
            },
        ),
    })
}

fn average(data: &Path, common: &Common) -> Outcome {
    let cfg = load_config(common)?;
    let ds = load_dataset(data)?;
    let report = average_dataset(&ds, &cfg.analysis())?;
    emit(common.out.as_deref(), |w| match common.format {
        Format::Csv => {
            writeln!(w, "model,size,famma,mma")?;
            let (f, m) = (report.famma.weights.dense(), report.mma.weights.dense());
            for i in 0..report.candidates {
                writeln!(w, "{},{},{},{}", i + 1, i + 1, fgma_core::io::fmt_f64(f[i]), fgma_core::io::fmt_f64(m[i]))?;
            }
            Ok(())
        }
        Format::Json => write_json(w, &report),
    })
}

fn experiment(common: &Common) -> Outcome {
    let cfg = load_config(common)?;
    let threads = common
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = run_experiment(&cfg, threads)?;
    match common.out.as_deref().or(cfg.output.as_deref()) {
        Some(dir) => {
            write_outputs(dir, &result)?;
            eprintln!("fgma: wrote {} and {}", dir.join("records.csv").display(), dir.join("summary.json").display());
        }
        None => {
            emit(None, |w| match common.format {
                Format::Csv => Ok(w.write_all(records_csv_string(&result.records).as_bytes())?),
                Format::Json => write_json(w, &result.summary),
            })?;
        }
    }
    let s = &result.summary;
    if s.failure_rate_exceeded {
        eprintln!("fgma: failure rate {:.4} exceeds the allowed {:.4}", s.failure_rate, s.max_failure_rate);
        return Ok(EXIT_FAILURE_RATE);
    }
    Ok(0)
}

fn check(format: Format) -> Outcome {
    let outcomes = run_checks();
    let passed = outcomes.iter().all(|c| c.passed);
    emit(None, |w| match format {
        Format::Csv => {
            for c in &outcomes {
                writeln!(w, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
            Ok(())
        }
        Format::Json => write_json(w, &outcomes),
    })?;
    Ok(if passed { 0 } else { EXIT_CHECK })
}
