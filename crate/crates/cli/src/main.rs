use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qtewma::bench::{run_experiment, ExperimentConfig};
use qtewma::calibration::{calibrate, CalibrationConfig, ThresholdSource, ThresholdTable};
use qtewma::datagen::{generate_stream, ingest_csv, IngestOptions, StreamSpec};
use qtewma::detector::{DetectorConfig, QtEwma};
use qtewma::quanttree::{uniform_probs, QuantTreePartition};
use qtewma::{Error, Precision, Scalar};

const EXIT_FAILURE: u8 = 1;
const EXIT_MISSING_TABLE: u8 = 3;
const EXIT_MISMATCH: u8 = 4;
const EXIT_INPUT: u8 = 5;

#[derive(Parser)]
#[command(name = "qtewma", version, about = "Online change detection with QuantTree histograms and EWMA statistics")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "QTEWMA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a QuantTree partition from a CSV training set.
    Fit(FitArgs),
    /// Calibrate QT-EWMA thresholds by Monte Carlo simulation.
    Calibrate(CalibrateArgs),
    /// Monitor a CSV stream on stdin.
    Monitor(MonitorArgs),
    /// Write the samples of a stream spec as CSV.
    Simulate(SimulateArgs),
    /// Run an experiment and write its report.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Hybrid,
    Polynomial,
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV, one sample per row.
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value_t = 32)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian jitter added to every value.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, value_enum, default_value = "f64")]
    precision: PrecisionArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    arl0: f64,
    #[arg(long, default_value_t = 0.03)]
    lambda: f64,
    #[arg(long)]
    k: usize,
    /// Training set size N.
    #[arg(long)]
    n: usize,
    /// Updating-speed divisor; omit for plain QT-EWMA.
    #[arg(long)]
    beta: Option<f64>,
    /// Stop updating once N + t reaches this many samples.
    #[arg(long)]
    stop_at: Option<u64>,
    #[arg(long, default_value_t = 100_000)]
    replicates: usize,
    #[arg(long, default_value_t = 5000)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 7)]
    degree: usize,
    #[arg(long, value_enum, default_value = "f64")]
    precision: PrecisionArg,
    #[arg(long, value_enum, default_value = "hybrid")]
    source: SourceArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    partition: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Stream spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::CalibrationMismatch(_) => EXIT_MISMATCH,
            Error::Io { .. } | Error::Parse { .. } | Error::Format(_) | Error::ZeroVariance { .. } => EXIT_INPUT,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Monitor(a) => monitor(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn fit(a: FitArgs) -> Result<(), Failure> {
    let data = ingest_csv(
        &a.train,
        &IngestOptions {
            standardize: false,
            jitter_sigma: Some(a.jitter),
            seed: a.seed,
        },
    )?;
    let rows: Vec<&[f64]> = (0..data.len()).map(|i| data.row(i)).collect();
    let probs = uniform_probs(a.k);
    match Precision::from(a.precision) {
        Precision::F64 => QuantTreePartition::<f64>::build(&rows, &probs, a.seed)?.save(&a.out)?,
        Precision::F32 => {
            let rows: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
            QuantTreePartition::<f32>::build(&rows, &probs, a.seed)?.save(&a.out)?
        }
    }
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<(), Failure> {
    let detector = match a.beta {
        Some(beta) => DetectorConfig::updating(a.lambda, beta, a.stop_at),
        None => DetectorConfig::plain(a.lambda),
    };
    let config = CalibrationConfig {
        replicates: a.replicates,
        length: a.length,
        seed: a.seed,
        degree: a.degree,
        precision: a.precision.into(),
        source: match a.source {
            SourceArg::Hybrid => ThresholdSource::Hybrid,
            SourceArg::Polynomial => ThresholdSource::Polynomial,
        },
        ..CalibrationConfig::new(detector, uniform_probs(a.k), a.n, a.arl0)
    };
    calibrate(&config)?.save(&a.out)?;
    Ok(())
}

fn monitor(a: MonitorArgs) -> Result<(), Failure> {
    if !a.table.exists() {
        return Err(Failure {
            code: EXIT_MISSING_TABLE,
            message: format!("threshold table {} not found", a.table.display()),
        });
    }
    let table = ThresholdTable::load(&a.table)?;
    match table.meta().calibration.precision {
        Precision::F64 => monitor_as::<f64>(&table, &a.partition),
        Precision::F32 => monitor_as::<f32>(&table, &a.partition),
    }
}

fn monitor_as<F: Scalar>(table: &ThresholdTable, partition: &Path) -> Result<(), Failure> {
    let partition = QuantTreePartition::<F>::load(partition)?;
    let config = table.meta().calibration.detector;
    let mut detector = QtEwma::new(&partition, &config, table)?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "t,T_t,h_t,flag")?;
    let mut x: Vec<F> = Vec::with_capacity(partition.dim());
    for (line_no, line) in stdin.lock().lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        x.clear();
        let mut numeric = true;
        for (c, field) in line.split(',').enumerate() {
            match field.trim().parse::<f64>() {
                Ok(v) => x.push(F::of(v)),
                Err(_) if line_no == 0 => {
                    numeric = false;
                    break;
                }
                Err(_) => {
                    return Err(Error::Parse {
                        row: line_no + 1,
                        column: c + 1,
                        message: format!("not a number: {:?}", field.trim()),
                    }
                    .into())
                }
            }
        }
        if !numeric {
            continue;
        }
        let step = detector.step(&x)?;
        writeln!(
            out,
            "{},{},{},{}",
            step.t,
            step.statistic.widen(),
            step.threshold,
            u8::from(step.detected)
        )?;
        if step.detected {
            writeln!(out, "DETECTED t*={}", step.t)?;
            break;
        }
    }
    out.flush()?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut spec = StreamSpec::load(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let stream = generate_stream(&spec)?;
    let sink: Box<dyn Write> = match &a.out {
        Some(path) => Box::new(std::fs::File::create(path).map_err(|e| Failure {
            code: EXIT_INPUT,
            message: format!("{}: {e}", path.display()),
        })?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(sink);
    for x in stream {
        let row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let config = ExperimentConfig::load(&a.config)?;
    let report = run_experiment(&config)?;
    report.save(&a.out)?;
    Ok(())
}
