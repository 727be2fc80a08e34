mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sonfis::dynamics::{run_sonfis, run_sorst_as, RunReport, System};
use sonfis::sweep::{profile_from_rows, read_sweep_csv, run_sweep, Axis};

/// Process-level failure classes, one exit status each.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<sonfis::Error> for Failure {
    fn from(e: sonfis::Error) -> Self {
        match e {
            sonfis::Error::Io { .. } => Failure::Io(e.to_string()),
            sonfis::Error::Csv(ref c) if c.is_io_error() => Failure::Io(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "sonfis", version, about = "Granulation loops with neuron-growth feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic surrogate dataset as CSV.
    GenData {
        #[arg(long, default_value_t = 693)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the SOM + neuro-fuzzy loop.
    RunSonfis {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the SOM + rough-set loop with adaptive scaling.
    RunSorst {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute a transition profile from a sweep CSV.
    Report {
        #[arg(long)]
        sweep: PathBuf,
        /// alpha, beta, gamma or extra (n_rules / bins).
        #[arg(long, default_value = "alpha")]
        axis: String,
        /// Output JSON path; `-` writes to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { n, seed, noise, out } => {
            if n == 0 {
                return Err(Failure::Config("n: must be at least 1".into()));
            }
            if !(noise.is_finite() && noise >= 0.0) {
                return Err(Failure::Config("noise: must be finite and non-negative".into()));
            }
            let ds = sonfis::dataset::gen_synthetic(n, noise, seed)?;
            write(&out, &ds.to_csv_string()?)
        }
        Command::RunSonfis { config } => {
            let cfg = config::load_config(&config)?;
            let (train, test) = cfg.datasets()?;
            prepare_dir(&cfg.output_dir)?;
            let run = run_sonfis(&train, &test, &cfg.loop_config(), &cfg.noise())?;
            let csv = run.trajectory.to_csv_string()?;
            let report = RunReport::sonfis(run, cfg.burn_in, &cfg.thresholds)?;
            write(&cfg.output_dir.join("sonfis_trajectory.csv"), &csv)?;
            write(&cfg.output_dir.join("sonfis_report.json"), &report.to_json()?)
        }
        Command::RunSorst { config } => {
            let cfg = config::load_config(&config)?;
            let (train, test) = cfg.datasets()?;
            prepare_dir(&cfg.output_dir)?;
            let run = run_sorst_as(&train, &test, &cfg.loop_config(), &cfg.noise(), &cfg.bins)?;
            let csv = run.trajectory.to_csv_string()?;
            let report = RunReport::sorst(run, cfg.burn_in, &cfg.thresholds)?;
            write(&cfg.output_dir.join("sorst_trajectory.csv"), &csv)?;
            write(&cfg.output_dir.join("sorst_report.json"), &report.to_json()?)
        }
        Command::Sweep { config } => {
            let cfg = config::load_config(&config)?;
            let spec = cfg.sweep_spec();
            spec.validate().map_err(|e| Failure::Config(format!("sweep: {e}")))?;
            let (train, test) = cfg.datasets()?;
            prepare_dir(&cfg.output_dir)?;
            let result = run_sweep(&spec, &train, &test)?;
            let stem = match spec.system {
                System::Sonfis => "sweep_sonfis",
                System::Sorst => "sweep_sorst",
            };
            write(&cfg.output_dir.join(format!("{stem}.csv")), &result.to_csv_string()?)?;
            if spec.keep_trajectories {
                write(
                    &cfg.output_dir.join(format!("{stem}_trajectories.json")),
                    &result.trajectories_json()?,
                )?;
            }
            Ok(())
        }
        Command::Report { sweep, axis, out } => {
            let axis: Axis = axis
                .parse()
                .map_err(|e: sonfis::Error| Failure::Config(format!("axis: {e}")))?;
            let rows = read_sweep_csv(&sweep)?;
            let profile = profile_from_rows(&rows, axis);
            let json = serde_json::to_string_pretty(&profile)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            let out = out.unwrap_or_else(|| {
                let stem = sweep.file_stem().unwrap_or_default().to_string_lossy();
                sweep.with_file_name(format!("{stem}_profile.json"))
            });
            if out.as_os_str() == "-" {
                use std::io::Write;
                writeln!(std::io::stdout(), "{json}")
                    .map_err(|e| Failure::Io(format!("stdout: {e}")))
            } else {
                write(&out, &json)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not failures.
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
