//! Command-line scenario runner. Reads a TOML scenario file, runs the
//! simulation and writes `<scenario>.csv` plus `report.txt` to the output
//! directory.

mod config;
mod scenarios;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;

pub use config::{Config, FileConfig, GridSpec, Scenario, ScanSpec, SpinDynamicsSpec, SweepSpec, TimeUnit};
pub use scenarios::{convergence_check, run_scenario, ConvergenceRow, ScenarioOutput};

/// Exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 65;
pub const EXIT_NUMERICAL: i32 = 70;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure in {op}: {source}")]
    Numerical {
        op: String,
        #[source]
        source: crate::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical { .. } => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub(crate) fn numerical(op: impl Into<String>) -> impl FnOnce(crate::Error) -> CliError {
        let op = op.into();
        move |source| CliError::Numerical { op, source }
    }
}

/// Simulates shelving-style QND phonon-number measurement scenarios.
#[derive(Debug, Parser)]
#[command(name = "qnd-sim", version, about)]
pub struct Args {
    /// Scenario file (TOML).
    pub config: PathBuf,
    /// Output directory; overrides `output` in the file.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set params.g=0.02`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Re-run with enlarged truncations and report the drift.
    #[arg(long)]
    pub convergence_check: bool,
    /// Worker threads for independent scenario cells.
    #[arg(long)]
    pub threads: Option<usize>,
}

pub const USAGE: &str = "usage: qnd-sim <CONFIG> [--output DIR] [--set KEY=VALUE]... [--convergence-check] [--threads N]

The configuration file must at least name a scenario:

    scenario = \"ideal_estimator\"   # spin_dynamics | steady_jc_scan | ideal_estimator
                                     # | dissipation_sweep | ramped | custom
";

/// Reads and resolves the configuration named by `args`.
pub fn load_config(args: &Args) -> Result<Config, CliError> {
    let text = fs::read_to_string(&args.config).map_err(|source| CliError::Io { path: args.config.clone(), source })?;
    let file = FileConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if file.is_empty() && args.set.is_empty() {
        return Err(CliError::Usage(format!("{} is empty\n\n{USAGE}", args.config.display())));
    }
    let mut merged = file;
    for s in &args.set {
        merged = merged.merge(FileConfig::from_override(s).map_err(CliError::Config)?);
    }
    let mut config = merged.resolve().map_err(CliError::Config)?;
    if let Some(out) = &args.output {
        config.output = out.clone();
    }
    if args.convergence_check {
        config.convergence_check = true;
    }
    Ok(config)
}

extern "C" {
    fn openblas_set_num_threads(n: std::os::raw::c_int);
}

/// Dense kernels run single-threaded so results do not depend on the BLAS
/// thread count; parallelism is over scenario cells.
pub fn configure_threads(threads: Option<usize>) {
    unsafe { openblas_set_num_threads(1) };
    if let Some(n) = threads {
        // A pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Runs a resolved configuration and writes its artifacts. Returns the
/// paths written.
pub fn run(config: &Config) -> Result<Vec<PathBuf>, CliError> {
    let out = run_scenario(config)?;
    let mut report = out.report.clone();
    if config.convergence_check {
        let rows = convergence_check(config, &out)?;
        writeln!(report, "\nconvergence check (pass if relative drift < 1e-3):").unwrap();
        for r in &rows {
            writeln!(report, "  {r}").unwrap();
        }
    }
    fs::create_dir_all(&config.output).map_err(|source| CliError::Io { path: config.output.clone(), source })?;
    let csv = config.output.join(format!("{}.csv", config.scenario));
    let rep = config.output.join("report.txt");
    write(&csv, &out.csv)?;
    write(&rep, &report)?;
    Ok(vec![csv, rep])
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Entry point shared by the binary and tests. Returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    configure_threads(args.threads);
    let result = load_config(&args).and_then(|c| run(&c));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("qnd-sim: {e}");
            e.exit_code()
        }
    }
}
