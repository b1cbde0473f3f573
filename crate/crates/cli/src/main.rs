use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sheq_cli::sample_path::{sample_path, SamplePathSpec};
use sheq_cli::selftest::selftest;
use sheq_cli::{run_study, write_csv, CliError, StudyConfig};

/// Error studies for the stochastic heat equation on (0, 1).
#[derive(Debug, Parser)]
#[command(name = "sheq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a convergence study and write CSV.
    Study {
        /// `key = value` file; omitted keys take the study defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo samples per level (0 disables MC).
        #[arg(long)]
        samples: Option<usize>,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override one config key, e.g. `--set dx_levels=3,4,5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Simulate one CN finite element trajectory.
    SamplePath {
        /// Time cells of the noise grid.
        #[arg(long, default_value_t = 64, conflicts_with = "noise_in")]
        n_star: usize,
        /// Space cells of the noise grid.
        #[arg(long, default_value_t = 64, conflicts_with = "noise_in")]
        j_star: usize,
        #[arg(long, default_value_t = 1.0, conflicts_with = "noise_in")]
        horizon: f64,
        /// Time steps M.
        #[arg(long, default_value_t = 64)]
        steps: usize,
        /// Mesh intervals J_h.
        #[arg(long, default_value_t = 32)]
        intervals: usize,
        #[arg(long, default_value_t = 0, conflicts_with = "noise_in")]
        seed: u64,
        /// Read the noise grid from a dump instead of sampling it.
        #[arg(long)]
        noise_in: Option<PathBuf>,
        /// Dump the noise grid used.
        #[arg(long)]
        noise_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quick oracle checks; exits 2 if any fails.
    Selftest,
}

fn with_output(
    out: Option<&PathBuf>,
    f: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let file =
                File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Study {
            config,
            seed,
            samples,
            out,
            mut set,
        } => {
            let text = match &config {
                Some(path) => fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
                None => String::new(),
            };
            if let Some(s) = seed {
                set.push(format!("seed={s}"));
            }
            if let Some(n) = samples {
                set.push(format!("samples={n}"));
            }
            let cfg = StudyConfig::parse(&text, &set)?;
            let report = run_study(&cfg)?;
            with_output(out.as_ref().or(cfg.out.as_ref()), |w| write_csv(&report, w))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SamplePath {
            n_star,
            j_star,
            horizon,
            steps,
            intervals,
            seed,
            noise_in,
            noise_out,
            out,
        } => {
            let spec = SamplePathSpec {
                n_star,
                j_star,
                horizon,
                steps,
                intervals,
                seed,
                noise_in,
                noise_out,
            };
            with_output(out.as_ref(), |w| sample_path(&spec, w))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let ok = selftest(io::stdout().lock())?;
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("sheq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
