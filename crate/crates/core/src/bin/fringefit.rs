use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fringefit::cli::{self, Overrides};
use fringefit::config::ExperimentSpec;
use fringefit::Error;

const EXIT_HELP: &str = "\
Exit status:
  0  success
  1  usage, configuration or I/O error
  2  numerical failure (non-finite iterate or vanishing gradient)

Environment:
  FRINGEFIT_THREADS  worker threads for field arithmetic (default: all cores)
  RUST_LOG           log filter, e.g. `info` or `fringefit=debug`";

/// Single-shot interferogram demodulation by mean gradient descent.
#[derive(Parser, Debug)]
#[command(name = "fringefit", version, after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate object, reference and noisy hologram.
    Simulate(Common),
    /// Recover the object from the noisy hologram.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Iteration budget, overriding `solver.max_iters`.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Fourier-transform-method baseline.
    Ftm(Common),
    /// Tabulate a results file by experiment.
    Report {
        /// Results CSV written by `solve` and `ftm`.
        results: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment file.
    #[arg(long)]
    spec: PathBuf,
    /// Seed for both the photon noise and the solver's initial guess.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(common: &Common, iters: Option<usize>) -> Result<ExperimentSpec, Error> {
    if !common.spec.is_file() {
        return Err(Error::Config { path: common.spec.clone(), line: 0, msg: "no such experiment file".into() });
    }
    let mut spec = ExperimentSpec::load(&common.spec)?;
    Overrides { seed: common.seed, out: common.out.clone(), iters }.apply(&mut spec);
    Ok(spec)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(common) => {
            let spec = load(&common, None)?;
            cli::cmd_simulate(&spec)?;
            println!("wrote simulation of {} to {}", spec.name, spec.output_dir.display());
        }
        Command::Solve { common, iters } => {
            let spec = load(&common, iters)?;
            let summary = cli::cmd_solve(&spec)?;
            print!("{}", summary.report.to_kv());
        }
        Command::Ftm(common) => {
            let spec = load(&common, None)?;
            let summary = cli::cmd_ftm(&spec)?;
            print!("{}", summary.report.to_kv());
            if let Some(line) = summary.comparison {
                println!("{line}");
            }
        }
        Command::Report { results } => print!("{}", cli::cmd_report(&results)?),
    }
    Ok(())
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("FRINGEFIT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::param("FRINGEFIT_THREADS", format!("`{value}` is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::param("FRINGEFIT_THREADS", e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) | Error::ZeroNorm | Error::NonFinite { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
