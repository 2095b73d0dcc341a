use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use lindkraus_cli::{parse_config, run, CliError, CliResult, Mode, RunOptions};

/// CPTP integrators for the Lindblad equation.
#[derive(Debug, Parser)]
#[command(name = "lindkraus", version)]
struct Args {
    /// simulate, converge, kraus-verify or choi-probe
    #[arg(value_parser = parse_mode)]
    mode: Mode,
    /// Flat key = value run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output path; overrides the config's `output` key. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip trace renormalization after each step.
    #[arg(long)]
    no_renormalize: bool,
    /// Accept a tableau with negative coefficients in dense runs.
    #[arg(long)]
    force_tableau: bool,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("LK_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("LK_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))
}

fn execute(args: &Args) -> CliResult<()> {
    configure_threads()?;
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read '{}': {e}", args.config.display()))
    })?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let mut cfg = parse_config(&text, args.mode, base)?;
    if args.out.is_some() {
        cfg.output = args.out.clone();
    }
    let opts = RunOptions {
        renormalize: !args.no_renormalize,
        force_tableau: args.force_tableau,
    };
    let stderr = io::stderr();
    let mut log = stderr.lock();
    match &cfg.output {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            run(&cfg, opts, &mut file, &mut log)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            run(&cfg, opts, &mut out, &mut log)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lindkraus: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
