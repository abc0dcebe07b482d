//! `heisenkern <command> --config <file> [--out <dir>]`
//!
//! Exit status: 0 when every asserted check passes, 2 when a check fails,
//! 1 on usage or configuration errors.

mod commands;
mod config;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use config::{Command, Config};
use output::{Manifest, Outputs};

#[derive(Parser, Debug)]
#[command(name = "heisenkern", version, about = "Heat kernels, Brownian motion and log-Sobolev checks on Heisenberg groups")]
struct Cli {
    command: Command,
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn threads() -> Result<usize, String> {
    match std::env::var("HEISENKERN_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("HEISENKERN_THREADS must be a positive integer, got {v:?}")),
        },
        Err(_) => Ok(0),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Errors returned here happen before any output exists and exit with 1.
fn run(cli: &Cli) -> Result<u8, String> {
    let start = Instant::now();
    let workers = threads()?;
    if workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(workers).build_global().map_err(|e| e.to_string())?;
    }
    let (cfg, base) = Config::load(&cli.config).map_err(|e| e.to_string())?;
    if let Some(c) = &cfg.command {
        if c != cli.command.name() {
            return Err(format!("command: config says {c:?} but {:?} was requested", cli.command.name()));
        }
    }
    cfg.validate(cli.command).map_err(|e| e.to_string())?;
    let dir = cli.out.clone().or_else(|| cfg.out.as_ref().map(|o| base.join(o))).unwrap_or_else(|| PathBuf::from("out"));
    let mut out = Outputs::new(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    log::info!("running {} into {}", cli.command.name(), dir.display());

    let result = commands::run(cli.command, &cfg, &base, &mut out);
    let (status, code, error) = match &result {
        Ok(true) => ("ok", 0u8, None),
        Ok(false) => ("check_failed", 2, None),
        Err(e) => ("failed", e.exit_code() as u8, Some(e.to_string())),
    };
    let files = out.files().to_vec();
    let manifest = Manifest {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        seed: cfg.seed,
        outputs: &files,
        status,
        failed: code != 0,
        error: error.clone(),
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        finished_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    out.json("manifest.json", &manifest).map_err(|e| format!("cannot write manifest: {e}"))?;
    match (&result, error) {
        (Err(_), Some(msg)) => eprintln!("error: {msg}"),
        (Ok(false), _) => eprintln!("{}: a check failed; see {}", cli.command.name(), dir.join("manifest.json").display()),
        _ => {}
    }
    Ok(code)
}
