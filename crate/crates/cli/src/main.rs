use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use commands::{Options, Output};
use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "kfm", version, about = "Bergman and Kobayashi-Fuks metric computations")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files; tables go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the randomized checks of `verify`.
    #[arg(long, global = true, default_value_t = kfm_core::verify::DEFAULT_SEED)]
    seed: u64,
    /// Evaluate inside the truncation layer instead of refusing.
    #[arg(long, global = true)]
    force_truncation: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel, Bergman and Kobayashi-Fuks metrics at the configured points.
    Metric,
    /// Ricci and holomorphic sectional curvatures.
    Curvature,
    /// Extremal quantities and the identities linking them to the metrics.
    Extremal,
    /// Boundary behaviour along a scaling sequence.
    Asymptotics,
    /// Annulus against a circular segment near a shared boundary point.
    Localize,
    /// Closed geodesic on an annulus.
    Geodesic,
    /// Runs the acceptance criteria.
    Verify,
    /// Prints the resolved configuration.
    Config,
}

fn write_outputs(out: &Output, dir: Option<&Path>, cfg: &RunConfig) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut so = stdout.lock();
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for (name, body) in &out.files {
                std::fs::write(dir.join(name), body)?;
            }
            let resolved = serde_json::to_string_pretty(cfg).expect("config serializes");
            std::fs::write(dir.join("run_config.json"), resolved + "\n")?;
        }
        None => {
            for (_, body) in &out.files {
                so.write_all(body.as_bytes())?;
            }
        }
    }
    for line in &out.summary {
        if dir.is_some() {
            writeln!(so, "{line}")?;
        } else {
            eprintln!("{line}");
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let o = Options { seed: cli.seed, force: cli.force_truncation };
    let out = match cli.command {
        Command::Metric => commands::metric(&cfg, &o)?,
        Command::Curvature => commands::curvature(&cfg, &o)?,
        Command::Extremal => commands::extremal(&cfg, &o)?,
        Command::Asymptotics => commands::asymptotics(&cfg, &o)?,
        Command::Localize => commands::localize(&cfg, &o)?,
        Command::Geodesic => commands::geodesic(&cfg, &o)?,
        Command::Verify => commands::verify(&cfg, &o)?,
        Command::Config => Output {
            files: vec![("run_config.json", serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n")],
            summary: Vec::new(),
            failed: None,
        },
    };
    write_outputs(&out, cli.out.as_deref(), &cfg)?;
    match out.failed {
        Some(msg) => Err(CliError::Verification(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kfm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
