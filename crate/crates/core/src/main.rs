use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use vramsey::error::{Error, Result};
use vramsey::experiment::{ExperimentConfig, FigureName, FigureSpec, Mode, SCHEMA_VERSION};
use vramsey::io::{write_bundle, Manifest};

/// Variational Ramsey interferometry experiments.
///
/// Either `--config` (a configuration or a previous run's manifest) or
/// `--figure` selects what to run. Results are written to `--out` only
/// after the whole run succeeded.
#[derive(Debug, Parser)]
#[command(name = "vramsey", version, about)]
struct Cli {
    /// Experiment configuration JSON, or a manifest.json to regenerate from.
    #[arg(long, value_name = "PATH", conflicts_with = "figure", required_unless_present = "figure")]
    config: Option<PathBuf>,

    /// Figure data bundle to produce.
    #[arg(long, value_name = "NAME")]
    figure: Option<String>,

    /// Overrides the configuration seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Worker threads (defaults to all cores).
    #[arg(long, value_name = "K")]
    threads: Option<usize>,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match (&cli.config, &cli.figure) {
        (Some(path), _) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        (None, Some(name)) => ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            mode: Mode::Figure(FigureSpec::new(name.parse::<FigureName>()?)),
        },
        (None, None) => return Err(Error::Config("either --config or --figure is required".into())),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let config = load(cli)?;
    let start = Instant::now();
    let bundle = config.run()?;
    let manifest = Manifest::new(
        serde_json::to_value(&config)?,
        config.hash()?,
        config.seed,
        start.elapsed().as_secs_f64(),
        &bundle,
    );
    write_bundle(&cli.out, &bundle, &manifest)?;
    println!(
        "{}",
        json!({
            "out": cli.out,
            "mode": config.mode.name(),
            "config_hash": manifest.config_hash,
            "files": bundle.names(),
        })
    );
    Ok(())
}

/// Bad input exits with 2, failures during the computation with 1.
fn exit_status(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Json(_)
        | Error::UnsupportedFigure(_)
        | Error::InvalidAtomNumber(_)
        | Error::InvalidArgument(_)
        | Error::NonFinite(_)
        | Error::NegativeExposure(_)
        | Error::DimensionMismatch { .. }
        | Error::MemoryCap(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "code": e.code(), "message": e.to_string() }));
            ExitCode::from(exit_status(&e))
        }
    }
}
