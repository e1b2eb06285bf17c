//! The `wdkg` command line: synthesize, train, evaluate, distil and report.

mod commands;
mod config;
mod error;
mod plot;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::{MaskOverride, RunLayout};
use config::{RunConfig, SEED_ENV};
use error::{require, CliError};

#[derive(Parser)]
#[command(name = "wdkg", version, about = "Wireless-data knowledge graph pipeline")]
struct Cli {
    /// Run configuration (`section.key = value` lines)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic KG (kg.json, telemetry.csv, truth.json)
    Synth {
        /// Overrides synth.seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train the embedding network on a masked KG and write a checkpoint
    Train {
        #[arg(long, value_name = "DIR")]
        kg: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Score held-out links against sampled negatives
    Eval {
        #[arg(long, value_name = "DIR")]
        kg: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        /// Share of edges held out (defaults to the training mask)
        #[arg(long)]
        mask: Option<f64>,
        /// Negatives per held-out edge
        #[arg(long)]
        neg: Option<usize>,
        /// Mask and negative-sampling seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Rank features by impact on a KPI and select a minimal predictive set
    Select {
        #[arg(long, value_name = "DIR")]
        kg: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        /// KPI node name (defaults to select.kpi)
        #[arg(long)]
        kpi: Option<String>,
        /// R² threshold (defaults to select.fit)
        #[arg(long)]
        fit: Option<f64>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Consolidate a run directory into summary.json, curves.csv and plots
    Report {
        /// Run directory (defaults to run.out)
        run_dir: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration
    Config {
        /// Ignore --config and the environment; print built-in defaults
        #[arg(long)]
        defaults: bool,
    },
}

fn keys_help() -> String {
    let mut s = format!("Configuration keys and defaults ({SEED_ENV} overrides run.seed):\n");
    for (k, v) in RunConfig::default().entries() {
        s.push_str(&format!("  {k} = {v}\n"));
    }
    s
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    let mut config = match path {
        Some(p) => {
            require(p)?;
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            RunConfig::parse(&text, &p.display().to_string())?
        }
        None => RunConfig::default(),
    };
    if let Ok(raw) = std::env::var(SEED_ENV) {
        let seed = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Invalid(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        config.run.seed = Some(seed);
    }
    config.apply_seed();
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Config { defaults: true } = cli.command {
        print!("{}", RunConfig::default().to_text());
        return Ok(());
    }
    let mut config = load_config(cli.config.as_ref())?;
    let layout = RunLayout::new(&config.run.out);
    match cli.command {
        Command::Config { .. } => print!("{}", config.to_text()),
        Command::Synth { seed, out } => {
            if let Some(seed) = seed {
                config.synth.seed = seed;
            }
            commands::synth(&config, &out.unwrap_or_else(|| layout.kg()))?;
        }
        Command::Train { kg, out } => {
            commands::train(
                &config,
                &kg.unwrap_or_else(|| layout.kg()),
                &out.unwrap_or_else(|| layout.model()),
            )?;
        }
        Command::Eval {
            kg,
            model,
            mask,
            neg,
            seed,
            out,
        } => {
            commands::eval(
                &config,
                &kg.unwrap_or_else(|| layout.kg()),
                &model.unwrap_or_else(|| layout.model()),
                MaskOverride { ratio: mask, neg, seed },
                &out.unwrap_or_else(|| layout.eval()),
            )?;
        }
        Command::Select {
            kg,
            model,
            kpi,
            fit,
            out,
        } => {
            let kpi = kpi.unwrap_or_else(|| config.select.kpi.clone());
            commands::select(
                &config,
                &kg.unwrap_or_else(|| layout.kg()),
                &model.unwrap_or_else(|| layout.model()),
                &kpi,
                fit.unwrap_or(config.select.fit),
                &out.unwrap_or_else(|| layout.select()),
            )?;
        }
        Command::Report { run_dir, out } => {
            let layout = run_dir.map(RunLayout::new).unwrap_or(layout);
            let out = out.unwrap_or_else(|| layout.report());
            commands::report(&layout, &out)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command, printing errors to
/// stderr. Exit codes: 0 success or help, 1 invalid input or missing artifact,
/// 2 runtime failure.
pub fn execute<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().after_help(keys_help()).try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
