use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use optlearn::harness::{build_world, run_episode, write_fields, write_run, write_summary, ExperimentConfig, Method, WorldInstance};

#[derive(Parser)]
#[command(name = "optlearn", version, about = "Optimal learning control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one seed, or on every configured seed.
    Run {
        /// Experiment configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Single seed; all configured seeds when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// gp, td or fullinfo.
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// Output directory; defaults to the configured `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate final discounted losses into summary.txt.
    Table {
        /// Directory holding run outputs.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Write the value and HJB term fields of a checkpoint.
    Fields {
        /// Directory holding a checkpoint for `step`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Checkpointed step index.
        #[arg(long)]
        step: usize,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: optlearn::Error| e.to_string())
}

fn run(config: PathBuf, seed: Option<u64>, method: Method, out: Option<PathBuf>) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let seeds = match seed {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    let results: Vec<anyhow::Result<()>> = seeds
        .par_iter()
        .map(|&seed| {
            if let WorldInstance::Sampled(w) = build_world(&cfg, seed)? {
                w.dump_csv(&dir.join(format!("world_{seed}.csv")))?;
            }
            let trace = run_episode(&cfg, seed, method)?;
            for w in &trace.warnings {
                eprintln!("warning (seed {seed}): {w}");
            }
            write_run(&trace, &dir)?;
            println!(
                "{} seed {}: {} steps, discounted loss {}",
                method.as_str(),
                seed,
                trace.rows.len(),
                trace.final_disc_loss()
            );
            if let Some(reason) = &trace.aborted {
                bail!("{} seed {seed} aborted: {reason}", method.as_str());
            }
            Ok(())
        })
        .collect();
    let failures: Vec<_> = results.into_iter().filter_map(|r| r.err()).collect();
    for f in &failures {
        eprintln!("error: {f:#}");
    }
    if !failures.is_empty() {
        bail!("{} of {} runs failed", failures.len(), seeds.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, method, out } => run(config, seed, method, out),
        Command::Table { input } => write_summary(&input).map(|t| print!("{}", t.render())).map_err(Into::into),
        Command::Fields { input, step } => write_fields(&input, step)
            .map(|p| println!("wrote {}", p.display()))
            .map_err(Into::into),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
