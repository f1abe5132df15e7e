//! Scenario runner binding the numerical modules into reproducible
//! experiments: `css-lab run <scenario> --config <path> [--out <dir>] [--seed <n>]`.

mod config;
mod report;
mod scenarios;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "css-lab", about = "Equivariant self-dual Chern-Simons-Schrodinger laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV artifacts plus a JSON/markdown summary.
    Run {
        /// One of the named scenarios (see `list`).
        scenario: String,
        /// TOML configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: <config out_dir>/<scenario>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the available scenarios.
    List,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for s in scenarios::SCENARIOS {
                println!("{s}");
            }
            Ok(())
        }
        Command::Run {
            scenario,
            config,
            out,
            seed,
        } => {
            let mut cfg = config::load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir).join(&scenario));
            let summary = scenarios::run_scenario(&scenario, &cfg, &out_dir)?;
            for c in &summary.criteria {
                println!(
                    "[{}] {} — {}: value {:.6e} vs {:.6e} ({})",
                    if c.pass { "pass" } else { "FAIL" },
                    c.id,
                    c.description,
                    c.value,
                    c.threshold,
                    c.sense
                );
            }
            println!(
                "scenario {scenario}: {}",
                if summary.all_pass { "PASS" } else { "FAIL" }
            );
            if summary.all_pass {
                Ok(())
            } else {
                std::process::exit(1);
            }
        }
    }
}
