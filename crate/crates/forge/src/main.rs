use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use forge::experiment::{gen_data, parse_layer_range, report, run, sweep_freeze};
use forge::{ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "forge", version, about = "Pivot-based low-resource translation experiments")]
struct Cli {
    /// Suppress per-stage progress on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpora and write them under <output_dir>/data.
    GenData {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run recipes and write results.txt / results.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated recipe names; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        recipe: Vec<String>,
    },
    /// Run one recipe for each layer-wise freeze depth in a range.
    SweepFreeze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "triangular")]
        recipe: String,
        /// Inclusive range such as 0..6.
        #[arg(long = "L", default_value = "0..6")]
        layers: String,
    },
    /// Recompute significance of a finished run against another baseline.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        baseline: String,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = gen_data(&cfg)?;
            println!("corpora written to {}", dir.display());
        }
        Command::Run { config, recipe } => {
            let cfg = ExperimentConfig::load(&config)?;
            let t = run(&cfg, &recipe, cli.quiet)?;
            print!("{}", t.to_text());
        }
        Command::SweepFreeze { config, recipe, layers } => {
            let cfg = ExperimentConfig::load(&config)?;
            let range = parse_layer_range(&layers)?;
            let rows = sweep_freeze(&cfg, &recipe, range, cli.quiet)?;
            let cell = |v: Option<f64>| v.map(|b| format!("{b:.2}")).unwrap_or_else(|| "-".into());
            println!("L\tX→Z dev\tZ→Y dev\tX→Y test");
            for r in rows {
                println!("{}\t{}\t{}\t{:.2}", r.layers, cell(r.xz_dev), cell(r.zy_dev), r.xy_test);
            }
        }
        Command::Report { dir, baseline } => {
            let t = report(&dir, &baseline)?;
            print!("{}", t.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
