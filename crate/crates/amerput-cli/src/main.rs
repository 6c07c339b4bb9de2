use amerput_cli::commands;
use amerput_cli::{CliError, CliResult, ModelKind, Overrides, RunConfig};
use clap::{Parser, Subcommand};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "amerput", version, about = "American put pricing with closed-form density expansions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelKind>,
    /// Expansion order m.
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Number of boundary time steps N.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Worker threads for table1 and order-sweep.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Price the configured contract.
    Price,
    /// Write the exercise boundary as CSV.
    Boundary,
    /// Reproduce the 27-row GBM benchmark table.
    Table1,
    /// Dump the transition density and report its accuracy.
    DensityCheck,
    /// Price a strike sweep at each expansion order.
    OrderSweep,
}

fn run(cli: &Cli) -> CliResult<()> {
    let overrides = Overrides {
        model: cli.model,
        order: cli.order,
        steps: cli.steps,
        workers: cli.workers,
        seed: cli.seed,
    };
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path, &overrides)?,
        None => RunConfig::from_overrides(&overrides)?,
    };
    log::debug!("resolved config:\n{}", cfg.to_json());

    // Open the destination first so an unwritable path fails before any work.
    let mut out: Box<dyn Write> = match &cli.out {
        Some(path) => {
            let file = File::create(path).map_err(|source| CliError::Output { path: path.clone(), source })?;
            Box::new(BufWriter::new(file))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let result = match cli.command {
        Command::Price => commands::run_price(&cfg, &mut out).map(drop),
        Command::Boundary => commands::run_boundary(&cfg, &mut out).map(drop),
        Command::Table1 => commands::run_table1(&cfg, &mut out).map(drop),
        Command::DensityCheck => commands::run_density_check(&cfg, &mut out).map(drop),
        Command::OrderSweep => commands::run_order_sweep(&cfg, &mut out).map(drop),
    };
    let flushed = out.flush();
    result?;
    flushed.map_err(|source| CliError::Output { path: cli.out.clone().unwrap_or_else(|| "<stdout>".into()), source })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("amerput: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
