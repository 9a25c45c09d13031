use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use floodsense::{CliError, DetectOptions, ScenarioSource};
use floodsense_core::RegionGrid;

#[derive(Parser)]
#[command(
    name = "floodsense",
    version,
    about = "Crowdsourced post-flood reporting with malicious-user screening"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a seeded simulation and write users.csv and summary.json.
    Simulate(SimulateArgs),
    /// Sweep population mixes and option counts; writes a metrics CSV.
    Sweep {
        /// JSON file with honest_fractions, option_counts, cohort_sizes, seeds.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline detection over an event log or a file of reports.
    Detect {
        #[arg(long)]
        input: PathBuf,
        /// Questionnaire for report files; event logs carry their own.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// "latmin,latmax,lonmin,lonmax,rows,cols"; required for report files.
        #[arg(long)]
        grid: Option<RegionGrid>,
        #[arg(long, default_value_t = 3600)]
        period_seconds: i64,
        #[arg(long, default_value_t = 0)]
        epoch_origin: i64,
        /// Repeat detection without flagged users until nothing changes.
        #[arg(long)]
        iterative: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the aggregate of one region from an event log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        region: usize,
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
        /// `.csv` selects CSV output, anything else JSON.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "source")]
struct SimulateSource {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_parser = ["table1"])]
    preset: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: SimulateSource,
    /// Overrides the scenario's seed; the preset defaults to 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Users per behaviour type for the preset.
    #[arg(long, default_value_t = floodsense_core::sim::TABLE1_COHORT)]
    cohort_size: u32,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve { config } => floodsense::serve(&config),
        Command::Simulate(args) => {
            let source = match &args.source.scenario {
                Some(p) => ScenarioSource::File(p),
                None => ScenarioSource::Table1 {
                    cohort_size: args.cohort_size,
                },
            };
            floodsense::simulate(source, args.seed, &args.out)
        }
        Command::Sweep { config, out } => floodsense::run_sweep(&config, &out),
        Command::Detect {
            input,
            schema,
            grid,
            period_seconds,
            epoch_origin,
            iterative,
            out,
        } => floodsense::detect(&DetectOptions {
            input,
            schema,
            grid,
            period_seconds,
            epoch_origin,
            iterative,
            out,
        })
        .map(|_| ()),
        Command::Report {
            log,
            region,
            from,
            to,
            out,
        } => floodsense::report(&log, region, from, to, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("floodsense: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
