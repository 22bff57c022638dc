use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eqdesign::design::{design, DesignJob, EqualizerFilter};
use eqdesign::eval::evaluate;
use eqdesign::scenario::{load_scenario, save_scenario, synth_scenario, ForwardPath, SynthSpec};
use eqdesign::sweep::{rows_to_csv, run_sweep, SweepGrid, SweepMode};
use eqdesign::{Error, Result};

/// Equalization filter design for acoustically transparent hearing devices.
#[derive(Parser)]
#[command(name = "eqdesign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario.
    Synth {
        /// Synthesis parameters (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Design an equalization filter.
    Design {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a filter; writes `<out>.csv` and `<out>.json`.
    Eval {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        filter: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter sweep and write a CSV table.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "resubstitution")]
        mode: String,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, seed, out } => {
            let spec = match config {
                Some(p) => {
                    serde_json::from_str::<SynthSpec>(&read(&p)?).map_err(|e| Error::Schema {
                        path: p.display().to_string(),
                        message: e.to_string(),
                    })?
                }
                None => SynthSpec::default(),
            };
            save_scenario(&synth_scenario(&spec, seed)?, out)
        }
        Command::Design {
            scenario,
            config,
            out,
        } => {
            let scenario = load_scenario(&scenario)?;
            let job = DesignJob::from_json(&read(&config)?)?;
            let g = ForwardPath::from_params(job.forward_path, scenario.sample_rate_hz());
            design(&scenario, &g, &job.config, job.design_set)?.save(out)
        }
        Command::Eval {
            scenario,
            filter,
            out,
        } => {
            let scenario = load_scenario(&scenario)?;
            let filter = EqualizerFilter::load(&filter)?;
            let params = filter.forward_path().ok_or_else(|| Error::Schema {
                path: "config".into(),
                message: "filter has no forward path".into(),
            })?;
            let g = ForwardPath::from_params(params, scenario.sample_rate_hz());
            evaluate(&scenario, &g, &filter)?.write(out)
        }
        Command::Sweep {
            scenario,
            grid,
            out,
            mode,
        } => {
            let mode: SweepMode = mode.parse()?;
            let scenario = load_scenario(&scenario)?;
            let grid = SweepGrid::from_json(&read(&grid)?)?;
            let rows = match thread_cap()? {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidInput(e.to_string()))?
                    .install(|| run_sweep(&scenario, &grid, mode))?,
                None => run_sweep(&scenario, &grid, mode)?,
            };
            std::fs::write(out, rows_to_csv(&rows))?;
            Ok(())
        }
    }
}

/// `EQDESIGN_THREADS`, when set, caps the sweep's worker threads.
fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("EQDESIGN_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidInput(format!(
                "EQDESIGN_THREADS must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
