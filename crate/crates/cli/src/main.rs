use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpo_core::harness::{self, ExperimentConfig, DEFAULT_P_GRID, LEARNING_RATE_GRID};
use mpo_core::{Error, Result};

/// Mirror policy optimization experiments on tabular MDPs.
///
/// Exit codes: 0 success, 1 invalid input, 2 capacity or oracle guard, 3 I/O.
#[derive(Parser, Debug)]
#[command(name = "mpo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one algorithm over every seed and write per-seed and aggregate CSVs.
    Run {
        #[command(flatten)]
        common: Common,
        /// Run every step size of the learning-rate grid and report the best.
        #[arg(long)]
        grid: bool,
    },
    /// Rerun the configured algorithm with the p-norm mirror map for each p.
    SweepP {
        #[command(flatten)]
        common: Common,
        /// Comma-separated exponents (default 1.1,...,1.9,2,3,4,5).
        #[arg(long, value_delimiter = ',')]
        p_grid: Option<Vec<f64>>,
    },
    /// Run every algorithm in the config's `algo` list on equal sample budgets.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Dump exact return, gradients and constants as JSON.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Added to every seed in the config.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Output directory (`oracle`: output file) overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?.with_seed_offset(self.seed_offset)?;
        if let Some(out) = &self.out {
            config = config.with_output_dir(out);
        }
        Ok(config)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, grid: false } => {
            let config = common.load()?;
            let res = harness::run_experiment(&config)?;
            for (rec, j) in res.records.iter().zip(&res.final_exact_j) {
                println!(
                    "seed {:>6}  trajectories {:>8}  final exact J {:>12.6}  output {}",
                    rec.seed, rec.trajectories_consumed, j, rec.output_rule
                );
            }
            println!("mean final exact J {:.6}", res.final_mean());
            println!("wrote {}", config.output.dir.display());
        }
        Command::Run { common, grid: true } => {
            let config = common.load()?;
            let res = harness::learning_rate_grid(&config, &LEARNING_RATE_GRID)?;
            print!("{}", res.table("alpha"));
            println!("wrote {}", config.output.dir.join("grid.csv").display());
        }
        Command::SweepP { common, p_grid } => {
            let config = common.load()?;
            let grid = p_grid.unwrap_or_else(|| DEFAULT_P_GRID.to_vec());
            let res = harness::sweep_p(&config, &grid)?;
            print!("{}", res.table("p"));
            println!("wrote {}", config.output.dir.join("sweep_p.csv").display());
        }
        Command::Compare { common } => {
            let config = common.load()?;
            let cmp = harness::compare(&config)?;
            for (name, e) in cmp.names.iter().zip(&cmp.experiments) {
                println!("{name:>10}  mean final exact J {:.6}", e.final_mean());
            }
            println!("wrote {}", config.output.dir.join("compare.csv").display());
        }
        Command::Oracle { common } => {
            let config = ExperimentConfig::load(&common.config)?.with_seed_offset(common.seed_offset)?;
            let report = harness::oracle_report(&config)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            match &common.out {
                Some(path) => fs::write(path, text).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
