use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use impact_core::dynamics::{default_models, events_csv, load_scenario, run_scenario, trace_csv, RunOptions};
use impact_core::grid::load_case;
use impact_core::raim::{pipeline_run, summary_text, write_run_dir, PipelineConfig};
use impact_core::screening::{screening_csv, ScreeningConfig, Screener};

/// Environment variable holding the worker-thread count.
const WORKERS_ENV: &str = "IMPACT_WORKERS";

#[derive(Parser)]
#[command(name = "gridimpact", version, about = "Substation-outage impact analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a case file and print its inventory.
    Load { case: PathBuf },
    /// Steady-state screening of all outage combinations up to level k.
    Screen {
        case: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Maximum number of power-flow evaluations.
        #[arg(long)]
        budget: Option<usize>,
        /// Solve supersets of critical combinations instead of inheriting.
        #[arg(long)]
        no_prune: bool,
    },
    /// Time-domain simulation of a switching scenario.
    Simulate {
        case: PathBuf,
        scenario: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long)]
        t_end: Option<f64>,
        /// Write the sampled trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Screening, dynamic confirmation and cross-check in one run.
    Pipeline {
        case: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest number of switching orders simulated exhaustively.
        #[arg(long)]
        perm_cap: Option<u128>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a finished run directory.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

fn configure_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .with_context(|| format!("{WORKERS_ENV}={raw} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring worker pool")?;
    log::debug!("using {n} worker threads");
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_workers()?;
    match Cli::parse().command {
        Command::Load { case } => {
            let s = load_case(&case)?.summarize();
            println!("buses        {}", s.buses);
            println!("branches     {} ({} lines, {} transformers)", s.branches, s.lines, s.transformers);
            println!("generators   {}", s.generators);
            println!("condensers   {}", s.condensers);
            println!("load buses   {}", s.loads);
            println!("substations  {}", s.substations);
        }
        Command::Screen {
            case,
            k,
            budget,
            no_prune,
        } => {
            let case = load_case(&case)?;
            let config = ScreeningConfig {
                budget,
                prune: !no_prune,
                ..ScreeningConfig::default()
            };
            let report = Screener::new(&case, config)?.run(k)?;
            print!("{}", screening_csv(&report));
            eprintln!(
                "{} power flows, coverage {:.3}{}",
                report.evaluations,
                report.coverage,
                if report.budget_exhausted { " (budget exhausted)" } else { "" }
            );
        }
        Command::Simulate {
            case,
            scenario,
            dt,
            t_end,
            trace: trace_path,
        } => {
            if !(dt > 0.0) {
                bail!("--dt must be positive");
            }
            let case = load_case(&case)?;
            let schedule = load_scenario(&scenario)?;
            let options = RunOptions {
                dt,
                t_end,
                ..RunOptions::default()
            };
            let (trace, verdict) = run_scenario(&case, &schedule, &default_models(&case), &options)?;
            print!("{}", events_csv(&trace));
            for island in &verdict.islands {
                println!(
                    "island {}..{} ({} buses, {} generators): {} at {:.3} Hz",
                    island.buses.first().copied().unwrap_or_default(),
                    island.buses.last().copied().unwrap_or_default(),
                    island.buses.len(),
                    island.generators,
                    island.class.as_str(),
                    island.final_frequency_hz
                );
            }
            match verdict.first_violation {
                Some(t) => println!("verdict: {} (first violation at {t:.2} s)", verdict.overall.as_str()),
                None => println!("verdict: {}", verdict.overall.as_str()),
            }
            if let Some(path) = trace_path {
                std::fs::write(&path, trace_csv(&trace))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Pipeline {
            case,
            k,
            seed,
            perm_cap,
            out,
        } => {
            let case = load_case(&case)?;
            let mut config = PipelineConfig {
                k_max: k,
                seed,
                ..PipelineConfig::default()
            };
            if let Some(cap) = perm_cap {
                config.permutation_cap = cap;
            }
            let report = pipeline_run(&case, &config)?;
            write_run_dir(&report, &out)?;
            print!("{}", summary_text(&report));
        }
        Command::Report { run_dir, format } => match format {
            Format::Text => print!("{}", read(&run_dir.join("summary.txt"))?),
            Format::Csv => print!("{}", read(&run_dir.join("matrix.csv"))?),
        },
    }
    Ok(())
}
