use amlmc::config::parse_mode;
use amlmc::{run, Pool, RunConfig, RunError};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "amlmc", version, about = "Adaptive multilevel Monte Carlo for random-dopant device simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// `key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed of the dopant streams
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Refinement mode used by `solve` and `mlmc`
    #[arg(long, global = true, value_parser = ["adaptive", "uniform"])]
    mode: Option<String>,
    #[arg(long, global = true)]
    dump_mesh: bool,
    #[arg(long, global = true)]
    dump_solution: bool,
    #[arg(long, global = true)]
    dump_indicators: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one dopant sample
    Solve,
    /// Build adaptive and uniform hierarchies and fit their rates
    AdaptStudy,
    /// Run MLMC for every tolerance in `epsilons`
    Mlmc,
    /// Refit rates from the manifests of an earlier adapt-study
    Rates,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.hierarchy.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(m) = cli.mode.as_deref().and_then(parse_mode) {
        cfg.hierarchy.mode = m;
    }
    cfg.dump_mesh |= cli.dump_mesh;
    cfg.dump_solution |= cli.dump_solution;
    cfg.dump_indicators |= cli.dump_indicators;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    match cli.command {
        Command::Solve => {
            let r = run::solve(&cfg);
            match &r {
                Ok(rep) => {
                    run::write_solve(&cfg, rep)?;
                    print!("{}", rep.log);
                }
                Err(RunError::NotConverged { trace, .. }) => {
                    for (k, u) in trace.iter().enumerate() {
                        eprintln!("sweep {} update {u:e}", k + 1);
                    }
                }
                Err(_) => {}
            }
            r?;
        }
        Command::AdaptStudy => {
            let pool = Pool::new(cfg.threads).context("building the thread pool")?;
            let study = run::adapt_study(&cfg, &pool)?;
            run::write_study(&cfg, &study)?;
            print!("{}", std::fs::read_to_string(cfg.out.join("rates.txt"))?);
        }
        Command::Mlmc => {
            let pool = Pool::new(cfg.threads).context("building the thread pool")?;
            let study = run::mlmc(&cfg, &pool)?;
            run::write_mlmc(&cfg, &study)?;
            print!("{}", std::fs::read_to_string(cfg.out.join("samples.csv"))?);
            let failed = study.failures();
            if failed > 0 {
                return Err(RunError::Tolerances(failed).into());
            }
        }
        Command::Rates => print!("{}", run::rates(&cfg.out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
