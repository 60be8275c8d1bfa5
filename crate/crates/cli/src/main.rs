use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use deepritz::driver::studies::{decade_ratios, LAMBDA_SWEEP_LEVEL};
use deepritz::driver::{
    estimate_checkpoint, fem_verify, lambda_sweep, mc_estimator_rate, mc_loss_rate, reference, train_with, McStudy,
    Problem, RunConfig,
};
use deepritz::dwr::{EstimatorReport, UNDEFINED};
use deepritz::network::Network;

#[derive(Parser)]
#[command(name = "deepritz", version, about = "Deep Ritz training with goal-oriented error certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a config file and write log.csv, checkpoint.dat, summary.txt.
    Train {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Do not print checkpoint rows.
        #[arg(long)]
        quiet: bool,
    },
    /// Reference goal value of a problem.
    Reference { problem: Problem },
    /// Finite-element convergence table; levels as `3-6` or `3,4,5`.
    FemVerify { problem: Problem, levels: String },
    /// Distance between penalized and Dirichlet FE solutions per penalty.
    LambdaSweep {
        #[arg(long, default_value = "LaplaceSquareManufactured")]
        problem: Problem,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000")]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = LAMBDA_SWEEP_LEVEL)]
        level: usize,
    },
    /// Monte-Carlo error of the loss (or, with --estimator, of the DWR estimator).
    McRate {
        #[arg(long, default_value = "LaplaceLShape")]
        problem: Problem,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long)]
        estimator: bool,
        /// Adjoint mesh level for --estimator.
        #[arg(long, default_value_t = 2)]
        adjoint_level: usize,
    },
    /// Certify a saved network against a config.
    Estimate {
        checkpoint: PathBuf,
        config: PathBuf,
        /// Epoch recorded in the printed report.
        #[arg(long, default_value_t = 0)]
        epoch: usize,
    },
}

fn parse_levels(s: &str) -> Result<Vec<usize>> {
    let levels: Vec<usize> = if let Some((a, b)) = s.split_once('-') {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse()).collect::<std::result::Result<_, _>>()?
    };
    if levels.is_empty() {
        bail!("no levels in `{s}`");
    }
    Ok(levels)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |v| format!("{v:?}"))
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))
}

fn print_report(r: &EstimatorReport) {
    println!("epoch = {}", r.epoch);
    println!("loss = {:?}", r.loss);
    println!("J_net = {:?}", r.j_net);
    println!("J_ref = {}", opt(r.j_ref));
    println!("true_error = {}", opt(r.true_error));
    println!("eta = {:?}", r.eta);
    println!("eff_eq = {}", opt(r.eff_eq));
    println!("eff_table = {}", opt(r.eff_table));
}

fn print_mc(study: &McStudy) {
    println!("reference = {:?}", study.reference);
    println!("n,mean_abs_error");
    for r in &study.rows {
        println!("{},{:?}", r.n, r.mean_abs_error);
    }
    println!("slope = {}", opt(study.slope));
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, output, quiet } => {
            let mut cfg = load_config(&config)?;
            if let Some(dir) = output {
                cfg.output_dir = dir;
            }
            if !quiet {
                println!("{},wall_ms", EstimatorReport::CSV_HEADER);
            }
            let log = train_with(&cfg, |row| {
                if !quiet {
                    println!("{},{}", row.report.csv_row(), row.wall_ms);
                }
            })?;
            log.write_outputs(&cfg.output_dir)?;
            let mut summary = Vec::new();
            log.write_summary(&mut summary)?;
            print!("{}", String::from_utf8_lossy(&summary));
        }
        Command::Reference { problem } => {
            let r = reference(problem)?;
            for (level, j) in &r.levels {
                println!("level {level}: J = {j:?}");
            }
            println!("J_ref = {:?}", r.value);
            println!("band = {:?}", r.band);
        }
        Command::FemVerify { problem, levels } => {
            let rows = fem_verify(problem, &parse_levels(&levels)?)?;
            println!("level,h,dofs,l2,h1,rate_l2,rate_h1,J,iterations");
            for r in rows {
                println!(
                    "{},{:?},{},{},{},{},{},{:?},{}",
                    r.level,
                    r.h,
                    r.dofs,
                    opt(r.l2),
                    opt(r.h1),
                    opt(r.rate_l2),
                    opt(r.rate_h1),
                    r.j,
                    r.iterations
                );
            }
        }
        Command::LambdaSweep { problem, lambdas, level } => {
            if lambdas.iter().any(|&l| !(l > 0.0)) || lambdas.windows(2).any(|w| w[1] <= w[0]) {
                bail!("penalties must be positive and increasing");
            }
            let rows = lambda_sweep(problem, &lambdas, level)?;
            let ratios = decade_ratios(&rows);
            println!("lambda,h1_distance,ratio");
            for (i, r) in rows.iter().enumerate() {
                let ratio = if i == 0 { UNDEFINED.to_string() } else { format!("{:?}", ratios[i - 1]) };
                println!("{:?},{:?},{}", r.lambda, r.h1_distance, ratio);
            }
            println!("max_ratio = {}", opt(ratios.iter().copied().reduce(f64::max)));
        }
        Command::McRate { problem, n, seeds, estimator, adjoint_level } => {
            let study = if estimator {
                mc_estimator_rate(problem, &n, seeds, adjoint_level)?
            } else {
                mc_loss_rate(problem, &n, seeds)?
            };
            print_mc(&study);
        }
        Command::Estimate { checkpoint, config, epoch } => {
            let cfg = load_config(&config)?;
            let text = fs::read(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let net = Network::read_checkpoint(&text[..])?;
            print_report(&estimate_checkpoint(&net, &cfg, epoch)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
