//! Command-line front end for the `svrpo` experiment harness.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use svrpo::harness::{run_experiment, ExperimentSummary};
use svrpo::{Error, ExperimentConfig};

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "svrpo", version, about = "Stochastic variance-reduced policy optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one or more algorithms over a set of seeds.
    Train(TrainArgs),
}

#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub inner: Option<String>,
    #[arg(long)]
    pub mini: Option<String>,
    #[arg(long)]
    pub nu: Option<String>,
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub damping: Option<String>,
    #[arg(long = "cg-iters")]
    pub cg_iters: Option<String>,
    #[arg(long = "cg-tol")]
    pub cg_tol: Option<String>,
    #[arg(long = "max-backtracks")]
    pub max_backtracks: Option<String>,
    #[arg(long = "accept-ratio")]
    pub accept_ratio: Option<String>,
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long = "init-log-std", allow_hyphen_values = true)]
    pub init_log_std: Option<String>,
    #[arg(long)]
    pub horizon: Option<String>,
    #[arg(long = "no-adv-norm")]
    pub no_adv_norm: bool,
    #[arg(long = "dump-trajectories")]
    pub dump_trajectories: bool,
    /// Run (algorithm, seed) pairs concurrently.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TrainArgs {
    /// Flags as `(key, value)` overrides, in config-key order.
    pub fn overrides(&self) -> Vec<(String, String)> {
        let valued = [
            ("algo", &self.algo),
            ("env", &self.env),
            ("seed", &self.seed),
            ("seeds", &self.seeds),
            ("L", &self.epochs),
            ("N", &self.batch),
            ("J", &self.inner),
            ("m", &self.mini),
            ("nu", &self.nu),
            ("delta", &self.delta),
            ("gamma", &self.gamma),
            ("damping", &self.damping),
            ("cg_iters", &self.cg_iters),
            ("cg_tol", &self.cg_tol),
            ("max_backtracks", &self.max_backtracks),
            ("accept_ratio", &self.accept_ratio),
            ("hidden", &self.hidden),
            ("init_log_std", &self.init_log_std),
            ("horizon", &self.horizon),
        ];
        let mut out: Vec<(String, String)> = valued
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        if self.no_adv_norm {
            out.push(("adv_norm".into(), "false".into()));
        }
        if self.dump_trajectories {
            out.push(("dump_trajectories".into(), "true".into()));
        }
        if self.parallel {
            out.push(("parallel".into(), "true".into()));
        }
        if let Some(dir) = &self.out {
            out.push(("out".into(), dir.display().to_string()));
        }
        out
    }

    pub fn experiment_config(&self) -> svrpo::Result<ExperimentConfig> {
        let text = match &self.config {
            Some(path) => Some(fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?),
            None => None,
        };
        ExperimentConfig::from_sources(text.as_deref(), &self.overrides())
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config { .. } => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_NUMERICAL,
    }
}

fn report(cfg: &ExperimentConfig, summary: &ExperimentSummary) {
    println!("env {} seeds {:?} -> {}", summary.env, summary.seeds, cfg.out_dir.display());
    for (algo, s) in &summary.algorithms {
        println!(
            "{algo:>15}  median final return {:>12.4}  median auc {:>14.2}",
            s.median_final_return, s.median_auc
        );
    }
    if let Some(eff) = &summary.efficiency {
        match eff.steps_fraction {
            Some(f) => println!(
                "{} reaches {}'s final median ({:.4}) at {:.0}% of its env steps",
                eff.candidate,
                eff.reference,
                eff.reference_final_median,
                100.0 * f
            ),
            None => println!(
                "{} does not reach {}'s final median ({:.4})",
                eff.candidate, eff.reference, eff.reference_final_median
            ),
        }
    }
}

pub fn run(cli: Cli) -> ExitCode {
    let Command::Train(args) = cli.command;
    let result = args
        .experiment_config()
        .and_then(|cfg| run_experiment(&cfg).map(|(summary, _)| (cfg, summary)));
    match result {
        Ok((cfg, summary)) => {
            report(&cfg, &summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
