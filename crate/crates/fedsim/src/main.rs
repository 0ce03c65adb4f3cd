use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fedsim::settings::{apply, parse_dataset, SettingsFile};
use fedsim::{metrics_csv, selftest, sweep};
use fedsim_core::config::{ExperimentConfig, LinkMode, Protocol};

#[derive(Parser)]
#[command(name = "fedsim", version, about = "Cooperative training over simulated fading channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its metrics CSV.
    Run(RunArgs),
    /// Run every point of a grid file.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in property checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Base configuration file (key = value); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["il", "fl", "fd", "hfd"])]
    protocol: Option<String>,
    /// Uplink and downlink mode: dd, da, ad, aa (or ii for ideal links).
    #[arg(long)]
    link: Option<String>,
    #[arg(long = "T")]
    channel_uses: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pu_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pd_db: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    iters: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// `synthetic` or `idx:<images>,<labels>`.
    #[arg(long)]
    data: Option<String>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn build_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => SettingsFile::read(path)?.to_config()?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &args.protocol {
        cfg.protocol = p.parse::<Protocol>()?;
    }
    if let Some(l) = &args.link {
        (cfg.uplink_mode, cfg.downlink_mode) = LinkMode::parse_pair(l)?;
    }
    if let Some(t) = args.channel_uses {
        cfg.channel_uses = t;
    }
    if let Some(v) = args.pu_db {
        cfg.pu_db = v;
    }
    if let Some(v) = args.pd_db {
        cfg.pd_db = v;
    }
    if let Some(k) = args.k {
        cfg.devices = k;
    }
    if let Some(n) = args.iters {
        cfg.global_iterations = n;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(d) = &args.data {
        cfg.dataset = parse_dataset(d).map_err(anyhow::Error::msg)?;
    }
    for kv in &args.set {
        let Some((k, v)) = kv.split_once('=') else { bail!("--set expects KEY=VALUE, got `{kv}`") };
        apply(&mut cfg, k.trim(), v.trim()).map_err(anyhow::Error::msg)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = build_config(&args)?;
            let out = fedsim::run(&cfg)?;
            metrics_csv::write_metrics(&out.records, &args.out)?;
            if out.audit.violations() > 0 {
                bail!("{} budget or power violations", out.audit.violations());
            }
            if let Some(last) = out.records.iter().rev().find(|r| r.scope == fedsim_core::metrics::Scope::Average) {
                eprintln!("final average accuracy {}", metrics_csv::format_g(last.accuracy));
            }
        }
        Command::Sweep { grid, out } => {
            let configs = sweep::expand(&SettingsFile::read(&grid)?)?;
            let total = configs.len();
            let summary = sweep::run_all(&configs, &out, |i, name| eprintln!("[{}/{total}] {name}", i + 1))
                .with_context(|| format!("sweep {}", grid.display()))?;
            eprintln!(
                "{} runs, {} budget checks, {} power checks, {} violations",
                summary.runs,
                summary.audit.budget_checks,
                summary.audit.power_checks,
                summary.audit.violations()
            );
            if summary.audit.violations() > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Selftest => {
            let checks = selftest::run();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
