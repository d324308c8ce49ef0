use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mmfd_core::scenario::{powerctl_sweep, run_experiment, write_sweep_csv, LinkSpecConfig, RunOptions, ScenarioConfig};
use mmfd_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "sim", version, about = "mmWave full-duplex MAC simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every variant, node count and replication of a scenario.
    Run {
        config: PathBuf,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's replication count.
        #[arg(long)]
        replications: Option<u32>,
        /// Directory for results.csv and summary.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write the event trace of every run to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Skip the protocol-rule audit of each run's trace.
        #[arg(long)]
        no_check: bool,
    },
    /// Sweep the AP power cap over an FD link with and without power control.
    Powerctl {
        linkspec: PathBuf,
        /// Directory for powerctl.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Parse and check a scenario config without running it.
    Validate { config: PathBuf },
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Toml(_) | Error::InvalidArgument(_)) => EXIT_CONFIG,
        Some(Error::Invariant(_)) => EXIT_INVARIANT,
        _ => 1,
    }
}

fn load(path: &PathBuf) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ScenarioConfig::from_toml_str(&text)?)
}

fn run(
    config: PathBuf,
    seed: Option<u64>,
    replications: Option<u32>,
    out: PathBuf,
    trace: Option<PathBuf>,
    no_check: bool,
) -> anyhow::Result<()> {
    let mut cfg = load(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = replications {
        cfg.replications = r;
    }
    cfg.validate()?;
    let opts = RunOptions { check_invariants: !no_check, trace_path: trace, ..Default::default() };
    let report = run_experiment(&cfg, &opts)?;
    report.write_outputs(&out).with_context(|| format!("writing to {}", out.display()))?;
    println!(
        "{} ({} runs, AP {:.1} dBm, users {:.1} dBm)",
        cfg.name,
        report.runs.len(),
        cfg.power.ap_tx_dbm,
        cfg.power.user_tx_dbm
    );
    println!("{:>4}  {:<14} {:>16} {:>12} {:>8} {:>8} {:>8}", "n", "variant", "throughput_bps", "std_bps", "jain", "hd", "fd");
    for g in report.summaries() {
        println!(
            "{:>4}  {:<14} {:>16.0} {:>12.0} {:>8.4} {:>8.0} {:>8.0}",
            g.node_count,
            g.variant.as_str(),
            g.network_throughput_bps.mean,
            g.network_throughput_bps.std_dev,
            g.jain_index.mean,
            g.hd_transactions.mean,
            g.two_node_transactions.mean + g.three_node_transactions.mean
        );
    }
    println!("wrote {}", out.display());
    report.ensure_clean()?;
    Ok(())
}

fn powerctl(linkspec: PathBuf, out: PathBuf) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&linkspec).with_context(|| format!("reading {}", linkspec.display()))?;
    let cfg = LinkSpecConfig::from_toml_str(&text)?;
    let rows = powerctl_sweep(&cfg)?;
    std::fs::create_dir_all(&out)?;
    let path = out.join("powerctl.csv");
    write_sweep_csv(BufWriter::new(File::create(&path)?), &rows)?;
    let infeasible = rows.iter().filter(|r| !r.feasible).count();
    println!("{} points, {} infeasible; wrote {}", rows.len(), infeasible, path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config, seed, replications, out, trace, no_check } => {
            run(config, seed, replications, out, trace, no_check)
        }
        Command::Powerctl { linkspec, out } => powerctl(linkspec, out),
        Command::Validate { config } => load(&config).map(|c| {
            let runs = c.node_counts.len() * c.variants.len() * c.replications as usize;
            println!("{}: ok ({} runs)", c.name, runs);
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
