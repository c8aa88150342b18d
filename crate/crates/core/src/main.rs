use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use irs_drl::exp::{
    profile_complexity, replicate_seeds, sweep_elements, sweep_power, train, AgentKind,
    ComplexityProfile, ExperimentConfig,
};
use irs_drl::Result;

#[derive(Parser)]
#[command(
    name = "irs-drl",
    version,
    about = "DDPG/TD3 joint beamforming and IRS phase design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (flat TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `total_steps`.
    #[arg(long)]
    steps: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Agents to compare.
    #[arg(long, value_delimiter = ',', default_values = ["td3", "ddpg", "random"])]
    agents: Vec<AgentKind>,
    /// Number of seed replicates per point (seeds base, base+1, ...).
    #[arg(long, default_value_t = 5)]
    replicates: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write metrics.csv, summary.txt and checkpoint.bin.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agent: Option<AgentKind>,
    },
    /// Best SE versus transmit power.
    SweepPower {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Transmit powers in dB.
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        pt: Vec<f64>,
    },
    /// Average-reward trajectories versus number of IRS elements.
    SweepElements {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
    },
    /// Parameter counts, checkpoint size and episode duration per agent.
    Profile {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values = ["ddpg", "td3"])]
        agents: Vec<AgentKind>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(steps) = common.steps {
        cfg.total_steps = steps;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, agent } => {
            let mut cfg = load(&common)?;
            if let Some(agent) = agent {
                cfg.agent = agent;
            }
            let run = train(&cfg)?;
            run.write_to(&cfg.output)?;
            write(&cfg.output, "config.toml", &cfg.to_toml_string())?;
            print!("{}", run.summary.to_text());
        }
        Command::SweepPower { common, sweep, pt } => {
            let cfg = load(&common)?;
            let seeds = replicate_seeds(cfg.seed, sweep.replicates);
            let table = sweep_power(&cfg, &pt, &sweep.agents, &seeds)?;
            write(&cfg.output, "sweep_power.csv", &table.summary_csv())?;
            print!("{}", table.summary_csv());
        }
        Command::SweepElements { common, sweep, n } => {
            let cfg = load(&common)?;
            let seeds = replicate_seeds(cfg.seed, sweep.replicates);
            let table = sweep_elements(&cfg, &n, &sweep.agents, &seeds)?;
            write(&cfg.output, "sweep_elements.csv", &table.summary_csv())?;
            write(
                &cfg.output,
                "sweep_elements_trajectory.csv",
                &table.trajectory_csv(),
            )?;
            print!("{}", table.summary_csv());
        }
        Command::Profile { common, agents } => {
            let base = load(&common)?;
            let mut out = ComplexityProfile::csv_header().to_string();
            for agent in agents {
                let cfg = ExperimentConfig {
                    agent,
                    ..base.clone()
                };
                out.push_str(&profile_complexity(&cfg)?.csv_row());
            }
            write(&base.output, "profile.csv", &out)?;
            print!("{out}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
