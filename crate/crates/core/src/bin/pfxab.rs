use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pfxab::harness::{
    read_oracle, replicate_with_oracle, run_with_oracle, sweep_alpha, write_oracle, write_phase_log,
    write_replicate_csv, write_run_csv, write_run_metadata, write_sweep_csv, write_transcript, RunMetadata,
};
use pfxab::{BaseFunction, OracleReport, Real, SimConfig};

#[derive(Parser)]
#[command(name = "pfxab", version, about = "Personalised federated X-armed bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its regret trace.
    Run(Common),
    /// Run several seeds and write mean and spread of regret.
    Replicate {
        #[command(flatten)]
        common: Common,
        /// Comma separated seeds; defaults to `seed .. seed + replicates`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 10)]
        replicates: u64,
    },
    /// Run once per alpha and write per-step rewards.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        alphas: Vec<f64>,
    },
    /// Compute the oracle optima and write them as a fixture.
    Oracle(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Args)]
struct Common {
    /// TOML file with `SimConfig` fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "f64")]
    precision: Precision,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Oracle fixture to read (or, for `oracle`, to write).
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Also write every protocol frame.
    #[arg(long)]
    transcript: bool,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// garland, double-sine, tent or constant:<v>.
    #[arg(long)]
    objective: Option<BaseFunction>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    nu1: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    d_prime: Option<f64>,
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_stride: Option<u64>,
    #[arg(long)]
    oracle_resolution: Option<usize>,
}

impl Common {
    fn config(&self) -> anyhow::Result<SimConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                SimConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => SimConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    c.$f = v;
                }
            )*};
        }
        set!(horizon, clients, alpha, objective, spread, noise, dim, c, seed, checkpoint_stride, oracle_resolution);
        macro_rules! set_opt {
            ($($f:ident),*) => {$(
                if self.$f.is_some() {
                    c.$f = self.$f;
                }
            )*};
        }
        set_opt!(nu1, rho, d_prime, depth);
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn output_dir(config: &SimConfig) -> PathBuf {
    config.output.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn load_oracle<T: Real>(common: &Common, config: &SimConfig) -> anyhow::Result<OracleReport<T>> {
    match &common.oracle {
        Some(path) => Ok(read_oracle(path)?),
        None => Ok(config.oracle()?),
    }
}

fn execute<T: Real>(command: &Command) -> anyhow::Result<()> {
    match command {
        Command::Run(common) => {
            let config = common.config()?;
            let oracle = load_oracle::<T>(common, &config)?;
            let result = run_with_oracle(&config, &oracle, common.transcript)?;
            let dir = output_dir(&config);
            write_run_csv(&dir.join("run.csv"), &result)?;
            write_run_metadata(&dir.join("run.json"), &RunMetadata::for_run(&result))?;
            write_phase_log(&dir.join("phases.jsonl"), &result)?;
            if let Some(tr) = &result.transcript {
                write_transcript(&dir.join("transcript.txt"), tr)?;
            }
            println!(
                "regret {} over {} rounds, {} phases, {} round-trips{} -> {}",
                result.final_regret(),
                config.horizon,
                result.phases.len(),
                result.ledger.round_trips,
                if result.truncated { " (truncated)" } else { "" },
                dir.display()
            );
        }
        Command::Replicate { common, seeds, replicates } => {
            let config = common.config()?;
            let seeds: Vec<u64> =
                if seeds.is_empty() { (config.seed..config.seed + replicates).collect() } else { seeds.clone() };
            let oracle = load_oracle::<T>(common, &config)?;
            let summary = replicate_with_oracle(&config, &seeds, &oracle)?;
            let dir = output_dir(&config);
            write_replicate_csv(&dir.join("replicate.csv"), &summary)?;
            write_run_metadata(&dir.join("replicate.json"), &RunMetadata::for_replication(&config, &summary))?;
            let last = summary.t.len() - 1;
            println!(
                "mean regret {} (std {}) over {} seeds -> {}",
                summary.mean[last],
                summary.std[last],
                seeds.len(),
                dir.display()
            );
        }
        Command::Sweep { common, alphas } => {
            let config = common.config()?;
            if common.oracle.is_some() {
                bail!("sweep computes one oracle per alpha; --oracle is not accepted");
            }
            let table = sweep_alpha::<T>(&config, alphas)?;
            let dir = output_dir(&config);
            write_sweep_csv(&dir.join("sweep.csv"), &table)?;
            let text = serde_json::to_string_pretty(&table)? + "\n";
            write_text(&dir.join("sweep.json"), &text)?;
            println!("{} alpha values -> {}", table.rows.len(), dir.display());
        }
        Command::Oracle(common) => {
            let config = common.config()?;
            let report = config.oracle::<T>()?;
            let path = common.oracle.clone().unwrap_or_else(|| output_dir(&config).join("oracle.json"));
            write_oracle(&path, &report)?;
            println!("oracle -> {}", path.display());
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn precision(command: &Command) -> Precision {
    match command {
        Command::Run(c) | Command::Oracle(c) => c.precision,
        Command::Replicate { common, .. } | Command::Sweep { common, .. } => common.precision,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match precision(&cli.command) {
        Precision::F32 => execute::<f32>(&cli.command),
        Precision::F64 => execute::<f64>(&cli.command),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
