use std::path::PathBuf;

use bdpu::engine::{KernelKind, RunConfig, Simulator};
use bdpu::params::{ChainParams, MuSchedule};
use bdpu::partition::AllelicPartition;
use clap::Args;

use crate::commands::CliError;
use crate::config::{merge, resolve_seed, ConfigMap};
use crate::output::{with_writer, write_json, Format};

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Which chain to run.
    #[arg(long, value_enum, default_value = "bdpu")]
    pub kernel: KernelChoice,

    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Maximal block size L (finite and capped-removal kernels).
    #[arg(long, visible_alias = "L")]
    pub max_size: Option<u64>,
    /// Immigration weight of the finite kernel.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Capped-removal weight; defaults to the schedule value at L.
    #[arg(long)]
    pub mu_l: Option<f64>,
    /// Schedule for --mu-l when it is not given explicitly.
    #[arg(long, value_enum, default_value = "inverse-square")]
    pub schedule: ScheduleChoice,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,

    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replica stream index.
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Snapshot cadence in steps (initial and final states always recorded).
    #[arg(long)]
    pub snapshot_every: Option<u64>,
    /// Initial state as `size:count;size:count`, default the origin.
    #[arg(long)]
    pub init: Option<String>,
    /// Record the times at which the first L coordinates change
    /// (capped-removal kernel).
    #[arg(long)]
    pub record_sigma: bool,

    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum KernelChoice {
    Bdpu,
    MaximalCount,
    Modified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScheduleChoice {
    InverseSquare,
    InverseLog,
}

impl ScheduleChoice {
    pub fn build(self, scale: f64) -> Result<MuSchedule, bdpu::Error> {
        match self {
            ScheduleChoice::InverseSquare => MuSchedule::inverse_square(scale),
            ScheduleChoice::InverseLog => MuSchedule::inverse_log(scale),
        }
    }
}

pub fn run(mut args: SimulateArgs, config: &ConfigMap) -> Result<i32, CliError> {
    merge(&mut args.beta, config, "beta")?;
    merge(&mut args.lambda, config, "lambda")?;
    merge(&mut args.max_size, config, "max-size")?;
    merge(&mut args.mu, config, "mu")?;
    merge(&mut args.mu_l, config, "mu-l")?;
    merge(&mut args.steps, config, "steps")?;
    merge(&mut args.snapshot_every, config, "snapshot-every")?;
    let seed = resolve_seed(args.seed, config)?;

    let beta = args
        .beta
        .ok_or_else(|| CliError::Config("missing --beta".into()))?;
    let lambda = args
        .lambda
        .ok_or_else(|| CliError::Config("missing --lambda".into()))?;
    let steps = args
        .steps
        .ok_or_else(|| CliError::Config("missing --steps".into()))?;

    let (params, kernel) = match args.kernel {
        KernelChoice::Bdpu => (ChainParams::infinite(beta, lambda)?, KernelKind::Bdpu),
        KernelChoice::MaximalCount => {
            let max_size = args
                .max_size
                .ok_or_else(|| CliError::Config("maximal-count kernel needs --max-size".into()))?;
            let mu = args
                .mu
                .ok_or_else(|| CliError::Config("maximal-count kernel needs --mu".into()))?;
            (
                ChainParams::maximal_count(beta, lambda, max_size, mu)?,
                KernelKind::MaximalCount,
            )
        }
        KernelChoice::Modified => {
            let window = args
                .max_size
                .ok_or_else(|| CliError::Config("capped-removal kernel needs --max-size".into()))?;
            let mu_l = match args.mu_l {
                Some(value) => value,
                None => args.schedule.build(args.scale)?.mu(window)?,
            };
            (
                ChainParams::infinite(beta, lambda)?,
                KernelKind::Modified { window, mu_l },
            )
        }
    };
    if params.is_degenerate() {
        eprintln!(
            "warning: beta = 1 with a finite capacity is degenerate; removals and \
             immigration never fire and the chain only grows"
        );
    }

    let mut sim = Simulator::with_stream(params, kernel, seed, args.stream)?;
    if let Some(init) = &args.init {
        let state = AllelicPartition::from_field(init)?;
        sim.set_state(&state)?;
    }
    let run_cfg = RunConfig {
        steps,
        snapshot_every: args.snapshot_every,
        record_sigma: args.record_sigma,
    };
    let record = sim.run(&run_cfg);

    match args.format {
        Format::Csv => with_writer(args.out.as_ref(), |w| record.write_snapshot_csv(w))?,
        Format::Json => write_json(args.out.as_ref(), "trajectory", &record)?,
    }

    let last = record.snapshots.last().expect("final snapshot");
    let consistent = last.state.norm() == last.norm && last.state.block_count() == last.block_count;
    eprintln!(
        "simulate: steps={} final_norm={} final_blocks={} sigma_events={} state_consistent={}",
        steps,
        last.norm,
        last.block_count,
        record
            .sigma_times
            .as_ref()
            .map_or("n/a".to_string(), |t| t.len().to_string()),
        consistent
    );
    Ok(0)
}
