use std::path::PathBuf;

use bdpu::verify::phase_point;
use clap::Args;

use crate::commands::CliError;
use crate::config::{merge, resolve_seed, ConfigMap};
use crate::output::{with_writer, write_json, Format};

#[derive(Args, Debug)]
pub struct PhaseScanArgs {
    /// Beta grid: `start:end:step` or a comma list `0.1,0.3,0.7`.
    #[arg(long)]
    pub betas: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let spec = spec.trim();
    let grid: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Config(format!(
                "--betas range must be start:end:step, got {spec:?}"
            )));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("--betas: bad number {s:?}: {e}")))
        };
        let (start, end, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if step <= 0.0 {
            return Err(CliError::Config("--betas: step must be > 0".into()));
        }
        let mut grid = Vec::new();
        let mut k = 0u32;
        loop {
            let b = start + step * k as f64;
            if b > end + 1e-12 {
                break;
            }
            grid.push(b);
            k += 1;
        }
        grid
    } else {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Config(format!("--betas: bad number {s:?}: {e}")))
            })
            .collect::<Result<_, _>>()?
    };
    if grid.is_empty() {
        return Err(CliError::Config("--betas: empty grid".into()));
    }
    Ok(grid)
}

pub fn run(mut args: PhaseScanArgs, config: &ConfigMap) -> Result<i32, CliError> {
    merge(&mut args.betas, config, "betas")?;
    merge(&mut args.lambda, config, "lambda")?;
    merge(&mut args.horizon, config, "horizon")?;
    merge(&mut args.replicas, config, "replicas")?;
    let seed = resolve_seed(args.seed, config)?;

    let grid = parse_grid(
        args.betas
            .as_deref()
            .ok_or_else(|| CliError::Config("missing --betas".into()))?,
    )?;
    let lambda = args
        .lambda
        .ok_or_else(|| CliError::Config("missing --lambda".into()))?;
    let horizon = args
        .horizon
        .ok_or_else(|| CliError::Config("missing --horizon".into()))?;
    let replicas = args
        .replicas
        .ok_or_else(|| CliError::Config("missing --replicas".into()))?;

    let mut points = Vec::with_capacity(grid.len());
    for (k, &beta) in grid.iter().enumerate() {
        // distinct stream block per grid point keeps replicas independent
        let point_seed = seed.wrapping_add(k as u64);
        points.push(phase_point(beta, lambda, horizon, replicas, point_seed)?);
    }

    match args.format {
        Format::Csv => with_writer(args.out.as_ref(), |w| {
            writeln!(
                w,
                "# bdpu-phase-scan-v1 lambda={lambda} horizon={horizon} replicas={replicas} seed={seed}"
            )?;
            writeln!(w, "beta,mean_block_count,slope_vs_log_h,diagnostic_tv")?;
            for p in &points {
                writeln!(
                    w,
                    "{},{},{},{}",
                    p.beta, p.mean_blocks, p.slope_vs_log_h, p.diagnostic_tv
                )?;
            }
            Ok(())
        })?,
        Format::Json => {
            #[derive(serde::Serialize)]
            struct Payload {
                lambda: f64,
                horizon: u64,
                replicas: u64,
                seed: u64,
                points: Vec<bdpu::verify::PhasePoint>,
            }
            write_json(
                args.out.as_ref(),
                "phase-scan",
                &Payload {
                    lambda,
                    horizon,
                    replicas,
                    seed,
                    points,
                },
            )?;
        }
    }
    Ok(0)
}
