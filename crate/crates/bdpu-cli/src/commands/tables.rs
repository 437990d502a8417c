use std::path::PathBuf;

use bdpu::partition::{partitions_of_norm, partitions_of_norm_bounded};
use bdpu::stationary::{
    j_pmf, k_pmf, log_esf, log_pi, log_pi_l, mixture_identity, theta_closed_form,
    theta_sum_closed_form, tilted_nb_log_pmf, LimitLaw,
};
use clap::Args;
use serde::Serialize;

use crate::commands::CliError;
use crate::config::{merge, ConfigMap};
use crate::output::{with_writer, write_json, Format};

#[derive(Args, Debug)]
pub struct StationaryArgs {
    /// Which law to tabulate.
    #[arg(long, value_enum)]
    pub law: LawChoice,

    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Capacity L (theta and pi-l).
    #[arg(long, visible_alias = "L")]
    pub max_size: Option<u64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Sample size (esf and mixture tables).
    #[arg(long)]
    pub n: Option<u64>,
    /// Upper bound for scalar pmf tables; default runs to tail mass 1e-12.
    #[arg(long)]
    pub max_n: Option<u64>,
    /// Norm bound for enumerated state tables (pi and pi-l), default 20.
    #[arg(long)]
    pub max_norm: Option<u64>,

    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LawChoice {
    /// Component rates of the finite chain.
    Theta,
    /// Stationary law of the finite chain over enumerated states.
    PiL,
    /// Subcritical stationary law over enumerated states.
    Pi,
    /// The augmentation index.
    J,
    /// The stationary block count.
    K,
    /// The stationary sample size (tilted Negative Binomial).
    Nb,
    /// Ewens sampling formula at fixed sample size.
    Esf,
    /// Both sides of the Ewens mixture identity at fixed sample size.
    Mixture,
}

#[derive(Serialize)]
struct ScalarRow {
    value: u64,
    log_prob: f64,
    prob: f64,
}

#[derive(Serialize)]
struct StateRow {
    state: String,
    log_prob: f64,
    prob: f64,
}

#[derive(Serialize)]
struct MixtureRow {
    state: String,
    pi: f64,
    esf_times_nb: f64,
    rel_diff: f64,
}

fn require<T: Copy>(slot: Option<T>, flag: &str) -> Result<T, CliError> {
    slot.ok_or_else(|| CliError::Config(format!("missing --{flag}")))
}

pub fn run(mut args: StationaryArgs, config: &ConfigMap) -> Result<i32, CliError> {
    merge(&mut args.beta, config, "beta")?;
    merge(&mut args.lambda, config, "lambda")?;
    merge(&mut args.max_size, config, "max-size")?;
    merge(&mut args.mu, config, "mu")?;
    merge(&mut args.n, config, "n")?;
    merge(&mut args.max_n, config, "max-n")?;
    merge(&mut args.max_norm, config, "max-norm")?;

    let beta = require(args.beta, "beta")?;
    let lambda = require(args.lambda, "lambda")?;
    match args.law {
        LawChoice::Theta => theta_table(&args, beta, lambda),
        LawChoice::PiL => pi_l_table(&args, beta, lambda),
        LawChoice::Pi => pi_table(&args, beta, lambda),
        LawChoice::J => scalar_table(&args, beta, lambda, "j", |law, v| j_pmf(v, law)),
        LawChoice::K => scalar_table(&args, beta, lambda, "k", |law, v| k_pmf(v, law)),
        LawChoice::Nb => scalar_table(&args, beta, lambda, "nb", |law, v| {
            Ok(tilted_nb_log_pmf(v, law)?.exp())
        }),
        LawChoice::Esf => esf_table(&args, lambda),
        LawChoice::Mixture => mixture_table(&args, beta, lambda),
    }
}

fn theta_table(args: &StationaryArgs, beta: f64, lambda: f64) -> Result<i32, CliError> {
    let max_size = require(args.max_size, "max-size")?;
    let mu = require(args.mu, "mu")?;
    let theta = theta_closed_form(max_size, beta, lambda, mu)?;
    let closed_sum = theta_sum_closed_form(max_size, beta, lambda, mu)?;
    match args.format {
        Format::Csv => with_writer(args.out.as_ref(), |w| {
            writeln!(
                w,
                "# bdpu-theta-v1 max_size={max_size} beta={beta} lambda={lambda} mu={mu}"
            )?;
            writeln!(w, "i,theta,w")?;
            for i in 1..=max_size {
                writeln!(w, "{i},{},{}", theta.theta(i), theta.weight(i))?;
            }
            writeln!(w, "# theta_sum={}", theta.component_sum())?;
            writeln!(w, "# theta_sum_closed_form={closed_sum}")
        })?,
        Format::Json => {
            #[derive(Serialize)]
            struct Payload {
                law: &'static str,
                max_size: u64,
                beta: f64,
                lambda: f64,
                mu: f64,
                theta: Vec<f64>,
                w: Vec<f64>,
                theta_sum: f64,
                theta_sum_closed_form: f64,
            }
            write_json(
                args.out.as_ref(),
                "stationary-table",
                &Payload {
                    law: "theta",
                    max_size,
                    beta,
                    lambda,
                    mu,
                    theta: theta.thetas().to_vec(),
                    w: theta.weights().to_vec(),
                    theta_sum: theta.component_sum(),
                    theta_sum_closed_form: closed_sum,
                },
            )?;
        }
    }
    Ok(0)
}

fn pi_l_table(args: &StationaryArgs, beta: f64, lambda: f64) -> Result<i32, CliError> {
    let max_size = require(args.max_size, "max-size")?;
    let mu = require(args.mu, "mu")?;
    let max_norm = args.max_norm.unwrap_or(20);
    let theta = theta_closed_form(max_size, beta, lambda, mu)?;
    let mut rows = Vec::new();
    let mut mass = 0.0;
    for n in 0..=max_norm {
        for m in partitions_of_norm_bounded(n, max_size) {
            let log_prob = log_pi_l(&m, &theta)?;
            mass += log_prob.exp();
            rows.push(StateRow {
                state: m.to_field(),
                log_prob,
                prob: log_prob.exp(),
            });
        }
    }
    emit_state_table(args, "pi-l", None, rows, mass, max_norm)
}

fn pi_table(args: &StationaryArgs, beta: f64, lambda: f64) -> Result<i32, CliError> {
    let law = LimitLaw::new(beta, lambda)?;
    law.require_subcritical()?;
    let max_norm = args.max_norm.unwrap_or(20);
    let mut rows = Vec::new();
    let mut mass = 0.0;
    for n in 0..=max_norm {
        for m in partitions_of_norm(n) {
            let log_prob = log_pi(&m, &law)?;
            mass += log_prob.exp();
            rows.push(StateRow {
                state: m.to_field(),
                log_prob,
                prob: log_prob.exp(),
            });
        }
    }
    emit_state_table(args, "pi", Some("subcritical"), rows, mass, max_norm)
}

fn emit_state_table(
    args: &StationaryArgs,
    law: &str,
    regime: Option<&str>,
    rows: Vec<StateRow>,
    mass: f64,
    max_norm: u64,
) -> Result<i32, CliError> {
    let regime_note = regime.map_or(String::new(), |r| format!(" regime={r}"));
    match args.format {
        Format::Csv => with_writer(args.out.as_ref(), |w| {
            writeln!(
                w,
                "# bdpu-pmf-v1 law={law} max_norm={max_norm}{regime_note}"
            )?;
            writeln!(w, "state,log_prob,prob")?;
            for row in &rows {
                writeln!(w, "{},{},{}", row.state, row.log_prob, row.prob)?;
            }
            writeln!(w, "# enumerated_mass={mass}")
        })?,
        Format::Json => {
            #[derive(Serialize)]
            struct Payload<'a> {
                law: &'a str,
                #[serde(skip_serializing_if = "Option::is_none")]
                regime: Option<&'a str>,
                max_norm: u64,
                enumerated_mass: f64,
                rows: Vec<StateRow>,
            }
            write_json(
                args.out.as_ref(),
                "stationary-table",
                &Payload {
                    law,
                    regime,
                    max_norm,
                    enumerated_mass: mass,
                    rows,
                },
            )?;
        }
    }
    Ok(0)
}

fn scalar_table(
    args: &StationaryArgs,
    beta: f64,
    lambda: f64,
    law_name: &str,
    pmf: impl Fn(&LimitLaw, u64) -> bdpu::Result<f64>,
) -> Result<i32, CliError> {
    let law = LimitLaw::new(beta, lambda)?;
    law.require_subcritical()?;
    let mut rows = Vec::new();
    let mut mass = 0.0;
    let mut value = 0u64;
    let bound = args.max_n.unwrap_or(100_000);
    loop {
        let prob = pmf(&law, value)?;
        rows.push(ScalarRow {
            value,
            log_prob: prob.ln(),
            prob,
        });
        mass += prob;
        value += 1;
        if value > bound || (args.max_n.is_none() && 1.0 - mass < 1e-12 && value > 2) {
            break;
        }
    }
    let discarded = (1.0 - mass).max(0.0);
    match args.format {
        Format::Csv => with_writer(args.out.as_ref(), |w| {
            writeln!(
                w,
                "# bdpu-pmf-v1 law={law_name} regime=subcritical beta={beta} lambda={lambda} \
                 discarded_mass={discarded}"
            )?;
            writeln!(w, "value,log_prob,prob")?;
            for row in &rows {
                writeln!(w, "{},{},{}", row.value, row.log_prob, row.prob)?;
            }
            Ok(())
        })?,
        Format::Json => {
            #[derive(Serialize)]
            struct Payload<'a> {
                law: &'a str,
                regime: &'a str,
                beta: f64,
                lambda: f64,
                discarded_mass: f64,
                rows: Vec<ScalarRow>,
            }
            write_json(
                args.out.as_ref(),
                "stationary-table",
                &Payload {
                    law: law_name,
                    regime: "subcritical",
                    beta,
                    lambda,
                    discarded_mass: discarded,
                    rows,
                },
            )?;
        }
    }
    Ok(0)
}

fn esf_table(args: &StationaryArgs, lambda: f64) -> Result<i32, CliError> {
    let n = require(args.n, "n")?;
    let mut rows = Vec::new();
    let mut mass = 0.0;
    for m in partitions_of_norm(n) {
        let log_prob = log_esf(n, &m, lambda);
        mass += log_prob.exp();
        rows.push(StateRow {
            state: m.to_field(),
            log_prob,
            prob: log_prob.exp(),
        });
    }
    match args.format {
        Format::Csv => with_writer(args.out.as_ref(), |w| {
            writeln!(w, "# bdpu-pmf-v1 law=esf n={n} lambda={lambda}")?;
            writeln!(w, "state,log_prob,prob")?;
            for row in &rows {
                writeln!(w, "{},{},{}", row.state, row.log_prob, row.prob)?;
            }
            writeln!(w, "# total_mass={mass}")
        })?,
        Format::Json => {
            #[derive(Serialize)]
            struct Payload {
                law: &'static str,
                n: u64,
                lambda: f64,
                total_mass: f64,
                rows: Vec<StateRow>,
            }
            write_json(
                args.out.as_ref(),
                "stationary-table",
                &Payload {
                    law: "esf",
                    n,
                    lambda,
                    total_mass: mass,
                    rows,
                },
            )?;
        }
    }
    Ok(0)
}

fn mixture_table(args: &StationaryArgs, beta: f64, lambda: f64) -> Result<i32, CliError> {
    let n = require(args.n, "n")?;
    let law = LimitLaw::new(beta, lambda)?;
    law.require_subcritical()?;
    let mut rows = Vec::new();
    let mut max_rel = 0.0f64;
    for m in partitions_of_norm(n) {
        let (pi, rhs) = mixture_identity(&m, &law)?;
        let rel_diff = (pi - rhs).abs() / pi.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        max_rel = max_rel.max(rel_diff);
        rows.push(MixtureRow {
            state: m.to_field(),
            pi,
            esf_times_nb: rhs,
            rel_diff,
        });
    }
    match args.format {
        Format::Csv => with_writer(args.out.as_ref(), |w| {
            writeln!(w, "# bdpu-mixture-v1 n={n} beta={beta} lambda={lambda}")?;
            writeln!(w, "state,pi,esf_times_nb,rel_diff")?;
            for row in &rows {
                writeln!(
                    w,
                    "{},{},{},{}",
                    row.state, row.pi, row.esf_times_nb, row.rel_diff
                )?;
            }
            writeln!(w, "# max_rel_diff={max_rel}")
        })?,
        Format::Json => {
            #[derive(Serialize)]
            struct Payload {
                law: &'static str,
                n: u64,
                beta: f64,
                lambda: f64,
                max_rel_diff: f64,
                rows: Vec<MixtureRow>,
            }
            write_json(
                args.out.as_ref(),
                "stationary-table",
                &Payload {
                    law: "mixture",
                    n,
                    beta,
                    lambda,
                    max_rel_diff: max_rel,
                    rows,
                },
            )?;
        }
    }
    Ok(0)
}
