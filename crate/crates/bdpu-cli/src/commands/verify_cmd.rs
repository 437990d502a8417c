use std::path::PathBuf;

use bdpu::params::ChainParams;
use bdpu::rng::stream_rng;
use bdpu::stationary::{theta_closed_form, LimitLaw};
use bdpu::verify::{
    check_detailed_balance_pi, check_detailed_balance_sample_size, check_embedding,
    check_esf_exact, check_global_balance_pi_l, check_particle_equivalence,
    check_subcritical_stationarity, check_supercritical_limit, random_states,
};
use clap::Args;

use crate::commands::simulate::ScheduleChoice;
use crate::commands::CliError;
use crate::config::{merge, resolve_seed, ConfigMap};
use crate::output::{write_json, Format};

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Which check to run.
    #[arg(value_enum)]
    pub check: CheckChoice,

    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Capacity L (global-balance, embedding).
    #[arg(long, visible_alias = "L")]
    pub max_size: Option<u64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Capped-removal weight for the embedding check; defaults to the
    /// schedule value at L.
    #[arg(long)]
    pub mu_l: Option<f64>,
    #[arg(long, value_enum, default_value = "inverse-square")]
    pub schedule: ScheduleChoice,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,

    /// Number of random states (balance checks, equivalence).
    #[arg(long)]
    pub states: Option<usize>,
    /// State norm bound for the random state sampler.
    #[arg(long)]
    pub max_norm: Option<u64>,
    /// Chain steps (embedding, subcritical).
    #[arg(long)]
    pub steps: Option<u64>,
    /// Burn-in steps (subcritical); default one tenth of the run.
    #[arg(long)]
    pub burn_in: Option<u64>,
    /// Horizon per replica (supercritical).
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Replica count (supercritical, esf).
    #[arg(long)]
    pub replicas: Option<u64>,
    /// Sample size for the esf check.
    #[arg(long)]
    pub n: Option<u64>,

    /// Relative perturbation of the target law (negative control): the
    /// check is expected to fail.
    #[arg(long)]
    pub perturb: Option<f64>,
    /// Tolerance for exact balance checks.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Significance level for statistical checks.
    #[arg(long, default_value_t = 1e-3)]
    pub alpha: f64,
    /// Total-variation bound for the long-run checks.
    #[arg(long)]
    pub tv_bound: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CheckChoice {
    /// Detailed balance of the stationary law and of the sample-size chain.
    Balance,
    /// Global balance of the finite chain's stationary law.
    GlobalBalance,
    /// The finite kernel embedded in the capped-removal chain.
    Embedding,
    /// Long-run subcritical laws against the closed forms.
    Subcritical,
    /// Replica marginals at a horizon against the Poisson limit.
    Supercritical,
    /// Exact Ewens law of the pure-birth chain at a fixed sample size.
    Esf,
    /// Particle kernel pushed through the induced partition.
    Equivalence,
}

struct Outcome {
    pass: bool,
    summary: String,
    report: serde_json::Value,
    embedding: Option<bdpu::verify::EmbeddingReport>,
}

impl Outcome {
    fn new(pass: bool, summary: String, report: serde_json::Value) -> Self {
        Self {
            pass,
            summary,
            report,
            embedding: None,
        }
    }
}

pub fn run(mut args: VerifyArgs, config: &ConfigMap) -> Result<i32, CliError> {
    merge(&mut args.beta, config, "beta")?;
    merge(&mut args.lambda, config, "lambda")?;
    merge(&mut args.max_size, config, "max-size")?;
    merge(&mut args.mu, config, "mu")?;
    merge(&mut args.mu_l, config, "mu-l")?;
    merge(&mut args.states, config, "states")?;
    merge(&mut args.steps, config, "steps")?;
    merge(&mut args.horizon, config, "horizon")?;
    merge(&mut args.replicas, config, "replicas")?;
    let seed = resolve_seed(args.seed, config)?;

    let beta = args
        .beta
        .ok_or_else(|| CliError::Config("missing --beta".into()))?;
    let lambda = args
        .lambda
        .ok_or_else(|| CliError::Config("missing --lambda".into()))?;
    let perturb = args.perturb.unwrap_or(0.0);

    let outcome = match args.check {
        CheckChoice::Balance => {
            let tolerance = args.tolerance.unwrap_or(1e-12);
            let params = ChainParams::infinite(beta, lambda)?;
            // the perturbed law deliberately mismatches the kernel
            let law = LimitLaw::new(beta, lambda * (1.0 + perturb))?;
            let states = random_states(
                &mut stream_rng(seed, 0),
                args.states.unwrap_or(1000),
                args.max_norm.unwrap_or(20),
                None,
            );
            let pi = check_detailed_balance_pi(&law, &params, &states, tolerance)?;
            if pi.degenerate {
                eprintln!("warning: state set contains only the origin; the check is vacuous");
            }
            let nn = check_detailed_balance_sample_size(&law, &params, 50, tolerance)?;
            Outcome::new(
                    pi.pass && nn.pass,
                    format!(
                    "detailed balance: pi violation {:.3e}, sample-size violation {:.3e}, tolerance {:.1e}",
                    pi.max_detailed_violation, nn.max_detailed_violation, tolerance
                ),
                    serde_json::json!({"pi": pi, "sample_size": nn}),
                )
        }
        CheckChoice::GlobalBalance => {
            let tolerance = args.tolerance.unwrap_or(1e-11);
            let max_size = args
                .max_size
                .ok_or_else(|| CliError::Config("global-balance needs --max-size".into()))?;
            let mu = args
                .mu
                .ok_or_else(|| CliError::Config("global-balance needs --mu".into()))?;
            let params = ChainParams::maximal_count(beta, lambda, max_size, mu)?;
            let theta = theta_closed_form(max_size, beta, lambda, mu)?.perturbed(perturb);
            let states = random_states(
                &mut stream_rng(seed, 0),
                args.states.unwrap_or(1000),
                args.max_norm.unwrap_or(20),
                Some(max_size),
            );
            let report = check_global_balance_pi_l(&theta, &params, &states, tolerance)?;
            if report.degenerate {
                eprintln!("warning: state set contains only the origin; the check is vacuous");
            }
            Outcome::new(
                report.pass,
                format!(
                    "global balance: violation {:.3e} over {} states, tolerance {:.1e}",
                    report.max_global_violation, report.states_tested, tolerance
                ),
                serde_json::to_value(&report)?,
            )
        }
        CheckChoice::Embedding => {
            let window = args
                .max_size
                .ok_or_else(|| CliError::Config("embedding needs --max-size".into()))?;
            let steps = args
                .steps
                .ok_or_else(|| CliError::Config("embedding needs --steps".into()))?;
            let mu_l = match args.mu_l {
                Some(v) => v,
                None => args.schedule.build(args.scale)?.mu(window)?,
            };
            let params = ChainParams::infinite(beta, lambda)?;
            let report = check_embedding(&params, window, mu_l, steps, seed, args.alpha)?;
            let mut outcome = Outcome::new(
                report.pass,
                format!(
                    "embedding: {} window events over {} steps, min class p at Bonferroni {:.2e}, chi-square p {:.4}",
                    report.sigma_events, report.steps, report.bonferroni_alpha, report.chi_p_value
                ),
                serde_json::to_value(&report)?,
            );
            println!(
                "{:<14} {:>10} {:>12} {:>8} {:>10}",
                "class", "observed", "expected", "z", "p"
            );
            for class in &report.classes {
                println!(
                    "{:<14} {:>10} {:>12.1} {:>8.2} {:>10.4}",
                    class.label, class.observed, class.expected, class.z, class.p_value
                );
            }
            outcome.embedding = Some(report);
            outcome
        }
        CheckChoice::Subcritical => {
            let steps = args
                .steps
                .ok_or_else(|| CliError::Config("subcritical needs --steps".into()))?;
            let burn_in = args.burn_in.unwrap_or(steps / 10);
            let tv_bound = args.tv_bound.unwrap_or(0.01);
            let params = ChainParams::infinite(beta, lambda)?;
            let report = check_subcritical_stationarity(&params, steps, burn_in, seed, tv_bound)?;
            Outcome::new(
                report.pass,
                format!(
                    "subcritical: tv(norm) {:.4}, tv(blocks) {:.4}, bound {:.3}, {:.2e} steps/s",
                    report.tv_norm, report.tv_blocks, tv_bound, report.steps_per_second
                ),
                serde_json::to_value(&report)?,
            )
        }
        CheckChoice::Supercritical => {
            let horizon = args
                .horizon
                .ok_or_else(|| CliError::Config("supercritical needs --horizon".into()))?;
            let replicas = args
                .replicas
                .ok_or_else(|| CliError::Config("supercritical needs --replicas".into()))?;
            let tv_bound = args.tv_bound.unwrap_or(0.05);
            let params = ChainParams::infinite(beta, lambda)?;
            let report = check_supercritical_limit(&params, horizon, replicas, seed, tv_bound)?;
            Outcome::new(
                report.pass,
                format!(
                    "supercritical: tv(m_1) {:.4} (bound {:.3}), corr(m_1, m_2) {:.4}",
                    report.marginal_tvs[0].1, tv_bound, report.corr_m1_m2
                ),
                serde_json::to_value(&report)?,
            )
        }
        CheckChoice::Esf => {
            let n = args.n.unwrap_or(5);
            let replicas = args.replicas.unwrap_or(100_000);
            let report = check_esf_exact(n, lambda, replicas, seed, args.alpha)?;
            Outcome::new(
                report.pass,
                format!(
                    "esf exactness: chi-square {:.2} at {} dof, p {:.4}",
                    report.chi_square, report.dof, report.p_value
                ),
                serde_json::to_value(&report)?,
            )
        }
        CheckChoice::Equivalence => {
            let tolerance = args.tolerance.unwrap_or(1e-12);
            let params = ChainParams::infinite(beta, lambda)?;
            let report = check_particle_equivalence(
                &params,
                args.states.unwrap_or(1000),
                args.max_norm.unwrap_or(40) as usize,
                seed,
                tolerance,
            )?;
            Outcome::new(
                report.pass,
                format!(
                    "particle equivalence: violation {:.3e} over {} states",
                    report.max_violation, report.states_tested
                ),
                serde_json::to_value(&report)?,
            )
        }
    };

    println!(
        "{}: {}",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.summary
    );
    if let Some(out) = args.out.as_ref() {
        match args.format {
            Format::Json => {
                #[derive(serde::Serialize)]
                struct Payload {
                    check: String,
                    seed: u64,
                    pass: bool,
                    summary: String,
                    report: serde_json::Value,
                }
                write_json(
                    Some(out),
                    "verify-report",
                    &Payload {
                        check: format!("{:?}", args.check).to_lowercase(),
                        seed,
                        pass: outcome.pass,
                        summary: outcome.summary.clone(),
                        report: outcome.report.clone(),
                    },
                )?;
            }
            Format::Csv => {
                // per-class frequency table; only the embedding check has one
                let Some(embedding) = &outcome.embedding else {
                    return Err(CliError::Config(
                        "--format csv applies only to the embedding check".into(),
                    ));
                };
                crate::output::with_writer(Some(out), |w| {
                    writeln!(
                        w,
                        "# bdpu-embedding-v1 seed={seed} steps={} sigma_events={} \
                         bonferroni_alpha={}",
                        embedding.steps, embedding.sigma_events, embedding.bonferroni_alpha
                    )?;
                    writeln!(w, "class,observed,expected,z,p_value")?;
                    for class in &embedding.classes {
                        writeln!(
                            w,
                            "{},{},{},{},{}",
                            class.label, class.observed, class.expected, class.z, class.p_value
                        )?;
                    }
                    Ok(())
                })?;
            }
        }
    }
    if outcome.pass {
        Ok(0)
    } else {
        Err(CliError::CheckFailed(outcome.summary))
    }
}
