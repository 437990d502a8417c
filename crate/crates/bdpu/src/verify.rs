//! Executable checks of the structural claims: exact balance identities,
//! the window-embedding property of the capped-removal chain, long-run and
//! replica limits on both sides of the phase transition, and the fit
//! utilities they share.
//!
//! Algebraic identities are checked edge by edge at relative tolerances near
//! machine precision; distributional claims are checked statistically with
//! total variation and chi-square fits on seeded runs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::engine::{window_class, KernelKind, Simulator, WindowClass};
use crate::error::{Error, Result};
use crate::kernels::{
    bdpu_transitions, maximal_count_transitions, particle_transitions, ParticleState,
};
use crate::parallel::par_map_collect;
use crate::params::ChainParams;
use crate::partition::{partitions_of_norm, AllelicPartition, Move};
use crate::rng::stream_rng;
use crate::stationary::{
    expected_items, k_pmf, log_pi, log_pi_l, log_poisson, tilted_nb_pmf, LimitLaw, Regime,
    ThetaVector,
};

/// Outcome of an exact balance check over a finite set of states or edges.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub states_tested: usize,
    pub edges_tested: usize,
    pub max_detailed_violation: f64,
    pub max_global_violation: f64,
    pub tolerance: f64,
    /// True when the state set exercised nothing beyond the origin.
    pub degenerate: bool,
    pub pass: bool,
}

/// Outcome of a statistical goodness-of-fit check.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub sample_size: u64,
    pub tv: f64,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub truncation_mass: f64,
    pub pass: bool,
}

/// Total-variation distance between an empirical histogram and a truncated
/// target pmf. Mass outside the listed support is lumped into one cell.
/// Returns `(tv, target_truncation_mass)`.
pub fn tv_distance(observed: &BTreeMap<u64, u64>, total: u64, target: &[(u64, f64)]) -> (f64, f64) {
    let n = total as f64;
    let mut tv = 0.0;
    let mut target_mass = 0.0;
    let mut observed_on_support = 0u64;
    for &(value, prob) in target {
        let emp = observed.get(&value).copied().unwrap_or(0) as f64 / n;
        tv += (emp - prob).abs();
        target_mass += prob;
        observed_on_support += observed.get(&value).copied().unwrap_or(0);
    }
    let rest_target = (1.0 - target_mass).max(0.0);
    let rest_emp = (total - observed_on_support) as f64 / n;
    tv += (rest_emp - rest_target).abs();
    (tv / 2.0, rest_target)
}

#[derive(Debug, Clone, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub cells: usize,
}

const MIN_EXPECTED_PER_CELL: f64 = 5.0;

/// Pearson chi-square of an empirical histogram against a truncated target.
/// Adjacent cells with expected count below five are merged; mass outside
/// the support forms a final cell.
pub fn chi_square(
    observed: &BTreeMap<u64, u64>,
    total: u64,
    target: &[(u64, f64)],
) -> Result<ChiSquareResult> {
    let n = total as f64;
    let mut raw: Vec<(f64, f64)> = Vec::with_capacity(target.len() + 1);
    let mut target_mass = 0.0;
    let mut observed_on_support = 0u64;
    for &(value, prob) in target {
        let obs = observed.get(&value).copied().unwrap_or(0);
        raw.push((obs as f64, n * prob));
        target_mass += prob;
        observed_on_support += obs;
    }
    let rest_exp = n * (1.0 - target_mass).max(0.0);
    let rest_obs = (total - observed_on_support) as f64;
    if rest_exp > 0.0 || rest_obs > 0.0 {
        raw.push((rest_obs, rest_exp));
    }
    // merge forward until each cell carries enough expected mass
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs_acc, mut exp_acc) = (0.0, 0.0);
    for (obs, exp) in raw {
        obs_acc += obs;
        exp_acc += exp;
        if exp_acc >= MIN_EXPECTED_PER_CELL {
            cells.push((obs_acc, exp_acc));
            obs_acc = 0.0;
            exp_acc = 0.0;
        }
    }
    if exp_acc > 0.0 || obs_acc > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += obs_acc;
                last.1 += exp_acc;
            }
            None => cells.push((obs_acc, exp_acc)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::InsufficientSample(format!(
            "only {} cell(s) after merging to expected >= {MIN_EXPECTED_PER_CELL}",
            cells.len()
        )));
    }
    let statistic: f64 = cells
        .iter()
        .map(|(obs, exp)| (obs - exp) * (obs - exp) / exp)
        .sum();
    let dof = cells.len() - 1;
    let p_value = gamma_ur(dof as f64 / 2.0, statistic / 2.0);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value,
        cells: cells.len(),
    })
}

/// Seeded sampler for test states: random partitions with bounded norm and,
/// optionally, bounded part size. The origin is always included.
pub fn random_states<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    max_norm: u64,
    max_size: Option<u64>,
) -> Vec<AllelicPartition> {
    let mut out = Vec::with_capacity(count);
    out.push(AllelicPartition::empty());
    while out.len() < count {
        let n = rng.random_range(0..=max_norm);
        let mut remaining = n;
        let mut pairs: Vec<(u64, u64)> = Vec::new();
        while remaining > 0 {
            let cap = max_size.map_or(remaining, |s| s.min(remaining));
            let part = rng.random_range(1..=cap);
            pairs.push((part, 1));
            remaining -= part;
        }
        out.push(AllelicPartition::from_pairs(pairs).expect("parts >= 1"));
    }
    out
}

fn relative_flux_violation(log_forward: f64, log_backward: f64) -> f64 {
    (log_forward - log_backward).exp_m1().abs()
}

/// Detailed balance of the subcritical stationary law along every admissible
/// edge out of each given state: `pi(m) p(m'|m) = pi(m') p(m|m')`.
pub fn check_detailed_balance_pi(
    law: &LimitLaw,
    params: &ChainParams,
    states: &[AllelicPartition],
    tolerance: f64,
) -> Result<BalanceReport> {
    law.require_subcritical()?;
    let mut max_violation: f64 = 0.0;
    let mut edges = 0usize;
    for m in states {
        let log_m = log_pi(m, law)?;
        let dist = bdpu_transitions(m, params)?;
        for &(mv, prob) in dist.moves() {
            let next = m.apply(mv)?;
            let back = bdpu_transitions(&next, params)?.probability_of(mv.inverse());
            let log_forward = log_m + prob.ln();
            let log_backward = log_pi(&next, law)? + back.ln();
            max_violation = max_violation.max(relative_flux_violation(log_forward, log_backward));
            edges += 1;
        }
    }
    let degenerate = states.iter().all(|m| m.is_empty());
    Ok(BalanceReport {
        states_tested: states.len(),
        edges_tested: edges,
        max_detailed_violation: max_violation,
        max_global_violation: 0.0,
        tolerance,
        degenerate,
        pass: max_violation <= tolerance,
    })
}

/// Detailed balance of the sample-size chain against the tilted Negative
/// Binomial: `mu(n-1) t(n|n-1) = mu(n) t(n-1|n)` for `n = 1..=max_n`. The
/// transition probabilities come from `params`, the target law from `law`,
/// so a perturbed law is detected.
pub fn check_detailed_balance_sample_size(
    law: &LimitLaw,
    params: &ChainParams,
    max_n: u64,
    tolerance: f64,
) -> Result<BalanceReport> {
    law.require_subcritical()?;
    let beta = params.beta();
    let lambda = params.lambda();
    let mut max_violation: f64 = 0.0;
    for n in 1..=max_n {
        let nf = n as f64;
        let up = (beta * (lambda + nf - 1.0) / (beta * lambda + nf - 1.0)).ln()
            + tilted_nb_pmf(n - 1, law)?.ln();
        let down = ((1.0 - beta) * nf / (beta * lambda + nf)).ln() + tilted_nb_pmf(n, law)?.ln();
        max_violation = max_violation.max(relative_flux_violation(up, down));
    }
    Ok(BalanceReport {
        states_tested: max_n as usize,
        edges_tested: max_n as usize,
        max_detailed_violation: max_violation,
        max_global_violation: 0.0,
        tolerance,
        degenerate: false,
        pass: max_violation <= tolerance,
    })
}

/// Structurally admissible moves of the finite kernel from `m`, including
/// zero-weight ones (needed to enumerate predecessors at extreme `beta`).
fn structural_moves_maximal(m: &AllelicPartition, max_size: u64) -> Vec<Move> {
    let mut moves = vec![Move::NewSingleton, Move::BoundaryInsert(max_size)];
    for (i, _) in m.iter() {
        if i < max_size {
            moves.push(Move::Grow(i));
        } else {
            moves.push(Move::BoundaryRemove(max_size));
        }
        moves.push(Move::Shrink(i));
    }
    moves
}

/// Global balance of the finite chain's stationary law at each given state:
/// the stationary flux into `m'` from its full predecessor set equals
/// `pi_L(m')`.
pub fn check_global_balance_pi_l(
    theta: &ThetaVector,
    params: &ChainParams,
    states: &[AllelicPartition],
    tolerance: f64,
) -> Result<BalanceReport> {
    let max_size = params.max_size().ok_or_else(|| {
        Error::invalid(
            "mode",
            "global balance check needs maximal-count parameters",
        )
    })?;
    if theta.max_size() != max_size {
        return Err(Error::invalid(
            "theta",
            "rate vector capacity does not match the parameters",
        ));
    }
    let mut max_violation: f64 = 0.0;
    for target in states {
        let log_target = log_pi_l(target, theta)?;
        let mut predecessors = BTreeSet::new();
        for mv in structural_moves_maximal(target, max_size) {
            if let Ok(pred) = target.apply(mv) {
                predecessors.insert(pred);
            }
        }
        let mut flux = 0.0;
        for pred in &predecessors {
            let log_pred = log_pi_l(pred, theta)?;
            let dist = maximal_count_transitions(pred, params)?;
            for &(mv, prob) in dist.moves() {
                if pred.apply(mv)? == *target {
                    flux += (log_pred + prob.ln() - log_target).exp();
                }
            }
        }
        max_violation = max_violation.max((flux - 1.0).abs());
    }
    let degenerate = states.iter().all(|m| m.is_empty());
    Ok(BalanceReport {
        states_tested: states.len(),
        edges_tested: states.len(),
        max_detailed_violation: 0.0,
        max_global_violation: max_violation,
        tolerance,
        degenerate,
        pass: max_violation <= tolerance,
    })
}

/// Per-class outcome of the embedding test.
#[derive(Debug, Clone, Serialize)]
pub struct ClassStat {
    pub label: String,
    pub observed: u64,
    pub expected: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Outcome of the window-embedding test.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingReport {
    pub steps: u64,
    pub sigma_events: u64,
    pub sigma_fraction_first_half: f64,
    pub sigma_fraction_second_half: f64,
    pub classes: Vec<ClassStat>,
    pub chi_square: f64,
    pub chi_dof: usize,
    pub chi_p_value: f64,
    pub alpha: f64,
    pub bonferroni_alpha: f64,
    pub pass: bool,
}

/// Runs the capped-removal chain and tests that, at the times the first
/// `window` coordinates change, the observed transition classes follow the
/// finite kernel with `mu = mu_l`. Each class is tested against its
/// conditional expectation (two-sided, Bonferroni-corrected at `alpha`).
pub fn check_embedding(
    params: &ChainParams,
    window: u64,
    mu_l: f64,
    steps: u64,
    seed: u64,
    alpha: f64,
) -> Result<EmbeddingReport> {
    let kernel = KernelKind::Modified { window, mu_l };
    let mut sim = Simulator::new(params.clone(), kernel, seed)?;
    let beta = params.beta();
    let lambda = params.lambda();

    // local mirror of the window coordinates
    let w = window as usize;
    let mut counts = vec![0u64; w + 1];
    let mut mass = 0u64;

    let mut observed: BTreeMap<WindowClass, u64> = BTreeMap::new();
    let mut expected: BTreeMap<WindowClass, f64> = BTreeMap::new();
    let mut variance: BTreeMap<WindowClass, f64> = BTreeMap::new();
    let mut sigma_events = 0u64;
    let mut sigma_first_half = 0u64;

    let w_new = beta * lambda;
    let w_mu = (1.0 - beta) * mu_l;
    for step in 0..steps {
        let mv = sim.step_once();
        let Some(class) = window_class(mv, window) else {
            continue;
        };
        // conditional class probabilities given a window event, from the
        // pre-move window state
        let z = w_new + w_mu + mass as f64;
        let mut push = |c: WindowClass, weight: f64| {
            if weight > 0.0 {
                let p = weight / z;
                *expected.entry(c).or_insert(0.0) += p;
                *variance.entry(c).or_insert(0.0) += p * (1.0 - p);
            }
        };
        push(WindowClass::NewSingleton, w_new);
        push(WindowClass::Insert, w_mu);
        for (i, &count) in counts.iter().enumerate().skip(1) {
            let block_mass = (i as u64 * count) as f64;
            if i < w {
                push(WindowClass::Grow(i as u64), beta * block_mass);
            } else {
                push(WindowClass::Exit, beta * block_mass);
            }
            push(WindowClass::Shrink(i as u64), (1.0 - beta) * block_mass);
        }
        *observed.entry(class).or_insert(0) += 1;
        sigma_events += 1;
        if step < steps / 2 {
            sigma_first_half += 1;
        }
        // apply the window effect of the move to the mirror
        match mv {
            Move::NewSingleton => {
                counts[1] += 1;
                mass += 1;
            }
            Move::Grow(i) if i < window => {
                counts[i as usize] -= 1;
                counts[i as usize + 1] += 1;
                mass += 1;
            }
            Move::Grow(i) => {
                debug_assert_eq!(i, window);
                counts[w] -= 1;
                mass -= window;
            }
            Move::Shrink(1) => {
                counts[1] -= 1;
                mass -= 1;
            }
            Move::Shrink(i) if i <= window => {
                counts[i as usize] -= 1;
                counts[i as usize - 1] += 1;
                mass -= 1;
            }
            Move::Shrink(i) => {
                debug_assert_eq!(i, window + 1);
                counts[w] += 1;
                mass += window;
            }
            Move::BoundaryInsert(l) => {
                debug_assert_eq!(l, window);
                counts[w] += 1;
                mass += window;
            }
            Move::BoundaryRemove(_) => unreachable!("not a capped-removal move"),
        }
    }
    for (i, &c) in counts.iter().enumerate().skip(1) {
        debug_assert_eq!(c, sim.count(i as u64), "window mirror out of sync");
    }

    let labels: BTreeSet<WindowClass> = expected
        .keys()
        .copied()
        .chain(observed.keys().copied())
        .collect();
    let mut classes = Vec::new();
    let mut min_p = 1.0f64;
    let mut tested = 0usize;
    for class in labels {
        let obs = observed.get(&class).copied().unwrap_or(0);
        let exp = expected.get(&class).copied().unwrap_or(0.0);
        let var = variance.get(&class).copied().unwrap_or(0.0);
        let z = if var > 0.0 {
            (obs as f64 - exp) / var.sqrt()
        } else {
            0.0
        };
        let p_value = erfc(z.abs() / std::f64::consts::SQRT_2);
        if exp >= MIN_EXPECTED_PER_CELL {
            min_p = min_p.min(p_value);
            tested += 1;
        }
        let label = match class {
            WindowClass::NewSingleton => "new_singleton".to_string(),
            WindowClass::Grow(i) => format!("grow_{i}"),
            WindowClass::Exit => "exit".to_string(),
            WindowClass::Shrink(i) => format!("shrink_{i}"),
            WindowClass::Insert => "insert".to_string(),
        };
        classes.push(ClassStat {
            label,
            observed: obs,
            expected: exp,
            z,
            p_value,
        });
    }
    // whole-table chi-square over the same cells
    let observed_map: BTreeMap<u64, u64> = classes
        .iter()
        .enumerate()
        .map(|(k, c)| (k as u64, c.observed))
        .collect();
    let target: Vec<(u64, f64)> = classes
        .iter()
        .enumerate()
        .map(|(k, c)| (k as u64, c.expected / sigma_events.max(1) as f64))
        .collect();
    let chi = chi_square(&observed_map, sigma_events, &target)?;
    let bonferroni_alpha = alpha / tested.max(1) as f64;
    let half = (steps / 2).max(1) as f64;
    Ok(EmbeddingReport {
        steps,
        sigma_events,
        sigma_fraction_first_half: sigma_first_half as f64 / half,
        sigma_fraction_second_half: (sigma_events - sigma_first_half) as f64 / half,
        classes,
        chi_square: chi.statistic,
        chi_dof: chi.dof,
        chi_p_value: chi.p_value,
        alpha,
        bonferroni_alpha,
        pass: min_p >= bonferroni_alpha,
    })
}

/// Outcome of the long-run subcritical check.
#[derive(Debug, Clone, Serialize)]
pub struct SubcriticalReport {
    pub steps: u64,
    pub burn_in: u64,
    pub tv_norm: f64,
    pub tv_blocks: f64,
    pub marginal_tvs: Vec<f64>,
    pub item_ratios: Vec<f64>,
    pub steps_per_second: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Long-run empirical laws of the subcritical chain against the closed
/// forms: total items against the tilted Negative Binomial, block count
/// against the augmented-Poisson law, the first two marginals against the
/// enumerated stationary marginals, and the per-size item expectations
/// against their closed form.
pub fn check_subcritical_stationarity(
    params: &ChainParams,
    steps: u64,
    burn_in: u64,
    seed: u64,
    tolerance: f64,
) -> Result<SubcriticalReport> {
    let law = LimitLaw::new(params.beta(), params.lambda())?;
    law.require_subcritical()?;
    let mut sim = Simulator::new(params.clone(), KernelKind::Bdpu, seed)?;
    let mut hist_norm: Vec<u64> = vec![0; 64];
    let mut hist_blocks: Vec<u64> = vec![0; 64];
    let mut hist_m: [Vec<u64>; 2] = [vec![0; 64], vec![0; 64]];
    const TRACKED: u64 = 5;
    let mut item_sums = [0u64; TRACKED as usize + 1];

    let started = std::time::Instant::now();
    for _ in 0..burn_in {
        sim.step_once();
    }
    let samples = steps - burn_in;
    for _ in 0..samples {
        sim.step_once();
        bump(&mut hist_norm, sim.norm());
        bump(&mut hist_blocks, sim.block_count());
        bump(&mut hist_m[0], sim.count(1));
        bump(&mut hist_m[1], sim.count(2));
        for i in 1..=TRACKED {
            item_sums[i as usize] += sim.count(i);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();

    // targets
    let norm_target = pmf_table(|n| tilted_nb_pmf(n, &law), 400)?;
    let blocks_target = pmf_table(|k| k_pmf(k, &law), 400)?;
    let (tv_norm, _) = tv_distance(&to_map(&hist_norm), samples, &norm_target);
    let (tv_blocks, _) = tv_distance(&to_map(&hist_blocks), samples, &blocks_target);

    // enumerated stationary marginals of m_1 and m_2
    let mut marginal: [BTreeMap<u64, f64>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for n in 0..=40u64 {
        for m in partitions_of_norm(n) {
            let p = log_pi(&m, &law)?.exp();
            *marginal[0].entry(m.count(1)).or_insert(0.0) += p;
            *marginal[1].entry(m.count(2)).or_insert(0.0) += p;
        }
    }
    let mut marginal_tvs = Vec::new();
    for (hist, target) in hist_m.iter().zip(&marginal) {
        let table: Vec<(u64, f64)> = target.iter().map(|(&v, &p)| (v, p)).collect();
        let (tv, _) = tv_distance(&to_map(hist), samples, &table);
        marginal_tvs.push(tv);
    }

    let item_ratios: Vec<f64> = (1..=TRACKED)
        .map(|i| {
            let empirical = i as f64 * item_sums[i as usize] as f64 / samples as f64;
            empirical / expected_items(&law, i).unwrap()
        })
        .collect();

    let pass = tv_norm < tolerance && tv_blocks < tolerance;
    Ok(SubcriticalReport {
        steps,
        burn_in,
        tv_norm,
        tv_blocks,
        marginal_tvs,
        item_ratios,
        steps_per_second: steps as f64 / elapsed,
        tolerance,
        pass,
    })
}

fn bump(hist: &mut Vec<u64>, value: u64) {
    let idx = value as usize;
    if idx >= hist.len() {
        hist.resize(idx + 1, 0);
    }
    hist[idx] += 1;
}

fn to_map(hist: &[u64]) -> BTreeMap<u64, u64> {
    hist.iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(v, &c)| (v as u64, c))
        .collect()
}

/// Tabulates a pmf until its tail mass drops below `1e-12` (or `max_n`).
fn pmf_table(pmf: impl Fn(u64) -> Result<f64>, max_n: u64) -> Result<Vec<(u64, f64)>> {
    let mut table = Vec::new();
    let mut mass = 0.0;
    for n in 0..=max_n {
        let p = pmf(n)?;
        table.push((n, p));
        mass += p;
        if 1.0 - mass < 1e-12 && n > 2 {
            break;
        }
    }
    Ok(table)
}

/// Outcome of the replica-based supercritical check.
#[derive(Debug, Clone, Serialize)]
pub struct SupercriticalReport {
    pub horizon: u64,
    pub replicas: u64,
    pub marginal_tvs: Vec<(u64, f64)>,
    pub corr_m1_m2: f64,
    pub mean_blocks: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Across independent replicas at a fixed horizon, tests the first marginals
/// against independent Poissons of mean `lambda / i` and the correlation of
/// the first two counts against zero.
pub fn check_supercritical_limit(
    params: &ChainParams,
    horizon: u64,
    replicas: u64,
    seed: u64,
    tolerance: f64,
) -> Result<SupercriticalReport> {
    const TRACKED: usize = 5;
    let law = LimitLaw::new(params.beta(), params.lambda())?;
    if law.regime() != Regime::Supercritical {
        return Err(Error::invalid(
            "beta",
            "supercritical check needs beta >= 1/2",
        ));
    }
    let per_replica = par_map_collect(replicas, |r| {
        let mut sim = Simulator::with_stream(params.clone(), KernelKind::Bdpu, seed, r)
            .expect("validated params");
        for _ in 0..horizon {
            sim.step_once();
        }
        let mut counts = [0u64; TRACKED];
        for (k, slot) in counts.iter_mut().enumerate() {
            *slot = sim.count(k as u64 + 1);
        }
        (counts, sim.block_count())
    });

    let mut hists: Vec<BTreeMap<u64, u64>> = vec![BTreeMap::new(); TRACKED];
    let (mut s1, mut s2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut blocks_sum = 0.0;
    for (counts, blocks) in &per_replica {
        for (k, &c) in counts.iter().enumerate() {
            *hists[k].entry(c).or_insert(0) += 1;
        }
        let (a, b) = (counts[0] as f64, counts[1] as f64);
        s1 += a;
        s2 += b;
        s11 += a * a;
        s22 += b * b;
        s12 += a * b;
        blocks_sum += *blocks as f64;
    }
    let nf = replicas as f64;
    let cov = s12 / nf - (s1 / nf) * (s2 / nf);
    let var1 = s11 / nf - (s1 / nf) * (s1 / nf);
    let var2 = s22 / nf - (s2 / nf) * (s2 / nf);
    let corr = cov / (var1 * var2).sqrt().max(f64::MIN_POSITIVE);

    let mut marginal_tvs = Vec::new();
    let mut pass = corr.abs() <= 5.0 / nf.sqrt();
    for (k, hist) in hists.iter().enumerate() {
        let i = k as u64 + 1;
        let mean = law.poisson_mean(i);
        let target = pmf_table(|v| Ok(log_poisson(v, mean).exp()), 200)?;
        let (tv, _) = tv_distance(hist, replicas, &target);
        if i == 1 {
            pass &= tv < tolerance;
        }
        marginal_tvs.push((i, tv));
    }
    Ok(SupercriticalReport {
        horizon,
        replicas,
        marginal_tvs,
        corr_m1_m2: corr,
        mean_blocks: blocks_sum / nf,
        tolerance,
        pass,
    })
}

/// At `beta = 1` the chain only samples, so after exactly `n` steps the
/// state is a partition of `n` with the Ewens law. Chi-square across all
/// partitions of `n` over seeded replicas.
pub fn check_esf_exact(
    n: u64,
    lambda: f64,
    replicas: u64,
    seed: u64,
    alpha: f64,
) -> Result<FitReport> {
    let params = ChainParams::infinite(1.0, lambda)?;
    let partitions = partitions_of_norm(n);
    let index: HashMap<AllelicPartition, u64> = partitions
        .iter()
        .enumerate()
        .map(|(k, m)| (m.clone(), k as u64))
        .collect();
    let target: Vec<(u64, f64)> = partitions
        .iter()
        .enumerate()
        .map(|(k, m)| (k as u64, crate::stationary::esf(n, m, lambda)))
        .collect();
    let outcomes = par_map_collect(replicas, |r| {
        let mut sim = Simulator::with_stream(params.clone(), KernelKind::Bdpu, seed, r)
            .expect("validated params");
        for _ in 0..n {
            sim.step_once();
        }
        index[&sim.state()]
    });
    let mut observed = BTreeMap::new();
    for k in outcomes {
        *observed.entry(k).or_insert(0u64) += 1;
    }
    let chi = chi_square(&observed, replicas, &target)?;
    let (tv, truncation_mass) = tv_distance(&observed, replicas, &target);
    Ok(FitReport {
        sample_size: replicas,
        tv,
        chi_square: chi.statistic,
        dof: chi.dof,
        p_value: chi.p_value,
        truncation_mass,
        pass: chi.p_value > alpha,
    })
}

/// Outcome of the particle/partition equivalence check.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub states_tested: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Pushes the particle kernel forward through the induced partition and
/// compares the aggregated move probabilities with the partition kernel,
/// exactly.
pub fn check_particle_equivalence(
    params: &ChainParams,
    num_states: usize,
    max_len: usize,
    seed: u64,
    tolerance: f64,
) -> Result<EquivalenceReport> {
    let mut rng = stream_rng(seed, 0);
    let mut max_violation: f64 = 0.0;
    for _ in 0..num_states {
        let len = rng.random_range(0..=max_len);
        let alphabet = (len / 3).max(1) as u64;
        let labels: Vec<u64> = (0..len).map(|_| rng.random_range(0..alphabet)).collect();
        let x = ParticleState::from_labels(labels);
        let m = x.induced_partition();
        let dist = bdpu_transitions(&m, params)?;

        let mut aggregated: HashMap<AllelicPartition, f64> = HashMap::new();
        for (x2, p) in particle_transitions(&x, params)? {
            *aggregated.entry(x2.induced_partition()).or_insert(0.0) += p;
        }
        let mut matched_mass = 0.0;
        for &(mv, prob) in dist.moves() {
            let next = m.apply(mv)?;
            let pushed = aggregated.get(&next).copied().unwrap_or(0.0);
            matched_mass += pushed;
            let diff = (pushed - prob).abs() / prob.max(f64::MIN_POSITIVE);
            max_violation = max_violation.max(diff);
        }
        // every particle outcome must land on a kernel move
        let total: f64 = aggregated.values().sum();
        max_violation = max_violation.max((total - matched_mass).abs());
    }
    Ok(EquivalenceReport {
        states_tested: num_states,
        max_violation,
        tolerance,
        pass: max_violation <= tolerance,
    })
}

/// One row of the phase diagram.
#[derive(Debug, Clone, Serialize)]
pub struct PhasePoint {
    pub beta: f64,
    pub mean_blocks: f64,
    pub slope_vs_log_h: f64,
    pub diagnostic_tv: f64,
}

/// Summarizes the growth of the block count at one `beta`: its mean at the
/// horizon, the regression slope of the mean block count on `ln h` over
/// geometric checkpoints, and a stationarity diagnostic (total items against
/// the tilted Negative Binomial below the transition, first marginal against
/// Poisson at or above it).
pub fn phase_point(
    beta: f64,
    lambda: f64,
    horizon: u64,
    replicas: u64,
    seed: u64,
) -> Result<PhasePoint> {
    let params = ChainParams::infinite(beta, lambda)?;
    let law = LimitLaw::new(beta, lambda)?;
    let mut checkpoints = Vec::new();
    let mut h = horizon;
    while h >= 8 && checkpoints.len() < 6 {
        checkpoints.push(h);
        h /= 2;
    }
    checkpoints.reverse();
    if checkpoints.is_empty() {
        return Err(Error::invalid("horizon", "must be at least 8"));
    }
    let cps = checkpoints.clone();
    let per_replica = par_map_collect(replicas, move |r| {
        let mut sim = Simulator::with_stream(params.clone(), KernelKind::Bdpu, seed, r)
            .expect("validated params");
        let mut blocks_at = Vec::with_capacity(cps.len());
        let mut done = 1u64;
        sim.step_once();
        // the norm flips parity every step, so sample the final two steps
        // to cover both parity classes
        let mut norm_before_last = 0;
        for &cp in &cps {
            for _ in done..cp {
                norm_before_last = sim.norm();
                sim.step_once();
            }
            done = cp;
            blocks_at.push(sim.block_count());
        }
        (blocks_at, [norm_before_last, sim.norm()], sim.count(1))
    });

    let nf = replicas as f64;
    let mut mean_blocks_at = vec![0.0; checkpoints.len()];
    let mut final_norm_hist: BTreeMap<u64, u64> = BTreeMap::new();
    let mut final_m1_hist: BTreeMap<u64, u64> = BTreeMap::new();
    for (blocks_at, norms, m1) in &per_replica {
        for (k, &b) in blocks_at.iter().enumerate() {
            mean_blocks_at[k] += b as f64 / nf;
        }
        for norm in norms {
            *final_norm_hist.entry(*norm).or_insert(0) += 1;
        }
        *final_m1_hist.entry(*m1).or_insert(0) += 1;
    }
    // least-squares slope of mean block count on ln h
    let xs: Vec<f64> = checkpoints.iter().map(|&c| (c as f64).ln()).collect();
    let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
    let ybar = mean_blocks_at.iter().sum::<f64>() / xs.len() as f64;
    let sxy: f64 = xs
        .iter()
        .zip(&mean_blocks_at)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let slope = sxy / sxx;

    let diagnostic_tv = match law.regime() {
        Regime::Subcritical => {
            let target = pmf_table(|v| tilted_nb_pmf(v, &law), 2000)?;
            tv_distance(&final_norm_hist, 2 * replicas, &target).0
        }
        Regime::Supercritical => {
            let target = pmf_table(|v| Ok(log_poisson(v, lambda).exp()), 400)?;
            tv_distance(&final_m1_hist, replicas, &target).0
        }
    };
    Ok(PhasePoint {
        beta,
        mean_blocks: *mean_blocks_at.last().unwrap(),
        slope_vs_log_h: slope,
        diagnostic_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::theta_closed_form;

    #[test]
    fn tv_distance_edge_cases() {
        let mut obs = BTreeMap::new();
        obs.insert(0u64, 50u64);
        obs.insert(1, 50);
        let target = vec![(0u64, 0.5), (1u64, 0.5)];
        let (tv, trunc) = tv_distance(&obs, 100, &target);
        assert!(tv.abs() < 1e-15);
        assert!(trunc.abs() < 1e-15);
        // disjoint supports
        let target = vec![(5u64, 1.0)];
        let (tv, _) = tv_distance(&obs, 100, &target);
        assert!((tv - 1.0).abs() < 1e-15);
    }

    #[test]
    fn chi_square_accepts_its_own_law_and_rejects_another() {
        let mut rng = stream_rng(31, 0);
        let mut obs = BTreeMap::new();
        let n = 100_000u64;
        for _ in 0..n {
            *obs.entry(crate::stationary::sample_poisson(1.0, &mut rng))
                .or_insert(0u64) += 1;
        }
        let target: Vec<(u64, f64)> = (0..20).map(|k| (k, log_poisson(k, 1.0).exp())).collect();
        let fit = chi_square(&obs, n, &target).unwrap();
        assert!(fit.p_value > 1e-3, "p = {}", fit.p_value);
        let wrong: Vec<(u64, f64)> = (0..20).map(|k| (k, log_poisson(k, 1.15).exp())).collect();
        let bad = chi_square(&obs, n, &wrong).unwrap();
        assert!(bad.p_value < 1e-6, "p = {}", bad.p_value);
    }

    #[test]
    fn chi_square_requires_enough_cells() {
        let mut obs = BTreeMap::new();
        obs.insert(0u64, 3u64);
        let target = vec![(0u64, 1.0)];
        assert!(matches!(
            chi_square(&obs, 3, &target),
            Err(Error::InsufficientSample(_))
        ));
    }

    #[test]
    fn detailed_balance_holds_and_breaks_under_perturbation() {
        let params = ChainParams::infinite(0.3, 1.0).unwrap();
        let law = LimitLaw::new(0.3, 1.0).unwrap();
        let mut rng = stream_rng(17, 0);
        let states = random_states(&mut rng, 300, 20, None);
        let report = check_detailed_balance_pi(&law, &params, &states, 1e-12).unwrap();
        assert!(report.pass, "violation {}", report.max_detailed_violation);
        assert!(!report.degenerate);

        let skewed = LimitLaw::new(0.3, 1.01).unwrap();
        let bad = check_detailed_balance_pi(&skewed, &params, &states, 1e-12).unwrap();
        assert!(!bad.pass);
    }

    #[test]
    fn origin_only_detailed_balance_is_degenerate_but_exact() {
        let params = ChainParams::infinite(0.3, 1.0).unwrap();
        let law = LimitLaw::new(0.3, 1.0).unwrap();
        let states = vec![AllelicPartition::empty()];
        let report = check_detailed_balance_pi(&law, &params, &states, 1e-12).unwrap();
        assert!(report.pass && report.degenerate);
    }

    #[test]
    fn sample_size_chain_balances() {
        let params = ChainParams::infinite(0.3, 1.0).unwrap();
        let law = LimitLaw::new(0.3, 1.0).unwrap();
        let report = check_detailed_balance_sample_size(&law, &params, 50, 1e-12).unwrap();
        assert!(report.pass, "violation {}", report.max_detailed_violation);
        // a mismatched law breaks the balance
        let skewed = LimitLaw::new(0.3, 1.01).unwrap();
        let bad = check_detailed_balance_sample_size(&skewed, &params, 50, 1e-12).unwrap();
        assert!(!bad.pass);
    }

    #[test]
    fn global_balance_and_negative_control() {
        let params = ChainParams::maximal_count(0.4, 1.0, 2, 0.7).unwrap();
        let theta = theta_closed_form(2, 0.4, 1.0, 0.7).unwrap();
        let mut rng = stream_rng(23, 0);
        let states = random_states(&mut rng, 200, 15, Some(2));
        let report = check_global_balance_pi_l(&theta, &params, &states, 1e-11).unwrap();
        assert!(report.pass, "violation {}", report.max_global_violation);

        let perturbed = theta.perturbed(0.01);
        let bad = check_global_balance_pi_l(&perturbed, &params, &states, 1e-11).unwrap();
        assert!(!bad.pass);
    }

    #[test]
    fn origin_predecessors_at_capacity_two() {
        // the origin's predecessor set is exactly {1:1} and {2:1}
        let target = AllelicPartition::empty();
        let mut preds = BTreeSet::new();
        for mv in structural_moves_maximal(&target, 2) {
            if let Ok(p) = target.apply(mv) {
                preds.insert(p.to_field());
            }
        }
        let expected: BTreeSet<String> = ["1:1".to_string(), "2:1".to_string()].into();
        assert_eq!(preds, expected);
    }

    #[test]
    fn embedding_with_huge_window_sees_every_step() {
        let params = ChainParams::infinite(0.3, 1.0).unwrap();
        let report = check_embedding(&params, 40, 1e-12, 30_000, 3, 1e-3).unwrap();
        assert_eq!(report.sigma_events, report.steps);
        assert!(report.pass, "classes: {:#?}", report.classes);
    }

    #[test]
    fn embedding_small_window_matches_finite_kernel() {
        let params = ChainParams::infinite(0.35, 1.0).unwrap();
        let report = check_embedding(&params, 2, 0.25, 150_000, 11, 1e-3).unwrap();
        assert!(report.sigma_events > 10_000);
        assert!(
            report.pass,
            "chi p = {}, classes: {:#?}",
            report.chi_p_value, report.classes
        );
        assert!(report.sigma_fraction_first_half > 0.0);
        assert!(report.sigma_fraction_second_half > 0.0);
    }

    #[test]
    fn particle_pushforward_equals_partition_kernel() {
        let params = ChainParams::infinite(0.45, 1.3).unwrap();
        let report = check_particle_equivalence(&params, 100, 40, 7, 1e-12).unwrap();
        assert!(report.pass, "violation {}", report.max_violation);
    }

    #[test]
    fn phase_points_show_the_transition() {
        let below = phase_point(0.2, 1.0, 20_000, 100, 77).unwrap();
        let above = phase_point(0.8, 1.0, 20_000, 100, 77).unwrap();
        assert!(below.slope_vs_log_h.abs() < 0.15, "{:#?}", below);
        assert!(above.slope_vs_log_h > 0.5, "{:#?}", above);
        assert!(below.diagnostic_tv < 0.15);
        assert!(above.diagnostic_tv < 0.15);
        assert!(above.mean_blocks > below.mean_blocks);
    }

    #[test]
    fn esf_exactness_at_beta_one() {
        for lambda in [1.0, 1.35] {
            let report = check_esf_exact(5, lambda, 20_000, 12, 1e-3).unwrap();
            assert!(report.pass, "lambda={lambda}: p = {}", report.p_value);
        }
    }
}
