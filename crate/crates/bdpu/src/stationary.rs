//! Closed-form stationary and limiting laws of the urn chains.
//!
//! Everything is evaluated in log space with log-gamma so states with
//! thousands of items stay representable; probabilities only materialize at
//! the boundary. The component rates `theta_i` of the finite chain come in
//! two closed forms (generic `beta` and the double-root branch at
//! `beta = 1/2`), both evaluated through `exp_m1` ratios so nothing blows up
//! for large capacities or `beta` near `1/2`.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::partition::AllelicPartition;

const HALF_BETA_EPS: f64 = 1e-9;

/// `ln Po(k; mean)`.
pub(crate) fn log_poisson(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_gamma(k as f64 + 1.0)
}

/// Poisson sample by inversion; exact for the small means used here.
pub(crate) fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    debug_assert!((0.0..100.0).contains(&mean));
    if mean == 0.0 {
        return 0;
    }
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    while u >= cdf && k < 10_000 {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

/// `(1 - x^a) / (1 - x^b)` for `0 < x < 1`, stable when `x` is close to 1.
fn one_minus_pow_ratio(ln_x: f64, a: f64, b: f64) -> f64 {
    f64::exp_m1(a * ln_x) / f64::exp_m1(b * ln_x)
}

/// The component rates `theta_1..theta_L` of the finite chain, each a convex
/// combination `theta_i = w_i lambda + (1 - w_i) mu`.
///
/// The mixing weight `w_i` decreases in `i`: the left entry rate `lambda`
/// dominates small sizes, the right entry rate `mu` dominates sizes near the
/// capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    max_size: u64,
    beta: f64,
    lambda: f64,
    mu: f64,
    thetas: Vec<f64>,
    weights: Vec<f64>,
    sum_thetas: f64,
    sum_rates: f64,
}

impl ThetaVector {
    pub(crate) fn from_parts(
        max_size: u64,
        beta: f64,
        lambda: f64,
        mu: f64,
        thetas: Vec<f64>,
        weights: Vec<f64>,
    ) -> Self {
        let sum_thetas = thetas.iter().sum();
        let sum_rates = thetas
            .iter()
            .enumerate()
            .map(|(k, t)| t / (k + 1) as f64)
            .sum();
        Self {
            max_size,
            beta,
            lambda,
            mu,
            thetas,
            weights,
            sum_thetas,
            sum_rates,
        }
    }

    pub fn max_size(&self) -> u64 {
        self.max_size
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `theta_i`, 1-based.
    pub fn theta(&self, i: u64) -> f64 {
        self.thetas[(i - 1) as usize]
    }

    /// `w_i`, 1-based.
    pub fn weight(&self, i: u64) -> f64 {
        self.weights[(i - 1) as usize]
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum_i theta_i` over the components.
    pub fn component_sum(&self) -> f64 {
        self.sum_thetas
    }

    /// `sum_i theta_i / i`, the total Poisson rate of the product law.
    pub fn rate_sum(&self) -> f64 {
        self.sum_rates
    }

    /// Rates scaled by `1 + rel`; the chain parameters are kept, so the
    /// result deliberately violates the balance equations (negative-control
    /// input for the checkers).
    pub fn perturbed(&self, rel: f64) -> ThetaVector {
        let thetas: Vec<f64> = self.thetas.iter().map(|t| t * (1.0 + rel)).collect();
        let weights = if (self.lambda - self.mu).abs() > 1e-300 {
            thetas
                .iter()
                .map(|t| (t - self.mu) / (self.lambda - self.mu))
                .collect()
        } else {
            self.weights.clone()
        };
        Self::from_parts(
            self.max_size,
            self.beta,
            self.lambda,
            self.mu,
            thetas,
            weights,
        )
    }
}

fn validate_theta_inputs(max_size: u64, beta: f64, lambda: f64, mu: f64) -> Result<()> {
    if max_size < 1 {
        return Err(Error::invalid("max_size", "must be >= 1"));
    }
    if beta.is_nan() || beta <= 0.0 || beta >= 1.0 {
        return Err(Error::invalid("beta", "must lie in (0, 1)"));
    }
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::invalid("lambda", "must be > 0"));
    }
    if mu.is_nan() || mu < 0.0 {
        return Err(Error::invalid("mu", "must be >= 0"));
    }
    Ok(())
}

/// Mixing weight `w_i(beta)` for capacity `max_size`.
fn mixing_weight(i: u64, max_size: u64, beta: f64) -> f64 {
    let l = max_size;
    if (1.0 - 2.0 * beta).abs() < HALF_BETA_EPS {
        return (l - i + 1) as f64 / (l + 1) as f64;
    }
    if beta < 0.5 {
        let ln_p = (beta / (1.0 - beta)).ln();
        (i as f64 * ln_p).exp() * one_minus_pow_ratio(ln_p, (l - i + 1) as f64, (l + 1) as f64)
    } else {
        let ln_r = ((1.0 - beta) / beta).ln();
        one_minus_pow_ratio(ln_r, (l - i + 1) as f64, (l + 1) as f64)
    }
}

/// Closed-form component rates of the finite chain.
pub fn theta_closed_form(max_size: u64, beta: f64, lambda: f64, mu: f64) -> Result<ThetaVector> {
    validate_theta_inputs(max_size, beta, lambda, mu)?;
    let weights: Vec<f64> = (1..=max_size)
        .map(|i| mixing_weight(i, max_size, beta))
        .collect();
    let thetas: Vec<f64> = weights
        .iter()
        .map(|w| w * lambda + (1.0 - w) * mu)
        .collect();
    Ok(ThetaVector::from_parts(
        max_size, beta, lambda, mu, thetas, weights,
    ))
}

/// Closed form for `sum_{i=1}^{L} theta_i`, without building the vector.
pub fn theta_sum_closed_form(max_size: u64, beta: f64, lambda: f64, mu: f64) -> Result<f64> {
    validate_theta_inputs(max_size, beta, lambda, mu)?;
    let l = max_size as f64;
    if (1.0 - 2.0 * beta).abs() < HALF_BETA_EPS {
        return Ok((lambda + mu) / 2.0 * l);
    }
    if beta < 0.5 {
        let p = beta / (1.0 - beta);
        let ln_p = p.ln();
        let tail = -f64::exp_m1((l + 1.0) * ln_p); // 1 - p^{L+1}
        let first = l * (mu - ((l + 1.0) * ln_p).exp() * lambda) / tail;
        let second = p / (1.0 - p) * (-f64::exp_m1(l * ln_p)) / tail * (lambda - mu);
        Ok(first + second)
    } else {
        let r = (1.0 - beta) / beta;
        let ln_r = r.ln();
        let tail = -f64::exp_m1((l + 1.0) * ln_r); // 1 - r^{L+1}
        let first = l * (lambda - ((l + 1.0) * ln_r).exp() * mu) / tail;
        let second = r / (1.0 - r) * (-f64::exp_m1(l * ln_r)) / tail * (mu - lambda);
        Ok(first + second)
    }
}

/// Log-mass of the finite chain's stationary law at `m`:
/// a product of Poissons `Po(m_i; theta_i / i)` tilted by
/// `(c0 + norm(m)) / (c0 + sum theta)` with `c0 = beta lambda + (1-beta) mu`.
pub fn log_pi_l(m: &AllelicPartition, theta: &ThetaVector) -> Result<f64> {
    if let Some(size) = m.max_size() {
        if size > theta.max_size {
            return Err(Error::StateExceedsCapacity {
                size,
                max_size: theta.max_size,
            });
        }
    }
    let c0 = theta.beta * theta.lambda + (1.0 - theta.beta) * theta.mu;
    let mut log = (c0 + m.norm() as f64).ln() - (c0 + theta.sum_thetas).ln() - theta.sum_rates;
    for (i, count) in m.iter() {
        let rate = theta.theta(i) / i as f64;
        log += count as f64 * rate.ln() - ln_gamma(count as f64 + 1.0);
    }
    Ok(log)
}

/// Which side of the phase transition the parameters sit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `beta < 1/2`: stationary, with an explicit tilted product law.
    Subcritical,
    /// `beta >= 1/2`: no stationary law; the counts converge to independent
    /// Poissons of mean `lambda / i`.
    Supercritical,
}

/// Limiting law of the infinite chain at the given parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitLaw {
    beta: f64,
    lambda: f64,
    p: f64,
}

impl LimitLaw {
    pub fn new(beta: f64, lambda: f64) -> Result<Self> {
        if beta.is_nan() || beta <= 0.0 || beta > 1.0 {
            return Err(Error::invalid("beta", "must lie in (0, 1]"));
        }
        if lambda.is_nan() || lambda <= 0.0 {
            return Err(Error::invalid("lambda", "must be > 0"));
        }
        Ok(Self {
            beta,
            lambda,
            p: beta / (1.0 - beta),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The geometric ratio `p = beta / (1 - beta)` (less than 1 exactly in
    /// the subcritical regime).
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn regime(&self) -> Regime {
        if self.beta < 0.5 {
            Regime::Subcritical
        } else {
            Regime::Supercritical
        }
    }

    /// Errors with [`Error::Regime`] unless `beta < 1/2`.
    pub fn require_subcritical(&self) -> Result<()> {
        match self.regime() {
            Regime::Subcritical => Ok(()),
            Regime::Supercritical => Err(Error::Regime(self.beta)),
        }
    }

    /// `theta_i`: `lambda p^i` below the transition, `lambda` at or above it.
    pub fn theta(&self, i: u64) -> f64 {
        match self.regime() {
            Regime::Subcritical => self.lambda * (i as f64 * self.p.ln()).exp(),
            Regime::Supercritical => self.lambda,
        }
    }

    /// Poisson mean of the `i`-th count in the limit, `theta_i / i`.
    pub fn poisson_mean(&self, i: u64) -> f64 {
        self.theta(i) / i as f64
    }

    /// `sum_i theta_i = beta lambda / (1 - 2 beta)` (subcritical only).
    pub fn theta_sum(&self) -> Result<f64> {
        self.require_subcritical()?;
        Ok(self.beta * self.lambda / (1.0 - 2.0 * self.beta))
    }

    /// The stationary law's normalizing constant
    /// `1/C = beta lambda + beta lambda / (1 - 2 beta)`.
    pub fn normalizer(&self) -> Result<f64> {
        Ok(self.beta * self.lambda + self.theta_sum()?)
    }

    /// `sum_i theta_i / i = -lambda ln(1 - p)`, the total Poisson rate.
    pub fn rate_sum(&self) -> Result<f64> {
        self.require_subcritical()?;
        Ok(-self.lambda * (-self.p).ln_1p())
    }

    /// Smallest cutoff `c` whose Poisson-rate tail `sum_{i > c} theta_i / i`
    /// is below `tol`.
    pub fn truncation_cutoff(&self, tol: f64) -> Result<u64> {
        self.require_subcritical()?;
        let mut c = 1u64;
        loop {
            // tail bound lambda p^{c+1} / ((c+1)(1-p))
            let bound = self.lambda * ((c + 1) as f64 * self.p.ln()).exp()
                / ((c + 1) as f64 * (1.0 - self.p));
            if bound < tol || c > 1_000_000 {
                return Ok(c);
            }
            c += 1;
        }
    }

    /// Poisson-rate mass above the cutoff (the sampler's discarded mass).
    pub fn truncated_rate_mass(&self, cutoff: u64) -> Result<f64> {
        let total = self.rate_sum()?;
        let kept: f64 = (1..=cutoff).map(|i| self.theta(i) / i as f64).sum();
        Ok((total - kept).max(0.0))
    }
}

/// Log-mass of the subcritical stationary law at `m`: the infinite tilted
/// Poisson product. Empty coordinates contribute the closed-form total rate
/// `lambda ln(1 - p)`.
pub fn log_pi(m: &AllelicPartition, law: &LimitLaw) -> Result<f64> {
    law.require_subcritical()?;
    let ln_p = law.p.ln();
    let mut log = (law.beta * law.lambda + m.norm() as f64).ln() - law.normalizer()?.ln()
        + law.lambda * (-law.p).ln_1p();
    for (i, count) in m.iter() {
        let ln_rate = law.lambda.ln() + i as f64 * ln_p - (i as f64).ln();
        log += count as f64 * ln_rate - ln_gamma(count as f64 + 1.0);
    }
    Ok(log)
}

/// Mass function of the augmentation index `J`: a geometric with ratio `p`,
/// half of its mass at zero reallocated across the positive support.
pub fn j_pmf(j: u64, law: &LimitLaw) -> Result<f64> {
    law.require_subcritical()?;
    let p = law.p;
    if j == 0 {
        Ok((1.0 - p) / 2.0)
    } else {
        Ok((1.0 - p) * (j as f64 * p.ln()).exp() / (2.0 * law.beta))
    }
}

/// Cutoff and discarded mass used by [`sample_augmented_poisson`].
pub fn augmented_truncation(law: &LimitLaw, tol: f64) -> Result<(u64, f64)> {
    let cutoff = law.truncation_cutoff(tol)?;
    let kept_j: f64 = (0..=cutoff).map(|j| j_pmf(j, law).unwrap()).sum();
    Ok((
        cutoff,
        law.truncated_rate_mass(cutoff)? + (1.0 - kept_j).max(0.0),
    ))
}

/// One exact draw from the subcritical stationary law: independent Poisson
/// counts `m_i ~ Po(theta_i / i)` plus one extra block at a random size `J`
/// (`J = 0` adds nothing). Coordinates are truncated where their total
/// remaining rate drops below `1e-12`.
pub fn sample_augmented_poisson<R: Rng + ?Sized>(
    law: &LimitLaw,
    rng: &mut R,
) -> Result<AllelicPartition> {
    law.require_subcritical()?;
    let cutoff = law.truncation_cutoff(1e-12)?;
    let mut pairs = Vec::new();
    for i in 1..=cutoff {
        let k = sample_poisson(law.poisson_mean(i), rng);
        if k > 0 {
            pairs.push((i, k));
        }
    }
    let mut m = AllelicPartition::from_pairs(pairs)?;
    let u: f64 = rng.random();
    let mut acc = j_pmf(0, law)?;
    let mut j = 0u64;
    while u >= acc && j < cutoff {
        j += 1;
        acc += j_pmf(j, law)?;
    }
    if j > 0 {
        m.apply_in_place(crate::partition::Move::BoundaryInsert(j))?;
    }
    Ok(m)
}

/// Mass function of the stationary number of blocks `K`: a Poisson of mean
/// `-lambda ln(1 - p)` plus an independent indicator `1{J >= 1}`.
pub fn k_pmf(k: u64, law: &LimitLaw) -> Result<f64> {
    let rate = law.rate_sum()?;
    let p0 = j_pmf(0, law)?;
    let mut mass = log_poisson(k, rate).exp() * p0;
    if k >= 1 {
        mass += log_poisson(k - 1, rate).exp() * (1.0 - p0);
    }
    Ok(mass)
}

/// `E[K] = P(J >= 1) - lambda ln(1 - p)`.
pub fn k_mean(law: &LimitLaw) -> Result<f64> {
    Ok(law.rate_sum()? + (1.0 - j_pmf(0, law)?))
}

/// Log of the Ewens sampling formula `ESF_n(m)` with mutation rate `lambda`.
/// Off the constraint `norm(m) = n` the mass is zero (`-inf`); `ESF_0`
/// gives probability one to the empty partition.
pub fn log_esf(n: u64, m: &AllelicPartition, lambda: f64) -> f64 {
    debug_assert!(lambda > 0.0);
    if m.norm() != n {
        return f64::NEG_INFINITY;
    }
    let mut log = ln_gamma(n as f64 + 1.0) + ln_gamma(lambda) - ln_gamma(lambda + n as f64);
    for (i, count) in m.iter() {
        log += count as f64 * (lambda.ln() - (i as f64).ln()) - ln_gamma(count as f64 + 1.0);
    }
    log
}

/// `ESF_n(m)` as a probability.
pub fn esf(n: u64, m: &AllelicPartition, lambda: f64) -> f64 {
    log_esf(n, m, lambda).exp()
}

fn log_negative_binomial(n: u64, r: f64, p: f64) -> f64 {
    ln_gamma(r + n as f64) - ln_gamma(n as f64 + 1.0) - ln_gamma(r)
        + n as f64 * p.ln()
        + r * (-p).ln_1p()
}

/// Log-mass of the stationary sample size: a Negative Binomial
/// `NB(n; lambda, p)` tilted by `(beta lambda + n)`, normalized by
/// `2 beta lambda / (1 - p)`.
pub fn tilted_nb_log_pmf(n: u64, law: &LimitLaw) -> Result<f64> {
    law.require_subcritical()?;
    let z = 2.0 * law.beta * law.lambda / (1.0 - law.p);
    Ok((law.beta * law.lambda + n as f64).ln() - z.ln()
        + log_negative_binomial(n, law.lambda, law.p))
}

/// `mu(n)` as a probability.
pub fn tilted_nb_pmf(n: u64, law: &LimitLaw) -> Result<f64> {
    Ok(tilted_nb_log_pmf(n, law)?.exp())
}

/// Mean of the tilted Negative Binomial,
/// `(beta lambda m_1 + m_2) / (beta lambda + m_1)` in terms of the base NB
/// moments `m_1, m_2`.
pub fn tilted_nb_mean(law: &LimitLaw) -> Result<f64> {
    law.require_subcritical()?;
    let p = law.p;
    let m1 = law.lambda * p / (1.0 - p);
    let var = law.lambda * p / ((1.0 - p) * (1.0 - p));
    let m2 = var + m1 * m1;
    let c = law.beta * law.lambda;
    Ok((c * m1 + m2) / (c + m1))
}

/// Both sides of the mixture identity at `m`:
/// `(pi(m), ESF_n(restriction of m) * mu(n))` with `n = norm(m)`.
pub fn mixture_identity(m: &AllelicPartition, law: &LimitLaw) -> Result<(f64, f64)> {
    let n = m.norm();
    let lhs = log_pi(m, law)?.exp();
    let rhs = (log_esf(n, &m.restrict(n.max(1)), law.lambda) + tilted_nb_log_pmf(n, law)?).exp();
    Ok((lhs, rhs))
}

/// Stationary expectation of the items in size-`i` blocks:
/// `E[i m_i] = theta_i (beta lambda + S + i) / (beta lambda + S)` with
/// `S = sum_j theta_j`. The ratio `E[i m_i] / theta_i` is constant in `i`
/// only up to the vanishing tilt correction `i / (beta lambda + S)`.
pub fn expected_items(law: &LimitLaw, i: u64) -> Result<f64> {
    let s = law.theta_sum()?;
    let c = law.beta * law.lambda;
    Ok(law.theta(i) * (c + s + i as f64) / (c + s))
}
