//! The tridiagonal system behind the finite chain's component rates.
//!
//! The rates `theta_1..theta_L` solve `A theta = beta*lambda e_1 +
//! (1-beta)*mu e_L` where `A` has constant bands `(-beta, 1, -(1-beta))`.
//! This module provides the leading-minor determinants (recursion and closed
//! forms), a banded elimination solve used as the numeric oracle for the
//! closed forms, the first/last inverse-column entries, and the
//! capacity-monotonicity margin of the rates under a `mu` schedule.

use crate::error::{Error, Result};
use crate::params::MuSchedule;
use crate::stationary::ThetaVector;

/// The `L x L` system matrix with sub-diagonal `-beta`, unit diagonal, and
/// super-diagonal `-(1-beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TridiagonalSystem {
    size: u64,
    beta: f64,
}

impl TridiagonalSystem {
    pub fn new(size: u64, beta: f64) -> Result<Self> {
        if size < 1 {
            return Err(Error::invalid("size", "must be >= 1"));
        }
        if beta.is_nan() || beta <= 0.0 || beta >= 1.0 {
            return Err(Error::invalid("beta", "must lie in (0, 1)"));
        }
        Ok(Self { size, beta })
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Right-hand side `beta*lambda e_1 + (1-beta)*mu e_L`.
    pub fn rhs(&self, lambda: f64, mu: f64) -> Vec<f64> {
        let n = self.size as usize;
        let mut b = vec![0.0; n];
        b[0] += self.beta * lambda;
        b[n - 1] += (1.0 - self.beta) * mu;
        b
    }

    /// `A x` for a candidate solution.
    pub fn multiply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size as usize;
        assert_eq!(x.len(), n);
        let beta = self.beta;
        (0..n)
            .map(|i| {
                let mut v = x[i];
                if i > 0 {
                    v -= beta * x[i - 1];
                }
                if i + 1 < n {
                    v -= (1.0 - beta) * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// `max_i |(A theta - rhs)_i|`.
    pub fn residual_inf(&self, theta: &[f64], lambda: f64, mu: f64) -> f64 {
        let rhs = self.rhs(lambda, mu);
        self.multiply(theta)
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

const HALF_BETA_EPS: f64 = 1e-9;

/// Leading-minor determinant by the recursion
/// `d_l = d_{l-1} - beta (1-beta) d_{l-2}`, `d_0 = 1`, `d_1 = 1`.
pub fn determinant_recursion(l: u64, beta: f64) -> f64 {
    let c = beta * (1.0 - beta);
    let (mut prev, mut cur) = (1.0, 1.0); // d_0, d_1
    if l == 0 {
        return prev;
    }
    for _ in 2..=l {
        (prev, cur) = (cur, cur - c * prev);
    }
    cur
}

/// Closed-form determinant: `((1-beta)^{l+1} - beta^{l+1}) / (1 - 2 beta)`
/// away from `beta = 1/2`, `(l + 1) 2^{-l}` at the double root, `1` at the
/// boundary values `beta = 0, 1`.
pub fn determinant_closed_form(l: u64, beta: f64) -> f64 {
    if beta == 0.0 || beta == 1.0 {
        return 1.0;
    }
    let k = (l + 1) as f64;
    if (1.0 - 2.0 * beta).abs() < HALF_BETA_EPS {
        return k * 2f64.powi(-(l as i32));
    }
    if beta < 0.5 {
        // (1-beta)^{l+1} (1 - p^{l+1}) / (1 - 2 beta), p = beta/(1-beta) < 1
        let p = beta / (1.0 - beta);
        (1.0 - beta).powi(k as i32) * (-f64::exp_m1(k * p.ln())) / (1.0 - 2.0 * beta)
    } else {
        let r = (1.0 - beta) / beta;
        beta.powi(k as i32) * (-f64::exp_m1(k * r.ln())) / (2.0 * beta - 1.0)
    }
}

/// `ln d_l`, stable for large `l` where the determinant underflows.
pub fn determinant_log_closed_form(l: u64, beta: f64) -> f64 {
    if beta == 0.0 || beta == 1.0 {
        return 0.0;
    }
    let k = (l + 1) as f64;
    if (1.0 - 2.0 * beta).abs() < HALF_BETA_EPS {
        return k.ln() - (l as f64) * 2f64.ln();
    }
    if beta < 0.5 {
        let p = beta / (1.0 - beta);
        k * (1.0 - beta).ln() + (-f64::exp_m1(k * p.ln())).ln() - (1.0 - 2.0 * beta).ln()
    } else {
        let r = (1.0 - beta) / beta;
        k * beta.ln() + (-f64::exp_m1(k * r.ln())).ln() - (2.0 * beta - 1.0).ln()
    }
}

/// Solves the system by forward elimination and back substitution, and also
/// extracts the mixing weights `w_i` (the solution of `A w = beta e_1`), so
/// the result is built without touching any closed form.
pub fn solve_numeric(sys: &TridiagonalSystem, lambda: f64, mu: f64) -> Result<ThetaVector> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::invalid("lambda", "must be > 0"));
    }
    if mu.is_nan() || mu < 0.0 {
        return Err(Error::invalid("mu", "must be >= 0"));
    }
    let thetas = thomas_solve(sys, &sys.rhs(lambda, mu))?;
    let mut unit = vec![0.0; sys.size as usize];
    unit[0] = sys.beta;
    let weights = thomas_solve(sys, &unit)?;
    Ok(ThetaVector::from_parts(
        sys.size, sys.beta, lambda, mu, thetas, weights,
    ))
}

fn thomas_solve(sys: &TridiagonalSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = sys.size as usize;
    let beta = sys.beta;
    let sub = -beta;
    let sup = -(1.0 - beta);
    let mut diag: Vec<f64> = vec![1.0; n];
    let mut b = rhs.to_vec();
    for i in 1..n {
        let pivot = diag[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSystem {
                beta,
                size: sys.size,
            });
        }
        let factor = sub / pivot;
        diag[i] -= factor * sup;
        b[i] -= factor * b[i - 1];
    }
    if diag[n - 1] == 0.0 || !diag[n - 1].is_finite() {
        return Err(Error::SingularSystem {
            beta,
            size: sys.size,
        });
    }
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (b[i] - sup * x[i + 1]) / diag[i];
    }
    Ok(x)
}

/// The first- and last-column inverse entries
/// `(a_{i1}, a_{iL}) = (beta^{i-1} d_{L-i} / d_L, (1-beta)^{L-i} d_{i-1} / d_L)`.
///
/// They satisfy `beta a_{i1} + (1-beta) a_{iL} = 1` and reconstruct the rates
/// as `theta_i = beta a_{i1} lambda + (1-beta) a_{iL} mu`.
pub fn inverse_column_entries(l: u64, beta: f64, i: u64) -> Result<(f64, f64)> {
    if i < 1 || i > l {
        return Err(Error::invalid("index", "must satisfy 1 <= i <= L"));
    }
    let d_l = determinant_closed_form(l, beta);
    let a_i1 = beta.powi((i - 1) as i32) * determinant_closed_form(l - i, beta) / d_l;
    let a_il = (1.0 - beta).powi((l - i) as i32) * determinant_closed_form(i - 1, beta) / d_l;
    Ok((a_i1, a_il))
}

/// `theta_i^{(L)} - theta_i^{(L-1)}` where capacity `l` uses `mu_l` from the
/// schedule, evaluated by an exact rearrangement that avoids the subtractive
/// cancellation of the two nearly-equal rates.
pub fn monotonicity_margin(
    l: u64,
    i: u64,
    beta: f64,
    lambda: f64,
    schedule: &MuSchedule,
) -> Result<f64> {
    if l < 2 {
        return Err(Error::invalid("capacity", "needs L >= 2"));
    }
    if i < 1 || i > l - 1 {
        return Err(Error::invalid("index", "must satisfy 1 <= i <= L - 1"));
    }
    if beta.is_nan() || beta <= 0.0 || beta >= 1.0 {
        return Err(Error::invalid("beta", "must lie in (0, 1)"));
    }
    let mu_l = schedule.mu(l)?;
    let mu_prev = schedule.mu(l - 1)?;
    let dmu = mu_l - mu_prev;
    let lf = l as f64;
    if (1.0 - 2.0 * beta).abs() < HALF_BETA_EPS {
        return Ok(i as f64 * ((lambda - mu_prev) + lf * dmu) / (lf * (lf + 1.0)));
    }
    let margin = if beta < 0.5 {
        let p = beta / (1.0 - beta);
        let pl = p.powi(l as i32);
        let prefactor = (-f64::exp_m1(i as f64 * p.ln()))
            / ((1.0 - beta)
                * (-f64::exp_m1((l + 1) as f64 * p.ln()))
                * (-f64::exp_m1(lf * p.ln())));
        prefactor * ((1.0 - 2.0 * beta) * (lambda - mu_l) * pl + ((1.0 - beta) - beta * pl) * dmu)
    } else {
        let r = (1.0 - beta) / beta;
        let rl = r.powi(l as i32);
        let prefactor = r.powi((l - i) as i32) * (-f64::exp_m1(i as f64 * r.ln()))
            / (beta * (-f64::exp_m1((l + 1) as f64 * r.ln())) * (-f64::exp_m1(lf * r.ln())));
        prefactor * ((2.0 * beta - 1.0) * (lambda - mu_l) + (beta - (1.0 - beta) * rl) * dmu)
    };
    Ok(margin)
}

/// Scans capacities `2..=scan_max` and reports the smallest `L0` such that
/// every margin with `L in [L0, scan_max]` and `1 <= i <= L - 1` is
/// nonnegative. `None` means the margins are still negative at the top of
/// the scan range, i.e. no monotonicity threshold exists in range (for a
/// decreasing schedule this is the generic outcome when `beta < 1/2`).
pub fn monotonicity_threshold(
    beta: f64,
    lambda: f64,
    schedule: &MuSchedule,
    scan_max: u64,
) -> Result<Option<u64>> {
    if scan_max < 2 {
        return Err(Error::invalid("scan_max", "needs at least L = 2"));
    }
    let mut threshold = None;
    for l in (2..=scan_max).rev() {
        let ok = (1..l).all(|i| {
            monotonicity_margin(l, i, beta, lambda, schedule)
                .map(|m| m >= 0.0)
                .unwrap_or(false)
        });
        if !ok {
            break;
        }
        threshold = Some(l);
    }
    Ok(threshold)
}
