//! Validated chain parameters and capacity-indexed immigration schedules.

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Whether the chain runs on the full state space or with a maximal block
/// size `max_size`, where oversized blocks exit and blocks of the maximal
/// size immigrate with weight `(1 - beta) * mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Infinite,
    MaximalCount { max_size: u64, mu: f64 },
}

/// Parameters of a birth-death urn chain, validated on construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainParams {
    beta: f64,
    lambda: f64,
    #[serde(flatten)]
    mode: Mode,
}

fn validate_beta_lambda(beta: f64, lambda: f64) -> Result<()> {
    if beta.is_nan() || beta <= 0.0 || beta > 1.0 {
        return Err(Error::invalid(
            "beta",
            format!("must lie in (0, 1], got {beta}"),
        ));
    }
    if lambda.is_nan() || lambda <= 0.0 || lambda.is_infinite() {
        return Err(Error::invalid(
            "lambda",
            format!("must be > 0, got {lambda}"),
        ));
    }
    Ok(())
}

impl ChainParams {
    /// Parameters for the chain on the full state space; `beta` in `(0, 1]`.
    pub fn infinite(beta: f64, lambda: f64) -> Result<Self> {
        validate_beta_lambda(beta, lambda)?;
        Ok(Self {
            beta,
            lambda,
            mode: Mode::Infinite,
        })
    }

    /// Parameters for the finite chain with maximal block size `max_size`.
    ///
    /// `beta = 1` is accepted but degenerate: every `(1 - beta)`-weighted
    /// transition has probability zero and the chain only grows; see
    /// [`ChainParams::is_degenerate`].
    pub fn maximal_count(beta: f64, lambda: f64, max_size: u64, mu: f64) -> Result<Self> {
        validate_beta_lambda(beta, lambda)?;
        if max_size < 1 {
            return Err(Error::invalid("max_size", "must be >= 1"));
        }
        if mu.is_nan() || mu <= 0.0 || mu.is_infinite() {
            return Err(Error::invalid("mu", format!("must be > 0, got {mu}")));
        }
        Ok(Self {
            beta,
            lambda,
            mode: Mode::MaximalCount { max_size, mu },
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.mode, Mode::Infinite)
    }

    pub fn max_size(&self) -> Option<u64> {
        match self.mode {
            Mode::Infinite => None,
            Mode::MaximalCount { max_size, .. } => Some(max_size),
        }
    }

    pub fn mu(&self) -> Option<f64> {
        match self.mode {
            Mode::Infinite => None,
            Mode::MaximalCount { mu, .. } => Some(mu),
        }
    }

    /// True for the finite chain at `beta = 1`, where removals and
    /// immigration vanish and the chain only grows.
    pub fn is_degenerate(&self) -> bool {
        self.beta == 1.0 && !self.is_infinite()
    }

    /// The constant part of the normalizer: `beta * lambda` plus, for finite
    /// chains, `(1 - beta) * mu`.
    pub fn tilt_constant(&self) -> f64 {
        match self.mode {
            Mode::Infinite => self.beta * self.lambda,
            Mode::MaximalCount { mu, .. } => self.beta * self.lambda + (1.0 - self.beta) * mu,
        }
    }
}

impl<'de> Deserialize<'de> for ChainParams {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            beta: f64,
            lambda: f64,
            #[serde(flatten)]
            mode: Mode,
        }
        let raw = Raw::deserialize(deserializer)?;
        let params = match raw.mode {
            Mode::Infinite => ChainParams::infinite(raw.beta, raw.lambda),
            Mode::MaximalCount { max_size, mu } => {
                ChainParams::maximal_count(raw.beta, raw.lambda, max_size, mu)
            }
        };
        params.map_err(serde::de::Error::custom)
    }
}

/// A rule `L -> mu_L` for the immigration weight of the capacity-`L` chain.
///
/// The built-in rules are strictly decreasing with `L * mu_L -> 0`, the
/// regime in which the finite laws converge to the infinite ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MuSchedule {
    /// `mu_L = scale / L^2`
    InverseSquare { scale: f64 },
    /// `mu_L = scale / (L ln(L + 1))`
    InverseLog { scale: f64 },
    /// Explicit table `mu_1, mu_2, ...`; must be positive and strictly
    /// decreasing.
    Table { values: Vec<f64> },
}

impl MuSchedule {
    pub fn inverse_square(scale: f64) -> Result<Self> {
        if scale.is_nan() || scale <= 0.0 || scale.is_infinite() {
            return Err(Error::invalid("scale", "must be > 0"));
        }
        Ok(MuSchedule::InverseSquare { scale })
    }

    pub fn inverse_log(scale: f64) -> Result<Self> {
        if scale.is_nan() || scale <= 0.0 || scale.is_infinite() {
            return Err(Error::invalid("scale", "must be > 0"));
        }
        Ok(MuSchedule::InverseLog { scale })
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("table", "must not be empty"));
        }
        for w in values.windows(2) {
            if w[1].is_nan() || w[1] >= w[0] {
                return Err(Error::invalid("table", "must be strictly decreasing"));
            }
        }
        if values
            .iter()
            .any(|&v| v.is_nan() || v <= 0.0 || v.is_infinite())
        {
            return Err(Error::invalid("table", "entries must be > 0"));
        }
        Ok(MuSchedule::Table { values })
    }

    /// `mu_L` for capacity `l >= 1`.
    pub fn mu(&self, l: u64) -> Result<f64> {
        if l < 1 {
            return Err(Error::invalid("capacity", "must be >= 1"));
        }
        match self {
            MuSchedule::InverseSquare { scale } => Ok(scale / (l as f64 * l as f64)),
            MuSchedule::InverseLog { scale } => Ok(scale / (l as f64 * ((l + 1) as f64).ln())),
            MuSchedule::Table { values } => {
                values.get((l - 1) as usize).copied().ok_or_else(|| {
                    Error::invalid("capacity", format!("table has no entry for L = {l}"))
                })
            }
        }
    }
}
