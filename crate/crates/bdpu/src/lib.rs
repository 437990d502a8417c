//! Birth-and-death Pólya urn chains on allelic partitions.
//!
//! The chain adds observations by the Pólya urn predictive rule and removes
//! uniformly chosen observations, with the birth probability driven by a
//! parameter `beta`. Its long-run behaviour switches at `beta = 1/2`: below
//! the transition the partition is stationary with an explicit tilted
//! Poisson product law (a mixture of Ewens sampling formulas over a tilted
//! Negative Binomial sample size); at or above it the block counts diverge
//! and the coordinates become asymptotically independent Poissons.
//!
//! The crate provides:
//!
//! * [`partition`] — the sparse partition state and its elementary moves;
//! * [`kernels`] — exact transition distributions for the three chains and
//!   the underlying labeled particle process;
//! * [`engine`] — a Fenwick-indexed simulator that steps the chains at
//!   millions of transitions per second, with reproducible `(seed, stream)`
//!   randomness;
//! * [`stationary`] — every closed-form law: component rates, stationary
//!   measures, the augmented-Poisson representation, block-count and
//!   sample-size laws, and the Ewens mixture identity;
//! * [`linsys`] — the tridiagonal system behind the component rates, solved
//!   numerically as an independent oracle;
//! * [`verify`] — balance, embedding, and limit checks that turn the
//!   structural claims into pass/fail reports.
//!
//! ```
//! use bdpu::engine::{KernelKind, RunConfig, Simulator};
//! use bdpu::params::ChainParams;
//!
//! let params = ChainParams::infinite(0.3, 1.0).unwrap();
//! let mut sim = Simulator::new(params, KernelKind::Bdpu, 7).unwrap();
//! let record = sim.run(&RunConfig::new(10_000));
//! let last = record.snapshots.last().unwrap();
//! assert_eq!(last.step, 10_000);
//! ```

pub mod engine;
pub mod error;
pub mod kernels;
pub mod linsys;
pub mod parallel;
pub mod params;
pub mod partition;
pub mod rng;
pub mod stationary;
pub mod verify;

pub use error::{Error, Result};
pub use params::{ChainParams, Mode, MuSchedule};
pub use partition::{AllelicPartition, Move};
