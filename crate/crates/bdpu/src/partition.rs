//! Allelic partitions and the elementary moves that act on them.
//!
//! A state is the vector `(m_1, m_2, ...)` where `m_i` counts the blocks of
//! size `i`. Reachable states have finite support, so only nonzero counts are
//! stored.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// One admissible transition of a partition-valued chain.
///
/// `Grow(i)` moves one block from size `i` to `i + 1`, `Shrink(i)` from `i`
/// to `i - 1` (a shrinking singleton leaves the system). The boundary moves
/// delete or create a whole block of the capacity size and only appear in
/// finite-capacity kernels and the capped-removal kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    NewSingleton,
    Grow(u64),
    Shrink(u64),
    BoundaryRemove(u64),
    BoundaryInsert(u64),
}

impl Move {
    /// The move that undoes `self`.
    pub fn inverse(&self) -> Move {
        match *self {
            Move::NewSingleton => Move::Shrink(1),
            Move::Grow(i) => Move::Shrink(i + 1),
            Move::Shrink(1) => Move::NewSingleton,
            Move::Shrink(i) => Move::Grow(i - 1),
            Move::BoundaryRemove(l) => Move::BoundaryInsert(l),
            Move::BoundaryInsert(l) => Move::BoundaryRemove(l),
        }
    }

    /// Signed change of `norm` when the move is applied.
    pub fn norm_delta(&self) -> i64 {
        match *self {
            Move::NewSingleton | Move::Grow(_) => 1,
            Move::Shrink(_) => -1,
            Move::BoundaryRemove(l) => -(l as i64),
            Move::BoundaryInsert(l) => l as i64,
        }
    }
}

/// Sparse allelic partition: block size -> number of blocks of that size.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct AllelicPartition {
    counts: BTreeMap<u64, u64>,
}

impl AllelicPartition {
    /// The origin `(0, 0, ...)`.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a partition from `(size, count)` pairs. Duplicate sizes are
    /// summed, zero counts dropped, size zero rejected.
    pub fn from_pairs<I: IntoIterator<Item = (u64, u64)>>(pairs: I) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (size, count) in pairs {
            if size == 0 {
                return Err(Error::invalid("block size", "must be >= 1"));
            }
            if count > 0 {
                *counts.entry(size).or_insert(0) += count;
            }
        }
        Ok(Self { counts })
    }

    /// Number of blocks of size `i` (`m_i`).
    pub fn count(&self, size: u64) -> u64 {
        self.counts.get(&size).copied().unwrap_or(0)
    }

    /// Total number of items, `sum_i i * m_i`.
    pub fn norm(&self) -> u64 {
        self.counts.iter().map(|(i, m)| i * m).sum()
    }

    /// Total number of blocks, `sum_i m_i`.
    pub fn block_count(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Largest occupied block size, if any.
    pub fn max_size(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    /// Occupied `(size, count)` pairs in increasing size order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&i, &m)| (i, m))
    }

    /// Applies a move, failing if it is not admissible from this state.
    pub fn apply(&self, mv: Move) -> Result<Self> {
        let mut next = self.clone();
        next.apply_in_place(mv)?;
        Ok(next)
    }

    pub fn apply_in_place(&mut self, mv: Move) -> Result<()> {
        match mv {
            Move::NewSingleton => self.add_block(1),
            Move::Grow(i) => {
                if i == 0 {
                    return Err(Error::InadmissibleMove(mv));
                }
                self.remove_block(i)
                    .map_err(|_| Error::InadmissibleMove(mv))?;
                self.add_block(i + 1);
            }
            Move::Shrink(i) => {
                if i == 0 {
                    return Err(Error::InadmissibleMove(mv));
                }
                self.remove_block(i)
                    .map_err(|_| Error::InadmissibleMove(mv))?;
                if i > 1 {
                    self.add_block(i - 1);
                }
            }
            Move::BoundaryRemove(l) => {
                if l == 0 {
                    return Err(Error::InadmissibleMove(mv));
                }
                self.remove_block(l)
                    .map_err(|_| Error::InadmissibleMove(mv))?;
            }
            Move::BoundaryInsert(l) => {
                if l == 0 {
                    return Err(Error::InadmissibleMove(mv));
                }
                self.add_block(l);
            }
        }
        Ok(())
    }

    fn add_block(&mut self, size: u64) {
        *self.counts.entry(size).or_insert(0) += 1;
    }

    fn remove_block(&mut self, size: u64) -> Result<()> {
        match self.counts.get_mut(&size) {
            Some(c) if *c > 1 => {
                *c -= 1;
                Ok(())
            }
            Some(_) => {
                self.counts.remove(&size);
                Ok(())
            }
            None => Err(Error::invalid("count", "no block at size")),
        }
    }

    /// Restriction to the first `max_size` coordinates: entries at larger
    /// sizes are dropped.
    pub fn restrict(&self, max_size: u64) -> Self {
        Self {
            counts: self
                .counts
                .range(..=max_size)
                .map(|(&i, &m)| (i, m))
                .collect(),
        }
    }

    /// Canonical text field, `i:count;i:count;...` in increasing size order.
    /// The origin serializes to the empty string.
    pub fn to_field(&self) -> String {
        self.counts
            .iter()
            .map(|(i, m)| format!("{i}:{m}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Parses the `to_field` format.
    pub fn from_field(field: &str) -> Result<Self> {
        let field = field.trim();
        if field.is_empty() {
            return Ok(Self::empty());
        }
        let mut pairs = Vec::new();
        for part in field.split(';') {
            let (size, count) = part
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("expected size:count, got {part:?}")))?;
            let size: u64 = size
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad size in {part:?}: {e}")))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad count in {part:?}: {e}")))?;
            pairs.push((size, count));
        }
        Self::from_pairs(pairs)
    }
}

impl fmt::Display for AllelicPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_field())
    }
}

impl<'de> Deserialize<'de> for AllelicPartition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            counts: BTreeMap<u64, u64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        AllelicPartition::from_pairs(raw.counts).map_err(D::Error::custom)
    }
}

/// All partitions of `n` whose parts are at most `max_size`, in a
/// deterministic order. `n = 0` yields only the origin.
pub fn partitions_of_norm_bounded(n: u64, max_size: u64) -> Vec<AllelicPartition> {
    let mut out = Vec::new();
    let mut stack: Vec<(u64, u64)> = Vec::new();
    fn rec(
        remaining: u64,
        largest: u64,
        stack: &mut Vec<(u64, u64)>,
        out: &mut Vec<AllelicPartition>,
    ) {
        if remaining == 0 {
            out.push(AllelicPartition {
                counts: stack.iter().copied().collect(),
            });
            return;
        }
        let mut part = largest.min(remaining);
        while part >= 1 {
            let max_count = remaining / part;
            for count in (1..=max_count).rev() {
                stack.push((part, count));
                rec(remaining - part * count, part - 1, stack, out);
                stack.pop();
            }
            part -= 1;
        }
    }
    rec(n, max_size, &mut stack, &mut out);
    out
}

/// All partitions of exactly `n` items.
pub fn partitions_of_norm(n: u64) -> Vec<AllelicPartition> {
    partitions_of_norm_bounded(n, n.max(1))
}
