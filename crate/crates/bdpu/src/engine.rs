//! High-throughput trajectory engine.
//!
//! The simulator keeps the state as a dense count table indexed by block
//! size, with a Fenwick tree over the size-weighted masses `i * m_i`. One
//! step costs one prefix-sum search plus two point updates, so million-step
//! runs stay cheap even when the state carries large blocks. All weights in
//! the tree are integers represented exactly in `f64`, so the search is
//! exact; only the constant birth/immigration bands involve real arithmetic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ChainParams, Mode};
use crate::partition::{AllelicPartition, Move};
use crate::rng::{stream_rng, StreamRng};

/// Which transition kernel drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum KernelKind {
    /// Birth-death urn chain on the full state space.
    Bdpu,
    /// Finite chain with maximal block size (capacity from the parameters).
    MaximalCount,
    /// Capped-removal chain: removals from `(window + 1)`-sized blocks carry
    /// the constant weight `(1 - beta) * mu_l`.
    Modified { window: u64, mu_l: f64 },
}

/// Classification of a move by its effect on the first `window` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WindowClass {
    NewSingleton,
    Grow(u64),
    /// A window-sized block outgrew the window and left it.
    Exit,
    Shrink(u64),
    /// A block entered the window from above or immigrated.
    Insert,
}

/// The window-change class of a move, or `None` if the move does not touch
/// the first `window` coordinates.
pub fn window_class(mv: Move, window: u64) -> Option<WindowClass> {
    match mv {
        Move::NewSingleton => Some(WindowClass::NewSingleton),
        Move::Grow(i) if i < window => Some(WindowClass::Grow(i)),
        Move::Grow(i) if i == window => Some(WindowClass::Exit),
        Move::Grow(_) => None,
        Move::Shrink(i) if i <= window => Some(WindowClass::Shrink(i)),
        Move::Shrink(i) if i == window + 1 => Some(WindowClass::Insert),
        Move::Shrink(_) => None,
        Move::BoundaryRemove(l) if l == window => Some(WindowClass::Exit),
        Move::BoundaryRemove(_) => None,
        Move::BoundaryInsert(l) if l == window => Some(WindowClass::Insert),
        Move::BoundaryInsert(_) => None,
    }
}

/// Fenwick tree over `f64` weights, power-of-two capacity.
struct Fenwick {
    tree: Vec<f64>,
    cap: usize,
}

impl Fenwick {
    fn new(cap: usize) -> Self {
        let cap = cap.next_power_of_two();
        Self {
            tree: vec![0.0; cap + 1],
            cap,
        }
    }

    #[inline]
    fn add(&mut self, mut i: usize, delta: f64) {
        while i <= self.cap {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    fn prefix(&self, mut i: usize) -> f64 {
        let mut s = 0.0;
        i = i.min(self.cap);
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Smallest index `i` with `prefix(i) > t`; returns `(i, prefix(i - 1))`.
    /// Requires `t < prefix(cap)`.
    #[inline]
    fn search(&self, mut t: f64) -> (usize, f64) {
        let mut pos = 0usize;
        let mut mask = self.cap;
        let mut before = 0.0;
        while mask > 0 {
            let next = pos + mask;
            if next <= self.cap && self.tree[next] <= t {
                t -= self.tree[next];
                before += self.tree[next];
                pos = next;
            }
            mask >>= 1;
        }
        (pos + 1, before)
    }

    fn rebuild(&mut self, counts: &[u64]) {
        self.tree.iter_mut().for_each(|v| *v = 0.0);
        for (size, &count) in counts.iter().enumerate().skip(1) {
            if count > 0 {
                self.add(size, (size as u64 * count) as f64);
            }
        }
    }
}

/// Discrete-time simulator for one trajectory.
///
/// Kernels are pure functions of the state, so replicas just use distinct
/// `(seed, stream)` pairs; see [`crate::rng::stream_rng`].
pub struct Simulator {
    params: ChainParams,
    kernel: KernelKind,
    counts: Vec<u64>,
    weight: Fenwick,
    norm: u64,
    blocks: u64,
    max_occupied: usize,
    rng: StreamRng,
    seed: u64,
    stream: u64,
    step_index: u64,
}

impl Simulator {
    pub fn new(params: ChainParams, kernel: KernelKind, seed: u64) -> Result<Self> {
        Self::with_stream(params, kernel, seed, 0)
    }

    pub fn with_stream(
        params: ChainParams,
        kernel: KernelKind,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        match (kernel, params.mode()) {
            (KernelKind::Bdpu, Mode::Infinite) => {}
            (KernelKind::MaximalCount, Mode::MaximalCount { .. }) => {}
            (KernelKind::Modified { window, mu_l }, Mode::Infinite) => {
                if window < 1 {
                    return Err(Error::invalid("window", "must be >= 1"));
                }
                if mu_l.is_nan() || mu_l <= 0.0 || mu_l.is_infinite() {
                    return Err(Error::invalid("mu_l", "must be > 0"));
                }
            }
            _ => {
                return Err(Error::invalid(
                    "kernel",
                    "kernel kind does not match the parameter mode",
                ))
            }
        }
        let cap = 64usize;
        Ok(Self {
            params,
            kernel,
            counts: vec![0; cap + 1],
            weight: Fenwick::new(cap),
            norm: 0,
            blocks: 0,
            max_occupied: 0,
            rng: stream_rng(seed, stream),
            seed,
            stream,
            step_index: 0,
        })
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn norm(&self) -> u64 {
        self.norm
    }

    pub fn block_count(&self) -> u64 {
        self.blocks
    }

    /// `m_i` for the current state.
    pub fn count(&self, size: u64) -> u64 {
        self.counts.get(size as usize).copied().unwrap_or(0)
    }

    /// `sum_{i <= size} i * m_i`, exact.
    pub fn mass_up_to(&self, size: u64) -> u64 {
        self.weight.prefix(size as usize) as u64
    }

    /// Replaces the current state; the step counter is untouched.
    pub fn set_state(&mut self, m: &AllelicPartition) -> Result<()> {
        if let (KernelKind::MaximalCount, Some(max_size)) = (self.kernel, self.params.max_size()) {
            if let Some(size) = m.max_size() {
                if size > max_size {
                    return Err(Error::StateExceedsCapacity { size, max_size });
                }
            }
        }
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.norm = 0;
        self.blocks = 0;
        self.max_occupied = 0;
        for (size, count) in m.iter() {
            self.ensure_capacity(size as usize);
            self.counts[size as usize] = count;
            self.norm += size * count;
            self.blocks += count;
            self.max_occupied = self.max_occupied.max(size as usize);
        }
        self.weight.rebuild(&self.counts);
        Ok(())
    }

    /// The current state as a sparse partition.
    pub fn state(&self) -> AllelicPartition {
        AllelicPartition::from_pairs(
            self.counts
                .iter()
                .enumerate()
                .take(self.max_occupied + 1)
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i as u64, c)),
        )
        .expect("sizes start at 1")
    }

    fn ensure_capacity(&mut self, size: usize) {
        if size <= self.weight.cap {
            return;
        }
        let mut cap = self.weight.cap;
        while cap < size {
            cap *= 2;
        }
        self.counts.resize(cap + 1, 0);
        self.weight = Fenwick::new(cap);
        self.weight.rebuild(&self.counts);
    }

    #[inline]
    fn inc(&mut self, size: usize) {
        self.ensure_capacity(size);
        self.counts[size] += 1;
        self.weight.add(size, size as f64);
        self.max_occupied = self.max_occupied.max(size);
    }

    #[inline]
    fn dec(&mut self, size: usize) {
        debug_assert!(self.counts[size] > 0);
        self.counts[size] -= 1;
        self.weight.add(size, -(size as f64));
    }

    fn apply(&mut self, mv: Move) {
        match mv {
            Move::NewSingleton => {
                self.inc(1);
                self.norm += 1;
                self.blocks += 1;
            }
            Move::Grow(i) => {
                self.dec(i as usize);
                self.inc(i as usize + 1);
                self.norm += 1;
            }
            Move::Shrink(1) => {
                self.dec(1);
                self.norm -= 1;
                self.blocks -= 1;
            }
            Move::Shrink(i) => {
                self.dec(i as usize);
                self.inc(i as usize - 1);
                self.norm -= 1;
            }
            Move::BoundaryRemove(l) => {
                self.dec(l as usize);
                self.norm -= l;
                self.blocks -= 1;
            }
            Move::BoundaryInsert(l) => {
                self.inc(l as usize);
                self.norm += l;
                self.blocks += 1;
            }
        }
    }

    /// Draws the next move without applying it.
    pub fn sample_move(&mut self) -> Move {
        match self.kernel {
            KernelKind::Bdpu => self.sample_bdpu(),
            KernelKind::MaximalCount => self.sample_maximal(),
            KernelKind::Modified { window, mu_l } => self.sample_modified(window, mu_l),
        }
    }

    /// Samples and applies one transition, returning the move taken.
    #[inline]
    pub fn step_once(&mut self) -> Move {
        let mv = self.sample_move();
        self.apply(mv);
        self.step_index += 1;
        mv
    }

    /// Clamp a band offset strictly below the exact integer mass `m`.
    #[inline]
    fn clamp_band(t: f64, m: f64) -> f64 {
        if t >= m {
            m * (1.0 - f64::EPSILON)
        } else {
            t.max(0.0)
        }
    }

    #[inline]
    fn split_grow_shrink(&self, t: f64, i: usize, before: f64) -> (u64, bool) {
        let wi = (i as u64 * self.counts[i]) as f64;
        let s = (t - before) / wi;
        (i as u64, s < self.params.beta())
    }

    fn sample_bdpu(&mut self) -> Move {
        let w_new = self.params.beta() * self.params.lambda();
        let mass = self.norm as f64;
        let u = self.rng.random::<f64>() * (w_new + mass);
        if u < w_new || self.norm == 0 {
            return Move::NewSingleton;
        }
        let t = Self::clamp_band(u - w_new, mass);
        let (i, before) = self.weight.search(t);
        let (i, grow) = self.split_grow_shrink(t, i, before);
        if grow {
            Move::Grow(i)
        } else {
            Move::Shrink(i)
        }
    }

    fn sample_maximal(&mut self) -> Move {
        let (max_size, mu) = match self.params.mode() {
            Mode::MaximalCount { max_size, mu } => (max_size, mu),
            Mode::Infinite => unreachable!("checked at construction"),
        };
        let beta = self.params.beta();
        let w_new = beta * self.params.lambda();
        let w_ins = (1.0 - beta) * mu;
        let mass = self.norm as f64;
        let u = self.rng.random::<f64>() * (w_new + w_ins + mass);
        if u < w_new {
            return Move::NewSingleton;
        }
        if u < w_new + w_ins || self.norm == 0 {
            return Move::BoundaryInsert(max_size);
        }
        let t = Self::clamp_band(u - w_new - w_ins, mass);
        let (i, before) = self.weight.search(t);
        let (i, grow) = self.split_grow_shrink(t, i, before);
        if grow {
            if i < max_size {
                Move::Grow(i)
            } else {
                Move::BoundaryRemove(max_size)
            }
        } else {
            Move::Shrink(i)
        }
    }

    fn sample_modified(&mut self, window: u64, mu_l: f64) -> Move {
        let beta = self.params.beta();
        let above = (window + 1) as usize;
        let w_new = beta * self.params.lambda();
        let w_mu = (1.0 - beta) * mu_l;
        let above_count = self.counts.get(above).copied().unwrap_or(0);
        let g = (above as u64 * above_count) as f64;
        // mass of moves drawn by size: full weight for sizes != window + 1,
        // growth only for window + 1
        let band = self.norm as f64 - (1.0 - beta) * g;
        let u = self.rng.random::<f64>() * (w_new + w_mu + band);
        if u < w_new {
            return Move::NewSingleton;
        }
        if u < w_new + w_mu || self.norm == 0 {
            return if above_count >= 1 {
                Move::Shrink(above as u64)
            } else {
                Move::BoundaryInsert(window)
            };
        }
        let t = Self::clamp_band(u - w_new - w_mu, band);
        let a = self.weight.prefix(window as usize);
        if t < a {
            let (i, before) = self.weight.search(t);
            let (i, grow) = self.split_grow_shrink(t, i, before);
            return if grow { Move::Grow(i) } else { Move::Shrink(i) };
        }
        if t < a + beta * g {
            return Move::Grow(above as u64);
        }
        // sizes strictly above window + 1; shift past the removed
        // (1 - beta) share of the (window + 1) band
        let target = Self::clamp_band(t + (1.0 - beta) * g, self.norm as f64);
        let (i, before) = self.weight.search(target);
        if i <= above {
            // floating-point landed on the band edge
            return Move::Grow(above as u64);
        }
        let (i, grow) = self.split_grow_shrink(target, i, before);
        if grow {
            Move::Grow(i)
        } else {
            Move::Shrink(i)
        }
    }

    /// Runs `cfg.steps` transitions, recording snapshots and, for the
    /// capped-removal kernel, the times at which the first `window`
    /// coordinates change.
    pub fn run(&mut self, cfg: &RunConfig) -> TrajectoryRecord {
        let mut snapshots = vec![self.snapshot()];
        let mut sigma_times = if cfg.record_sigma {
            Some(Vec::new())
        } else {
            None
        };
        let window = match self.kernel {
            KernelKind::Modified { window, .. } => Some(window),
            _ => None,
        };
        let start = self.step_index;
        for _ in 0..cfg.steps {
            let mv = self.step_once();
            if let (Some(times), Some(w)) = (sigma_times.as_mut(), window) {
                if window_class(mv, w).is_some() {
                    times.push(self.step_index - start);
                }
            }
            if let Some(every) = cfg.snapshot_every {
                if every > 0 && (self.step_index - start).is_multiple_of(every) {
                    snapshots.push(self.snapshot());
                }
            }
        }
        if snapshots.last().map(|s| s.step) != Some(self.step_index - start) {
            snapshots.push(self.snapshot_at(self.step_index - start));
        }
        TrajectoryRecord {
            schema_version: TRAJECTORY_SCHEMA_VERSION,
            params: self.params.clone(),
            kernel: self.kernel,
            seed: self.seed,
            stream: self.stream,
            steps: cfg.steps,
            snapshots,
            sigma_times,
        }
    }

    fn snapshot(&self) -> Snapshot {
        self.snapshot_at(self.step_index)
    }

    fn snapshot_at(&self, step: u64) -> Snapshot {
        Snapshot {
            step,
            norm: self.norm,
            block_count: self.blocks,
            state: self.state(),
        }
    }
}

/// What a [`Simulator::run`] records.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub steps: u64,
    /// Snapshot cadence; `None` records only the initial and final states.
    pub snapshot_every: Option<u64>,
    /// Record window-change times (capped-removal kernel only).
    pub record_sigma: bool,
}

impl RunConfig {
    pub fn new(steps: u64) -> Self {
        Self {
            steps,
            snapshot_every: None,
            record_sigma: false,
        }
    }
}

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    pub norm: u64,
    pub block_count: u64,
    pub state: AllelicPartition,
}

/// A simulated path: parameters, seed, and observer snapshots, with optional
/// window-change times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub schema_version: u32,
    pub params: ChainParams,
    #[serde(flatten)]
    pub kernel: KernelKind,
    pub seed: u64,
    pub stream: u64,
    pub steps: u64,
    pub snapshots: Vec<Snapshot>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_times: Option<Vec<u64>>,
}

impl TrajectoryRecord {
    /// Writes the snapshot table as CSV with a versioned comment header:
    /// `step,norm,block_count,m_1..m_imax` where `imax` is the largest block
    /// size seen in any snapshot.
    pub fn write_snapshot_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let imax = self
            .snapshots
            .iter()
            .filter_map(|s| s.state.max_size())
            .max()
            .unwrap_or(0);
        writeln!(
            w,
            "# bdpu-trajectory-v{} seed={} stream={} steps={}",
            self.schema_version, self.seed, self.stream, self.steps
        )?;
        let mut header = String::from("step,norm,block_count");
        for i in 1..=imax {
            header.push_str(&format!(",m_{i}"));
        }
        writeln!(w, "{header}")?;
        for s in &self.snapshots {
            let mut row = format!("{},{},{}", s.step, s.norm, s.block_count);
            for i in 1..=imax {
                row.push_str(&format!(",{}", s.state.count(i)));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}
