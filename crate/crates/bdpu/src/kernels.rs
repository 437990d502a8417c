//! Transition kernels on allelic partitions and the underlying labeled
//! particle process.
//!
//! Three kernels are implemented:
//!
//! * the birth-death urn chain on the full state space: a new singleton with
//!   weight `beta * lambda`, block growth `i -> i + 1` with weight
//!   `beta * i * m_i`, block shrinkage `i -> i - 1` with weight
//!   `(1 - beta) * i * m_i`;
//! * the finite chain with maximal block size `L`, where a block growing past
//!   `L` leaves the system and blocks of size `L` immigrate with weight
//!   `(1 - beta) * mu`;
//! * the capped-removal chain, identical to the first except that removals
//!   from `(L + 1)`-sized blocks carry the constant weight
//!   `(1 - beta) * mu_L` instead of `(1 - beta) * (L + 1) * m_{L+1}`.
//!
//! Every distribution lists explicit moves with probabilities that sum to
//! one; `normalizer` is the kernel's closed-form normalizing constant.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{ChainParams, Mode};
use crate::partition::{AllelicPartition, Move};

/// The probability law of one transition from a fixed state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDistribution {
    moves: Vec<(Move, f64)>,
    normalizer: f64,
}

impl TransitionDistribution {
    /// Admissible moves with their probabilities, zero-weight moves omitted.
    pub fn moves(&self) -> &[(Move, f64)] {
        &self.moves
    }

    /// The normalizing constant the weights were divided by.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Probability of a specific move (zero if absent).
    pub fn probability_of(&self, mv: Move) -> f64 {
        self.moves
            .iter()
            .find(|(m, _)| *m == mv)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }

    /// Sum of all listed probabilities.
    pub fn total(&self) -> f64 {
        self.moves.iter().map(|(_, p)| p).sum()
    }

    fn from_weights(moves: Vec<(Move, f64)>, normalizer: f64) -> Self {
        let moves = moves
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(mv, w)| (mv, w / normalizer))
            .collect();
        Self { moves, normalizer }
    }
}

fn require_infinite(p: &ChainParams) -> Result<()> {
    if p.is_infinite() {
        Ok(())
    } else {
        Err(Error::invalid(
            "mode",
            "kernel requires infinite-mode parameters",
        ))
    }
}

/// Transitions of the birth-death urn chain from state `m`.
///
/// From the origin the only move is a new singleton. The normalizer is
/// `beta * lambda + norm(m)`.
pub fn bdpu_transitions(m: &AllelicPartition, p: &ChainParams) -> Result<TransitionDistribution> {
    require_infinite(p)?;
    let beta = p.beta();
    let mut moves = vec![(Move::NewSingleton, beta * p.lambda())];
    for (i, count) in m.iter() {
        let mass = (i * count) as f64;
        moves.push((Move::Grow(i), beta * mass));
        moves.push((Move::Shrink(i), (1.0 - beta) * mass));
    }
    let normalizer = beta * p.lambda() + m.norm() as f64;
    Ok(TransitionDistribution::from_weights(moves, normalizer))
}

/// Probability that the next step adds an item to the sample,
/// `beta (lambda + norm) / (beta lambda + norm)`.
///
/// Equals the total mass of the new-singleton and growth moves under
/// [`bdpu_transitions`].
pub fn bernoulli_birth_prob(m: &AllelicPartition, p: &ChainParams) -> Result<f64> {
    require_infinite(p)?;
    let n = m.norm() as f64;
    Ok(p.beta() * (p.lambda() + n) / (p.beta() * p.lambda() + n))
}

/// Transitions of the finite chain with maximal block size.
///
/// The five move families: new singleton (`beta lambda`), growth below the
/// cap (`beta i m_i`), removal of a cap-sized block that would outgrow the
/// cap (`beta L m_L`), shrinkage (`(1 - beta) i m_i`), immigration of a
/// cap-sized block (`(1 - beta) mu`). Normalizer
/// `beta lambda + (1 - beta) mu + norm(m)`.
pub fn maximal_count_transitions(
    m: &AllelicPartition,
    p: &ChainParams,
) -> Result<TransitionDistribution> {
    let (max_size, mu) = match p.mode() {
        Mode::MaximalCount { max_size, mu } => (max_size, mu),
        Mode::Infinite => {
            return Err(Error::invalid(
                "mode",
                "kernel requires maximal-count parameters",
            ))
        }
    };
    if let Some(size) = m.max_size() {
        if size > max_size {
            return Err(Error::StateExceedsCapacity { size, max_size });
        }
    }
    let beta = p.beta();
    let mut moves = vec![(Move::NewSingleton, beta * p.lambda())];
    for (i, count) in m.iter() {
        let mass = (i * count) as f64;
        if i < max_size {
            moves.push((Move::Grow(i), beta * mass));
        } else {
            moves.push((Move::BoundaryRemove(max_size), beta * mass));
        }
        moves.push((Move::Shrink(i), (1.0 - beta) * mass));
    }
    moves.push((Move::BoundaryInsert(max_size), (1.0 - beta) * mu));
    let normalizer = beta * p.lambda() + (1.0 - beta) * mu + m.norm() as f64;
    Ok(TransitionDistribution::from_weights(moves, normalizer))
}

/// Transitions of the capped-removal chain: as [`bdpu_transitions`] except
/// that the removal of one item from an `(L + 1)`-sized block has constant
/// weight `(1 - beta) * mu_l`.
///
/// The weight is carried whether or not an `(L + 1)`-block is present: with
/// `m_{L+1} >= 1` it acts as `Shrink(L + 1)`; otherwise a block of the
/// window size immigrates (`BoundaryInsert(window)`), so the first `window`
/// coordinates see the same jump either way. This keeps the chain observed
/// at its window-change times a Markov chain with the finite kernel.
/// Normalizer
/// `beta lambda + (1-beta) mu_l + norm(m) - (1-beta)(L+1) m_{L+1}`.
pub fn modified_chain_transitions(
    m: &AllelicPartition,
    p: &ChainParams,
    window: u64,
    mu_l: f64,
) -> Result<TransitionDistribution> {
    require_infinite(p)?;
    if window < 1 {
        return Err(Error::invalid("window", "must be >= 1"));
    }
    if mu_l.is_nan() || mu_l <= 0.0 || mu_l.is_infinite() {
        return Err(Error::invalid("mu_l", "must be > 0"));
    }
    let beta = p.beta();
    let above = window + 1;
    let mut moves = vec![(Move::NewSingleton, beta * p.lambda())];
    for (i, count) in m.iter() {
        let mass = (i * count) as f64;
        moves.push((Move::Grow(i), beta * mass));
        if i != above {
            moves.push((Move::Shrink(i), (1.0 - beta) * mass));
        }
    }
    if m.count(above) >= 1 {
        moves.push((Move::Shrink(above), (1.0 - beta) * mu_l));
    } else {
        moves.push((Move::BoundaryInsert(window), (1.0 - beta) * mu_l));
    }
    let normalizer = beta * p.lambda() + (1.0 - beta) * mu_l + m.norm() as f64
        - (1.0 - beta) * (above * m.count(above)) as f64;
    Ok(TransitionDistribution::from_weights(moves, normalizer))
}

/// Samples one move by cumulative scan and applies it. Deterministic under a
/// fixed generator state.
pub fn step<R: Rng + ?Sized>(
    m: &AllelicPartition,
    dist: &TransitionDistribution,
    rng: &mut R,
) -> (AllelicPartition, Move) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = dist.moves.last().expect("non-empty distribution").0;
    for &(mv, prob) in &dist.moves {
        acc += prob;
        if u < acc {
            chosen = mv;
            break;
        }
    }
    let next = m
        .apply(chosen)
        .expect("distribution listed an inadmissible move");
    (next, chosen)
}

/// The labeled sample underlying the partition chain: an ordered list of
/// observation labels. Only label equality matters; the multiset of
/// multiplicities induces the partition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ParticleState {
    labels: Vec<u64>,
}

impl ParticleState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels(labels: Vec<u64>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    /// A label never seen in this state; stands in for a draw from a
    /// nonatomic base measure.
    pub fn fresh_label(&self) -> u64 {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// The allelic partition induced by the label multiplicities:
    /// `m_i` = number of distinct labels occurring exactly `i` times.
    pub fn induced_partition(&self) -> AllelicPartition {
        let mut mult = std::collections::HashMap::new();
        for &l in &self.labels {
            *mult.entry(l).or_insert(0u64) += 1;
        }
        let mut counts = std::collections::BTreeMap::new();
        for (_, c) in mult {
            *counts.entry(c).or_insert(0u64) += 1;
        }
        AllelicPartition::from_pairs(counts).expect("multiplicities are >= 1")
    }
}

/// Transitions of the particle process: append a fresh label with weight
/// `beta * lambda`, append a copy of the `j`-th observation with weight
/// `beta` for each `j`, delete the `j`-th observation with weight
/// `(1 - beta)` for each `j`. Normalizer `beta * lambda + N`.
pub fn particle_transitions(
    x: &ParticleState,
    p: &ChainParams,
) -> Result<Vec<(ParticleState, f64)>> {
    require_infinite(p)?;
    let beta = p.beta();
    let n = x.len();
    let normalizer = beta * p.lambda() + n as f64;
    let mut out = Vec::with_capacity(2 * n + 1);
    let mut fresh = x.labels.clone();
    fresh.push(x.fresh_label());
    out.push((
        ParticleState::from_labels(fresh),
        beta * p.lambda() / normalizer,
    ));
    for j in 0..n {
        let mut copy = x.labels.clone();
        copy.push(x.labels[j]);
        out.push((ParticleState::from_labels(copy), beta / normalizer));
    }
    if beta < 1.0 {
        for j in 0..n {
            let mut del = x.labels.clone();
            del.remove(j);
            out.push((ParticleState::from_labels(del), (1.0 - beta) / normalizer));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn part(pairs: &[(u64, u64)]) -> AllelicPartition {
        AllelicPartition::from_pairs(pairs.iter().copied()).unwrap()
    }

    const TOL: f64 = 1e-12;

    #[test]
    fn bdpu_origin_is_pure_birth() {
        let p = ChainParams::infinite(0.3, 1.0).unwrap();
        let d = bdpu_transitions(&AllelicPartition::empty(), &p).unwrap();
        assert_eq!(d.moves(), &[(Move::NewSingleton, 1.0)]);
        assert!((d.normalizer() - 0.3).abs() < TOL);
    }

    #[test]
    fn bdpu_single_singleton_is_uniform_over_three_moves() {
        let p = ChainParams::infinite(0.5, 1.0).unwrap();
        let d = bdpu_transitions(&part(&[(1, 1)]), &p).unwrap();
        assert!((d.normalizer() - 1.5).abs() < TOL);
        for mv in [Move::NewSingleton, Move::Grow(1), Move::Shrink(1)] {
            assert!((d.probability_of(mv) - 1.0 / 3.0).abs() < TOL, "{mv:?}");
        }
        assert_eq!(d.moves().len(), 3);
    }

    #[test]
    fn bdpu_beta_one_has_no_shrink_moves() {
        let p = ChainParams::infinite(1.0, 2.0).unwrap();
        let d = bdpu_transitions(&part(&[(2, 1)]), &p).unwrap();
        assert_eq!(d.moves().len(), 2);
        assert!((d.probability_of(Move::NewSingleton) - 0.5).abs() < TOL);
        assert!((d.probability_of(Move::Grow(2)) - 0.5).abs() < TOL);
    }

    #[test]
    fn birth_prob_examples() {
        let p = ChainParams::infinite(0.7, 2.0).unwrap();
        assert!((bernoulli_birth_prob(&AllelicPartition::empty(), &p).unwrap() - 1.0).abs() < TOL);

        let p = ChainParams::infinite(1.0, 0.5).unwrap();
        assert!((bernoulli_birth_prob(&part(&[(3, 2)]), &p).unwrap() - 1.0).abs() < TOL);

        // beta (lambda + 10) / (beta lambda + 10) = 0.3 * 11 / 10.3
        let p = ChainParams::infinite(0.3, 1.0).unwrap();
        let m = part(&[(2, 5)]);
        assert!((bernoulli_birth_prob(&m, &p).unwrap() - 3.3 / 10.3).abs() < TOL);
    }

    #[test]
    fn birth_prob_equals_mass_increasing_probability() {
        let p = ChainParams::infinite(0.37, 1.3).unwrap();
        for m in [
            part(&[(1, 2), (3, 1)]),
            part(&[(2, 4)]),
            part(&[(1, 1), (2, 1), (5, 2)]),
        ] {
            let d = bdpu_transitions(&m, &p).unwrap();
            let up: f64 = d
                .moves()
                .iter()
                .filter(|(mv, _)| matches!(mv, Move::NewSingleton | Move::Grow(_)))
                .map(|(_, pr)| pr)
                .sum();
            assert!((up - bernoulli_birth_prob(&m, &p).unwrap()).abs() < TOL);
        }
    }

    #[test]
    fn maximal_origin_splits_between_birth_and_immigration() {
        let p = ChainParams::maximal_count(0.4, 1.0, 3, 2.0).unwrap();
        let d = maximal_count_transitions(&AllelicPartition::empty(), &p).unwrap();
        assert!((d.normalizer() - 1.6).abs() < TOL);
        assert!((d.probability_of(Move::NewSingleton) - 0.25).abs() < TOL);
        assert!((d.probability_of(Move::BoundaryInsert(3)) - 0.75).abs() < TOL);
        assert_eq!(d.moves().len(), 2);
    }

    #[test]
    fn maximal_cap_one_has_four_equal_moves() {
        let p = ChainParams::maximal_count(0.5, 1.0, 1, 1.0).unwrap();
        let d = maximal_count_transitions(&part(&[(1, 1)]), &p).unwrap();
        assert_eq!(d.moves().len(), 4);
        for mv in [
            Move::NewSingleton,
            Move::BoundaryRemove(1),
            Move::Shrink(1),
            Move::BoundaryInsert(1),
        ] {
            assert!((d.probability_of(mv) - 0.25).abs() < TOL, "{mv:?}");
        }
    }

    #[test]
    fn maximal_rejects_oversized_state() {
        let p = ChainParams::maximal_count(0.5, 1.0, 3, 1.0).unwrap();
        assert!(matches!(
            maximal_count_transitions(&part(&[(4, 1)]), &p),
            Err(Error::StateExceedsCapacity {
                size: 4,
                max_size: 3
            })
        ));
    }

    #[test]
    fn modified_kernel_matches_documented_normalizer() {
        // m = {3:1}, window 2: removal from the 3-block carries weight
        // (1-beta) mu_l; weight sum must equal the closed-form normalizer.
        let p = ChainParams::infinite(0.3, 1.0).unwrap();
        let m = part(&[(3, 1)]);
        let d = modified_chain_transitions(&m, &p, 2, 0.25).unwrap();
        let z = 0.3 + 0.7 * 0.25 + 3.0 - 0.7 * 3.0;
        assert!((d.normalizer() - z).abs() < TOL);
        assert!((d.normalizer() - 1.375).abs() < TOL);
        assert!((d.probability_of(Move::NewSingleton) - 0.3 / z).abs() < TOL);
        assert!((d.probability_of(Move::Grow(3)) - 0.9 / z).abs() < TOL);
        assert!((d.probability_of(Move::Shrink(3)) - 0.7 * 0.25 / z).abs() < TOL);
        assert!((d.total() - 1.0).abs() < TOL);
    }

    #[test]
    fn modified_kernel_without_oversized_block_immigrates() {
        let p = ChainParams::infinite(0.3, 1.0).unwrap();
        let m = part(&[(1, 2)]);
        let d = modified_chain_transitions(&m, &p, 2, 0.25).unwrap();
        // Shrink(3) absent; the mu_l weight shows up as window immigration.
        assert_eq!(d.probability_of(Move::Shrink(3)), 0.0);
        let z = 0.3 + 0.7 * 0.25 + 2.0;
        assert!((d.probability_of(Move::BoundaryInsert(2)) - 0.7 * 0.25 / z).abs() < TOL);
        // remaining weights match the plain kernel's weights
        assert!((d.probability_of(Move::Grow(1)) - 0.3 * 2.0 / z).abs() < TOL);
        assert!((d.probability_of(Move::Shrink(1)) - 0.7 * 2.0 / z).abs() < TOL);
        assert!((d.total() - 1.0).abs() < TOL);
    }

    #[test]
    fn step_is_deterministic_and_respects_singletons() {
        use rand::SeedableRng;
        let p = ChainParams::infinite(0.5, 1.0).unwrap();
        let m = part(&[(2, 2)]);
        let d = bdpu_transitions(&m, &p).unwrap();
        let mut rng1 = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        let mut rng2 = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        for _ in 0..50 {
            let (a, mva) = step(&m, &d, &mut rng1);
            let (b, mvb) = step(&m, &d, &mut rng2);
            assert_eq!(mva, mvb);
            assert_eq!(a, b);
        }
        // single-entry distribution always yields that move
        let origin = AllelicPartition::empty();
        let d0 = bdpu_transitions(&origin, &p).unwrap();
        for _ in 0..20 {
            let (_, mv) = step(&origin, &d0, &mut rng1);
            assert_eq!(mv, Move::NewSingleton);
        }
    }

    #[test]
    fn step_frequencies_follow_the_distribution() {
        use rand::SeedableRng;
        let p = ChainParams::infinite(0.4, 1.0).unwrap();
        let m = part(&[(1, 2), (3, 1)]);
        let d = bdpu_transitions(&m, &p).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(404);
        let draws = 1_000_000u64;
        let mut freq = std::collections::HashMap::new();
        for _ in 0..draws {
            let (_, mv) = step(&m, &d, &mut rng);
            *freq.entry(mv).or_insert(0u64) += 1;
        }
        for &(mv, prob) in d.moves() {
            let observed = freq[&mv] as f64;
            let expected = prob * draws as f64;
            let sd = (draws as f64 * prob * (1.0 - prob)).sqrt();
            assert!(
                (observed - expected).abs() <= 4.0 * sd,
                "{mv:?}: {observed} vs {expected:.0} +- {sd:.0}"
            );
        }
    }

    #[test]
    fn particle_examples() {
        let p = ChainParams::infinite(0.5, 2.0).unwrap();
        let empty = ParticleState::new();
        let d = particle_transitions(&empty, &p).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[0].1 - 1.0).abs() < TOL);

        let x = ParticleState::from_labels(vec![4, 9]);
        let d = particle_transitions(&x, &p).unwrap();
        // P(fresh) = 1/3, P(copy j) = 1/6 each, P(delete j) = 1/6 each
        assert_eq!(d.len(), 5);
        assert!((d[0].1 - 1.0 / 3.0).abs() < TOL);
        for (_, pr) in &d[1..] {
            assert!((pr - 1.0 / 6.0).abs() < TOL);
        }
        let total: f64 = d.iter().map(|(_, pr)| pr).sum();
        assert!((total - 1.0).abs() < TOL);
    }

    #[test]
    fn induced_partition_examples() {
        let x = ParticleState::from_labels(vec![7, 7, 3]);
        assert_eq!(x.induced_partition(), part(&[(1, 1), (2, 1)]));
        assert_eq!(
            ParticleState::new().induced_partition(),
            AllelicPartition::empty()
        );
        let x = ParticleState::from_labels(vec![1, 2, 5, 5, 5]);
        assert_eq!(x.induced_partition(), part(&[(1, 2), (3, 1)]));
    }

    #[test]
    fn particle_post_states_differ_by_one_admissible_move() {
        let p = ChainParams::infinite(0.4, 1.5).unwrap();
        let x = ParticleState::from_labels(vec![1, 1, 2, 3, 3, 3]);
        let m = x.induced_partition();
        let urn = bdpu_transitions(&m, &p).unwrap();
        for (x2, _) in particle_transitions(&x, &p).unwrap() {
            let m2 = x2.induced_partition();
            let reachable = urn
                .moves()
                .iter()
                .any(|(mv, _)| m.apply(*mv).map(|next| next == m2).unwrap_or(false));
            assert!(reachable, "induced jump {m} -> {m2} not a kernel move");
        }
    }

    fn arb_state() -> impl Strategy<Value = AllelicPartition> {
        proptest::collection::btree_map(1u64..10, 1u64..4, 0..5)
            .prop_map(|c| AllelicPartition::from_pairs(c).unwrap())
    }

    proptest! {
        #[test]
        fn distributions_are_normalized_and_admissible(
            m in arb_state(),
            beta in 0.05f64..1.0,
            lambda in 0.1f64..4.0,
            mu in 0.1f64..4.0,
        ) {
            let p = ChainParams::infinite(beta, lambda).unwrap();
            let d = bdpu_transitions(&m, &p).unwrap();
            prop_assert!((d.total() - 1.0).abs() < 1e-12);
            for (mv, _) in d.moves() {
                prop_assert!(m.apply(*mv).is_ok());
            }

            let cap = m.max_size().unwrap_or(1).max(3);
            let pf = ChainParams::maximal_count(beta, lambda, cap, mu).unwrap();
            let d = maximal_count_transitions(&m, &pf).unwrap();
            prop_assert!((d.total() - 1.0).abs() < 1e-12);
            for (mv, _) in d.moves() {
                prop_assert!(m.apply(*mv).is_ok());
            }

            let d = modified_chain_transitions(&m, &p, 2, mu / 8.0).unwrap();
            prop_assert!((d.total() - 1.0).abs() < 1e-12);
            let sum_weights: f64 = d.moves().iter().map(|(_, pr)| pr * d.normalizer()).sum();
            prop_assert!((sum_weights - d.normalizer()).abs() < 1e-9 * d.normalizer());
            for (mv, _) in d.moves() {
                prop_assert!(m.apply(*mv).is_ok());
            }
        }
    }
}
