//! Reorderings consistent with `{s, n_1..n_K}` (Mt).
//!
//! A swap move picks occasion `k*` with probability `|r_k*| / Σ_k |r_k|`, where `r_k` is
//! the set of units of occasion `k` captured more than once, removes a uniform unit of
//! `r_k*` from it, and adds a uniform unit of `s \ s_k*` in its place. Equivalently, the
//! removed capture is uniform over all captures of multiply-captured units.

use rand::Rng;

use super::ChainState;
use crate::history::{CaptureHistory, Reordering};
use crate::suffstat::SuffStatMt;

/// Number of steps taken from the original ordering to produce an over-dispersed seed.
pub const OVERDISPERSED_STEPS: usize = 1000;

/// Outcome of one swap move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtMove {
    Accepted,
    /// Proposed and rejected by the Hastings correction.
    Rejected,
    /// No unit is captured more than once, or the chosen occasion holds every unit.
    Frozen,
}

#[derive(Debug, Clone)]
pub struct MtSampler {
    occasion_sizes: Vec<usize>,
    hastings: bool,
}

/// `Σ_k |r_k|`: captures belonging to units captured at least twice.
pub fn movable_captures(rows: &[u64]) -> u64 {
    rows.iter()
        .map(|r| u64::from(r.count_ones()))
        .filter(|&c| c >= 2)
        .sum()
}

impl MtSampler {
    /// `hastings` multiplies acceptance by `Σ|r(current)| / Σ|r(candidate)|`, which makes
    /// the chain stationary on the uniform distribution; without it every move is taken.
    pub fn new(stat: &SuffStatMt, hastings: bool) -> Self {
        Self { occasion_sizes: stat.occasion_sizes().to_vec(), hastings }
    }

    /// Selection probability of each occasion as `k*` in the given state.
    pub fn occasion_probabilities(rows: &[u64], occasions: usize) -> Vec<f64> {
        let total = movable_captures(rows) as f64;
        (0..occasions)
            .map(|k| {
                let in_k = rows
                    .iter()
                    .filter(|r| r.count_ones() >= 2 && *r >> k & 1 == 1)
                    .count();
                if total > 0.0 {
                    in_k as f64 / total
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn move_rows<R: Rng + ?Sized>(&self, rows: &mut [u64], rng: &mut R) -> MtMove {
        let total = movable_captures(rows);
        if total == 0 {
            return MtMove::Frozen;
        }
        let mut pick = rng.random_range(0..total);
        let mut removed = None;
        for (i, &row) in rows.iter().enumerate() {
            let c = u64::from(row.count_ones());
            if c < 2 {
                continue;
            }
            if pick < c {
                removed = Some((i, nth_set_bit(row, pick as u32)));
                break;
            }
            pick -= c;
        }
        let (i, k) = removed.expect("pick is below the movable total");
        let bit = 1u64 << k;
        let outside = rows.len() - self.occasion_sizes[k];
        if outside == 0 {
            return MtMove::Frozen;
        }
        let mut target = rng.random_range(0..outside);
        let mut added = None;
        for (u, &row) in rows.iter().enumerate() {
            if row & bit == 0 {
                if target == 0 {
                    added = Some(u);
                    break;
                }
                target -= 1;
            }
        }
        let u = added.expect("occasion size leaves units outside");

        if self.hastings {
            let removed_count = rows[i].count_ones();
            let added_count = rows[u].count_ones();
            let after = total - if removed_count == 2 { 2 } else { 1 }
                + if added_count == 1 { 2 } else { 1 };
            let ratio = total as f64 / after as f64;
            if ratio < 1.0 && rng.random::<f64>() >= ratio {
                return MtMove::Rejected;
            }
        }
        rows[i] &= !bit;
        rows[u] |= bit;
        MtMove::Accepted
    }

    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut ChainState, rng: &mut R) -> MtMove {
        let mut rows = state.current.rows().to_vec();
        let outcome = self.move_rows(&mut rows, rng);
        state.iteration += 1;
        if outcome == MtMove::Accepted {
            state.current = state.current.with_rows(rows);
            state.accepted += 1;
        }
        outcome
    }

    /// The state after [`OVERDISPERSED_STEPS`] moves from `original`.
    pub fn overdispersed_seed<R: Rng + ?Sized>(&self, original: &CaptureHistory, rng: &mut R) -> Reordering {
        let mut rows = original.rows().to_vec();
        for _ in 0..OVERDISPERSED_STEPS {
            if self.move_rows(&mut rows, rng) == MtMove::Frozen && movable_captures(&rows) == 0 {
                return original.clone();
            }
        }
        original.with_rows(rows)
    }
}

fn nth_set_bit(mut row: u64, n: u32) -> usize {
    for _ in 0..n {
        row &= row - 1;
    }
    row.trailing_zeros() as usize
}

/// Single swap move under the default (always-accept) rule.
pub fn mt_step<R: Rng + ?Sized>(mut state: ChainState, stat: &SuffStatMt, rng: &mut R) -> ChainState {
    MtSampler::new(stat, false).step(&mut state, rng);
    state
}

/// Over-dispersed chain seed: the state after 1000 default moves from `original`.
pub fn mt_overdispersed_seed<R: Rng + ?Sized>(
    stat: &SuffStatMt,
    original: &CaptureHistory,
    rng: &mut R,
) -> Reordering {
    MtSampler::new(stat, false).overdispersed_seed(original, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::suffstat::{reduce_mt, Model};

    fn small_mt() -> CaptureHistory {
        CaptureHistory::from_occasion_sets(&[&["B", "C"], &["A", "C"], &["B"]], None).unwrap()
    }

    #[test]
    fn occasion_selection_on_small_history() {
        let h = small_mt();
        assert_eq!(MtSampler::occasion_probabilities(h.rows(), 3), vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn nth_set_bit_walks_bits() {
        assert_eq!(nth_set_bit(0b10110, 0), 1);
        assert_eq!(nth_set_bit(0b10110, 1), 2);
        assert_eq!(nth_set_bit(0b10110, 2), 4);
    }

    #[test]
    fn single_captures_freeze_the_chain() {
        let h = CaptureHistory::from_occasion_sets(&[&["A"], &["B"], &["C"]], None).unwrap();
        let stat = reduce_mt(&h);
        let state = mt_step(ChainState::new(h.clone(), Model::Mt), &stat, &mut substream(1, &[]));
        assert_eq!(state.current, h);
        assert_eq!((state.iteration, state.accepted), (1, 0));
        assert_eq!(mt_overdispersed_seed(&stat, &h, &mut substream(2, &[])), h);
    }

    #[test]
    fn moves_preserve_the_statistic() {
        let h = small_mt();
        let stat = reduce_mt(&h);
        for hastings in [false, true] {
            let mut sampler = MtSampler::new(&stat, hastings);
            let mut state = ChainState::new(h.clone(), Model::Mt);
            let mut rng = substream(3, &[u64::from(hastings)]);
            for _ in 0..2000 {
                sampler.step(&mut state, &mut rng);
                assert_eq!(reduce_mt(&state.current), stat);
            }
        }
    }

    #[test]
    fn overdispersed_seed_is_deterministic_and_consistent() {
        let h = small_mt();
        let stat = reduce_mt(&h);
        let a = mt_overdispersed_seed(&stat, &h, &mut substream(4, &[]));
        let b = mt_overdispersed_seed(&stat, &h, &mut substream(4, &[]));
        assert_eq!(a, b);
        assert_eq!(reduce_mt(&a), stat);
    }
}
