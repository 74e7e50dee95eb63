//! Reorderings consistent with `{s, C_k, r_k}` (Mb).
//!
//! For each occasion `k`, `C_k` first captures are drawn without replacement from the
//! units not yet captured, then `r_k` recaptures from the units first captured before
//! `k`. Every consistent reordering is produced by exactly one draw sequence of equal
//! probability, so candidates are uniform and are always accepted.

use rand::seq::SliceRandom;
use rand::Rng;

use super::ChainState;
use crate::history::Reordering;
use crate::suffstat::SuffStatMb;

#[derive(Debug, Clone)]
pub struct MbSampler {
    first_captures: Vec<usize>,
    /// `r_k` indexed by occasion; `r_1 = 0`.
    recaptures: Vec<usize>,
    order: Vec<usize>,
}

impl MbSampler {
    pub fn new(stat: &SuffStatMb) -> Self {
        let mut recaptures = vec![0];
        recaptures.extend_from_slice(stat.occasion_recaptures());
        Self {
            first_captures: stat.first_captures().to_vec(),
            recaptures,
            order: (0..stat.n_units()).collect(),
        }
    }

    pub fn candidate_rows<R: Rng + ?Sized>(&mut self, rng: &mut R, rows: &mut [u64]) {
        rows.fill(0);
        // order[..unmarked] holds the units not yet captured; partial_shuffle moves the
        // chosen elements to the end of the slice it is given
        let mut unmarked = self.order.len();
        for (k, (&first, &recap)) in self.first_captures.iter().zip(&self.recaptures).enumerate() {
            let bit = 1u64 << k;
            if recap > 0 {
                let (chosen, _) = self.order[unmarked..].partial_shuffle(rng, recap);
                for &i in chosen.iter() {
                    rows[i] |= bit;
                }
            }
            if first > 0 {
                let (chosen, _) = self.order[..unmarked].partial_shuffle(rng, first);
                for &i in chosen.iter() {
                    rows[i] |= bit;
                }
                unmarked -= first;
            }
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut ChainState, rng: &mut R) -> bool {
        let mut rows = vec![0u64; state.current.n_units()];
        self.candidate_rows(rng, &mut rows);
        state.current = state.current.with_rows(rows);
        state.iteration += 1;
        state.accepted += 1;
        true
    }
}

pub fn mb_candidate<R: Rng + ?Sized>(stat: &SuffStatMb, rng: &mut R) -> Reordering {
    let mut rows = vec![0u64; stat.n_units()];
    MbSampler::new(stat).candidate_rows(rng, &mut rows);
    stat.template(None).with_rows(rows)
}

pub fn mb_step<R: Rng + ?Sized>(mut state: ChainState, stat: &SuffStatMb, rng: &mut R) -> ChainState {
    MbSampler::new(stat).step(&mut state, rng);
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::CaptureHistory;
    use crate::rng::substream;
    use crate::suffstat::{reduce_mb, Model};

    fn small_mb() -> CaptureHistory {
        CaptureHistory::from_occasion_sets(&[&["A", "C"], &["A", "B", "C"], &["B"]], None).unwrap()
    }

    #[test]
    fn candidates_are_consistent() {
        let h = small_mb();
        let stat = reduce_mb(&h);
        let mut rng = substream(7, &[]);
        for _ in 0..500 {
            assert_eq!(reduce_mb(&mb_candidate(&stat, &mut rng)), stat);
        }
    }

    #[test]
    fn no_recaptures_gives_single_captures() {
        let h = CaptureHistory::from_occasion_sets(&[&["A"], &["B", "C"], &["D"]], None).unwrap();
        let stat = reduce_mb(&h);
        let r = mb_candidate(&stat, &mut substream(8, &[]));
        assert!(r.rows().iter().all(|r| r.count_ones() == 1));
    }

    #[test]
    fn everyone_first_captured_on_occasion_one() {
        let h = CaptureHistory::from_occasion_sets(&[&["A", "B", "C"], &["A"], &["B", "C"]], None).unwrap();
        let stat = reduce_mb(&h);
        let mut rng = substream(9, &[]);
        for _ in 0..50 {
            assert!(mb_candidate(&stat, &mut rng).rows().iter().all(|r| r & 1 == 1));
        }
    }

    #[test]
    fn steps_always_accept() {
        let h = small_mb();
        let stat = reduce_mb(&h);
        let mut state = ChainState::new(h.clone(), Model::Mb);
        let mut rng = substream(10, &[]);
        for _ in 0..25 {
            state = mb_step(state, &stat, &mut rng);
        }
        assert_eq!((state.iteration, state.accepted), (25, 25));
    }
}
