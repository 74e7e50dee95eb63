//! Samplers over reorderings that share a history's sufficient statistic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::history::{CaptureHistory, Reordering};
use crate::suffstat::{Model, SufficientStatistic};

pub mod behavioural;
pub mod enumerate;
pub mod heterogeneity;
pub mod time_effects;

pub use behavioural::{mb_candidate, mb_step, MbSampler};
pub use enumerate::{enumerate_reorderings, enumerate_reorderings_over, for_each_reordering};
pub use heterogeneity::{mh_candidate, mh_step, outcome_count, MhAcceptance, MhSampler};
pub use time_effects::{mt_overdispersed_seed, mt_step, MtMove, MtSampler};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    pub current: Reordering,
    pub iteration: u64,
    pub accepted: u64,
    pub model: Model,
}

impl ChainState {
    pub fn new(current: Reordering, model: Model) -> Self {
        Self { current, iteration: 0, accepted: 0, model }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.iteration == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.iteration as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainOptions {
    /// Apply the proposal-ratio correction to Mt swap moves.
    pub hastings_correction: bool,
    pub mh_acceptance: MhAcceptance,
}

#[derive(Debug, Clone)]
enum Sampler {
    Strata(MhSampler),
    Behavioural(MbSampler),
    Time(MtSampler),
}

/// A chain over the reorderings of one observed history.
#[derive(Debug, Clone)]
pub struct Chain {
    sampler: Sampler,
    stat: SufficientStatistic,
    original: CaptureHistory,
    state: ChainState,
}

impl Chain {
    /// Builds the sampler for `model` and seeds the chain by the model's rule: a
    /// candidate draw for M0/Mh, the original ordering for Mb and Mt.
    pub fn new<R: Rng + ?Sized>(
        model: Model,
        original: &CaptureHistory,
        options: ChainOptions,
        rng: &mut R,
    ) -> Result<Self> {
        let mut chain = Self::starting_at(model, original, original.clone(), options)?;
        if let Sampler::Strata(sampler) = &mut chain.sampler {
            let mut rows = vec![0u64; original.n_units()];
            sampler.candidate_rows(rng, &mut rows);
            chain.state.current = original.with_rows(rows);
        }
        Ok(chain)
    }

    /// A chain whose state at iteration 0 is `start`, which must share the statistic.
    pub fn starting_at(
        model: Model,
        original: &CaptureHistory,
        start: Reordering,
        options: ChainOptions,
    ) -> Result<Self> {
        let stat = SufficientStatistic::reduce(model, original)?;
        let sampler = match &stat {
            SufficientStatistic::Strata(s) => Sampler::Strata(MhSampler::new(s, options.mh_acceptance)),
            SufficientStatistic::Behavioural(s) => Sampler::Behavioural(MbSampler::new(s)),
            SufficientStatistic::Time(s) => Sampler::Time(MtSampler::new(s, options.hastings_correction)),
        };
        debug_assert_eq!(SufficientStatistic::reduce(model, &start)?, stat);
        Ok(Self {
            sampler,
            stat,
            original: original.clone(),
            state: ChainState::new(start, model),
        })
    }

    /// Advances one iteration; returns whether the state changed hands (was accepted).
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let accepted = match &mut self.sampler {
            Sampler::Strata(s) => s.step(&mut self.state, rng),
            Sampler::Behavioural(s) => s.step(&mut self.state, rng),
            Sampler::Time(s) => s.step(&mut self.state, rng) == MtMove::Accepted,
        };
        if cfg!(debug_assertions) && accepted {
            let reduced = SufficientStatistic::reduce(self.state.model, &self.state.current)
                .expect("reordering keeps the original's strata");
            assert_eq!(reduced, self.stat, "chain left the statistic's reordering set");
        }
        accepted
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn current(&self) -> &Reordering {
        &self.state.current
    }

    pub fn statistic(&self) -> &SufficientStatistic {
        &self.stat
    }

    /// Starting points for `n_chains` diagnostic chains: independent candidate draws for
    /// M0/Mh/Mb; for Mt the original ordering followed by over-dispersed seeds.
    pub fn seeds<R: Rng + ?Sized>(&mut self, n_chains: usize, rng: &mut R) -> Vec<Reordering> {
        let n = self.original.n_units();
        (0..n_chains)
            .map(|c| match &mut self.sampler {
                Sampler::Strata(s) => {
                    let mut rows = vec![0u64; n];
                    s.candidate_rows(rng, &mut rows);
                    self.original.with_rows(rows)
                }
                Sampler::Behavioural(s) => {
                    let mut rows = vec![0u64; n];
                    s.candidate_rows(rng, &mut rows);
                    self.original.with_rows(rows)
                }
                Sampler::Time(s) => {
                    if c == 0 {
                        self.original.clone()
                    } else {
                        s.overdispersed_seed(&self.original, rng)
                    }
                }
            })
            .collect()
    }
}

/// Chain starting points for convergence diagnostics (see [`Chain::seeds`]).
pub fn seed_reorderings<R: Rng + ?Sized>(
    model: Model,
    original: &CaptureHistory,
    n_chains: usize,
    options: ChainOptions,
    rng: &mut R,
) -> Result<Vec<Reordering>> {
    let mut chain = Chain::starting_at(model, original, original.clone(), options)?;
    Ok(chain.seeds(n_chains, rng))
}
