//! Online confusion-matrix estimation from repeated noisy observations.
//!
//! Each state-action pair keeps counts of the reward levels observed there.
//! The modal level is taken as the pair's true reward (majority vote, ties
//! broken uniformly), and row `i` of the estimate pools the observations of
//! every pair that voted `i`. This only identifies `C` when the true reward
//! of each pair is deterministic.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{invalid_arg, Error, Result};
use crate::noise::ConfusionMatrix;
use crate::scalar::Real;

/// Default FIFO capacity per state-action pair.
pub const DEFAULT_D_MAX: usize = 1000;
/// Default re-estimation cadence in environment steps.
pub const DEFAULT_REESTIMATE_EVERY: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Observations required per pair (on average) before an estimate is
    /// marked ready. `None` means `10 · M`.
    pub d_min_per_pair: Option<usize>,
    /// FIFO capacity per pair; `None` keeps every observation.
    pub d_max: Option<usize>,
    pub reestimate_every: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            d_min_per_pair: None,
            d_max: Some(DEFAULT_D_MAX),
            reestimate_every: DEFAULT_REESTIMATE_EVERY,
        }
    }
}

impl EstimatorConfig {
    pub fn d_min_per_pair(&self, num_levels: usize) -> usize {
        self.d_min_per_pair.unwrap_or(10 * num_levels)
    }
}

#[derive(Debug, Clone)]
pub struct ObservationBuffer {
    num_states: usize,
    num_actions: usize,
    num_levels: usize,
    capacity: Option<usize>,
    counts: Vec<u64>,
    fifos: Vec<VecDeque<u16>>,
    total: usize,
}

impl ObservationBuffer {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        num_levels: usize,
        capacity: Option<usize>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || num_levels == 0 {
            return Err(invalid_arg("buffer dimensions must be positive"));
        }
        if num_levels > u16::MAX as usize {
            return Err(invalid_arg("too many reward levels"));
        }
        if capacity == Some(0) {
            return Err(invalid_arg("FIFO capacity must be positive"));
        }
        let pairs = num_states * num_actions;
        Ok(Self {
            num_states,
            num_actions,
            num_levels,
            capacity,
            counts: vec![0; pairs * num_levels],
            fifos: if capacity.is_some() {
                vec![VecDeque::new(); pairs]
            } else {
                Vec::new()
            },
            total: 0,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    /// Observations currently held across all pairs.
    pub fn total(&self) -> usize {
        self.total
    }

    fn pair(&self, s: usize, a: usize) -> Result<usize> {
        if s >= self.num_states || a >= self.num_actions {
            return Err(invalid_arg(format!("pair ({s}, {a}) out of range")));
        }
        Ok(s * self.num_actions + a)
    }

    pub fn record(&mut self, s: usize, a: usize, level: usize) -> Result<()> {
        let p = self.pair(s, a)?;
        if level >= self.num_levels {
            return Err(invalid_arg(format!(
                "level {level} outside 0..{}",
                self.num_levels
            )));
        }
        let m = self.num_levels;
        self.counts[p * m + level] += 1;
        self.total += 1;
        if let Some(cap) = self.capacity {
            let fifo = &mut self.fifos[p];
            fifo.push_back(level as u16);
            if fifo.len() > cap {
                let old = fifo.pop_front().expect("non-empty") as usize;
                self.counts[p * m + old] -= 1;
                self.total -= 1;
            }
        }
        Ok(())
    }

    pub fn counts(&self, s: usize, a: usize) -> &[u64] {
        let p = s * self.num_actions + a;
        &self.counts[p * self.num_levels..(p + 1) * self.num_levels]
    }

    pub fn observations(&self, s: usize, a: usize) -> u64 {
        self.counts(s, a).iter().sum()
    }

    /// Recent observations at a pair, oldest first (windowed buffers only).
    pub fn window(&self, s: usize, a: usize) -> Option<Vec<usize>> {
        self.capacity?;
        let p = s * self.num_actions + a;
        Some(self.fifos[p].iter().map(|&l| l as usize).collect())
    }

    /// Majority-vote true level at `(s, a)`.
    pub fn predict_true_reward<R: Rng + ?Sized>(
        &self,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<usize> {
        self.pair(s, a)?;
        majority_vote(self.counts(s, a), rng).ok_or(Error::NotReady {
            state: s,
            action: a,
        })
    }

    pub fn estimate_confusion<T: Real, R: Rng + ?Sized>(
        &self,
        d_min_per_pair: usize,
        rng: &mut R,
    ) -> EstimatedConfusion<T> {
        let pairs = (0..self.num_states).flat_map(|s| (0..self.num_actions).map(move |a| (s, a)));
        let needed = d_min_per_pair * self.num_states * self.num_actions;
        self.estimate_over(pairs, needed, rng)
    }

    /// One estimate per state, pooling only that state's actions.
    pub fn estimate_confusion_per_state<T: Real, R: Rng + ?Sized>(
        &self,
        d_min_per_pair: usize,
        rng: &mut R,
    ) -> Vec<EstimatedConfusion<T>> {
        (0..self.num_states)
            .map(|s| {
                self.estimate_over(
                    (0..self.num_actions).map(|a| (s, a)),
                    d_min_per_pair * self.num_actions,
                    rng,
                )
            })
            .collect()
    }

    fn estimate_over<T: Real, R: Rng + ?Sized>(
        &self,
        pairs: impl Iterator<Item = (usize, usize)>,
        needed: usize,
        rng: &mut R,
    ) -> EstimatedConfusion<T> {
        let m = self.num_levels;
        let mut pooled = vec![0u64; m * m];
        let mut support = vec![0usize; m];
        let mut seen = 0u64;
        for (s, a) in pairs {
            let counts = self.counts(s, a);
            let Some(vote) = majority_vote(counts, rng) else {
                continue;
            };
            support[vote] += 1;
            for (j, &c) in counts.iter().enumerate() {
                pooled[vote * m + j] += c;
                seen += c;
            }
        }
        let mut entries = vec![T::zero(); m * m];
        for i in 0..m {
            let row = &pooled[i * m..(i + 1) * m];
            let denom: u64 = row.iter().sum();
            if denom == 0 {
                entries[i * m + i] = T::one();
            } else {
                let d = T::lit(denom as f64);
                for j in 0..m {
                    entries[i * m + j] = T::lit(row[j] as f64) / d;
                }
            }
        }
        let matrix =
            ConfusionMatrix::from_flat(m, entries).expect("pooled frequencies are row-stochastic");
        EstimatedConfusion {
            matrix,
            per_level_support: support,
            observations: seen as usize,
            ready: seen as usize >= needed.max(1),
        }
    }
}

/// Argmax of `counts`, ties broken uniformly. `None` when all counts are zero.
pub fn majority_vote<R: Rng + ?Sized>(counts: &[u64], rng: &mut R) -> Option<usize> {
    let best = *counts.iter().max()?;
    if best == 0 {
        return None;
    }
    let ties = counts.iter().filter(|&&c| c == best).count();
    let pick = if ties == 1 {
        0
    } else {
        rng.random_range(0..ties)
    };
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == best)
        .nth(pick)
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedConfusion<T> {
    pub matrix: ConfusionMatrix<T>,
    /// Number of pairs voting for each true level.
    pub per_level_support: Vec<usize>,
    pub observations: usize,
    pub ready: bool,
}

/// Maps continuous observations to a row-major composite bin id.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDiscretizer<T> {
    dims: Vec<(T, T, usize)>,
}

impl<T: Real> StateDiscretizer<T> {
    /// `dims` holds `(lower, upper, bins)` per observation component.
    pub fn new(dims: Vec<(T, T, usize)>) -> Result<Self> {
        if dims.is_empty() {
            return Err(invalid_arg("discretizer needs at least one dimension"));
        }
        for (i, &(lo, hi, bins)) in dims.iter().enumerate() {
            if !(lo < hi) || bins == 0 {
                return Err(invalid_arg(format!(
                    "dimension {i}: need lower < upper and bins > 0"
                )));
            }
        }
        Ok(Self { dims })
    }

    pub fn num_states(&self) -> usize {
        self.dims.iter().map(|d| d.2).product()
    }

    pub fn dims(&self) -> &[(T, T, usize)] {
        &self.dims
    }

    /// Bin index of `x` in one dimension; out-of-range values clamp.
    pub fn bin(&self, dim: usize, x: T) -> usize {
        let (lo, hi, bins) = self.dims[dim];
        if !(x > lo) {
            return 0;
        }
        if x >= hi {
            return bins - 1;
        }
        let idx = ((x - lo) / (hi - lo) * T::from_count(bins)).floor();
        idx.to_usize().unwrap_or(0).min(bins - 1)
    }

    pub fn discretize(&self, observation: &[T]) -> Result<usize> {
        if observation.len() != self.dims.len() {
            return Err(invalid_arg(format!(
                "observation has {} components, discretizer expects {}",
                observation.len(),
                self.dims.len()
            )));
        }
        Ok(observation
            .iter()
            .enumerate()
            .fold(0, |acc, (d, &x)| acc * self.dims[d].2 + self.bin(d, x)))
    }
}
