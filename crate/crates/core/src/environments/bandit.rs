use rand::RngCore;

use super::{Environment, Oracle, StepOutcome};
use crate::error::{invalid_arg, Result};
use crate::mdp::QTable;
use crate::scalar::Real;
use crate::surrogate::{Quantizer, RewardLevels};

/// Single state, one fixed continuous reward per arm. Rewards are reported
/// through a quantizer, and every pull is a one-step episode.
#[derive(Debug, Clone)]
pub struct ContinuousRewardBandit<T> {
    rewards: Vec<T>,
    quantizer: Quantizer<T>,
    levels: RewardLevels<T>,
    arm_levels: Vec<usize>,
    oracle: Oracle<T>,
}

impl<T: Real> ContinuousRewardBandit<T> {
    pub fn new(rewards: Vec<T>, quantizer: Quantizer<T>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(invalid_arg("bandit needs at least one arm"));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(invalid_arg("arm rewards must be finite"));
        }
        let levels = quantizer.levels();
        let arm_levels: Vec<usize> = rewards
            .iter()
            .map(|&r| quantizer.quantize(r).level)
            .collect();
        let mut q = QTable::new(1, rewards.len(), T::zero());
        for (a, &l) in arm_levels.iter().enumerate() {
            q.set(0, a, levels.value(l));
        }
        let oracle = Oracle::from_q(q, vec![false]);
        Ok(Self {
            rewards,
            quantizer,
            levels,
            arm_levels,
            oracle,
        })
    }

    pub fn rewards(&self) -> &[T] {
        &self.rewards
    }

    pub fn quantizer(&self) -> &Quantizer<T> {
        &self.quantizer
    }

    pub fn arm_level(&self, arm: usize) -> usize {
        self.arm_levels[arm]
    }
}

impl<T: Real> Environment<T> for ContinuousRewardBandit<T> {
    fn num_states(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        self.rewards.len()
    }

    fn reward_levels(&self) -> &RewardLevels<T> {
        &self.levels
    }

    fn discount(&self) -> T {
        T::zero()
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> usize {
        0
    }

    fn step(&mut self, action: usize, _rng: &mut dyn RngCore) -> Result<StepOutcome> {
        let level = *self
            .arm_levels
            .get(action)
            .ok_or_else(|| invalid_arg(format!("arm {action} out of range")))?;
        Ok(StepOutcome {
            next: 0,
            level,
            done: false,
            truncated: true,
        })
    }

    fn oracle(&self) -> Option<&Oracle<T>> {
        Some(&self.oracle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{build_confusion, NoiseSpec};
    use crate::surrogate::{surrogate_multi, Representative};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn corrected_reward_expectation_equals_representative() {
        let q = Quantizer::new(-20.0, 0.0, 20, Representative::Midpoint).unwrap();
        let bandit =
            ContinuousRewardBandit::new(vec![-16.28, -3.5, -0.0001, -19.99], q.clone()).unwrap();
        let levels = bandit.reward_levels().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for spec in [
            NoiseSpec::symmetric(0.2),
            NoiseSpec::rand_one(0.3),
            NoiseSpec::rand_all(0.25),
        ] {
            let c = build_confusion(&spec, levels.len(), &mut rng).unwrap();
            let table = surrogate_multi(&levels, &c).unwrap();
            for a in 0..4 {
                let l = bandit.arm_level(a);
                let expect: f64 = (0..levels.len())
                    .map(|k| c.entry(l, k) * table.value(k))
                    .sum();
                assert!((expect - q.representative_of(l)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn arms_are_deterministic() {
        let q = Quantizer::new(0.0, 1.0, 4, Representative::UpperEndpoint).unwrap();
        let mut b = ContinuousRewardBandit::new(vec![0.1, 0.9], q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..3 {
            assert_eq!(b.step(0, &mut rng).unwrap().level, 0);
            assert_eq!(b.step(1, &mut rng).unwrap().level, 3);
        }
        let oracle = b.oracle().unwrap();
        assert!(oracle.is_optimal(0, 1) && !oracle.is_optimal(0, 0));
    }
}
