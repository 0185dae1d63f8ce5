use rand::{Rng, RngCore};

use super::{Environment, StepOutcome};
use crate::error::{invalid_arg, Result};
use crate::estimator::StateDiscretizer;
use crate::noise::ConfusionMatrix;
use crate::scalar::Real;
use crate::surrogate::RewardLevels;

/// Extends a unary survival reward `{r}` to `{-r, r}` so a binary channel
/// can inject the corrupted value `-r`.
pub fn corrupt_unary_reward_space<T: Real>(levels: &RewardLevels<T>) -> Result<RewardLevels<T>> {
    if levels.len() != 1 {
        return Err(invalid_arg(format!(
            "expected a unary level set, got {} levels",
            levels.len()
        )));
    }
    let r = levels.value(0);
    if !(r > T::zero()) {
        return Err(invalid_arg("the survival reward must be positive"));
    }
    RewardLevels::new(vec![-r, r])
}

/// Channel over `[-r, r]` where the true reward `r` is corrupted with
/// probability `e_plus` and `-r` (never emitted) is left alone.
pub fn unary_corruption_channel<T: Real>(e_plus: T) -> Result<ConfusionMatrix<T>> {
    ConfusionMatrix::from_flip_rates(T::zero(), e_plus)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    pub dt: f64,
    /// Destabilising gain on position.
    pub stiffness: f64,
    pub force: f64,
    /// Episode fails once `|x|` reaches this.
    pub fail_position: f64,
    pub position_bound: f64,
    pub velocity_bound: f64,
    pub init_spread: f64,
    pub horizon: usize,
    pub position_bins: usize,
    pub velocity_bins: usize,
    pub gamma: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            stiffness: 1.0,
            force: 2.0,
            fail_position: 1.0,
            position_bound: 1.2,
            velocity_bound: 2.0,
            init_spread: 0.1,
            horizon: 200,
            position_bins: 8,
            velocity_bins: 10,
            gamma: 0.99,
        }
    }
}

/// Balance task with linear dynamics
/// `x' = x + dt v`, `v' = v + dt (k x + f u)`, `u ∈ {-1, +1}`.
/// Each surviving step earns the survival reward.
#[derive(Debug, Clone)]
pub struct ContinuousControlLite<T> {
    params: ControlParams,
    discretizer: StateDiscretizer<T>,
    levels: RewardLevels<T>,
    survival_level: usize,
    x: T,
    v: T,
    elapsed: usize,
}

impl<T: Real> ContinuousControlLite<T> {
    /// Unary reward space `{+1}`.
    pub fn new(params: ControlParams) -> Result<Self> {
        Self::build(params, RewardLevels::new(vec![T::one()])?)
    }

    /// Reward space `{-1, +1}` for use with a corruption channel.
    pub fn corrupted(params: ControlParams) -> Result<Self> {
        let levels = corrupt_unary_reward_space(&RewardLevels::new(vec![T::one()])?)?;
        Self::build(params, levels)
    }

    fn build(params: ControlParams, levels: RewardLevels<T>) -> Result<Self> {
        if !(params.dt > 0.0
            && params.fail_position > 0.0
            && params.position_bound >= params.fail_position)
        {
            return Err(invalid_arg(
                "control parameters need dt > 0 and bound >= failure position > 0",
            ));
        }
        if !(params.velocity_bound > 0.0) || params.horizon == 0 {
            return Err(invalid_arg(
                "control parameters need a positive velocity bound and horizon",
            ));
        }
        if !(0.0..1.0).contains(&params.gamma) {
            return Err(invalid_arg("control discount must lie in [0, 1)"));
        }
        let f = params.fail_position;
        let vb = params.velocity_bound;
        let discretizer = StateDiscretizer::new(vec![
            (T::lit(-f), T::lit(f), params.position_bins),
            (T::lit(-vb), T::lit(vb), params.velocity_bins),
        ])?;
        let survival_level = levels.len() - 1;
        Ok(Self {
            params,
            discretizer,
            levels,
            survival_level,
            x: T::zero(),
            v: T::zero(),
            elapsed: 0,
        })
    }

    pub fn params(&self) -> &ControlParams {
        &self.params
    }

    pub fn discretizer(&self) -> &StateDiscretizer<T> {
        &self.discretizer
    }

    pub fn observation(&self) -> [T; 2] {
        [self.x, self.v]
    }

    /// Places the system at an arbitrary point (clamped to bounds).
    pub fn set_state(&mut self, x: T, v: T) -> usize {
        let pb = T::lit(self.params.position_bound);
        let vb = T::lit(self.params.velocity_bound);
        self.x = x.max(-pb).min(pb);
        self.v = v.max(-vb).min(vb);
        self.elapsed = 0;
        self.current_state()
    }

    fn current_state(&self) -> usize {
        self.discretizer
            .discretize(&[self.x, self.v])
            .expect("two components")
    }
}

impl<T: Real> Environment<T> for ContinuousControlLite<T> {
    fn num_states(&self) -> usize {
        self.discretizer.num_states()
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reward_levels(&self) -> &RewardLevels<T> {
        &self.levels
    }

    fn discount(&self) -> T {
        T::lit(self.params.gamma)
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> usize {
        let s = self.params.init_spread;
        let x = rng.random_range(-s..=s);
        let v = rng.random_range(-s..=s);
        self.set_state(T::lit(x), T::lit(v))
    }

    fn step(&mut self, action: usize, _rng: &mut dyn RngCore) -> Result<StepOutcome> {
        if action >= 2 {
            return Err(invalid_arg(format!("action {action} out of range")));
        }
        let p = &self.params;
        let u = if action == 1 { T::one() } else { -T::one() };
        let dt = T::lit(p.dt);
        let x = self.x + dt * self.v;
        let v = self.v + dt * (T::lit(p.stiffness) * self.x + T::lit(p.force) * u);
        let elapsed = self.elapsed + 1;
        self.set_state(x, v);
        self.elapsed = elapsed;
        let done = self.x.abs() >= T::lit(self.params.fail_position);
        let truncated = !done && self.elapsed >= self.params.horizon;
        Ok(StepOutcome {
            next: self.current_state(),
            level: self.survival_level,
            done,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::perturb;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eighty_states() {
        let env = ContinuousControlLite::<f64>::new(ControlParams::default()).unwrap();
        assert_eq!(env.num_states(), 80);
        assert_eq!(env.reward_levels().values(), &[1.0]);
    }

    #[test]
    fn corrupted_levels_and_channel() {
        let levels = corrupt_unary_reward_space(&RewardLevels::new(vec![1.0]).unwrap()).unwrap();
        assert_eq!(levels.values(), &[-1.0, 1.0]);
        let c = unary_corruption_channel(0.3).unwrap();
        // The unused true level -1 never turns into +1.
        assert_eq!(c.row(0), &[1.0, 0.0]);
        assert!(corrupt_unary_reward_space(&levels).is_err());
    }

    #[test]
    fn zero_corruption_leaves_rewards() {
        let c = unary_corruption_channel(0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| perturb(1, &c, &mut rng).unwrap() == 1));
    }

    #[test]
    fn corruption_frequency() {
        let c = unary_corruption_channel(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let flips = (0..n)
            .filter(|_| perturb(1, &c, &mut rng).unwrap() == 0)
            .count();
        assert!((flips as f64 / n as f64 - 0.3).abs() <= 0.01);
    }

    #[test]
    fn states_stay_in_bounds_and_fail_or_truncate() {
        let mut env = ContinuousControlLite::<f64>::corrupted(ControlParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        env.reset(&mut rng);
        let mut steps = 0;
        loop {
            let out = env.step(1, &mut rng).unwrap();
            steps += 1;
            let [x, v] = env.observation();
            assert!(x.abs() <= 1.2 && v.abs() <= 2.0);
            assert!(out.next < 80);
            assert_eq!(out.level, 1);
            if out.done || out.truncated {
                assert!(out.done, "constant push must fail before the horizon");
                break;
            }
        }
        assert!(steps < 200);
    }

    #[test]
    fn mapping_is_deterministic() {
        let mut a = ContinuousControlLite::<f64>::new(ControlParams::default()).unwrap();
        let mut b = a.clone();
        let (mut ra, mut rb) = (ChaCha8Rng::seed_from_u64(9), ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.reset(&mut ra), b.reset(&mut rb));
        for t in 0..50 {
            assert_eq!(
                a.step(t % 2, &mut ra).unwrap(),
                b.step(t % 2, &mut rb).unwrap()
            );
        }
    }
}
