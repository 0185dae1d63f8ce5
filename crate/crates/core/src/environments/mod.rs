//! Small environments that feed level-indexed rewards to the noise channel.

mod bandit;
mod chain;
mod control;
mod grid;
mod random;

use rand::RngCore;

pub use bandit::ContinuousRewardBandit;
pub use chain::{make_six_state_chain, make_six_state_chain_variant, ChainVariant, SixStateChain};
pub use control::{
    corrupt_unary_reward_space, unary_corruption_channel, ContinuousControlLite, ControlParams,
};
pub use grid::{make_gridworld, GridSpec};
pub use random::{make_random_mdp, RandomMdpSpec};

use crate::error::{invalid_arg, invalid_model, Result};
use crate::mdp::{optimal_q, sample_transition, MdpModel, QTable, DEFAULT_VI_TOLERANCE};
use crate::scalar::Real;
use crate::surrogate::RewardLevels;

/// Result of one environment step. `level` indexes the environment's
/// reward level set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub next: usize,
    pub level: usize,
    /// The next state is terminal and contributes no bootstrap value.
    pub done: bool,
    /// The episode was cut by a horizon; the next state still bootstraps.
    pub truncated: bool,
}

pub trait Environment<T: Real> {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reward_levels(&self) -> &RewardLevels<T>;
    fn discount(&self) -> T;
    fn reset(&mut self, rng: &mut dyn RngCore) -> usize;
    fn step(&mut self, action: usize, rng: &mut dyn RngCore) -> Result<StepOutcome>;
    /// Exact action values, when the environment admits them.
    fn oracle(&self) -> Option<&Oracle<T>> {
        None
    }
}

/// Optimal action values used to score learned policies.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle<T> {
    pub q_star: QTable<T>,
    pub v_star: Vec<T>,
    pub terminal: Vec<bool>,
}

/// Slack allowed when deciding whether an action is optimal.
pub const OPTIMALITY_TOL: f64 = 1e-8;

impl<T: Real> Oracle<T> {
    pub fn from_model(model: &MdpModel<T>) -> Result<Self> {
        let q_star = optimal_q(model, T::lit(DEFAULT_VI_TOLERANCE))?;
        Ok(Self::from_q(
            q_star,
            (0..model.num_states())
                .map(|s| model.is_terminal(s))
                .collect(),
        ))
    }

    pub fn from_q(q_star: QTable<T>, terminal: Vec<bool>) -> Self {
        let v_star = (0..q_star.num_states())
            .map(|s| {
                if terminal[s] {
                    T::zero()
                } else {
                    q_star.max(s)
                }
            })
            .collect();
        Self {
            q_star,
            v_star,
            terminal,
        }
    }

    pub fn is_optimal(&self, s: usize, a: usize) -> bool {
        self.terminal[s] || self.q_star.get(s, a) >= self.v_star[s] - T::lit(OPTIMALITY_TOL)
    }

    /// The greedy policy of `q` takes an optimal action at every
    /// non-terminal state. Ties in `Q*` accept any of the tied actions.
    pub fn policy_matches(&self, q: &QTable<T>) -> bool {
        (0..self.terminal.len()).all(|s| self.is_optimal(s, q.greedy(s)))
    }

    /// `max |Q - Q*|` over non-terminal states.
    pub fn q_error(&self, q: &QTable<T>) -> T {
        q.sup_distance(&self.q_star, |s| !self.terminal[s])
    }
}

/// A finite MDP driven through its generative model.
#[derive(Debug, Clone)]
pub struct MdpEnv<T> {
    model: MdpModel<T>,
    levels: RewardLevels<T>,
    /// Level index per `[s][a][s']` entry.
    level_of: Vec<usize>,
    start: usize,
    horizon: Option<usize>,
    oracle: Oracle<T>,
    state: usize,
    elapsed: usize,
}

impl<T: Real> MdpEnv<T> {
    /// Uses the distinct rewards of `model` as its level set.
    pub fn new(model: MdpModel<T>, start: usize, horizon: Option<usize>) -> Result<Self> {
        let mut values = model.reward_values();
        if values.len() < 2 {
            // A constant-reward model still needs two levels for a channel.
            let v = values.first().copied().unwrap_or(T::zero());
            values = if v > T::zero() {
                vec![T::zero(), v]
            } else {
                vec![v, v + T::one()]
            };
        }
        let levels = RewardLevels::with_r_max(values, model.r_max())?;
        Self::with_levels(model, levels, start, horizon)
    }

    pub fn with_levels(
        model: MdpModel<T>,
        levels: RewardLevels<T>,
        start: usize,
        horizon: Option<usize>,
    ) -> Result<Self> {
        if start >= model.num_states() || model.is_terminal(start) {
            return Err(invalid_arg(format!(
                "start state {start} must be a valid non-terminal state"
            )));
        }
        if horizon == Some(0) {
            return Err(invalid_arg("horizon must be positive"));
        }
        let (ns, na) = (model.num_states(), model.num_actions());
        let tol = T::lit(1e-12);
        let mut level_of = vec![0; ns * na * ns];
        for s in 0..ns {
            for a in 0..na {
                let (p, r) = (model.transition_row(s, a), model.reward_row(s, a));
                for n in 0..ns {
                    match levels.index_of(r[n], tol) {
                        Some(l) => level_of[(s * na + a) * ns + n] = l,
                        None if p[n] > T::zero() => {
                            return Err(invalid_model(format!(
                                "reward {} at ({s}, {a}, {n}) is not a declared level",
                                r[n]
                            )))
                        }
                        None => {}
                    }
                }
            }
        }
        let oracle = Oracle::from_model(&model)?;
        Ok(Self {
            model,
            levels,
            level_of,
            start,
            horizon,
            oracle,
            state: start,
            elapsed: 0,
        })
    }

    pub fn model(&self) -> &MdpModel<T> {
        &self.model
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Level index of the reward on `(s, a, next)`.
    pub fn level_of(&self, s: usize, a: usize, next: usize) -> usize {
        let (ns, na) = (self.model.num_states(), self.model.num_actions());
        self.level_of[(s * na + a) * ns + next]
    }

    /// Generative-model call that leaves the episode state untouched.
    pub fn sample(&self, s: usize, a: usize, rng: &mut dyn RngCore) -> Result<(usize, usize)> {
        let (next, _) = sample_transition(&self.model, s, a, rng)?;
        Ok((next, self.level_of(s, a, next)))
    }
}

impl<T: Real> Environment<T> for MdpEnv<T> {
    fn num_states(&self) -> usize {
        self.model.num_states()
    }

    fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    fn reward_levels(&self) -> &RewardLevels<T> {
        &self.levels
    }

    fn discount(&self) -> T {
        self.model.gamma()
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> usize {
        self.state = self.start;
        self.elapsed = 0;
        self.state
    }

    fn step(&mut self, action: usize, rng: &mut dyn RngCore) -> Result<StepOutcome> {
        let (next, level) = self.sample(self.state, action, rng)?;
        self.state = next;
        self.elapsed += 1;
        let done = self.model.is_terminal(next);
        let truncated = !done && self.horizon.is_some_and(|h| self.elapsed >= h);
        Ok(StepOutcome {
            next,
            level,
            done,
            truncated,
        })
    }

    fn oracle(&self) -> Option<&Oracle<T>> {
        Some(&self.oracle)
    }
}
