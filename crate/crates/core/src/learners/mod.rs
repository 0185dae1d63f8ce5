//! Tabular learners that consume true, noisy or corrected rewards.

mod episode;
mod filter;
mod phased;
mod update;

pub use episode::{run_episode_loop, PairStats, RunOutput, RunRecord, RunRngs};
pub use filter::{sample_mean_filter, SampleMeanFilter, DEFAULT_FILTER_WINDOW};
pub use phased::{phased_q_learning, phased_q_learning_with, PhasedConfig};
pub use update::{q_update, sarsa_update};

use crate::error::{invalid_arg, Result};
use crate::estimator::EstimatorConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `α = 1 / (1 + visits(s, a))^exponent`.
    Polynomial {
        exponent: f64,
    },
    Constant(f64),
}

impl Default for StepSize {
    fn default() -> Self {
        StepSize::Polynomial { exponent: 0.77 }
    }
}

impl StepSize {
    /// Step size for the update that follows `visits` earlier updates.
    pub fn alpha(&self, visits: u64) -> f64 {
        match *self {
            StepSize::Polynomial { exponent } => (1.0 + visits as f64).powf(-exponent),
            StepSize::Constant(a) => a,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            StepSize::Polynomial { exponent } if !(exponent > 0.5 && exponent <= 1.0) => {
                Err(invalid_arg(format!(
                    "step-size exponent must lie in (0.5, 1], got {exponent}"
                )))
            }
            StepSize::Constant(a) if !(a > 0.0 && a <= 1.0) => Err(invalid_arg(format!(
                "constant step size must lie in (0, 1], got {a}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exploration {
    /// Linear decay from `start` to `end` over `decay_fraction · max_steps`.
    EpsilonGreedy {
        start: f64,
        end: f64,
        decay_fraction: f64,
    },
    Boltzmann {
        temperature: f64,
    },
}

impl Default for Exploration {
    fn default() -> Self {
        Exploration::EpsilonGreedy {
            start: 1.0,
            end: 0.05,
            decay_fraction: 0.5,
        }
    }
}

impl Exploration {
    pub fn epsilon(&self, step: u64, max_steps: u64) -> f64 {
        match *self {
            Exploration::EpsilonGreedy {
                start,
                end,
                decay_fraction,
            } => {
                let horizon = decay_fraction * max_steps as f64;
                let frac = if horizon > 0.0 {
                    (step as f64 / horizon).min(1.0)
                } else {
                    1.0
                };
                start + (end - start) * frac
            }
            Exploration::Boltzmann { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Exploration::EpsilonGreedy {
                start,
                end,
                decay_fraction,
            } => {
                let unit = |x: f64| (0.0..=1.0).contains(&x);
                if !(unit(start) && unit(end) && unit(decay_fraction)) {
                    return Err(invalid_arg("epsilon schedule values must lie in [0, 1]"));
                }
                Ok(())
            }
            Exploration::Boltzmann { temperature }
                if !(temperature > 0.0 && temperature.is_finite()) =>
            {
                Err(invalid_arg(format!(
                    "temperature must be positive, got {temperature}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    QLearning,
    Sarsa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RewardMode {
    True,
    Noisy,
    SurrogateKnown,
    SurrogateEstimated,
}

impl RewardMode {
    pub const ALL: [RewardMode; 4] = [
        RewardMode::True,
        RewardMode::Noisy,
        RewardMode::SurrogateKnown,
        RewardMode::SurrogateEstimated,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RewardMode::True => "true",
            RewardMode::Noisy => "noisy",
            RewardMode::SurrogateKnown => "surrogate-known",
            RewardMode::SurrogateEstimated => "surrogate-estimated",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl std::fmt::Display for RewardMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub reward_mode: RewardMode,
    /// Weight of the surrogate in the blend with raw values.
    pub eta: f64,
    pub step_size: StepSize,
    pub exploration: Exploration,
    /// Sample-mean window over corrected rewards per pair.
    pub variance_reduction: Option<usize>,
    pub max_steps: u64,
    /// Greedy-policy evaluation cadence in steps.
    pub eval_interval: u64,
    pub estimator: EstimatorConfig,
    /// Keep one estimate per state instead of one global estimate.
    pub per_state_estimation: bool,
    /// Collect per-pair reward-stream statistics.
    pub track_reward_stats: bool,
    pub initial_q: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::QLearning,
            reward_mode: RewardMode::SurrogateKnown,
            eta: 1.0,
            step_size: StepSize::default(),
            exploration: Exploration::default(),
            variance_reduction: None,
            max_steps: 20_000,
            eval_interval: 500,
            estimator: EstimatorConfig::default(),
            per_state_estimation: false,
            track_reward_stats: false,
            initial_q: 0.0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid_arg(format!(
                "eta must lie in [0, 1], got {}",
                self.eta
            )));
        }
        self.step_size.validate()?;
        self.exploration.validate()?;
        if self.variance_reduction == Some(0) {
            return Err(invalid_arg("variance-reduction window must be at least 1"));
        }
        if self.max_steps == 0 || self.eval_interval == 0 {
            return Err(invalid_arg("max_steps and eval_interval must be positive"));
        }
        if self.estimator.reestimate_every == 0 {
            return Err(invalid_arg("re-estimation cadence must be positive"));
        }
        if !self.initial_q.is_finite() {
            return Err(invalid_arg("initial Q value must be finite"));
        }
        Ok(())
    }
}
