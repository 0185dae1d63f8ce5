use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::filter::SampleMeanFilter;
use super::update::{q_update, sarsa_update};
use super::{Algorithm, Exploration, LearnerConfig, RewardMode};
use crate::environments::Environment;
use crate::error::{invalid_arg, Result};
use crate::estimator::{EstimatedConfusion, ObservationBuffer};
use crate::mdp::QTable;
use crate::noise::{perturb, ConfusionMatrix, NoiseChannel};
use crate::scalar::Real;
use crate::surrogate::{proxy_blend, surrogate_multi, RewardLevels, SurrogateTable};

/// Independent random streams for one run.
#[derive(Debug, Clone)]
pub struct RunRngs {
    /// Dynamics and action selection.
    pub env: ChaCha8Rng,
    /// Reward corruption.
    pub noise: ChaCha8Rng,
    /// Majority-vote tie breaking.
    pub vote: ChaCha8Rng,
}

impl RunRngs {
    pub fn from_seeds(env: u64, noise: u64, vote: u64) -> Self {
        Self {
            env: ChaCha8Rng::seed_from_u64(env),
            noise: ChaCha8Rng::seed_from_u64(noise),
            vote: ChaCha8Rng::seed_from_u64(vote),
        }
    }

    /// Three ChaCha streams sharing one key.
    pub fn from_seed(seed: u64) -> Self {
        let stream = |id| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(id);
            r
        };
        Self {
            env: stream(1),
            noise: stream(2),
            vote: stream(3),
        }
    }
}

/// Snapshot emitted at every evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub step: u64,
    /// Episodes completed so far.
    pub episode: u64,
    /// True-reward return of the most recently completed episode.
    pub ret: f64,
    pub est_err_max: Option<f64>,
    pub est_e_plus: Option<f64>,
    pub est_e_minus: Option<f64>,
    /// Greedy policy is optimal at every state, when an oracle exists.
    pub success: Option<bool>,
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 with fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// Reward statistics at one pair before and after the sample-mean filter.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairStats {
    pub unfiltered: RunningStats,
    pub filtered: RunningStats,
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub records: Vec<RunRecord>,
    pub episode_returns: Vec<f64>,
    pub q: QTable<T>,
    /// Re-estimates rejected as singular while a previous table stayed in use.
    pub singular_freezes: u64,
    /// Latest estimates (one, or one per state).
    pub estimates: Vec<EstimatedConfusion<T>>,
    pub reward_stats: Option<Vec<PairStats>>,
    pub q_error: Option<T>,
    pub success: Option<bool>,
}

/// Runs the reward-robust learning loop: observe the corrupted level,
/// record it, periodically re-estimate the channel, correct the reward,
/// and update `Q`.
pub fn run_episode_loop<T: Real, E: Environment<T> + ?Sized>(
    env: &mut E,
    channel: &NoiseChannel<T>,
    config: &LearnerConfig,
    rngs: &mut RunRngs,
) -> Result<RunOutput<T>> {
    config.validate()?;
    let levels = env.reward_levels().clone();
    let m = levels.len();
    if channel.size() != m {
        return Err(invalid_arg(format!(
            "channel has {} levels, environment has {m}",
            channel.size()
        )));
    }
    let (ns, na) = (env.num_states(), env.num_actions());
    let gamma = env.discount();
    let eta = T::lit(config.eta);
    let mode = config.reward_mode;

    let known_tables = if mode == RewardMode::SurrogateKnown {
        channel
            .matrices()
            .iter()
            .map(|c| proxy_blend(&levels, &surrogate_multi(&levels, c)?, eta))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let mut estimation = if mode == RewardMode::SurrogateEstimated {
        Some(Estimation::new(ns, na, &levels, config)?)
    } else {
        None
    };
    let mut filter = config
        .variance_reduction
        .map(|w| SampleMeanFilter::new(ns, na, w))
        .transpose()?;
    let mut stats = config
        .track_reward_stats
        .then(|| vec![PairStats::default(); ns * na]);

    let mut q = QTable::new(ns, na, T::lit(config.initial_q));
    let mut visits = vec![0u64; ns * na];
    let mut records = Vec::new();
    let mut episode_returns = Vec::new();
    let mut last_return = 0.0;
    let mut episode_return = 0.0;

    let mut s = env.reset(&mut rngs.env);
    let mut pending = None;
    for step in 1..=config.max_steps {
        let t = step - 1;
        let a = match pending.take() {
            Some(a) => a,
            None => select_action(
                &q,
                s,
                &config.exploration,
                t,
                config.max_steps,
                &mut rngs.env,
            ),
        };
        let out = env.step(a, &mut rngs.env)?;
        let true_value = levels.value(out.level);
        let observed = match mode {
            RewardMode::True => out.level,
            _ => perturb(out.level, channel.matrix_at(t), &mut rngs.noise)?,
        };
        let mut reward = match mode {
            RewardMode::True | RewardMode::Noisy => levels.value(observed),
            RewardMode::SurrogateKnown => known_tables[channel.segment_index(t)].value(observed),
            RewardMode::SurrogateEstimated => {
                let est = estimation.as_mut().expect("estimated mode");
                est.buffer.record(s, a, observed)?;
                if step % config.estimator.reestimate_every == 0 {
                    est.refresh(&levels, eta, &mut rngs.vote);
                }
                est.table(s).value(observed)
            }
        };
        if let Some(f) = filter.as_mut() {
            let filtered = f.push(s, a, reward);
            if let Some(st) = stats.as_mut() {
                st[s * na + a].unfiltered.push(reward.as_f64());
            }
            reward = filtered;
        }
        if let Some(st) = stats.as_mut() {
            if filter.is_none() {
                st[s * na + a].unfiltered.push(reward.as_f64());
            }
            st[s * na + a].filtered.push(reward.as_f64());
        }

        let idx = s * na + a;
        let alpha = T::lit(config.step_size.alpha(visits[idx]));
        visits[idx] += 1;
        let episode_over = out.done || out.truncated;
        match config.algorithm {
            Algorithm::QLearning => {
                let next = (!out.done).then_some(out.next);
                q_update(&mut q, s, a, reward, next, alpha, gamma)?;
            }
            Algorithm::Sarsa => {
                let next = if out.done {
                    None
                } else {
                    let b = select_action(
                        &q,
                        out.next,
                        &config.exploration,
                        step,
                        config.max_steps,
                        &mut rngs.env,
                    );
                    if !episode_over {
                        pending = Some(b);
                    }
                    Some((out.next, b))
                };
                sarsa_update(&mut q, s, a, reward, next, alpha, gamma)?;
            }
        }

        episode_return += true_value.as_f64();
        if episode_over {
            episode_returns.push(episode_return);
            last_return = episode_return;
            episode_return = 0.0;
            s = env.reset(&mut rngs.env);
        } else {
            s = out.next;
        }

        if step % config.eval_interval == 0 || step == config.max_steps {
            let (err, e_plus, e_minus) = match &estimation {
                Some(est) => est.report(channel.matrix_at(t)),
                None => (None, None, None),
            };
            records.push(RunRecord {
                step,
                episode: episode_returns.len() as u64,
                ret: last_return,
                est_err_max: err,
                est_e_plus: e_plus,
                est_e_minus: e_minus,
                success: env.oracle().map(|o| o.policy_matches(&q)),
            });
        }
    }

    let oracle = env.oracle();
    let (singular_freezes, estimates) = match estimation {
        Some(e) => (e.freezes, e.latest),
        None => (0, Vec::new()),
    };
    Ok(RunOutput {
        records,
        episode_returns,
        singular_freezes,
        estimates,
        reward_stats: stats,
        q_error: oracle.map(|o| o.q_error(&q)),
        success: oracle.map(|o| o.policy_matches(&q)),
        q,
    })
}

struct Estimation<T> {
    buffer: ObservationBuffer,
    d_min: usize,
    per_state: bool,
    tables: Vec<SurrogateTable<T>>,
    latest: Vec<EstimatedConfusion<T>>,
    freezes: u64,
}

impl<T: Real> Estimation<T> {
    fn new(ns: usize, na: usize, levels: &RewardLevels<T>, config: &LearnerConfig) -> Result<Self> {
        let m = levels.len();
        let copies = if config.per_state_estimation { ns } else { 1 };
        Ok(Self {
            buffer: ObservationBuffer::new(ns, na, m, config.estimator.d_max)?,
            d_min: config.estimator.d_min_per_pair(m),
            per_state: config.per_state_estimation,
            tables: vec![SurrogateTable::passthrough(levels); copies],
            latest: Vec::new(),
            freezes: 0,
        })
    }

    fn table(&self, s: usize) -> &SurrogateTable<T> {
        &self.tables[if self.per_state { s } else { 0 }]
    }

    fn refresh(&mut self, levels: &RewardLevels<T>, eta: T, rng: &mut ChaCha8Rng) {
        self.latest = if self.per_state {
            self.buffer.estimate_confusion_per_state(self.d_min, rng)
        } else {
            vec![self.buffer.estimate_confusion(self.d_min, rng)]
        };
        for (table, est) in self.tables.iter_mut().zip(&self.latest) {
            if !est.ready {
                continue;
            }
            match surrogate_multi(levels, &est.matrix).and_then(|r| proxy_blend(levels, &r, eta)) {
                Ok(t) => *table = t,
                Err(_) => self.freezes += 1,
            }
        }
    }

    fn report(&self, truth: &ConfusionMatrix<T>) -> (Option<f64>, Option<f64>, Option<f64>) {
        if self.latest.is_empty() {
            return (None, None, None);
        }
        let err = self
            .latest
            .iter()
            .map(|e| e.matrix.max_abs_diff(truth).as_f64())
            .fold(0.0, f64::max);
        if self.per_state {
            return (Some(err), None, None);
        }
        let c = &self.latest[0].matrix;
        (
            Some(err),
            c.e_plus().map(Real::as_f64),
            c.e_minus().map(Real::as_f64),
        )
    }
}

fn select_action<T: Real>(
    q: &QTable<T>,
    s: usize,
    exploration: &Exploration,
    step: u64,
    max_steps: u64,
    rng: &mut dyn RngCore,
) -> usize {
    let na = q.num_actions();
    match *exploration {
        Exploration::EpsilonGreedy { .. } => {
            if rng.random::<f64>() < exploration.epsilon(step, max_steps) {
                rng.random_range(0..na)
            } else {
                greedy_random_ties(q.row(s), rng)
            }
        }
        Exploration::Boltzmann { temperature } => {
            let row = q.row(s);
            let top = row
                .iter()
                .map(|v| v.as_f64())
                .fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = row
                .iter()
                .map(|v| ((v.as_f64() - top) / temperature).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (a, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    return a;
                }
            }
            na - 1
        }
    }
}

fn greedy_random_ties<T: Real>(row: &[T], rng: &mut dyn RngCore) -> usize {
    let best = row.iter().copied().fold(T::neg_infinity(), T::max);
    let ties = row.iter().filter(|&&v| v == best).count();
    if ties <= 1 {
        return row.iter().position(|&v| v == best).unwrap_or(0);
    }
    let pick = rng.random_range(0..ties);
    row.iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .nth(pick)
        .map(|(i, _)| i)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{make_six_state_chain, MdpEnv};
    use crate::noise::{build_confusion, NoiseSpec};

    fn chain_env() -> MdpEnv<f64> {
        MdpEnv::new(make_six_state_chain(0.9).unwrap(), 0, None).unwrap()
    }

    fn channel(omega: f64) -> NoiseChannel<f64> {
        let c = build_confusion(
            &NoiseSpec::symmetric(omega),
            2,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        NoiseChannel::fixed(c)
    }

    fn run(mode: RewardMode, omega: f64, seed: u64, steps: u64) -> RunOutput<f64> {
        let cfg = LearnerConfig {
            reward_mode: mode,
            max_steps: steps,
            ..LearnerConfig::default()
        };
        run_episode_loop(
            &mut chain_env(),
            &channel(omega),
            &cfg,
            &mut RunRngs::from_seed(seed),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_modes_match_true_rewards() {
        let base = run(RewardMode::True, 0.0, 5, 3000);
        for mode in [
            RewardMode::Noisy,
            RewardMode::SurrogateKnown,
            RewardMode::SurrogateEstimated,
        ] {
            let other = run(mode, 0.0, 5, 3000);
            assert_eq!(other.q, base.q, "{mode}");
            assert_eq!(other.episode_returns, base.episode_returns);
        }
    }

    #[test]
    fn known_surrogate_finds_oracle_policy() {
        let out = run(RewardMode::SurrogateKnown, 0.3, 1, 20_000);
        assert_eq!(out.success, Some(true));
        assert_eq!(out.records.last().unwrap().success, Some(true));
    }

    #[test]
    fn records_follow_eval_cadence() {
        let out = run(RewardMode::SurrogateEstimated, 0.2, 2, 2250);
        let steps: Vec<u64> = out.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![500, 1000, 1500, 2000, 2250]);
        assert!(out
            .records
            .iter()
            .all(|r| r.est_err_max.is_some() && r.est_e_plus.is_some()));
        let episodes: Vec<u64> = out.records.iter().map(|r| r.episode).collect();
        assert!(episodes.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn same_seed_same_run() {
        let a = run(RewardMode::SurrogateEstimated, 0.3, 9, 4000);
        let b = run(RewardMode::SurrogateEstimated, 0.3, 9, 4000);
        assert_eq!(a.records, b.records);
        assert_eq!(a.q, b.q);
    }

    #[test]
    fn singular_known_channel_is_rejected() {
        let cfg = LearnerConfig::default();
        let r = run_episode_loop(
            &mut chain_env(),
            &channel(0.5),
            &cfg,
            &mut RunRngs::from_seed(0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn mismatched_channel_is_rejected() {
        let c = build_confusion(
            &NoiseSpec::symmetric(0.1),
            3,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let r = run_episode_loop(
            &mut chain_env(),
            &NoiseChannel::fixed(c),
            &LearnerConfig::default(),
            &mut RunRngs::from_seed(0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn sarsa_and_boltzmann_run() {
        let cfg = LearnerConfig {
            algorithm: Algorithm::Sarsa,
            exploration: Exploration::Boltzmann { temperature: 0.5 },
            reward_mode: RewardMode::True,
            max_steps: 5000,
            ..LearnerConfig::default()
        };
        let out = run_episode_loop(
            &mut chain_env(),
            &channel(0.0),
            &cfg,
            &mut RunRngs::from_seed(3),
        )
        .unwrap();
        assert!(out.q.is_finite());
        assert!(!out.episode_returns.is_empty());
    }

    #[test]
    fn filter_stats_are_collected() {
        let cfg = LearnerConfig {
            variance_reduction: Some(100),
            track_reward_stats: true,
            max_steps: 5000,
            ..LearnerConfig::default()
        };
        let out = run_episode_loop(
            &mut chain_env(),
            &channel(0.3),
            &cfg,
            &mut RunRngs::from_seed(4),
        )
        .unwrap();
        let stats = out.reward_stats.unwrap();
        for st in stats.iter().filter(|st| st.unfiltered.count > 100) {
            assert!(st.filtered.variance() <= st.unfiltered.variance());
        }
    }

    #[test]
    fn running_stats_match_two_pass() {
        let xs = [1.0, 4.0, -2.0, 0.5, 3.0];
        let mut st = RunningStats::default();
        xs.iter().for_each(|&x| st.push(x));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((st.mean() - mean).abs() < 1e-12 && (st.variance() - var).abs() < 1e-12);
    }
}
