use rand::RngCore;

use crate::environments::{Environment, MdpEnv};
use crate::error::{invalid_arg, Result};
use crate::mdp::{Policy, QTable, ValueFunction};
use crate::noise::{perturb, ConfusionMatrix};
use crate::scalar::Real;
use crate::surrogate::SurrogateTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhasedConfig {
    pub phases: usize,
    /// Generative-model calls per pair in each phase.
    pub samples_per_phase: usize,
}

/// Phased Q-learning on corrupted generative samples. Each phase draws
/// `m` fresh `(s', level)` samples per pair, corrupts the level through `c`,
/// maps it through `table`, and backs up
/// `V(s) = max_a mean[r̂ + γ V(s')]` starting from `V = 0`.
pub fn phased_q_learning<T: Real>(
    env: &MdpEnv<T>,
    config: &PhasedConfig,
    c: &ConfusionMatrix<T>,
    table: &SurrogateTable<T>,
    rng: &mut dyn RngCore,
) -> Result<(ValueFunction<T>, Policy)> {
    phased_q_learning_with(env, config, c, table, rng, &mut |_, _| {})
}

/// As [`phased_q_learning`], calling `on_phase(k, q)` after phase `k` (from 1).
pub fn phased_q_learning_with<T: Real>(
    env: &MdpEnv<T>,
    config: &PhasedConfig,
    c: &ConfusionMatrix<T>,
    table: &SurrogateTable<T>,
    rng: &mut dyn RngCore,
    on_phase: &mut dyn FnMut(usize, &QTable<T>),
) -> Result<(ValueFunction<T>, Policy)> {
    if config.phases == 0 || config.samples_per_phase == 0 {
        return Err(invalid_arg(
            "phased learning needs at least one phase and one sample",
        ));
    }
    let model = env.model();
    let m_levels = env.reward_levels().len();
    if c.size() != m_levels || table.len() != m_levels {
        return Err(invalid_arg(format!(
            "environment has {m_levels} levels; channel has {}, table has {}",
            c.size(),
            table.len()
        )));
    }
    let (ns, na) = (model.num_states(), model.num_actions());
    let gamma = model.gamma();
    let m = T::from_count(config.samples_per_phase);
    let mut v = vec![T::zero(); ns];
    let mut q = QTable::new(ns, na, T::zero());
    for phase in 1..=config.phases {
        for s in 0..ns {
            if model.is_terminal(s) {
                continue;
            }
            for a in 0..na {
                let mut total = T::zero();
                for _ in 0..config.samples_per_phase {
                    let (next, level) = env.sample(s, a, rng)?;
                    let observed = perturb(level, c, rng)?;
                    total += table.value(observed) + gamma * v[next];
                }
                q.set(s, a, total / m);
            }
        }
        v = (0..ns)
            .map(|s| {
                if model.is_terminal(s) {
                    T::zero()
                } else {
                    q.max(s)
                }
            })
            .collect();
        on_phase(phase, &q);
    }
    let policy = q.greedy_policy(|s| model.is_terminal(s));
    Ok((ValueFunction { values: v }, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{make_random_mdp, RandomMdpSpec};
    use crate::mdp::{bellman_backup, value_iteration, MdpModel};
    use crate::noise::{build_confusion, NoiseSpec};
    use crate::surrogate::{surrogate_multi, RewardLevels};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state() -> MdpModel<f64> {
        let p = vec![
            vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            vec![vec![0.6, 0.4], vec![0.1, 0.9]],
        ];
        let r = vec![vec![vec![0.0, 1.0]; 2]; 2];
        MdpModel::new(p, r, 0.8, &[]).unwrap()
    }

    #[test]
    fn deterministic_identity_matches_truncated_value_iteration() {
        let spec = RandomMdpSpec {
            num_states: 6,
            num_actions: 3,
            num_levels: 3,
            branching: 1,
            seed: 2,
            gamma: 0.9,
        };
        let model: MdpModel<f64> = make_random_mdp(&spec).unwrap();
        let env = MdpEnv::with_levels(
            model.clone(),
            RewardLevels::new(spec.levels()).unwrap(),
            0,
            None,
        )
        .unwrap();
        let c = ConfusionMatrix::identity(3);
        let table = SurrogateTable::passthrough(env_levels(&env));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (v, _) = phased_q_learning(
            &env,
            &PhasedConfig {
                phases: 7,
                samples_per_phase: 1,
            },
            &c,
            &table,
            &mut rng,
        )
        .unwrap();
        let mut exact = ValueFunction::zeros(6);
        for _ in 0..7 {
            exact = bellman_backup(&model, &exact);
        }
        for s in 0..6 {
            assert!((v.get(s) - exact.get(s)).abs() < 1e-12);
        }
    }

    fn env_levels(env: &MdpEnv<f64>) -> &RewardLevels<f64> {
        env.reward_levels()
    }

    #[test]
    fn more_samples_means_smaller_error() {
        let model = two_state();
        let (v_star, _) = value_iteration(&model, 1e-12).unwrap();
        let env = MdpEnv::new(model, 0, None).unwrap();
        let mut noise_rng = ChaCha8Rng::seed_from_u64(1);
        let c = build_confusion(&NoiseSpec::symmetric(0.2), 2, &mut noise_rng).unwrap();
        let table = surrogate_multi(env_levels(&env), &c).unwrap();
        let err = |m: usize| {
            let mut total = 0.0;
            for seed in 0..10 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let cfg = PhasedConfig {
                    phases: 60,
                    samples_per_phase: m,
                };
                let (v, _) = phased_q_learning(&env, &cfg, &c, &table, &mut rng).unwrap();
                total += v.sup_distance(&v_star);
            }
            total / 10.0
        };
        assert!(err(1000) < err(10));
    }

    #[test]
    fn rejects_empty_config() {
        let env = MdpEnv::new(two_state(), 0, None).unwrap();
        let c = ConfusionMatrix::identity(2);
        let t = SurrogateTable::passthrough(env_levels(&env));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(phased_q_learning(
            &env,
            &PhasedConfig {
                phases: 0,
                samples_per_phase: 1
            },
            &c,
            &t,
            &mut rng
        )
        .is_err());
    }
}
