use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{invalid_arg, Result};
use crate::mdp::MdpModel;
use crate::scalar::Real;

/// Seeded random MDP with rewards on the grid `j / (M - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_levels: usize,
    /// Number of reachable successors per state-action pair.
    pub branching: usize,
    pub seed: u64,
    pub gamma: f64,
}

impl RandomMdpSpec {
    pub fn levels<T: Real>(&self) -> Vec<T> {
        let top = (self.num_levels - 1) as f64;
        (0..self.num_levels)
            .map(|j| T::lit(j as f64 / top))
            .collect()
    }
}

/// Each pair gets one reward level, replicated across successors, and
/// every declared level is used by at least one pair.
pub fn make_random_mdp<T: Real>(spec: &RandomMdpSpec) -> Result<MdpModel<T>> {
    let (ns, na, m) = (spec.num_states, spec.num_actions, spec.num_levels);
    if ns == 0 || na == 0 {
        return Err(invalid_arg("random MDP needs states and actions"));
    }
    if m < 2 {
        return Err(invalid_arg("random MDP needs at least two reward levels"));
    }
    if ns * na < m {
        return Err(invalid_arg(format!(
            "{} pairs cannot cover {m} reward levels",
            ns * na
        )));
    }
    if spec.branching == 0 || spec.branching > ns {
        return Err(invalid_arg(format!("branching must lie in 1..={ns}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let levels: Vec<T> = spec.levels();

    let mut pair_level: Vec<usize> = (0..ns * na)
        .map(|p| if p < m { p } else { rng.random_range(0..m) })
        .collect();
    pair_level.shuffle(&mut rng);

    let mut transition = vec![T::zero(); ns * na * ns];
    let mut reward = vec![T::zero(); ns * na * ns];
    for p in 0..ns * na {
        let succ = index::sample(&mut rng, ns, spec.branching);
        let weights: Vec<f64> = (0..spec.branching)
            .map(|_| rng.sample::<f64, _>(Exp1))
            .collect();
        let total: f64 = weights.iter().sum();
        let row = &mut transition[p * ns..(p + 1) * ns];
        for (k, n) in succ.iter().enumerate() {
            row[n] = if spec.branching == 1 {
                T::one()
            } else {
                T::lit(weights[k] / total)
            };
        }
        reward[p * ns..(p + 1) * ns].fill(levels[pair_level[p]]);
    }
    MdpModel::from_flat(
        ns,
        na,
        transition,
        reward,
        T::lit(spec.gamma),
        T::one(),
        &[],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(branching: usize, seed: u64) -> RandomMdpSpec {
        RandomMdpSpec {
            num_states: 5,
            num_actions: 3,
            num_levels: 4,
            branching,
            seed,
            gamma: 0.9,
        }
    }

    #[test]
    fn same_seed_same_model() {
        let a: MdpModel<f64> = make_random_mdp(&spec(3, 11)).unwrap();
        let b: MdpModel<f64> = make_random_mdp(&spec(3, 11)).unwrap();
        assert_eq!(a, b);
        let c: MdpModel<f64> = make_random_mdp(&spec(3, 12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn branching_one_is_deterministic() {
        let m: MdpModel<f64> = make_random_mdp(&spec(1, 3)).unwrap();
        for s in 0..5 {
            for a in 0..3 {
                let row = m.transition_row(s, a);
                assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
                assert_eq!(row.iter().filter(|&&p| p == 0.0).count(), 4);
            }
        }
    }

    #[test]
    fn rewards_use_exactly_the_declared_levels() {
        for seed in 0..20 {
            let m: MdpModel<f64> = make_random_mdp(&spec(2, seed)).unwrap();
            assert_eq!(m.reward_values(), vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        }
    }

    #[test]
    fn rejects_impossible_specs() {
        let mut s = spec(6, 0);
        assert!(make_random_mdp::<f64>(&s).is_err());
        s.branching = 1;
        s.num_levels = 16;
        assert!(make_random_mdp::<f64>(&s).is_err());
    }
}
