use crate::error::{invalid_arg, Result};
use crate::mdp::MdpModel;
use crate::scalar::Real;

/// Six states in a line. Moving right from state 4 enters state 5 and
/// earns 1; every other transition earns 0. Moves saturate at the ends.
pub struct SixStateChain;

impl SixStateChain {
    pub const NUM_STATES: usize = 6;
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;
    pub const GOAL: usize = 5;
    pub const DEFAULT_GAMMA: f64 = 0.9;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChainVariant {
    /// State 5 is terminal; the episode ends there and restarts at 0.
    #[default]
    Episodic,
    /// State 5 is an ordinary state whose actions both return to 0 with
    /// reward 0, so the task never terminates.
    ResetTransition,
}

pub fn make_six_state_chain<T: Real>(gamma: T) -> Result<MdpModel<T>> {
    make_six_state_chain_variant(gamma, ChainVariant::Episodic)
}

pub fn make_six_state_chain_variant<T: Real>(
    gamma: T,
    variant: ChainVariant,
) -> Result<MdpModel<T>> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(invalid_arg(format!(
            "chain discount must lie in (0, 1), got {gamma}"
        )));
    }
    let n = SixStateChain::NUM_STATES;
    let mut p = vec![vec![vec![T::zero(); n]; 2]; n];
    let mut r = vec![vec![vec![T::zero(); n]; 2]; n];
    for s in 0..n {
        if s == SixStateChain::GOAL {
            for a in 0..2 {
                match variant {
                    ChainVariant::Episodic => p[s][a][s] = T::one(),
                    ChainVariant::ResetTransition => p[s][a][0] = T::one(),
                }
            }
            continue;
        }
        let left = s.saturating_sub(1);
        let right = (s + 1).min(n - 1);
        p[s][SixStateChain::LEFT][left] = T::one();
        p[s][SixStateChain::RIGHT][right] = T::one();
        if right == SixStateChain::GOAL {
            r[s][SixStateChain::RIGHT][right] = T::one();
        }
    }
    let terminal: &[usize] = match variant {
        ChainVariant::Episodic => &[SixStateChain::GOAL],
        ChainVariant::ResetTransition => &[],
    };
    MdpModel::new(p, r, gamma, terminal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{evaluate_policy, value_iteration, Policy};
    use approx::assert_abs_diff_eq;

    /// Best value at state 0 over all deterministic policies on states 0..5.
    fn enumerate_best(model: &MdpModel<f64>) -> (f64, Vec<Policy>) {
        let mut best = f64::NEG_INFINITY;
        let mut winners = Vec::new();
        for bits in 0u32..32 {
            let mut actions: Vec<Option<usize>> =
                (0..5).map(|s| Some(((bits >> s) & 1) as usize)).collect();
            actions.push(if model.is_terminal(5) { None } else { Some(0) });
            let pi = Policy::new(actions);
            let v = evaluate_policy(model, &pi, 1e-12).unwrap();
            let total: f64 = v.values.iter().sum();
            if total > best + 1e-9 {
                best = total;
                winners = vec![pi];
            } else if (total - best).abs() <= 1e-9 {
                winners.push(pi);
            }
        }
        (best, winners)
    }

    #[test]
    fn oracle_moves_right_everywhere() {
        for variant in [ChainVariant::Episodic, ChainVariant::ResetTransition] {
            let model = make_six_state_chain_variant(0.9, variant).unwrap();
            let (_, policy) = value_iteration(&model, 1e-12).unwrap();
            for s in 0..5 {
                assert_eq!(policy.action(s), Some(SixStateChain::RIGHT));
            }
            let (_, winners) = enumerate_best(&model);
            assert_eq!(winners.len(), 1);
            assert_eq!(&winners[0].actions()[..5], &policy.actions()[..5]);
        }
    }

    #[test]
    fn values_under_each_convention() {
        let g = 0.9f64;
        let (v, _) = value_iteration(&make_six_state_chain(g).unwrap(), 1e-13).unwrap();
        for s in 0..5 {
            assert_abs_diff_eq!(v.get(s), g.powi(4 - s as i32), epsilon = 1e-10);
        }
        assert_eq!(v.get(5), 0.0);

        let reset = make_six_state_chain_variant(g, ChainVariant::ResetTransition).unwrap();
        let (v, _) = value_iteration(&reset, 1e-13).unwrap();
        assert_abs_diff_eq!(v.get(4), 1.0 + g * v.get(5), epsilon = 1e-9);
        assert_abs_diff_eq!(v.get(5), g * v.get(0), epsilon = 1e-9);
    }

    #[test]
    fn exactly_two_reward_levels() {
        let model = make_six_state_chain(0.9f64).unwrap();
        assert_eq!(model.reward_values(), vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_discount() {
        assert!(make_six_state_chain(1.0f64).is_err());
        assert!(make_six_state_chain(0.0f64).is_err());
    }
}
