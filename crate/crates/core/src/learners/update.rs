use crate::error::{invalid_arg, Error, Result};
use crate::mdp::QTable;
use crate::scalar::Real;

fn check(q: &QTable<impl Real>, s: usize, a: usize, reward: f64, alpha: f64) -> Result<()> {
    if s >= q.num_states() || a >= q.num_actions() {
        return Err(invalid_arg(format!("pair ({s}, {a}) out of range")));
    }
    if !reward.is_finite() {
        return Err(Error::NonFinite(format!("reward {reward} at ({s}, {a})")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid_arg(format!(
            "step size must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

fn blend<T: Real>(q: &mut QTable<T>, s: usize, a: usize, target: T, alpha: T) {
    let old = q.get(s, a);
    q.set(s, a, (T::one() - alpha) * old + alpha * target);
}

/// `Q(s,a) ← (1-α) Q(s,a) + α (r + γ max_b Q(s',b))`. `next = None` marks
/// a terminal successor, which bootstraps 0.
pub fn q_update<T: Real>(
    q: &mut QTable<T>,
    s: usize,
    a: usize,
    reward: T,
    next: Option<usize>,
    alpha: T,
    gamma: T,
) -> Result<()> {
    check(q, s, a, reward.as_f64(), alpha.as_f64())?;
    let bootstrap = match next {
        Some(n) if n < q.num_states() => q.max(n),
        Some(n) => return Err(invalid_arg(format!("next state {n} out of range"))),
        None => T::zero(),
    };
    blend(q, s, a, reward + gamma * bootstrap, alpha);
    Ok(())
}

/// On-policy variant bootstrapping from the action actually taken next.
pub fn sarsa_update<T: Real>(
    q: &mut QTable<T>,
    s: usize,
    a: usize,
    reward: T,
    next: Option<(usize, usize)>,
    alpha: T,
    gamma: T,
) -> Result<()> {
    check(q, s, a, reward.as_f64(), alpha.as_f64())?;
    let bootstrap = match next {
        Some((n, b)) if n < q.num_states() && b < q.num_actions() => q.get(n, b),
        Some((n, b)) => return Err(invalid_arg(format!("next pair ({n}, {b}) out of range"))),
        None => T::zero(),
    };
    blend(q, s, a, reward + gamma * bootstrap, alpha);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn full_overwrite_without_bootstrap() {
        let mut q = QTable::new(2, 2, 3.0);
        q_update(&mut q, 0, 1, 5.0, Some(1), 1.0, 0.0).unwrap();
        assert_eq!(q.get(0, 1), 5.0);
    }

    #[test]
    fn zero_step_leaves_table() {
        let mut q = QTable::new(2, 2, 3.0);
        let before = q.clone();
        q_update(&mut q, 0, 1, 5.0, Some(1), 0.0, 0.9).unwrap();
        assert_eq!(q, before);
    }

    #[test]
    fn hand_evaluated_update() {
        let mut q = QTable::new(2, 2, 0.0);
        q.set(1, 0, 2.0);
        q.set(1, 1, -1.0);
        q_update(&mut q, 0, 0, 1.0, Some(1), 0.5, 0.9).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 1.4, epsilon = 1e-15);
    }

    #[test]
    fn terminal_next_bootstraps_zero() {
        let mut q = QTable::new(2, 1, 0.0);
        q.set(1, 0, 100.0);
        q_update(&mut q, 0, 0, 1.0, None, 1.0, 0.9).unwrap();
        assert_eq!(q.get(0, 0), 1.0);
    }

    #[test]
    fn nan_reward_is_rejected() {
        let mut q = QTable::new(1, 1, 0.0);
        assert!(matches!(
            q_update(&mut q, 0, 0, f64::NAN, None, 0.5, 0.9),
            Err(Error::NonFinite(_))
        ));
        assert!(q_update(&mut q, 0, 0, 1.0, None, 1.5, 0.9).is_err());
        assert!(q_update(&mut q, 0, 1, 1.0, None, 0.5, 0.9).is_err());
    }

    #[test]
    fn sarsa_uses_the_taken_action() {
        let mut q = QTable::new(2, 2, 0.0);
        q.set(1, 0, 2.0);
        q.set(1, 1, -1.0);
        sarsa_update(&mut q, 0, 0, 1.0, Some((1, 1)), 0.5, 0.9).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 0.5 * (1.0 - 0.9), epsilon = 1e-15);
    }

    #[test]
    fn single_precision_update() {
        let mut q = QTable::<f32>::new(2, 2, 0.0);
        q.set(1, 0, 2.0);
        q_update(&mut q, 0, 0, 1.0, Some(1), 0.5, 0.9).unwrap();
        assert!((q.get(0, 0) - 1.4).abs() < 1e-6);
    }
}
