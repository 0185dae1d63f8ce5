//! Finite MDPs, the exact planning oracle and the generative sampler.
//!
//! Rewards are stored per `(s, a, s')` triple. Environments whose reward only
//! depends on `(s, a)` replicate the value across next states.

use rand::Rng;

use crate::error::{invalid_arg, invalid_model, Error, Result};
use crate::scalar::Real;

/// Default sup-norm tolerance for [`value_iteration`] and [`evaluate_policy`].
pub const DEFAULT_VI_TOLERANCE: f64 = 1e-10;

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel<T> {
    num_states: usize,
    num_actions: usize,
    transition: Vec<T>,
    reward: Vec<T>,
    gamma: T,
    r_max: T,
    terminal: Vec<bool>,
}

impl<T: Real> MdpModel<T> {
    /// Builds a model from nested `[s][a][s']` tables.
    ///
    /// `R_max` is taken as the largest reward in the table.
    pub fn new(
        transition: Vec<Vec<Vec<T>>>,
        reward: Vec<Vec<Vec<T>>>,
        gamma: T,
        terminal: &[usize],
    ) -> Result<Self> {
        let num_states = transition.len();
        if num_states == 0 {
            return Err(invalid_model("at least one state is required"));
        }
        let num_actions = transition[0].len();
        if num_actions == 0 {
            return Err(invalid_model("at least one action is required"));
        }
        if reward.len() != num_states {
            return Err(invalid_model(format!(
                "reward table has {} states, transition has {num_states}",
                reward.len()
            )));
        }
        let mut flat_p = Vec::with_capacity(num_states * num_actions * num_states);
        let mut flat_r = Vec::with_capacity(num_states * num_actions * num_states);
        for (s, (p_rows, r_rows)) in transition.iter().zip(&reward).enumerate() {
            if p_rows.len() != num_actions || r_rows.len() != num_actions {
                return Err(invalid_model(format!(
                    "state {s}: expected {num_actions} actions"
                )));
            }
            for (a, (p_row, r_row)) in p_rows.iter().zip(r_rows).enumerate() {
                if p_row.len() != num_states || r_row.len() != num_states {
                    return Err(invalid_model(format!(
                        "state {s}, action {a}: expected {num_states} next-state entries"
                    )));
                }
                flat_p.extend_from_slice(p_row);
                flat_r.extend_from_slice(r_row);
            }
        }
        let r_max = flat_r.iter().copied().fold(T::zero(), T::max);
        Self::from_flat(
            num_states,
            num_actions,
            flat_p,
            flat_r,
            gamma,
            r_max,
            terminal,
        )
    }

    /// Builds a model from flat row-major `[s][a][s']` tables with an explicit
    /// reward bound.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        transition: Vec<T>,
        reward: Vec<T>,
        gamma: T,
        r_max: T,
        terminal: &[usize],
    ) -> Result<Self> {
        let len = num_states * num_actions * num_states;
        if num_states == 0 || num_actions == 0 {
            return Err(invalid_model("state and action sets must be non-empty"));
        }
        if transition.len() != len || reward.len() != len {
            return Err(invalid_model(format!("tables must hold {len} entries")));
        }
        if !(gamma >= T::zero() && gamma < T::one()) {
            return Err(invalid_model(format!(
                "discount must lie in [0, 1), got {gamma}"
            )));
        }
        if !r_max.is_finite() || r_max < T::zero() {
            return Err(invalid_model(format!(
                "R_max must be finite and non-negative, got {r_max}"
            )));
        }
        let tol = T::lit(T::STOCHASTIC_TOL);
        for (row_idx, row) in transition.chunks(num_states).enumerate() {
            let (s, a) = (row_idx / num_actions, row_idx % num_actions);
            if row.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
                return Err(invalid_model(format!(
                    "P[{s}][{a}] has an entry outside [0, 1]"
                )));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(invalid_model(format!("P[{s}][{a}] sums to {sum}, not 1")));
            }
        }
        if let Some(bad) = reward.iter().position(|&r| !(r >= T::zero() && r <= r_max)) {
            return Err(invalid_model(format!(
                "reward entry {bad} = {} outside [0, {r_max}]",
                reward[bad]
            )));
        }
        let mut mask = vec![false; num_states];
        for &t in terminal {
            if t >= num_states {
                return Err(invalid_model(format!("terminal state {t} out of range")));
            }
            mask[t] = true;
        }
        Ok(Self {
            num_states,
            num_actions,
            transition,
            reward,
            gamma,
            r_max,
            terminal: mask,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> Vec<usize> {
        (0..self.num_states).filter(|&s| self.terminal[s]).collect()
    }

    #[inline]
    fn row_offset(&self, s: usize, a: usize) -> usize {
        (s * self.num_actions + a) * self.num_states
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[T] {
        let o = self.row_offset(s, a);
        &self.transition[o..o + self.num_states]
    }

    pub fn reward_row(&self, s: usize, a: usize) -> &[T] {
        let o = self.row_offset(s, a);
        &self.reward[o..o + self.num_states]
    }

    pub fn reward(&self, s: usize, a: usize, next: usize) -> T {
        self.reward[self.row_offset(s, a) + next]
    }

    /// Returns a copy with a different discount.
    pub fn with_gamma(&self, gamma: T) -> Result<Self> {
        Self::from_flat(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            self.reward.clone(),
            gamma,
            self.r_max,
            &self.terminal_states(),
        )
    }

    /// Distinct reward values present on transitions with positive probability
    /// out of non-terminal states, sorted ascending.
    pub fn reward_values(&self) -> Vec<T> {
        let mut vals: Vec<T> = Vec::new();
        for s in (0..self.num_states).filter(|&s| !self.terminal[s]) {
            for a in 0..self.num_actions {
                for (&p, &r) in self.transition_row(s, a).iter().zip(self.reward_row(s, a)) {
                    if p > T::zero() && !vals.contains(&r) {
                        vals.push(r);
                    }
                }
            }
        }
        vals.sort_by(|x, y| x.partial_cmp(y).expect("finite rewards"));
        vals
    }

    fn check_pair(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.num_states || a >= self.num_actions {
            return Err(invalid_arg(format!(
                "pair ({s}, {a}) outside {} states x {} actions",
                self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    /// One-step lookahead `Σ P(s'|s,a) [r(s,a,s') + γ V(s')]`.
    pub fn action_value(&self, values: &[T], s: usize, a: usize) -> T {
        if self.terminal[s] {
            return T::zero();
        }
        self.transition_row(s, a)
            .iter()
            .zip(self.reward_row(s, a))
            .zip(values)
            .map(|((&p, &r), &v)| p * (r + self.gamma * v))
            .sum()
    }
}

/// Dense `Q[s][a]` table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    num_states: usize,
    num_actions: usize,
    values: Vec<T>,
}

impl<T: Real> QTable<T> {
    pub fn new(num_states: usize, num_actions: usize, init: T) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![init; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> T {
        self.values[s * self.num_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: T) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn max(&self, s: usize) -> T {
        self.row(s).iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Greedy action, lowest id on exact ties.
    pub fn greedy(&self, s: usize) -> usize {
        argmax_lowest(self.row(s))
    }

    pub fn greedy_policy(&self, terminal: impl Fn(usize) -> bool) -> Policy {
        Policy::new(
            (0..self.num_states)
                .map(|s| {
                    if terminal(s) {
                        None
                    } else {
                        Some(self.greedy(s))
                    }
                })
                .collect(),
        )
    }

    /// Largest absolute entrywise difference over states where `include` holds.
    pub fn sup_distance(&self, other: &Self, include: impl Fn(usize) -> bool) -> T {
        assert_eq!(self.values.len(), other.values.len());
        let mut best = T::zero();
        for s in (0..self.num_states).filter(|&s| include(s)) {
            for a in 0..self.num_actions {
                best = best.max((self.get(s, a) - other.get(s, a)).abs());
            }
        }
        best
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn argmax_lowest<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Deterministic policy; `None` marks terminal states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<Option<usize>>,
}

impl Policy {
    pub fn new(actions: Vec<Option<usize>>) -> Self {
        Self { actions }
    }

    /// The same action in every non-terminal state of `model`.
    pub fn constant<T: Real>(model: &MdpModel<T>, action: usize) -> Self {
        Self::new(
            (0..model.num_states())
                .map(|s| (!model.is_terminal(s)).then_some(action))
                .collect(),
        )
    }

    pub fn action(&self, s: usize) -> Option<usize> {
        self.actions[s]
    }

    pub fn actions(&self) -> &[Option<usize>] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction<T> {
    pub values: Vec<T>,
}

impl<T: Real> ValueFunction<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![T::zero(); n],
        }
    }

    pub fn get(&self, s: usize) -> T {
        self.values[s]
    }

    pub fn sup_distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Applies one Bellman optimality backup.
pub fn bellman_backup<T: Real>(model: &MdpModel<T>, v: &ValueFunction<T>) -> ValueFunction<T> {
    let values = (0..model.num_states())
        .map(|s| {
            if model.is_terminal(s) {
                T::zero()
            } else {
                (0..model.num_actions())
                    .map(|a| model.action_value(&v.values, s, a))
                    .fold(T::neg_infinity(), T::max)
            }
        })
        .collect();
    ValueFunction { values }
}

/// `Q(s, a)` implied by a value function.
pub fn q_from_values<T: Real>(model: &MdpModel<T>, v: &ValueFunction<T>) -> QTable<T> {
    let mut q = QTable::new(model.num_states(), model.num_actions(), T::zero());
    for s in 0..model.num_states() {
        for a in 0..model.num_actions() {
            q.set(s, a, model.action_value(&v.values, s, a));
        }
    }
    q
}

/// Greedy policy w.r.t. `v`. Actions within `tie_tol` of the best one count
/// as ties and the lowest id wins.
pub fn greedy_policy<T: Real>(model: &MdpModel<T>, v: &ValueFunction<T>, tie_tol: T) -> Policy {
    let actions = (0..model.num_states())
        .map(|s| {
            if model.is_terminal(s) {
                return None;
            }
            let qs: Vec<T> = (0..model.num_actions())
                .map(|a| model.action_value(&v.values, s, a))
                .collect();
            let best = qs.iter().copied().fold(T::neg_infinity(), T::max);
            qs.iter().position(|&q| q >= best - tie_tol)
        })
        .collect();
    Policy::new(actions)
}

/// Optimal value function and greedy policy by value iteration.
///
/// Iterates until successive iterates differ by at most `tolerance` in
/// sup-norm; the returned `V` then has Bellman residual `<= γ · tolerance`.
pub fn value_iteration<T: Real>(
    model: &MdpModel<T>,
    tolerance: T,
) -> Result<(ValueFunction<T>, Policy)> {
    if !(tolerance > T::zero()) {
        return Err(invalid_arg("tolerance must be positive"));
    }
    if model.gamma() >= T::one() {
        return Err(invalid_arg("value iteration requires gamma < 1"));
    }
    let mut v = ValueFunction::zeros(model.num_states());
    for _ in 0..MAX_SWEEPS {
        let next = bellman_backup(model, &v);
        let delta = next.sup_distance(&v);
        v = next;
        if delta <= tolerance {
            let policy = greedy_policy(model, &v, tolerance);
            return Ok((v, policy));
        }
    }
    let residual = bellman_backup(model, &v).sup_distance(&v).as_f64();
    Err(Error::NotConverged { residual })
}

/// `Q*` derived from value iteration at `tolerance`.
pub fn optimal_q<T: Real>(model: &MdpModel<T>, tolerance: T) -> Result<QTable<T>> {
    let (v, _) = value_iteration(model, tolerance)?;
    Ok(q_from_values(model, &v))
}

/// Iterative evaluation of a fixed deterministic policy.
pub fn evaluate_policy<T: Real>(
    model: &MdpModel<T>,
    policy: &Policy,
    tolerance: T,
) -> Result<ValueFunction<T>> {
    if !(tolerance > T::zero()) {
        return Err(invalid_arg("tolerance must be positive"));
    }
    if policy.len() != model.num_states() {
        return Err(invalid_arg("policy length does not match the state count"));
    }
    for s in (0..model.num_states()).filter(|&s| !model.is_terminal(s)) {
        match policy.action(s) {
            Some(a) if a < model.num_actions() => {}
            Some(a) => {
                return Err(invalid_arg(format!(
                    "policy picks invalid action {a} at state {s}"
                )))
            }
            None => {
                return Err(invalid_arg(format!(
                    "policy undefined at non-terminal state {s}"
                )))
            }
        }
    }
    let mut v = ValueFunction::zeros(model.num_states());
    for _ in 0..MAX_SWEEPS {
        let values: Vec<T> = (0..model.num_states())
            .map(|s| match policy.action(s) {
                Some(a) if !model.is_terminal(s) => model.action_value(&v.values, s, a),
                _ => T::zero(),
            })
            .collect();
        let next = ValueFunction { values };
        let delta = next.sup_distance(&v);
        v = next;
        if delta <= tolerance {
            return Ok(v);
        }
    }
    Err(Error::NotConverged { residual: f64::NAN })
}

/// Draws an index from a probability row.
pub(crate) fn sample_categorical<T: Real, R: Rng + ?Sized>(row: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in row.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Generative-model call: next state from `P[s][a][·]` and the true reward.
pub fn sample_transition<T: Real, R: Rng + ?Sized>(
    model: &MdpModel<T>,
    s: usize,
    a: usize,
    rng: &mut R,
) -> Result<(usize, T)> {
    model.check_pair(s, a)?;
    if model.is_terminal(s) {
        return Err(invalid_arg(format!(
            "cannot sample from terminal state {s}"
        )));
    }
    let next = sample_categorical(model.transition_row(s, a), rng);
    Ok((next, model.reward(s, a, next)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn self_loop(r: f64, gamma: f64) -> MdpModel<f64> {
        MdpModel::new(vec![vec![vec![1.0]]], vec![vec![vec![r]]], gamma, &[]).unwrap()
    }

    #[test]
    fn single_state_geometric_series() {
        let (v, p) = value_iteration(&self_loop(1.0, 0.9), 1e-10).unwrap();
        assert_abs_diff_eq!(v.get(0), 10.0, epsilon = 1e-9);
        assert_eq!(p.action(0), Some(0));
    }

    #[test]
    fn zero_rewards_give_zero_values_and_lowest_action() {
        let p = vec![
            vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.3, 0.7]],
        ];
        let r = vec![vec![vec![0.0; 2]; 2]; 2];
        let m = MdpModel::new(p, r, 0.95, &[]).unwrap();
        let (v, pol) = value_iteration(&m, 1e-10).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert_eq!(pol.actions(), &[Some(0), Some(0)]);
    }

    #[test]
    fn value_iteration_rejects_bad_inputs() {
        let m = self_loop(1.0, 0.5);
        assert!(value_iteration(&m, 0.0).is_err());
        assert!(MdpModel::new(vec![vec![vec![1.0]]], vec![vec![vec![1.0]]], 1.0, &[]).is_err());
    }

    #[test]
    fn model_validation() {
        let bad_row = MdpModel::new(
            vec![vec![vec![0.5, 0.4]]; 2],
            vec![vec![vec![0.0; 2]]; 2],
            0.9,
            &[],
        );
        assert!(matches!(bad_row, Err(Error::InvalidModel(_))));
        let negative = MdpModel::new(vec![vec![vec![1.0]]], vec![vec![vec![-1.0]]], 0.9, &[]);
        assert!(negative.is_err());
        let m = MdpModel::new(vec![vec![vec![1.0]]], vec![vec![vec![3.0]]], 0.9, &[]).unwrap();
        assert_eq!(m.r_max(), 3.0);
    }

    #[test]
    fn two_state_chain_policy_evaluation() {
        // State 1 loops on itself with reward 1; state 0 moves to 1 with reward 0.
        let p = vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]];
        let r = vec![vec![vec![0.0, 0.0]], vec![vec![0.0, 1.0]]];
        let m = MdpModel::new(p, r, 0.5, &[]).unwrap();
        let v = evaluate_policy(&m, &Policy::constant(&m, 0), 1e-12).unwrap();
        assert_abs_diff_eq!(v.get(1), 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(v.get(0), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn policy_that_never_earns_has_zero_value() {
        // Action 0 stays put for free, action 1 jumps to a rewarding state.
        let p = vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        ];
        let r = vec![
            vec![vec![0.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        ];
        let m = MdpModel::new(p, r, 0.9, &[1]).unwrap();
        let stay = Policy::new(vec![Some(0), None]);
        let v = evaluate_policy(&m, &stay, 1e-12).unwrap();
        assert_eq!(v.values, vec![0.0, 0.0]);
        let missing = Policy::new(vec![None, None]);
        assert!(evaluate_policy(&m, &missing, 1e-12).is_err());
    }

    #[test]
    fn optimal_policy_value_matches_value_iteration() {
        let p = vec![
            vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            vec![vec![0.6, 0.4], vec![0.1, 0.9]],
        ];
        let r = vec![vec![vec![0.0, 1.0]; 2]; 2];
        let m = MdpModel::new(p, r, 0.9, &[]).unwrap();
        let tol = 1e-10;
        let (v_star, pol) = value_iteration(&m, tol).unwrap();
        let v_pi = evaluate_policy(&m, &pol, tol).unwrap();
        assert!(v_pi.sup_distance(&v_star) <= 2.0 * tol);
        // The fixed point property: one more backup barely moves V.
        assert!(bellman_backup(&m, &v_star).sup_distance(&v_star) <= tol);
    }

    #[test]
    fn deterministic_row_always_hits_its_target() {
        let p = vec![vec![vec![0.0, 1.0, 0.0]]; 3];
        let r = vec![vec![vec![0.0, 2.0, 0.0]]; 3];
        let m = MdpModel::new(p, r, 0.9, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_transition(&m, 0, 0, &mut rng).unwrap(), (1, 2.0));
        }
        assert!(sample_transition(&m, 3, 0, &mut rng).is_err());
        assert!(sample_transition(&m, 0, 1, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = vec![vec![vec![0.25, 0.25, 0.5]]; 3];
        let r = vec![vec![vec![0.0; 3]]; 3];
        let m = MdpModel::new(p, r, 0.9, &[]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|_| sample_transition(&m, 1, 0, &mut rng).unwrap().0)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn generic_over_single_precision() {
        let m: MdpModel<f32> =
            MdpModel::new(vec![vec![vec![1.0]]], vec![vec![vec![1.0]]], 0.5, &[]).unwrap();
        let (v, _) = value_iteration(&m, 1e-5).unwrap();
        assert!((v.get(0) - 2.0).abs() < 1e-4);
    }
}
