use crate::error::{invalid_arg, Result};
use crate::mdp::MdpModel;
use crate::scalar::Real;

/// Rectangular grid with four moves (up, right, down, left). Walls clamp.
/// Entering the goal earns 1 and ends the episode. With probability
/// `slip` the move is replaced by one drawn uniformly from all four.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub goal: (usize, usize),
    pub slip: f64,
    pub gamma: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            width: 4,
            height: 4,
            goal: (3, 3),
            slip: 0.0,
            gamma: 0.9,
        }
    }
}

impl GridSpec {
    pub fn state(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

const MOVES: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

pub fn make_gridworld<T: Real>(spec: &GridSpec) -> Result<MdpModel<T>> {
    let (w, h) = (spec.width, spec.height);
    if w == 0 || h == 0 || w * h < 2 {
        return Err(invalid_arg("grid needs at least two cells"));
    }
    if spec.goal.0 >= w || spec.goal.1 >= h {
        return Err(invalid_arg("goal lies outside the grid"));
    }
    if !(0.0..=1.0).contains(&spec.slip) {
        return Err(invalid_arg(format!(
            "slip must lie in [0, 1], got {}",
            spec.slip
        )));
    }
    let n = w * h;
    let goal = spec.state(spec.goal.0, spec.goal.1);
    let target = |s: usize, m: usize| {
        let (x, y) = ((s % w) as isize, (s / w) as isize);
        let nx = (x + MOVES[m].0).clamp(0, w as isize - 1) as usize;
        let ny = (y + MOVES[m].1).clamp(0, h as isize - 1) as usize;
        spec.state(nx, ny)
    };
    let mut p = vec![vec![vec![T::zero(); n]; 4]; n];
    let mut r = vec![vec![vec![T::zero(); n]; 4]; n];
    for s in 0..n {
        for a in 0..4 {
            if s == goal {
                p[s][a][s] = T::one();
                continue;
            }
            p[s][a][target(s, a)] += T::lit(1.0 - spec.slip);
            for m in 0..4 {
                p[s][a][target(s, m)] += T::lit(spec.slip / 4.0);
            }
            r[s][a][goal] = T::one();
        }
    }
    MdpModel::new(p, r, T::lit(spec.gamma), &[goal])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::value_iteration;
    use approx::assert_abs_diff_eq;

    #[test]
    fn deterministic_values_follow_manhattan_distance() {
        let spec = GridSpec::default();
        let m: MdpModel<f64> = make_gridworld(&spec).unwrap();
        let (v, _) = value_iteration(&m, 1e-12).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let d = (3 - x) + (3 - y);
                let expect = if d == 0 {
                    0.0
                } else {
                    0.9f64.powi(d as i32 - 1)
                };
                assert_abs_diff_eq!(v.get(spec.state(x, y)), expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn slippery_rows_stay_stochastic() {
        let spec = GridSpec {
            slip: 0.2,
            ..GridSpec::default()
        };
        let m: MdpModel<f64> = make_gridworld(&spec).unwrap();
        assert!(value_iteration(&m, 1e-10).is_ok());
        assert!(make_gridworld::<f64>(&GridSpec {
            goal: (4, 0),
            ..GridSpec::default()
        })
        .is_err());
    }
}
