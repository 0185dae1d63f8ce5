//! Unbiased surrogate rewards.
//!
//! For a confusion matrix `C` and true level values `R`, the surrogate table
//! `R̂` solves `C R̂ = R`, so that `E[R̂(observed) | true = j] = R_j`.

use crate::error::{invalid_arg, Error, Result};
use crate::linalg::Lu;
use crate::noise::ConfusionMatrix;
use crate::scalar::Real;

/// Ordered reward levels `R_0 < R_1 < … < R_{M-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardLevels<T> {
    values: Vec<T>,
    r_max: T,
}

impl<T: Real> RewardLevels<T> {
    /// `r_max` defaults to the largest magnitude among the levels.
    pub fn new(values: Vec<T>) -> Result<Self> {
        let r_max = values.iter().map(|v| v.abs()).fold(T::zero(), T::max);
        Self::with_r_max(values, r_max)
    }

    pub fn with_r_max(values: Vec<T>, r_max: T) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid_arg("at least one reward level is required"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid_arg("reward levels must be finite"));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid_arg("reward levels must be strictly increasing"));
        }
        if values.iter().any(|v| v.abs() > r_max) {
            return Err(invalid_arg(format!(
                "a reward level exceeds r_max = {r_max}"
            )));
        }
        Ok(Self { values, r_max })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    pub fn value(&self, level: usize) -> T {
        self.values[level]
    }

    /// Index of the level equal to `value` within `tol`.
    pub fn index_of(&self, value: T, tol: T) -> Option<usize> {
        self.values.iter().position(|&v| (v - value).abs() <= tol)
    }
}

/// Value substituted for each observed level.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateTable<T> {
    pub values: Vec<T>,
    /// Determinant of the matrix the table was derived from.
    pub source_det: T,
}

impl<T: Real> SurrogateTable<T> {
    /// Table that passes observed values through unchanged.
    pub fn passthrough(levels: &RewardLevels<T>) -> Self {
        Self {
            values: levels.values().to_vec(),
            source_det: T::one(),
        }
    }

    #[inline]
    pub fn value(&self, observed_level: usize) -> T {
        self.values[observed_level]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().map(|v| v.abs()).fold(T::zero(), T::max)
    }
}

/// Closed-form binary surrogate for flip rates `e₊ = P(r₋ | r₊)` and
/// `e₋ = P(r₊ | r₋)`.
///
/// The table is ordered `[R̂(r₋), R̂(r₊)]`, matching the binary confusion
/// matrix layout over levels `[r₋, r₊]`.
pub fn surrogate_binary<T: Real>(
    r_plus: T,
    r_minus: T,
    e_plus: T,
    e_minus: T,
) -> Result<SurrogateTable<T>> {
    for (name, e) in [("e_plus", e_plus), ("e_minus", e_minus)] {
        if !(e >= T::zero() && e <= T::one()) {
            return Err(invalid_arg(format!("{name} must lie in [0, 1], got {e}")));
        }
    }
    let denom = T::one() - e_plus - e_minus;
    if e_plus + e_minus >= T::one() - T::lit(1e-6) {
        return Err(Error::SingularNoise {
            det: denom.as_f64(),
        });
    }
    let plus = ((T::one() - e_minus) * r_plus - e_plus * r_minus) / denom;
    let minus = ((T::one() - e_plus) * r_minus - e_minus * r_plus) / denom;
    Ok(SurrogateTable {
        values: vec![minus, plus],
        source_det: denom,
    })
}

/// `R̂ = C⁻¹ R` by LU solve, with a post-solve residual check.
pub fn surrogate_multi<T: Real>(
    levels: &RewardLevels<T>,
    c: &ConfusionMatrix<T>,
) -> Result<SurrogateTable<T>> {
    if c.size() != levels.len() {
        return Err(invalid_arg(format!(
            "confusion matrix has {} levels, reward levels has {}",
            c.size(),
            levels.len()
        )));
    }
    let det = c.det();
    if !c.is_invertible() {
        return Err(Error::SingularNoise { det: det.as_f64() });
    }
    let lu = Lu::factor(c.as_flat(), c.size());
    let values = lu
        .solve(levels.values())
        .ok_or(Error::SingularNoise { det: det.as_f64() })?;
    let residual = c
        .apply(&values)
        .iter()
        .zip(levels.values())
        .map(|(&x, &r)| (x - r).abs())
        .fold(T::zero(), T::max);
    let scale = T::one().max(levels.r_max());
    if !(residual <= T::lit(T::SOLVE_RESIDUAL_TOL) * scale) {
        return Err(Error::SingularNoise { det: det.as_f64() });
    }
    Ok(SurrogateTable {
        values,
        source_det: det,
    })
}

/// Interval representative used by [`Quantizer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Representative {
    #[default]
    Midpoint,
    UpperEndpoint,
}

/// Uniform partition of `(lower, upper]` into `bins` half-open intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer<T> {
    lower: T,
    upper: T,
    bins: usize,
    representative: Representative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized<T> {
    pub level: usize,
    pub value: T,
    /// The input fell outside `(lower, upper]` and was clamped to an edge bin.
    pub clamped: bool,
}

impl<T: Real> Quantizer<T> {
    pub fn new(lower: T, upper: T, bins: usize, representative: Representative) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(invalid_arg("quantizer needs finite lower < upper"));
        }
        if bins == 0 {
            return Err(invalid_arg("quantizer needs at least one bin"));
        }
        Ok(Self {
            lower,
            upper,
            bins,
            representative,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn width(&self) -> T {
        (self.upper - self.lower) / T::from_count(self.bins)
    }

    pub fn representative_of(&self, level: usize) -> T {
        let w = self.width();
        let left = self.lower + T::from_count(level) * w;
        match self.representative {
            Representative::Midpoint => left + w * T::lit(0.5),
            Representative::UpperEndpoint => left + w,
        }
    }

    /// The representative value of every bin, as reward levels.
    pub fn levels(&self) -> RewardLevels<T> {
        let values = (0..self.bins).map(|i| self.representative_of(i)).collect();
        let r_max = self.lower.abs().max(self.upper.abs());
        RewardLevels::with_r_max(values, r_max).expect("bins are strictly increasing")
    }

    pub fn quantize(&self, reward: T) -> Quantized<T> {
        let clamped = !(reward > self.lower && reward <= self.upper);
        let level = if reward <= self.lower || reward.is_nan() {
            0
        } else if reward > self.upper {
            self.bins - 1
        } else {
            let pos = ((reward - self.lower) / self.width()).ceil();
            let idx = pos.to_usize().unwrap_or(1).max(1) - 1;
            idx.min(self.bins - 1)
        };
        Quantized {
            level,
            value: self.representative_of(level),
            clamped,
        }
    }
}

pub fn quantize<T: Real>(reward: T, q: &Quantizer<T>) -> Quantized<T> {
    q.quantize(reward)
}

/// Per-level blend `(1 - η) R_k + η R̂_k`; `η = 1` keeps the surrogate.
pub fn proxy_blend<T: Real>(
    raw: &RewardLevels<T>,
    surrogate: &SurrogateTable<T>,
    eta: T,
) -> Result<SurrogateTable<T>> {
    if !(eta >= T::zero() && eta <= T::one()) {
        return Err(invalid_arg(format!("eta must lie in [0, 1], got {eta}")));
    }
    if raw.len() != surrogate.len() {
        return Err(invalid_arg(
            "raw levels and surrogate table differ in length",
        ));
    }
    if eta == T::one() {
        return Ok(surrogate.clone());
    }
    let values = raw
        .values()
        .iter()
        .zip(&surrogate.values)
        .map(|(&r, &s)| (T::one() - eta) * r + eta * s)
        .collect();
    Ok(SurrogateTable {
        values,
        source_det: surrogate.source_det,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceReport<T> {
    pub mean_true: T,
    pub mean_surrogate: T,
    pub var_true: T,
    pub var_surrogate: T,
    /// `M² R_max² / det(C)²`.
    pub bound: T,
}

impl<T: Real> VarianceReport<T> {
    /// `var_true <= var_surrogate <= bound`, allowing rounding slack.
    pub fn ordering_holds(&self) -> bool {
        let slack = T::lit(1e-12) * T::one().max(self.var_surrogate.abs());
        self.var_true <= self.var_surrogate + slack && self.var_surrogate <= self.bound + slack
    }
}

/// Moments of the true reward and of its surrogate under a true-level
/// distribution `p`.
pub fn variance_and_bounds<T: Real>(
    levels: &RewardLevels<T>,
    c: &ConfusionMatrix<T>,
    p: &[T],
) -> Result<VarianceReport<T>> {
    if p.len() != levels.len() {
        return Err(invalid_arg(
            "distribution length does not match the level count",
        ));
    }
    let total: T = p.iter().copied().sum();
    if p.iter().any(|&x| !(x >= T::zero())) || (total - T::one()).abs() > T::lit(T::STOCHASTIC_TOL)
    {
        return Err(invalid_arg("p must be a probability distribution"));
    }
    let table = surrogate_multi(levels, c)?;
    let p_hat = c.observed_distribution(p);
    let moments = |weights: &[T], vals: &[T]| {
        let mean: T = weights.iter().zip(vals).map(|(&w, &v)| w * v).sum();
        let var: T = weights
            .iter()
            .zip(vals)
            .map(|(&w, &v)| w * (v - mean) * (v - mean))
            .sum();
        (mean, var)
    };
    let (mean_true, var_true) = moments(p, levels.values());
    let (mean_surrogate, var_surrogate) = moments(&p_hat, &table.values);
    let m = T::from_count(levels.len());
    let r_max = levels.r_max();
    let det = c.det();
    let bound = m * m * r_max * r_max / (det * det);
    Ok(VarianceReport {
        mean_true,
        mean_surrogate,
        var_true,
        var_surrogate,
        bound,
    })
}
