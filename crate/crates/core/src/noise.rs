//! Reward confusion matrices, the noise models that generate them and the
//! channel that corrupts true reward levels.
//!
//! A confusion matrix `C` is row-stochastic: `C[j][k]` is the probability that
//! true level `j` is observed as level `k`. Noise models follow
//! `C = (1 - ω) I + ω N` for a row-stochastic pattern `N`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{invalid_arg, invalid_model, Result};
use crate::linalg::{mat_vec, Lu};
use crate::mdp::sample_categorical;
use crate::scalar::Real;

/// `|det(C)|` below this value marks a matrix as non-invertible.
pub const SINGULARITY_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix<T> {
    size: usize,
    entries: Vec<T>,
    det: T,
}

impl<T: Real> ConfusionMatrix<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(invalid_model("confusion matrix must be square"));
        }
        Self::from_flat(size, rows.into_iter().flatten().collect())
    }

    pub fn from_flat(size: usize, entries: Vec<T>) -> Result<Self> {
        if size == 0 || entries.len() != size * size {
            return Err(invalid_model("confusion matrix must be a non-empty square"));
        }
        let tol = T::lit(T::STOCHASTIC_TOL);
        for (j, row) in entries.chunks(size).enumerate() {
            if row.iter().any(|&c| !(c >= T::zero() && c <= T::one())) {
                return Err(invalid_model(format!(
                    "row {j} has an entry outside [0, 1]"
                )));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(invalid_model(format!("row {j} sums to {sum}, not 1")));
            }
        }
        let det = Lu::factor(&entries, size).determinant();
        Ok(Self { size, entries, det })
    }

    pub fn identity(size: usize) -> Self {
        let mut entries = vec![T::zero(); size * size];
        for i in 0..size {
            entries[i * size + i] = T::one();
        }
        Self {
            size,
            entries,
            det: T::one(),
        }
    }

    /// Binary channel over levels `[r₋, r₊]`: `[[1 - e₋, e₋], [e₊, 1 - e₊]]`.
    pub fn from_flip_rates(e_minus: T, e_plus: T) -> Result<Self> {
        for (name, e) in [("e_minus", e_minus), ("e_plus", e_plus)] {
            if !(e >= T::zero() && e <= T::one()) {
                return Err(invalid_arg(format!("{name} must lie in [0, 1], got {e}")));
            }
        }
        Self::from_flat(
            2,
            vec![T::one() - e_minus, e_minus, e_plus, T::one() - e_plus],
        )
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn entry(&self, j: usize, k: usize) -> T {
        self.entries[j * self.size + k]
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.entries[j * self.size..(j + 1) * self.size]
    }

    pub fn as_flat(&self) -> &[T] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.entries.chunks(self.size).map(<[T]>::to_vec).collect()
    }

    pub fn det(&self) -> T {
        self.det
    }

    pub fn is_invertible(&self) -> bool {
        self.det.abs().as_f64() >= SINGULARITY_THRESHOLD
    }

    /// `P(observe r₋ | true r₊)` for a binary channel.
    pub fn e_plus(&self) -> Option<T> {
        (self.size == 2).then(|| self.entry(1, 0))
    }

    /// `P(observe r₊ | true r₋)` for a binary channel.
    pub fn e_minus(&self) -> Option<T> {
        (self.size == 2).then(|| self.entry(0, 1))
    }

    /// `C · x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        mat_vec(&self.entries, self.size, x)
    }

    /// Observed-level distribution `p̂ = Cᵀ p` for a true-level distribution `p`.
    pub fn observed_distribution(&self, p: &[T]) -> Vec<T> {
        (0..self.size)
            .map(|k| (0..self.size).map(|j| p[j] * self.entry(j, k)).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn is_identity(&self) -> bool {
        (0..self.size).all(|j| {
            (0..self.size).all(|k| self.entry(j, k) == if j == k { T::one() } else { T::zero() })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    /// `N` is the anti-identity permutation `j -> M-1-j`.
    SymmetricAntiIdentity,
    /// Each row of `N` has a single unit entry off the diagonal.
    RandOne,
    /// Each row of `N` is drawn uniformly from the probability simplex.
    RandAll,
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<T> {
    pub kind: NoiseKind,
    pub omega: T,
    pub explicit: Option<ConfusionMatrix<T>>,
}

impl<T: Real> NoiseSpec<T> {
    pub fn symmetric(omega: T) -> Self {
        Self {
            kind: NoiseKind::SymmetricAntiIdentity,
            omega,
            explicit: None,
        }
    }

    pub fn rand_one(omega: T) -> Self {
        Self {
            kind: NoiseKind::RandOne,
            omega,
            explicit: None,
        }
    }

    pub fn rand_all(omega: T) -> Self {
        Self {
            kind: NoiseKind::RandAll,
            omega,
            explicit: None,
        }
    }

    pub fn explicit(matrix: ConfusionMatrix<T>) -> Self {
        Self {
            kind: NoiseKind::Explicit,
            omega: T::zero(),
            explicit: Some(matrix),
        }
    }

    /// Binary explicit spec from flip rates.
    pub fn flip_rates(e_minus: T, e_plus: T) -> Result<Self> {
        Ok(Self::explicit(ConfusionMatrix::from_flip_rates(
            e_minus, e_plus,
        )?))
    }

    pub fn noiseless() -> Self {
        Self::symmetric(T::zero())
    }
}

/// Builds `C = (1 - ω) I + ω N` for the pattern named by `spec`.
pub fn build_confusion<T: Real, R: Rng + ?Sized>(
    spec: &NoiseSpec<T>,
    m: usize,
    rng: &mut R,
) -> Result<ConfusionMatrix<T>> {
    if spec.kind == NoiseKind::Explicit {
        let c = spec
            .explicit
            .as_ref()
            .ok_or_else(|| invalid_arg("explicit noise spec carries no matrix"))?;
        if c.size() != m {
            return Err(invalid_arg(format!(
                "explicit matrix has size {}, expected {m}",
                c.size()
            )));
        }
        return Ok(c.clone());
    }
    if m < 2 {
        return Err(invalid_arg("noise models need at least two reward levels"));
    }
    let omega = spec.omega;
    if !(omega >= T::zero() && omega <= T::one()) {
        return Err(invalid_arg(format!(
            "omega must lie in [0, 1], got {omega}"
        )));
    }
    let pattern = noise_pattern(spec.kind, m, rng);
    let keep = T::one() - omega;
    let mut entries: Vec<T> = pattern.into_iter().map(|n| omega * n).collect();
    for i in 0..m {
        entries[i * m + i] += keep;
    }
    // Renormalise away accumulated rounding so rows stay stochastic.
    for row in entries.chunks_mut(m) {
        let sum: T = row.iter().copied().sum();
        row.iter_mut().for_each(|c| *c /= sum);
    }
    ConfusionMatrix::from_flat(m, entries)
}

fn noise_pattern<T: Real, R: Rng + ?Sized>(kind: NoiseKind, m: usize, rng: &mut R) -> Vec<T> {
    let mut n = vec![T::zero(); m * m];
    match kind {
        NoiseKind::SymmetricAntiIdentity => {
            for j in 0..m {
                n[j * m + (m - 1 - j)] = T::one();
            }
        }
        NoiseKind::RandOne => {
            for j in 0..m {
                // Uniform over the m-1 off-diagonal columns.
                let mut k = rng.random_range(0..m - 1);
                if k >= j {
                    k += 1;
                }
                n[j * m + k] = T::one();
            }
        }
        NoiseKind::RandAll => {
            for j in 0..m {
                let draws: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = draws.iter().sum();
                for (k, d) in draws.into_iter().enumerate() {
                    n[j * m + k] = T::lit(d / total);
                }
            }
        }
        NoiseKind::Explicit => unreachable!("explicit specs carry their matrix"),
    }
    n
}

/// Draws the observed level for a true level.
pub fn perturb<T: Real, R: Rng + ?Sized>(
    true_level: usize,
    c: &ConfusionMatrix<T>,
    rng: &mut R,
) -> Result<usize> {
    if true_level >= c.size() {
        return Err(invalid_arg(format!(
            "level {true_level} outside 0..{}",
            c.size()
        )));
    }
    Ok(sample_categorical(c.row(true_level), rng))
}

/// Piecewise-constant noise over training steps.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<T> {
    segments: Vec<(u64, NoiseSpec<T>)>,
}

impl<T: Real> NoiseSchedule<T> {
    /// `segments` pairs each spec with the step at which it stops applying.
    pub fn new(segments: Vec<(u64, NoiseSpec<T>)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(invalid_arg("a noise schedule needs at least one segment"));
        }
        if segments.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(invalid_arg(
                "schedule thresholds must be strictly increasing",
            ));
        }
        Ok(Self { segments })
    }

    pub fn constant(spec: NoiseSpec<T>) -> Self {
        Self {
            segments: vec![(u64::MAX, spec)],
        }
    }

    /// The four-phase binary schedule: (e₋, e₊) = (0.1, 0.3) until 1e4 steps,
    /// (0.2, 0.1) until 3e4, (0.3, 0.2) until 5e4 and (0.1, 0.2) until 7e4.
    pub fn four_phase_binary() -> Self {
        let phase =
            |em: f64, ep: f64| NoiseSpec::flip_rates(T::lit(em), T::lit(ep)).expect("valid rates");
        Self {
            segments: vec![
                (10_000, phase(0.1, 0.3)),
                (30_000, phase(0.2, 0.1)),
                (50_000, phase(0.3, 0.2)),
                (70_000, phase(0.1, 0.2)),
            ],
        }
    }

    pub fn segments(&self) -> &[(u64, NoiseSpec<T>)] {
        &self.segments
    }

    /// Index of the segment active at `step`.
    pub fn segment_index(&self, step: u64) -> usize {
        self.segments
            .iter()
            .position(|(until, _)| step < *until)
            .unwrap_or(self.segments.len() - 1)
    }

    pub fn lookup(&self, step: u64) -> &NoiseSpec<T> {
        &self.segments[self.segment_index(step)].1
    }
}

/// A schedule with every segment's matrix materialised once.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseChannel<T> {
    thresholds: Vec<u64>,
    matrices: Vec<ConfusionMatrix<T>>,
}

impl<T: Real> NoiseChannel<T> {
    pub fn fixed(c: ConfusionMatrix<T>) -> Self {
        Self {
            thresholds: vec![u64::MAX],
            matrices: vec![c],
        }
    }

    pub fn build<R: Rng + ?Sized>(
        schedule: &NoiseSchedule<T>,
        m: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut thresholds = Vec::with_capacity(schedule.segments.len());
        let mut matrices = Vec::with_capacity(schedule.segments.len());
        for (until, spec) in &schedule.segments {
            thresholds.push(*until);
            matrices.push(build_confusion(spec, m, rng)?);
        }
        Ok(Self {
            thresholds,
            matrices,
        })
    }

    pub fn size(&self) -> usize {
        self.matrices[0].size()
    }

    pub fn segment_index(&self, step: u64) -> usize {
        self.thresholds
            .iter()
            .position(|&until| step < until)
            .unwrap_or(self.thresholds.len() - 1)
    }

    pub fn matrix_at(&self, step: u64) -> &ConfusionMatrix<T> {
        &self.matrices[self.segment_index(step)]
    }

    pub fn matrices(&self) -> &[ConfusionMatrix<T>] {
        &self.matrices
    }

    pub fn is_stationary(&self) -> bool {
        self.matrices.len() == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_weight_is_identity() {
        let c = build_confusion(&NoiseSpec::<f64>::symmetric(0.0), 3, &mut rng(0)).unwrap();
        assert!(c.is_identity());
    }

    #[test]
    fn symmetric_binary_example() {
        let c = build_confusion(&NoiseSpec::symmetric(0.2), 2, &mut rng(0)).unwrap();
        for (got, want) in c.as_flat().iter().zip([0.8, 0.2, 0.2, 0.8]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(c.det(), 0.6, epsilon = 1e-12);
        let c = build_confusion(&NoiseSpec::symmetric(0.3), 2, &mut rng(0)).unwrap();
        assert_abs_diff_eq!(c.e_plus().unwrap(), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(c.e_minus().unwrap(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn odd_size_anti_identity_keeps_middle_level() {
        let c = build_confusion(&NoiseSpec::symmetric(0.4), 3, &mut rng(0)).unwrap();
        assert_abs_diff_eq!(c.entry(1, 1), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.entry(0, 2), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(c.entry(2, 0), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn rejects_out_of_range_weight() {
        assert!(build_confusion(&NoiseSpec::symmetric(1.2), 2, &mut rng(0)).is_err());
        assert!(build_confusion(&NoiseSpec::rand_all(-0.1), 2, &mut rng(0)).is_err());
        assert!(build_confusion(&NoiseSpec::<f64>::symmetric(0.1), 1, &mut rng(0)).is_err());
    }

    #[test]
    fn half_weight_binary_is_flagged_singular() {
        let c = build_confusion(&NoiseSpec::symmetric(0.5), 2, &mut rng(0)).unwrap();
        assert!(!c.is_invertible());
        let c = build_confusion(&NoiseSpec::symmetric(0.7), 2, &mut rng(0)).unwrap();
        assert!(c.is_invertible());
        assert_abs_diff_eq!(c.det(), -0.4, epsilon = 1e-12);
    }

    #[test]
    fn identity_channel_never_flips() {
        let c = ConfusionMatrix::<f64>::identity(4);
        let mut r = rng(3);
        for j in 0..4 {
            for _ in 0..100 {
                assert_eq!(perturb(j, &c, &mut r).unwrap(), j);
            }
        }
        assert!(perturb(4, &c, &mut r).is_err());
    }

    #[test]
    fn perturb_frequency_matches_row() {
        let c = ConfusionMatrix::new(vec![vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let mut r = rng(11);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| perturb(0, &c, &mut r).unwrap() == 1)
            .count();
        assert!((ones as f64 / n as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn perturb_is_reproducible() {
        let c = build_confusion(&NoiseSpec::rand_all(0.6), 4, &mut rng(1)).unwrap();
        let draw = |seed| {
            let mut r = rng(seed);
            (0..500)
                .map(|i| perturb(i % 4, &c, &mut r).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn four_phase_schedule_lookup() {
        let s = NoiseSchedule::<f64>::four_phase_binary();
        let at = |step| {
            let c = s.lookup(step).explicit.clone().unwrap();
            (c.e_minus().unwrap(), c.e_plus().unwrap())
        };
        assert_eq!(at(5_000), (0.1, 0.3));
        assert_eq!(at(20_000), (0.2, 0.1));
        assert_eq!(at(40_000), (0.3, 0.2));
        assert_eq!(at(69_999), (0.1, 0.2));
        assert_eq!(at(1_000_000), (0.1, 0.2));
    }

    #[test]
    fn single_segment_schedule_is_constant() {
        let s = NoiseSchedule::new(vec![(10, NoiseSpec::symmetric(0.2))]).unwrap();
        for step in [0, 9, 10, 1 << 40] {
            assert_eq!(s.lookup(step), &NoiseSpec::symmetric(0.2));
        }
        assert!(NoiseSchedule::<f64>::new(vec![]).is_err());
        let dup = vec![
            (10, NoiseSpec::symmetric(0.1)),
            (10, NoiseSpec::symmetric(0.2)),
        ];
        assert!(NoiseSchedule::new(dup).is_err());
    }

    #[test]
    fn explicit_spec_size_must_match() {
        let spec = NoiseSpec::flip_rates(0.1, 0.2).unwrap();
        assert!(build_confusion(&spec, 2, &mut rng(0)).is_ok());
        assert!(build_confusion(&spec, 3, &mut rng(0)).is_err());
    }

    #[test]
    fn single_precision_channel() {
        let c = build_confusion(&NoiseSpec::<f32>::symmetric(0.25), 2, &mut rng(0)).unwrap();
        assert!((c.det() - 0.5).abs() < 1e-6);
    }

    fn kind() -> impl Strategy<Value = NoiseKind> {
        prop_oneof![
            Just(NoiseKind::SymmetricAntiIdentity),
            Just(NoiseKind::RandOne),
            Just(NoiseKind::RandAll)
        ]
    }

    proptest! {
        #[test]
        fn built_matrices_are_row_stochastic(kind in kind(), omega in 0.0f64..=1.0, m in 2usize..8, seed in any::<u64>()) {
            let spec = NoiseSpec { kind, omega, explicit: None };
            let c = build_confusion(&spec, m, &mut rng(seed)).unwrap();
            for j in 0..m {
                let sum: f64 = c.row(j).iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
                prop_assert!(c.row(j).iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }

        #[test]
        fn symmetric_binary_determinant(omega in 0.0f64..=1.0) {
            let c = build_confusion(&NoiseSpec::symmetric(omega), 2, &mut rng(0)).unwrap();
            prop_assert!((c.det() - (1.0 - 2.0 * omega)).abs() <= 1e-12);
        }

        #[test]
        fn rand_one_keeps_identity_dominance(omega in 0.0f64..0.5, m in 2usize..8, seed in any::<u64>()) {
            let c = build_confusion(&NoiseSpec::rand_one(omega), m, &mut rng(seed)).unwrap();
            for j in 0..m {
                for k in (0..m).filter(|&k| k != j) {
                    prop_assert!(c.entry(j, j) > c.entry(j, k));
                }
            }
        }

        #[test]
        fn zero_weight_perturb_is_identity(kind in kind(), m in 2usize..6, seed in any::<u64>()) {
            let mut r = rng(seed);
            let c = build_confusion(&NoiseSpec { kind, omega: 0.0, explicit: None }, m, &mut r).unwrap();
            for j in 0..m {
                prop_assert_eq!(perturb(j, &c, &mut r).unwrap(), j);
            }
        }
    }
}
