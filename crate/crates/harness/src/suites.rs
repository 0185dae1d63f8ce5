//! Named property suites. Each suite runs one battery of checks and
//! reports every outcome together with the seeds it used.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use robust_reward::environments::{make_random_mdp, RandomMdpSpec};
use robust_reward::estimator::ObservationBuffer;
use robust_reward::learners::{phased_q_learning, PhasedConfig, RewardMode};
use robust_reward::mdp::{value_iteration, MdpModel};
use robust_reward::noise::{build_confusion, perturb, ConfusionMatrix, NoiseSchedule, NoiseSpec};
use robust_reward::surrogate::{
    proxy_blend, surrogate_binary, surrogate_multi, variance_and_bounds, RewardLevels,
    SurrogateTable,
};
use robust_reward::{Environment, MdpEnv};

use crate::config::SweepConfig;
use crate::error::{io_err, HarnessError, Result};
use crate::seeds::derive_seed;
use crate::sweep::{self, build_environment, run_one};

pub const SUITES: [&str; 12] = [
    "unbiasedness",
    "corollary",
    "variance-bounds",
    "magnitude-bound",
    "convergence",
    "robustness",
    "estimation",
    "tracking",
    "phased",
    "variance-reduction",
    "determinism",
    "all",
];

const EXACT_TOL: f64 = 1e-9;
const INSTANCES: usize = 1000;
const MIN_ABS_DET: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<Check>,
    pub seeds: Vec<u64>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        writeln!(
            f,
            "suite {}: {verdict} ({:.2} s)",
            self.suite,
            self.elapsed.as_secs_f64()
        )?;
        for c in &self.checks {
            writeln!(
                f,
                "  [{}] {}: {}",
                if c.passed { "ok" } else { "FAILED" },
                c.name,
                c.detail
            )?;
        }
        write!(f, "  seeds: {}", seed_summary(&self.seeds))
    }
}

fn seed_summary(seeds: &[u64]) -> String {
    match seeds {
        [] => "none".into(),
        [s] => format!("{s}"),
        [a, b] => format!("{a}, {b}"),
        [a, .., z] => format!("{} seeds ({a} ... {z})", seeds.len()),
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub master_seed: u64,
    /// Overrides the run or instance count of seeded suites.
    pub seeds: Option<usize>,
    pub workers: usize,
    /// Where the determinism suite places its sweeps; a temporary
    /// directory when unset.
    pub out: Option<PathBuf>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            master_seed: 20_170_921,
            seeds: None,
            workers: 1,
            out: None,
        }
    }
}

impl SuiteOptions {
    fn count(&self, default: usize) -> usize {
        self.seeds.unwrap_or(default).max(1)
    }

    fn seeds_for(&self, stream: &str, n: usize) -> Vec<u64> {
        (0..n as u64)
            .map(|i| derive_seed(self.master_seed, stream, i))
            .collect()
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| HarnessError::Format {
                path: PathBuf::from("<pool>"),
                message: e.to_string(),
            })
    }
}

/// Runs the named suite, or every suite for `"all"`.
pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<Vec<SuiteReport>> {
    if name == "all" {
        let mut out = Vec::new();
        for n in SUITES.iter().filter(|&&n| n != "all") {
            out.extend(run_suite(n, opts)?);
        }
        return Ok(out);
    }
    let suite =
        SUITES
            .iter()
            .copied()
            .find(|&n| n == name)
            .ok_or_else(|| HarnessError::UnknownSuite {
                name: name.to_string(),
                valid: SUITES.to_vec(),
            })?;
    let start = Instant::now();
    let (checks, seeds) = match suite {
        "unbiasedness" => unbiasedness(opts)?,
        "corollary" => corollary(opts)?,
        "variance-bounds" => variance_bounds(opts)?,
        "magnitude-bound" => magnitude_bound(opts)?,
        "convergence" => convergence(opts)?,
        "robustness" => robustness(opts)?,
        "estimation" => estimation(opts)?,
        "tracking" => tracking(opts)?,
        "phased" => phased(opts)?,
        "variance-reduction" => variance_reduction(opts)?,
        "determinism" => determinism(opts)?,
        _ => unreachable!("registry and dispatch agree"),
    };
    Ok(vec![SuiteReport {
        suite,
        checks,
        seeds,
        elapsed: start.elapsed(),
    }])
}

type Outcome = Result<(Vec<Check>, Vec<u64>)>;

// ---- closed-form suites -------------------------------------------------

/// A random instance: levels in `[0, 1]`, `C = (1 - ω) I + ω N` with rows of
/// `N` uniform on the simplex and `|det C| >= 0.05`, and a true-level
/// distribution `p`.
pub struct Instance {
    pub levels: RewardLevels<f64>,
    pub c: ConfusionMatrix<f64>,
    pub p: Vec<f64>,
}

pub fn random_instance(seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=6);
    let mut values: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    while values.len() < m {
        values.push(values.last().copied().unwrap_or(0.0) * 0.5 + 0.5);
        values.sort_by(f64::total_cmp);
        values.dedup();
    }
    let levels = RewardLevels::new(values)?;
    let c = loop {
        let omega = rng.random::<f64>();
        let c = build_confusion(&NoiseSpec::rand_all(omega), m, &mut rng)?;
        if c.det().abs() >= MIN_ABS_DET {
            break c;
        }
    };
    let w: Vec<f64> = (0..m).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = w.iter().sum();
    Ok(Instance {
        levels,
        c,
        p: w.iter().map(|x| x / total).collect(),
    })
}

fn instances(opts: &SuiteOptions) -> Result<(Vec<Instance>, Vec<u64>)> {
    let seeds = opts.seeds_for("instance", opts.count(INSTANCES));
    let inst = seeds
        .iter()
        .map(|&s| random_instance(s))
        .collect::<Result<_>>()?;
    Ok((inst, seeds))
}

fn worst(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

fn unbiasedness(opts: &SuiteOptions) -> Outcome {
    let start = Instant::now();
    let (inst, seeds) = instances(opts)?;
    let mut pass = 0;
    let mut max_err = 0.0f64;
    for i in &inst {
        let t = surrogate_multi(&i.levels, &i.c)?;
        let err = worst((0..i.c.size()).map(|j| {
            let expect: f64 = i.c.row(j).iter().zip(&t.values).map(|(c, r)| c * r).sum();
            (expect - i.levels.value(j)).abs()
        }));
        max_err = max_err.max(err);
        pass += usize::from(err <= EXACT_TOL);
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        vec![
            Check::new(
                "row expectation of the surrogate equals the true level",
                pass == inst.len(),
                format!(
                    "{pass}/{} instances within {EXACT_TOL:e}, max error {max_err:.3e}",
                    inst.len()
                ),
            ),
            Check::new("runtime under 5 s", secs < 5.0, format!("{secs:.3} s")),
        ],
        seeds,
    ))
}

fn corollary(opts: &SuiteOptions) -> Outcome {
    let (inst, seeds) = instances(opts)?;
    let mut pass = 0;
    let mut max_err = 0.0f64;
    for i in &inst {
        let t = surrogate_multi(&i.levels, &i.c)?;
        let p_hat = i.c.observed_distribution(&i.p);
        let lhs: f64 = p_hat.iter().zip(&t.values).map(|(p, r)| p * r).sum();
        let rhs: f64 = i.p.iter().zip(i.levels.values()).map(|(p, r)| p * r).sum();
        let err = (lhs - rhs).abs();
        max_err = max_err.max(err);
        pass += usize::from(err <= EXACT_TOL);
    }
    Ok((
        vec![Check::new(
            "observed-distribution mean of the surrogate equals the true mean",
            pass == inst.len(),
            format!(
                "{pass}/{} instances within {EXACT_TOL:e}, max error {max_err:.3e}",
                inst.len()
            ),
        )],
        seeds,
    ))
}

fn moments(weights: &[f64], values: &[f64]) -> (f64, f64) {
    let mean: f64 = weights.iter().zip(values).map(|(w, v)| w * v).sum();
    let second: f64 = weights.iter().zip(values).map(|(w, v)| w * v * v).sum();
    (mean, second - mean * mean)
}

fn variance_bounds(opts: &SuiteOptions) -> Outcome {
    let (inst, seeds) = instances(opts)?;
    let slack = |x: f64| 1e-12 * x.abs().max(1.0);
    let (mut lower_bad, mut upper_bad, mut report_bad) = (0, 0, 0);
    let (mut binary, mut binary_bad) = (0, 0);
    for i in &inst {
        let t = surrogate_multi(&i.levels, &i.c)?;
        let p_hat = i.c.observed_distribution(&i.p);
        let (_, var_true) = moments(&i.p, i.levels.values());
        let (_, var_sur) = moments(&p_hat, &t.values);
        let m = i.c.size() as f64;
        let r_max = i.levels.r_max();
        let det = i.c.det();
        let bound = m * m * r_max * r_max / (det * det);
        lower_bad += usize::from(var_true > var_sur + slack(var_sur));
        upper_bad += usize::from(var_sur > bound + slack(bound));
        let rep = variance_and_bounds(&i.levels, &i.c, &i.p)?;
        report_bad +=
            usize::from(!rep.ordering_holds() || (rep.var_surrogate - var_sur).abs() > 1e-9);
        if i.c.size() == 2 {
            binary += 1;
            let (e_minus, e_plus) = (i.c.entry(0, 1), i.c.entry(1, 0));
            let bb = 4.0 * r_max * r_max / (1.0 - e_plus - e_minus).powi(2);
            // The closed form is defined for e_plus + e_minus < 1 only.
            let same = e_plus + e_minus >= 1.0 || {
                let tb = surrogate_binary(i.levels.value(1), i.levels.value(0), e_plus, e_minus)?;
                tb.values
                    .iter()
                    .zip(&t.values)
                    .all(|(a, b)| (a - b).abs() <= EXACT_TOL)
            };
            binary_bad += usize::from(var_sur > bb + slack(bb) || !same);
        }
    }
    let n = inst.len();
    Ok((
        vec![
            Check::new(
                "Var(r) <= Var(r_hat)",
                lower_bad == 0,
                format!("{lower_bad} violations in {n} instances"),
            ),
            Check::new(
                "Var(r_hat) <= M^2 R_max^2 / det(C)^2",
                upper_bad == 0,
                format!("{upper_bad} violations in {n} instances"),
            ),
            Check::new(
                "library variance report agrees",
                report_bad == 0,
                format!("{report_bad} disagreements in {n} instances"),
            ),
            Check::new(
                "binary case: Var(r_hat) <= 4 R_max^2 / (1 - e_plus - e_minus)^2",
                binary_bad == 0,
                format!("{binary_bad} violations in {binary} binary instances"),
            ),
        ],
        seeds,
    ))
}

fn magnitude_bound(opts: &SuiteOptions) -> Outcome {
    let (inst, seeds) = instances(opts)?;
    let mut bad = 0;
    let mut worst_ratio = 0.0f64;
    for i in &inst {
        let t = surrogate_multi(&i.levels, &i.c)?;
        let bound = i.c.size() as f64 * i.levels.r_max() / i.c.det().abs();
        let ratio = if bound > 0.0 {
            t.max_abs() / bound
        } else {
            0.0
        };
        worst_ratio = worst_ratio.max(ratio);
        bad += usize::from(t.max_abs() > bound * (1.0 + 1e-12));
    }
    Ok((
        vec![Check::new(
            "max |R_hat| <= M R_max / |det C|",
            bad == 0,
            format!(
                "{bad} violations in {} instances, largest ratio to bound {worst_ratio:.4}",
                inst.len()
            ),
        )],
        seeds,
    ))
}

// ---- learner suites -----------------------------------------------------

/// Chain sweep config text with the default learner.
fn chain_config(
    omega: f64,
    seeds: usize,
    master: u64,
    max_steps: u64,
    extra_learner: &str,
) -> Result<SweepConfig> {
    let text = format!(
        "schema_version = 1\nname = \"chain\"\nmaster_seed = {master}\nseeds = {seeds}\n\
         modes = [\"noisy\", \"surrogate-known\", \"surrogate-estimated\"]\n\
         [environment]\nkind = \"chain\"\ngamma = 0.9\n\
         [noise]\nkind = \"symmetric\"\nomega = {omega}\n\
         [learner]\nmax_steps = {max_steps}\n{extra_learner}"
    );
    Ok(SweepConfig::parse(&text, Path::new("."))?)
}

/// Runs `mode` for every seed of `config` and returns `(seed, file)` pairs.
fn run_all(
    opts: &SuiteOptions,
    config: &SweepConfig,
    mode: RewardMode,
) -> Result<Vec<crate::records::RunFile>> {
    let hash = config.hash();
    opts.pool()?.install(|| {
        (0..config.seeds.len())
            .into_par_iter()
            .map(|i| run_one(config, &hash, mode, i))
            .collect()
    })
}

fn successes(files: &[crate::records::RunFile]) -> usize {
    files
        .iter()
        .filter(|f| f.meta.final_success == Some(true))
        .count()
}

fn run_seeds(config: &SweepConfig) -> Vec<u64> {
    (0..config.seeds.len())
        .map(|i| config.seeds.seed(config.master_seed, i))
        .collect()
}

fn convergence(opts: &SuiteOptions) -> Outcome {
    let n = opts.count(40);
    let start = Instant::now();
    let mut checks = Vec::new();
    let mut seeds = Vec::new();
    for omega in [0.1, 0.3] {
        let config = chain_config(
            omega,
            n,
            opts.master_seed,
            1_000_000,
            "eval_interval = 100000\n",
        )?;
        seeds = run_seeds(&config);
        let files = run_all(opts, &config, RewardMode::SurrogateKnown)?;
        // R_max / (1 - γ) = 10 on the chain.
        let tol = 0.05 * 1.0 / (1.0 - 0.9);
        let errs: Vec<f64> = files
            .iter()
            .map(|f| f.meta.q_error.unwrap_or(f64::INFINITY))
            .collect();
        let ok = errs.iter().filter(|&&e| e <= tol).count();
        let need = (0.95 * n as f64).ceil() as usize;
        checks.push(Check::new(
            format!("omega = {omega}: sup |Q - Q*| <= {tol:.2}"),
            ok >= need,
            format!(
                "{ok}/{n} seeds (need {need}), worst {:.4}",
                worst(errs.iter().copied())
            ),
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    checks.push(Check::new(
        "runtime under 2 min",
        secs < 120.0,
        format!("{secs:.1} s"),
    ));
    Ok((checks, seeds))
}

fn robustness(opts: &SuiteOptions) -> Outcome {
    let n = opts.count(200);
    let mut checks = Vec::new();
    let low = chain_config(0.3, n, opts.master_seed, 20_000, "")?;
    let noisy = successes(&run_all(opts, &low, RewardMode::Noisy)?);
    let known = successes(&run_all(opts, &low, RewardMode::SurrogateKnown)?);
    let est = successes(&run_all(opts, &low, RewardMode::SurrogateEstimated)?);
    checks.push(Check::new(
        "omega = 0.3: surrogate-known successes >= noisy",
        known >= noisy,
        format!("known {known}/{n}, noisy {noisy}/{n}"),
    ));
    checks.push(Check::new(
        "omega = 0.3: surrogate-estimated successes >= noisy",
        est >= noisy,
        format!("estimated {est}/{n}, noisy {noisy}/{n}"),
    ));
    let high = chain_config(0.7, n, opts.master_seed, 20_000, "")?;
    let noisy_h = successes(&run_all(opts, &high, RewardMode::Noisy)?);
    let known_h = successes(&run_all(opts, &high, RewardMode::SurrogateKnown)?);
    let gap = 100.0 * (known_h as f64 - noisy_h as f64) / n as f64;
    checks.push(Check::new(
        "omega = 0.7: surrogate-known success rate exceeds noisy by >= 20 points",
        gap >= 20.0,
        format!("known {known_h}/{n}, noisy {noisy_h}/{n}, gap {gap:.1} points"),
    ));
    Ok((checks, run_seeds(&low)))
}

fn variance_reduction(opts: &SuiteOptions) -> Outcome {
    let n = opts.count(200);
    let plain = chain_config(0.7, n, opts.master_seed, 20_000, "")?;
    let filtered = chain_config(
        0.7,
        n,
        opts.master_seed,
        20_000,
        "variance_reduction = 100\n",
    )?;
    let seeds = run_seeds(&plain);
    let base = successes(&run_all(opts, &plain, RewardMode::SurrogateKnown)?);

    let env_spec = filtered.environment.clone();
    type PairCounts = (usize, usize, usize);
    let per_seed: Vec<Result<(PairCounts, bool)>> = opts.pool()?.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let seeds =
                    crate::seeds::RunSeeds::new(filtered.seeds.seed(filtered.master_seed, i));
                let mut env = build_environment(&env_spec)?;
                let m = env.as_dyn().reward_levels().len();
                let mut rng = ChaCha8Rng::seed_from_u64(seeds.channel);
                let channel =
                    robust_reward::noise::NoiseChannel::build(&filtered.noise, m, &mut rng)?;
                let mut learner = filtered.learner.clone();
                learner.reward_mode = RewardMode::SurrogateKnown;
                learner.track_reward_stats = true;
                let out = robust_reward::learners::run_episode_loop(
                    env.as_dyn(),
                    &channel,
                    &learner,
                    &mut seeds.rngs(),
                )?;
                let stats = out.reward_stats.unwrap_or_default();
                let visited: Vec<_> = stats.iter().filter(|p| p.unfiltered.count >= 2).collect();
                let ok = visited
                    .iter()
                    .filter(|p| p.filtered.variance() <= p.unfiltered.variance() + 1e-12)
                    .count();
                Ok(((visited.len(), ok, stats.len()), out.success == Some(true)))
            })
            .collect()
    });
    let mut visited = 0;
    let mut ok = 0;
    let mut with_filter = 0;
    for r in per_seed {
        let ((v, o, _), s) = r?;
        visited += v;
        ok += o;
        with_filter += usize::from(s);
    }
    let diff = 100.0 * (with_filter as f64 - base as f64) / n as f64;
    Ok((
        vec![
            Check::new(
                "filtered surrogate variance <= unfiltered on visited pairs",
                ok == visited,
                format!("{ok}/{visited} (seed, pair) cases with at least two visits"),
            ),
            Check::new(
                "omega = 0.7: surrogate + filter success rate >= surrogate alone - 5 points",
                diff >= -5.0,
                format!("filtered {with_filter}/{n}, unfiltered {base}/{n}, difference {diff:.1} points"),
            ),
        ],
        seeds,
    ))
}

// ---- estimation suites --------------------------------------------------

fn estimation(opts: &SuiteOptions) -> Outcome {
    let trials = opts.count(100);
    let start = Instant::now();
    let seeds = opts.seeds_for("estimation", trials);
    let per_pair = 500usize;
    let errs: Vec<f64> = opts.pool()?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| -> Result<f64> {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let spec = RandomMdpSpec {
                    num_states: 10,
                    num_actions: 2,
                    num_levels: 2,
                    branching: 1,
                    seed: rng.random(),
                    gamma: 0.9,
                };
                let env = MdpEnv::<f64>::with_levels(
                    make_random_mdp(&spec)?,
                    RewardLevels::new(spec.levels())?,
                    0,
                    None,
                )?;
                let c = build_confusion(&NoiseSpec::symmetric(0.3), 2, &mut rng)?;
                let mut buf = ObservationBuffer::new(10, 2, 2, None)?;
                for s in 0..10 {
                    for a in 0..2 {
                        for _ in 0..per_pair {
                            let (_, level) = env.sample(s, a, &mut rng)?;
                            buf.record(s, a, perturb(level, &c, &mut rng)?)?;
                        }
                    }
                }
                let est = buf.estimate_confusion::<f64, _>(per_pair, &mut rng);
                Ok(est.matrix.max_abs_diff(&c))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let ok = errs.iter().filter(|&&e| e <= 0.05).count();
    let need = (0.95 * trials as f64).ceil() as usize;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        vec![
            Check::new(
                "omega = 0.3, 500 observations per pair: max |c_tilde - C| <= 0.05",
                ok >= need,
                format!(
                    "{ok}/{trials} trials (need {need}), worst {:.4}",
                    worst(errs.into_iter())
                ),
            ),
            Check::new("runtime under 30 s", secs < 30.0, format!("{secs:.2} s")),
        ],
        seeds,
    ))
}

fn tracking(opts: &SuiteOptions) -> Outcome {
    let n = opts.count(50);
    let seeds = opts.seeds_for("tracking", n);
    let schedule = NoiseSchedule::<f64>::four_phase_binary();
    let mut phase_bounds = Vec::new();
    let mut from = 0u64;
    for (until, _) in schedule.segments() {
        phase_bounds.push((from, *until));
        from = *until;
    }
    let total = from;
    let d_max = 1000;
    let every = 100;
    let per_seed: Vec<Result<(bool, f64)>> = opts.pool()?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let spec = RandomMdpSpec {
                    num_states: 5,
                    num_actions: 2,
                    num_levels: 2,
                    branching: 1,
                    seed: rng.random(),
                    gamma: 0.9,
                };
                let env = MdpEnv::<f64>::with_levels(
                    make_random_mdp(&spec)?,
                    RewardLevels::new(spec.levels())?,
                    0,
                    None,
                )?;
                let channel = robust_reward::noise::NoiseChannel::build(&schedule, 2, &mut rng)?;
                let mut buf = ObservationBuffer::new(5, 2, 2, Some(d_max))?;
                let mut ok = true;
                let mut worst_err = 0.0f64;
                for step in 0..total {
                    let (s, a) = (rng.random_range(0..5), rng.random_range(0..2));
                    let (_, level) = env.sample(s, a, &mut rng)?;
                    let c = channel.matrix_at(step);
                    buf.record(s, a, perturb(level, c, &mut rng)?)?;
                    let done = step + 1;
                    if done % every != 0 {
                        continue;
                    }
                    let (lo, hi) = phase_bounds[channel.segment_index(step)];
                    if done < hi - (hi - lo) / 5 || done > hi {
                        continue;
                    }
                    let est = buf.estimate_confusion::<f64, _>(20, &mut rng);
                    let (em, ep) = (est.matrix.entry(0, 1), est.matrix.entry(1, 0));
                    let err = (em - c.entry(0, 1)).abs().max((ep - c.entry(1, 0)).abs());
                    worst_err = worst_err.max(err);
                    ok &= est.ready && err <= 0.05;
                }
                Ok((ok, worst_err))
            })
            .collect()
    });
    let mut pass = 0;
    let mut worst_err = 0.0f64;
    for r in per_seed {
        let (ok, w) = r?;
        pass += usize::from(ok);
        worst_err = worst_err.max(w);
    }
    let need = (0.9 * n as f64).ceil() as usize;
    Ok((
        vec![Check::new(
            "estimated (e_minus, e_plus) within 0.05 over the last 20% of every phase",
            pass >= need,
            format!("{pass}/{n} seeds (need {need}), worst error {worst_err:.4}"),
        )],
        seeds,
    ))
}

// ---- phased Q-learning --------------------------------------------------

fn two_state_mdp() -> Result<MdpModel<f64>> {
    let p = vec![
        vec![vec![0.7, 0.3], vec![0.2, 0.8]],
        vec![vec![0.6, 0.4], vec![0.1, 0.9]],
    ];
    // Reward 1 for landing in state 1.
    let r = vec![vec![vec![0.0, 1.0]; 2]; 2];
    Ok(MdpModel::new(p, r, 0.8, &[])?)
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn phased(opts: &SuiteOptions) -> Outcome {
    let n = opts.count(30);
    let seeds = opts.seeds_for("phased", n);
    let model = two_state_mdp()?;
    let (v_star, _) = value_iteration(&model, 1e-12)?;
    let env = MdpEnv::new(model, 0, None)?;
    let levels = env.reward_levels().clone();
    let c = ConfusionMatrix::from_flip_rates(0.2, 0.2)?;
    let table: SurrogateTable<f64> = proxy_blend(&levels, &surrogate_multi(&levels, &c)?, 1.0)?;
    let sizes = [10usize, 100, 1000, 10_000];
    let mut means = Vec::new();
    let pool = opts.pool()?;
    for &m in &sizes {
        let cfg = PhasedConfig {
            phases: 60,
            samples_per_phase: m,
        };
        let errs: Vec<f64> = pool.install(|| {
            seeds
                .par_iter()
                .map(|&s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s, "samples", m as u64));
                    let (v, _) = phased_q_learning(&env, &cfg, &c, &table, &mut rng)?;
                    Ok(v.sup_distance(&v_star))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        means.push(crate::aggregate::mean(&errs));
    }
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let xs: Vec<f64> = sizes.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = means.iter().map(|e| e.ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    let listing = sizes
        .iter()
        .zip(&means)
        .map(|(m, e)| format!("m={m}: {e:.4e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((
        vec![
            Check::new(
                "seed-averaged sup |V - V*| strictly decreases in m",
                decreasing,
                listing,
            ),
            Check::new(
                "log-log slope within a factor 3 of -1/2",
                (-1.5..=-1.0 / 6.0).contains(&slope),
                format!("slope {slope:.3}"),
            ),
        ],
        seeds,
    ))
}

// ---- determinism --------------------------------------------------------

const DETERMINISM_CONFIG: &str = r#"
schema_version = 1
name = "determinism"
master_seed = 99
seeds = 4
modes = ["true", "noisy", "surrogate-known", "surrogate-estimated"]
[environment]
kind = "chain"
[noise]
kind = "symmetric"
omega = 0.3
[learner]
max_steps = 5000
eval_interval = 250
"#;

fn files_under(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).map_err(io_err(&d))? {
            let p = e.map_err(io_err(&d))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).expect("under dir").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn determinism(opts: &SuiteOptions) -> Outcome {
    let mut config = SweepConfig::parse(DETERMINISM_CONFIG, Path::new("."))?;
    config.master_seed = opts.master_seed;
    if let Some(n) = opts.seeds {
        config.seeds = crate::config::SeedSpec::Count(n.max(1));
    }
    let tmp;
    let root = match &opts.out {
        Some(d) => d.clone(),
        None => {
            tmp = tempfile::tempdir().map_err(io_err(Path::new("<tempdir>")))?;
            tmp.path().to_path_buf()
        }
    };
    let (a, b) = (root.join("first"), root.join("second"));
    // The second pass uses a different worker count; output must not change.
    sweep::run_sweep(&config, &a, 1)?;
    sweep::run_sweep(&config, &b, opts.workers.max(1) + 1)?;
    let fa = files_under(&a)?;
    let fb = files_under(&b)?;
    let csvs = fa
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .count();
    let mut differing = Vec::new();
    if fa != fb {
        differing.push("file lists differ".to_string());
    }
    for rel in fa.iter().filter(|p| fb.contains(p)) {
        let (x, y) = (a.join(rel), b.join(rel));
        let bx = std::fs::read(&x).map_err(io_err(&x))?;
        let by = std::fs::read(&y).map_err(io_err(&y))?;
        if bx != by {
            differing.push(rel.display().to_string());
        }
    }
    let seeds = run_seeds(&config);
    Ok((
        vec![Check::new(
            "rerun of the same sweep is byte-identical",
            differing.is_empty() && csvs > 0,
            if differing.is_empty() {
                format!("{} files compared ({csvs} CSV)", fa.len())
            } else {
                format!("differences: {}", differing.join(", "))
            },
        )],
        seeds,
    ))
}
