//! Runs a sweep of reward modes × seeds and writes per-run files plus
//! aggregates.
//!
//! Output layout under the sweep directory:
//!
//! * `manifest.txt`: config hash and fingerprint.
//! * `runs/<mode>/run_NNNN.csv`: one file per run (see [`crate::records`]),
//!   or `run_NNNN.failed` holding the error message.
//! * `aggregate_<mode>.csv`, `summary.csv`, `curves.svg`.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use robust_reward::environments::{
    make_gridworld, make_random_mdp, make_six_state_chain_variant, ContinuousControlLite,
    ContinuousRewardBandit,
};
use robust_reward::learners::{
    phased_q_learning_with, run_episode_loop, PhasedConfig, RewardMode, RunRecord,
};
use robust_reward::mdp::evaluate_policy;
use robust_reward::noise::{ConfusionMatrix, NoiseChannel};
use robust_reward::surrogate::{
    proxy_blend, surrogate_multi, Quantizer, RewardLevels, SurrogateTable,
};
use robust_reward::{Environment, MdpEnv};

use crate::aggregate::{self, DirAggregate, FINAL_WINDOW};
use crate::config::{EnvironmentSpec, SweepConfig};
use crate::error::{io_err, HarnessError, Result};
use crate::mdp_file;
use crate::records::{self, fmt_f64, RunFile, RunMeta};
use crate::seeds::RunSeeds;

/// Policy-evaluation tolerance for phased runs.
const EVAL_TOLERANCE: f64 = 1e-10;

pub enum BuiltEnv {
    Mdp(MdpEnv<f64>),
    Control(ContinuousControlLite<f64>),
    Bandit(ContinuousRewardBandit<f64>),
}

impl BuiltEnv {
    pub fn as_dyn(&mut self) -> &mut dyn Environment<f64> {
        match self {
            BuiltEnv::Mdp(e) => e,
            BuiltEnv::Control(e) => e,
            BuiltEnv::Bandit(e) => e,
        }
    }
}

pub fn build_environment(spec: &EnvironmentSpec) -> Result<BuiltEnv> {
    Ok(match spec {
        EnvironmentSpec::Chain {
            gamma,
            variant,
            horizon,
        } => BuiltEnv::Mdp(MdpEnv::new(
            make_six_state_chain_variant(*gamma, *variant)?,
            0,
            *horizon,
        )?),
        EnvironmentSpec::Random { spec, horizon } => {
            let levels = RewardLevels::new(spec.levels())?;
            BuiltEnv::Mdp(MdpEnv::with_levels(
                make_random_mdp(spec)?,
                levels,
                0,
                *horizon,
            )?)
        }
        EnvironmentSpec::Grid { spec, horizon } => {
            BuiltEnv::Mdp(MdpEnv::new(make_gridworld(spec)?, 0, *horizon)?)
        }
        EnvironmentSpec::File { path, horizon } => {
            let file = mdp_file::load(path)?;
            BuiltEnv::Mdp(MdpEnv::new(file.model, file.start, *horizon)?)
        }
        EnvironmentSpec::Control { params, corrupted } => BuiltEnv::Control(if *corrupted {
            ContinuousControlLite::corrupted(params.clone())?
        } else {
            ContinuousControlLite::new(params.clone())?
        }),
        EnvironmentSpec::Bandit {
            rewards,
            lower,
            upper,
            bins,
            representative,
        } => {
            let q = Quantizer::new(*lower, *upper, *bins, *representative)?;
            BuiltEnv::Bandit(ContinuousRewardBandit::new(rewards.clone(), q)?)
        }
    })
}

fn matrix_text(c: &ConfusionMatrix<f64>) -> String {
    let rows: Vec<String> = c
        .rows()
        .iter()
        .map(|r| {
            format!(
                "[{}]",
                r.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
            )
        })
        .collect();
    format!("[{}]", rows.join(","))
}

fn channel_for(config: &SweepConfig, m: usize, seeds: &RunSeeds) -> Result<NoiseChannel<f64>> {
    if m == 1 {
        // A single level cannot be corrupted.
        return Ok(NoiseChannel::fixed(ConfusionMatrix::identity(1)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.channel);
    Ok(NoiseChannel::build(&config.noise, m, &mut rng)?)
}

fn last_mean(returns: &[f64]) -> Option<f64> {
    let tail = &returns[returns.len().saturating_sub(FINAL_WINDOW)..];
    (!tail.is_empty()).then(|| aggregate::mean(tail))
}

/// Executes run `index` of `mode`.
pub fn run_one(
    config: &SweepConfig,
    config_hash: &str,
    mode: RewardMode,
    index: usize,
) -> Result<RunFile> {
    let seed = config.seeds.seed(config.master_seed, index);
    let seeds = RunSeeds::new(seed);
    let mut env = build_environment(&config.environment)?;
    let m = env.as_dyn().reward_levels().len();
    let channel = channel_for(config, m, &seeds)?;
    let noise = channel
        .matrices()
        .iter()
        .map(matrix_text)
        .collect::<Vec<_>>()
        .join(";");
    let mut meta = RunMeta {
        config_hash: config_hash.to_string(),
        mode: mode.name().to_string(),
        run_id: index,
        seed,
        noise,
        episodes: 0,
        last30_mean: None,
        final_success: None,
        q_error: None,
        singular_freezes: 0,
    };
    if let Some(phased) = &config.phased {
        let BuiltEnv::Mdp(env) = &env else {
            return Err(HarnessError::Format {
                path: PathBuf::from("learner.algorithm"),
                message: "phased-q needs a finite MDP".into(),
            });
        };
        let records = run_phased(
            env,
            phased,
            &channel,
            config.learner.eta,
            mode,
            &seeds,
            &mut meta,
        )?;
        return Ok(RunFile { meta, records });
    }
    let mut learner = config.learner.clone();
    learner.reward_mode = mode;
    let mut rngs = seeds.rngs();
    let out = run_episode_loop(env.as_dyn(), &channel, &learner, &mut rngs)?;
    meta.episodes = out.episode_returns.len() as u64;
    meta.last30_mean = last_mean(&out.episode_returns);
    meta.final_success = out.success;
    meta.q_error = out.q_error;
    meta.singular_freezes = out.singular_freezes;
    Ok(RunFile {
        meta,
        records: out.records,
    })
}

/// One record per phase. `step` counts generative calls so far, `episode`
/// is the phase number and `return` is the exact discounted value of the
/// current greedy policy from the start state.
fn run_phased(
    env: &MdpEnv<f64>,
    phased: &PhasedConfig,
    channel: &NoiseChannel<f64>,
    eta: f64,
    mode: RewardMode,
    seeds: &RunSeeds,
    meta: &mut RunMeta,
) -> Result<Vec<RunRecord>> {
    let levels = env.reward_levels();
    let c = match mode {
        RewardMode::True => ConfusionMatrix::identity(levels.len()),
        _ => channel.matrices()[0].clone(),
    };
    let table = match mode {
        RewardMode::SurrogateKnown => proxy_blend(levels, &surrogate_multi(levels, &c)?, eta)?,
        _ => SurrogateTable::passthrough(levels),
    };
    let model = env.model();
    let oracle = env.oracle().expect("finite MDPs carry an oracle");
    let pairs = (0..model.num_states())
        .filter(|&s| !model.is_terminal(s))
        .count()
        * model.num_actions();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.env);
    let mut records = Vec::with_capacity(phased.phases);
    let mut failure = None;
    let mut last_q = None;
    phased_q_learning_with(env, phased, &c, &table, &mut rng, &mut |k, q| {
        if failure.is_some() {
            return;
        }
        let policy = q.greedy_policy(|s| model.is_terminal(s));
        match evaluate_policy(model, &policy, EVAL_TOLERANCE) {
            Ok(v) => records.push(RunRecord {
                step: (k * phased.samples_per_phase * pairs) as u64,
                episode: k as u64,
                ret: v.get(env.start()),
                est_err_max: None,
                est_e_plus: None,
                est_e_minus: None,
                success: Some(oracle.policy_matches(q)),
            }),
            Err(e) => failure = Some(e),
        }
        last_q = Some(q.clone());
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let q = last_q.expect("at least one phase");
    meta.episodes = phased.phases as u64;
    meta.last30_mean = records.last().map(|r| r.ret);
    meta.final_success = Some(oracle.policy_matches(&q));
    meta.q_error = Some(oracle.q_error(&q));
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub out_dir: PathBuf,
    pub failed: usize,
    pub aggregate: DirAggregate,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Runs every (mode, seed) pair on `workers` threads and aggregates the
/// results into `out_dir`. Any previous `runs/` subdirectory is replaced.
pub fn run_sweep(config: &SweepConfig, out_dir: &Path, workers: usize) -> Result<SweepReport> {
    let hash = config.hash();
    let runs_dir = out_dir.join("runs");
    if runs_dir.exists() {
        std::fs::remove_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    }
    for mode in &config.modes {
        let d = runs_dir.join(mode.name());
        std::fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    write(
        &out_dir.join("manifest.txt"),
        format!("config_hash={hash}\n{}\n", config.fingerprint()).as_bytes(),
    )?;

    let jobs: Vec<(RewardMode, usize)> = config
        .modes
        .iter()
        .flat_map(|&m| (0..config.seeds.len()).map(move |i| (m, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Format {
            path: out_dir.to_path_buf(),
            message: e.to_string(),
        })?;
    let outcomes: Vec<Result<bool>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(mode, i)| {
                let dir = runs_dir.join(mode.name());
                match run_one(config, &hash, mode, i) {
                    Ok(file) => write(
                        &dir.join(format!("run_{i:04}.csv")),
                        &records::encode(&file),
                    )
                    .map(|_| true),
                    Err(e) => {
                        log::error!("{} run {i} failed: {e}", mode.name());
                        write(
                            &dir.join(format!("run_{i:04}.failed")),
                            format!("{e}\n").as_bytes(),
                        )
                        .map(|_| false)
                    }
                }
            })
            .collect()
    });
    let mut failed = 0;
    for o in outcomes {
        if !o? {
            failed += 1;
        }
    }
    let agg = &config.aggregation;
    let aggregate = aggregate::aggregate_dir(
        out_dir,
        agg.percentile_low,
        agg.percentile_high,
        &config.name,
    )?;
    log::info!(
        "sweep {} finished: {} runs, {failed} failed",
        config.name,
        jobs.len()
    );
    Ok(SweepReport {
        out_dir: out_dir.to_path_buf(),
        failed,
        aggregate,
    })
}
