//! Sweep configuration.
//!
//! A sweep is one TOML file:
//!
//! ```toml
//! schema_version = 1
//! name = "chain"                 # optional, used in plot titles
//! master_seed = 7
//! seeds = 200                    # a count, or an explicit list [3, 5, 8]
//! output_dir = "out/chain"       # optional; --out overrides
//! workers = 1
//! modes = ["noisy", "surrogate-known", "surrogate-estimated"]
//!
//! [environment]
//! kind = "chain"                 # chain | random | grid | control | bandit | file
//! gamma = 0.9
//!
//! [noise]
//! kind = "symmetric"             # symmetric | rand-one | rand-all | flip-rates | explicit | none
//! omega = 0.3
//!
//! [learner]
//! max_steps = 20000
//!
//! [estimator]
//! reestimate_every = 100
//!
//! [aggregation]
//! percentile_low = 10
//! percentile_high = 90
//! ```
//!
//! Environment keys by kind:
//!
//! * `chain`: `gamma` (0.9), `variant` (`episodic` | `reset-transition`), `horizon`.
//! * `random`: `states`, `actions`, `levels`, `branching`, `seed` (0), `gamma` (0.9), `horizon`.
//! * `grid`: `width` (4), `height` (4), `goal` (`[3, 3]`), `slip` (0), `gamma` (0.9), `horizon`.
//! * `control`: `horizon` (200), `gamma` (0.99), `dt`, `stiffness`, `force`,
//!   `position_bins` (8), `velocity_bins` (10), `corrupted` (true).
//! * `bandit`: `rewards` (list), `lower`, `upper`, `bins`, `representative`
//!   (`midpoint` | `upper`).
//! * `file`: `path` (relative to the config file), `horizon`. See [`crate::mdp_file`].
//!
//! Noise keys: `omega` for the three pattern kinds, `e_minus`/`e_plus` for
//! `flip-rates`, `matrix` (list of rows) for `explicit`. A time-varying
//! channel is a list of `[[noise.schedule]]` tables, each holding
//! `until_step` plus the keys of a single spec.
//!
//! Learner keys: `algorithm` (`q-learning` | `sarsa` | `phased-q`), `eta` (1),
//! `step_size` (`polynomial` | `constant`), `step_exponent` (0.77), `alpha`,
//! `exploration` (`epsilon-greedy` | `boltzmann`), `epsilon_start` (1),
//! `epsilon_end` (0.05), `epsilon_decay_fraction` (0.5), `temperature`,
//! `variance_reduction` (window length), `max_steps` (20000),
//! `eval_interval` (500), `per_state_estimation` (false), `initial_q` (0),
//! and for `phased-q`: `phases`, `samples_per_phase`.
//!
//! Estimator keys: `d_min_per_pair` (10·M), `d_max` (1000; 0 keeps everything),
//! `reestimate_every` (100).

use std::path::{Path, PathBuf};

use robust_reward::environments::{ChainVariant, ControlParams, GridSpec, RandomMdpSpec};
use robust_reward::estimator::EstimatorConfig;
use robust_reward::learners::{
    Algorithm, Exploration, LearnerConfig, PhasedConfig, RewardMode, StepSize,
};
use robust_reward::noise::{ConfusionMatrix, NoiseSchedule, NoiseSpec};
use robust_reward::surrogate::Representative;
use toml::{Table, Value};

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

fn err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeedSpec {
    Count(usize),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn len(&self) -> usize {
        match self {
            SeedSpec::Count(n) => *n,
            SeedSpec::List(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Run seed for run `index`.
    pub fn seed(&self, master: u64, index: usize) -> u64 {
        match self {
            SeedSpec::Count(_) => crate::seeds::run_seed(master, index as u64),
            SeedSpec::List(v) => v[index],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvironmentSpec {
    Chain {
        gamma: f64,
        variant: ChainVariant,
        horizon: Option<usize>,
    },
    Random {
        spec: RandomMdpSpec,
        horizon: Option<usize>,
    },
    Grid {
        spec: GridSpec,
        horizon: Option<usize>,
    },
    Control {
        params: ControlParams,
        corrupted: bool,
    },
    Bandit {
        rewards: Vec<f64>,
        lower: f64,
        upper: f64,
        bins: usize,
        representative: Representative,
    },
    File {
        path: PathBuf,
        horizon: Option<usize>,
    },
}

impl EnvironmentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvironmentSpec::Chain { .. } => "chain",
            EnvironmentSpec::Random { .. } => "random",
            EnvironmentSpec::Grid { .. } => "grid",
            EnvironmentSpec::Control { .. } => "control",
            EnvironmentSpec::Bandit { .. } => "bandit",
            EnvironmentSpec::File { .. } => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub percentile_low: f64,
    pub percentile_high: f64,
}

impl Default for Aggregation {
    fn default() -> Self {
        Self {
            percentile_low: 10.0,
            percentile_high: 90.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub name: String,
    pub master_seed: u64,
    pub seeds: SeedSpec,
    pub output_dir: Option<PathBuf>,
    pub workers: usize,
    pub modes: Vec<RewardMode>,
    pub environment: EnvironmentSpec,
    pub noise: NoiseSchedule<f64>,
    /// Reward mode is overwritten per run.
    pub learner: LearnerConfig,
    /// Set when the learner is phased Q-learning.
    pub phased: Option<PhasedConfig>,
    pub aggregation: Aggregation,
}

impl SweepConfig {
    /// Text that fixes every result-affecting setting. Worker count and
    /// output location are excluded so they never change output bytes.
    pub fn fingerprint(&self) -> String {
        format!(
            "schema={SCHEMA_VERSION}\nname={:?}\nmaster={}\nseeds={:?}\nmodes={:?}\nenv={:?}\nnoise={:?}\nlearner={:?}\nphased={:?}\nagg={:?}",
            self.name,
            self.master_seed,
            self.seeds,
            self.modes,
            self.environment,
            self.noise,
            self.learner,
            self.phased,
            self.aggregation
        )
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.fingerprint().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(path.display().to_string(), e.to_string()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| err("<config>", e.to_string().trim().to_string()))?;
        let root = Section::new(&table, "");
        root.allow(&[
            "schema_version",
            "name",
            "master_seed",
            "seeds",
            "output_dir",
            "workers",
            "modes",
            "environment",
            "noise",
            "learner",
            "estimator",
            "aggregation",
        ])?;
        let version = root
            .int("schema_version")?
            .ok_or_else(|| err("schema_version", "missing"))?;
        if version != SCHEMA_VERSION {
            return Err(err(
                "schema_version",
                format!("unsupported version {version}, expected {SCHEMA_VERSION}"),
            ));
        }
        let name = root.string("name")?.unwrap_or_else(|| "sweep".to_string());
        let master_seed = root.uint("master_seed")?.unwrap_or(0);
        let seeds = match root.get("seeds") {
            None => return Err(err("seeds", "missing")),
            Some(Value::Integer(n)) if *n >= 1 => SeedSpec::Count(*n as usize),
            Some(Value::Integer(_)) => return Err(err("seeds", "at least one seed is required")),
            Some(Value::Array(items)) => {
                if items.is_empty() {
                    return Err(err("seeds", "at least one seed is required"));
                }
                let list = items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| match v {
                        Value::Integer(n) if *n >= 0 => Ok(*n as u64),
                        _ => Err(err(
                            format!("seeds[{i}]"),
                            "expected a non-negative integer",
                        )),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                SeedSpec::List(list)
            }
            Some(_) => return Err(err("seeds", "expected a count or a list of integers")),
        };
        let output_dir = root.string("output_dir")?.map(|p| base_dir.join(p));
        let workers = root.uint("workers")?.unwrap_or(1).max(1) as usize;
        let modes = match root.get("modes") {
            None => vec![
                RewardMode::Noisy,
                RewardMode::SurrogateKnown,
                RewardMode::SurrogateEstimated,
            ],
            Some(Value::Array(items)) if !items.is_empty() => {
                let mut modes = Vec::new();
                for (i, v) in items.iter().enumerate() {
                    let path = format!("modes[{i}]");
                    let s = v.as_str().ok_or_else(|| err(&path, "expected a string"))?;
                    let m = RewardMode::parse(s).ok_or_else(|| {
                        err(
                            &path,
                            format!("unknown mode {s:?}; expected one of {}", mode_names()),
                        )
                    })?;
                    if modes.contains(&m) {
                        return Err(err(&path, format!("mode {s:?} listed twice")));
                    }
                    modes.push(m);
                }
                modes
            }
            Some(_) => return Err(err("modes", "expected a non-empty list of mode names")),
        };
        let environment = parse_environment(
            &root
                .table("environment")?
                .ok_or_else(|| err("environment", "missing"))?,
            base_dir,
        )?;
        let noise = match root.table("noise")? {
            Some(t) => parse_noise(&t)?,
            None => NoiseSchedule::constant(NoiseSpec::noiseless()),
        };
        let mut learner = LearnerConfig::default();
        let mut phased = None;
        if let Some(t) = root.table("learner")? {
            phased = parse_learner(&t, &mut learner)?;
        }
        if let Some(t) = root.table("estimator")? {
            parse_estimator(&t, &mut learner.estimator)?;
        }
        let aggregation = match root.table("aggregation")? {
            Some(t) => {
                t.allow(&["percentile_low", "percentile_high"])?;
                let a = Aggregation {
                    percentile_low: t.float("percentile_low")?.unwrap_or(10.0),
                    percentile_high: t.float("percentile_high")?.unwrap_or(90.0),
                };
                if !(0.0..=100.0).contains(&a.percentile_low)
                    || !(0.0..=100.0).contains(&a.percentile_high)
                {
                    return Err(err("aggregation", "percentiles must lie in [0, 100]"));
                }
                if a.percentile_low > a.percentile_high {
                    return Err(err(
                        "aggregation.percentile_low",
                        "must not exceed percentile_high",
                    ));
                }
                a
            }
            None => Aggregation::default(),
        };
        if phased.is_some() {
            if !matches!(
                environment,
                EnvironmentSpec::Chain { .. }
                    | EnvironmentSpec::Random { .. }
                    | EnvironmentSpec::Grid { .. }
                    | EnvironmentSpec::File { .. }
            ) {
                return Err(err(
                    "learner.algorithm",
                    "phased-q needs a finite MDP environment",
                ));
            }
            if modes.contains(&RewardMode::SurrogateEstimated) {
                return Err(err(
                    "modes",
                    "phased-q supports true, noisy and surrogate-known modes",
                ));
            }
        }
        learner
            .validate()
            .map_err(|e| err("learner", e.to_string()))?;
        Ok(Self {
            name,
            master_seed,
            seeds,
            output_dir,
            workers,
            modes,
            environment,
            noise,
            learner,
            phased,
            aggregation,
        })
    }
}

fn mode_names() -> String {
    RewardMode::ALL
        .iter()
        .map(|m| m.name())
        .collect::<Vec<_>>()
        .join(", ")
}

/// A table together with its dotted path, for error messages.
pub(crate) struct Section<'a> {
    table: &'a Table,
    path: String,
}

impl<'a> Section<'a> {
    pub(crate) fn new(table: &'a Table, path: &str) -> Self {
        Self {
            table,
            path: path.to_string(),
        }
    }

    pub(crate) fn key(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    pub(crate) fn allow(&self, keys: &[&str]) -> Result<(), ConfigError> {
        for k in self.table.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(err(
                    self.key(k),
                    format!("unknown key; expected one of {}", keys.join(", ")),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.get(key)
    }

    pub(crate) fn table(&self, key: &str) -> Result<Option<Section<'a>>, ConfigError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Section {
                table: t,
                path: self.key(key),
            })),
            Some(_) => Err(err(self.key(key), "expected a table")),
        }
    }

    pub(crate) fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) if x.is_finite() => Ok(Some(*x)),
            Some(Value::Integer(n)) => Ok(Some(*n as f64)),
            Some(_) => Err(err(self.key(key), "expected a finite number")),
        }
    }

    pub(crate) fn req_float(&self, key: &str) -> Result<f64, ConfigError> {
        self.float(key)?
            .ok_or_else(|| err(self.key(key), "missing"))
    }

    pub(crate) fn int(&self, key: &str) -> Result<Option<i64>, ConfigError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Integer(n)) => Ok(Some(*n)),
            Some(_) => Err(err(self.key(key), "expected an integer")),
        }
    }

    pub(crate) fn uint(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.int(key)? {
            Some(n) if n < 0 => Err(err(self.key(key), "must not be negative")),
            other => Ok(other.map(|n| n as u64)),
        }
    }

    pub(crate) fn positive(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.uint(key)? {
            Some(0) => Err(err(self.key(key), "must be positive")),
            other => Ok(other.map(|n| n as usize)),
        }
    }

    pub(crate) fn req_positive(&self, key: &str) -> Result<usize, ConfigError> {
        self.positive(key)?
            .ok_or_else(|| err(self.key(key), "missing"))
    }

    pub(crate) fn boolean(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(err(self.key(key), "expected true or false")),
        }
    }

    pub(crate) fn string(&self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(err(self.key(key), "expected a string")),
        }
    }

    pub(crate) fn floats(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(v) => float_list(v, &self.key(key)).map(Some),
        }
    }

    pub(crate) fn unit(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.float(key)? {
            Some(x) if !(0.0..=1.0).contains(&x) => {
                Err(err(self.key(key), format!("must lie in [0, 1], got {x}")))
            }
            other => Ok(other),
        }
    }

    pub(crate) fn choice(
        &self,
        key: &str,
        options: &[&str],
    ) -> Result<Option<String>, ConfigError> {
        match self.string(key)? {
            Some(s) if !options.contains(&s.as_str()) => Err(err(
                self.key(key),
                format!(
                    "unknown value {s:?}; expected one of {}",
                    options.join(", ")
                ),
            )),
            other => Ok(other),
        }
    }
}

pub(crate) fn float_list(v: &Value, path: &str) -> Result<Vec<f64>, ConfigError> {
    let items = v
        .as_array()
        .ok_or_else(|| err(path, "expected a list of numbers"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, x)| match x {
            Value::Float(f) if f.is_finite() => Ok(*f),
            Value::Integer(n) => Ok(*n as f64),
            _ => Err(err(format!("{path}[{i}]"), "expected a finite number")),
        })
        .collect()
}

fn parse_environment(t: &Section<'_>, base_dir: &Path) -> Result<EnvironmentSpec, ConfigError> {
    let kind = t
        .choice(
            "kind",
            &["chain", "random", "grid", "control", "bandit", "file"],
        )?
        .ok_or_else(|| err(t.key("kind"), "missing"))?;
    let gamma = |default: f64| -> Result<f64, ConfigError> {
        let g = t.float("gamma")?.unwrap_or(default);
        if !(0.0..1.0).contains(&g) {
            return Err(err(t.key("gamma"), format!("must lie in [0, 1), got {g}")));
        }
        Ok(g)
    };
    Ok(match kind.as_str() {
        "chain" => {
            t.allow(&["kind", "gamma", "variant", "horizon"])?;
            let variant = match t
                .choice("variant", &["episodic", "reset-transition"])?
                .as_deref()
            {
                Some("reset-transition") => ChainVariant::ResetTransition,
                _ => ChainVariant::Episodic,
            };
            let g = gamma(0.9)?;
            if g == 0.0 {
                return Err(err(t.key("gamma"), "chain discount must be positive"));
            }
            EnvironmentSpec::Chain {
                gamma: g,
                variant,
                horizon: t.positive("horizon")?,
            }
        }
        "random" => {
            t.allow(&[
                "kind",
                "states",
                "actions",
                "levels",
                "branching",
                "seed",
                "gamma",
                "horizon",
            ])?;
            let spec = RandomMdpSpec {
                num_states: t.req_positive("states")?,
                num_actions: t.req_positive("actions")?,
                num_levels: t.req_positive("levels")?,
                branching: t.positive("branching")?.unwrap_or(1),
                seed: t.uint("seed")?.unwrap_or(0),
                gamma: gamma(0.9)?,
            };
            EnvironmentSpec::Random {
                spec,
                horizon: t.positive("horizon")?,
            }
        }
        "grid" => {
            t.allow(&[
                "kind", "width", "height", "goal", "slip", "gamma", "horizon",
            ])?;
            let d = GridSpec::default();
            let goal = match t.get("goal") {
                None => d.goal,
                Some(v) => {
                    let g = float_list(v, &t.key("goal"))?;
                    if g.len() != 2 || g.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
                        return Err(err(
                            t.key("goal"),
                            "expected [x, y] with non-negative integers",
                        ));
                    }
                    (g[0] as usize, g[1] as usize)
                }
            };
            let spec = GridSpec {
                width: t.positive("width")?.unwrap_or(d.width),
                height: t.positive("height")?.unwrap_or(d.height),
                goal,
                slip: t.unit("slip")?.unwrap_or(0.0),
                gamma: gamma(d.gamma)?,
            };
            EnvironmentSpec::Grid {
                spec,
                horizon: t.positive("horizon")?,
            }
        }
        "control" => {
            t.allow(&[
                "kind",
                "horizon",
                "gamma",
                "dt",
                "stiffness",
                "force",
                "position_bins",
                "velocity_bins",
                "corrupted",
            ])?;
            let d = ControlParams::default();
            let params = ControlParams {
                horizon: t.positive("horizon")?.unwrap_or(d.horizon),
                gamma: gamma(d.gamma)?,
                dt: t.float("dt")?.unwrap_or(d.dt),
                stiffness: t.float("stiffness")?.unwrap_or(d.stiffness),
                force: t.float("force")?.unwrap_or(d.force),
                position_bins: t.positive("position_bins")?.unwrap_or(d.position_bins),
                velocity_bins: t.positive("velocity_bins")?.unwrap_or(d.velocity_bins),
                ..d
            };
            EnvironmentSpec::Control {
                params,
                corrupted: t.boolean("corrupted")?.unwrap_or(true),
            }
        }
        "bandit" => {
            t.allow(&[
                "kind",
                "rewards",
                "lower",
                "upper",
                "bins",
                "representative",
            ])?;
            let rewards = t
                .floats("rewards")?
                .ok_or_else(|| err(t.key("rewards"), "missing"))?;
            if rewards.is_empty() {
                return Err(err(t.key("rewards"), "at least one arm is required"));
            }
            let representative = match t
                .choice("representative", &["midpoint", "upper"])?
                .as_deref()
            {
                Some("upper") => Representative::UpperEndpoint,
                _ => Representative::Midpoint,
            };
            let (lower, upper) = (t.req_float("lower")?, t.req_float("upper")?);
            if lower >= upper {
                return Err(err(t.key("upper"), "must exceed lower"));
            }
            EnvironmentSpec::Bandit {
                rewards,
                lower,
                upper,
                bins: t.req_positive("bins")?,
                representative,
            }
        }
        "file" => {
            t.allow(&["kind", "path", "horizon"])?;
            let p = t
                .string("path")?
                .ok_or_else(|| err(t.key("path"), "missing"))?;
            EnvironmentSpec::File {
                path: base_dir.join(p),
                horizon: t.positive("horizon")?,
            }
        }
        _ => unreachable!("choice() filtered the kind"),
    })
}

const SPEC_KEYS: [&str; 6] = ["kind", "omega", "e_minus", "e_plus", "matrix", "until_step"];

fn parse_noise(t: &Section<'_>) -> Result<NoiseSchedule<f64>, ConfigError> {
    let schedule = match t.get("schedule") {
        None => None,
        Some(Value::Array(items)) if !items.is_empty() => Some(items),
        Some(_) => {
            return Err(err(
                t.key("schedule"),
                "expected a non-empty list of tables",
            ))
        }
    };
    let Some(items) = schedule else {
        t.allow(&SPEC_KEYS[..5])?;
        return Ok(NoiseSchedule::constant(parse_noise_spec(t)?));
    };
    t.allow(&["schedule"])?;
    let mut segments = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let path = format!("{}[{i}]", t.key("schedule"));
        let table = item
            .as_table()
            .ok_or_else(|| err(&path, "expected a table"))?;
        let s = Section::new(table, &path);
        s.allow(&SPEC_KEYS)?;
        let until = s
            .uint("until_step")?
            .ok_or_else(|| err(s.key("until_step"), "missing"))?;
        if let Some(&(prev, _)) = segments.last() {
            if until <= prev {
                return Err(err(
                    s.key("until_step"),
                    format!("must exceed the previous threshold {prev}"),
                ));
            }
        }
        segments.push((until, parse_noise_spec(&s)?));
    }
    NoiseSchedule::new(segments).map_err(|e| err(t.key("schedule"), e.to_string()))
}

fn parse_noise_spec(t: &Section<'_>) -> Result<NoiseSpec<f64>, ConfigError> {
    let kind = t
        .choice(
            "kind",
            &[
                "symmetric",
                "rand-one",
                "rand-all",
                "flip-rates",
                "explicit",
                "none",
            ],
        )?
        .ok_or_else(|| err(t.key("kind"), "missing"))?;
    let omega = || {
        t.unit("omega")?
            .ok_or_else(|| err(t.key("omega"), "missing"))
    };
    Ok(match kind.as_str() {
        "symmetric" => NoiseSpec::symmetric(omega()?),
        "rand-one" => NoiseSpec::rand_one(omega()?),
        "rand-all" => NoiseSpec::rand_all(omega()?),
        "flip-rates" => {
            let em = t
                .unit("e_minus")?
                .ok_or_else(|| err(t.key("e_minus"), "missing"))?;
            let ep = t
                .unit("e_plus")?
                .ok_or_else(|| err(t.key("e_plus"), "missing"))?;
            NoiseSpec::flip_rates(em, ep).map_err(|e| err(t.path.clone(), e.to_string()))?
        }
        "explicit" => {
            let rows = match t.get("matrix") {
                Some(Value::Array(rows)) => rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| float_list(r, &format!("{}[{i}]", t.key("matrix"))))
                    .collect::<Result<Vec<_>, _>>()?,
                Some(_) => return Err(err(t.key("matrix"), "expected a list of rows")),
                None => return Err(err(t.key("matrix"), "missing")),
            };
            let c = ConfusionMatrix::new(rows).map_err(|e| err(t.key("matrix"), e.to_string()))?;
            NoiseSpec::explicit(c)
        }
        "none" => NoiseSpec::noiseless(),
        _ => unreachable!("choice() filtered the kind"),
    })
}

fn parse_learner(
    t: &Section<'_>,
    cfg: &mut LearnerConfig,
) -> Result<Option<PhasedConfig>, ConfigError> {
    t.allow(&[
        "algorithm",
        "eta",
        "step_size",
        "step_exponent",
        "alpha",
        "exploration",
        "epsilon_start",
        "epsilon_end",
        "epsilon_decay_fraction",
        "temperature",
        "variance_reduction",
        "max_steps",
        "eval_interval",
        "per_state_estimation",
        "initial_q",
        "phases",
        "samples_per_phase",
    ])?;
    let algorithm = t.choice("algorithm", &["q-learning", "sarsa", "phased-q"])?;
    cfg.algorithm = match algorithm.as_deref() {
        Some("sarsa") => Algorithm::Sarsa,
        _ => Algorithm::QLearning,
    };
    if let Some(eta) = t.unit("eta")? {
        cfg.eta = eta;
    }
    cfg.step_size = match t
        .choice("step_size", &["polynomial", "constant"])?
        .as_deref()
    {
        Some("constant") => StepSize::Constant(t.req_float("alpha")?),
        _ => StepSize::Polynomial {
            exponent: t.float("step_exponent")?.unwrap_or(0.77),
        },
    };
    cfg.exploration = match t
        .choice("exploration", &["epsilon-greedy", "boltzmann"])?
        .as_deref()
    {
        Some("boltzmann") => Exploration::Boltzmann {
            temperature: t.req_float("temperature")?,
        },
        _ => Exploration::EpsilonGreedy {
            start: t.unit("epsilon_start")?.unwrap_or(1.0),
            end: t.unit("epsilon_end")?.unwrap_or(0.05),
            decay_fraction: t.unit("epsilon_decay_fraction")?.unwrap_or(0.5),
        },
    };
    cfg.variance_reduction = t.positive("variance_reduction")?;
    if let Some(n) = t.positive("max_steps")? {
        cfg.max_steps = n as u64;
    }
    if let Some(n) = t.positive("eval_interval")? {
        cfg.eval_interval = n as u64;
    }
    if let Some(b) = t.boolean("per_state_estimation")? {
        cfg.per_state_estimation = b;
    }
    if let Some(q) = t.float("initial_q")? {
        cfg.initial_q = q;
    }
    if algorithm.as_deref() == Some("phased-q") {
        return Ok(Some(PhasedConfig {
            phases: t.req_positive("phases")?,
            samples_per_phase: t.req_positive("samples_per_phase")?,
        }));
    }
    for key in ["phases", "samples_per_phase"] {
        if t.get(key).is_some() {
            return Err(err(t.key(key), "only valid with algorithm = \"phased-q\""));
        }
    }
    Ok(None)
}

fn parse_estimator(t: &Section<'_>, cfg: &mut EstimatorConfig) -> Result<(), ConfigError> {
    t.allow(&["d_min_per_pair", "d_max", "reestimate_every"])?;
    if let Some(n) = t.uint("d_min_per_pair")? {
        cfg.d_min_per_pair = Some(n as usize);
    }
    if let Some(n) = t.uint("d_max")? {
        cfg.d_max = (n > 0).then_some(n as usize);
    }
    if let Some(n) = t.positive("reestimate_every")? {
        cfg.reestimate_every = n as u64;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seeds = 3
[environment]
kind = "chain"
"#;

    fn parse(text: &str) -> Result<SweepConfig, ConfigError> {
        SweepConfig::parse(text, Path::new("/base"))
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.seeds, SeedSpec::Count(3));
        assert_eq!(c.modes.len(), 3);
        assert_eq!(c.learner.max_steps, 20_000);
        assert_eq!(c.aggregation, Aggregation::default());
        assert!(c.noise.segments()[0].1 == NoiseSpec::noiseless());
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse(&format!(
            "{MINIMAL}[noise]\nkind = \"symmetric\"\nomega = 1.5\n"
        ))
        .unwrap_err();
        assert_eq!(e.path, "noise.omega");
        let e = parse(&MINIMAL.replace("kind = \"chain\"", "kind = \"chain\"\ngamma = \"x\""))
            .unwrap_err();
        assert_eq!(e.path, "environment.gamma");
        let e = parse(&format!("{MINIMAL}[learner]\nbogus = 1\n")).unwrap_err();
        assert_eq!(e.path, "learner.bogus");
        let e = parse(&MINIMAL.replace("seeds = 3", "seeds = 3\nmodes = [\"noisy\", \"odd\"]"))
            .unwrap_err();
        assert_eq!(e.path, "modes[1]");
        let e = parse(&MINIMAL.replace("seeds = 3", "seeds = 0")).unwrap_err();
        assert_eq!(e.path, "seeds");
        let e = parse(&MINIMAL.replace("schema_version = 1", "schema_version = 2")).unwrap_err();
        assert_eq!(e.path, "schema_version");
    }

    #[test]
    fn schedule_segments() {
        let text = format!(
            "{MINIMAL}
[[noise.schedule]]
until_step = 100
kind = \"flip-rates\"
e_minus = 0.1
e_plus = 0.3
[[noise.schedule]]
until_step = 50
kind = \"symmetric\"
omega = 0.2
"
        );
        assert_eq!(
            parse(&text).unwrap_err().path,
            "noise.schedule[1].until_step"
        );
        let ok = text.replace("until_step = 50", "until_step = 500");
        let c = parse(&ok).unwrap();
        assert_eq!(c.noise.segments().len(), 2);
    }

    #[test]
    fn explicit_matrix_and_seed_list() {
        let text = MINIMAL.replace("seeds = 3", "seeds = [4, 9]")
            + "[noise]\nkind = \"explicit\"\nmatrix = [[0.9, 0.1], [0.2, 0.8]]\n";
        let c = parse(&text).unwrap();
        assert_eq!(c.seeds.seed(0, 1), 9);
        let bad = text.replace("[0.2, 0.8]", "[0.2, 0.7]");
        assert_eq!(parse(&bad).unwrap_err().path, "noise.matrix");
    }

    #[test]
    fn phased_requires_finite_mdp() {
        let text = MINIMAL.replace("seeds = 3", "seeds = 3\nmodes = [\"noisy\"]")
            + "[learner]\nalgorithm = \"phased-q\"\nphases = 5\nsamples_per_phase = 10\n";
        assert_eq!(
            parse(&text).unwrap().phased,
            Some(PhasedConfig {
                phases: 5,
                samples_per_phase: 10
            })
        );
        let bad = text.replace("kind = \"chain\"", "kind = \"control\"");
        assert_eq!(parse(&bad).unwrap_err().path, "learner.algorithm");
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = parse(MINIMAL).unwrap();
        let b = parse(&MINIMAL.replace("seeds = 3", "seeds = 3\nworkers = 4\noutput_dir = \"x\""))
            .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse(&MINIMAL.replace("seeds = 3", "seeds = 4")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn file_paths_resolve_against_config_dir() {
        let c = parse(&MINIMAL.replace("kind = \"chain\"", "kind = \"file\"\npath = \"m.toml\""))
            .unwrap();
        assert_eq!(
            c.environment,
            EnvironmentSpec::File {
                path: PathBuf::from("/base/m.toml"),
                horizon: None
            }
        );
    }
}
