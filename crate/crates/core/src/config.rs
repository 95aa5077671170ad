//! Run configuration: a sectioned TOML file, environment-variable overrides,
//! and validation. Unknown keys are rejected everywhere.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, GridworldConfig, SphereConfig, TrapGeometry, WalkerEnv, WalkerReward};
use crate::error::{Error, Result};
use crate::explore::Algorithm;
use crate::noise::DEFAULT_TABLE_LEN;
use crate::policy::{Activation, MlpSpec, OutputSquash};
use crate::rng::{mix, streams};

/// Prefix for environment-variable overrides, e.g.
/// `ES_EXPLORE_HYPER__SIGMA=0.05` sets `hyper.sigma`.
pub const ENV_PREFIX: &str = "ES_EXPLORE_";

fn default_m() -> usize {
    1
}
fn default_k() -> usize {
    10
}
fn default_t_w() -> u64 {
    50
}
fn default_delta_w() -> f64 {
    0.05
}
fn default_initial_w() -> f64 {
    1.0
}
fn default_archive_probability() -> f64 {
    1.0
}
fn default_eval_episodes() -> usize {
    30
}
fn default_eval_every() -> u64 {
    10
}

/// Algorithm hyperparameters shared by every variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    /// Perturbations per generation.
    pub n: usize,
    /// Perturbation standard deviation.
    pub sigma: f64,
    /// Adam learning rate.
    pub alpha: f64,
    /// Meta-population size (must be 1 for plain ES).
    #[serde(default = "default_m")]
    pub m: usize,
    /// Nearest neighbors in novelty queries.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Generations to run.
    pub generations: u64,
    /// Stagnation window of the adaptive weight controller.
    #[serde(default = "default_t_w")]
    pub t_w: u64,
    /// Weight step of the adaptive controller.
    #[serde(default = "default_delta_w")]
    pub delta_w: f64,
    /// Initial fitness weight of NSRA-ES.
    #[serde(default = "default_initial_w")]
    pub initial_w: f64,
    /// Antithetic sampling (off by default).
    #[serde(default)]
    pub mirrored: bool,
    /// Probability of archiving the post-update behavior each generation.
    #[serde(default = "default_archive_probability")]
    pub archive_probability: f64,
    /// Episodes per policy evaluation.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Generations between best-policy evaluations.
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    /// L2 decay applied to theta inside the ascent direction (off by default).
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_hidden_layers() -> Vec<usize> {
    vec![16, 16]
}
fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_output_squash() -> OutputSquash {
    OutputSquash::Tanh
}

/// Network shape for policy-driven environments; ignored by the sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub output_squash: OutputSquash,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden_layers: default_hidden_layers(),
            activation: default_activation(),
            output_squash: default_output_squash(),
        }
    }
}

fn default_table_len() -> usize {
    DEFAULT_TABLE_LEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseTableConfig {
    pub len: usize,
    /// Explicit table seed; derived from `run_seed` when absent.
    pub seed: Option<u64>,
}

impl Default for NoiseTableConfig {
    fn default() -> Self {
        NoiseTableConfig {
            len: default_table_len(),
            seed: None,
        }
    }
}

// Env section payloads, one per kind, so unknown keys are rejected per kind.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct WalkerKeys {
    arena_half_size: f64,
    step_force_limit: f64,
    drag: f64,
    max_steps: usize,
    obs_noise_std: f64,
    energy_cost: f64,
}

impl Default for WalkerKeys {
    fn default() -> Self {
        let w = WalkerEnv::isotropic();
        WalkerKeys {
            arena_half_size: w.arena_half_size.expect("bounded by default"),
            step_force_limit: w.step_force_limit,
            drag: w.drag,
            max_steps: w.max_steps,
            obs_noise_std: w.obs_noise_std,
            energy_cost: w.energy_cost,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrapWalkerKeys {
    trap_x: f64,
    trap_half_width: f64,
    trap_depth: f64,
    #[serde(flatten)]
    walker: WalkerKeys,
}

impl Default for TrapWalkerKeys {
    fn default() -> Self {
        let g = TrapGeometry::default();
        TrapWalkerKeys {
            trap_x: g.trap_x,
            trap_half_width: g.half_width,
            trap_depth: g.depth,
            walker: WalkerKeys::default(),
        }
    }
}

fn env_from_table(table: toml::Table) -> Result<EnvConfig> {
    let mut table = table;
    let kind = match table.remove("kind") {
        Some(toml::Value::String(s)) => s,
        Some(_) => return Err(Error::Config("env.kind must be a string".into())),
        None => return Err(Error::Config("missing env.kind".into())),
    };
    let value = toml::Value::Table(table);
    let bad = |e: toml::de::Error| Error::Config(format!("env ({kind}): {e}"));
    match kind.as_str() {
        "isotropic-walker" => {
            let keys: WalkerKeys = value.try_into().map_err(bad)?;
            Ok(EnvConfig::Walker(WalkerEnv {
                reward: WalkerReward::Isotropic,
                trap: None,
                arena_half_size: Some(keys.arena_half_size),
                step_force_limit: keys.step_force_limit,
                drag: keys.drag,
                max_steps: keys.max_steps,
                obs_noise_std: keys.obs_noise_std,
                energy_cost: keys.energy_cost,
            }))
        }
        "trap-walker" => {
            let keys: TrapWalkerKeys = value.try_into().map_err(bad)?;
            Ok(EnvConfig::Walker(WalkerEnv {
                reward: WalkerReward::DistanceX,
                trap: Some(TrapGeometry {
                    trap_x: keys.trap_x,
                    half_width: keys.trap_half_width,
                    depth: keys.trap_depth,
                }),
                arena_half_size: Some(keys.walker.arena_half_size),
                step_force_limit: keys.walker.step_force_limit,
                drag: keys.walker.drag,
                max_steps: keys.walker.max_steps,
                obs_noise_std: keys.walker.obs_noise_std,
                energy_cost: keys.walker.energy_cost,
            }))
        }
        "gridworld" => {
            let cfg: GridworldConfig = value.try_into().map_err(bad)?;
            Ok(EnvConfig::Gridworld(cfg))
        }
        "sphere" => {
            let cfg: SphereConfig = value.try_into().map_err(bad)?;
            Ok(EnvConfig::Sphere(cfg))
        }
        other => Err(Error::Config(format!(
            "unknown env kind {other:?}; expected isotropic-walker, trap-walker, gridworld or sphere"
        ))),
    }
}

fn env_to_table(env: &EnvConfig) -> toml::Table {
    let mut table = toml::Table::new();
    table.insert("kind".into(), env.kind_name().into());
    let push = |table: &mut toml::Table, value: toml::Value| {
        if let toml::Value::Table(t) = value {
            for (k, v) in t {
                table.insert(k, v);
            }
        }
    };
    match env {
        EnvConfig::Walker(w) => {
            if let Some(trap) = &w.trap {
                table.insert("trap_x".into(), trap.trap_x.into());
                table.insert("trap_half_width".into(), trap.half_width.into());
                table.insert("trap_depth".into(), trap.depth.into());
            }
            let keys = WalkerKeys {
                arena_half_size: w.arena_half_size.unwrap_or(0.0),
                step_force_limit: w.step_force_limit,
                drag: w.drag,
                max_steps: w.max_steps,
                obs_noise_std: w.obs_noise_std,
                energy_cost: w.energy_cost,
            };
            push(
                &mut table,
                toml::Value::try_from(keys).expect("serializable"),
            );
        }
        EnvConfig::Gridworld(g) => {
            push(&mut table, toml::Value::try_from(g).expect("serializable"));
        }
        EnvConfig::Sphere(s) => {
            push(&mut table, toml::Value::try_from(s).expect("serializable"));
        }
    }
    table
}

/// Everything a run needs; the on-disk shape is this struct with `env` as a
/// `kind`-tagged section.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub run_seed: u64,
    pub workers: Option<usize>,
    pub record: bool,
    pub output_dir: PathBuf,
    pub env: EnvConfig,
    pub hyper: Hyper,
    pub policy: PolicyConfig,
    pub noise_table: NoiseTableConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigRaw {
    algorithm: Algorithm,
    run_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    #[serde(default)]
    record: bool,
    output_dir: PathBuf,
    hyper: Hyper,
    #[serde(default)]
    policy: PolicyConfig,
    #[serde(default)]
    noise_table: NoiseTableConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut root: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(&mut root)
    }

    fn from_table(root: &mut toml::Table) -> Result<Self> {
        let env_table = match root.remove("env") {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(Error::Config("env must be a [env] section".into())),
            None => return Err(Error::Config("missing [env] section".into())),
        };
        let env = env_from_table(env_table)?;
        let raw: RunConfigRaw = toml::Value::Table(std::mem::take(root))
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let config = RunConfig {
            algorithm: raw.algorithm,
            run_seed: raw.run_seed,
            workers: raw.workers,
            record: raw.record,
            output_dir: raw.output_dir,
            env,
            hyper: raw.hyper,
            policy: raw.policy,
            noise_table: raw.noise_table,
        };
        config.validate()?;
        Ok(config)
    }

    /// Load from a file, then apply `ES_EXPLORE_*` environment overrides.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut root: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        apply_env_overrides(&mut root, std::env::vars());
        Self::from_table(&mut root)
    }

    pub fn to_toml_string(&self) -> String {
        let raw = RunConfigRaw {
            algorithm: self.algorithm,
            run_seed: self.run_seed,
            workers: self.workers,
            record: self.record,
            output_dir: self.output_dir.clone(),
            hyper: self.hyper.clone(),
            policy: self.policy.clone(),
            noise_table: self.noise_table.clone(),
        };
        let mut root = match toml::Value::try_from(raw).expect("serializable") {
            toml::Value::Table(t) => t,
            _ => unreachable!("struct serializes to a table"),
        };
        root.insert("env".into(), toml::Value::Table(env_to_table(&self.env)));
        toml::to_string(&toml::Value::Table(root)).expect("valid toml")
    }

    /// Network spec implied by the environment and the policy section.
    pub fn mlp_spec(&self) -> Option<MlpSpec> {
        self.env.policy_io_dims().map(|(input, output)| MlpSpec {
            input_dim: input,
            output_dim: output,
            hidden_layers: self.policy.hidden_layers.clone(),
            activation: self.policy.activation,
            output_squash: self.policy.output_squash,
        })
    }

    /// Noise table seed: explicit, or derived from the run seed.
    pub fn table_seed(&self) -> u64 {
        self.noise_table
            .seed
            .unwrap_or_else(|| mix(&[self.run_seed, streams::NOISE_TABLE]))
    }

    pub fn effective_workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let h = &self.hyper;
        if h.n < 2 {
            return bad(format!("hyper.n must be at least 2, got {}", h.n));
        }
        if h.mirrored && !h.n.is_multiple_of(2) {
            return bad(format!(
                "mirrored sampling needs an even hyper.n, got {}",
                h.n
            ));
        }
        if h.sigma <= 0.0 || h.sigma.is_nan() {
            return bad(format!("hyper.sigma must be positive, got {}", h.sigma));
        }
        if h.alpha <= 0.0 || h.alpha.is_nan() {
            return bad(format!("hyper.alpha must be positive, got {}", h.alpha));
        }
        if h.m == 0 {
            return bad("hyper.m must be at least 1".into());
        }
        if matches!(self.algorithm, Algorithm::Es) && h.m != 1 {
            return bad(format!("plain ES requires hyper.m = 1, got {}", h.m));
        }
        if h.k == 0 {
            return bad("hyper.k must be at least 1".into());
        }
        if h.t_w == 0 {
            return bad("hyper.t_w must be at least 1".into());
        }
        if h.delta_w < 0.0 {
            return bad(format!(
                "hyper.delta_w must be non-negative, got {}",
                h.delta_w
            ));
        }
        if !(0.0..=1.0).contains(&h.initial_w) {
            return bad(format!(
                "hyper.initial_w must be in [0,1], got {}",
                h.initial_w
            ));
        }
        if !(0.0..=1.0).contains(&h.archive_probability) {
            return bad(format!(
                "hyper.archive_probability must be in [0,1], got {}",
                h.archive_probability
            ));
        }
        if h.eval_episodes == 0 {
            return bad("hyper.eval_episodes must be at least 1".into());
        }
        if h.eval_every == 0 {
            return bad("hyper.eval_every must be at least 1".into());
        }
        if h.weight_decay < 0.0 {
            return bad(format!(
                "hyper.weight_decay must be non-negative, got {}",
                h.weight_decay
            ));
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return bad("workers must be at least 1".into());
            }
        }
        if self.policy.hidden_layers.contains(&0) {
            return bad("policy.hidden_layers entries must be positive".into());
        }
        match &self.env {
            EnvConfig::Walker(w) => {
                if w.step_force_limit <= 0.0 || w.step_force_limit.is_nan() {
                    return bad("env.step_force_limit must be positive".into());
                }
                if !(0.0..1.0).contains(&w.drag) {
                    return bad(format!("env.drag must be in [0,1), got {}", w.drag));
                }
                if w.max_steps == 0 {
                    return bad("env.max_steps must be at least 1".into());
                }
                if w.obs_noise_std < 0.0 || w.energy_cost < 0.0 {
                    return bad("env noise and energy cost must be non-negative".into());
                }
                if let Some(t) = &w.trap {
                    if !(t.trap_x > 0.0 && t.half_width > 0.0 && t.depth > 0.0) {
                        return bad("trap geometry must be positive".into());
                    }
                    if let Some(half) = w.arena_half_size {
                        if half <= t.trap_x || half <= t.half_width {
                            return bad("arena must enclose the trap".into());
                        }
                    }
                }
                if let Some(half) = w.arena_half_size {
                    if half <= 0.0 || half.is_nan() {
                        return bad("env.arena_half_size must be positive".into());
                    }
                }
            }
            EnvConfig::Gridworld(g) => {
                if g.max_steps == 0 {
                    return bad("env.max_steps must be at least 1".into());
                }
            }
            EnvConfig::Sphere(s) => {
                if s.dim < 2 {
                    return bad(format!("sphere dim must be at least 2, got {}", s.dim));
                }
            }
        }
        let dim = self
            .env
            .theta_dim(self.mlp_spec().as_ref())
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.noise_table.len < dim {
            return bad(format!(
                "noise_table.len {} is smaller than the parameter dimension {}",
                self.noise_table.len, dim
            ));
        }
        Ok(())
    }
}

/// Apply `ES_EXPLORE_SECTION__KEY=value` overrides onto a parsed config tree.
/// Values parse as TOML scalars where possible, else as strings.
pub fn apply_env_overrides(root: &mut toml::Table, vars: impl Iterator<Item = (String, String)>) {
    for (name, value) in vars {
        let Some(path) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        if path.is_empty() {
            continue;
        }
        let segments: Vec<String> = path.split("__").map(|s| s.to_ascii_lowercase()).collect();
        let parsed: toml::Value = match format!("v = {value}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").unwrap(),
            Err(_) => toml::Value::String(value),
        };
        let mut table = &mut *root;
        for segment in &segments[..segments.len() - 1] {
            let entry = table
                .entry(segment.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            if !entry.is_table() {
                *entry = toml::Value::Table(toml::Table::new());
            }
            table = entry.as_table_mut().expect("just ensured table");
        }
        table.insert(segments.last().unwrap().clone(), parsed);
    }
}
