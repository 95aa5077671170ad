//! Seeded episodic environments.
//!
//! Three families: a 2-D point-mass walker with either an isotropic
//! distance-from-origin reward or a distance-in-x reward plus a three-sided
//! trap; an 11x11 gridworld with a nearer low-value decoy goal and a
//! per-timestep trajectory behavior; and a sphere surrogate that scores a raw
//! parameter vector directly. Rollouts are pure functions of
//! `(config, theta, episode_seed)`.

use serde::{Deserialize, Serialize};

use crate::archive::{BcKind, BehaviorDescriptor};
use crate::error::{Error, Result};
use crate::policy::{MlpRunner, MlpSpec};
use crate::rng::{streams, SeededRng};
use crate::tensor::ParameterVector;

/// Integration timestep of the walker dynamics.
pub const WALKER_DT: f64 = 0.1;
/// Collision pushback so positions never sit exactly on a wall.
const WALL_MARGIN: f64 = 1e-9;

/// Something that maps observations to actions for the length of one episode.
pub trait Controller {
    fn act(&mut self, observation: &[f64]) -> Result<&[f64]>;
}

impl Controller for MlpRunner<'_> {
    fn act(&mut self, observation: &[f64]) -> Result<&[f64]> {
        MlpRunner::act(self, observation)
    }
}

/// Test/demo controller driven by a closure `(step, observation) -> action`.
pub struct ScriptedController<F: FnMut(usize, &[f64]) -> Vec<f64>> {
    step: usize,
    script: F,
    buf: Vec<f64>,
}

impl<F: FnMut(usize, &[f64]) -> Vec<f64>> ScriptedController<F> {
    pub fn new(script: F) -> Self {
        ScriptedController {
            step: 0,
            script,
            buf: Vec::new(),
        }
    }
}

impl<F: FnMut(usize, &[f64]) -> Vec<f64>> Controller for ScriptedController<F> {
    fn act(&mut self, observation: &[f64]) -> Result<&[f64]> {
        self.buf = (self.script)(self.step, observation);
        self.step += 1;
        Ok(&self.buf)
    }
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub total_reward: f64,
    pub behavior: BehaviorDescriptor,
    pub steps: usize,
    pub final_position: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkerReward {
    /// Euclidean distance of the final position from the origin.
    Isotropic,
    /// Distance traveled in the positive x direction.
    DistanceX,
}

/// Axis-aligned three-sided enclosure, open toward -x (the start side).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapGeometry {
    /// Front wall distance from the origin.
    pub trap_x: f64,
    /// Half extent of the walls in y.
    pub half_width: f64,
    /// How far the side walls reach back toward the start.
    pub depth: f64,
}

impl Default for TrapGeometry {
    fn default() -> Self {
        TrapGeometry {
            trap_x: 2.0,
            half_width: 4.0,
            depth: 1.5,
        }
    }
}

/// Point-mass walker: `v <- drag*v + clip(a)*dt`, `p <- p + v*dt`, with
/// inelastic wall clamping when a trap is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerEnv {
    pub reward: WalkerReward,
    pub trap: Option<TrapGeometry>,
    /// Half extent of the square boundary; the reachable set must be compact
    /// for archive novelty to saturate and sweep the space.
    pub arena_half_size: Option<f64>,
    pub step_force_limit: f64,
    pub drag: f64,
    pub max_steps: usize,
    pub obs_noise_std: f64,
    pub energy_cost: f64,
}

impl WalkerEnv {
    pub fn isotropic() -> Self {
        WalkerEnv {
            reward: WalkerReward::Isotropic,
            trap: None,
            arena_half_size: Some(8.0),
            step_force_limit: 1.0,
            drag: 0.9,
            max_steps: 200,
            obs_noise_std: 0.01,
            energy_cost: 1e-3,
        }
    }

    pub fn deceptive_trap() -> Self {
        WalkerEnv {
            reward: WalkerReward::DistanceX,
            trap: Some(TrapGeometry::default()),
            ..WalkerEnv::isotropic()
        }
    }
}

/// Per-step record of a walker episode: positions after each step and the
/// applied forces.
#[derive(Debug, Clone, Default)]
pub struct WalkerTrajectory {
    pub positions: Vec<[f64; 2]>,
    pub forces: Vec<[f64; 2]>,
}

impl WalkerTrajectory {
    pub fn final_position(&self) -> [f64; 2] {
        self.positions.last().copied().unwrap_or([0.0, 0.0])
    }

    pub fn energy(&self) -> f64 {
        self.forces.iter().map(|f| f[0] * f[0] + f[1] * f[1]).sum()
    }
}

/// Distance of the final position from the origin, minus the per-step energy
/// cost.
pub fn reward_isotropic(trajectory: &WalkerTrajectory, energy_cost: f64) -> f64 {
    let p = trajectory.final_position();
    (p[0] * p[0] + p[1] * p[1]).sqrt() - energy_cost * trajectory.energy()
}

/// Final x, minus the same per-step energy cost.
pub fn reward_deceptive(trajectory: &WalkerTrajectory, energy_cost: f64) -> f64 {
    trajectory.final_position()[0] - energy_cost * trajectory.energy()
}

/// One wall as an axis-aligned segment.
#[derive(Debug, Clone, Copy)]
enum Wall {
    /// x = `at`, y in [lo, hi]
    Vertical { at: f64, lo: f64, hi: f64 },
    /// y = `at`, x in [lo, hi]
    Horizontal { at: f64, lo: f64, hi: f64 },
}

fn trap_walls(g: &TrapGeometry) -> [Wall; 3] {
    [
        Wall::Vertical {
            at: g.trap_x,
            lo: -g.half_width,
            hi: g.half_width,
        },
        Wall::Horizontal {
            at: g.half_width,
            lo: g.trap_x - g.depth,
            hi: g.trap_x,
        },
        Wall::Horizontal {
            at: -g.half_width,
            lo: g.trap_x - g.depth,
            hi: g.trap_x,
        },
    ]
}

fn arena_walls(half: f64) -> [Wall; 4] {
    [
        Wall::Vertical {
            at: half,
            lo: -half,
            hi: half,
        },
        Wall::Vertical {
            at: -half,
            lo: -half,
            hi: half,
        },
        Wall::Horizontal {
            at: half,
            lo: -half,
            hi: half,
        },
        Wall::Horizontal {
            at: -half,
            lo: -half,
            hi: half,
        },
    ]
}

/// Earliest crossing of the segment `p0 -> p1` with `wall`, as a fraction of
/// the move, or None.
fn crossing(p0: [f64; 2], p1: [f64; 2], wall: &Wall) -> Option<f64> {
    let (axis, at, lo, hi) = match *wall {
        Wall::Vertical { at, lo, hi } => (0usize, at, lo, hi),
        Wall::Horizontal { at, lo, hi } => (1usize, at, lo, hi),
    };
    let a0 = p0[axis] - at;
    let a1 = p1[axis] - at;
    if a0 * a1 >= 0.0 {
        return None; // no strict sign change, no crossing
    }
    let t = a0 / (a0 - a1);
    let other = 1 - axis;
    let cross = p0[other] + t * (p1[other] - p0[other]);
    if cross >= lo && cross <= hi {
        Some(t)
    } else {
        None
    }
}

/// Advance one timestep with inelastic wall clamping: stop at the first wall
/// hit, zero the normal velocity component, and spend the remaining fraction
/// of the step with the tangential velocity (so agents slide along walls
/// across steps).
fn advance(pos: &mut [f64; 2], vel: &mut [f64; 2], walls: &[Wall]) {
    let mut remaining = 1.0;
    for _ in 0..4 {
        let target = [
            pos[0] + vel[0] * WALKER_DT * remaining,
            pos[1] + vel[1] * WALKER_DT * remaining,
        ];
        let mut first: Option<(f64, usize)> = None;
        for (i, wall) in walls.iter().enumerate() {
            if let Some(t) = crossing(*pos, target, wall) {
                if first.is_none_or(|(bt, _)| t < bt) {
                    first = Some((t, i));
                }
            }
        }
        let Some((t, wi)) = first else {
            *pos = target;
            return;
        };
        let axis = match walls[wi] {
            Wall::Vertical { .. } => 0,
            Wall::Horizontal { .. } => 1,
        };
        let other = 1 - axis;
        let approach = (target[axis] - pos[axis]).signum();
        let wall_at = match walls[wi] {
            Wall::Vertical { at, .. } | Wall::Horizontal { at, .. } => at,
        };
        pos[other] += t * (target[other] - pos[other]);
        pos[axis] = wall_at - approach * WALL_MARGIN;
        vel[axis] = 0.0;
        remaining *= 1.0 - t;
        if remaining <= 0.0 {
            return;
        }
    }
}

/// Roll out one walker episode. Observation noise is the only stochasticity
/// and is drawn from a stream derived from `episode_seed`.
pub fn walker_rollout(
    env: &WalkerEnv,
    controller: &mut dyn Controller,
    episode_seed: u64,
) -> Result<EpisodeResult> {
    walker_rollout_traced(env, controller, episode_seed, None)
}

pub fn walker_rollout_traced(
    env: &WalkerEnv,
    controller: &mut dyn Controller,
    episode_seed: u64,
    mut trace: Option<&mut WalkerTrajectory>,
) -> Result<EpisodeResult> {
    let mut rng = SeededRng::new(episode_seed, streams::OBS);
    let mut walls: Vec<Wall> = env
        .trap
        .as_ref()
        .map(|g| trap_walls(g).to_vec())
        .unwrap_or_default();
    if let Some(half) = env.arena_half_size {
        walls.extend_from_slice(&arena_walls(half));
    }

    let mut pos = [0.0f64; 2];
    let mut vel = [0.0f64; 2];
    let mut energy = 0.0;
    let mut obs = [0.0f64; 4];

    for _ in 0..env.max_steps {
        obs[0] = pos[0] / 10.0 + env.obs_noise_std * rng.normal();
        obs[1] = pos[1] / 10.0 + env.obs_noise_std * rng.normal();
        obs[2] = vel[0] + env.obs_noise_std * rng.normal();
        obs[3] = vel[1] + env.obs_noise_std * rng.normal();

        let action = controller.act(&obs)?;
        if action.len() != 2 {
            return Err(Error::DimMismatch {
                expected: 2,
                got: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite { context: "action" });
        }
        let force = [
            action[0].clamp(-1.0, 1.0) * env.step_force_limit,
            action[1].clamp(-1.0, 1.0) * env.step_force_limit,
        ];
        energy += force[0] * force[0] + force[1] * force[1];
        vel[0] = env.drag * vel[0] + force[0] * WALKER_DT;
        vel[1] = env.drag * vel[1] + force[1] * WALKER_DT;
        advance(&mut pos, &mut vel, &walls);

        if let Some(t) = trace.as_deref_mut() {
            t.positions.push(pos);
            t.forces.push(force);
        }
    }

    let base = match env.reward {
        WalkerReward::Isotropic => (pos[0] * pos[0] + pos[1] * pos[1]).sqrt(),
        WalkerReward::DistanceX => pos[0],
    };
    Ok(EpisodeResult {
        total_reward: base - env.energy_cost * energy,
        behavior: BehaviorDescriptor::final_position(pos[0], pos[1]),
        steps: env.max_steps,
        final_position: Some(pos),
    })
}

// ---------------------------------------------------------------------------
// Gridworld
// ---------------------------------------------------------------------------

pub const GRID_SIZE: i64 = 11;
/// Start cell.
pub const GRID_START: [i64; 2] = [5, 8];
/// Nearer, low-value terminal goal sitting on the straight path north.
pub const GRID_DECOY: [i64; 2] = [5, 6];
/// Far, high-value terminal goal behind the wall row.
pub const GRID_GOAL: [i64; 2] = [5, 2];

fn grid_wall(x: i64, y: i64) -> bool {
    y == 3 && (2..=8).contains(&x)
}

/// Fixed 11x11 map with a wall row at y=3 (x in 2..=8), a decoy two steps
/// north of the start, and the real goal requiring a detour around the wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridworldConfig {
    pub max_steps: usize,
    pub decoy_reward: f64,
    pub goal_reward: f64,
}

impl Default for GridworldConfig {
    fn default() -> Self {
        GridworldConfig {
            max_steps: 40,
            decoy_reward: 1.0,
            goal_reward: 10.0,
        }
    }
}

/// Actions: 0 stay, 1 north (y-1), 2 south (y+1), 3 west (x-1), 4 east (x+1).
/// The discrete action is the first argmax of the controller output. Moves
/// into walls or off-grid leave the agent in place. The behavior is the
/// post-move `[x, y]` state per timestep; reaching either goal ends the
/// episode.
pub fn gridworld_rollout(
    env: &GridworldConfig,
    controller: &mut dyn Controller,
    _episode_seed: u64,
) -> Result<EpisodeResult> {
    let mut pos = GRID_START;
    let mut states = Vec::with_capacity(env.max_steps * 2);
    let mut reward = 0.0;
    let mut steps = 0;

    for _ in 0..env.max_steps {
        let obs = [pos[0] as f64 / 5.0 - 1.0, pos[1] as f64 / 5.0 - 1.0];
        let out = controller.act(&obs)?;
        if out.len() != 5 {
            return Err(Error::DimMismatch {
                expected: 5,
                got: out.len(),
            });
        }
        let mut action = 0;
        for (i, v) in out.iter().enumerate() {
            if *v > out[action] {
                action = i;
            }
        }
        let (dx, dy) = match action {
            0 => (0, 0),
            1 => (0, -1),
            2 => (0, 1),
            3 => (-1, 0),
            _ => (1, 0),
        };
        let nx = pos[0] + dx;
        let ny = pos[1] + dy;
        if (0..GRID_SIZE).contains(&nx) && (0..GRID_SIZE).contains(&ny) && !grid_wall(nx, ny) {
            pos = [nx, ny];
        }
        states.push(pos[0] as f64);
        states.push(pos[1] as f64);
        steps += 1;

        if pos == GRID_DECOY {
            reward = env.decoy_reward;
            break;
        }
        if pos == GRID_GOAL {
            reward = env.goal_reward;
            break;
        }
    }

    Ok(EpisodeResult {
        total_reward: reward,
        behavior: BehaviorDescriptor::trajectory(2, states)?,
        steps,
        final_position: None,
    })
}

// ---------------------------------------------------------------------------
// Sphere surrogate
// ---------------------------------------------------------------------------

/// Synthetic objective `f(theta) = -||theta - c||^2` over a raw parameter
/// vector; exercises the optimizer without a policy network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereConfig {
    pub dim: usize,
    pub center: f64,
}

impl Default for SphereConfig {
    fn default() -> Self {
        SphereConfig {
            dim: 20,
            center: 0.5,
        }
    }
}

pub fn sphere_evaluate(env: &SphereConfig, theta: &[f64]) -> Result<EpisodeResult> {
    if theta.len() != env.dim {
        return Err(Error::DimMismatch {
            expected: env.dim,
            got: theta.len(),
        });
    }
    let reward: f64 = -theta
        .iter()
        .map(|t| (t - env.center) * (t - env.center))
        .sum::<f64>();
    Ok(EpisodeResult {
        total_reward: reward,
        behavior: BehaviorDescriptor::final_position(theta[0], theta[1]),
        steps: 1,
        final_position: None,
    })
}

// ---------------------------------------------------------------------------
// Unified environment handle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvConfig {
    Walker(WalkerEnv),
    Gridworld(GridworldConfig),
    Sphere(SphereConfig),
}

impl EnvConfig {
    /// Stable name used in summaries and comparisons.
    pub fn kind_name(&self) -> &'static str {
        match self {
            EnvConfig::Walker(w) => match (w.reward, w.trap.is_some()) {
                (WalkerReward::Isotropic, false) => "isotropic-walker",
                (WalkerReward::DistanceX, true) => "trap-walker",
                _ => "walker",
            },
            EnvConfig::Gridworld(_) => "gridworld",
            EnvConfig::Sphere(_) => "sphere",
        }
    }

    /// `(observation_dim, action_dim)` for policy-driven environments.
    pub fn policy_io_dims(&self) -> Option<(usize, usize)> {
        match self {
            EnvConfig::Walker(_) => Some((4, 2)),
            EnvConfig::Gridworld(_) => Some((2, 5)),
            EnvConfig::Sphere(_) => None,
        }
    }

    pub fn bc_kind(&self) -> BcKind {
        match self {
            EnvConfig::Walker(_) | EnvConfig::Sphere(_) => BcKind::FinalPosition,
            EnvConfig::Gridworld(_) => BcKind::Trajectory,
        }
    }

    /// Whether episodes carry a physical 2-D final position (overhead plots).
    pub fn has_final_positions(&self) -> bool {
        matches!(self, EnvConfig::Walker(_))
    }

    /// Dimension of the searched parameter vector under `spec`.
    pub fn theta_dim(&self, spec: Option<&MlpSpec>) -> Result<usize> {
        match self {
            EnvConfig::Sphere(s) => Ok(s.dim),
            _ => spec
                .map(|s| s.parameter_count())
                .ok_or(Error::MissingPolicySpec),
        }
    }

    /// Evaluate `theta` for one episode.
    pub fn evaluate(
        &self,
        spec: Option<&MlpSpec>,
        theta: &ParameterVector,
        episode_seed: u64,
    ) -> Result<EpisodeResult> {
        match self {
            EnvConfig::Sphere(s) => sphere_evaluate(s, theta.as_slice()),
            EnvConfig::Walker(w) => {
                let spec = spec.ok_or(Error::MissingPolicySpec)?;
                let mut runner = MlpRunner::new(spec, theta.as_slice())?;
                walker_rollout(w, &mut runner, episode_seed)
            }
            EnvConfig::Gridworld(g) => {
                let spec = spec.ok_or(Error::MissingPolicySpec)?;
                let mut runner = MlpRunner::new(spec, theta.as_slice())?;
                gridworld_rollout(g, &mut runner, episode_seed)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(action: Vec<f64>) -> ScriptedController<impl FnMut(usize, &[f64]) -> Vec<f64>> {
        ScriptedController::new(move |_, _| action.clone())
    }

    #[test]
    fn zero_policy_stays_at_origin() {
        let env = WalkerEnv::deceptive_trap();
        let spec = MlpSpec::new(4, 2);
        let theta = ParameterVector::zeros(spec.parameter_count());
        let mut runner = MlpRunner::new(&spec, theta.as_slice()).unwrap();
        let res = walker_rollout(&env, &mut runner, 1).unwrap();
        let p = res.final_position.unwrap();
        assert_eq!(p, [0.0, 0.0]);
        assert_eq!(res.total_reward, 0.0);
    }

    #[test]
    fn constant_push_pins_agent_at_front_wall() {
        let env = WalkerEnv::deceptive_trap();
        let trap = env.trap.unwrap();
        let mut ctrl = constant(vec![1.0, 0.0]);
        let mut trace = WalkerTrajectory::default();
        let res = walker_rollout_traced(&env, &mut ctrl, 3, Some(&mut trace)).unwrap();
        let p = res.final_position.unwrap();
        assert!((p[0] - trap.trap_x).abs() < 1e-6, "final x {}", p[0]);
        assert_eq!(p[1], 0.0);

        // scalar loop oracle for the pre-contact approach
        let mut x = 0.0;
        let mut vx = 0.0;
        for (i, pos) in trace.positions.iter().enumerate() {
            vx = env.drag * vx + 1.0 * WALKER_DT;
            x += vx * WALKER_DT;
            if x > trap.trap_x {
                break;
            }
            assert!((pos[0] - x).abs() < 1e-12, "step {i}: {} vs {x}", pos[0]);
        }

        // energy: 200 steps of unit force
        let expected_energy = env.max_steps as f64;
        assert!((trace.energy() - expected_energy).abs() < 1e-9);
        assert!((res.total_reward - (p[0] - env.energy_cost * expected_energy)).abs() < 1e-12);
        // rollout-internal reward agrees with the trajectory-level reward op
        assert!((reward_deceptive(&trace, env.energy_cost) - res.total_reward).abs() < 1e-12);
    }

    #[test]
    fn isotropic_reward_ignores_heading() {
        let env = WalkerEnv::isotropic();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r45 = walker_rollout(&env, &mut constant(vec![s, s]), 9).unwrap();
        let r135 = walker_rollout(&env, &mut constant(vec![-s, s]), 9).unwrap();
        assert!((r45.total_reward - r135.total_reward).abs() < 1e-9);
        assert!(r45.total_reward > 10.0);
    }

    #[test]
    fn reward_ops_basic_cases() {
        // no motion, some effort -> non-positive
        let idle = WalkerTrajectory {
            positions: vec![[0.0, 0.0]; 5],
            forces: vec![[0.3, 0.0]; 5],
        };
        assert!(reward_isotropic(&idle, 1e-3) <= 0.0);
        assert!(reward_deceptive(&idle, 1e-3) <= 0.0);

        // 3-4-5 final position, zero effort
        let t = WalkerTrajectory {
            positions: vec![[3.0, 4.0]],
            forces: vec![[0.0, 0.0]],
        };
        assert_eq!(reward_isotropic(&t, 1e-3), 5.0);

        // inside the trap at x = 1.7 with zero effort
        let inside = WalkerTrajectory {
            positions: vec![[1.7, 0.0]],
            forces: vec![],
        };
        assert_eq!(reward_deceptive(&inside, 1e-3), 1.7);

        // any endpoint past the trap beats any interior endpoint
        let around = WalkerTrajectory {
            positions: vec![[6.0, 0.0]],
            forces: vec![],
        };
        assert!(reward_deceptive(&around, 1e-3) > reward_deceptive(&inside, 1e-3));
        assert!(reward_deceptive(&around, 1e-3) > TrapGeometry::default().trap_x);
    }

    #[test]
    fn rotating_a_trajectory_preserves_isotropic_reward() {
        let t = WalkerTrajectory {
            positions: vec![[1.0, 2.0], [3.0, -1.0], [2.5, 4.0]],
            forces: vec![[0.5, -0.25], [1.0, 0.0], [0.0, 0.75]],
        };
        let angle = 1.234f64;
        let (sin, cos) = angle.sin_cos();
        let rot = |p: [f64; 2]| [cos * p[0] - sin * p[1], sin * p[0] + cos * p[1]];
        let rotated = WalkerTrajectory {
            positions: t.positions.iter().map(|&p| rot(p)).collect(),
            forces: t.forces.iter().map(|&f| rot(f)).collect(),
        };
        assert!((reward_isotropic(&t, 1e-3) - reward_isotropic(&rotated, 1e-3)).abs() < 1e-12);
    }

    #[test]
    fn more_effort_on_same_path_never_pays() {
        let path = vec![[1.0, 0.0], [2.0, 0.0]];
        let light = WalkerTrajectory {
            positions: path.clone(),
            forces: vec![[0.2, 0.0], [0.2, 0.0]],
        };
        let heavy = WalkerTrajectory {
            positions: path,
            forces: vec![[0.9, 0.3], [0.9, 0.3]],
        };
        assert!(reward_deceptive(&heavy, 1e-3) < reward_deceptive(&light, 1e-3));
        assert!(reward_isotropic(&heavy, 1e-3) < reward_isotropic(&light, 1e-3));
    }

    #[test]
    fn walls_are_impenetrable_under_random_policies() {
        let env = WalkerEnv::deceptive_trap();
        let trap = env.trap.unwrap();
        let mut walls = trap_walls(&trap).to_vec();
        walls.extend_from_slice(&arena_walls(env.arena_half_size.unwrap()));
        let spec = MlpSpec::new(4, 2);
        for seed in 0..40u64 {
            let theta = crate::policy::init_theta(&spec, &mut SeededRng::new(seed, 17));
            let mut runner = MlpRunner::new(&spec, theta.as_slice()).unwrap();
            let mut trace = WalkerTrajectory::default();
            walker_rollout_traced(&env, &mut runner, seed, Some(&mut trace)).unwrap();
            let mut prev = [0.0, 0.0];
            for &p in &trace.positions {
                for wall in &walls {
                    assert!(
                        crossing(prev, p, wall).is_none(),
                        "seed {seed}: segment {prev:?} -> {p:?} crosses a wall"
                    );
                }
                prev = p;
            }
        }
    }

    #[test]
    fn rollout_is_replay_identical() {
        let env = WalkerEnv::deceptive_trap();
        let spec = MlpSpec::new(4, 2);
        let theta = crate::policy::init_theta(&spec, &mut SeededRng::new(5, 3));
        let mut r1 = MlpRunner::new(&spec, theta.as_slice()).unwrap();
        let mut r2 = MlpRunner::new(&spec, theta.as_slice()).unwrap();
        let a = walker_rollout(&env, &mut r1, 77).unwrap();
        let b = walker_rollout(&env, &mut r2, 77).unwrap();
        assert_eq!(a.total_reward.to_bits(), b.total_reward.to_bits());
        assert_eq!(a.behavior, b.behavior);
    }

    #[test]
    fn gridworld_stay_policy_repeats_start_state() {
        let env = GridworldConfig::default();
        // zero outputs -> first argmax = stay
        let mut ctrl = constant(vec![0.0; 5]);
        let res = gridworld_rollout(&env, &mut ctrl, 0).unwrap();
        assert_eq!(res.total_reward, 0.0);
        assert_eq!(res.steps, env.max_steps);
        match &res.behavior {
            BehaviorDescriptor::Trajectory { state_dim, states } => {
                assert_eq!(*state_dim, 2);
                assert_eq!(states.len(), env.max_steps * 2);
                for chunk in states.chunks(2) {
                    assert_eq!(chunk, [GRID_START[0] as f64, GRID_START[1] as f64]);
                }
            }
            _ => panic!("expected trajectory behavior"),
        }
    }

    #[test]
    fn scripted_shortest_path_to_decoy_earns_decoy_reward() {
        let env = GridworldConfig::default();
        // two steps north from (5,8) reaches the decoy at (5,6)
        let mut ctrl = ScriptedController::new(|step, _| {
            let mut out = vec![0.0; 5];
            out[if step < 2 { 1 } else { 0 }] = 1.0;
            out
        });
        let res = gridworld_rollout(&env, &mut ctrl, 0).unwrap();
        assert_eq!(res.total_reward, env.decoy_reward);
        assert_eq!(res.steps, 2);
        match &res.behavior {
            BehaviorDescriptor::Trajectory { states, .. } => {
                assert_eq!(states.as_slice(), &[5.0, 7.0, 5.0, 6.0]);
            }
            _ => panic!("expected trajectory behavior"),
        }
    }

    #[test]
    fn scripted_detour_reaches_real_goal() {
        let env = GridworldConfig::default();
        // west around the wall row: hand-enumerated 15-step path
        let script = [
            3, 1, 1, 1, 1, // (4,8) then north to (4,4)
            3, 3, 3, // west to (1,4)
            1, 1, // north to (1,2)
            4, 4, 4, 4, // east to (5,2)
        ];
        let mut ctrl = ScriptedController::new(move |step, _| {
            let mut out = vec![0.0; 5];
            out[script[step.min(script.len() - 1)]] = 1.0;
            out
        });
        let res = gridworld_rollout(&env, &mut ctrl, 0).unwrap();
        assert_eq!(res.total_reward, env.goal_reward);
        assert_eq!(res.steps, 14);
    }

    #[test]
    fn gridworld_rollouts_are_identical() {
        let env = GridworldConfig::default();
        let spec = MlpSpec::new(2, 5);
        let theta = crate::policy::init_theta(&spec, &mut SeededRng::new(9, 1));
        let a = EnvConfig::Gridworld(env.clone())
            .evaluate(Some(&spec), &theta, 1)
            .unwrap();
        let b = EnvConfig::Gridworld(env)
            .evaluate(Some(&spec), &theta, 2)
            .unwrap();
        assert_eq!(a.behavior, b.behavior);
    }

    #[test]
    fn sphere_scores_distance_to_center() {
        let cfg = SphereConfig {
            dim: 3,
            center: 1.0,
        };
        let theta = ParameterVector::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            sphere_evaluate(&cfg, theta.as_slice())
                .unwrap()
                .total_reward,
            0.0
        );
        let theta = ParameterVector::new(vec![0.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            sphere_evaluate(&cfg, theta.as_slice())
                .unwrap()
                .total_reward,
            -1.0
        );
        assert!(sphere_evaluate(&cfg, &[0.0, 0.0]).is_err());
    }
}
