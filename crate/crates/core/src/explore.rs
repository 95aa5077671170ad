//! Population-based exploration over the ES machinery: novelty-only search
//! (NS-ES), the even novelty/reward blend (NSR-ES), and the adaptive blend
//! with a stagnation-driven weight controller (NSRA-ES).
//!
//! A meta-population of M agents shares one archive. Each generation one
//! agent is selected with probability proportional to the novelty of its
//! current behavior, advanced by one rank-weighted gradient step, re-rolled
//! to refresh its behavior, and its new behavior is appended to the archive.

use serde::{Deserialize, Serialize};

use crate::archive::{Archive, BehaviorDescriptor};
use crate::env::{EnvConfig, EpisodeResult};
use crate::error::{Error, Result};
use crate::es::{
    apply_update, eval_episode_seed, evaluate_perturbations, EsHyper, GenerationSetup,
    GenerationStats,
};
use crate::exec::WorkerPool;
use crate::noise::NoiseTable;
use crate::policy::{init_theta, MlpSpec};
use crate::rng::{streams, SeededRng};
use crate::tensor::{centered_ranks, AdamState, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Es,
    NsEs,
    NsrEs,
    NsraEs,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Es => "es",
            Algorithm::NsEs => "ns-es",
            Algorithm::NsrEs => "nsr-es",
            Algorithm::NsraEs => "nsra-es",
        }
    }

    /// Whether the algorithm maintains an archive and novelty scores.
    pub fn uses_archive(self) -> bool {
        !matches!(self, Algorithm::Es)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sample an agent index with probability `N_m / sum_j N_j`; a zero novelty
/// sum falls back to the uniform distribution.
pub fn select_agent(novelties: &[f64], rng: &mut SeededRng) -> Result<usize> {
    if novelties.is_empty() {
        return Err(Error::Config("selection over an empty population".into()));
    }
    for &n in novelties {
        if !n.is_finite() {
            return Err(Error::NonFinite {
                context: "novelties",
            });
        }
        if n < 0.0 {
            return Err(Error::NegativeNovelty(n));
        }
    }
    let total: f64 = novelties.iter().sum();
    if total == 0.0 {
        return Ok(rng.index(novelties.len()));
    }
    let mut target = rng.uniform() * total;
    for (i, &n) in novelties.iter().enumerate() {
        target -= n;
        if target < 0.0 {
            return Ok(i);
        }
    }
    Ok(novelties.len() - 1)
}

/// Adaptive fitness-vs-novelty weight: raised on reward improvement, decayed
/// after `t_w` stagnant generations, always clamped to [0, 1]. `w` multiplies
/// the fitness ranks; `1 - w` the novelty ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightController {
    pub w: f64,
    pub t_w: u64,
    pub delta_w: f64,
    pub f_best: Option<f64>,
    pub t_best: u64,
}

impl WeightController {
    pub fn new(initial_w: f64, t_w: u64, delta_w: f64) -> Self {
        WeightController {
            w: initial_w.clamp(0.0, 1.0),
            t_w,
            delta_w,
            f_best: None,
            t_best: 0,
        }
    }

    /// Feed one post-update reward estimate through the controller.
    pub fn update_weight(&mut self, f_new: f64) {
        let improved = self.f_best.is_none_or(|best| f_new > best);
        if improved {
            self.w = (self.w + self.delta_w).min(1.0);
            self.t_best = 0;
            self.f_best = Some(f_new);
        } else {
            self.t_best += 1;
        }
        if self.t_best >= self.t_w {
            self.w = (self.w - self.delta_w).max(0.0);
            self.t_best = 0;
        }
    }
}

/// One member of the meta-population with its own optimizer state and the
/// behavior of its current parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub agent_id: usize,
    pub lineage_color: usize,
    pub theta: ParameterVector,
    pub adam: AdamState,
    pub current_bc: BehaviorDescriptor,
    /// Reward of the behavior rollout, kept for logging.
    pub current_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaPopulation {
    pub agents: Vec<Agent>,
}

impl MetaPopulation {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

/// Initial parameters for agent `m`: network init for policy environments,
/// the zero vector for the raw sphere surrogate.
pub fn initial_theta(
    env: &EnvConfig,
    spec: Option<&MlpSpec>,
    run_seed: u64,
    agent_id: usize,
) -> Result<ParameterVector> {
    match spec {
        Some(spec) => {
            let mut rng = SeededRng::derived(run_seed, &[streams::INIT, agent_id as u64]);
            Ok(init_theta(spec, &mut rng))
        }
        None => Ok(ParameterVector::zeros(env.theta_dim(None)?)),
    }
}

/// Fixed inputs of a run's generation loop.
pub struct RunContext<'a> {
    pub algorithm: Algorithm,
    pub run_seed: u64,
    pub env: &'a EnvConfig,
    pub policy_spec: Option<&'a MlpSpec>,
    pub table: &'a NoiseTable,
    pub pool: &'a WorkerPool,
    pub hyper: EsHyper,
    pub weight_decay: f64,
    pub archive_probability: f64,
    /// Episodes in the controller's post-update reward estimate (NSRA).
    pub eval_episodes: usize,
}

/// Mutable algorithm state carried across generations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub pop: MetaPopulation,
    pub archive: Option<Archive>,
    pub controller: WeightController,
}

/// Seed the meta-population and, for archive-bearing algorithms, archive each
/// initial agent's behavior.
pub fn init_run_state(
    ctx: &RunContext<'_>,
    m: usize,
    k: usize,
    alpha: f64,
    initial_w: f64,
    t_w: u64,
    delta_w: f64,
) -> Result<RunState> {
    let mut agents = Vec::with_capacity(m);
    let mut archive = ctx
        .algorithm
        .uses_archive()
        .then(|| Archive::new(ctx.env.bc_kind(), k));
    for agent_id in 0..m {
        let theta = initial_theta(ctx.env, ctx.policy_spec, ctx.run_seed, agent_id)?;
        let episode =
            ctx.env
                .evaluate(ctx.policy_spec, &theta, eval_episode_seed(ctx.run_seed, 0))?;
        if let Some(archive) = archive.as_mut() {
            archive.add(episode.behavior.clone())?;
        }
        let dim = theta.dim();
        agents.push(Agent {
            agent_id,
            lineage_color: agent_id,
            theta,
            adam: AdamState::new(dim, alpha),
            current_bc: episode.behavior,
            current_reward: episode.total_reward,
        });
    }
    Ok(RunState {
        pop: MetaPopulation { agents },
        archive,
        controller: WeightController::new(initial_w, t_w, delta_w),
    })
}

/// What one generation did, for logging and plotting.
#[derive(Debug, Clone)]
pub struct GenerationReport {
    pub generation: u64,
    pub selected_agent: usize,
    pub stats: GenerationStats,
    /// Novelty of the stepped agent's new behavior against the frozen
    /// archive (before this generation's append); None for plain ES.
    pub novelty_of_selected: Option<f64>,
    pub w: f64,
    pub archive_size: usize,
    /// Post-update behavior rollout of the stepped agent.
    pub post_update: EpisodeResult,
    /// Mean of the controller's evaluation episodes (NSRA only).
    pub controller_eval: Option<f64>,
}

fn combine_weights(rf: &[f64], rn: &[f64], w: f64) -> Vec<f64> {
    rf.iter()
        .zip(rn)
        .map(|(f, n)| w * f + (1.0 - w) * n)
        .collect()
}

/// Advance the run by one generation. Exactly one agent's parameters and
/// optimizer state change; the archive gains at most one entry afterwards.
pub fn run_generation(
    ctx: &RunContext<'_>,
    state: &mut RunState,
    generation: u64,
) -> Result<GenerationReport> {
    // 1. agent selection against the frozen archive
    let selected = match (&state.archive, ctx.algorithm) {
        (None, _) | (_, Algorithm::Es) => {
            if state.pop.len() != 1 {
                return Err(Error::Config(format!(
                    "plain ES runs a single agent, got M={}",
                    state.pop.len()
                )));
            }
            0
        }
        (Some(archive), _) => {
            let novelties: Vec<f64> = state
                .pop
                .agents
                .iter()
                .map(|a| archive.novelty(&a.current_bc))
                .collect::<Result<_>>()?;
            let mut rng = SeededRng::derived(ctx.run_seed, &[streams::SELECT, generation]);
            select_agent(&novelties, &mut rng)?
        }
    };

    // 2. evaluate n perturbations of the selected agent
    let setup = GenerationSetup {
        run_seed: ctx.run_seed,
        generation,
        agent_id: selected,
        env: ctx.env,
        policy_spec: ctx.policy_spec,
        table: ctx.table,
        archive: state.archive.as_ref(),
        pool: ctx.pool,
        hyper: ctx.hyper,
        keep_behaviors: false,
    };
    let agent_theta = state.pop.agents[selected].theta.clone();
    let batch = evaluate_perturbations(&setup, &agent_theta)?;

    // 3. per-sample weights
    let rf = centered_ranks(&batch.fitness)?;
    let rn = match &batch.novelty {
        Some(novelty) => Some(centered_ranks(novelty)?),
        None => None,
    };
    let weights = match ctx.algorithm {
        Algorithm::Es => rf,
        Algorithm::NsEs => rn.expect("archive algorithms carry novelty scores"),
        Algorithm::NsrEs => combine_weights(&rf, &rn.expect("novelty scores"), 0.5),
        Algorithm::NsraEs => combine_weights(&rf, &rn.expect("novelty scores"), state.controller.w),
    };

    // 4. gradient step on the selected agent only
    let (new_theta, new_adam) = apply_update(
        &agent_theta,
        &state.pop.agents[selected].adam,
        &weights,
        &batch.refs,
        ctx.hyper.sigma,
        ctx.table,
        ctx.weight_decay,
    )?;

    // 5. refresh the stepped agent's behavior
    let post_update = ctx.env.evaluate(
        ctx.policy_spec,
        &new_theta,
        eval_episode_seed(ctx.run_seed, 0),
    )?;
    let novelty_of_selected = match &state.archive {
        Some(archive) => Some(archive.novelty(&post_update.behavior)?),
        None => None,
    };

    // 6. controller estimate (NSRA): mean reward over the evaluation episodes
    let controller_eval = if matches!(ctx.algorithm, Algorithm::NsraEs) {
        let mut total = post_update.total_reward;
        for e in 1..ctx.eval_episodes.max(1) {
            total += ctx
                .env
                .evaluate(
                    ctx.policy_spec,
                    &new_theta,
                    eval_episode_seed(ctx.run_seed, e),
                )?
                .total_reward;
        }
        Some(total / ctx.eval_episodes.max(1) as f64)
    } else {
        None
    };

    // 7. commit: agent, archive append, controller
    {
        let agent = &mut state.pop.agents[selected];
        agent.theta = new_theta;
        agent.adam = new_adam;
        agent.current_bc = post_update.behavior.clone();
        agent.current_reward = post_update.total_reward;
    }
    if let Some(archive) = state.archive.as_mut() {
        let add = if ctx.archive_probability >= 1.0 {
            true
        } else {
            let mut rng = SeededRng::derived(ctx.run_seed, &[streams::ARCHIVE, generation]);
            rng.uniform() < ctx.archive_probability
        };
        if add {
            archive.add(post_update.behavior.clone())?;
        }
    }
    if let Some(f_new) = controller_eval {
        state.controller.update_weight(f_new);
    }

    Ok(GenerationReport {
        generation,
        selected_agent: selected,
        stats: GenerationStats::from_fitness(&batch.fitness),
        novelty_of_selected,
        w: match ctx.algorithm {
            Algorithm::Es => 1.0,
            Algorithm::NsEs => 0.0,
            Algorithm::NsrEs => 0.5,
            Algorithm::NsraEs => state.controller.w,
        },
        archive_size: state.archive.as_ref().map_or(0, Archive::len),
        post_update,
        controller_eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::BcKind;
    use crate::env::GridworldConfig;

    #[test]
    fn selection_matches_closed_form_frequencies() {
        let novelties = [2.0, 1.0, 1.0];
        let mut rng = SeededRng::new(31, 1);
        let mut counts = [0usize; 3];
        let draws = 100_000;
        for _ in 0..draws {
            counts[select_agent(&novelties, &mut rng).unwrap()] += 1;
        }
        let freqs: Vec<f64> = counts.iter().map(|c| *c as f64 / draws as f64).collect();
        for (freq, expected) in freqs.iter().zip([0.5, 0.25, 0.25]) {
            assert!((freq - expected).abs() < 0.01, "{freqs:?}");
        }
    }

    #[test]
    fn equal_novelties_select_each_agent_at_one_over_m() {
        let novelties = [1.0; 5];
        let mut rng = SeededRng::new(40, 1);
        let mut counts = [0usize; 5];
        for _ in 0..100_000 {
            counts[select_agent(&novelties, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 100_000.0 - 0.2).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn zero_novelty_sum_selects_uniformly() {
        let novelties = [0.0; 5];
        let mut rng = SeededRng::new(32, 1);
        let mut counts = [0usize; 5];
        for _ in 0..50_000 {
            counts[select_agent(&novelties, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            let freq = c as f64 / 50_000.0;
            assert!((freq - 0.2).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn selection_rejects_negative_novelty() {
        let mut rng = SeededRng::new(33, 1);
        assert!(matches!(
            select_agent(&[0.5, -0.1], &mut rng),
            Err(Error::NegativeNovelty(_))
        ));
    }

    #[test]
    fn selection_is_invariant_under_positive_scaling() {
        let base = [0.3, 1.2, 0.1, 2.4];
        let scaled: Vec<f64> = base.iter().map(|n| n * 37.5).collect();
        let picks_a: Vec<usize> = {
            let mut rng = SeededRng::new(34, 1);
            (0..200)
                .map(|_| select_agent(&base, &mut rng).unwrap())
                .collect()
        };
        let picks_b: Vec<usize> = {
            let mut rng = SeededRng::new(34, 1);
            (0..200)
                .map(|_| select_agent(&scaled, &mut rng).unwrap())
                .collect()
        };
        // not exactly bitwise (target*total differs), but the distributions
        // must match; with identical draws the picks coincide except at
        // boundary roundings, which these values avoid
        assert_eq!(picks_a, picks_b);
    }

    #[test]
    fn controller_clamps_at_one_under_continual_improvement() {
        let mut c = WeightController::new(1.0, 50, 0.05);
        for f in 0..100 {
            c.update_weight(f as f64);
            assert_eq!(c.w, 1.0);
        }
    }

    #[test]
    fn controller_golden_trace_under_stagnation() {
        let mut c = WeightController::new(1.0, 50, 0.05);
        c.update_weight(1.0); // sets f_best
        assert_eq!(c.w, 1.0);

        // independent recurrence: decay by delta at every 50th stagnant update
        let mut expected_w = 1.0f64;
        for gen in 1..=1000u64 {
            c.update_weight(0.0);
            if gen % 50 == 0 {
                expected_w = (expected_w - 0.05).max(0.0);
            }
            assert_eq!(c.w, expected_w, "generation {gen}");
        }
        assert_eq!(c.w, 0.0);
        // milestone spot checks
        let mut c2 = WeightController::new(1.0, 50, 0.05);
        c2.update_weight(1.0);
        for _ in 0..50 {
            c2.update_weight(0.0);
        }
        assert!((c2.w - 0.95).abs() < 1e-12);
        for _ in 0..50 {
            c2.update_weight(0.0);
        }
        assert!((c2.w - 0.90).abs() < 1e-12);
    }

    #[test]
    fn controller_single_improvement_step() {
        let mut c = WeightController::new(0.30, 50, 0.05);
        c.update_weight(10.0); // first reward always improves on None
        assert!((c.w - 0.35).abs() < 1e-12);
        assert_eq!(c.t_best, 0);
        assert_eq!(c.f_best, Some(10.0));
    }

    #[test]
    fn controller_w_stays_in_unit_interval() {
        let mut c = WeightController::new(0.5, 3, 0.2);
        let rewards = [5.0, 1.0, 0.5, 7.0, 2.0, 2.0, 2.0, 2.0, 9.0, 0.0, 0.0];
        for (i, f) in rewards.iter().cycle().take(500).enumerate() {
            c.update_weight(*f + (i % 7) as f64 * 0.01);
            assert!((0.0..=1.0).contains(&c.w));
        }
    }

    fn gridworld_ctx<'a>(
        algorithm: Algorithm,
        env: &'a EnvConfig,
        spec: &'a MlpSpec,
        table: &'a NoiseTable,
        pool: &'a WorkerPool,
    ) -> RunContext<'a> {
        RunContext {
            algorithm,
            run_seed: 99,
            env,
            policy_spec: Some(spec),
            table,
            pool,
            hyper: EsHyper {
                n: 20,
                sigma: 0.05,
                mirrored: false,
            },
            weight_decay: 0.0,
            archive_probability: 1.0,
            eval_episodes: 3,
        }
    }

    #[test]
    fn generation_touches_only_the_selected_agent_and_grows_archive_by_one() {
        let env = EnvConfig::Gridworld(GridworldConfig::default());
        let spec = MlpSpec::new(2, 5);
        let table = NoiseTable::new(4, 200_000);
        let pool = WorkerPool::new(1).unwrap();
        let ctx = gridworld_ctx(Algorithm::NsEs, &env, &spec, &table, &pool);
        let mut state = init_run_state(&ctx, 4, 10, 0.01, 1.0, 50, 0.05).unwrap();
        assert_eq!(state.archive.as_ref().unwrap().len(), 4);

        let generations = 6u64;
        for generation in 0..generations {
            let before = state.pop.agents.clone();
            let report = run_generation(&ctx, &mut state, generation).unwrap();
            for (i, (prev, now)) in before.iter().zip(&state.pop.agents).enumerate() {
                if i == report.selected_agent {
                    assert_ne!(prev.theta, now.theta);
                } else {
                    assert_eq!(prev, now, "agent {i} changed without being selected");
                }
            }
            assert_eq!(
                state.archive.as_ref().unwrap().len(),
                4 + generation as usize + 1
            );
        }
    }

    #[test]
    fn identical_behaviors_give_zero_novelty_gradient() {
        // All perturbations of a stay-in-place policy produce the very same
        // trajectory, so novelty ties across the batch and ranks vanish.
        let env = EnvConfig::Gridworld(GridworldConfig::default());
        let spec = MlpSpec::new(2, 5);
        // a large "stay" output bias dominates every sigma-sized perturbation,
        // so the whole batch produces the same stay-in-place trajectory
        let table = NoiseTable::new(4, 200_000);
        let pool = WorkerPool::new(1).unwrap();
        let ctx = gridworld_ctx(Algorithm::NsEs, &env, &spec, &table, &pool);
        let mut state = init_run_state(&ctx, 1, 10, 0.01, 1.0, 50, 0.05).unwrap();
        let dim = spec.parameter_count();
        let mut values = vec![0.0; dim];
        values[dim - 5] = 10.0; // bias of action 0 (stay)
        state.pop.agents[0].theta = ParameterVector::new(values).unwrap();
        state.pop.agents[0].adam = AdamState::new(dim, 0.01);
        // refresh the seeded archive entry to this policy's behavior
        let bc = ctx
            .env
            .evaluate(
                Some(&spec),
                &state.pop.agents[0].theta,
                eval_episode_seed(ctx.run_seed, 0),
            )
            .unwrap()
            .behavior;
        state.pop.agents[0].current_bc = bc.clone();
        state.archive = Some({
            let mut a = Archive::new(BcKind::Trajectory, 10);
            a.add(bc).unwrap();
            a
        });
        let theta_before = state.pop.agents[0].theta.clone();
        run_generation(&ctx, &mut state, 0).unwrap();
        // zero gradient still moves Adam by alpha*0/(0+eps) = 0 per coord
        assert_eq!(state.pop.agents[0].theta, theta_before);
    }

    #[test]
    fn replaying_a_generation_is_bitwise_identical() {
        let env = EnvConfig::Gridworld(GridworldConfig::default());
        let spec = MlpSpec::new(2, 5);
        let table = NoiseTable::new(4, 200_000);
        let pool = WorkerPool::new(1).unwrap();
        let run = |pool: &WorkerPool| {
            let ctx = RunContext {
                pool,
                ..gridworld_ctx(Algorithm::NsrEs, &env, &spec, &table, pool)
            };
            let mut state = init_run_state(&ctx, 3, 10, 0.01, 1.0, 50, 0.05).unwrap();
            for generation in 0..5 {
                run_generation(&ctx, &mut state, generation).unwrap();
            }
            state
        };
        let a = run(&pool);
        let pool2 = WorkerPool::new(2).unwrap();
        let b = run(&pool2);
        assert_eq!(a, b);
    }

    #[test]
    fn init_seeds_archive_with_all_initial_behaviors() {
        let env = EnvConfig::Gridworld(GridworldConfig::default());
        let spec = MlpSpec::new(2, 5);
        let table = NoiseTable::new(4, 100_000);
        let pool = WorkerPool::new(1).unwrap();
        let ctx = gridworld_ctx(Algorithm::NsrEs, &env, &spec, &table, &pool);
        let state = init_run_state(&ctx, 5, 10, 0.01, 1.0, 50, 0.05).unwrap();
        let archive = state.archive.as_ref().unwrap();
        assert_eq!(archive.len(), 5);
        assert_eq!(archive.kind(), BcKind::Trajectory);
        for (agent, entry) in state.pop.agents.iter().zip(archive.entries()) {
            assert_eq!(&agent.current_bc, entry);
        }
    }
}
