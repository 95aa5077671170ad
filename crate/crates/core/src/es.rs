//! Per-generation NES machinery: evaluate a batch of perturbations,
//! rank-normalize the scores, estimate the search gradient, take one Adam
//! ascent step.

use crate::archive::BehaviorDescriptor;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::exec::{BatchContext, WorkOrder, WorkerPool};
use crate::noise::{NoiseTable, PerturbationRef};
use crate::policy::MlpSpec;
use crate::rng::{mix, streams, SeededRng};
use crate::tensor::{adam_step, centered_ranks, AdamState, ParameterVector};

/// Batch-size and noise-scale knobs of one generation.
#[derive(Debug, Clone, Copy)]
pub struct EsHyper {
    pub n: usize,
    pub sigma: f64,
    /// Antithetic +-pairs instead of independent draws; off by default.
    pub mirrored: bool,
}

/// Aligned per-sample results of one generation.
#[derive(Debug, Clone)]
pub struct GenerationBatch {
    pub refs: Vec<PerturbationRef>,
    pub fitness: Vec<f64>,
    pub novelty: Option<Vec<f64>>,
    pub behaviors: Option<Vec<BehaviorDescriptor>>,
}

/// Derived seed for sample `i` of `(generation, agent)` under `run_seed`.
pub fn episode_seed(run_seed: u64, generation: u64, agent_id: usize, sample_index: usize) -> u64 {
    mix(&[
        run_seed,
        streams::EPISODE,
        generation,
        agent_id as u64,
        sample_index as u64,
    ])
}

/// Seed for evaluation episode `e`; generation-independent so repeated
/// policy evaluations are paired across a run.
pub fn eval_episode_seed(run_seed: u64, episode: usize) -> u64 {
    mix(&[run_seed, streams::EVAL, episode as u64])
}

/// Draw the generation's perturbation references from the coordinator's
/// per-generation stream.
pub fn sample_generation_refs(
    table: &NoiseTable,
    run_seed: u64,
    generation: u64,
    hyper: &EsHyper,
    dim: usize,
) -> Result<Vec<PerturbationRef>> {
    let mut rng = SeededRng::derived(run_seed, &[streams::REFS, generation]);
    if hyper.mirrored {
        if !hyper.n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "mirrored sampling needs an even n, got {}",
                hyper.n
            )));
        }
        let mut refs = Vec::with_capacity(hyper.n);
        for _ in 0..hyper.n / 2 {
            let (plus, minus) = table.sample_ref_pair(&mut rng, dim)?;
            refs.push(plus);
            refs.push(minus);
        }
        Ok(refs)
    } else {
        (0..hyper.n)
            .map(|_| table.sample_ref(&mut rng, dim))
            .collect()
    }
}

/// Everything fixed while one agent's generation is evaluated.
#[derive(Clone, Copy)]
pub struct GenerationSetup<'a> {
    pub run_seed: u64,
    pub generation: u64,
    pub agent_id: usize,
    pub env: &'a EnvConfig,
    pub policy_spec: Option<&'a MlpSpec>,
    pub table: &'a NoiseTable,
    pub archive: Option<&'a crate::archive::Archive>,
    pub pool: &'a WorkerPool,
    pub hyper: EsHyper,
    pub keep_behaviors: bool,
}

/// Evaluate `n` perturbations of `theta`, one seeded rollout each.
pub fn evaluate_perturbations(
    setup: &GenerationSetup<'_>,
    theta: &ParameterVector,
) -> Result<GenerationBatch> {
    let refs = sample_generation_refs(
        setup.table,
        setup.run_seed,
        setup.generation,
        &setup.hyper,
        theta.dim(),
    )?;
    let orders: Vec<WorkOrder> = refs
        .iter()
        .enumerate()
        .map(|(i, r)| WorkOrder {
            generation: setup.generation,
            agent_id: setup.agent_id,
            sample_index: i,
            perturbation_ref: *r,
            episode_seed: episode_seed(setup.run_seed, setup.generation, setup.agent_id, i),
        })
        .collect();
    let ctx = BatchContext {
        env: setup.env,
        policy_spec: setup.policy_spec,
        base_theta: theta,
        sigma: setup.hyper.sigma,
        table: setup.table,
        archive: setup.archive,
        keep_behaviors: setup.keep_behaviors,
    };
    let results = setup.pool.evaluate_batch(&ctx, &orders)?;

    let fitness = results.iter().map(|r| r.fitness).collect();
    let novelty = setup
        .archive
        .is_some()
        .then(|| results.iter().map(|r| r.novelty).collect());
    let behaviors = setup
        .keep_behaviors
        .then(|| results.into_iter().filter_map(|r| r.behavior).collect());
    Ok(GenerationBatch {
        refs,
        fitness,
        novelty,
        behaviors,
    })
}

/// `(1/(n*sigma)) * sum_i w_i * eps_i`, summed in fixed index order.
pub fn estimate_gradient(
    weights: &[f64],
    refs: &[PerturbationRef],
    sigma: f64,
    table: &NoiseTable,
) -> Result<ParameterVector> {
    if sigma <= 0.0 {
        return Err(Error::NonPositiveSigma(sigma));
    }
    if weights.len() != refs.len() {
        return Err(Error::DimMismatch {
            expected: refs.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite { context: "weights" });
    }
    let dim = refs.first().map_or(0, |r| r.dim);
    let mut grad = vec![0.0f64; dim];
    for (w, r) in weights.iter().zip(refs) {
        if r.dim != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: r.dim,
            });
        }
        if *w == 0.0 {
            continue;
        }
        for (j, g) in grad.iter_mut().enumerate() {
            *g += w * table.entry(r, j);
        }
    }
    let scale = 1.0 / (refs.len() as f64 * sigma);
    for g in &mut grad {
        *g *= scale;
    }
    ParameterVector::new(grad)
}

/// Gradient ascent step from per-sample weights: estimate, optionally apply
/// L2 decay toward zero, Adam-step.
pub fn apply_update(
    theta: &ParameterVector,
    adam: &AdamState,
    weights: &[f64],
    refs: &[PerturbationRef],
    sigma: f64,
    table: &NoiseTable,
    weight_decay: f64,
) -> Result<(ParameterVector, AdamState)> {
    let mut grad = estimate_gradient(weights, refs, sigma, table)?;
    if weight_decay != 0.0 {
        let decayed: Vec<f64> = grad
            .as_slice()
            .iter()
            .zip(theta.as_slice())
            .map(|(g, t)| g - weight_decay * t)
            .collect();
        grad = ParameterVector::new(decayed)?;
    }
    let (adam, theta) = adam_step(adam, theta, &grad)?;
    Ok((theta, adam))
}

/// Raw-fitness statistics of one generation.
#[derive(Debug, Clone, Copy)]
pub struct GenerationStats {
    pub mean_fitness: f64,
    pub max_fitness: f64,
}

impl GenerationStats {
    pub fn from_fitness(fitness: &[f64]) -> Self {
        let n = fitness.len().max(1) as f64;
        GenerationStats {
            mean_fitness: fitness.iter().sum::<f64>() / n,
            max_fitness: fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// One plain-ES generation: rank-normalized fitness weights, gradient
/// estimate, Adam step.
pub fn es_generation(
    setup: &GenerationSetup<'_>,
    theta: &ParameterVector,
    adam: &AdamState,
    weight_decay: f64,
) -> Result<(ParameterVector, AdamState, GenerationStats)> {
    let batch = evaluate_perturbations(setup, theta)?;
    let weights = centered_ranks(&batch.fitness)?;
    let (theta, adam) = apply_update(
        theta,
        adam,
        &weights,
        &batch.refs,
        setup.hyper.sigma,
        setup.table,
        weight_decay,
    )?;
    let stats = GenerationStats::from_fitness(&batch.fitness);
    Ok((theta, adam, stats))
}
