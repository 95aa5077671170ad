//! Deterministic worker-pool evaluation.
//!
//! A batch of work orders is evaluated against immutable snapshots (theta,
//! noise table, archive); results come back in sample-index order and are
//! bitwise identical for any worker count. Workers return scalars, never
//! parameter vectors.

use rayon::prelude::*;

use crate::archive::{Archive, BehaviorDescriptor};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::noise::{NoiseTable, PerturbationRef};
use crate::policy::MlpSpec;
use crate::tensor::ParameterVector;

/// One rollout assignment. The episode seed is a pure function of
/// `(run_seed, generation, agent_id, sample_index)`.
#[derive(Debug, Clone)]
pub struct WorkOrder {
    pub generation: u64,
    pub agent_id: usize,
    pub sample_index: usize,
    pub perturbation_ref: PerturbationRef,
    pub episode_seed: u64,
}

/// Scalar results for one sample; the behavior is retained only on request.
#[derive(Debug, Clone)]
pub struct WorkResult {
    pub sample_index: usize,
    pub fitness: f64,
    pub novelty: f64,
    pub behavior: Option<BehaviorDescriptor>,
}

/// Immutable state shared by every worker for the duration of one batch.
#[derive(Clone, Copy)]
pub struct BatchContext<'a> {
    pub env: &'a EnvConfig,
    pub policy_spec: Option<&'a MlpSpec>,
    pub base_theta: &'a ParameterVector,
    pub sigma: f64,
    pub table: &'a NoiseTable,
    /// Frozen archive for novelty scoring; `None` means fitness-only workers.
    pub archive: Option<&'a Archive>,
    pub keep_behaviors: bool,
}

fn evaluate_one(ctx: &BatchContext<'_>, order: &WorkOrder) -> Result<WorkResult> {
    let wrap = |e: Error| Error::Batch {
        generation: order.generation,
        agent_id: order.agent_id,
        sample_index: order.sample_index,
        source: Box::new(e),
    };
    let theta = ctx
        .table
        .perturb(ctx.base_theta, &order.perturbation_ref, ctx.sigma)
        .map_err(wrap)?;
    let episode = ctx
        .env
        .evaluate(ctx.policy_spec, &theta, order.episode_seed)
        .map_err(wrap)?;
    let novelty = match ctx.archive {
        Some(archive) => archive.novelty(&episode.behavior).map_err(wrap)?,
        None => 0.0,
    };
    Ok(WorkResult {
        sample_index: order.sample_index,
        fitness: episode.total_reward,
        novelty,
        behavior: ctx.keep_behaviors.then_some(episode.behavior),
    })
}

/// Fixed-size evaluation pool. `workers == 1` runs inline on the caller.
pub struct WorkerPool {
    workers: usize,
    pool: Option<rayon::ThreadPool>,
}

impl WorkerPool {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(WorkerPool { workers, pool })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Evaluate every order; results are returned in sample-index order and
    /// do not depend on the worker count.
    pub fn evaluate_batch(
        &self,
        ctx: &BatchContext<'_>,
        orders: &[WorkOrder],
    ) -> Result<Vec<WorkResult>> {
        match &self.pool {
            None => orders.iter().map(|o| evaluate_one(ctx, o)).collect(),
            Some(pool) => pool.install(|| {
                orders
                    .par_iter()
                    .map(|o| evaluate_one(ctx, o))
                    .collect::<Result<Vec<_>>>()
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::WalkerEnv;
    use crate::policy::{init_theta, MlpSpec};
    use crate::rng::{mix, streams, SeededRng};

    fn make_orders(table: &NoiseTable, n: usize, dim: usize) -> Vec<WorkOrder> {
        let mut rng = SeededRng::new(3, streams::REFS);
        (0..n)
            .map(|i| WorkOrder {
                generation: 0,
                agent_id: 0,
                sample_index: i,
                perturbation_ref: table.sample_ref(&mut rng, dim).unwrap(),
                episode_seed: mix(&[3, streams::EPISODE, 0, 0, i as u64]),
            })
            .collect()
    }

    #[test]
    fn results_are_bitwise_identical_across_worker_counts() {
        let env = EnvConfig::Walker(WalkerEnv::deceptive_trap());
        let spec = MlpSpec::new(4, 2);
        let theta = init_theta(&spec, &mut SeededRng::new(1, streams::INIT));
        let table = NoiseTable::new(9, 100_000);
        let orders = make_orders(&table, 64, theta.dim());
        let ctx = BatchContext {
            env: &env,
            policy_spec: Some(&spec),
            base_theta: &theta,
            sigma: 0.02,
            table: &table,
            archive: None,
            keep_behaviors: false,
        };
        let serial = WorkerPool::new(1)
            .unwrap()
            .evaluate_batch(&ctx, &orders)
            .unwrap();
        // repeated parallel passes see different scheduler interleavings
        for workers in [2usize, 4, 4, 4] {
            let parallel = WorkerPool::new(workers)
                .unwrap()
                .evaluate_batch(&ctx, &orders)
                .unwrap();
            assert_eq!(serial.len(), parallel.len());
            for (a, b) in serial.iter().zip(&parallel) {
                assert_eq!(a.sample_index, b.sample_index);
                assert_eq!(a.fitness.to_bits(), b.fitness.to_bits());
                assert_eq!(a.novelty.to_bits(), b.novelty.to_bits());
            }
            // results arrive in sample-index order
            for (i, r) in parallel.iter().enumerate() {
                assert_eq!(r.sample_index, i);
            }
        }
    }

    #[test]
    fn empty_batch_yields_empty_results() {
        let env = EnvConfig::Walker(WalkerEnv::isotropic());
        let spec = MlpSpec::new(4, 2);
        let theta = ParameterVector::zeros(spec.parameter_count());
        let table = NoiseTable::new(9, 1000);
        let ctx = BatchContext {
            env: &env,
            policy_spec: Some(&spec),
            base_theta: &theta,
            sigma: 0.02,
            table: &table,
            archive: None,
            keep_behaviors: false,
        };
        let out = WorkerPool::new(2)
            .unwrap()
            .evaluate_batch(&ctx, &[])
            .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn failures_carry_generation_agent_and_sample() {
        let env = EnvConfig::Walker(WalkerEnv::isotropic());
        // wrong spec: walker wants 4 inputs
        let spec = MlpSpec::new(3, 2);
        let theta = init_theta(&spec, &mut SeededRng::new(1, streams::INIT));
        let table = NoiseTable::new(9, 10_000);
        let mut orders = make_orders(&table, 3, theta.dim());
        orders[2].generation = 7;
        orders[2].agent_id = 4;
        let ctx = BatchContext {
            env: &env,
            policy_spec: Some(&spec),
            base_theta: &theta,
            sigma: 0.02,
            table: &table,
            archive: None,
            keep_behaviors: false,
        };
        let err = WorkerPool::new(1)
            .unwrap()
            .evaluate_batch(&ctx, &orders)
            .unwrap_err();
        match err {
            Error::Batch { generation, .. } => assert_eq!(generation, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
