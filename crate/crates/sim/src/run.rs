//! Scenario → world construction and the round loop.

use rayon::prelude::*;

use bagchain_core::consensus::Rules;
use bagchain_core::hash::derive_seed;
use bagchain_core::ml::{synthesize_dataset, Dataset};
use bagchain_core::netsim::Topology;
use bagchain_core::world::{build_workload, NetParams, WorkloadSpec, World, WorldConfig};
use bagchain_core::NodeId;

use crate::files::{load_dataset, load_topology};
use crate::metrics::{collect, RunReport};
use crate::scenario::{DataSource, Scenario, TopologySpec};
use crate::SimError;

/// How miner steps inside one round are executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stepping {
    #[default]
    Serial,
    Parallel,
}

pub fn source_dataset(sc: &Scenario) -> Result<Dataset, SimError> {
    match &sc.data {
        DataSource::Synthetic {
            samples,
            features,
            classes,
            separation,
        } => Ok(synthesize_dataset(
            *samples,
            *features,
            *classes,
            *separation,
            derive_seed("dataset", &[sc.seed]),
        )?),
        DataSource::Csv(path) => load_dataset(path),
    }
}

pub fn topology(sc: &Scenario) -> Result<Topology, SimError> {
    let t = match &sc.topology {
        TopologySpec::Full => Topology::fully_connected(sc.miners, sc.bandwidth),
        TopologySpec::Random { edge_probability } => Topology::erdos_renyi(
            sc.miners,
            *edge_probability,
            sc.bandwidth,
            derive_seed("topology", &[sc.seed]),
        ),
        TopologySpec::File(path) => return load_topology(path, Some(sc.miners)),
    };
    t.map_err(|e| SimError::Topology(e.to_string()))
}

pub fn build_world(sc: &Scenario) -> Result<World, SimError> {
    sc.validate()?;
    let source = source_dataset(sc)?;
    let topology = topology(sc)?;
    let spec = WorkloadSpec {
        miners: sc.miners,
        holdout: sc.holdout,
        kappa: sc.kappa,
        zeta: sc.zeta,
        partitions: sc.partitions(),
        heterogeneity: sc.heterogeneity,
        learner: sc.learner,
        metric_min: sc.metric_min,
        fee: sc.fee,
        tasks: sc.task_count(),
        seed: derive_seed("workload", &[sc.seed]),
    };
    let (tasks, data) = build_workload(&source, &spec, NodeId(sc.miners as u32))?;
    let rules = Rules {
        cfs: sc.cfs,
        target: sc.target,
        hash_trials: sc.hash_trials,
        keyblock_reward: sc.keyblock_reward,
        ensemble_wait: sc.ensemble_wait,
        fetch_retry: sc.fetch_retry,
        seed: derive_seed("miners", &[sc.seed]),
        // both are set by the world
        requester: NodeId(sc.miners as u32),
        gossip: false,
    };
    let config = WorldConfig {
        strategies: (0..sc.miners).map(|i| sc.strategy(i)).collect(),
        rules,
        net: NetParams {
            sizes: sc.sizes,
            keyblock_delay: sc.keyblock_delay,
            requester_bandwidth: sc.requester_bandwidth,
        },
        phase1: sc.phase1,
        phase2: sc.phase2,
    };
    Ok(World::new(topology, config, tasks, data, sc.queue_len)?)
}

pub fn step(world: &mut World, stepping: Stepping) {
    match stepping {
        Stepping::Serial => world.step(),
        Stepping::Parallel => world.step_with(|miners, inboxes, round| {
            miners
                .par_iter_mut()
                .zip(inboxes.into_par_iter())
                .map(|(m, inbox)| m.step(round, inbox))
                .collect()
        }),
    }
}

/// Runs until every miner's tip reaches the target height. On budget
/// exhaustion the partial report travels inside the error.
pub fn run(sc: &Scenario, stepping: Stepping) -> Result<(World, RunReport), SimError> {
    let mut world = build_world(sc)?;
    let budget = sc.round_budget();
    while world.min_tip_height() < sc.heights {
        if world.round() >= budget {
            let partial = collect(&world, sc);
            return Err(SimError::Timeout {
                rounds: budget,
                partial: Box::new(partial),
            });
        }
        step(&mut world, stepping);
    }
    let report = collect(&world, sc);
    Ok((world, report))
}
