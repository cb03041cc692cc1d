#![allow(dead_code)]

use std::sync::Arc;

use bagchain_core::chain::MiniBlock;
use bagchain_core::codec::Encode;
use bagchain_core::consensus::{DatasetKind, Rules, Strategy};
use bagchain_core::ml::{synthesize_dataset, DecisionTree, Heterogeneity, MetricFloor, TreeParams};
use bagchain_core::netsim::Topology;
use bagchain_core::world::{build_workload, NetParams, WorkloadSpec, World, WorldConfig};
use bagchain_core::{HashDigest, Height, NodeId, Round, Target};

pub struct Setup {
    pub strategies: Vec<Strategy>,
    pub cfs: bool,
    pub seed: u64,
    pub metric_min: f64,
    pub topology: Option<Topology>,
}

impl Setup {
    pub fn honest(n: usize, cfs: bool, seed: u64) -> Self {
        Setup {
            strategies: vec![Strategy::Honest; n],
            cfs,
            seed,
            metric_min: 0.0,
            topology: None,
        }
    }

    pub fn build(self) -> World {
        let n = self.strategies.len();
        let source = synthesize_dataset(3000, 6, 3, 1.2, self.seed).unwrap();
        let spec = WorkloadSpec {
            miners: n,
            holdout: 0.3,
            kappa: 0.1,
            zeta: 0.08,
            partitions: n,
            heterogeneity: Heterogeneity::Iid,
            learner: TreeParams {
                max_depth: 6,
                min_leaf: 3,
            },
            metric_min: MetricFloor::from_fraction(self.metric_min).unwrap(),
            fee: 100,
            tasks: 12,
            seed: self.seed,
        };
        let (tasks, data) = build_workload(&source, &spec, NodeId(n as u32)).unwrap();
        let rules = Rules {
            cfs: self.cfs,
            target: Target::pow2_minus_one(250),
            hash_trials: 4,
            keyblock_reward: 10,
            ensemble_wait: 20,
            fetch_retry: 3,
            seed: self.seed,
            requester: NodeId(0),
            gossip: false,
        };
        let config = WorldConfig {
            strategies: self.strategies,
            rules,
            net: NetParams::default(),
            phase1: 10,
            phase2: 10,
        };
        let topology = self
            .topology
            .unwrap_or_else(|| Topology::fully_connected(n, 1.0).unwrap());
        World::new(topology, config, tasks, data, 3).unwrap()
    }
}

/// Steps until every miner's tip reaches `height`.
pub fn run_until(w: &mut World, height: Height) {
    while w.min_tip_height() < height {
        assert!(w.round() < 20_000, "stalled at round {}", w.round());
        w.step();
    }
}

/// `D_V` publication round for `height`.
pub fn t1(w: &World, height: Height) -> Option<Round> {
    w.publications().get(&(height, DatasetKind::Validation)).copied()
}

/// Logged MiniBlocks that carry their own trained model, with that model.
pub fn trained(w: &World) -> Vec<(Arc<MiniBlock>, Arc<DecisionTree>)> {
    w.log()
        .miniblocks
        .iter()
        .filter_map(|(_, mb, model)| {
            let model = model.as_ref()?;
            (model.model_hash() == mb.model_hash).then(|| (mb.clone(), Arc::new(model.tree.clone())))
        })
        .collect()
}

pub fn models_by_digest(w: &World) -> Vec<(HashDigest, Arc<DecisionTree>)> {
    trained(w).into_iter().map(|(mb, t)| (mb.digest(), t)).collect()
}
