//! Round stepper tying miners, the requester and the network together.
//!
//! Each round delivers due messages, lets the requester act, steps every
//! miner, and finally merges miner outputs in ID order. Miner steps only
//! touch their own state, so callers may run them in parallel through
//! [`World::step_with`] and get the same result as [`World::step`].

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chain::{
    AggregateRule, ChainError, EnsembleBlock, KeyBlock, LearnerSpec, MetricRule, MiniBlock, Task, TaskBook,
};
use crate::consensus::{
    DatasetKind, Event, FetchReply, Message, MinerState, Outgoing, Rejection, RequesterState, Rules, StepOutput,
    Strategy, TaskData,
};
use crate::hash::derive_seed;
use crate::ml::{
    assign_iid_parts, split_dirichlet, split_holdout, split_iid, Dataset, DatasetRole, Heterogeneity, MetricFloor,
    MlError, SplitPlan, TrainedModel, TreeParams,
};
use crate::netsim::{Cost, Envelope, Network, Topology, TopologyError};
use crate::{Height, NodeId, Round};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

/// Object sizes in data units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeModel {
    pub miniblock: f64,
    pub ensemble: f64,
    pub keyblock: f64,
    pub model: f64,
    /// Cost of one dataset row in transfers of `D_T`, `D_V` and `D_E`.
    pub per_sample: f64,
}

impl Default for SizeModel {
    fn default() -> Self {
        SizeModel {
            miniblock: 2.0,
            ensemble: 2.0,
            keyblock: 6.0,
            model: 2.0,
            per_sample: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetParams {
    pub sizes: SizeModel,
    /// Rounds per link for Key Blocks, replacing the size-based delay.
    pub keyblock_delay: Option<Round>,
    /// Bandwidth of the requester's direct links to every miner.
    pub requester_bandwidth: f64,
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams {
            sizes: SizeModel::default(),
            keyblock_delay: None,
            requester_bandwidth: 0.5,
        }
    }
}

/// How the source dataset becomes per-task datasets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub miners: usize,
    /// Fraction of the source held out for `D_V ∪ D_E`.
    pub holdout: f64,
    pub kappa: f64,
    pub zeta: f64,
    pub partitions: usize,
    pub heterogeneity: Heterogeneity,
    pub learner: TreeParams,
    pub metric_min: MetricFloor,
    pub fee: u64,
    pub tasks: usize,
    pub seed: u64,
}

/// Splits the source afresh for every task with a task-specific seed: a
/// held-out part becomes `D_V`/`D_E`, the rest is split into `D_T` and the
/// private shares.
pub fn build_workload(
    source: &Dataset,
    spec: &WorkloadSpec,
    requester: NodeId,
) -> Result<(Vec<Task>, Vec<TaskData>), WorldError> {
    if !(spec.holdout > 0.0 && spec.holdout < 1.0) {
        return Err(WorldError::Config("holdout must lie in (0, 1)"));
    }
    if spec.miners == 0 {
        return Err(WorldError::Config("at least one miner is required"));
    }
    let mut tasks = Vec::with_capacity(spec.tasks);
    let mut data = Vec::with_capacity(spec.tasks);
    for t in 0..spec.tasks {
        let seed = derive_seed("task", &[spec.seed, t as u64]);
        let mut rows: Vec<usize> = (0..source.len()).collect();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let held_len = libm::floor(spec.holdout * source.len() as f64) as usize;
        let held = source.subset(&rows[..held_len], DatasetRole::Source);
        let train_full = source.subset(&rows[held_len..], DatasetRole::Source);
        let (validation, test) = split_holdout(&held, seed)?;
        let plan = SplitPlan {
            kappa: spec.kappa,
            zeta: spec.zeta,
            partitions: spec.partitions,
            heterogeneity: spec.heterogeneity,
            seed,
        };
        let (public, private) = match spec.heterogeneity {
            Heterogeneity::Iid => {
                let (public, parts) = split_iid(&train_full, &plan)?;
                let empty = Arc::new(Dataset::empty(
                    source.n_features(),
                    source.n_classes(),
                    DatasetRole::Private,
                ));
                let parts: Vec<Arc<Dataset>> = parts.into_iter().map(Arc::new).collect();
                let private = assign_iid_parts(spec.partitions, spec.miners, seed)
                    .into_iter()
                    .map(|p| p.map_or_else(|| empty.clone(), |i| parts[i].clone()))
                    .collect();
                (public, private)
            }
            Heterogeneity::Dirichlet { .. } => {
                let (public, parts) = split_dirichlet(&train_full, &plan, spec.miners)?;
                (public, parts.into_iter().map(Arc::new).collect())
            }
        };
        tasks.push(Task {
            train_commit: public.commitment(),
            val_commit: validation.commitment(),
            test_commit: test.commitment(),
            learner: LearnerSpec::Cart(spec.learner),
            aggregate: AggregateRule::MajorityVote,
            metric: MetricRule::Accuracy,
            metric_min: spec.metric_min,
            fee: spec.fee,
            requester,
        });
        data.push(TaskData {
            public: Arc::new(public),
            private,
            validation: Arc::new(validation),
            test: Arc::new(test),
        });
    }
    Ok((tasks, data))
}

/// Everything the simulator observed, for metrics.
#[derive(Clone, Debug, Default)]
pub struct WorldLog {
    pub keyblocks: Vec<(Round, Arc<KeyBlock>)>,
    pub miniblocks: Vec<(Round, Arc<MiniBlock>, Option<Arc<TrainedModel>>)>,
    pub ensembles: Vec<(Round, Arc<EnsembleBlock>)>,
    /// Earliest round any miner accepted a Key Block at each height.
    pub first_accept: BTreeMap<Height, Round>,
    pub rejections: BTreeMap<Rejection, u64>,
    pub abstentions: u64,
    pub messages: u64,
}

pub struct WorldConfig {
    pub strategies: Vec<Strategy>,
    pub rules: Rules,
    pub net: NetParams,
    pub phase1: Round,
    pub phase2: Round,
}

pub struct World {
    round: Round,
    network: Network<Message>,
    miners: Vec<MinerState>,
    requester: RequesterState,
    tasks: Arc<TaskBook>,
    genesis: Arc<KeyBlock>,
    net: NetParams,
    log: WorldLog,
}

impl World {
    /// `rules.requester` is overwritten with the hub ID (the first ID after
    /// the miners) and `rules.gossip` is enabled on incomplete topologies.
    pub fn new(
        topology: Topology,
        mut config: WorldConfig,
        tasks: Vec<Task>,
        data: Vec<TaskData>,
        queue_len: usize,
    ) -> Result<Self, WorldError> {
        let n = topology.len();
        if config.strategies.len() != n {
            return Err(WorldError::Config("one strategy per miner is required"));
        }
        if data.iter().any(|d| d.private.len() != n) {
            return Err(WorldError::Config("one private share per miner is required"));
        }
        if config.rules.hash_trials == 0 {
            return Err(WorldError::Config("hash trials must be at least 1"));
        }
        let network = Network::new(topology, config.net.requester_bandwidth)?;
        config.rules.requester = network.hub();
        config.rules.gossip = !network.topology().is_complete();
        let tasks = Arc::new(TaskBook::new(tasks, queue_len)?);
        let genesis = Arc::new(KeyBlock::genesis(tasks.genesis_queue()));
        let rules = Arc::new(config.rules);
        let miners = (0..n)
            .map(|i| {
                let private = data.iter().map(|d| d.private[i].clone()).collect();
                MinerState::new(
                    NodeId(i as u32),
                    config.strategies[i],
                    rules.clone(),
                    tasks.clone(),
                    private,
                    genesis.clone(),
                )
            })
            .collect();
        let requester = RequesterState::new(
            network.hub(),
            tasks.clone(),
            Arc::new(data),
            config.phase1,
            config.phase2,
        );
        let mut log = WorldLog::default();
        log.first_accept.insert(0, 0);
        Ok(World {
            round: 0,
            network,
            miners,
            requester,
            tasks,
            genesis,
            net: config.net,
            log,
        })
    }

    pub fn round(&self) -> Round {
        self.round
    }

    pub fn miners(&self) -> &[MinerState] {
        &self.miners
    }

    pub fn tasks(&self) -> &Arc<TaskBook> {
        &self.tasks
    }

    pub fn genesis(&self) -> &Arc<KeyBlock> {
        &self.genesis
    }

    pub fn task_data(&self) -> &Arc<Vec<TaskData>> {
        self.requester.data()
    }

    pub fn publications(&self) -> &BTreeMap<(Height, DatasetKind), Round> {
        self.requester.published()
    }

    pub fn network(&self) -> &Network<Message> {
        &self.network
    }

    pub fn log(&self) -> &WorldLog {
        &self.log
    }

    fn cost(&self, message: &Message) -> Cost {
        let sizes = &self.net.sizes;
        let rows = |d: &Dataset| sizes.per_sample * d.len() as f64;
        match message {
            Message::MiniBlock(_) => Cost::Size(sizes.miniblock),
            Message::Ensemble(_) => Cost::Size(sizes.ensemble),
            Message::Key(_) => self.net.keyblock_delay.map_or(Cost::Size(sizes.keyblock), Cost::Fixed),
            Message::Publication(p) => Cost::Size(rows(&p.data)),
            Message::Request(_) => Cost::Size(0.0),
            Message::Reply(_, FetchReply::Model(_)) => Cost::Size(sizes.model),
            Message::Reply(_, FetchReply::Dataset(d)) => Cost::Size(rows(d)),
            Message::Reply(_, _) => Cost::Size(0.0),
        }
    }

    fn dispatch(&mut self, source: NodeId, outgoing: Vec<Outgoing>) {
        let round = self.round;
        for o in outgoing {
            self.log.messages += 1;
            match o {
                Outgoing::Broadcast { message, except } => {
                    let cost = self.cost(&message);
                    let digest = message.digest();
                    if source == self.network.hub() {
                        self.network.hub_broadcast(&message, digest, cost, round);
                    } else {
                        self.network.broadcast(source, &message, digest, cost, round, except);
                    }
                }
                Outgoing::Send { to, message } => {
                    let cost = self.cost(&message);
                    let digest = message.digest();
                    self.network.send(source, to, message, digest, cost, round);
                }
            }
        }
    }

    fn record(&mut self, events: Vec<Event>) {
        let round = self.round;
        for e in events {
            match e {
                Event::MiniBlock { block, model } => self.log.miniblocks.push((round, block, model)),
                Event::Ensemble(eb) => self.log.ensembles.push((round, eb)),
                Event::Abstained { .. } => self.log.abstentions += 1,
                Event::KeyBlockMined(kb) => self.log.keyblocks.push((round, kb)),
                Event::Accepted { height, .. } => {
                    self.log.first_accept.entry(height).or_insert(round);
                }
                Event::Rejected { reason, .. } => *self.log.rejections.entry(reason).or_default() += 1,
            }
        }
    }

    /// One round with miners stepped serially in ID order.
    pub fn step(&mut self) {
        self.step_with(|miners, inboxes, round| {
            miners
                .iter_mut()
                .zip(inboxes)
                .map(|(m, inbox)| m.step(round, inbox))
                .collect()
        });
    }

    /// One round with a caller-supplied miner executor. `run` must return one
    /// output per miner, in miner order.
    pub fn step_with<F>(&mut self, run: F)
    where
        F: FnOnce(&mut [MinerState], Vec<Vec<Envelope<Message>>>, Round) -> Vec<StepOutput>,
    {
        let round = self.round;
        let hub = self.network.hub();
        let mut inboxes: Vec<Vec<Envelope<Message>>> = vec![Vec::new(); self.miners.len()];
        let mut hub_inbox = Vec::new();
        for env in self.network.deliver(round) {
            if env.dest == hub {
                hub_inbox.push(env);
            } else {
                inboxes[env.dest.index()].push(env);
            }
        }
        let out = self.requester.step(round, hub_inbox, &self.log.first_accept);
        self.dispatch(hub, out);
        let outputs = run(&mut self.miners, inboxes, round);
        assert_eq!(outputs.len(), self.miners.len(), "one step output per miner");
        for (i, output) in outputs.into_iter().enumerate() {
            self.record(output.events);
            self.dispatch(NodeId(i as u32), output.outgoing);
        }
        self.round += 1;
    }

    /// Lowest tip height over all miners.
    pub fn min_tip_height(&self) -> Height {
        self.miners.iter().map(MinerState::tip_height).min().unwrap_or(0)
    }
}
