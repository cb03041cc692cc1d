//! Block generation as pure functions: base models, MiniBlocks, Ensemble
//! Blocks, ranking and Key Block templates.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::chain::{keyblock_payload, EbEntry, EnsembleBlock, KeyBlock, MiniBlock, Task, TaskBook};
use crate::hash::HashPrefix;
use crate::ml::{
    accuracy, aggregate, resample, train, Accuracy, Dataset, DatasetRole, DecisionTree, MlError, TrainedModel,
};
use crate::{HashDigest, Height, NodeId, Round, Target};

/// `Train(Resample(D_T ∪ D_{M_i}); f)`.
pub fn train_base_model(
    public: &Dataset,
    private: &Dataset,
    task: &Task,
    seed: u64,
    owner: NodeId,
) -> Result<TrainedModel, MlError> {
    let local = if private.is_empty() {
        public.clone()
    } else {
        public.concat(private, DatasetRole::PublicTrain)?
    };
    let sample = resample(&local, seed)?;
    Ok(TrainedModel::new(train(&sample, &task.tree_params())?, owner))
}

pub fn generate_miniblock(
    model: &TrainedModel,
    task_id: HashDigest,
    height: Height,
    parent: HashDigest,
    timestamp: Round,
) -> MiniBlock {
    MiniBlock {
        timestamp,
        miner: model.owner,
        task_id,
        model_hash: model.model_hash(),
        prehash: parent,
        height,
    }
}

/// A MiniBlock that already passed validation, with `Hash(ω)` of its model.
#[derive(Clone, Copy, Debug)]
pub struct Candidate<'a> {
    pub digest: HashDigest,
    pub block: &'a MiniBlock,
    pub params: HashDigest,
}

/// MiniBlocks an Ensemble Block may reference. Without CFS only those on the
/// local tip qualify; with CFS any fork does, one per distinct `Hash(ω)`
/// (the smallest MiniBlock digest is kept). Output is sorted by digest.
pub fn select_miniblocks(candidates: &[Candidate<'_>], tip: &HashDigest, cfs: bool) -> Vec<HashDigest> {
    let mut sorted: Vec<&Candidate<'_>> = candidates.iter().filter(|c| cfs || c.block.prehash == *tip).collect();
    sorted.sort_by_key(|c| c.digest);
    let mut seen = BTreeSet::new();
    sorted
        .into_iter()
        .filter(|c| seen.insert(c.params))
        .map(|c| c.digest)
        .collect()
}

/// `Metric(Aggregate(f(X; ω_1), …), y)`.
pub fn ensemble_metric(trees: &[&DecisionTree], data: &Dataset) -> Result<Accuracy, MlError> {
    let preds: Vec<Vec<u32>> = trees.iter().map(|t| t.predict(data)).collect();
    let views: Vec<&[u32]> = preds.iter().map(Vec::as_slice).collect();
    accuracy(&aggregate(&views, data.n_classes())?, data.labels())
}

pub fn generate_ensembleblock(
    miniblocks: Vec<HashDigest>,
    metric_v: Accuracy,
    miner: NodeId,
    task_id: HashDigest,
    height: Height,
    timestamp: Round,
) -> EnsembleBlock {
    EnsembleBlock {
        miniblocks,
        metric_v,
        miner,
        task_id,
        timestamp,
        height,
    }
}

/// Sorts by `Metric_E` descending, ties by Ensemble Block digest.
pub fn rank_entries(mut entries: Vec<EbEntry>) -> Vec<EbEntry> {
    entries.sort_by(|a, b| b.metric_e.cmp(&a.metric_e).then(a.ensemble.cmp(&b.ensemble)));
    entries
}

/// Key Block template with nonce 0; `None` once the task pool is exhausted.
#[allow(clippy::too_many_arguments)]
pub fn assemble_keyblock(
    parent: &KeyBlock,
    parent_digest: HashDigest,
    entries: Vec<EbEntry>,
    winning_producers: &[NodeId],
    task: &Task,
    tasks: &TaskBook,
    miner: NodeId,
    reward: u64,
) -> Option<KeyBlock> {
    let task_queue = tasks.next_queue(&parent.task_queue).ok()??;
    let mut kb = KeyBlock {
        nonce: 0,
        merkle_root: HashDigest::ZERO,
        timestamp: 0,
        metric_best: entries.first().map_or(Accuracy::ZERO, |e| e.metric_e),
        eb_entries: entries,
        miner,
        task_id: *parent.task_queue.first()?,
        task_queue,
        prehash: parent_digest,
        height: parent.height + 1,
        payload: keyblock_payload(task.fee, winning_producers, miner, reward),
    };
    kb.seal_payload();
    Some(kb)
}

/// Up to `trials` nonce attempts at `timestamp`. Leaves the winning nonce in
/// `kb` on success.
pub fn try_nonces(kb: &mut KeyBlock, target: &Target, timestamp: Round, first_nonce: u64, trials: u32) -> bool {
    let prefix = kb.header_prefix();
    try_nonces_with(&prefix, kb, target, timestamp, first_nonce, trials)
}

/// [`try_nonces`] with the header prefix of `kb` already hashed.
pub fn try_nonces_with(
    prefix: &HashPrefix,
    kb: &mut KeyBlock,
    target: &Target,
    timestamp: Round,
    first_nonce: u64,
    trials: u32,
) -> bool {
    kb.timestamp = timestamp;
    for i in 0..u64::from(trials) {
        kb.nonce = first_nonce.wrapping_add(i);
        if target.is_met_by(&kb.hash_with(prefix)) {
            return true;
        }
    }
    false
}
