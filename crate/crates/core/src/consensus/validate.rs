//! Block validation over one miner's local view.
//!
//! A verdict is `Pending` when the view lacks something that will arrive
//! later (a referenced block, a model that still has to be fetched, or a
//! dataset that is not yet published). Valid and invalid verdicts are final
//! and are memoised per block digest.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::Rules;
use crate::chain::{keyblock_payload, merkle_root, BlockStore, EnsembleBlock, KeyBlock, MiniBlock, TaskBook};
use crate::codec::Encode;
use crate::ml::{accuracy, aggregate, Accuracy, Dataset, DecisionTree};
use crate::{HashDigest, NodeId, Round};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rejection {
    UnknownTask,
    WrongHeightOrTask,
    LateMiniBlock,
    OwnershipMismatch,
    MalformedModel,
    Underperforming,
    EmptyEnsemble,
    DuplicateReference,
    PrehashMismatch,
    DuplicateModel,
    MetricVMismatch,
    MetricBelowFloor,
    TaskQueueMismatch,
    ProofOfWork,
    UnsortedEntries,
    MetricBestMismatch,
    MerkleRootMismatch,
    MetricEMismatch,
    ParentVoteMismatch,
    PayloadMismatch,
}

impl Rejection {
    pub fn code(self) -> &'static str {
        match self {
            Rejection::UnknownTask => "unknown-task",
            Rejection::WrongHeightOrTask => "wrong-height-or-task",
            Rejection::LateMiniBlock => "late-miniblock",
            Rejection::OwnershipMismatch => "ownership-mismatch",
            Rejection::MalformedModel => "malformed-model",
            Rejection::Underperforming => "underperforming",
            Rejection::EmptyEnsemble => "empty-ensemble",
            Rejection::DuplicateReference => "duplicate-reference",
            Rejection::PrehashMismatch => "prehash-mismatch",
            Rejection::DuplicateModel => "duplicate-model",
            Rejection::MetricVMismatch => "metric-v-mismatch",
            Rejection::MetricBelowFloor => "metric-below-floor",
            Rejection::TaskQueueMismatch => "task-queue-mismatch",
            Rejection::ProofOfWork => "proof-of-work",
            Rejection::UnsortedEntries => "unsorted-entries",
            Rejection::MetricBestMismatch => "metric-best-mismatch",
            Rejection::MerkleRootMismatch => "merkle-root-mismatch",
            Rejection::MetricEMismatch => "metric-e-mismatch",
            Rejection::ParentVoteMismatch => "parent-vote-mismatch",
            Rejection::PayloadMismatch => "payload-mismatch",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Missing {
    KeyBlock(HashDigest),
    Ensemble(HashDigest),
    MiniBlock(HashDigest),
    /// Parameters behind the MiniBlock with this digest.
    Model(HashDigest),
    Validation(HashDigest),
    Test(HashDigest),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(Rejection),
    Pending(Vec<Missing>),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }

    pub fn is_final(&self) -> bool {
        !matches!(self, Verdict::Pending(_))
    }
}

/// Datasets a miner has received for one task.
#[derive(Clone, Debug, Default)]
pub struct Disclosure {
    pub public: Option<Arc<Dataset>>,
    /// `D_V` and the publication timestamp `t1`.
    pub validation: Option<(Arc<Dataset>, Round)>,
    pub test: Option<Arc<Dataset>>,
}

/// Cached final verdicts and per-model predictions.
#[derive(Clone, Debug, Default)]
pub struct Memo {
    miniblocks: BTreeMap<HashDigest, Verdict>,
    ensembles: BTreeMap<HashDigest, Verdict>,
    metric_e: BTreeMap<HashDigest, Accuracy>,
    predictions: BTreeMap<(HashDigest, bool), Arc<Vec<u32>>>,
}

impl Memo {
    pub fn miniblock_verdict(&self, digest: &HashDigest) -> Option<&Verdict> {
        self.miniblocks.get(digest)
    }

    pub fn ensemble_verdict(&self, digest: &HashDigest) -> Option<&Verdict> {
        self.ensembles.get(digest)
    }
}

type Check<T = ()> = Result<T, Verdict>;

fn reject<T>(r: Rejection) -> Check<T> {
    Err(Verdict::Invalid(r))
}

fn pending_or<T>(missing: Vec<Missing>, value: T) -> Check<T> {
    if missing.is_empty() {
        Ok(value)
    } else {
        Err(Verdict::Pending(missing))
    }
}

/// Plurality of MiniBlock parent votes; ties go to the smaller digest.
pub fn prehash_vote<'a>(prehashes: impl IntoIterator<Item = &'a HashDigest>) -> Option<HashDigest> {
    let mut votes: BTreeMap<HashDigest, usize> = BTreeMap::new();
    for p in prehashes {
        *votes.entry(*p).or_default() += 1;
    }
    // iteration is ascending by digest, so `>` keeps the smallest on ties
    let mut best: Option<(HashDigest, usize)> = None;
    for (digest, count) in votes {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((digest, count));
        }
    }
    best.map(|(d, _)| d)
}

/// Read-only view of one miner's knowledge plus its memo.
pub struct Validator<'a> {
    pub store: &'a BlockStore,
    pub tasks: &'a TaskBook,
    pub models: &'a BTreeMap<HashDigest, Arc<DecisionTree>>,
    pub disclosed: &'a BTreeMap<HashDigest, Disclosure>,
    pub rules: &'a Rules,
    pub memo: &'a mut Memo,
}

impl Validator<'_> {
    fn validation_set(&self, task_id: &HashDigest) -> Option<(Arc<Dataset>, Round)> {
        self.disclosed.get(task_id).and_then(|d| d.validation.clone())
    }

    fn test_set(&self, task_id: &HashDigest) -> Option<Arc<Dataset>> {
        self.disclosed.get(task_id).and_then(|d| d.test.clone())
    }

    fn predictions(&mut self, mb: HashDigest, tree: &DecisionTree, data: &Dataset, test: bool) -> Arc<Vec<u32>> {
        self.memo
            .predictions
            .entry((mb, test))
            .or_insert_with(|| Arc::new(tree.predict(data)))
            .clone()
    }

    /// Accuracy of the majority vote of the models behind `miniblocks`.
    fn ensemble_accuracy(&mut self, miniblocks: &[HashDigest], data: &Dataset, test: bool) -> Accuracy {
        let preds: Vec<Arc<Vec<u32>>> = miniblocks
            .iter()
            .map(|d| {
                let tree = self.models[d].clone();
                self.predictions(*d, &tree, data, test)
            })
            .collect();
        let views: Vec<&[u32]> = preds.iter().map(|p| p.as_slice()).collect();
        let voted = aggregate(&views, data.n_classes()).expect("shapes checked during MiniBlock validation");
        accuracy(&voted, data.labels()).expect("non-empty dataset")
    }

    pub fn validate_miniblock(&mut self, mb: &MiniBlock) -> Verdict {
        let digest = mb.digest();
        if let Some(v) = self.memo.miniblocks.get(&digest) {
            return v.clone();
        }
        let verdict = self.check_miniblock(mb, digest).err().unwrap_or(Verdict::Valid);
        if verdict.is_final() {
            self.memo.miniblocks.insert(digest, verdict.clone());
        }
        verdict
    }

    fn check_miniblock(&mut self, mb: &MiniBlock, digest: HashDigest) -> Check {
        let Some(pos) = self.tasks.position(&mb.task_id) else {
            return reject(Rejection::UnknownTask);
        };
        if mb.height != pos as u64 + 1 {
            return reject(Rejection::WrongHeightOrTask);
        }
        let task = self.tasks.get(&mb.task_id).expect("position implies presence").clone();
        let mut missing = Vec::new();
        match self.store.keyblock(&mb.prehash) {
            Some(parent) if parent.height + 1 != mb.height => return reject(Rejection::WrongHeightOrTask),
            Some(_) => {}
            None => missing.push(Missing::KeyBlock(mb.prehash)),
        }
        let validation = self.validation_set(&mb.task_id);
        match &validation {
            Some((_, published)) if mb.timestamp >= *published => return reject(Rejection::LateMiniBlock),
            Some(_) => {}
            None => missing.push(Missing::Validation(mb.task_id)),
        }
        let tree = self.models.get(&digest).cloned();
        match &tree {
            Some(tree) => {
                if crate::ml::model_hash_of(tree, mb.miner) != mb.model_hash {
                    return reject(Rejection::OwnershipMismatch);
                }
                if tree.depth() > task.tree_params().max_depth {
                    return reject(Rejection::MalformedModel);
                }
            }
            None => missing.push(Missing::Model(digest)),
        }
        pending_or(missing, ())?;
        let (dv, _) = validation.expect("checked above");
        let tree = tree.expect("checked above");
        if tree.n_features() as usize != dv.n_features() || tree.n_classes() != dv.n_classes() {
            return reject(Rejection::MalformedModel);
        }
        let preds = self.predictions(digest, &tree, &dv, false);
        let acc = accuracy(&preds, dv.labels()).expect("non-empty validation set");
        if !task.metric_min.is_exceeded_by(acc) {
            return reject(Rejection::Underperforming);
        }
        Ok(())
    }

    pub fn validate_ensemble(&mut self, eb: &EnsembleBlock) -> Verdict {
        let digest = eb.digest();
        if let Some(v) = self.memo.ensembles.get(&digest) {
            return v.clone();
        }
        let verdict = self.check_ensemble(eb).err().unwrap_or(Verdict::Valid);
        if verdict.is_final() {
            self.memo.ensembles.insert(digest, verdict.clone());
        }
        verdict
    }

    fn check_ensemble(&mut self, eb: &EnsembleBlock) -> Check {
        let Some(pos) = self.tasks.position(&eb.task_id) else {
            return reject(Rejection::UnknownTask);
        };
        if eb.height != pos as u64 + 1 {
            return reject(Rejection::WrongHeightOrTask);
        }
        if eb.miniblocks.is_empty() {
            return reject(Rejection::EmptyEnsemble);
        }
        if eb.miniblocks.iter().collect::<BTreeSet<_>>().len() != eb.miniblocks.len() {
            return reject(Rejection::DuplicateReference);
        }
        let mut missing = Vec::new();
        let mut prehashes = BTreeSet::new();
        for d in &eb.miniblocks {
            let Some(mb) = self.store.miniblock(d).cloned() else {
                missing.push(Missing::MiniBlock(*d));
                continue;
            };
            if mb.height != eb.height || mb.task_id != eb.task_id {
                return reject(Rejection::WrongHeightOrTask);
            }
            prehashes.insert(mb.prehash);
            match self.validate_miniblock(&mb) {
                Verdict::Valid => {}
                Verdict::Invalid(r) => return reject(r),
                Verdict::Pending(m) => missing.extend(m),
            }
        }
        if !self.rules.cfs && prehashes.len() > 1 {
            return reject(Rejection::PrehashMismatch);
        }
        pending_or(missing, ())?;
        let mut params = BTreeSet::new();
        for d in &eb.miniblocks {
            if !params.insert(self.models[d].digest()) {
                return reject(Rejection::DuplicateModel);
            }
        }
        let (dv, _) = self
            .validation_set(&eb.task_id)
            .expect("MiniBlocks validated against it");
        let metric = self.ensemble_accuracy(&eb.miniblocks, &dv, false);
        if metric != eb.metric_v {
            return reject(Rejection::MetricVMismatch);
        }
        let task = self.tasks.get(&eb.task_id).expect("checked above");
        if !task.metric_min.is_exceeded_by(metric) {
            return reject(Rejection::MetricBelowFloor);
        }
        Ok(())
    }

    /// `Metric_E` of a valid Ensemble Block, or what is missing to compute it.
    pub fn ensemble_test_metric(&mut self, eb: &EnsembleBlock) -> Result<Accuracy, Verdict> {
        let digest = eb.digest();
        if let Some(m) = self.memo.metric_e.get(&digest) {
            return Ok(*m);
        }
        match self.validate_ensemble(eb) {
            Verdict::Valid => {}
            other => return Err(other),
        }
        let Some(de) = self.test_set(&eb.task_id) else {
            return Err(Verdict::Pending(alloc::vec![Missing::Test(eb.task_id)]));
        };
        let metric = self.ensemble_accuracy(&eb.miniblocks, &de, true);
        self.memo.metric_e.insert(digest, metric);
        Ok(metric)
    }

    /// Parent shared by all MiniBlocks of `eb`, if there is exactly one.
    pub fn common_prehash(&self, eb: &EnsembleBlock) -> Option<HashDigest> {
        let mut parents = eb
            .miniblocks
            .iter()
            .filter_map(|d| self.store.miniblock(d))
            .map(|mb| mb.prehash);
        let first = parents.next()?;
        parents.all(|p| p == first).then_some(first)
    }

    /// Producers and parent votes of the MiniBlocks behind `eb`.
    pub fn producers_and_votes(&self, eb: &EnsembleBlock) -> (Vec<NodeId>, Option<HashDigest>) {
        let mbs: Vec<&Arc<MiniBlock>> = eb.miniblocks.iter().filter_map(|d| self.store.miniblock(d)).collect();
        let producers = mbs.iter().map(|mb| mb.miner).collect();
        let vote = prehash_vote(mbs.iter().map(|mb| &mb.prehash));
        (producers, vote)
    }

    pub fn validate_keyblock(&mut self, kb: &KeyBlock) -> Verdict {
        self.check_keyblock(kb).err().unwrap_or(Verdict::Valid)
    }

    fn check_keyblock(&mut self, kb: &KeyBlock) -> Check {
        if kb.is_genesis() {
            return reject(Rejection::WrongHeightOrTask);
        }
        let Some(parent) = self.store.keyblock(&kb.prehash).cloned() else {
            return Err(Verdict::Pending(alloc::vec![Missing::KeyBlock(kb.prehash)]));
        };
        if parent.height + 1 != kb.height {
            return reject(Rejection::WrongHeightOrTask);
        }
        if parent.task_queue.first() != Some(&kb.task_id) {
            return reject(Rejection::TaskQueueMismatch);
        }
        match self.tasks.next_queue(&parent.task_queue) {
            Ok(Some(queue)) if queue == kb.task_queue => {}
            _ => return reject(Rejection::TaskQueueMismatch),
        }
        if !self.rules.target.is_met_by(&kb.hash()) {
            return reject(Rejection::ProofOfWork);
        }
        if kb.eb_entries.windows(2).any(|w| w[0].metric_e < w[1].metric_e) {
            return reject(Rejection::UnsortedEntries);
        }
        if kb.eb_entries.iter().map(|e| e.ensemble).collect::<BTreeSet<_>>().len() != kb.eb_entries.len() {
            return reject(Rejection::DuplicateReference);
        }
        let best = kb.eb_entries.first().map_or(Accuracy::ZERO, |e| e.metric_e);
        if kb.metric_best != best {
            return reject(Rejection::MetricBestMismatch);
        }
        if kb.merkle_root != merkle_root(&kb.payload) {
            return reject(Rejection::MerkleRootMismatch);
        }
        let mut missing = Vec::new();
        for entry in &kb.eb_entries {
            let Some(eb) = self.store.ensemble(&entry.ensemble).cloned() else {
                missing.push(Missing::Ensemble(entry.ensemble));
                continue;
            };
            if eb.height != kb.height || eb.task_id != kb.task_id {
                return reject(Rejection::WrongHeightOrTask);
            }
            match self.ensemble_test_metric(&eb) {
                Ok(metric) if metric != entry.metric_e => return reject(Rejection::MetricEMismatch),
                Ok(_) => {}
                Err(Verdict::Invalid(r)) => return reject(r),
                Err(Verdict::Pending(m)) => missing.extend(m),
                Err(Verdict::Valid) => unreachable!("valid ensembles yield a metric"),
            }
            if !self.rules.cfs && self.common_prehash(&eb).is_some_and(|p| p != kb.prehash) {
                return reject(Rejection::PrehashMismatch);
            }
        }
        pending_or(missing, ())?;
        let task = self.tasks.get(&kb.task_id).expect("queue head is a known task");
        let producers = match kb.eb_entries.first() {
            Some(entry) => {
                let eb = self.store.ensemble(&entry.ensemble).expect("checked above").clone();
                let (producers, vote) = self.producers_and_votes(&eb);
                if vote != Some(kb.prehash) {
                    return reject(Rejection::ParentVoteMismatch);
                }
                producers
            }
            None => Vec::new(),
        };
        if kb.payload != keyblock_payload(task.fee, &producers, kb.miner, self.rules.keyblock_reward) {
            return reject(Rejection::PayloadMismatch);
        }
        Ok(())
    }
}
