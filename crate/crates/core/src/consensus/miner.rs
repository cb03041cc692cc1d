use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::generate::{
    assemble_keyblock, ensemble_metric, generate_ensembleblock, generate_miniblock, rank_entries, select_miniblocks,
    train_base_model, try_nonces_with, Candidate,
};
use super::message::{DatasetKind, FetchItem, FetchReply, Message};
use super::validate::{Disclosure, Memo, Missing, Rejection, Validator, Verdict};
use super::{Event, Outgoing, Rules, StepOutput};
use crate::chain::{BlockStore, EbEntry, KeyBlock, MiniBlock, TaskBook};
use crate::codec::Encode;
use crate::hash::{derive_seed, HashPrefix};
use crate::ml::{Accuracy, Dataset, DatasetRole, DecisionTree, TrainedModel};
use crate::netsim::Envelope;
use crate::{HashDigest, Height, NodeId, Round};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Honest,
    /// Copies another miner's `ModelHash` into its own MiniBlock instead of
    /// training.
    Plagiarist,
    /// Overstates `Metric_V` in its Ensemble Blocks.
    MetricInflater,
    /// Publishes MiniBlocks but never releases the models.
    Withholder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Training base models; waiting for `D_V`.
    One,
    /// `D_V` is out; building the Ensemble Block.
    Two,
    /// `D_E` is out; ranking Ensemble Blocks and mining.
    Three,
}

#[derive(Clone, Debug)]
enum OwnModel {
    Trained(Arc<TrainedModel>),
    /// A plagiarised MiniBlock pointing at the victim's MiniBlock.
    Copied(HashDigest),
}

#[derive(Clone, Debug)]
struct OwnMiniBlock {
    task_id: HashDigest,
    model: OwnModel,
}

#[derive(Clone, Debug)]
struct Draft {
    parent: HashDigest,
    entries: Vec<HashDigest>,
    block: KeyBlock,
    prefix: HashPrefix,
}

/// One miner's protocol state. Mutated only by its own [`MinerState::step`].
#[derive(Clone, Debug)]
pub struct MinerState {
    id: NodeId,
    strategy: Strategy,
    rules: Arc<Rules>,
    tasks: Arc<TaskBook>,
    /// This miner's private data per task index.
    private: Vec<Arc<Dataset>>,
    store: BlockStore,
    models: BTreeMap<HashDigest, Arc<DecisionTree>>,
    disclosed: BTreeMap<HashDigest, Disclosure>,
    memo: Memo,
    seen_keyblocks: BTreeSet<HashDigest>,
    pending_keyblocks: BTreeMap<HashDigest, Arc<KeyBlock>>,
    rejected: BTreeMap<HashDigest, Rejection>,
    in_flight: BTreeSet<FetchItem>,
    retry_at: BTreeMap<FetchItem, Round>,
    tip: HashDigest,
    trained: BTreeMap<Height, Arc<TrainedModel>>,
    own: BTreeMap<HashDigest, OwnMiniBlock>,
    /// Heights this miner has issued its one MiniBlock for.
    miniblock_heights: BTreeSet<Height>,
    ensemble_started: BTreeMap<(Height, HashDigest), Round>,
    ensemble_done: BTreeSet<(Height, HashDigest)>,
    accepted_at: BTreeMap<HashDigest, Round>,
    draft: Option<Draft>,
    dirty: bool,
}

impl MinerState {
    pub fn new(
        id: NodeId,
        strategy: Strategy,
        rules: Arc<Rules>,
        tasks: Arc<TaskBook>,
        private: Vec<Arc<Dataset>>,
        genesis: Arc<KeyBlock>,
    ) -> Self {
        let store = BlockStore::new(genesis);
        let tip = store.genesis();
        let mut accepted_at = BTreeMap::new();
        accepted_at.insert(tip, 0);
        MinerState {
            id,
            strategy,
            rules,
            tasks,
            private,
            store,
            models: BTreeMap::new(),
            disclosed: BTreeMap::new(),
            memo: Memo::default(),
            seen_keyblocks: BTreeSet::from([tip]),
            pending_keyblocks: BTreeMap::new(),
            rejected: BTreeMap::new(),
            in_flight: BTreeSet::new(),
            retry_at: BTreeMap::new(),
            tip,
            trained: BTreeMap::new(),
            own: BTreeMap::new(),
            miniblock_heights: BTreeSet::new(),
            ensemble_started: BTreeMap::new(),
            ensemble_done: BTreeSet::new(),
            accepted_at,
            draft: None,
            dirty: true,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn store(&self) -> &BlockStore {
        &self.store
    }

    pub fn tip(&self) -> HashDigest {
        self.tip
    }

    pub fn tip_height(&self) -> Height {
        self.store.keyblock(&self.tip).map_or(0, |kb| kb.height)
    }

    pub fn rejections(&self) -> &BTreeMap<HashDigest, Rejection> {
        &self.rejected
    }

    /// Round at which this miner accepted the Key Block `digest`.
    pub fn accepted_at(&self, digest: &HashDigest) -> Option<Round> {
        self.accepted_at.get(digest).copied()
    }

    /// Phase for the task at the head of the local tip's queue.
    pub fn phase(&self) -> Phase {
        let task_id = self
            .store
            .keyblock(&self.tip)
            .and_then(|kb| kb.task_queue.first().copied());
        let disclosure = task_id.and_then(|t| self.disclosed.get(&t));
        match disclosure {
            Some(d) if d.test.is_some() => Phase::Three,
            Some(d) if d.validation.is_some() => Phase::Two,
            _ => Phase::One,
        }
    }

    fn validator(&mut self) -> Validator<'_> {
        Validator {
            store: &self.store,
            tasks: &self.tasks,
            models: &self.models,
            disclosed: &self.disclosed,
            rules: &self.rules,
            memo: &mut self.memo,
        }
    }

    /// Validates `block` against a copy of this miner's current view with no
    /// cached verdicts. `extra` blocks join the copy first and `models`
    /// replace fetched parameters, keyed by MiniBlock digest. The state
    /// itself is untouched.
    pub fn judge(&self, block: &Message, extra: &[Message], models: &[(HashDigest, Arc<DecisionTree>)]) -> Verdict {
        let mut store = self.store.clone();
        for m in extra {
            match m {
                Message::MiniBlock(mb) => {
                    store.insert_miniblock(mb.clone());
                }
                Message::Ensemble(eb) => {
                    store.insert_ensemble(eb.clone());
                }
                Message::Key(kb) => {
                    let _ = store.insert_keyblock(kb.clone());
                }
                _ => {}
            }
        }
        let mut fetched = self.models.clone();
        fetched.extend(models.iter().cloned());
        let mut memo = Memo::default();
        let mut v = Validator {
            store: &store,
            tasks: &self.tasks,
            models: &fetched,
            disclosed: &self.disclosed,
            rules: &self.rules,
            memo: &mut memo,
        };
        match block {
            Message::MiniBlock(mb) => v.validate_miniblock(mb),
            Message::Ensemble(eb) => v.validate_ensemble(eb),
            Message::Key(kb) => v.validate_keyblock(kb),
            _ => Verdict::Invalid(Rejection::UnknownTask),
        }
    }

    /// Parameters this miner holds for the MiniBlock `digest`.
    pub fn model(&self, digest: &HashDigest) -> Option<&Arc<DecisionTree>> {
        self.models.get(digest)
    }

    /// Handles this round's deliveries, then advances the local workflow.
    pub fn step(&mut self, round: Round, inbox: Vec<Envelope<Message>>) -> StepOutput {
        let mut out = StepOutput::default();
        for env in inbox {
            self.receive(round, env, &mut out);
        }
        if self.dirty {
            self.settle(round, &mut out);
        }
        self.work(round, &mut out);
        self.dirty = false;
        out
    }

    fn forward(&self, message: Message, from: NodeId, out: &mut StepOutput) {
        if self.rules.gossip {
            out.outgoing.push(Outgoing::Broadcast {
                message,
                except: Some(from),
            });
        }
    }

    fn receive(&mut self, round: Round, env: Envelope<Message>, out: &mut StepOutput) {
        let from = env.source;
        match env.payload {
            Message::MiniBlock(mb) => {
                if self.tasks.position(&mb.task_id).is_some() && self.store.insert_miniblock(mb.clone()) {
                    self.dirty = true;
                    self.forward(Message::MiniBlock(mb), from, out);
                }
            }
            Message::Ensemble(eb) => {
                if self.tasks.position(&eb.task_id).is_some() && self.store.insert_ensemble(eb.clone()) {
                    self.dirty = true;
                    self.forward(Message::Ensemble(eb), from, out);
                }
            }
            Message::Key(kb) => {
                let digest = kb.hash();
                if !kb.is_genesis() && self.seen_keyblocks.insert(digest) {
                    self.dirty = true;
                    self.pending_keyblocks.insert(digest, kb.clone());
                    self.forward(Message::Key(kb), from, out);
                }
            }
            Message::Publication(p) => {
                if p.requester != self.rules.requester {
                    return;
                }
                let entry = self.disclosed.entry(p.task_id).or_default();
                match p.kind {
                    DatasetKind::Validation if entry.validation.is_none() => {
                        entry.validation = Some((p.data.clone(), p.timestamp));
                    }
                    DatasetKind::Test if entry.test.is_none() => entry.test = Some(p.data.clone()),
                    _ => return,
                }
                self.dirty = true;
            }
            Message::Request(item) => {
                let reply = self.answer(item);
                out.outgoing.push(Outgoing::Send {
                    to: from,
                    message: Message::Reply(item, reply),
                });
            }
            Message::Reply(item, reply) => {
                self.in_flight.remove(&item);
                self.dirty = true;
                match (item, reply) {
                    (FetchItem::Model(mb), FetchReply::Model(tree)) => {
                        self.models.insert(mb, tree);
                    }
                    (FetchItem::TrainingSet(task_id), FetchReply::Dataset(data)) => {
                        let expected = self.tasks.get(&task_id).map(|t| t.train_commit);
                        if expected == Some(data.commitment()) {
                            self.disclosed.entry(task_id).or_default().public = Some(data);
                        } else {
                            self.retry_at.insert(item, round + self.rules.fetch_retry);
                        }
                    }
                    _ => {
                        self.retry_at.insert(item, round + self.rules.fetch_retry);
                    }
                }
            }
        }
    }

    /// Models are released once `D_V` of their task is published.
    fn answer(&self, item: FetchItem) -> FetchReply {
        let FetchItem::Model(digest) = item else {
            return FetchReply::NotHeld;
        };
        let Some(own) = self.own.get(&digest) else {
            return FetchReply::NotHeld;
        };
        if self.strategy == Strategy::Withholder {
            return FetchReply::NotHeld;
        }
        let released = self.disclosed.get(&own.task_id).is_some_and(|d| d.validation.is_some());
        if !released {
            return FetchReply::Deferred;
        }
        match &own.model {
            OwnModel::Trained(model) => FetchReply::Model(Arc::new(model.tree.clone())),
            OwnModel::Copied(victim) => match self.models.get(victim) {
                Some(tree) => FetchReply::Model(tree.clone()),
                None => FetchReply::Deferred,
            },
        }
    }

    fn request(&mut self, item: FetchItem, to: NodeId, round: Round, out: &mut StepOutput) {
        if to == self.id || self.in_flight.contains(&item) {
            return;
        }
        if self.retry_at.get(&item).is_some_and(|&at| round < at) {
            return;
        }
        self.retry_at.remove(&item);
        self.in_flight.insert(item);
        out.outgoing.push(Outgoing::Send {
            to,
            message: Message::Request(item),
        });
    }

    /// Reports the first final rejection of each block.
    fn note_rejection(&mut self, digest: HashDigest, reason: Rejection, out: &mut StepOutput) {
        if self.rejected.insert(digest, reason).is_none() {
            out.events.push(Event::Rejected { digest, reason });
        }
    }

    fn fetch_missing(&mut self, missing: &[Missing], round: Round, out: &mut StepOutput) {
        for m in missing {
            if let Missing::Model(mb) = m {
                if let Some(owner) = self.store.miniblock(mb).map(|b| b.miner) {
                    self.request(FetchItem::Model(*mb), owner, round, out);
                }
            }
        }
    }

    /// Validates buffered Key Blocks and re-runs fork choice.
    fn settle(&mut self, round: Round, out: &mut StepOutput) {
        loop {
            let mut progressed = false;
            let ready: Vec<(HashDigest, Arc<KeyBlock>)> = self
                .pending_keyblocks
                .iter()
                .filter(|(_, kb)| self.store.has_keyblock(&kb.prehash))
                .map(|(d, kb)| (*d, kb.clone()))
                .collect();
            for (digest, kb) in ready {
                let verdict = self.validator().validate_keyblock(&kb);
                match verdict {
                    Verdict::Valid => {
                        self.pending_keyblocks.remove(&digest);
                        self.store.insert_keyblock(kb.clone()).expect("parent checked above");
                        self.accepted_at.insert(digest, round);
                        out.events.push(Event::Accepted {
                            height: kb.height,
                            digest,
                        });
                        progressed = true;
                    }
                    Verdict::Invalid(reason) => {
                        self.pending_keyblocks.remove(&digest);
                        self.note_rejection(digest, reason, out);
                    }
                    Verdict::Pending(missing) => self.fetch_missing(&missing, round, out),
                }
            }
            if !progressed {
                break;
            }
        }
        let best = self.store.best_tip();
        if best != self.tip {
            self.tip = best;
            self.draft = None;
        }
    }

    fn work(&mut self, round: Round, out: &mut StepOutput) {
        let tip_kb = self.store.keyblock(&self.tip).expect("tip is stored").clone();
        let Some(&task_id) = tip_kb.task_queue.first() else {
            return;
        };
        let Some(index) = self.tasks.position(&task_id) else {
            return;
        };
        let height = tip_kb.height + 1;
        match self.phase() {
            Phase::One => self.phase_one(round, height, task_id, index, out),
            Phase::Two => {
                self.phase_two(round, height, task_id, out);
            }
            Phase::Three => {
                if self.phase_two(round, height, task_id, out) {
                    self.phase_three(round, &tip_kb, height, task_id, out);
                }
            }
        }
    }

    fn phase_one(&mut self, round: Round, height: Height, task_id: HashDigest, index: usize, out: &mut StepOutput) {
        if self.miniblock_heights.contains(&height) {
            return;
        }
        let Some(public) = self.disclosed.get(&task_id).and_then(|d| d.public.clone()) else {
            self.request(FetchItem::TrainingSet(task_id), self.rules.requester, round, out);
            return;
        };
        let (model_hash, own_model) = match self.strategy {
            Strategy::Plagiarist => {
                let victim = self
                    .store
                    .miniblocks_at(height)
                    .find(|(_, mb)| mb.task_id == task_id && mb.miner != self.id)
                    .map(|(d, mb)| (*d, mb.model_hash));
                let Some((victim, model_hash)) = victim else {
                    return;
                };
                (model_hash, OwnModel::Copied(victim))
            }
            _ => {
                let model = match self.trained.get(&height) {
                    Some(m) => m.clone(),
                    None => {
                        let task = self.tasks.get(&task_id).expect("queue task is known");
                        let seed = derive_seed("bootstrap", &[self.rules.seed, u64::from(self.id.0), height]);
                        let private = self.private.get(index).cloned().unwrap_or_else(|| {
                            Arc::new(Dataset::empty(
                                public.n_features(),
                                public.n_classes(),
                                DatasetRole::Private,
                            ))
                        });
                        let Ok(model) = train_base_model(&public, &private, task, seed, self.id) else {
                            return;
                        };
                        let model = Arc::new(model);
                        self.trained.insert(height, model.clone());
                        model
                    }
                };
                (model.model_hash(), OwnModel::Trained(model))
            }
        };
        let mb = MiniBlock {
            timestamp: round,
            miner: self.id,
            task_id,
            model_hash,
            prehash: self.tip,
            height,
        };
        let digest = mb.digest();
        let model = match &own_model {
            OwnModel::Trained(m) => {
                debug_assert_eq!(generate_miniblock(m, task_id, height, self.tip, round), mb);
                self.models.insert(digest, Arc::new(m.tree.clone()));
                Some(m.clone())
            }
            OwnModel::Copied(_) => None,
        };
        self.own.insert(
            digest,
            OwnMiniBlock {
                task_id,
                model: own_model,
            },
        );
        self.miniblock_heights.insert(height);
        let mb = Arc::new(mb);
        self.store.insert_miniblock(mb.clone());
        self.dirty = true;
        out.events.push(Event::MiniBlock {
            block: mb.clone(),
            model,
        });
        out.outgoing.push(Outgoing::Broadcast {
            message: Message::MiniBlock(mb),
            except: None,
        });
    }

    /// Builds this miner's Ensemble Block once. Returns true when the duty is
    /// resolved (block sent or abstained).
    fn phase_two(&mut self, round: Round, height: Height, task_id: HashDigest, out: &mut StepOutput) -> bool {
        let key = (height, if self.rules.cfs { HashDigest::ZERO } else { self.tip });
        if self.ensemble_done.contains(&key) {
            return true;
        }
        let started = *self.ensemble_started.entry(key).or_insert(round);
        if self.strategy == Strategy::Plagiarist {
            let victims: Vec<(HashDigest, NodeId)> = self
                .own
                .values()
                .filter_map(|o| match o.model {
                    OwnModel::Copied(v) if o.task_id == task_id && !self.models.contains_key(&v) => {
                        self.store.miniblock(&v).map(|mb| (v, mb.miner))
                    }
                    _ => None,
                })
                .collect();
            for (v, owner) in victims {
                self.request(FetchItem::Model(v), owner, round, out);
            }
        }
        let tip = self.tip;
        let cfs = self.rules.cfs;
        let candidates: Vec<Arc<MiniBlock>> = self
            .store
            .miniblocks_at(height)
            .filter(|(_, mb)| mb.task_id == task_id && (cfs || mb.prehash == tip))
            .map(|(_, mb)| mb.clone())
            .collect();
        let mut valid = Vec::new();
        let mut unresolved = Vec::new();
        for mb in &candidates {
            match self.validator().validate_miniblock(mb) {
                Verdict::Valid => valid.push(mb.clone()),
                Verdict::Invalid(reason) => self.note_rejection(mb.digest(), reason, out),
                Verdict::Pending(missing) => unresolved.extend(missing),
            }
        }
        self.fetch_missing(&unresolved, round, out);
        if !unresolved.is_empty() && round < started + self.rules.ensemble_wait {
            return false;
        }
        self.ensemble_done.insert(key);
        let params: Vec<HashDigest> = valid.iter().map(|mb| self.models[&mb.digest()].digest()).collect();
        let cands: Vec<Candidate<'_>> = valid
            .iter()
            .zip(&params)
            .map(|(mb, p)| Candidate {
                digest: mb.digest(),
                block: mb,
                params: *p,
            })
            .collect();
        let selected = select_miniblocks(&cands, &tip, cfs);
        if selected.is_empty() {
            out.events.push(Event::Abstained { height });
            return true;
        }
        let Some((dv, _)) = self.disclosed.get(&task_id).and_then(|d| d.validation.clone()) else {
            return true;
        };
        let trees: Vec<&DecisionTree> = selected.iter().map(|d| self.models[d].as_ref()).collect();
        let Ok(mut metric_v) = ensemble_metric(&trees, &dv) else {
            return true;
        };
        if self.strategy == Strategy::MetricInflater {
            metric_v = inflate(metric_v);
        }
        let eb = Arc::new(generate_ensembleblock(
            selected, metric_v, self.id, task_id, height, round,
        ));
        self.store.insert_ensemble(eb.clone());
        self.dirty = true;
        out.events.push(Event::Ensemble(eb.clone()));
        out.outgoing.push(Outgoing::Broadcast {
            message: Message::Ensemble(eb),
            except: None,
        });
        true
    }

    fn phase_three(
        &mut self,
        round: Round,
        tip_kb: &KeyBlock,
        height: Height,
        task_id: HashDigest,
        out: &mut StepOutput,
    ) {
        if self.draft.is_none() || self.dirty {
            let Some(draft) = self.build_draft(round, tip_kb, height, task_id, out) else {
                return;
            };
            let unchanged = self
                .draft
                .as_ref()
                .is_some_and(|d| d.parent == draft.parent && d.entries == draft.entries);
            if !unchanged {
                self.draft = Some(draft);
            }
        }
        let Some(draft) = self.draft.as_mut() else {
            return;
        };
        let first_nonce = round.wrapping_mul(u64::from(self.rules.hash_trials));
        if !try_nonces_with(
            &draft.prefix,
            &mut draft.block,
            &self.rules.target,
            round,
            first_nonce,
            self.rules.hash_trials,
        ) {
            return;
        }
        let kb = Arc::new(draft.block.clone());
        let digest = kb.hash();
        self.draft = None;
        self.seen_keyblocks.insert(digest);
        self.store.insert_keyblock(kb.clone()).expect("draft parent is stored");
        self.accepted_at.insert(digest, round);
        out.events.push(Event::KeyBlockMined(kb.clone()));
        out.events.push(Event::Accepted {
            height: kb.height,
            digest,
        });
        out.outgoing.push(Outgoing::Broadcast {
            message: Message::Key(kb),
            except: None,
        });
        let best = self.store.best_tip();
        if best != self.tip {
            self.tip = best;
        }
        self.dirty = true;
    }

    fn build_draft(
        &mut self,
        round: Round,
        tip_kb: &KeyBlock,
        height: Height,
        task_id: HashDigest,
        out: &mut StepOutput,
    ) -> Option<Draft> {
        let tip = self.tip;
        let cfs = self.rules.cfs;
        let ensembles: Vec<(HashDigest, Arc<crate::chain::EnsembleBlock>)> = self
            .store
            .ensembles_at(height)
            .filter(|(_, eb)| eb.task_id == task_id)
            .map(|(d, eb)| (*d, eb.clone()))
            .collect();
        let mut entries = Vec::new();
        let mut missing = Vec::new();
        for (digest, eb) in &ensembles {
            let mut v = self.validator();
            if !cfs && v.common_prehash(eb) != Some(tip) {
                continue;
            }
            match v.ensemble_test_metric(eb) {
                Ok(metric_e) => entries.push(EbEntry {
                    ensemble: *digest,
                    metric_e,
                }),
                Err(Verdict::Pending(m)) => missing.extend(m),
                Err(Verdict::Invalid(reason)) => self.note_rejection(*digest, reason, out),
                Err(Verdict::Valid) => {}
            }
        }
        self.fetch_missing(&missing, round, out);
        let entries = rank_entries(entries);
        let (parent, producers) = match entries.first() {
            Some(winner) => {
                let eb = self
                    .store
                    .ensemble(&winner.ensemble)
                    .expect("ranked ensembles are stored")
                    .clone();
                let (producers, vote) = self.validator().producers_and_votes(&eb);
                (vote.unwrap_or(tip), producers)
            }
            None => (tip, Vec::new()),
        };
        let parent_kb = if parent == tip {
            tip_kb.clone()
        } else {
            (**self.store.keyblock(&parent)?).clone()
        };
        let task = self.tasks.get(&task_id)?;
        let block = assemble_keyblock(
            &parent_kb,
            parent,
            entries.clone(),
            &producers,
            task,
            &self.tasks,
            self.id,
            self.rules.keyblock_reward,
        )?;
        let prefix = block.header_prefix();
        Some(Draft {
            parent,
            entries: entries.iter().map(|e| e.ensemble).collect(),
            block,
            prefix,
        })
    }
}

/// Claims one more correct prediction than the ensemble achieved. A perfect
/// score is restated over a doubled denominator, which still differs from
/// the honest count pair.
fn inflate(metric: Accuracy) -> Accuracy {
    if metric.correct() < metric.total() {
        Accuracy::new(metric.correct() + 1, metric.total()).unwrap_or(metric)
    } else {
        Accuracy::new(metric.correct() * 2, metric.total() * 2).unwrap_or(metric)
    }
}
