//! Per-height measurements over the final main chain.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use bagchain_core::chain::{main_chain, BlockStore, EnsembleBlock, KeyBlock, PayloadKind};
use bagchain_core::codec::Encode;
use bagchain_core::consensus::{ensemble_metric, Strategy};
use bagchain_core::ml::{accuracy, train, Accuracy, DecisionTree, TrainedModel};
use bagchain_core::world::World;
use bagchain_core::{HashDigest, Height, NodeId, Round};

use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq)]
pub struct HeightRecord {
    pub height: Height,
    pub keyblock: HashDigest,
    /// Test accuracy of the winning ensemble; zero for an empty Key Block.
    pub accuracy: Accuracy,
    /// Test accuracy of all valid base models generated for the task.
    pub best_possible: Accuracy,
    /// Distinct valid base models generated for the task, on any fork.
    pub miniblocks_total: usize,
    /// MiniBlocks referenced by the winning Ensemble Block.
    pub miniblocks_used: usize,
    /// Key Blocks mined at this height that lost the fork race.
    pub forks: usize,
    /// Rounds between this Key Block and its parent.
    pub rounds: Round,
    pub empty: bool,
}

impl HeightRecord {
    pub fn wastage(&self) -> usize {
        self.miniblocks_total.saturating_sub(self.miniblocks_used)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseRecord {
    pub height: Height,
    pub miner: NodeId,
    pub accuracy: Accuracy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardRow {
    pub miner: NodeId,
    pub fee_shares: u64,
    pub keyblock_rewards: u64,
}

impl RewardRow {
    fn new(miner: NodeId) -> Self {
        RewardRow {
            miner,
            fee_shares: 0,
            keyblock_rewards: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Summary {
    pub heights: usize,
    pub rounds: Round,
    pub keyblocks_mined: usize,
    pub stale_keyblocks: usize,
    pub empty_keyblocks: usize,
    pub mean_accuracy: f64,
    pub mean_best_possible: f64,
    pub mean_wastage: f64,
    pub mean_base_accuracy: f64,
    pub mean_baseline_accuracy: f64,
    pub fee_shares_paid: u64,
    pub fees_of_completed_tasks: u64,
    pub rejections: BTreeMap<&'static str, u64>,
    pub abstentions: u64,
    pub messages: u64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunReport {
    pub records: Vec<HeightRecord>,
    pub base: Vec<BaseRecord>,
    /// Test accuracy of one unbagged tree trained on `D_T` only.
    pub baseline: Vec<(Height, Accuracy)>,
    pub rewards: Vec<RewardRow>,
    pub summary: Summary,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Main chain over every Key Block mined by anyone, cut at `heights`.
pub fn global_main_chain(world: &World, heights: Height) -> Vec<Arc<KeyBlock>> {
    let mut store = BlockStore::new(world.genesis().clone());
    for (_, kb) in &world.log().keyblocks {
        if kb.height <= heights {
            // mined strictly after the parent, so the parent is present
            let _ = store.insert_keyblock(kb.clone());
        }
    }
    main_chain(&store)
}

/// Distinct valid base models generated at `height` on any fork, in order
/// of generation. Withheld models are unavailable and plagiarised
/// MiniBlocks carry none.
pub fn height_models(world: &World, height: Height) -> Vec<Arc<TrainedModel>> {
    let Some((task_id, task)) = world.tasks().by_index(height as usize - 1) else {
        return Vec::new();
    };
    let validation = &world.task_data()[height as usize - 1].validation;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (_, mb, model) in &world.log().miniblocks {
        let Some(model) = model else { continue };
        if mb.height != height || mb.task_id != *task_id || mb.model_hash != model.model_hash() {
            continue;
        }
        if world.miners()[mb.miner.index()].strategy() == Strategy::Withholder {
            continue;
        }
        if !seen.insert(model.params_digest()) {
            continue;
        }
        let acc = accuracy(&model.tree.predict(validation), validation.labels()).expect("validation set is non-empty");
        if task.metric_min.is_exceeded_by(acc) {
            out.push(model.clone());
        }
    }
    out
}

pub fn collect(world: &World, sc: &Scenario) -> RunReport {
    let chain = global_main_chain(world, sc.heights);
    let log = world.log();
    let ensembles: HashMap<HashDigest, &Arc<EnsembleBlock>> =
        log.ensembles.iter().map(|(_, eb)| (eb.digest(), eb)).collect();
    let mut mined_at: BTreeMap<Height, usize> = BTreeMap::new();
    for (_, kb) in &log.keyblocks {
        *mined_at.entry(kb.height).or_default() += 1;
    }

    let mut report = RunReport::default();
    let mut rewards: BTreeMap<NodeId, RewardRow> = (0..sc.miners)
        .map(|i| (NodeId(i as u32), RewardRow::new(NodeId(i as u32))))
        .collect();
    for pair in chain.windows(2) {
        let (parent, kb) = (&pair[0], &pair[1]);
        let h = kb.height;
        let data = &world.task_data()[h as usize - 1];
        let models = height_models(world, h);
        let trees: Vec<&DecisionTree> = models.iter().map(|m| &m.tree).collect();
        let best_possible = if trees.is_empty() {
            Accuracy::ZERO
        } else {
            ensemble_metric(&trees, &data.test).expect("test set is non-empty")
        };
        let used = kb
            .eb_entries
            .first()
            .and_then(|e| ensembles.get(&e.ensemble))
            .map_or(0, |eb| eb.miniblocks.len());
        report.records.push(HeightRecord {
            height: h,
            keyblock: kb.hash(),
            accuracy: kb.metric_best,
            best_possible,
            miniblocks_total: models.len(),
            miniblocks_used: used,
            forks: mined_at.get(&h).map_or(0, |n| n.saturating_sub(1)),
            rounds: kb.timestamp.saturating_sub(parent.timestamp),
            empty: kb.eb_entries.is_empty(),
        });
        let mut by_owner = BTreeMap::new();
        for m in &models {
            by_owner.entry(m.owner).or_insert(m);
        }
        for (owner, m) in by_owner {
            let acc = accuracy(&m.tree.predict(&data.test), data.test.labels()).expect("test set is non-empty");
            report.base.push(BaseRecord {
                height: h,
                miner: owner,
                accuracy: acc,
            });
        }
        let dummy = train(&data.public, &sc.learner).expect("public set is non-empty");
        let acc = accuracy(&dummy.predict(&data.test), data.test.labels()).expect("test set is non-empty");
        report.baseline.push((h, acc));

        let task = world.tasks().get(&kb.task_id).expect("main-chain task is known");
        if !kb.eb_entries.is_empty() {
            report.summary.fees_of_completed_tasks += task.fee;
        }
        for rec in &kb.payload {
            let row = rewards.entry(rec.payee).or_insert_with(|| RewardRow::new(rec.payee));
            match rec.kind {
                PayloadKind::TrainingFeeShare => {
                    row.fee_shares += rec.amount;
                    report.summary.fee_shares_paid += rec.amount;
                }
                PayloadKind::KeyblockReward => row.keyblock_rewards += rec.amount,
            }
        }
    }
    report.rewards = rewards.into_values().collect();

    let s = &mut report.summary;
    s.heights = report.records.len();
    s.rounds = world.round();
    s.keyblocks_mined = log.keyblocks.len();
    s.stale_keyblocks = report.records.iter().map(|r| r.forks).sum();
    s.empty_keyblocks = report.records.iter().filter(|r| r.empty).count();
    s.mean_accuracy = mean(report.records.iter().map(|r| r.accuracy.as_f64()));
    s.mean_best_possible = mean(report.records.iter().map(|r| r.best_possible.as_f64()));
    s.mean_wastage = mean(report.records.iter().map(|r| r.wastage() as f64));
    s.mean_base_accuracy = mean(report.base.iter().map(|b| b.accuracy.as_f64()));
    s.mean_baseline_accuracy = mean(report.baseline.iter().map(|(_, a)| a.as_f64()));
    s.rejections = log.rejections.iter().map(|(r, n)| (r.code(), *n)).collect();
    s.abstentions = log.abstentions;
    s.messages = log.messages;
    report
}
