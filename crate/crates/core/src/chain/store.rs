use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{ChainError, EnsembleBlock, KeyBlock, MiniBlock};
use crate::codec::Encode;
use crate::{HashDigest, Height};

/// Fork choice: longer chain, then higher `metric_best` by value, then smaller
/// tip digest.
pub fn compare_tips(a: (&KeyBlock, HashDigest), b: (&KeyBlock, HashDigest)) -> Ordering {
    a.0.height
        .cmp(&b.0.height)
        .then(a.0.metric_best.cmp_value(&b.0.metric_best))
        .then(b.1.cmp(&a.1))
}

#[derive(Debug, PartialEq, Eq)]
pub enum Inserted {
    New,
    Known,
    Orphan,
}

/// One miner's replica of the block DAG.
///
/// Key Blocks enter only once their parent is stored; earlier arrivals wait in
/// the orphan buffer keyed by the missing parent. MiniBlocks and Ensemble
/// Blocks are indexed by height.
#[derive(Clone, Debug)]
pub struct BlockStore {
    genesis: HashDigest,
    keyblocks: BTreeMap<HashDigest, Arc<KeyBlock>>,
    kb_by_height: BTreeMap<Height, BTreeSet<HashDigest>>,
    orphans: BTreeMap<HashDigest, BTreeMap<HashDigest, Arc<KeyBlock>>>,
    miniblocks: BTreeMap<HashDigest, Arc<MiniBlock>>,
    mb_by_height: BTreeMap<Height, BTreeSet<HashDigest>>,
    ensembles: BTreeMap<HashDigest, Arc<EnsembleBlock>>,
    eb_by_height: BTreeMap<Height, BTreeSet<HashDigest>>,
}

impl BlockStore {
    pub fn new(genesis: Arc<KeyBlock>) -> Self {
        let digest = genesis.hash();
        let mut keyblocks = BTreeMap::new();
        keyblocks.insert(digest, genesis);
        let mut kb_by_height = BTreeMap::new();
        kb_by_height.insert(0, BTreeSet::from([digest]));
        BlockStore {
            genesis: digest,
            keyblocks,
            kb_by_height,
            orphans: BTreeMap::new(),
            miniblocks: BTreeMap::new(),
            mb_by_height: BTreeMap::new(),
            ensembles: BTreeMap::new(),
            eb_by_height: BTreeMap::new(),
        }
    }

    pub fn genesis(&self) -> HashDigest {
        self.genesis
    }

    pub fn keyblock(&self, digest: &HashDigest) -> Option<&Arc<KeyBlock>> {
        self.keyblocks.get(digest)
    }

    pub fn has_keyblock(&self, digest: &HashDigest) -> bool {
        self.keyblocks.contains_key(digest)
    }

    pub fn keyblocks(&self) -> impl Iterator<Item = (&HashDigest, &Arc<KeyBlock>)> {
        self.keyblocks.iter()
    }

    pub fn keyblocks_at(&self, height: Height) -> impl Iterator<Item = &HashDigest> {
        self.kb_by_height.get(&height).into_iter().flatten()
    }

    /// Stores a Key Block whose validity the caller has established.
    pub fn insert_keyblock(&mut self, kb: Arc<KeyBlock>) -> Result<Inserted, ChainError> {
        let digest = kb.hash();
        if self.keyblocks.contains_key(&digest) {
            return Ok(Inserted::Known);
        }
        if kb.is_genesis() {
            return Err(ChainError::HeightMismatch);
        }
        match self.keyblocks.get(&kb.prehash) {
            Some(parent) if parent.height + 1 != kb.height => Err(ChainError::HeightMismatch),
            Some(_) => {
                self.kb_by_height.entry(kb.height).or_default().insert(digest);
                self.keyblocks.insert(digest, kb);
                Ok(Inserted::New)
            }
            None => {
                self.orphans.entry(kb.prehash).or_default().insert(digest, kb);
                Ok(Inserted::Orphan)
            }
        }
    }

    /// Parks a Key Block until its parent is stored.
    pub fn add_orphan(&mut self, kb: Arc<KeyBlock>) {
        self.orphans.entry(kb.prehash).or_default().insert(kb.hash(), kb);
    }

    pub fn is_orphan(&self, kb: &KeyBlock) -> bool {
        self.orphans
            .get(&kb.prehash)
            .is_some_and(|m| m.contains_key(&kb.hash()))
    }

    /// Removes and returns the orphans waiting on `parent`.
    pub fn take_orphans(&mut self, parent: &HashDigest) -> Vec<Arc<KeyBlock>> {
        self.orphans
            .remove(parent)
            .map(|m| m.into_values().collect())
            .unwrap_or_default()
    }

    pub fn orphan_count(&self) -> usize {
        self.orphans.values().map(BTreeMap::len).sum()
    }

    pub fn insert_miniblock(&mut self, mb: Arc<MiniBlock>) -> bool {
        let digest = mb.digest();
        if self.miniblocks.contains_key(&digest) {
            return false;
        }
        self.mb_by_height.entry(mb.height).or_default().insert(digest);
        self.miniblocks.insert(digest, mb);
        true
    }

    pub fn miniblock(&self, digest: &HashDigest) -> Option<&Arc<MiniBlock>> {
        self.miniblocks.get(digest)
    }

    pub fn miniblocks_at(&self, height: Height) -> impl Iterator<Item = (&HashDigest, &Arc<MiniBlock>)> {
        self.mb_by_height
            .get(&height)
            .into_iter()
            .flatten()
            .map(|d| (d, &self.miniblocks[d]))
    }

    pub fn insert_ensemble(&mut self, eb: Arc<EnsembleBlock>) -> bool {
        let digest = eb.digest();
        if self.ensembles.contains_key(&digest) {
            return false;
        }
        self.eb_by_height.entry(eb.height).or_default().insert(digest);
        self.ensembles.insert(digest, eb);
        true
    }

    pub fn ensemble(&self, digest: &HashDigest) -> Option<&Arc<EnsembleBlock>> {
        self.ensembles.get(digest)
    }

    pub fn ensembles_at(&self, height: Height) -> impl Iterator<Item = (&HashDigest, &Arc<EnsembleBlock>)> {
        self.eb_by_height
            .get(&height)
            .into_iter()
            .flatten()
            .map(|d| (d, &self.ensembles[d]))
    }

    /// The stored tip preferred by the fork-choice rule.
    pub fn best_tip(&self) -> HashDigest {
        let mut best = self.genesis;
        for (digest, kb) in &self.keyblocks {
            if compare_tips((kb, *digest), (&self.keyblocks[&best], best)) == Ordering::Greater {
                best = *digest;
            }
        }
        best
    }

    /// Key Blocks from genesis to `tip`, inclusive.
    pub fn chain_to(&self, tip: &HashDigest) -> Vec<Arc<KeyBlock>> {
        let mut chain = Vec::new();
        let mut cursor = self.keyblocks.get(tip);
        while let Some(kb) = cursor {
            chain.push(kb.clone());
            if kb.is_genesis() {
                break;
            }
            cursor = self.keyblocks.get(&kb.prehash);
        }
        chain.reverse();
        chain
    }

    /// Digest of the ancestor of `tip` at `height`.
    pub fn ancestor_at(&self, tip: &HashDigest, height: Height) -> Option<HashDigest> {
        let mut digest = *tip;
        loop {
            let kb = self.keyblocks.get(&digest)?;
            match kb.height.cmp(&height) {
                Ordering::Equal => return Some(digest),
                Ordering::Less => return None,
                Ordering::Greater => digest = kb.prehash,
            }
        }
    }
}

/// The longest valid chain under the fork-choice rule.
pub fn main_chain(store: &BlockStore) -> Vec<Arc<KeyBlock>> {
    store.chain_to(&store.best_tip())
}
