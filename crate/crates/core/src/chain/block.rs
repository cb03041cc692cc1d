use alloc::vec::Vec;

use super::payload::{merkle_root, PayloadRecord};
use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::hash::HashPrefix;
use crate::ml::Accuracy;
use crate::{HashDigest, Height, NodeId, Round};

/// Commits one miner's base model through `ModelHash = Hash(ω ‖ miner_id)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MiniBlock {
    pub timestamp: Round,
    pub miner: NodeId,
    pub task_id: HashDigest,
    pub model_hash: HashDigest,
    pub prehash: HashDigest,
    pub height: Height,
}

impl Encode for MiniBlock {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u64(self.timestamp);
        enc.put_node(self.miner);
        enc.put_digest(&self.task_id);
        enc.put_digest(&self.model_hash);
        enc.put_digest(&self.prehash);
        enc.put_u64(self.height);
    }
}

impl Decode for MiniBlock {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(MiniBlock {
            timestamp: dec.u64()?,
            miner: dec.node()?,
            task_id: dec.digest()?,
            model_hash: dec.digest()?,
            prehash: dec.digest()?,
            height: dec.u64()?,
        })
    }
}

/// Points to the MiniBlocks whose models it aggregates and carries the
/// ensemble's validation accuracy `Metric_V`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnsembleBlock {
    pub miniblocks: Vec<HashDigest>,
    pub metric_v: Accuracy,
    pub miner: NodeId,
    pub task_id: HashDigest,
    pub timestamp: Round,
    pub height: Height,
}

impl Encode for EnsembleBlock {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_seq(&self.miniblocks);
        self.metric_v.encode(enc);
        enc.put_node(self.miner);
        enc.put_digest(&self.task_id);
        enc.put_u64(self.timestamp);
        enc.put_u64(self.height);
    }
}

impl Decode for EnsembleBlock {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(EnsembleBlock {
            miniblocks: dec.seq()?,
            metric_v: Accuracy::decode(dec)?,
            miner: dec.node()?,
            task_id: dec.digest()?,
            timestamp: dec.u64()?,
            height: dec.u64()?,
        })
    }
}

/// One ranked Ensemble Block in a Key Block, with its test accuracy
/// `Metric_E`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EbEntry {
    pub ensemble: HashDigest,
    pub metric_e: Accuracy,
}

impl Encode for EbEntry {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_digest(&self.ensemble);
        self.metric_e.encode(enc);
    }
}

impl Decode for EbEntry {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(EbEntry {
            ensemble: dec.digest()?,
            metric_e: Accuracy::decode(dec)?,
        })
    }
}

/// A proof-of-work block on the hash chain.
///
/// The block digest covers the header fields only. The reward records travel
/// with the block and are committed through `merkle_root`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyBlock {
    pub nonce: u64,
    pub merkle_root: HashDigest,
    pub timestamp: Round,
    pub metric_best: Accuracy,
    pub eb_entries: Vec<EbEntry>,
    pub miner: NodeId,
    pub task_id: HashDigest,
    pub task_queue: Vec<HashDigest>,
    pub prehash: HashDigest,
    pub height: Height,
    pub payload: Vec<PayloadRecord>,
}

impl KeyBlock {
    /// Height 0, all-zero prehash, carrying the initial task queue.
    pub fn genesis(task_queue: Vec<HashDigest>) -> Self {
        KeyBlock {
            nonce: 0,
            merkle_root: HashDigest::ZERO,
            timestamp: 0,
            metric_best: Accuracy::ZERO,
            eb_entries: Vec::new(),
            miner: NodeId::GENESIS,
            task_id: HashDigest::ZERO,
            task_queue,
            prehash: HashDigest::ZERO,
            height: 0,
            payload: Vec::new(),
        }
    }

    pub fn is_genesis(&self) -> bool {
        self.height == 0
    }

    /// Header fields except the trailing timestamp and nonce, which change
    /// on every mining attempt.
    pub fn encode_header_prefix(&self, enc: &mut Encoder) {
        enc.put_digest(&self.merkle_root);
        self.metric_best.encode(enc);
        enc.put_seq(&self.eb_entries);
        enc.put_node(self.miner);
        enc.put_digest(&self.task_id);
        enc.put_seq(&self.task_queue);
        enc.put_digest(&self.prehash);
        enc.put_u64(self.height);
    }

    pub fn encode_header(&self, enc: &mut Encoder) {
        self.encode_header_prefix(enc);
        enc.put_u64(self.timestamp);
        enc.put_u64(self.nonce);
    }

    pub fn header_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode_header(&mut enc);
        enc.into_bytes()
    }

    pub fn header_prefix(&self) -> HashPrefix {
        let mut enc = Encoder::new();
        self.encode_header_prefix(&mut enc);
        HashPrefix::new(&enc.into_bytes())
    }

    /// `Hash(KB)` from a prefix made by [`KeyBlock::header_prefix`] on a block
    /// that differs from this one at most in timestamp and nonce.
    pub fn hash_with(&self, prefix: &HashPrefix) -> HashDigest {
        let mut tail = [0u8; 16];
        tail[..8].copy_from_slice(&self.timestamp.to_be_bytes());
        tail[8..].copy_from_slice(&self.nonce.to_be_bytes());
        prefix.finish(&tail)
    }

    /// `Hash(KB)`.
    pub fn hash(&self) -> HashDigest {
        HashDigest::of(&self.header_bytes())
    }

    /// Recomputes `merkle_root` from the carried payload.
    pub fn seal_payload(&mut self) {
        self.merkle_root = merkle_root(&self.payload);
    }
}

impl Encode for KeyBlock {
    fn encode(&self, enc: &mut Encoder) {
        self.encode_header(enc);
        enc.put_seq(&self.payload);
    }

    fn digest(&self) -> HashDigest {
        self.hash()
    }
}

impl Decode for KeyBlock {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let merkle_root = dec.digest()?;
        let metric_best = Accuracy::decode(dec)?;
        let eb_entries = dec.seq()?;
        let miner = dec.node()?;
        let task_id = dec.digest()?;
        let task_queue = dec.seq()?;
        let prehash = dec.digest()?;
        let height = dec.u64()?;
        let timestamp = dec.u64()?;
        let nonce = dec.u64()?;
        Ok(KeyBlock {
            nonce,
            merkle_root,
            timestamp,
            metric_best,
            eb_entries,
            miner,
            task_id,
            task_queue,
            prehash,
            height,
            payload: dec.seq()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::payload::PayloadKind;

    fn mb() -> MiniBlock {
        MiniBlock {
            timestamp: 7,
            miner: NodeId(2),
            task_id: HashDigest::of(b"task"),
            model_hash: HashDigest::of(b"model"),
            prehash: HashDigest::of(b"parent"),
            height: 3,
        }
    }

    #[test]
    fn miniblock_digest_is_bit_sensitive() {
        let block = mb();
        let mut bytes = block.to_bytes();
        assert_eq!(MiniBlock::from_bytes(&bytes).unwrap().digest(), block.digest());
        bytes[0] ^= 0x80;
        assert_ne!(HashDigest::of(&bytes), block.digest());
    }

    #[test]
    fn keyblock_round_trip_keeps_digest() {
        let mut kb = KeyBlock::genesis(vec![HashDigest::of(b"a")]);
        kb.height = 1;
        kb.eb_entries.push(EbEntry {
            ensemble: HashDigest::of(b"eb"),
            metric_e: Accuracy::new(3, 4).unwrap(),
        });
        kb.payload.push(PayloadRecord {
            kind: PayloadKind::KeyblockReward,
            payee: NodeId(1),
            amount: 5,
        });
        kb.seal_payload();
        let back = KeyBlock::from_bytes(&kb.to_bytes()).unwrap();
        assert_eq!(back, kb);
        assert_eq!(back.hash(), kb.hash());
        assert_eq!(kb.digest(), HashDigest::of(&kb.header_bytes()));
    }

    #[test]
    fn prefix_hash_matches_full_hash() {
        let mut kb = KeyBlock::genesis(vec![HashDigest::of(b"a"), HashDigest::of(b"b")]);
        kb.height = 9;
        let prefix = kb.header_prefix();
        for (t, n) in [(0, 0), (5, 17), (u64::MAX, 3)] {
            kb.timestamp = t;
            kb.nonce = n;
            assert_eq!(kb.hash_with(&prefix), kb.hash());
        }
    }

    #[test]
    fn payload_is_committed_only_through_the_root() {
        let mut kb = KeyBlock::genesis(vec![]);
        let before = kb.hash();
        kb.payload.push(PayloadRecord {
            kind: PayloadKind::KeyblockReward,
            payee: NodeId(1),
            amount: 5,
        });
        assert_eq!(kb.hash(), before);
        kb.seal_payload();
        assert_ne!(kb.hash(), before);
    }

    #[test]
    fn ensemble_round_trip() {
        let eb = EnsembleBlock {
            miniblocks: vec![mb().digest()],
            metric_v: Accuracy::new(1, 2).unwrap(),
            miner: NodeId(0),
            task_id: HashDigest::of(b"t"),
            timestamp: 4,
            height: 1,
        };
        assert_eq!(EnsembleBlock::from_bytes(&eb.to_bytes()).unwrap(), eb);
    }
}
