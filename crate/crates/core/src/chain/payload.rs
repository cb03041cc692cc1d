use alloc::vec::Vec;

use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::{HashDigest, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PayloadKind {
    TrainingFeeShare,
    KeyblockReward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PayloadRecord {
    pub kind: PayloadKind,
    pub payee: NodeId,
    pub amount: u64,
}

impl Encode for PayloadRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u8(match self.kind {
            PayloadKind::TrainingFeeShare => 0,
            PayloadKind::KeyblockReward => 1,
        });
        enc.put_node(self.payee);
        enc.put_u64(self.amount);
    }
}

impl Decode for PayloadRecord {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let kind = match dec.u8()? {
            0 => PayloadKind::TrainingFeeShare,
            1 => PayloadKind::KeyblockReward,
            tag => {
                return Err(DecodeError::InvalidTag {
                    what: "payload kind",
                    tag,
                })
            }
        };
        Ok(PayloadRecord {
            kind,
            payee: dec.node()?,
            amount: dec.u64()?,
        })
    }
}

/// One fee share per MiniBlock producer, sorted by payee. `fee mod n` extra
/// units go to the first records, i.e. the smallest payee IDs.
pub fn allocate_fees(fee: u64, producers: &[NodeId]) -> Vec<PayloadRecord> {
    if producers.is_empty() {
        return Vec::new();
    }
    let mut payees = producers.to_vec();
    payees.sort();
    let n = payees.len() as u64;
    let (share, extra) = (fee / n, fee % n);
    payees
        .into_iter()
        .enumerate()
        .map(|(i, payee)| PayloadRecord {
            kind: PayloadKind::TrainingFeeShare,
            payee,
            amount: share + u64::from((i as u64) < extra),
        })
        .collect()
}

/// The payload a Key Block must carry: fee shares for the winning Ensemble
/// Block's MiniBlock producers, then the producer's own reward.
pub fn keyblock_payload(fee: u64, winning_producers: &[NodeId], producer: NodeId, reward: u64) -> Vec<PayloadRecord> {
    let mut records = allocate_fees(fee, winning_producers);
    records.push(PayloadRecord {
        kind: PayloadKind::KeyblockReward,
        payee: producer,
        amount: reward,
    });
    records
}

/// Binary SHA-256 Merkle tree over the record encodings. An odd node is paired
/// with itself; an empty payload has the all-zero root.
pub fn merkle_root(records: &[PayloadRecord]) -> HashDigest {
    if records.is_empty() {
        return HashDigest::ZERO;
    }
    let mut level: Vec<HashDigest> = records.iter().map(Encode::digest).collect();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                let right = pair.get(1).unwrap_or(&pair[0]);
                HashDigest::of_parts(&[pair[0].as_bytes(), right.as_bytes()])
            })
            .collect();
    }
    level[0]
}
