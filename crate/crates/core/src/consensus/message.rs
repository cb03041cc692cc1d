use alloc::sync::Arc;

use crate::chain::{EnsembleBlock, KeyBlock, MiniBlock};
use crate::codec::Encode;
use crate::ml::{Dataset, DecisionTree};
use crate::{HashDigest, Height, NodeId, Round};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DatasetKind {
    Validation,
    Test,
}

/// `(height, dataset type, timestamp, task_id, requester_id)` plus the data.
#[derive(Clone, Debug, PartialEq)]
pub struct Publication {
    pub height: Height,
    pub kind: DatasetKind,
    pub timestamp: Round,
    pub task_id: HashDigest,
    pub requester: NodeId,
    pub data: Arc<Dataset>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FetchItem {
    /// Parameters `ω` behind the MiniBlock with this digest.
    Model(HashDigest),
    /// Public training set `D_T` of the task with this id.
    TrainingSet(HashDigest),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FetchReply {
    Model(Arc<DecisionTree>),
    Dataset(Arc<Dataset>),
    /// The holder has the object but has not released it yet.
    Deferred,
    NotHeld,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    MiniBlock(Arc<MiniBlock>),
    Ensemble(Arc<EnsembleBlock>),
    Key(Arc<KeyBlock>),
    Publication(Arc<Publication>),
    Request(FetchItem),
    Reply(FetchItem, FetchReply),
}

impl FetchItem {
    fn tag(&self) -> (u8, &HashDigest) {
        match self {
            FetchItem::Model(d) => (0, d),
            FetchItem::TrainingSet(d) => (1, d),
        }
    }
}

impl Message {
    /// Ordering key for same-round deliveries. Blocks use their own digest.
    pub fn digest(&self) -> HashDigest {
        match self {
            Message::MiniBlock(mb) => mb.digest(),
            Message::Ensemble(eb) => eb.digest(),
            Message::Key(kb) => kb.hash(),
            Message::Publication(p) => HashDigest::of_parts(&[b"publication", p.task_id.as_bytes(), &[p.kind as u8]]),
            Message::Request(item) => {
                let (tag, d) = item.tag();
                HashDigest::of_parts(&[b"request", &[tag], d.as_bytes()])
            }
            Message::Reply(item, reply) => {
                let (tag, d) = item.tag();
                let outcome = match reply {
                    FetchReply::Model(_) => 0u8,
                    FetchReply::Dataset(_) => 1,
                    FetchReply::Deferred => 2,
                    FetchReply::NotHeld => 3,
                };
                HashDigest::of_parts(&[b"reply", &[tag], d.as_bytes(), &[outcome]])
            }
        }
    }

    pub fn is_block(&self) -> bool {
        matches!(self, Message::MiniBlock(_) | Message::Ensemble(_) | Message::Key(_))
    }
}
