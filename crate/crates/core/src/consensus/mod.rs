//! The per-miner protocol: generation and validation of the three block
//! layers, Cross Fork Sharing, model release gating and reward allocation.

mod generate;
mod message;
mod miner;
mod requester;
mod validate;

pub use generate::{
    assemble_keyblock, ensemble_metric, generate_ensembleblock, generate_miniblock, rank_entries, select_miniblocks,
    train_base_model, try_nonces, try_nonces_with, Candidate,
};
pub use message::{DatasetKind, FetchItem, FetchReply, Message, Publication};
pub use miner::{MinerState, Phase, Strategy};
pub use requester::{RequesterState, TaskData};
pub use validate::{prehash_vote, Disclosure, Memo, Missing, Rejection, Validator, Verdict};

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::chain::{EnsembleBlock, KeyBlock, MiniBlock};
use crate::ml::TrainedModel;
use crate::{HashDigest, Height, NodeId, Round, Target};

/// Protocol parameters shared by every miner.
#[derive(Clone, Debug, PartialEq)]
pub struct Rules {
    pub cfs: bool,
    pub target: Target,
    /// Nonce trials per miner per round (`q`).
    pub hash_trials: u32,
    pub keyblock_reward: u64,
    /// Rounds a miner waits on unresolved model fetches before building its
    /// Ensemble Block from what it has.
    pub ensemble_wait: Round,
    /// Rounds before re-requesting an object that was deferred or refused.
    pub fetch_retry: Round,
    pub seed: u64,
    pub requester: NodeId,
    /// Re-broadcast blocks on first receipt (needed on non-complete meshes).
    pub gossip: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outgoing {
    /// To every link neighbour, or every miner when sent by the requester.
    Broadcast {
        message: Message,
        except: Option<NodeId>,
    },
    Send {
        to: NodeId,
        message: Message,
    },
}

/// Observations the simulator records; they do not affect the protocol.
#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    /// `model` is `None` for a plagiarised MiniBlock.
    MiniBlock {
        block: Arc<MiniBlock>,
        model: Option<Arc<TrainedModel>>,
    },
    Ensemble(Arc<EnsembleBlock>),
    Abstained {
        height: Height,
    },
    KeyBlockMined(Arc<KeyBlock>),
    Accepted {
        height: Height,
        digest: HashDigest,
    },
    Rejected {
        digest: HashDigest,
        reason: Rejection,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutput {
    pub outgoing: Vec<Outgoing>,
    pub events: Vec<Event>,
}
