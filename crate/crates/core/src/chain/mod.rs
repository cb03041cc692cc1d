//! Tasks, the three block layers, reward payloads and the block store.

mod block;
mod payload;
mod store;
mod task;

pub use block::{EbEntry, EnsembleBlock, KeyBlock, MiniBlock};
pub use payload::{allocate_fees, keyblock_payload, merkle_root, PayloadKind, PayloadRecord};
pub use store::{compare_tips, main_chain, BlockStore, Inserted};
pub use task::{push_task_queue, AggregateRule, LearnerSpec, MetricRule, Task, TaskBook};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("completed task is not the queue head")]
    QueueHeadMismatch,
    #[error("task is not in the task book")]
    UnknownTask,
    #[error("invalid task: {0}")]
    InvalidTask(&'static str),
    #[error("block height does not follow its parent")]
    HeightMismatch,
}
