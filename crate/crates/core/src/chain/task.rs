use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::ChainError;
use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::ml::{MetricFloor, TreeParams};
use crate::{HashDigest, Height, NodeId};

/// Learner family and hyperparameters (`f` and `Train(·; f)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LearnerSpec {
    Cart(TreeParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregateRule {
    MajorityVote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricRule {
    Accuracy,
}

/// `TASK = (D_T, D_V, D_E, f, Aggregate, Metric, Metric_min)` plus the fee and
/// the requester. Datasets appear only as commitments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    pub train_commit: HashDigest,
    pub val_commit: HashDigest,
    pub test_commit: HashDigest,
    pub learner: LearnerSpec,
    pub aggregate: AggregateRule,
    pub metric: MetricRule,
    pub metric_min: MetricFloor,
    pub fee: u64,
    pub requester: NodeId,
}

impl Task {
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.train_commit == self.val_commit
            || self.train_commit == self.test_commit
            || self.val_commit == self.test_commit
        {
            return Err(ChainError::InvalidTask("dataset commitments must be pairwise distinct"));
        }
        let LearnerSpec::Cart(params) = self.learner;
        params
            .validate()
            .map_err(|_| ChainError::InvalidTask("invalid learner parameters"))
    }

    pub fn id(&self) -> HashDigest {
        self.digest()
    }

    pub fn tree_params(&self) -> TreeParams {
        let LearnerSpec::Cart(params) = self.learner;
        params
    }
}

impl Encode for Task {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_digest(&self.train_commit);
        enc.put_digest(&self.val_commit);
        enc.put_digest(&self.test_commit);
        let LearnerSpec::Cart(params) = self.learner;
        enc.put_u8(0);
        enc.put_u32(params.max_depth);
        enc.put_u32(params.min_leaf);
        enc.put_u8(0);
        enc.put_u8(0);
        enc.put_u32(self.metric_min.ppm());
        enc.put_u64(self.fee);
        enc.put_node(self.requester);
    }
}

impl Decode for Task {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let train_commit = dec.digest()?;
        let val_commit = dec.digest()?;
        let test_commit = dec.digest()?;
        let learner = match dec.u8()? {
            0 => LearnerSpec::Cart(TreeParams {
                max_depth: dec.u32()?,
                min_leaf: dec.u32()?,
            }),
            tag => return Err(DecodeError::InvalidTag { what: "learner", tag }),
        };
        let aggregate = match dec.u8()? {
            0 => AggregateRule::MajorityVote,
            tag => {
                return Err(DecodeError::InvalidTag {
                    what: "aggregate rule",
                    tag,
                })
            }
        };
        let metric = match dec.u8()? {
            0 => MetricRule::Accuracy,
            tag => {
                return Err(DecodeError::InvalidTag {
                    what: "metric rule",
                    tag,
                })
            }
        };
        let metric_min = MetricFloor::from_ppm(dec.u32()?).ok_or(DecodeError::Invalid("metric floor"))?;
        Ok(Task {
            train_commit,
            val_commit,
            test_commit,
            learner,
            aggregate,
            metric,
            metric_min,
            fee: dec.u64()?,
            requester: dec.node()?,
        })
    }
}

/// `[A,B,C]`, complete `A`, append `D` gives `[B,C,D]`.
pub fn push_task_queue(
    queue: &[HashDigest],
    completed: &HashDigest,
    incoming: HashDigest,
) -> Result<Vec<HashDigest>, ChainError> {
    match queue.first() {
        Some(head) if head == completed => {
            let mut next = Vec::with_capacity(queue.len());
            next.extend_from_slice(&queue[1..]);
            next.push(incoming);
            Ok(next)
        }
        _ => Err(ChainError::QueueHeadMismatch),
    }
}

/// The requester's published task pool, in submission order.
///
/// The genesis queue holds the first `Q` tasks and each Key Block appends the
/// task that follows the queue tail, so the task at pool index `k` executes at
/// height `k + 1` on every fork.
#[derive(Clone, Debug)]
pub struct TaskBook {
    tasks: Vec<Task>,
    ids: Vec<HashDigest>,
    index: BTreeMap<HashDigest, usize>,
    queue_len: usize,
}

impl TaskBook {
    pub fn new(tasks: Vec<Task>, queue_len: usize) -> Result<Self, ChainError> {
        if queue_len == 0 {
            return Err(ChainError::InvalidTask("queue length must be at least 1"));
        }
        if tasks.len() < queue_len {
            return Err(ChainError::InvalidTask("fewer tasks than the queue length"));
        }
        let mut index = BTreeMap::new();
        let mut ids = Vec::with_capacity(tasks.len());
        for (k, task) in tasks.iter().enumerate() {
            task.validate()?;
            let id = task.id();
            if index.insert(id, k).is_some() {
                return Err(ChainError::InvalidTask("duplicate task"));
            }
            ids.push(id);
        }
        Ok(TaskBook {
            tasks,
            ids,
            index,
            queue_len,
        })
    }

    pub fn queue_len(&self) -> usize {
        self.queue_len
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn genesis_queue(&self) -> Vec<HashDigest> {
        self.ids[..self.queue_len].to_vec()
    }

    pub fn get(&self, id: &HashDigest) -> Option<&Task> {
        self.index.get(id).map(|&k| &self.tasks[k])
    }

    pub fn position(&self, id: &HashDigest) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn by_index(&self, k: usize) -> Option<(&HashDigest, &Task)> {
        Some((self.ids.get(k)?, &self.tasks[k]))
    }

    /// Highest Key Block height whose queue can still be refilled.
    pub fn last_height(&self) -> Height {
        (self.tasks.len() - self.queue_len) as Height
    }

    /// The queue a child of a block with `parent_queue` must carry, or `None`
    /// when the pool has no task left to append.
    pub fn next_queue(&self, parent_queue: &[HashDigest]) -> Result<Option<Vec<HashDigest>>, ChainError> {
        let head = parent_queue.first().ok_or(ChainError::QueueHeadMismatch)?;
        let tail = parent_queue.last().ok_or(ChainError::QueueHeadMismatch)?;
        let tail_pos = self.position(tail).ok_or(ChainError::UnknownTask)?;
        match self.ids.get(tail_pos + 1) {
            Some(incoming) => push_task_queue(parent_queue, head, *incoming).map(Some),
            None => Ok(None),
        }
    }
}
