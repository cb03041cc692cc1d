use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::message::{DatasetKind, FetchItem, FetchReply, Message, Publication};
use super::Outgoing;
use crate::chain::TaskBook;
use crate::ml::Dataset;
use crate::netsim::Envelope;
use crate::{Height, NodeId, Round};

/// Everything the requester holds for one task, plus each miner's private
/// share of the training data.
#[derive(Clone, Debug)]
pub struct TaskData {
    pub public: Arc<Dataset>,
    pub private: Vec<Arc<Dataset>>,
    pub validation: Arc<Dataset>,
    pub test: Arc<Dataset>,
}

/// Publishes `D_V` at `t1 = anchor + phase1` and `D_E` at `t2 = t1 + phase2`,
/// where the anchor of height `h` is the earliest round any miner accepted a
/// Key Block at height `h − 1`. Serves `D_T` on request.
#[derive(Clone, Debug)]
pub struct RequesterState {
    id: NodeId,
    tasks: Arc<TaskBook>,
    data: Arc<Vec<TaskData>>,
    phase1: Round,
    phase2: Round,
    published: BTreeMap<(Height, DatasetKind), Round>,
}

impl RequesterState {
    pub fn new(id: NodeId, tasks: Arc<TaskBook>, data: Arc<Vec<TaskData>>, phase1: Round, phase2: Round) -> Self {
        RequesterState {
            id,
            tasks,
            data,
            phase1,
            phase2,
            published: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn data(&self) -> &Arc<Vec<TaskData>> {
        &self.data
    }

    /// Publication rounds so far, keyed by height and dataset.
    pub fn published(&self) -> &BTreeMap<(Height, DatasetKind), Round> {
        &self.published
    }

    /// `anchors[h]` is the first acceptance round of any Key Block at height `h`.
    pub fn step(
        &mut self,
        round: Round,
        inbox: Vec<Envelope<Message>>,
        anchors: &BTreeMap<Height, Round>,
    ) -> Vec<Outgoing> {
        let mut out = Vec::new();
        for env in inbox {
            if let Message::Request(item) = env.payload {
                let reply = match item {
                    FetchItem::TrainingSet(task_id) => match self.tasks.position(&task_id) {
                        Some(k) => FetchReply::Dataset(self.data[k].public.clone()),
                        None => FetchReply::NotHeld,
                    },
                    FetchItem::Model(_) => FetchReply::NotHeld,
                };
                out.push(Outgoing::Send {
                    to: env.source,
                    message: Message::Reply(item, reply),
                });
            }
        }
        for (&h_prev, &anchor) in anchors {
            let height = h_prev + 1;
            let Some((task_id, _)) = self.tasks.by_index(h_prev as usize) else {
                break;
            };
            let t1 = anchor + self.phase1;
            for (kind, at, data) in [
                (DatasetKind::Validation, t1, &self.data[h_prev as usize].validation),
                (DatasetKind::Test, t1 + self.phase2, &self.data[h_prev as usize].test),
            ] {
                if round >= at && !self.published.contains_key(&(height, kind)) {
                    self.published.insert((height, kind), round);
                    let publication = Publication {
                        height,
                        kind,
                        timestamp: round,
                        task_id: *task_id,
                        requester: self.id,
                        data: data.clone(),
                    };
                    out.push(Outgoing::Broadcast {
                        message: Message::Publication(Arc::new(publication)),
                        except: None,
                    });
                }
            }
        }
        out
    }
}
