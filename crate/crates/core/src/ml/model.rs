use alloc::vec::Vec;

use super::DecisionTree;
use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::hash::HashDigest;
use crate::NodeId;

/// Base-model parameters `ω` bound to the miner that trained them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub tree: DecisionTree,
    pub owner: NodeId,
}

impl TrainedModel {
    pub fn new(tree: DecisionTree, owner: NodeId) -> Self {
        TrainedModel { tree, owner }
    }

    /// Serialized parameters `ω`.
    pub fn param_bytes(&self) -> Vec<u8> {
        self.tree.to_bytes()
    }

    /// `Hash(ω)`, used to detect the same parameters submitted twice.
    pub fn params_digest(&self) -> HashDigest {
        HashDigest::of(&self.param_bytes())
    }

    /// `ModelHash = Hash(ω ‖ miner_id)` for an arbitrary claimed miner.
    pub fn model_hash_for(&self, miner: NodeId) -> HashDigest {
        model_hash(&self.param_bytes(), miner)
    }

    /// `ModelHash` bound to the owner recorded in this model.
    pub fn model_hash(&self) -> HashDigest {
        self.model_hash_for(self.owner)
    }
}

pub(crate) fn model_hash(params: &[u8], miner: NodeId) -> HashDigest {
    HashDigest::of_parts(&[params, &miner.0.to_be_bytes()])
}

/// `Hash(ω ‖ miner)` for bare parameters, as a validator recomputes it.
pub fn model_hash_of(tree: &DecisionTree, miner: NodeId) -> HashDigest {
    model_hash(&tree.to_bytes(), miner)
}

impl Encode for TrainedModel {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_node(self.owner);
        self.tree.encode(enc);
    }
}

impl Decode for TrainedModel {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let owner = dec.node()?;
        let tree = DecisionTree::decode(dec)?;
        Ok(TrainedModel { tree, owner })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_hash_binds_identity() {
        let model = TrainedModel::new(DecisionTree::constant(2, 3, 1), NodeId(4));
        assert_ne!(model.model_hash_for(NodeId(4)), model.model_hash_for(NodeId(5)));
        assert_eq!(model.model_hash(), model.model_hash_for(NodeId(4)));
        // ω ‖ M, with M big-endian
        let mut raw = model.param_bytes();
        raw.extend_from_slice(&[0, 0, 0, 4]);
        assert_eq!(model.model_hash(), HashDigest::of(&raw));
    }
}
