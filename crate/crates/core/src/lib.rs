//! Protocol core of the BagChain simulator.
//!
//! BagChain replaces most of the hash grinding of proof-of-work with the
//! training of bagged base models. Every block height executes one learning
//! task in three phases: miners commit base models in MiniBlocks, aggregate
//! them into Ensemble Blocks once the validation set is published, and rank
//! the ensembles on the test set inside a proof-of-work Key Block.
//!
//! This crate is `no_std` (it needs `alloc`) and performs no IO. File formats,
//! the CLI and the parallel driver live in the `bagchain-sim` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod chain;
pub mod codec;
pub mod consensus;
pub mod hash;
pub mod ml;
pub mod netsim;
pub mod world;

pub use hash::{HashDigest, Target};

/// Simulation time, in rounds.
pub type Round = u64;

/// Key Block height. Genesis is height 0.
pub type Height = u64;

/// Identity of a miner or the requester, assigned by the simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    /// Placeholder producer of the genesis block.
    pub const GENESIS: NodeId = NodeId(u32::MAX);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl core::fmt::Display for NodeId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}
