//! Discrete-round message transport.
//!
//! A transfer over one link takes `max(1, ⌈size / bandwidth⌉)` rounds. Mesh
//! broadcasts only reach neighbours; receivers gossip blocks onwards.
//! Point-to-point fetches follow the cheapest path. There is no contention
//! between concurrent transfers.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hash::derive_seed;
use crate::{HashDigest, NodeId, Round};

/// Attempts at drawing a connected Erdős–Rényi graph before giving up.
pub const MESH_ATTEMPTS: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("topology needs at least one node")]
    Empty,
    #[error("edge ({0}, {1}) is a self-loop or names a missing node")]
    BadEdge(u32, u32),
    #[error("bandwidth must be positive and finite")]
    BadBandwidth,
    #[error("edge probability must lie in [0, 1]")]
    BadProbability,
    #[error("graph is not connected")]
    Disconnected,
    #[error("no connected graph after {0} draws")]
    NoConnectedGraph(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopologyKind {
    FullyConnected,
    Mesh,
}

/// Transfer cost of one object over one link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cost {
    /// Size in data units, divided by the link bandwidth.
    Size(f64),
    /// A fixed number of rounds per link, whatever the bandwidth.
    Fixed(Round),
}

impl Cost {
    pub fn hop_delay(self, bandwidth: f64) -> Round {
        match self {
            Cost::Size(size) => hop_delay(size, bandwidth),
            Cost::Fixed(rounds) => rounds.max(1),
        }
    }
}

/// `max(1, ⌈size / bandwidth⌉)`.
pub fn hop_delay(size: f64, bandwidth: f64) -> Round {
    let rounds = libm::ceil(size / bandwidth);
    if rounds.is_finite() && rounds > 1.0 {
        rounds as Round
    } else {
        1
    }
}

/// Symmetric, loop-free, connected graph over the miners.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    kind: TopologyKind,
    adjacency: Vec<Vec<(u32, f64)>>,
}

impl Topology {
    pub fn fully_connected(n: usize, bandwidth: f64) -> Result<Self, TopologyError> {
        check_bandwidth(bandwidth)?;
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let adjacency = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| (j as u32, bandwidth)).collect())
            .collect();
        Ok(Topology {
            kind: TopologyKind::FullyConnected,
            adjacency,
        })
    }

    /// `G(n, p)` redrawn until connected.
    pub fn erdos_renyi(n: usize, p: f64, bandwidth: f64, seed: u64) -> Result<Self, TopologyError> {
        check_bandwidth(bandwidth)?;
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(TopologyError::BadProbability);
        }
        for attempt in 0..MESH_ATTEMPTS {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed("erdos-renyi", &[seed, attempt as u64]));
            let mut edges = Vec::new();
            for i in 0..n as u32 {
                for j in i + 1..n as u32 {
                    if rng.random_bool(p) {
                        edges.push((i, j, bandwidth));
                    }
                }
            }
            match Self::mesh(n, &edges) {
                Ok(t) => return Ok(t),
                Err(TopologyError::Disconnected) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(TopologyError::NoConnectedGraph(MESH_ATTEMPTS))
    }

    /// Builds a mesh from undirected `(u, v, bandwidth)` edges. Repeated edges
    /// keep the last bandwidth.
    pub fn mesh(n: usize, edges: &[(u32, u32, f64)]) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let mut links: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); n];
        for &(u, v, bw) in edges {
            if u == v || u as usize >= n || v as usize >= n {
                return Err(TopologyError::BadEdge(u, v));
            }
            check_bandwidth(bw)?;
            links[u as usize].insert(v, bw);
            links[v as usize].insert(u, bw);
        }
        let topology = Topology {
            kind: TopologyKind::Mesh,
            adjacency: links.into_iter().map(|m| m.into_iter().collect()).collect(),
        };
        if !topology.is_connected() {
            return Err(TopologyError::Disconnected);
        }
        Ok(topology)
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, node: NodeId) -> &[(u32, f64)] {
        &self.adjacency[node.index()]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// True when every pair of nodes shares a link, so gossip is unnecessary.
    pub fn is_complete(&self) -> bool {
        let n = self.len();
        self.adjacency.iter().all(|a| a.len() + 1 == n)
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    queue.push_back(v as usize);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Cheapest store-and-forward delay from `src` to `dst`; zero for `src == dst`.
    pub fn path_delay(&self, src: NodeId, dst: NodeId, cost: Cost) -> Round {
        let n = self.len();
        let mut dist = vec![Round::MAX; n];
        let mut done = vec![false; n];
        dist[src.index()] = 0;
        for _ in 0..n {
            let Some(u) = (0..n)
                .filter(|&i| !done[i] && dist[i] != Round::MAX)
                .min_by_key(|&i| dist[i])
            else {
                break;
            };
            if u == dst.index() {
                break;
            }
            done[u] = true;
            for &(v, bw) in &self.adjacency[u] {
                let d = dist[u] + cost.hop_delay(bw);
                if d < dist[v as usize] {
                    dist[v as usize] = d;
                }
            }
        }
        dist[dst.index()]
    }

    /// Hop count of the longest shortest path.
    pub fn diameter(&self) -> usize {
        (0..self.len())
            .map(|s| {
                let mut hops = vec![usize::MAX; self.len()];
                hops[s] = 0;
                let mut queue = VecDeque::from([s]);
                while let Some(u) = queue.pop_front() {
                    for &(v, _) in &self.adjacency[u] {
                        if hops[v as usize] == usize::MAX {
                            hops[v as usize] = hops[u] + 1;
                            queue.push_back(v as usize);
                        }
                    }
                }
                hops.into_iter().max().unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }
}

fn check_bandwidth(bw: f64) -> Result<(), TopologyError> {
    if bw > 0.0 && bw.is_finite() {
        Ok(())
    } else {
        Err(TopologyError::BadBandwidth)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope<P> {
    pub source: NodeId,
    pub dest: NodeId,
    pub sent: Round,
    pub payload: P,
}

type Slot = (Round, NodeId, NodeId, HashDigest, u64);

/// In-flight messages between the miners and a hub node (the requester)
/// that has a direct link to every miner.
#[derive(Clone, Debug)]
pub struct Network<P> {
    topology: Topology,
    hub: NodeId,
    hub_bandwidth: f64,
    inflight: BTreeMap<Slot, (Round, P)>,
    seq: u64,
}

impl<P: Clone> Network<P> {
    /// The hub takes the first ID after the miners.
    pub fn new(topology: Topology, hub_bandwidth: f64) -> Result<Self, TopologyError> {
        check_bandwidth(hub_bandwidth)?;
        let hub = NodeId(topology.len() as u32);
        Ok(Network {
            topology,
            hub,
            hub_bandwidth,
            inflight: BTreeMap::new(),
            seq: 0,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn hub(&self) -> NodeId {
        self.hub
    }

    pub fn in_flight(&self) -> usize {
        self.inflight.len()
    }

    /// Point-to-point delay between any two nodes, hub included.
    pub fn delay(&self, src: NodeId, dst: NodeId, cost: Cost) -> Round {
        if src == dst {
            0
        } else if src == self.hub || dst == self.hub {
            cost.hop_delay(self.hub_bandwidth)
        } else {
            self.topology.path_delay(src, dst, cost)
        }
    }

    fn enqueue(&mut self, src: NodeId, dst: NodeId, digest: HashDigest, payload: P, sent: Round, delay: Round) {
        let slot = (sent + delay.max(1), dst, src, digest, self.seq);
        self.seq += 1;
        self.inflight.insert(slot, (sent, payload));
    }

    /// Sends to every link neighbour of `src` except `except`. Returns the
    /// number of messages queued.
    pub fn broadcast(
        &mut self,
        src: NodeId,
        payload: &P,
        digest: HashDigest,
        cost: Cost,
        round: Round,
        except: Option<NodeId>,
    ) -> usize {
        let links: Vec<(u32, f64)> = self.topology.neighbors(src).to_vec();
        let mut sent = 0;
        for (v, bw) in links {
            let dst = NodeId(v);
            if Some(dst) == except {
                continue;
            }
            self.enqueue(src, dst, digest, payload.clone(), round, cost.hop_delay(bw));
            sent += 1;
        }
        sent
    }

    /// Direct delivery from the hub to every miner.
    pub fn hub_broadcast(&mut self, payload: &P, digest: HashDigest, cost: Cost, round: Round) {
        let delay = cost.hop_delay(self.hub_bandwidth);
        for v in 0..self.topology.len() as u32 {
            self.enqueue(self.hub, NodeId(v), digest, payload.clone(), round, delay);
        }
    }

    /// Point-to-point send along the cheapest path.
    pub fn send(&mut self, src: NodeId, dst: NodeId, payload: P, digest: HashDigest, cost: Cost, round: Round) {
        let delay = self.delay(src, dst, cost);
        self.enqueue(src, dst, digest, payload, round, delay);
    }

    /// Removes and returns every message due at `round`, ordered by
    /// `(destination, source, payload digest)`.
    pub fn deliver(&mut self, round: Round) -> Vec<Envelope<P>> {
        let later = self
            .inflight
            .split_off(&(round + 1, NodeId(0), NodeId(0), HashDigest::ZERO, 0));
        let due = core::mem::replace(&mut self.inflight, later);
        due.into_iter()
            .map(|((_, dest, source, _, _), (sent, payload))| Envelope {
                source,
                dest,
                sent,
                payload,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn digest(x: u8) -> HashDigest {
        HashDigest::of(&[x])
    }

    #[test]
    fn hop_delays() {
        assert_eq!(hop_delay(6.0, 0.5), 12);
        assert_eq!(hop_delay(2.0, 0.5), 4);
        assert_eq!(hop_delay(0.0, 0.5), 1);
        assert_eq!(Cost::Fixed(0).hop_delay(0.5), 1);
        assert_eq!(Cost::Fixed(32).hop_delay(0.5), 32);
    }

    #[test]
    fn mesh_validation() {
        assert_eq!(Topology::mesh(3, &[(0, 1, 1.0)]), Err(TopologyError::Disconnected));
        assert_eq!(Topology::mesh(2, &[(0, 0, 1.0)]), Err(TopologyError::BadEdge(0, 0)));
        assert_eq!(Topology::mesh(2, &[(0, 1, 0.0)]), Err(TopologyError::BadBandwidth));
        let line = Topology::mesh(3, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap();
        assert!(!line.is_complete());
        assert_eq!(line.diameter(), 2);
        assert_eq!(line.path_delay(NodeId(0), NodeId(2), Cost::Size(2.0)), 8);
        assert_eq!(line.path_delay(NodeId(1), NodeId(1), Cost::Size(2.0)), 0);
    }

    #[test]
    fn erdos_renyi_is_connected_and_seeded() {
        let a = Topology::erdos_renyi(10, 0.3, 0.5, 4).unwrap();
        assert!(a.is_connected());
        assert_eq!(a, Topology::erdos_renyi(10, 0.3, 0.5, 4).unwrap());
        assert_eq!(
            Topology::erdos_renyi(3, 0.0, 0.5, 1),
            Err(TopologyError::NoConnectedGraph(MESH_ATTEMPTS))
        );
    }

    #[test]
    fn full_broadcast_reaches_everyone_after_one_hop() {
        let mut net: Network<u8> = Network::new(Topology::fully_connected(4, 0.5).unwrap(), 0.5).unwrap();
        assert_eq!(net.broadcast(NodeId(1), &7, digest(7), Cost::Size(6.0), 10, None), 3);
        assert!(net.deliver(21).is_empty());
        let got = net.deliver(22);
        assert_eq!(got.iter().map(|e| e.dest.0).collect::<Vec<_>>(), vec![0, 2, 3]);
        assert!(got.iter().all(|e| e.sent == 10 && e.source == NodeId(1)));
        assert_eq!(net.in_flight(), 0);
    }

    #[test]
    fn same_round_deliveries_are_sorted() {
        let mut net: Network<u8> = Network::new(Topology::fully_connected(3, 1.0).unwrap(), 1.0).unwrap();
        net.send(NodeId(2), NodeId(0), 1, digest(9), Cost::Size(0.0), 0);
        net.send(NodeId(1), NodeId(0), 2, digest(8), Cost::Size(0.0), 0);
        net.send(NodeId(1), NodeId(0), 3, digest(1), Cost::Size(0.0), 0);
        let got = net.deliver(1);
        let order: Vec<_> = got.iter().map(|e| (e.source.0, e.payload)).collect();
        let mut expected = vec![(1, 2, digest(8)), (1, 3, digest(1)), (2, 1, digest(9))];
        expected.sort_by_key(|&(s, _, d)| (s, d));
        assert_eq!(order, expected.into_iter().map(|(s, p, _)| (s, p)).collect::<Vec<_>>());
    }

    #[test]
    fn hub_links_are_direct() {
        let line = Topology::mesh(3, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap();
        let mut net: Network<u8> = Network::new(line, 1.0).unwrap();
        assert_eq!(net.hub(), NodeId(3));
        assert_eq!(net.delay(NodeId(3), NodeId(2), Cost::Size(3.0)), 3);
        net.hub_broadcast(&1, digest(1), Cost::Size(0.0), 5);
        assert_eq!(net.deliver(6).len(), 3);
    }
}
