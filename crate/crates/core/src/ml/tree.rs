//! Depth-limited CART classifier with Gini impurity.
//!
//! Split quality is compared with exact integer arithmetic. For a candidate
//! split the weighted child impurity is `n - S` with
//! `S = Σ l_c²/n_l + Σ r_c²/n_r`, so minimising impurity means maximising
//! `S`, a rational whose numerator and denominator fit in `u128`. Ties are
//! therefore real ties, and they go to the smallest feature index and then the
//! smallest threshold.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{Dataset, MlError};
use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TreeParams {
    pub max_depth: u32,
    pub min_leaf: u32,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_leaf: 5,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), MlError> {
        if self.max_depth == 0 {
            return Err(MlError::InvalidParams("max depth must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(MlError::InvalidParams("min leaf size must be at least 1"));
        }
        Ok(())
    }
}

/// A tree node. Nodes are stored in pre-order, so the left child of a split
/// at index `i` is always `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Per-class training counts that reached this leaf.
    Leaf { counts: Vec<u32> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    n_features: u32,
    n_classes: u32,
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_classes(&self) -> u32 {
        self.n_classes
    }

    pub fn n_features(&self) -> u32 {
        self.n_features
    }

    /// A tree that predicts `class` everywhere.
    pub fn constant(n_features: u32, n_classes: u32, class: u32) -> Self {
        let mut counts = vec![0; n_classes as usize];
        counts[class as usize] = 1;
        DecisionTree {
            n_features,
            n_classes,
            nodes: vec![Node::Leaf { counts }],
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> u32 {
        fn walk(nodes: &[Node], i: usize) -> u32 {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict_row(&self, row: &[f64]) -> u32 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature as usize] <= *threshold {
                        *left
                    } else {
                        *right
                    } as usize;
                }
                Node::Leaf { counts } => return argmax(counts),
            }
        }
    }

    /// `f(X; ω)` for every row of `data`.
    pub fn predict(&self, data: &Dataset) -> Vec<u32> {
        (0..data.len()).map(|i| self.predict_row(data.row(i))).collect()
    }

    /// Leaf class probabilities for one row.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature as usize] <= *threshold {
                        *left
                    } else {
                        *right
                    } as usize;
                }
                Node::Leaf { counts } => {
                    let total: u32 = counts.iter().sum();
                    return counts.iter().map(|&c| f64::from(c) / f64::from(total.max(1))).collect();
                }
            }
        }
    }

    fn check_well_formed(&self) -> Result<(), DecodeError> {
        if self.nodes.is_empty() {
            return Err(DecodeError::Invalid("empty tree"));
        }
        // pre-order: every subtree occupies a contiguous index range
        fn span(tree: &DecisionTree, i: usize, depth: u32) -> Result<usize, DecodeError> {
            if depth > 64 {
                return Err(DecodeError::Invalid("tree too deep"));
            }
            match tree.nodes.get(i).ok_or(DecodeError::Invalid("child index"))? {
                Node::Leaf { counts } => {
                    if counts.len() != tree.n_classes as usize {
                        return Err(DecodeError::Invalid("leaf class count"));
                    }
                    Ok(i + 1)
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= tree.n_features || threshold.is_nan() {
                        return Err(DecodeError::Invalid("split feature"));
                    }
                    if *left as usize != i + 1 {
                        return Err(DecodeError::Invalid("left child not next"));
                    }
                    let end_left = span(tree, i + 1, depth + 1)?;
                    if *right as usize != end_left {
                        return Err(DecodeError::Invalid("right child index"));
                    }
                    span(tree, end_left, depth + 1)
                }
            }
        }
        if span(self, 0, 0)? != self.nodes.len() {
            return Err(DecodeError::Invalid("unreachable nodes"));
        }
        Ok(())
    }
}

fn argmax(counts: &[u32]) -> u32 {
    let mut best = 0usize;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best as u32
}

/// Σ c² over class counts.
fn sum_sq(counts: &[u32]) -> u128 {
    counts.iter().map(|&c| u128::from(c) * u128::from(c)).sum()
}

/// `S = Σl²/n_l + Σr²/n_r` as an exact fraction.
#[derive(Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn new(left: &[u32], n_left: u32, right: &[u32], n_right: u32) -> Self {
        let (nl, nr) = (u128::from(n_left), u128::from(n_right));
        Score {
            num: sum_sq(left) * nr + sum_sq(right) * nl,
            den: nl * nr,
        }
    }

    fn cmp(&self, other: &Score) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: Score,
}

struct Builder<'a> {
    data: &'a Dataset,
    params: TreeParams,
    nodes: Vec<Node>,
    n_classes: usize,
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_classes];
        for &r in rows {
            counts[self.data.label(r) as usize] += 1;
        }
        counts
    }

    fn build(&mut self, rows: &mut [usize], depth: u32) -> u32 {
        let index = self.nodes.len() as u32;
        let counts = self.counts(rows);
        let n = rows.len() as u32;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.params.max_depth || pure || n < 2 * self.params.min_leaf {
            self.nodes.push(Node::Leaf { counts });
            return index;
        }
        let Some(best) = self.best_split(rows, &counts) else {
            self.nodes.push(Node::Leaf { counts });
            return index;
        };

        // stable partition keeps the child row order deterministic
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.data.value(r, best.feature) <= best.threshold);
        self.nodes.push(Node::Split {
            feature: best.feature as u32,
            threshold: best.threshold,
            left: index + 1,
            right: 0,
        });
        self.build(&mut left, depth + 1);
        let right_index = self.build(&mut right, depth + 1);
        if let Node::Split { right, .. } = &mut self.nodes[index as usize] {
            *right = right_index;
        }
        index
    }

    fn best_split(&self, rows: &[usize], counts: &[u32]) -> Option<Candidate> {
        let n = rows.len() as u32;
        let min_leaf = self.params.min_leaf;
        // parent: S_parent = Σc²/n; a split must strictly beat it
        let parent = Score {
            num: sum_sq(counts),
            den: u128::from(n),
        };
        let mut best: Option<Candidate> = None;
        // the order inside a run of equal values never affects a candidate,
        // since splits only fall between distinct values
        let mut column: Vec<(f64, u32)> = Vec::with_capacity(rows.len());

        for feature in 0..self.data.n_features() {
            column.clear();
            column.extend(rows.iter().map(|&r| (self.data.value(r, feature), self.data.label(r))));
            column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0u32; self.n_classes];
            let mut right = counts.to_vec();
            for i in 1..column.len() {
                let (lo, label) = column[i - 1];
                left[label as usize] += 1;
                right[label as usize] -= 1;
                let hi = column[i].0;
                let n_left = i as u32;
                if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let score = Score::new(&left, n_left, &right, n - n_left);
                if score.cmp(&parent) != Ordering::Greater {
                    continue;
                }
                let threshold = midpoint(lo, hi);
                let better = match &best {
                    None => true,
                    Some(b) => match score.cmp(&b.score) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => feature == b.feature && threshold < b.threshold,
                    },
                };
                if better {
                    best = Some(Candidate {
                        feature,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

/// A threshold strictly between `lo < hi`, such that `lo <= t < hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi && mid >= lo {
        mid
    } else {
        lo
    }
}

/// `Train(D; f)`: grows a greedy Gini-minimising CART tree.
///
/// Data whose features are all constant yields a single leaf predicting the
/// majority class.
pub fn train(data: &Dataset, params: &TreeParams) -> Result<DecisionTree, MlError> {
    params.validate()?;
    if data.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let mut builder = Builder {
        data,
        params: *params,
        nodes: Vec::new(),
        n_classes: data.n_classes() as usize,
    };
    let mut rows: Vec<usize> = (0..data.len()).collect();
    builder.build(&mut rows, 0);
    Ok(DecisionTree {
        n_features: data.n_features() as u32,
        n_classes: data.n_classes(),
        nodes: builder.nodes,
    })
}

impl Encode for DecisionTree {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u32(self.n_features);
        enc.put_u32(self.n_classes);
        enc.put_len(self.nodes.len());
        for node in &self.nodes {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    enc.put_u8(0);
                    enc.put_u32(*feature);
                    enc.put_f64(*threshold);
                    enc.put_u32(*left);
                    enc.put_u32(*right);
                }
                Node::Leaf { counts } => {
                    enc.put_u8(1);
                    enc.put_len(counts.len());
                    for &c in counts {
                        enc.put_u32(c);
                    }
                }
            }
        }
    }
}

impl Decode for DecisionTree {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let n_features = dec.u32()?;
        let n_classes = dec.u32()?;
        let n = dec.length()?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            nodes.push(match dec.u8()? {
                0 => Node::Split {
                    feature: dec.u32()?,
                    threshold: dec.f64()?,
                    left: dec.u32()?,
                    right: dec.u32()?,
                },
                1 => {
                    let k = dec.length()?;
                    let mut counts = Vec::with_capacity(k);
                    for _ in 0..k {
                        counts.push(dec.u32()?);
                    }
                    Node::Leaf { counts }
                }
                tag => return Err(DecodeError::InvalidTag { what: "tree node", tag }),
            });
        }
        let tree = DecisionTree {
            n_features,
            n_classes,
            nodes,
        };
        tree.check_well_formed()?;
        Ok(tree)
    }
}
