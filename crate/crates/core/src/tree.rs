//! Binary regression trees shared by both learners.
//!
//! Nodes are stored flat in preorder: the root is node 0 and a split's left
//! child immediately follows it. Rows with `x[variable] <= cut` go left.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::resampling::ResampleCounts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Cart,
    Ci,
}

impl Learner {
    pub const ALL: [Learner; 2] = [Learner::Cart, Learner::Ci];

    pub fn as_str(self) -> &'static str {
        match self {
            Learner::Cart => "cart",
            Learner::Ci => "ci",
        }
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Learner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cart" => Ok(Learner::Cart),
            "ci" => Ok(Learner::Ci),
            other => Err(Error::param(format!(
                "unknown tree type '{other}' (expected cart or ci)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub variable: usize,
    pub cut: f64,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.variable] <= self.cut
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf { value: f64 },
    Split { rule: SplitRule, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    nodes: Vec<Node>,
    p: usize,
    learner: Learner,
}

impl TreeModel {
    pub fn single_leaf(value: f64, p: usize, learner: Learner) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
            p,
            learner,
        }
    }

    /// Rebuilds a tree from a preorder node list, checking that it is a
    /// well-formed binary tree over `p` variables.
    pub fn from_nodes(nodes: Vec<Node>, p: usize, learner: Learner) -> Result<Self> {
        let tree = Self { nodes, p, learner };
        tree.validate()?;
        Ok(tree)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Format("tree has no nodes".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut expected_next = 0usize;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            if idx != expected_next || idx >= self.nodes.len() || seen[idx] {
                return Err(Error::Format(format!("node {idx} is not in preorder position")));
            }
            seen[idx] = true;
            expected_next += 1;
            if let Node::Split { rule, left, right } = &self.nodes[idx] {
                if rule.variable >= self.p {
                    return Err(Error::Format(format!(
                        "split variable {} out of range for p = {}",
                        rule.variable, self.p
                    )));
                }
                if !rule.cut.is_finite() || *left != idx + 1 {
                    return Err(Error::Format(format!("malformed split at node {idx}")));
                }
                stack.push(*right);
                stack.push(*left);
            }
        }
        if expected_next != self.nodes.len() {
            return Err(Error::Format("unreachable nodes in tree".into()));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn learner(&self) -> Learner {
        self.learner
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn root_split(&self) -> Option<SplitRule> {
        match self.nodes[0] {
            Node::Split { rule, .. } => Some(rule),
            Node::Leaf { .. } => None,
        }
    }

    pub fn split_rules(&self) -> impl Iterator<Item = SplitRule> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { rule, .. } => Some(*rule),
            Node::Leaf { .. } => None,
        })
    }

    /// Index of the leaf reached by `x` (no length check).
    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { .. } => return idx,
                Node::Split { rule, left, right } => {
                    idx = if rule.goes_left(x) { *left } else { *right };
                }
            }
        }
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.p)?;
        Ok(self.predict_unchecked(x))
    }

    /// Same structure with leaf values recomputed as count-weighted response
    /// means of the training rows routed to each leaf. Leaves that receive no
    /// weight keep their previous value.
    pub fn refit_leaves(&self, data: &Dataset, w: &ResampleCounts) -> Result<Self> {
        check_training(data, w)?;
        let mut sums = vec![(0.0f64, 0u64); self.nodes.len()];
        for (i, &c) in w.counts().iter().enumerate() {
            if c > 0 {
                let leaf = self.leaf_index(&data.row(i));
                sums[leaf].0 += f64::from(c) * data.response()[i];
                sums[leaf].1 += u64::from(c);
            }
        }
        let mut nodes = self.nodes.clone();
        for (node, (s, wt)) in nodes.iter_mut().zip(sums) {
            if let Node::Leaf { value } = node {
                if wt > 0 {
                    *value = s / wt as f64;
                }
            }
        }
        Ok(Self {
            nodes,
            p: self.p,
            learner: self.learner,
        })
    }
}

pub(crate) fn check_point(x: &[f64], p: usize) -> Result<()> {
    if x.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("prediction point has non-finite values".into()));
    }
    Ok(())
}

pub(crate) fn check_training(data: &Dataset, w: &ResampleCounts) -> Result<()> {
    if w.n() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: w.n(),
        });
    }
    Ok(())
}

/// Midpoint cut between two consecutive distinct values `lo < hi`, guaranteed
/// to satisfy `lo <= cut < hi`.
#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = 0.5 * (lo + hi);
    if m < hi {
        m
    } else {
        lo
    }
}

/// Per-column ranks of the training data (ties share a rank). Sorting node
/// members by rank is equivalent to sorting by value and avoids float compares.
pub(crate) struct Presorted {
    ranks: Vec<Vec<u32>>,
}

impl Presorted {
    pub(crate) fn new(data: &Dataset) -> Self {
        let n = data.n();
        let ranks = data
            .columns()
            .iter()
            .map(|col| {
                let mut order: Vec<u32> = (0..n as u32).collect();
                order.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                let mut rank = vec![0u32; n];
                let mut r = 0u32;
                for k in 0..n {
                    if k > 0 && col[order[k] as usize] != col[order[k - 1] as usize] {
                        r += 1;
                    }
                    rank[order[k] as usize] = r;
                }
                rank
            })
            .collect();
        Self { ranks }
    }

    /// Sorts `members` by the value of column `variable` and returns the
    /// sorted `(x, y, w)` triples.
    pub(crate) fn sorted_node(
        &self,
        data: &Dataset,
        w: &[u32],
        variable: usize,
        members: &[u32],
        keys: &mut Vec<u64>,
        out: &mut Vec<(f64, f64, f64)>,
    ) {
        let ranks = &self.ranks[variable];
        keys.clear();
        keys.extend(
            members
                .iter()
                .map(|&i| (u64::from(ranks[i as usize]) << 32) | u64::from(i)),
        );
        keys.sort_unstable();
        let col = data.column(variable);
        let y = data.response();
        out.clear();
        out.extend(keys.iter().map(|&k| {
            let i = (k & 0xffff_ffff) as usize;
            (col[i], y[i], f64::from(w[i]))
        }));
    }
}

/// Sorts `(x, y, w)` triples of every row with positive weight by `x`.
pub(crate) fn sorted_active(x: &[f64], y: &[f64], w: &[u32]) -> Vec<(f64, f64, f64)> {
    let mut rows: Vec<(f64, f64, f64)> = x
        .iter()
        .zip(y)
        .zip(w)
        .filter(|(_, &c)| c > 0)
        .map(|((&xi, &yi), &c)| (xi, yi, f64::from(c)))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    rows
}

/// Shared growing parameters.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub mtry: usize,
    pub min_node_size: usize,
}

pub(crate) fn validate_grow(data: &Dataset, w: &ResampleCounts, params: GrowParams) -> Result<()> {
    check_training(data, w)?;
    if params.mtry == 0 || params.mtry > data.p() {
        return Err(Error::param(format!(
            "mtry = {} outside 1..={}",
            params.mtry,
            data.p()
        )));
    }
    if params.min_node_size == 0 {
        return Err(Error::param("min_node_size must be >= 1"));
    }
    if w.total() < 2 {
        return Err(Error::param("resample must contain at least 2 draws"));
    }
    Ok(())
}

/// Draws `mtry` distinct variables from `0..p`, returned in ascending order.
pub(crate) fn draw_candidates<R: Rng + ?Sized>(p: usize, mtry: usize, rng: &mut R) -> Vec<usize> {
    let mut vars = rand::seq::index::sample(rng, p, mtry).into_vec();
    vars.sort_unstable();
    vars
}

/// Context handed to a learner's split chooser for one node.
pub(crate) struct NodeView<'a> {
    pub data: &'a Dataset,
    pub weights: &'a [u32],
    pub members: &'a [u32],
    pub presorted: &'a Presorted,
}

/// Grows a tree top-down in preorder. A node becomes a leaf when its weighted
/// size is below `2 * min_node_size`, its responses are all equal, or
/// `choose` returns no split. `choose` is called exactly once per node that
/// passes the first two checks, in preorder, so rng consumption is
/// deterministic.
pub(crate) fn grow<R, F>(
    data: &Dataset,
    w: &ResampleCounts,
    params: GrowParams,
    learner: Learner,
    presorted: &Presorted,
    rng: &mut R,
    mut choose: F,
) -> TreeModel
where
    R: Rng + ?Sized,
    F: FnMut(&NodeView<'_>, &mut R) -> Option<SplitRule>,
{
    let weights = w.counts();
    let y = data.response();
    let mut members: Vec<u32> = weights
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, _)| i as u32)
        .collect();
    let mut nodes: Vec<Node> = Vec::new();
    // (start, end, parent split node whose right child this is)
    let mut stack: Vec<(usize, usize, Option<usize>)> = vec![(0, members.len(), None)];
    let min_weight = 2 * params.min_node_size as u64;

    while let Some((lo, hi, right_of)) = stack.pop() {
        let idx = nodes.len();
        if let Some(parent) = right_of {
            if let Node::Split { right, .. } = &mut nodes[parent] {
                *right = idx;
            }
        }
        let slice = &members[lo..hi];
        let mut weight = 0u64;
        let mut sum = 0.0;
        for &i in slice {
            let c = weights[i as usize];
            weight += u64::from(c);
            sum += f64::from(c) * y[i as usize];
        }
        let value = sum / weight as f64;
        let first = y[slice[0] as usize];
        let pure = slice.iter().all(|&i| y[i as usize] == first);

        let rule = if weight < min_weight || pure {
            None
        } else {
            let view = NodeView {
                data,
                weights,
                members: slice,
                presorted,
            };
            choose(&view, rng)
        };

        let Some(rule) = rule else {
            nodes.push(Node::Leaf {
                value: if pure { first } else { value },
            });
            continue;
        };

        let col = data.column(rule.variable);
        let part = &mut members[lo..hi];
        let mut split_at = 0;
        for k in 0..part.len() {
            if col[part[k] as usize] <= rule.cut {
                part.swap(k, split_at);
                split_at += 1;
            }
        }
        let mid = lo + split_at;
        debug_assert!(mid > lo && mid < hi, "split must separate active rows");
        nodes.push(Node::Split {
            rule,
            left: idx + 1,
            right: usize::MAX,
        });
        stack.push((mid, hi, Some(idx)));
        stack.push((lo, mid, None));
    }

    TreeModel {
        nodes,
        p: data.p(),
        learner,
    }
}
