//! Local taxonomic tree built from the label paths of one dataset, plus leaf
//! softmax and marginal node probabilities.
//!
//! Leaf slots are assigned by a depth-first walk visiting children in name
//! order, so every subtree owns a contiguous slot range. Node probabilities
//! are folded bottom-up over children in that same order; a parent's value is
//! therefore bit-identical to the sum of its children's values.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// GTDB-style single-letter rank prefixes in canonical order.
const RANK_PREFIXES: [char; 7] = ['d', 'p', 'c', 'o', 'f', 'g', 's'];

/// Lower clamp applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// A rooted label path, e.g. `d__Bacteria;p__Firmicutes;c__Bacilli`.
///
/// The rank of each label is its position. An empty path means unassigned.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RankedPath {
    labels: Vec<String>,
}

impl RankedPath {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let text = labels.join(";");
        let parsed = Self::parse_line(&text, 0)?;
        if parsed.labels != labels {
            return Err(Error::parse(0, format!("labels do not round-trip: {text:?}")));
        }
        Ok(parsed)
    }

    pub fn unassigned() -> Self {
        Self::default()
    }

    /// Parses canonical text; `line` is only used for error reporting.
    ///
    /// A prefix-only token such as `s__` marks the end of the assignment and
    /// must only be followed by other prefix-only tokens.
    pub fn parse_line(text: &str, line: usize) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(Self::default());
        }
        let mut labels = Vec::new();
        let mut truncated = false;
        let mut last_prefix: Option<usize> = None;
        for (pos, raw) in text.split(';').enumerate() {
            let token = raw.trim();
            if token.is_empty() {
                return Err(Error::parse(line, format!("empty name token at rank {pos}")));
            }
            if let Some(rank) = prefix_rank(token) {
                if last_prefix.is_some_and(|prev| rank <= prev) {
                    return Err(Error::parse(
                        line,
                        format!("non-monotone rank: {token:?} at position {pos}"),
                    ));
                }
                last_prefix = Some(rank);
                if token.len() == 3 {
                    truncated = true;
                    continue;
                }
            }
            if truncated {
                return Err(Error::parse(
                    line,
                    format!("rank gap: {token:?} follows an empty rank"),
                ));
            }
            labels.push(token.to_string());
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of ranks assigned.
    pub fn depth(&self) -> usize {
        self.labels.len()
    }

    pub fn is_unassigned(&self) -> bool {
        self.labels.is_empty()
    }

    /// Path cut to at most `depth` ranks.
    pub fn truncated(&self, depth: usize) -> Self {
        Self {
            labels: self.labels[..depth.min(self.labels.len())].to_vec(),
        }
    }

    pub fn to_text(&self) -> String {
        self.labels.join(";")
    }
}

fn prefix_rank(token: &str) -> Option<usize> {
    let mut chars = token.chars();
    let letter = chars.next()?;
    if chars.next()? != '_' || chars.next()? != '_' {
        return None;
    }
    RANK_PREFIXES.iter().position(|&c| c == letter)
}

impl fmt::Display for RankedPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for RankedPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_line(s, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub parent: Option<usize>,
    pub name: String,
    pub depth: usize,
    /// Child ids sorted by name.
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaxTree {
    nodes: Vec<Node>,
    by_path: HashMap<String, usize>,
    leaf_slot: Vec<Option<usize>>,
    slot_node: Vec<usize>,
    /// Half-open leaf-slot range under each node.
    leaf_range: Vec<(usize, usize)>,
    path_cache: Vec<Vec<usize>>,
}

pub const ROOT: usize = 0;

impl TaxTree {
    /// Builds the tree holding every prefix of every path.
    ///
    /// Node ids follow first appearance; leaf slots follow the name-sorted
    /// depth-first order.
    pub fn build<'a, I>(paths: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a RankedPath>,
    {
        let mut nodes = vec![Node {
            id: ROOT,
            parent: None,
            name: String::new(),
            depth: 0,
            children: Vec::new(),
        }];
        let mut by_path: HashMap<String, usize> = HashMap::new();
        by_path.insert(String::new(), ROOT);
        let mut seen_any = false;

        for path in paths {
            seen_any = true;
            let mut parent = ROOT;
            let mut key = String::new();
            for (depth, label) in path.labels().iter().enumerate() {
                if depth > 0 {
                    key.push(';');
                }
                key.push_str(label);
                parent = match by_path.get(&key) {
                    Some(&id) => id,
                    None => {
                        let id = nodes.len();
                        nodes.push(Node {
                            id,
                            parent: Some(parent),
                            name: label.clone(),
                            depth: depth + 1,
                            children: Vec::new(),
                        });
                        nodes[parent].children.push(id);
                        by_path.insert(key.clone(), id);
                        id
                    }
                };
            }
        }
        if !seen_any {
            return Err(Error::Empty("no label paths to build a tree from".into()));
        }

        for i in 0..nodes.len() {
            let mut children = std::mem::take(&mut nodes[i].children);
            children.sort_by(|&a, &b| nodes[a].name.cmp(&nodes[b].name));
            nodes[i].children = children;
        }

        let n = nodes.len();
        let mut leaf_slot = vec![None; n];
        let mut slot_node = Vec::new();
        let mut leaf_range = vec![(0, 0); n];
        // Iterative DFS; children pushed in reverse so they pop in name order.
        let mut stack = vec![(ROOT, false)];
        while let Some((id, done)) = stack.pop() {
            if done {
                let lo = nodes[id]
                    .children
                    .first()
                    .map_or(slot_node.len(), |&c| leaf_range[c].0);
                leaf_range[id] = (lo, slot_node.len());
                continue;
            }
            if nodes[id].children.is_empty() && id != ROOT {
                leaf_slot[id] = Some(slot_node.len());
                leaf_range[id] = (slot_node.len(), slot_node.len() + 1);
                slot_node.push(id);
                continue;
            }
            stack.push((id, true));
            for &c in nodes[id].children.iter().rev() {
                stack.push((c, false));
            }
        }

        let mut path_cache: Vec<Vec<usize>> = vec![Vec::new(); n];
        for id in 1..n {
            // Parents always precede children in id order.
            let parent = nodes[id].parent.expect("non-root has parent");
            let mut p = path_cache[parent].clone();
            p.push(id);
            path_cache[id] = p;
        }

        Ok(Self {
            nodes,
            by_path,
            leaf_slot,
            slot_node,
            leaf_range,
            path_cache,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_leaves(&self) -> usize {
        self.slot_node.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Result<&Node> {
        self.nodes.get(id).ok_or(Error::Index {
            index: id,
            len: self.nodes.len(),
        })
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.leaf_slot.get(id).copied().flatten().is_some()
    }

    pub fn leaf_slot(&self, id: usize) -> Option<usize> {
        self.leaf_slot.get(id).copied().flatten()
    }

    pub fn leaf_node(&self, slot: usize) -> usize {
        self.slot_node[slot]
    }

    /// Leaf slots under `id` as a half-open range.
    pub fn descendant_leaves(&self, id: usize) -> std::ops::Range<usize> {
        let (lo, hi) = self.leaf_range[id];
        lo..hi
    }

    /// Node ids from the root (exclusive) down to `id`.
    pub fn path_ids(&self, id: usize) -> &[usize] {
        &self.path_cache[id]
    }

    pub fn path_of(&self, id: usize) -> RankedPath {
        RankedPath {
            labels: self.path_cache[id]
                .iter()
                .map(|&n| self.nodes[n].name.clone())
                .collect(),
        }
    }

    pub fn resolve(&self, path: &RankedPath) -> Result<usize> {
        self.by_path
            .get(&path.to_text())
            .copied()
            .ok_or_else(|| Error::UnknownLabel(path.to_text()))
    }

    /// Canonical paths of every non-root node in id order. Rebuilding from
    /// this list reproduces the same ids and leaf slots.
    pub fn canonical_paths(&self) -> Vec<RankedPath> {
        (1..self.nodes.len()).map(|id| self.path_of(id)).collect()
    }

    /// Deepest rank present, i.e. the maximal node depth.
    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    fn require_leaves(&self) -> Result<()> {
        if self.n_leaves() == 0 {
            Err(Error::DegenerateTree)
        } else {
            Ok(())
        }
    }
}

/// Softmax over leaf logits with max subtraction.
pub fn leaf_probabilities(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::DegenerateTree);
    }
    if let Some(i) = logits.iter().position(|z| !z.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logit at slot {i}")));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, 1.0, &mut out);
    Ok(out)
}

/// `softmax(logits / tau)` written into `out`. Inputs assumed finite.
pub(crate) fn softmax_into(logits: &[f64], tau: f64, out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = ((z - max) / tau).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Marginal probability of every node, indexed by node id.
pub fn node_probabilities(tree: &TaxTree, leaf_probs: &[f64]) -> Result<Vec<f64>> {
    tree.require_leaves()?;
    if leaf_probs.len() != tree.n_leaves() {
        return Err(Error::Shape(format!(
            "{} leaf probabilities for {} leaves",
            leaf_probs.len(),
            tree.n_leaves()
        )));
    }
    let mut values = vec![0.0; tree.len()];
    for id in (0..tree.len()).rev() {
        values[id] = match tree.leaf_slot(id) {
            Some(slot) => leaf_probs[slot],
            None => tree.nodes[id]
                .children
                .iter()
                .fold(0.0, |acc, &c| acc + values[c]),
        };
    }
    Ok(values)
}

pub fn node_probability(tree: &TaxTree, leaf_probs: &[f64], node_id: usize) -> Result<f64> {
    tree.node(node_id)?;
    Ok(node_probabilities(tree, leaf_probs)?[node_id])
}

/// Sum of clamped log-probabilities along the target's root-to-node path,
/// root excluded.
pub fn path_log_likelihood(tree: &TaxTree, leaf_probs: &[f64], target: &RankedPath) -> Result<f64> {
    let id = tree.resolve(target)?;
    if id == ROOT {
        return Ok(0.0);
    }
    let probs = node_probabilities(tree, leaf_probs)?;
    Ok(tree
        .path_ids(id)
        .iter()
        .map(|&u| probs[u].max(PROB_FLOOR).ln())
        .sum())
}
