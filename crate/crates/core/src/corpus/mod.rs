//! The hierarchical corpus: a rooted labeled tree whose leaves own sample
//! sets, plus shortest-path queries on the tree metric.
//!
//! An internal node stands for the union of its leaf descendants; its samples
//! are never materialized separately. Distances are unweighted edge counts and
//! are answered through a lowest-common-ancestor table built once at
//! construction, so a [`CorpusTree`] is read-only and cheap to share.

mod manifest;

use std::path::PathBuf;

use thiserror::Error;

use crate::sample::{SampleError, SampleSet};

pub use manifest::{load_corpus, write_corpus, MANIFEST_FILE};

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("corpus has no nodes")]
    Empty,
    #[error("node ids must be dense 0..{count}; found id {id}")]
    NonDenseIds { id: NodeId, count: usize },
    #[error("dangling node reference: node {node} refers to {reference}")]
    DanglingReference { node: NodeId, reference: NodeId },
    #[error("expected exactly one root, found {0}")]
    RootCount(usize),
    #[error("node {child} is listed as a child of {parent} but records parent {recorded:?}")]
    ParentMismatch {
        parent: NodeId,
        child: NodeId,
        recorded: Option<NodeId>,
    },
    #[error("node {0} is not reachable from the root (cycle or disconnected component)")]
    Unreachable(NodeId),
    #[error("leaf {0} has no samples")]
    EmptyLeaf(NodeId),
    #[error("internal node {0} carries samples; only leaves may")]
    InternalSamples(NodeId),
    #[error("leaf {leaf} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        leaf: NodeId,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("leaf {leaf}: {source}")]
    Samples {
        leaf: NodeId,
        #[source]
        source: SampleError,
    },
    #[error("invalid node id {0}")]
    InvalidNode(NodeId),
    #[error("node {0} is not a leaf")]
    NotALeaf(NodeId),
    #[error("sample index {index} out of range for leaf {leaf} with {count} samples")]
    SampleIndex {
        leaf: NodeId,
        index: usize,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusNode {
    pub id: NodeId,
    pub label: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Present on leaves only.
    pub samples: Option<SampleSet>,
}

impl CorpusNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Validated rooted tree with precomputed depth and ancestor tables.
#[derive(Debug, Clone)]
pub struct CorpusTree {
    nodes: Vec<CorpusNode>,
    root: NodeId,
    depth: Vec<u32>,
    // up[j][v] is the 2^j-th ancestor of v (the root maps to itself).
    up: Vec<Vec<NodeId>>,
    leaves: Vec<NodeId>,
    // Pre-order entry time and the last entry time inside each subtree.
    tin: Vec<usize>,
    tout: Vec<usize>,
    leaves_by_tin: Vec<NodeId>,
    shape: Vec<usize>,
}

impl PartialEq for CorpusTree {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.nodes == other.nodes
    }
}

impl CorpusTree {
    /// Validates `nodes` and builds the query tables.
    ///
    /// Nodes may arrive in any order but their ids must be exactly
    /// `0..nodes.len()`. Child lists are sorted.
    pub fn new(mut nodes: Vec<CorpusNode>) -> Result<Self, CorpusError> {
        if nodes.is_empty() {
            return Err(CorpusError::Empty);
        }
        let count = nodes.len();
        nodes.sort_by_key(|n| n.id);
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(CorpusError::NonDenseIds { id: node.id, count });
            }
        }

        for node in &mut nodes {
            node.children.sort_unstable();
        }
        for node in &nodes {
            if let Some(p) = node.parent {
                if p >= count {
                    return Err(CorpusError::DanglingReference {
                        node: node.id,
                        reference: p,
                    });
                }
            }
            for &c in &node.children {
                if c >= count {
                    return Err(CorpusError::DanglingReference {
                        node: node.id,
                        reference: c,
                    });
                }
            }
        }

        let roots: Vec<NodeId> = nodes
            .iter()
            .filter(|n| n.parent.is_none())
            .map(|n| n.id)
            .collect();
        if roots.len() != 1 {
            return Err(CorpusError::RootCount(roots.len()));
        }
        let root = roots[0];

        // Every child edge must agree with the child's parent pointer, and
        // every non-root node must be listed by its parent exactly once.
        let mut listed = vec![0usize; count];
        for node in &nodes {
            for &c in &node.children {
                if nodes[c].parent != Some(node.id) {
                    return Err(CorpusError::ParentMismatch {
                        parent: node.id,
                        child: c,
                        recorded: nodes[c].parent,
                    });
                }
                listed[c] += 1;
            }
        }
        for node in &nodes {
            if let Some(p) = node.parent {
                if listed[node.id] != 1 {
                    return Err(CorpusError::ParentMismatch {
                        parent: p,
                        child: node.id,
                        recorded: node.parent,
                    });
                }
            }
        }

        // Iterative pre-order walk; children ascending.
        let mut depth = vec![u32::MAX; count];
        let mut tin = vec![usize::MAX; count];
        let mut tout = vec![0usize; count];
        let mut order = Vec::with_capacity(count);
        let mut stack = vec![(root, false)];
        depth[root] = 0;
        while let Some((v, exiting)) = stack.pop() {
            if exiting {
                tout[v] = order.len() - 1;
                continue;
            }
            if tin[v] != usize::MAX {
                return Err(CorpusError::Unreachable(v));
            }
            tin[v] = order.len();
            order.push(v);
            stack.push((v, true));
            for &c in nodes[v].children.iter().rev() {
                depth[c] = depth[v] + 1;
                stack.push((c, false));
            }
        }
        if let Some(v) = (0..count).find(|&v| tin[v] == usize::MAX) {
            return Err(CorpusError::Unreachable(v));
        }

        let mut shape: Option<Vec<usize>> = None;
        for node in &nodes {
            match (&node.samples, node.is_leaf()) {
                (None, true) => return Err(CorpusError::EmptyLeaf(node.id)),
                (Some(_), false) => return Err(CorpusError::InternalSamples(node.id)),
                (Some(s), true) => {
                    if s.is_empty() {
                        return Err(CorpusError::EmptyLeaf(node.id));
                    }
                    match &shape {
                        None => shape = Some(s.shape().to_vec()),
                        Some(expected) if expected.as_slice() != s.shape() => {
                            return Err(CorpusError::ShapeMismatch {
                                leaf: node.id,
                                expected: expected.clone(),
                                found: s.shape().to_vec(),
                            })
                        }
                        Some(_) => {}
                    }
                    s.check_unit_range()
                        .map_err(|source| CorpusError::Samples {
                            leaf: node.id,
                            source,
                        })?;
                }
                (None, false) => {}
            }
        }
        let shape = shape.expect("a valid tree has at least one leaf");

        let levels = (usize::BITS - count.leading_zeros()).max(1) as usize;
        let mut up = Vec::with_capacity(levels);
        up.push(
            nodes
                .iter()
                .map(|n| n.parent.unwrap_or(n.id))
                .collect::<Vec<_>>(),
        );
        for j in 1..levels {
            let prev = &up[j - 1];
            let next = (0..count).map(|v| prev[prev[v]]).collect();
            up.push(next);
        }

        let leaves: Vec<NodeId> = nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id).collect();
        let leaves_by_tin = order
            .iter()
            .copied()
            .filter(|&v| nodes[v].is_leaf())
            .collect();

        Ok(Self {
            nodes,
            root,
            depth,
            up,
            leaves,
            tin,
            tout,
            leaves_by_tin,
            shape,
        })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[CorpusNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&CorpusNode, CorpusError> {
        self.nodes.get(id).ok_or(CorpusError::InvalidNode(id))
    }

    pub fn label(&self, id: NodeId) -> Result<&str, CorpusError> {
        Ok(&self.node(id)?.label)
    }

    /// Shape shared by every sample in the corpus.
    pub fn sample_shape(&self) -> &[usize] {
        &self.shape
    }

    /// All leaf ids, ascending.
    pub fn leaf_ids(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_leaf(&self, id: NodeId) -> Result<bool, CorpusError> {
        Ok(self.node(id)?.is_leaf())
    }

    /// Depth of the deepest node (a single-node tree has depth 0).
    pub fn depth(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn node_depth(&self, id: NodeId) -> Result<u32, CorpusError> {
        self.check(id)?;
        Ok(self.depth[id])
    }

    pub fn samples(&self, leaf: NodeId) -> Result<&SampleSet, CorpusError> {
        self.node(leaf)?
            .samples
            .as_ref()
            .ok_or(CorpusError::NotALeaf(leaf))
    }

    pub fn sample(&self, leaf: NodeId, index: usize) -> Result<&[f32], CorpusError> {
        let set = self.samples(leaf)?;
        set.get(index).ok_or(CorpusError::SampleIndex {
            leaf,
            index,
            count: set.len(),
        })
    }

    pub fn total_samples(&self) -> usize {
        self.leaves
            .iter()
            .map(|&l| self.nodes[l].samples.as_ref().map_or(0, SampleSet::len))
            .sum()
    }

    pub fn lca(&self, a: NodeId, b: NodeId) -> Result<NodeId, CorpusError> {
        self.check(a)?;
        self.check(b)?;
        let (mut a, mut b) = if self.depth[a] < self.depth[b] {
            (b, a)
        } else {
            (a, b)
        };
        let mut diff = self.depth[a] - self.depth[b];
        let mut j = 0;
        while diff > 0 {
            if diff & 1 == 1 {
                a = self.up[j][a];
            }
            diff >>= 1;
            j += 1;
        }
        if a == b {
            return Ok(a);
        }
        for j in (0..self.up.len()).rev() {
            if self.up[j][a] != self.up[j][b] {
                a = self.up[j][a];
                b = self.up[j][b];
            }
        }
        Ok(self.up[0][a])
    }

    /// Number of edges on the unique path between `a` and `b`.
    pub fn tree_distance(&self, a: NodeId, b: NodeId) -> Result<u32, CorpusError> {
        let l = self.lca(a, b)?;
        Ok(self.depth[a] + self.depth[b] - 2 * self.depth[l])
    }

    /// `1 / (1 + d)` where `d` is the tree distance; 1 for identical nodes.
    pub fn closeness(&self, a: NodeId, b: NodeId) -> Result<f64, CorpusError> {
        Ok(closeness_from_distance(self.tree_distance(a, b)?))
    }

    /// Leaves in the subtree rooted at `id`, ascending.
    pub fn leaf_descendants(&self, id: NodeId) -> Result<Vec<NodeId>, CorpusError> {
        self.check(id)?;
        let (lo, hi) = (self.tin[id], self.tout[id]);
        let start = self.leaves_by_tin.partition_point(|&l| self.tin[l] < lo);
        let end = self.leaves_by_tin.partition_point(|&l| self.tin[l] <= hi);
        let mut out = self.leaves_by_tin[start..end].to_vec();
        out.sort_unstable();
        Ok(out)
    }

    fn check(&self, id: NodeId) -> Result<(), CorpusError> {
        if id < self.nodes.len() {
            Ok(())
        } else {
            Err(CorpusError::InvalidNode(id))
        }
    }
}

pub fn closeness_from_distance(d: u32) -> f64 {
    1.0 / (1.0 + f64::from(d))
}

/// Incremental construction with ids assigned in insertion order.
#[derive(Debug, Clone)]
pub struct CorpusBuilder {
    nodes: Vec<CorpusNode>,
}

impl CorpusBuilder {
    /// Starts a tree whose root (id 0) is labeled `root_label`.
    pub fn new(root_label: impl Into<String>) -> Self {
        Self {
            nodes: vec![CorpusNode {
                id: 0,
                label: root_label.into(),
                parent: None,
                children: Vec::new(),
                samples: None,
            }],
        }
    }

    /// Panics if `parent` has not been added.
    pub fn add_child(&mut self, parent: NodeId, label: impl Into<String>) -> NodeId {
        assert!(parent < self.nodes.len(), "unknown parent {parent}");
        let id = self.nodes.len();
        self.nodes.push(CorpusNode {
            id,
            label: label.into(),
            parent: Some(parent),
            children: Vec::new(),
            samples: None,
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Panics if `node` has not been added.
    pub fn set_samples(&mut self, node: NodeId, samples: SampleSet) -> &mut Self {
        self.nodes[node].samples = Some(samples);
        self
    }

    pub fn build(self) -> Result<CorpusTree, CorpusError> {
        CorpusTree::new(self.nodes)
    }
}
