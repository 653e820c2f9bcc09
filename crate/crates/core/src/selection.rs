//! Per-class selections of corpus samples.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, CorpusTree, NodeId};
use crate::sample::SampleSet;

/// One corpus sample, addressed by its leaf and its row within the leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleRef {
    pub leaf: NodeId,
    pub index: usize,
}

impl SampleRef {
    pub fn new(leaf: NodeId, index: usize) -> Self {
        Self { leaf, index }
    }
}

/// Deduplicated, ordered set of samples proposed for one target class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub class_index: usize,
    members: BTreeSet<SampleRef>,
}

impl Selection {
    pub fn new(class_index: usize) -> Self {
        Self {
            class_index,
            members: BTreeSet::new(),
        }
    }

    pub fn from_members(class_index: usize, members: impl IntoIterator<Item = SampleRef>) -> Self {
        Self {
            class_index,
            members: members.into_iter().collect(),
        }
    }

    /// Every sample of each leaf in `leaves`.
    pub fn whole_leaves(
        tree: &CorpusTree,
        class_index: usize,
        leaves: &[NodeId],
    ) -> Result<Self, CorpusError> {
        let mut sel = Self::new(class_index);
        for &leaf in leaves {
            let count = tree.samples(leaf)?.len();
            sel.members
                .extend((0..count).map(|index| SampleRef { leaf, index }));
        }
        Ok(sel)
    }

    pub fn insert(&mut self, member: SampleRef) -> bool {
        self.members.insert(member)
    }

    pub fn members(&self) -> impl ExactSizeIterator<Item = &SampleRef> + '_ {
        self.members.iter()
    }

    pub fn contains(&self, member: &SampleRef) -> bool {
        self.members.contains(member)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Distinct leaves referenced, ascending.
    pub fn nodes(&self) -> Vec<NodeId> {
        self.leaf_counts().into_keys().collect()
    }

    pub fn leaf_counts(&self) -> BTreeMap<NodeId, usize> {
        let mut counts = BTreeMap::new();
        for m in &self.members {
            *counts.entry(m.leaf).or_insert(0) += 1;
        }
        counts
    }

    /// Checks that every member names an existing leaf and an in-range row.
    pub fn validate(&self, tree: &CorpusTree) -> Result<(), CorpusError> {
        for m in &self.members {
            tree.sample(m.leaf, m.index)?;
        }
        Ok(())
    }

    /// Borrowed rows in member order.
    pub fn rows<'t>(&self, tree: &'t CorpusTree) -> Result<Vec<&'t [f32]>, CorpusError> {
        self.members
            .iter()
            .map(|m| tree.sample(m.leaf, m.index))
            .collect()
    }

    /// Copies the member samples, in member order.
    pub fn gather(&self, tree: &CorpusTree) -> Result<SampleSet, CorpusError> {
        let rows = self.rows(tree)?;
        let leaf = tree.leaf_ids()[0];
        SampleSet::from_rows(tree.sample_shape().to_vec(), rows)
            .map_err(|source| CorpusError::Samples { leaf, source })
    }
}
