//! Functional, semantic and combined scores.
//!
//! - functional: fraction of the expanded set `E(d)` the oracle assigns to
//!   the class under investigation.
//! - semantic: mean closeness `1/(1+d)` over distinct member pairs, where a
//!   member's node is its leaf. A single member scores 1.
//! - combined: `alpha * functional + (1 - alpha) * semantic`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{closeness_from_distance, CorpusError, CorpusTree, NodeId};
use crate::expand::{expand, ExpandError, ExpansionConfig};
use crate::oracle::{OracleError, OracleHandle};
use crate::sample::SampleSet;
use crate::selection::Selection;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("cannot score an empty sample set")]
    EmptySet,
    #[error("cannot score an empty selection")]
    EmptySelection,
    #[error("class {class} out of range for a {num_classes}-class oracle")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("duplicate score card for class {0}")]
    DuplicateClass(usize),
    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub alpha: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

impl ObjectiveConfig {
    pub fn new(alpha: f64) -> Result<Self, ScoreError> {
        let cfg = Self { alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `alpha = 1` is accepted: ranking then uses the functional score alone.
    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.alpha > 0.0 && self.alpha <= 1.0 {
            Ok(())
        } else {
            Err(ScoreError::InvalidAlpha(self.alpha))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub class_index: usize,
    #[serde(serialize_with = "round4")]
    pub functional: f64,
    #[serde(serialize_with = "round4")]
    pub semantic: f64,
    #[serde(serialize_with = "round4")]
    pub combined: f64,
}

impl ScoreCard {
    pub fn new(class_index: usize, functional: f64, semantic: f64, cfg: &ObjectiveConfig) -> Self {
        Self {
            class_index,
            functional,
            semantic,
            combined: combined_score(functional, semantic, cfg),
        }
    }

    /// The card as it appears in a report: every score at 4 decimals.
    pub fn rounded(&self) -> Self {
        Self {
            functional: round_to_4(self.functional),
            semantic: round_to_4(self.semantic),
            combined: round_to_4(self.combined),
            ..*self
        }
    }
}

pub fn round_to_4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

pub(crate) fn round4<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_to_4(*v))
}

pub(crate) fn round4_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_some(&round_to_4(*v)),
        None => s.serialize_none(),
    }
}

/// Fraction of `labels` equal to `class`; 0 for an empty list.
pub fn label_fraction(labels: &[usize], class: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|&&l| l == class).count() as f64 / labels.len() as f64
}

/// Functional score of `d` for class `class`: expands `d` with `cfg` and
/// returns the fraction of `E(d)` labeled `class`.
pub fn functional_score(
    o: &OracleHandle,
    class: usize,
    d: &SampleSet,
    cfg: &ExpansionConfig,
) -> Result<f64, ScoreError> {
    if class >= o.num_classes() {
        return Err(ScoreError::ClassOutOfRange {
            class,
            num_classes: o.num_classes(),
        });
    }
    if d.is_empty() {
        return Err(ScoreError::EmptySet);
    }
    let expanded = expand(d, cfg)?;
    let labels = o.classify_batch(&expanded)?;
    Ok(label_fraction(&labels, class))
}

/// Semantic score of a selection.
pub fn semantic_score(t: &CorpusTree, sel: &Selection) -> Result<f64, ScoreError> {
    if sel.is_empty() {
        return Err(ScoreError::EmptySelection);
    }
    sel.validate(t)?;
    semantic_from_counts(t, &sel.leaf_counts())
}

/// Semantic score of a multiset of nodes given as `node -> multiplicity`.
///
/// Pairs are tallied per tree distance in exact integer arithmetic, so the
/// only rounding happens in the final `Σ count_d / (1 + d)` sum.
pub fn semantic_from_counts(t: &CorpusTree, counts: &BTreeMap<NodeId, usize>) -> Result<f64, ScoreError> {
    let total: u128 = counts.values().map(|&c| c as u128).sum();
    if total == 0 {
        return Err(ScoreError::EmptySelection);
    }
    if total == 1 {
        return Ok(1.0);
    }
    let mut by_distance: BTreeMap<u32, u128> = BTreeMap::new();
    let entries: Vec<(NodeId, u128)> = counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(&n, &c)| (n, c as u128))
        .collect();
    for (i, &(a, ca)) in entries.iter().enumerate() {
        t.node(a)?;
        if ca > 1 {
            *by_distance.entry(0).or_default() += ca * (ca - 1) / 2;
        }
        for &(b, cb) in &entries[i + 1..] {
            *by_distance.entry(t.tree_distance(a, b)?).or_default() += ca * cb;
        }
    }
    let pairs = (total * (total - 1) / 2) as f64;
    let sum: f64 = by_distance
        .iter()
        .map(|(&d, &count)| count as f64 * closeness_from_distance(d))
        .sum();
    Ok(sum / pairs)
}

pub fn combined_score(f: f64, s: f64, cfg: &ObjectiveConfig) -> f64 {
    cfg.alpha * f + (1.0 - cfg.alpha) * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallScores {
    #[serde(serialize_with = "round4")]
    pub functional: f64,
    #[serde(serialize_with = "round4")]
    pub semantic: f64,
}

/// Component-wise sums over classes.
pub fn overall_scores(cards: &[ScoreCard]) -> Result<OverallScores, ScoreError> {
    let mut seen = BTreeSet::new();
    for c in cards {
        if !seen.insert(c.class_index) {
            return Err(ScoreError::DuplicateClass(c.class_index));
        }
    }
    // Summed in class order so the result does not depend on card order.
    let mut sorted: Vec<&ScoreCard> = cards.iter().collect();
    sorted.sort_by_key(|c| c.class_index);
    Ok(OverallScores {
        functional: sorted.iter().map(|c| c.functional).sum(),
        semantic: sorted.iter().map(|c| c.semantic).sum(),
    })
}
