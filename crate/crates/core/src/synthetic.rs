//! Planted corpora with known ground truth.
//!
//! [`generate`] builds a complete `arity`-ary tree of the given depth, numbers
//! nodes breadth-first, and gives each leaf its own cell of a lattice over the
//! first few coordinates of `[0,1]^dim`. Samples are drawn inside the cell,
//! shrunk by `margin / 2` on every side, so any perturbation smaller than the
//! half-margin keeps a sample in its cell.
//!
//! The matching [`PlantedRule`] labels a sample by the cell it falls in: cells
//! of a planted class map to that class, everything else gets a per-sample
//! pseudo-random label.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{write_corpus, CorpusBuilder, CorpusError, CorpusTree, NodeId};
use crate::expand::DEFAULT_EPSILON;
use crate::sample::SampleSet;
use crate::search::ClassReport;
use crate::seed;

pub const PLANT_FILE: &str = "plant.json";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible plant spec: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("cannot write plant file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub depth: u32,
    pub arity: usize,
    /// Values per sample.
    pub dim: usize,
    pub samples_per_leaf: usize,
    /// Lattice divisions per coordinate.
    pub grid: usize,
    /// Gap between neighbouring cells, in coordinate units.
    pub margin: f64,
    /// Ground truth: the leaf ids of each planted class. Class `i` is the
    /// `i`-th entry; the rule has `classes.len()` classes.
    pub classes: Vec<Vec<NodeId>>,
    /// Probability that a sample of a planted cell gets a random label.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self {
            depth: 3,
            arity: 3,
            dim: 16,
            samples_per_leaf: 60,
            grid: 3,
            margin: 0.1,
            classes: Vec::new(),
            noise_rate: 0.0,
            seed: 0,
        }
    }
}

impl PlantSpec {
    /// Defaults with `class_count` classes, each the full set of children of a
    /// distinct, randomly chosen last-level parent (a sibling group).
    pub fn sibling_groups(class_count: usize, seed: u64) -> Self {
        let mut spec = Self {
            seed,
            ..Self::default()
        };
        spec.classes = spec.random_sibling_groups(class_count, seed);
        spec
    }

    /// `count` disjoint sibling groups for this tree shape. Returns fewer
    /// groups when the tree has fewer last-level parents.
    pub fn random_sibling_groups(&self, count: usize, seed: u64) -> Vec<Vec<NodeId>> {
        if self.depth == 0 {
            return Vec::new();
        }
        let first_parent = level_start(self.arity, self.depth - 1);
        let parents = self.arity.pow(self.depth - 1);
        let mut rng = seed::rng(seed::derive(seed, &[0x7369_626c]));
        let picked = rand::seq::index::sample(&mut rng, parents, count.min(parents));
        let mut groups: Vec<Vec<NodeId>> = picked
            .into_iter()
            .map(|p| {
                let parent = first_parent + p;
                (1..=self.arity).map(|k| self.arity * parent + k).collect()
            })
            .collect();
        for g in &mut groups {
            g.sort_unstable();
        }
        groups
    }

    pub fn node_count(&self) -> usize {
        level_start(self.arity, self.depth + 1)
    }

    pub fn leaf_count(&self) -> usize {
        self.arity.pow(self.depth)
    }

    /// Leaf ids, ascending; breadth-first numbering puts them last.
    pub fn leaf_ids(&self) -> std::ops::Range<NodeId> {
        let first = level_start(self.arity, self.depth);
        first..first + self.leaf_count()
    }

    fn lattice_dims(&self) -> Option<usize> {
        let m = self.leaf_count();
        let mut dims = 0;
        let mut cells = 1usize;
        while cells < m {
            cells = cells.checked_mul(self.grid)?;
            dims += 1;
        }
        Some(dims.max(1))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::Infeasible(msg));
        if self.depth > 0 && self.arity < 2 {
            return fail("arity must be at least 2".into());
        }
        if self.dim == 0 || self.samples_per_leaf == 0 {
            return fail("dim and samples_per_leaf must be positive".into());
        }
        if self.grid < 2 {
            return fail("grid must be at least 2".into());
        }
        let cell = 1.0 / self.grid as f64;
        if !(self.margin > 2.0 * DEFAULT_EPSILON && self.margin < cell) {
            return fail(format!(
                "margin {} must exceed {} and stay below the cell width {cell}",
                self.margin,
                2.0 * DEFAULT_EPSILON
            ));
        }
        match self.lattice_dims() {
            Some(l) if l <= self.dim => {}
            _ => {
                return fail(format!(
                    "{} leaves need more than {} lattice coordinates at grid {}",
                    self.leaf_count(),
                    self.dim,
                    self.grid
                ))
            }
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return fail(format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        if self.classes.is_empty() {
            return fail("at least one planted class is required".into());
        }
        let leaves = self.leaf_ids();
        let mut seen = BTreeSet::new();
        for (i, class) in self.classes.iter().enumerate() {
            if class.is_empty() {
                return fail(format!("class {i} has no leaves"));
            }
            for &leaf in class {
                if !leaves.contains(&leaf) {
                    return fail(format!("class {i}: {leaf} is not a leaf"));
                }
                if !seen.insert(leaf) {
                    return fail(format!("leaf {leaf} is planted in more than one class"));
                }
            }
        }
        Ok(())
    }
}

/// First breadth-first id at `level` of a complete `arity`-ary tree.
fn level_start(arity: usize, level: u32) -> usize {
    (0..level).map(|l| arity.pow(l)).sum()
}

/// The labeling rule matching a [`PlantSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRule {
    num_classes: usize,
    dim: usize,
    grid: usize,
    lattice_dims: usize,
    // Class of each lattice cell, indexed by cell number.
    cell_class: Vec<Option<usize>>,
    noise_rate: f64,
    seed: u64,
}

impl PlantedRule {
    pub fn from_spec(spec: &PlantSpec) -> Result<Self, SynthError> {
        spec.validate()?;
        let lattice_dims = spec.lattice_dims().expect("validated");
        let first_leaf = spec.leaf_ids().start;
        let mut cell_class = vec![None; spec.grid.pow(lattice_dims as u32)];
        for (class, leaves) in spec.classes.iter().enumerate() {
            for &leaf in leaves {
                cell_class[leaf - first_leaf] = Some(class);
            }
        }
        Ok(Self {
            num_classes: spec.classes.len(),
            dim: spec.dim,
            grid: spec.grid,
            lattice_dims,
            cell_class,
            noise_rate: spec.noise_rate,
            seed: spec.seed,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lattice cell containing `x`.
    pub fn cell(&self, x: &[f32]) -> usize {
        let g = self.grid;
        let mut cell = 0;
        let mut stride = 1;
        for &v in x.iter().take(self.lattice_dims) {
            let q = ((f64::from(v) * g as f64).floor().max(0.0) as usize).min(g - 1);
            cell += q * stride;
            stride *= g;
        }
        cell
    }

    pub fn label(&self, x: &[f32]) -> usize {
        let h = seed::digest_f32(self.seed ^ 0x006e_6f69_7365, x);
        let n = self.num_classes as u64;
        match self.cell_class.get(self.cell(x)).copied().flatten() {
            Some(class) if seed::unit_interval(h) >= self.noise_rate => class,
            Some(_) => (seed::mix64(h) % n) as usize,
            None => (h % n) as usize,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub spec: PlantSpec,
    pub corpus: CorpusTree,
    pub rule: PlantedRule,
    /// Leaf ids of each planted class.
    pub truth: Vec<BTreeSet<NodeId>>,
}

/// Builds the corpus, rule, and ground truth for `spec`.
pub fn generate(spec: &PlantSpec) -> Result<Planted, SynthError> {
    let rule = PlantedRule::from_spec(spec)?;
    let mut builder = CorpusBuilder::new("root");
    let mut frontier = vec![0];
    for level in 1..=spec.depth {
        let mut next = Vec::with_capacity(frontier.len() * spec.arity);
        for &parent in &frontier {
            for k in 0..spec.arity {
                next.push(builder.add_child(parent, format!("l{level}-{parent}-{k}")));
            }
        }
        frontier = next;
    }

    let cell_width = 1.0 / spec.grid as f64;
    let half_margin = spec.margin / 2.0;
    for (pos, &leaf) in frontier.iter().enumerate() {
        let mut rng = seed::rng(seed::derive(spec.seed, &[0x6c65_6166, leaf as u64]));
        let mut data = Vec::with_capacity(spec.samples_per_leaf * spec.dim);
        for _ in 0..spec.samples_per_leaf {
            let mut digits = pos;
            for d in 0..spec.dim {
                let v = if d < rule.lattice_dims {
                    let q = digits % spec.grid;
                    digits /= spec.grid;
                    let lo = q as f64 * cell_width + half_margin;
                    let hi = (q + 1) as f64 * cell_width - half_margin;
                    rng.random_range(lo..hi)
                } else {
                    rng.random_range(0.0..=1.0)
                };
                data.push(v as f32);
            }
        }
        let samples = SampleSet::new(vec![spec.dim], data).expect("rows have dim values");
        builder.set_samples(leaf, samples);
    }
    let corpus = builder.build()?;
    let truth = spec
        .classes
        .iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    Ok(Planted {
        spec: spec.clone(),
        corpus,
        rule,
        truth,
    })
}

/// Generates `spec` and writes the corpus plus `plant.json` into `dir`.
pub fn generate_to_dir(spec: &PlantSpec, dir: impl AsRef<Path>) -> Result<Planted, SynthError> {
    let dir = dir.as_ref();
    let planted = generate(spec)?;
    write_corpus(&planted.corpus, dir)?;
    let mut text = serde_json::to_string_pretty(spec).expect("plant spec serializes");
    text.push('\n');
    fs::write(dir.join(PLANT_FILE), text)?;
    Ok(planted)
}

/// `|chosen ∩ truth| / |chosen ∪ truth|`; 1 when both are empty.
pub fn recovery_jaccard(report: &ClassReport, truth: &BTreeSet<NodeId>) -> f64 {
    let chosen: BTreeSet<NodeId> = report.chosen_nodes.iter().copied().collect();
    let union = chosen.union(truth).count();
    if union == 0 {
        return 1.0;
    }
    chosen.intersection(truth).count() as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_corpus;
    use crate::oracle::{parse_mock_spec, MockRule};

    #[test]
    fn ternary_depth_three_shape() {
        let spec = PlantSpec::sibling_groups(3, 1);
        assert_eq!(spec.node_count(), 40);
        assert_eq!(spec.leaf_count(), 27);
        assert_eq!(spec.leaf_ids(), 13..40);
        let p = generate(&spec).unwrap();
        assert_eq!(p.corpus.len(), 40);
        assert_eq!(p.corpus.leaf_ids(), (13..40).collect::<Vec<_>>().as_slice());
        assert_eq!(p.truth.len(), 3);
        for class in &spec.classes {
            assert_eq!(class.len(), 3);
            let parents: BTreeSet<_> = class
                .iter()
                .map(|&l| p.corpus.node(l).unwrap().parent)
                .collect();
            assert_eq!(parents.len(), 1, "class leaves are siblings");
        }
    }

    #[test]
    fn planted_leaves_label_as_their_class() {
        let spec = PlantSpec::sibling_groups(3, 5);
        let p = generate(&spec).unwrap();
        for (class, leaves) in p.truth.iter().enumerate() {
            for &leaf in leaves {
                for x in p.corpus.samples(leaf).unwrap().iter() {
                    assert_eq!(p.rule.label(x), class);
                }
            }
        }
    }

    #[test]
    fn cells_match_leaf_positions() {
        let spec = PlantSpec::sibling_groups(2, 9);
        let p = generate(&spec).unwrap();
        for (pos, &leaf) in p.corpus.leaf_ids().iter().enumerate() {
            for x in p.corpus.samples(leaf).unwrap().iter() {
                assert_eq!(p.rule.cell(x), pos);
            }
        }
    }

    #[test]
    fn noise_free_rule_depends_only_on_cell() {
        let spec = PlantSpec::sibling_groups(3, 2);
        let p = generate(&spec).unwrap();
        let leaf = *p.truth[1].iter().next().unwrap();
        let a = p.corpus.sample(leaf, 0).unwrap().to_vec();
        let mut b = a.clone();
        for v in b.iter_mut().skip(3) {
            *v = 1.0 - *v;
        }
        assert_eq!(p.rule.cell(&a), p.rule.cell(&b));
        assert_eq!(p.rule.label(&a), p.rule.label(&b));
    }

    #[test]
    fn noise_flips_roughly_the_requested_share() {
        let mut spec = PlantSpec::sibling_groups(3, 4);
        spec.noise_rate = 0.5;
        spec.samples_per_leaf = 200;
        let p = generate(&spec).unwrap();
        let leaf = *p.truth[0].iter().next().unwrap();
        let off = p
            .corpus
            .samples(leaf)
            .unwrap()
            .iter()
            .filter(|x| p.rule.label(x) != 0)
            .count();
        // Half are re-drawn uniformly over 3 classes: about a third of 200.
        assert!((40..=95).contains(&off), "{off}");
    }

    #[test]
    fn infeasible_specs() {
        let base = PlantSpec::sibling_groups(3, 0);
        let tight = PlantSpec {
            margin: 0.05,
            ..base.clone()
        };
        assert!(matches!(tight.validate(), Err(SynthError::Infeasible(_))));
        let narrow = PlantSpec {
            dim: 2,
            ..base.clone()
        };
        assert!(narrow.validate().is_err());
        let overlap = PlantSpec {
            classes: vec![vec![13, 14], vec![14]],
            ..base.clone()
        };
        assert!(overlap.validate().is_err());
        let internal = PlantSpec {
            classes: vec![vec![4]],
            ..base
        };
        assert!(internal.validate().is_err());
    }

    #[test]
    fn written_plant_reloads_as_mock_rule() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PlantSpec::sibling_groups(3, 8);
        let p = generate_to_dir(&spec, dir.path()).unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap(), p.corpus);
        let path = dir.path().join(PLANT_FILE);
        let rule = parse_mock_spec(&format!("planted:{}", path.display())).unwrap();
        assert_eq!(rule, MockRule::Planted(p.rule.clone()));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = PlantSpec::sibling_groups(3, 12);
        assert_eq!(generate(&spec).unwrap().corpus, generate(&spec).unwrap().corpus);
        assert_ne!(
            generate(&spec).unwrap().corpus,
            generate(&PlantSpec { seed: 13, ..spec }).unwrap().corpus
        );
    }
}
