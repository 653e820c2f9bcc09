//! Per-class domain search.
//!
//! For class `i`:
//!
//! 1. every leaf is scored by the fraction of its expanded (capped) samples
//!    the oracle labels `i`;
//! 2. leaves scoring at least `theta` survive (at most `survivor_cap`, best
//!    first); none surviving means "not found";
//! 3. survivors are clustered with PAM on tree distance, clusters with
//!    medoids closer than `eta` are merged, and the cluster maximizing
//!    `alpha * mean leaf score + (1 - alpha) * semantic score` is chosen;
//! 4. the chosen leaves' original samples are kept only if the oracle labels
//!    them `i`.
//!
//! Leaf probes do not depend on the class, so [`search_model`] labels each
//! leaf once and shares the result across classes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusTree, NodeId};
use crate::expand::{expand, ExpandError, ExpansionConfig};
use crate::kmedoids::{merge_clusters, pam, select_k, DistanceMatrix, KMedoidsError};
use crate::oracle::{OracleError, OracleHandle};
use crate::sample::SampleSet;
use crate::scoring::{
    combined_score, functional_score, label_fraction, round4, semantic_from_counts, semantic_score,
    ObjectiveConfig, ScoreCard, ScoreError,
};
use crate::seed;
use crate::selection::Selection;

const TAG_SUBSAMPLE: u64 = 0x7375_6273;
const TAG_EXPAND: u64 = 0x6578_706e;
const TAG_FINAL: u64 = 0x6669_6e6c;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("class {class} out of range for a {num_classes}-class oracle")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("node {0} is not a leaf")]
    NotALeaf(NodeId),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Cluster(#[from] KMedoidsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Minimum leaf score to survive.
    pub theta: f64,
    /// Samples per leaf used for scoring.
    pub leaf_sample_cap: usize,
    pub alpha: f64,
    /// Medoids closer than this many edges are merged.
    pub eta: u32,
    /// Fixed cluster count; silhouette selection when unset.
    pub k_override: Option<usize>,
    /// Largest `k` tried by silhouette selection.
    pub max_k: usize,
    /// Most survivors passed to clustering.
    pub survivor_cap: usize,
    pub seed: u64,
    /// Expansion settings. The seed here is ignored; per-leaf seeds derive
    /// from `seed`.
    pub expansion: ExpansionConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            leaf_sample_cap: 50,
            alpha: 0.5,
            eta: 4,
            k_override: None,
            max_k: 5,
            survivor_cap: 25,
            seed: 0,
            expansion: ExpansionConfig::default(),
        }
    }
}

impl SearchConfig {
    /// Defaults with the expansion suite picked for the corpus sample shape.
    pub fn for_corpus(t: &CorpusTree) -> Self {
        let mut cfg = Self::default();
        cfg.expansion.suite = crate::expand::Suite::for_shape(t.sample_shape());
        cfg
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig { alpha: self.alpha }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let fail = |m: String| Err(SearchError::Config(m));
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return fail(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if self.leaf_sample_cap == 0 || self.survivor_cap == 0 || self.max_k == 0 {
            return fail("leaf_sample_cap, survivor_cap and max_k must be positive".into());
        }
        if self.k_override == Some(0) {
            return fail("k must be positive".into());
        }
        self.objective().validate()?;
        self.expansion.validate()?;
        Ok(())
    }

    fn leaf_expansion(&self, leaf: NodeId) -> ExpansionConfig {
        ExpansionConfig {
            seed: seed::derive(self.seed, &[TAG_EXPAND, leaf as u64]),
            ..self.expansion.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafScore {
    pub node: NodeId,
    #[serde(serialize_with = "round4")]
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Found,
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_index: usize,
    pub status: Status,
    /// Every leaf, best first; ties by node id.
    pub leaf_scores: Vec<LeafScore>,
    /// Leaves that passed `theta`, ascending.
    pub survivors: Vec<NodeId>,
    /// Leaves of the winning cluster, ascending.
    pub chosen_nodes: Vec<NodeId>,
    /// Filtered samples of the chosen leaves.
    pub selection: Selection,
    pub score_card: Option<ScoreCard>,
    pub pre_filter_count: usize,
    pub post_filter_count: usize,
}

impl ClassReport {
    pub fn is_found(&self) -> bool {
        self.status == Status::Found
    }
}

/// Oracle labels of one leaf's expanded, capped samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafProbe {
    pub leaf: NodeId,
    /// Rows of the leaf that were scored, ascending.
    pub indices: Vec<usize>,
    /// Label of every expanded sample.
    pub labels: Vec<usize>,
}

impl LeafProbe {
    pub fn score(&self, class: usize) -> f64 {
        label_fraction(&self.labels, class)
    }
}

/// Up to `cap` rows of `n`, ascending, chosen by `seed` when `n > cap`.
fn capped_indices(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut rng = seed::rng(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    idx
}

fn expand_leaf(t: &CorpusTree, leaf: NodeId, cfg: &SearchConfig) -> Result<(Vec<usize>, SampleSet), SearchError> {
    if !t.is_leaf(leaf)? {
        return Err(SearchError::NotALeaf(leaf));
    }
    let samples = t.samples(leaf)?;
    let indices = capped_indices(
        samples.len(),
        cfg.leaf_sample_cap,
        seed::derive(cfg.seed, &[TAG_SUBSAMPLE, leaf as u64]),
    );
    let expanded = expand(&samples.select(&indices), &cfg.leaf_expansion(leaf))?;
    Ok((indices, expanded))
}

/// Labels the expansion of every leaf, in leaf order, with one oracle call.
pub fn probe_leaves(o: &OracleHandle, t: &CorpusTree, cfg: &SearchConfig) -> Result<Vec<LeafProbe>, SearchError> {
    cfg.validate()?;
    let leaves = t.leaf_ids();
    let expanded: Vec<(Vec<usize>, SampleSet)> = leaves
        .par_iter()
        .map(|&leaf| expand_leaf(t, leaf, cfg))
        .collect::<Result<_, _>>()?;
    let rows: Vec<&[f32]> = expanded.iter().flat_map(|(_, s)| s.iter()).collect();
    let mut labels = o.classify_rows(t.sample_shape(), &rows)?.into_iter();
    Ok(leaves
        .iter()
        .zip(expanded)
        .map(|(&leaf, (indices, s))| LeafProbe {
            leaf,
            indices,
            labels: labels.by_ref().take(s.len()).collect(),
        })
        .collect())
}

/// Functional score of a single leaf, using the same subsample and
/// expansion as [`score_all_leaves`].
pub fn score_leaf(
    o: &OracleHandle,
    t: &CorpusTree,
    class: usize,
    leaf: NodeId,
    cfg: &SearchConfig,
) -> Result<f64, SearchError> {
    cfg.validate()?;
    check_class(o, class)?;
    let (_, expanded) = expand_leaf(t, leaf, cfg)?;
    Ok(label_fraction(&o.classify_batch(&expanded)?, class))
}

fn check_class(o: &OracleHandle, class: usize) -> Result<(), SearchError> {
    if class >= o.num_classes() {
        return Err(SearchError::ClassOutOfRange {
            class,
            num_classes: o.num_classes(),
        });
    }
    Ok(())
}

fn rank(probes: &[LeafProbe], class: usize) -> Vec<LeafScore> {
    let mut scores: Vec<LeafScore> = probes
        .iter()
        .map(|p| LeafScore {
            node: p.leaf,
            score: p.score(class),
        })
        .collect();
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.node.cmp(&b.node)));
    scores
}

/// Functional score of every leaf for `class`, best first.
pub fn score_all_leaves(
    o: &OracleHandle,
    t: &CorpusTree,
    class: usize,
    cfg: &SearchConfig,
) -> Result<Vec<LeafScore>, SearchError> {
    check_class(o, class)?;
    Ok(rank(&probe_leaves(o, t, cfg)?, class))
}

/// Members of `sel` whose original sample the oracle labels `class`.
pub fn filter_selection(
    o: &OracleHandle,
    t: &CorpusTree,
    class: usize,
    sel: &Selection,
) -> Result<Selection, SearchError> {
    check_class(o, class)?;
    let rows = sel.rows(t)?;
    let labels = o.classify_rows(t.sample_shape(), &rows)?;
    Ok(Selection::from_members(
        sel.class_index,
        sel.members()
            .zip(labels)
            .filter(|&(_, l)| l == class)
            .map(|(m, _)| *m),
    ))
}

/// Runs the full search for one class.
pub fn search_class(o: &OracleHandle, t: &CorpusTree, class: usize, cfg: &SearchConfig) -> Result<ClassReport, SearchError> {
    check_class(o, class)?;
    let probes = probe_leaves(o, t, cfg)?;
    search_class_with(o, t, class, cfg, &probes)
}

/// [`search_class`] on precomputed leaf probes.
pub fn search_class_with(
    o: &OracleHandle,
    t: &CorpusTree,
    class: usize,
    cfg: &SearchConfig,
    probes: &[LeafProbe],
) -> Result<ClassReport, SearchError> {
    check_class(o, class)?;
    let leaf_scores = rank(probes, class);
    let mut survivors: Vec<NodeId> = leaf_scores
        .iter()
        .filter(|s| s.score >= cfg.theta)
        .take(cfg.survivor_cap)
        .map(|s| s.node)
        .collect();
    survivors.sort_unstable();

    let mut report = ClassReport {
        class_index: class,
        status: Status::NotFound,
        leaf_scores,
        survivors: survivors.clone(),
        chosen_nodes: Vec::new(),
        selection: Selection::new(class),
        score_card: None,
        pre_filter_count: 0,
        post_filter_count: 0,
    };
    if survivors.is_empty() {
        log::debug!("class {class}: no leaf reaches theta {}", cfg.theta);
        return Ok(report);
    }

    let dm = DistanceMatrix::from_tree(t, &survivors)?;
    let clustering = match cfg.k_override {
        Some(k) => pam(&dm, k.min(dm.len()))?,
        None => select_k(&dm, cfg.max_k)?,
    };
    let merged = merge_clusters(t, &clustering, cfg.eta)?;

    let leaf_score: BTreeMap<NodeId, f64> = report.leaf_scores.iter().map(|s| (s.node, s.score)).collect();
    let objective = cfg.objective();
    let mut best: Option<(f64, Vec<NodeId>)> = None;
    for (_, members) in merged.clusters() {
        let mean_f = members.iter().map(|m| leaf_score[m]).sum::<f64>() / members.len() as f64;
        let counts = members
            .iter()
            .map(|&m| Ok((m, t.samples(m)?.len())))
            .collect::<Result<BTreeMap<_, _>, CorpusError>>()?;
        let value = combined_score(mean_f, semantic_from_counts(t, &counts)?, &objective);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, members));
        }
    }
    let (_, chosen) = best.expect("at least one cluster");

    let candidates = Selection::whole_leaves(t, class, &chosen)?;
    let kept = filter_selection(o, t, class, &candidates)?;
    report.chosen_nodes = chosen;
    report.pre_filter_count = candidates.len();
    report.post_filter_count = kept.len();
    if kept.is_empty() {
        log::debug!("class {class}: every chosen sample was filtered out");
        return Ok(report);
    }

    let final_expansion = ExpansionConfig {
        seed: seed::derive(cfg.seed, &[TAG_FINAL, class as u64]),
        ..cfg.expansion.clone()
    };
    let functional = functional_score(o, class, &kept.gather(t)?, &final_expansion)?;
    let semantic = semantic_score(t, &kept)?;
    report.score_card = Some(ScoreCard::new(class, functional, semantic, &objective));
    report.status = Status::Found;
    report.selection = kept;
    Ok(report)
}

/// Reports for the classes that finished when at least one did not.
#[derive(Debug, Error)]
#[error("search failed for classes {failed_classes:?}: {error}")]
pub struct SearchFailure {
    pub completed: Vec<ClassReport>,
    pub failed_classes: Vec<usize>,
    /// The failure of the lowest failed class.
    pub error: SearchError,
}

/// Searches every class of the oracle. Classes run concurrently; the result
/// is in class order.
pub fn search_model(o: &OracleHandle, t: &CorpusTree, cfg: &SearchConfig) -> Result<Vec<ClassReport>, SearchFailure> {
    let n = o.num_classes();
    let probes = probe_leaves(o, t, cfg).map_err(|error| SearchFailure {
        completed: Vec::new(),
        failed_classes: (0..n).collect(),
        error,
    })?;
    let results: Vec<Result<ClassReport, SearchError>> = (0..n)
        .into_par_iter()
        .map(|class| search_class_with(o, t, class, cfg, &probes))
        .collect();
    let mut completed = Vec::with_capacity(n);
    let mut failed_classes = Vec::new();
    let mut first_error = None;
    for (class, r) in results.into_iter().enumerate() {
        match r {
            Ok(report) => completed.push(report),
            Err(e) => {
                log::warn!("class {class}: {e}");
                failed_classes.push(class);
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        None => Ok(completed),
        Some(error) => Err(SearchFailure {
            completed,
            failed_classes,
            error,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expand::Suite;
    use crate::oracle::{MockRule, OracleConfig};
    use crate::synthetic::{generate, recovery_jaccard, PlantSpec};
    use proptest::prelude::*;

    fn flat_cfg() -> SearchConfig {
        let mut cfg = SearchConfig::default();
        cfg.expansion.suite = Suite::PerturbOnly;
        cfg
    }

    fn handle(rule: MockRule) -> OracleHandle {
        OracleHandle::new(rule, OracleConfig::default()).unwrap()
    }

    #[test]
    fn capped_subsample_is_seeded_and_sorted() {
        assert_eq!(capped_indices(5, 50, 1), vec![0, 1, 2, 3, 4]);
        let a = capped_indices(100, 10, 7);
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, capped_indices(100, 10, 7));
        assert_ne!(a, capped_indices(100, 10, 8));
    }

    #[test]
    fn constant_oracle_scores_every_leaf_one() {
        let p = generate(&PlantSpec::sibling_groups(2, 0)).unwrap();
        let o = handle(MockRule::Constant { num_classes: 2, label: 1 });
        let scores = score_all_leaves(&o, &p.corpus, 1, &flat_cfg()).unwrap();
        assert_eq!(scores.len(), 27);
        assert!(scores.iter().all(|s| s.score == 1.0));
        let nodes: Vec<_> = scores.iter().map(|s| s.node).collect();
        assert_eq!(nodes, p.corpus.leaf_ids());
        let single = score_leaf(&o, &p.corpus, 1, 20, &flat_cfg()).unwrap();
        assert_eq!(single, 1.0);
        assert!(matches!(
            score_leaf(&o, &p.corpus, 1, 0, &flat_cfg()),
            Err(SearchError::NotALeaf(0))
        ));
    }

    #[test]
    fn planted_leaves_rank_first_and_are_chosen() {
        let spec = PlantSpec::sibling_groups(3, 4);
        let p = generate(&spec).unwrap();
        let o = handle(MockRule::Planted(p.rule.clone()));
        let cfg = flat_cfg();
        let reports = search_model(&o, &p.corpus, &cfg).unwrap();
        assert_eq!(reports.len(), 3);
        for (i, r) in reports.iter().enumerate() {
            assert_eq!(r.class_index, i);
            assert!(r.is_found());
            let top: Vec<_> = r.leaf_scores[..3].iter().map(|s| s.node).collect();
            assert!(top.iter().all(|n| p.truth[i].contains(n)), "{top:?}");
            assert_eq!(r.chosen_nodes, p.truth[i].iter().copied().collect::<Vec<_>>());
            assert_eq!(recovery_jaccard(r, &p.truth[i]), 1.0);
            assert!(r.post_filter_count <= r.pre_filter_count);
            assert_eq!(r.selection.len(), r.post_filter_count);
            let card = r.score_card.unwrap();
            assert_eq!(card.functional, 1.0);
        }
    }

    #[test]
    fn uniform_oracle_finds_nothing() {
        let p = generate(&PlantSpec::sibling_groups(1, 2)).unwrap();
        let o = handle(MockRule::UniformRandom { num_classes: 10, seed: 5 });
        let reports = search_model(&o, &p.corpus, &flat_cfg()).unwrap();
        assert_eq!(reports.len(), 10);
        for r in &reports {
            assert_eq!(r.status, Status::NotFound);
            assert!(r.survivors.is_empty() && r.selection.is_empty());
            assert!(r.score_card.is_none());
        }
    }

    #[test]
    fn filtering_examples() {
        let p = generate(&PlantSpec::sibling_groups(2, 3)).unwrap();
        let sel = Selection::whole_leaves(&p.corpus, 0, &[13, 14]).unwrap();
        let always = handle(MockRule::Constant { num_classes: 2, label: 0 });
        assert_eq!(filter_selection(&always, &p.corpus, 0, &sel).unwrap(), sel);
        let never = handle(MockRule::Constant { num_classes: 2, label: 1 });
        assert!(filter_selection(&never, &p.corpus, 0, &sel).unwrap().is_empty());

        let o = handle(MockRule::Planted(p.rule.clone()));
        let once = filter_selection(&o, &p.corpus, 0, &sel).unwrap();
        assert_eq!(filter_selection(&o, &p.corpus, 0, &once).unwrap(), once);
    }

    #[test]
    fn alpha_one_picks_highest_mean_functional() {
        let p = generate(&PlantSpec::sibling_groups(1, 9)).unwrap();
        let o = handle(MockRule::Planted(p.rule.clone()));
        let cfg = SearchConfig {
            alpha: 1.0,
            ..flat_cfg()
        };
        let r = search_class(&o, &p.corpus, 0, &cfg).unwrap();
        let best_mean = r
            .leaf_scores
            .iter()
            .filter(|s| r.chosen_nodes.contains(&s.node))
            .map(|s| s.score)
            .sum::<f64>()
            / r.chosen_nodes.len() as f64;
        assert_eq!(best_mean, 1.0);
    }

    #[test]
    fn config_validation() {
        let bad = [
            SearchConfig { theta: 0.0, ..SearchConfig::default() },
            SearchConfig { theta: 1.5, ..SearchConfig::default() },
            SearchConfig { leaf_sample_cap: 0, ..SearchConfig::default() },
            SearchConfig { k_override: Some(0), ..SearchConfig::default() },
            SearchConfig { alpha: 0.0, ..SearchConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(SearchConfig::default().validate().is_ok());
    }

    #[test]
    fn class_out_of_range() {
        let p = generate(&PlantSpec::sibling_groups(1, 1)).unwrap();
        let o = handle(MockRule::Constant { num_classes: 1, label: 0 });
        assert!(matches!(
            search_class(&o, &p.corpus, 1, &flat_cfg()),
            Err(SearchError::ClassOutOfRange { class: 1, num_classes: 1 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn raising_theta_never_adds_survivors(seed in 0u64..50, lo in 0.05f64..0.6, step in 0.0f64..0.4) {
            let mut spec = PlantSpec::sibling_groups(2, seed);
            spec.samples_per_leaf = 8;
            spec.noise_rate = 0.3;
            let p = generate(&spec).unwrap();
            let o = handle(MockRule::Planted(p.rule.clone()));
            let low = SearchConfig { theta: lo, seed, ..flat_cfg() };
            let high = SearchConfig { theta: (lo + step).min(1.0), ..low.clone() };
            let probes = probe_leaves(&o, &p.corpus, &low).unwrap();
            for class in 0..2 {
                let a = search_class_with(&o, &p.corpus, class, &low, &probes).unwrap();
                let b = search_class_with(&o, &p.corpus, class, &high, &probes).unwrap();
                prop_assert!(b.survivors.iter().all(|s| a.survivors.contains(s)));
                prop_assert!(a.post_filter_count <= a.pre_filter_count);
                prop_assert_eq!(a.is_found(), !a.selection.is_empty());
            }
        }
    }
}
