//! Checks found node labels against a hypothesized class name with word
//! embeddings.
//!
//! Phrases are split on whitespace and punctuation and lowercased. The
//! similarity of two phrases is the largest cosine similarity over all pairs
//! of their in-vocabulary tokens.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusTree, NodeId};
use crate::scoring::round4_opt;
use crate::search::ClassReport;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("cannot read embeddings: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding table is empty")]
    Empty,
    #[error("line {line}: expected {expected} components, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("token {0:?} has a zero vector")]
    ZeroVector(String),
    #[error("no token of {0:?} is in the vocabulary")]
    OutOfVocabulary(String),
    #[error("class {0} was not found; nothing to verify")]
    NotFound(usize),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Unit-normalized token vectors of one fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LabelError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses `token v1 .. vD` lines. Blank lines are skipped, as is a
    /// leading `count dim` header. Tokens are lowercased; a repeated token
    /// replaces the earlier vector.
    pub fn parse(text: &str) -> Result<Self, LabelError> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let rest: Vec<&str> = fields.collect();
            if vectors.is_empty()
                && dim.is_none()
                && rest.len() == 1
                && token.parse::<usize>().is_ok()
                && rest[0].parse::<usize>().is_ok()
            {
                continue;
            }
            let values = rest
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| LabelError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if values.is_empty() {
                return Err(LabelError::Parse {
                    line: line_no,
                    message: format!("token {token:?} has no vector"),
                });
            }
            let expected = *dim.get_or_insert(values.len());
            if values.len() != expected {
                return Err(LabelError::Ragged {
                    line: line_no,
                    expected,
                    found: values.len(),
                });
            }
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(LabelError::ZeroVector(token.to_string()));
            }
            let unit = values.iter().map(|v| v / norm).collect();
            let key = token.to_lowercase();
            if vectors.insert(key.clone(), unit).is_some() {
                log::warn!("embedding line {line_no}: token {key:?} repeated, keeping the later vector");
            }
        }
        match dim {
            Some(dim) => Ok(Self { dim, vectors }),
            None => Err(LabelError::Empty),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    /// Cosine similarity of two in-vocabulary tokens.
    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        let va = self.vectors.get(&a)?;
        let vb = self.vectors.get(&b)?;
        if a == b {
            return Some(1.0);
        }
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        Some(dot.clamp(-1.0, 1.0))
    }
}

/// Lowercased tokens split on whitespace and punctuation.
pub fn tokenize(phrase: &str) -> Vec<String> {
    phrase
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Largest cosine similarity between any token of `a` and any token of `b`.
pub fn phrase_similarity(tab: &EmbeddingTable, a: &str, b: &str) -> Result<f64, LabelError> {
    let known = |p: &str| {
        let tokens: Vec<String> = tokenize(p).into_iter().filter(|t| tab.get(t).is_some()).collect();
        if tokens.is_empty() {
            Err(LabelError::OutOfVocabulary(p.to_string()))
        } else {
            Ok(tokens)
        }
    };
    let (ta, tb) = (known(a)?, known(b)?);
    let mut best = f64::NEG_INFINITY;
    for x in &ta {
        for y in &tb {
            best = best.max(tab.cosine(x, y).expect("both tokens known"));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSimilarity {
    pub node: NodeId,
    pub label: String,
    /// Absent when no token of the label is in the vocabulary.
    #[serde(serialize_with = "round4_opt")]
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub class_index: usize,
    pub hypothesis: String,
    pub nodes: Vec<NodeSimilarity>,
    /// Mean over nodes with a similarity.
    #[serde(serialize_with = "round4_opt")]
    pub mean: Option<f64>,
}

/// Compares every chosen node's label with `hypothesis`.
pub fn verify_report(
    tab: &EmbeddingTable,
    t: &CorpusTree,
    r: &ClassReport,
    hypothesis: &str,
) -> Result<LabelSummary, LabelError> {
    if !r.is_found() {
        return Err(LabelError::NotFound(r.class_index));
    }
    if tokenize(hypothesis).iter().all(|tok| tab.get(tok).is_none()) {
        return Err(LabelError::OutOfVocabulary(hypothesis.to_string()));
    }
    let mut nodes = Vec::with_capacity(r.chosen_nodes.len());
    for &node in &r.chosen_nodes {
        let label = t.label(node)?.to_string();
        let similarity = match phrase_similarity(tab, &label, hypothesis) {
            Ok(s) => Some(s),
            Err(LabelError::OutOfVocabulary(_)) => None,
            Err(e) => return Err(e),
        };
        nodes.push(NodeSimilarity { node, label, similarity });
    }
    let known: Vec<f64> = nodes.iter().filter_map(|n| n.similarity).collect();
    let mean = (!known.is_empty()).then(|| known.iter().sum::<f64>() / known.len() as f64);
    Ok(LabelSummary {
        class_index: r.class_index,
        hypothesis: hypothesis.to_string(),
        nodes,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusBuilder;
    use crate::sample::SampleSet;
    use crate::search::Status;
    use crate::selection::Selection;
    use proptest::prelude::*;

    const TABLE: &str = "\
cat 1 0 0 0
tabby 0.6 0.8 0 0
persian 0.5 0.5 0.5 0.5
siamese 0 0 3 4
dog 0 1 0 0
car 0 0 1 0
";

    fn table() -> EmbeddingTable {
        EmbeddingTable::parse(TABLE).unwrap()
    }

    #[test]
    fn loads_and_normalizes() {
        let t = EmbeddingTable::parse("a 1 2 2\nb 0 0 5\n").unwrap();
        assert_eq!((t.len(), t.dim()), (2, 3));
        for tok in ["a", "b"] {
            let n: f64 = t.get(tok).unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        assert!((t.cosine("a", "b").unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            EmbeddingTable::parse("a 1 2 3\nb 1 2 3 4\n"),
            Err(LabelError::Ragged { line: 2, expected: 3, found: 4 })
        ));
        assert!(matches!(EmbeddingTable::parse("\n\n"), Err(LabelError::Empty)));
        assert!(matches!(EmbeddingTable::parse("a 0 0\n"), Err(LabelError::ZeroVector(_))));
        assert!(matches!(EmbeddingTable::parse("a 1 x\n"), Err(LabelError::Parse { line: 1, .. })));
    }

    #[test]
    fn header_and_duplicates() {
        let t = EmbeddingTable::parse("2 2\nA 1 0\na 0 1\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("a").unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn tokenizes_on_punctuation() {
        assert_eq!(tokenize("Tabby, tabby-cat"), vec!["tabby", "tabby", "cat"]);
        assert!(tokenize(" ,; ").is_empty());
    }

    #[test]
    fn similarity_examples() {
        let tab = table();
        assert_eq!(phrase_similarity(&tab, "cat", "cat").unwrap(), 1.0);
        assert_eq!(phrase_similarity(&tab, "cat", "car").unwrap(), 0.0);
        assert_eq!(phrase_similarity(&tab, "tabby cat", "cat").unwrap(), 1.0);
        assert!(matches!(
            phrase_similarity(&tab, "zebra", "cat"),
            Err(LabelError::OutOfVocabulary(p)) if p == "zebra"
        ));
    }

    fn breed_tree() -> CorpusTree {
        let mut b = CorpusBuilder::new("animal");
        let cats = b.add_child(0, "cat");
        for name in ["tabby cat", "Persian cat", "Siamese cat", "okapi"] {
            let leaf = b.add_child(cats, name);
            b.set_samples(leaf, SampleSet::new(vec![1], vec![0.5]).unwrap());
        }
        b.build().unwrap()
    }

    fn found(nodes: Vec<NodeId>) -> ClassReport {
        ClassReport {
            class_index: 3,
            status: Status::Found,
            leaf_scores: Vec::new(),
            survivors: nodes.clone(),
            chosen_nodes: nodes,
            selection: Selection::new(3),
            score_card: None,
            pre_filter_count: 0,
            post_filter_count: 0,
        }
    }

    #[test]
    fn cat_breeds_verify_as_cat() {
        let tab = table();
        let t = breed_tree();
        let s = verify_report(&tab, &t, &found(vec![2, 3, 4]), "cat").unwrap();
        assert_eq!(s.mean, Some(1.0));
        assert!(s.nodes.iter().all(|n| n.similarity == Some(1.0)));
    }

    #[test]
    fn summary_mean_skips_unknown_labels() {
        let tab = table();
        let t = breed_tree();
        let s = verify_report(&tab, &t, &found(vec![2, 5]), "dog").unwrap();
        let tabby_dog = tab.cosine("tabby", "dog").unwrap();
        assert_eq!(s.nodes[0].similarity, Some(tabby_dog));
        assert_eq!(s.nodes[1].similarity, None);
        assert_eq!(s.mean, Some(tabby_dog));

        let all = verify_report(&tab, &t, &found(vec![2, 3, 4]), "dog").unwrap();
        let sims: Vec<f64> = all.nodes.iter().map(|n| n.similarity.unwrap()).collect();
        assert_eq!(all.mean.unwrap(), sims.iter().sum::<f64>() / 3.0);

        let mut nf = found(vec![2]);
        nf.status = Status::NotFound;
        assert!(matches!(verify_report(&tab, &t, &nf, "cat"), Err(LabelError::NotFound(3))));
        assert!(matches!(
            verify_report(&tab, &t, &found(vec![2]), "zebra"),
            Err(LabelError::OutOfVocabulary(_))
        ));
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric_and_bounded(
            a in proptest::collection::vec(0usize..6, 1..4),
            b in proptest::collection::vec(0usize..6, 1..4),
        ) {
            let tab = table();
            let words = ["cat", "tabby", "persian", "siamese", "dog", "car"];
            let pa: Vec<&str> = a.iter().map(|&i| words[i]).collect();
            let pb: Vec<&str> = b.iter().map(|&i| words[i]).collect();
            let (sa, sb) = (pa.join(" "), pb.join(" "));
            let ab = phrase_similarity(&tab, &sa, &sb).unwrap();
            prop_assert_eq!(ab, phrase_similarity(&tab, &sb, &sa).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
            let mut rev = pa.clone();
            rev.reverse();
            prop_assert_eq!(ab, phrase_similarity(&tab, &rev.join(" "), &sb).unwrap());
            prop_assert_eq!(phrase_similarity(&tab, &sa, &sa).unwrap(), 1.0);
        }
    }
}
