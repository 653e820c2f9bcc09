//! Training-domain inference for hard-label black-box classifiers.
//!
//! Given an oracle that only returns predicted class indices and a
//! hierarchical corpus (a rooted tree of labeled sample sets), the search
//! scores every leaf by how consistently the oracle maps expanded copies of
//! its samples into a class, clusters the responsive leaves on the tree
//! metric, picks the cluster that maximizes a weighted functional + semantic
//! objective, and filters it down to the samples the oracle accepts.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`corpus`]: the corpus tree, its directory format, and tree-metric queries.
//! - [`oracle`]: hard-label access to the target model (in-process mocks or the
//!   HTTP wire protocol) with caching and query accounting.
//! - [`expand`]: seeded perturbation and geometric expansion of sample sets.
//! - [`scoring`]: functional, semantic and combined scores.
//! - [`kmedoids`]: PAM clustering on tree distances and medoid merging.
//! - [`search`]: the per-class search and whole-model driver.
//! - [`labels`]: embedding-based verification of found node labels.
//! - [`synthetic`]: planted corpora and rules with known ground truth.
//! - [`report`]: run reports and dataset export.
//! - [`cli`]: the `domain-scope` command line.
//!
//! Runnable walkthroughs for each stage live in the crate's `examples/`.

pub mod cli;
pub mod corpus;
pub mod expand;
pub mod kmedoids;
pub mod labels;
pub mod oracle;
pub mod report;
pub mod sample;
pub mod scoring;
pub mod search;
pub mod seed;
pub mod selection;
pub mod synthetic;

pub use corpus::{load_corpus, write_corpus, CorpusBuilder, CorpusError, CorpusNode, CorpusTree, NodeId};
pub use expand::{expand, ExpansionConfig, Suite, Transform, TransformKind};
pub use kmedoids::{brute_force_medoids, merge_clusters, pam, Clustering, DistanceMatrix};
pub use oracle::{Classifier, MockRule, OracleConfig, OracleError, OracleHandle};
pub use report::RunReport;
pub use sample::SampleSet;
pub use scoring::{combined_score, functional_score, overall_scores, semantic_score, ObjectiveConfig, ScoreCard};
pub use search::{search_class, search_model, ClassReport, SearchConfig, Status};
pub use selection::{SampleRef, Selection};
