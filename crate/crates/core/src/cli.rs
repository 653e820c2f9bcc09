//! The `domain-scope` command line.
//!
//! Every search flag can also be set in a TOML config file given by
//! `--config` or the `DOMAIN_SCOPE_CONFIG` environment variable; flags win.
//!
//! Exit codes: 0 ok, 1 other failure, 2 corpus error, 3 oracle error,
//! 4 config error.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::corpus::{load_corpus, CorpusError, CorpusTree, NodeId};
use crate::expand::Suite;
use crate::labels::{verify_report, EmbeddingTable, LabelError};
use crate::oracle::{connect, ConnectError, OracleConfig, OracleHandle};
use crate::report::{export_dataset, CorpusInfo, OracleInfo, ReportError, RunReport};
use crate::scoring::ScoreError;
use crate::search::{score_leaf, search_model, SearchConfig, SearchError};
use crate::synthetic::{generate_to_dir, PlantSpec, SynthError, PLANT_FILE};

pub const CONFIG_ENV: &str = "DOMAIN_SCOPE_CONFIG";

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CORPUS: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl fmt::Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }

    fn config(message: impl fmt::Display) -> Self {
        Self::new(EXIT_CONFIG, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        Self::new(EXIT_CORPUS, e)
    }
}

impl From<ConnectError> for CliError {
    fn from(e: ConnectError) -> Self {
        match e {
            ConnectError::Spec(_) => Self::config(e),
            ConnectError::Oracle(_) => Self::new(EXIT_ORACLE, e),
        }
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        let code = match e {
            ScoreError::Oracle(_) => EXIT_ORACLE,
            ScoreError::Corpus(_) => EXIT_CORPUS,
            ScoreError::DuplicateClass(_) | ScoreError::EmptySet | ScoreError::EmptySelection => EXIT_OTHER,
            _ => EXIT_CONFIG,
        };
        Self::new(code, e)
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Oracle(_) => Self::new(EXIT_ORACLE, e),
            SearchError::Corpus(_) | SearchError::NotALeaf(_) => Self::new(EXIT_CORPUS, e),
            SearchError::Score(s) => s.into(),
            SearchError::Cluster(_) => Self::new(EXIT_OTHER, e),
            SearchError::Config(_) | SearchError::ClassOutOfRange { .. } | SearchError::Expand(_) => {
                Self::config(e)
            }
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Corpus(_) => Self::new(EXIT_CORPUS, e),
            _ => Self::new(EXIT_OTHER, e),
        }
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        match e {
            LabelError::Corpus(_) => Self::new(EXIT_CORPUS, e),
            LabelError::NotFound(_) | LabelError::OutOfVocabulary(_) => Self::new(EXIT_OTHER, e),
            _ => Self::config(e),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Infeasible(_) => Self::config(e),
            SynthError::Corpus(_) => Self::new(EXIT_CORPUS, e),
            SynthError::Io(_) => Self::new(EXIT_OTHER, e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "domain-scope", version, about = "Infer the training domain of a hard-label classifier")]
pub struct Cli {
    /// TOML config file; overrides DOMAIN_SCOPE_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search every class and write a run report.
    Search(SearchArgs),
    /// Print one leaf's functional score for one class.
    Score(ScoreArgs),
    /// Write the filtered selections of a report as a dataset.
    Export(ExportArgs),
    /// Compare chosen node labels with class names.
    VerifyLabels(VerifyArgs),
    /// Generate a planted corpus and its oracle rule.
    GenSynthetic(GenArgs),
    /// Print oracle and corpus facts.
    Info(InfoArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Oracle: an http(s) base URL or mock:<rule>.
    #[arg(long)]
    pub oracle: Option<String>,
    /// Corpus directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub eta: Option<u32>,
    /// Fixed cluster count.
    #[arg(long)]
    pub k: Option<usize>,
    /// Expanded variants per sample.
    #[arg(long)]
    pub variants: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concurrent oracle batches.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Maximum distinct oracle queries.
    #[arg(long)]
    pub budget: Option<u64>,
    /// full-geometric or perturb-only; picked from the sample shape if unset.
    #[arg(long)]
    pub suite: Option<Suite>,
    #[arg(long)]
    pub leaf_sample_cap: Option<usize>,
    #[arg(long)]
    pub survivor_cap: Option<usize>,
    #[arg(long)]
    pub max_k: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Store the wall time in the report.
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub class: usize,
    /// Leaf node id.
    #[arg(long)]
    pub node: NodeId,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Text embedding table, one `token v1 .. vD` per line.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// `CLASS=NAME`, repeatable.
    #[arg(long = "hypothesis", required = true)]
    pub hypotheses: Vec<String>,
    /// Write the report with the label checks attached.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub depth: u32,
    #[arg(long, default_value_t = 3)]
    pub arity: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 60)]
    pub samples_per_leaf: usize,
    /// Planted classes, each a random sibling group.
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(long)]
    pub oracle: Option<String>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

/// Config file keys; each mirrors a flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub oracle: Option<String>,
    pub corpus: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
    pub eta: Option<u32>,
    pub k: Option<usize>,
    pub variants: Option<usize>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub budget: Option<u64>,
    pub suite: Option<Suite>,
    pub leaf_sample_cap: Option<usize>,
    pub survivor_cap: Option<usize>,
    pub max_k: Option<usize>,
    pub batch_size: Option<usize>,
    pub out: Option<PathBuf>,
    pub record_time: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    fn locate(flag: Option<&Path>) -> Result<Self, CliError> {
        match flag.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from)) {
            Some(p) => Self::load(&p),
            None => Ok(Self::default()),
        }
    }
}

/// Flags merged over the config file.
struct Resolved {
    oracle: Option<String>,
    corpus: Option<PathBuf>,
    oracle_config: OracleConfig,
    search: SearchConfig,
    suite: Option<Suite>,
}

fn resolve(flags: &CommonArgs, file: &FileConfig) -> Resolved {
    let mut search = SearchConfig::default();
    let defaults = OracleConfig::default();
    macro_rules! pick {
        ($field:ident) => {
            flags.$field.clone().or(file.$field.clone())
        };
    }
    if let Some(v) = pick!(alpha) {
        search.alpha = v;
    }
    if let Some(v) = pick!(theta) {
        search.theta = v;
    }
    if let Some(v) = pick!(eta) {
        search.eta = v;
    }
    search.k_override = pick!(k);
    if let Some(v) = pick!(variants) {
        search.expansion.variants_per_sample = v;
    }
    if let Some(v) = pick!(epsilon) {
        search.expansion.epsilon = v;
    }
    if let Some(v) = pick!(seed) {
        search.seed = v;
    }
    search.expansion.seed = search.seed;
    if let Some(v) = pick!(leaf_sample_cap) {
        search.leaf_sample_cap = v;
    }
    if let Some(v) = pick!(survivor_cap) {
        search.survivor_cap = v;
    }
    if let Some(v) = pick!(max_k) {
        search.max_k = v;
    }
    Resolved {
        oracle: pick!(oracle),
        corpus: pick!(corpus),
        oracle_config: OracleConfig {
            batch_size: pick!(batch_size).unwrap_or(defaults.batch_size),
            workers: pick!(workers).unwrap_or(defaults.workers),
            budget: pick!(budget),
            cache: true,
        },
        search,
        suite: pick!(suite),
    }
}

impl Resolved {
    fn corpus(&self) -> Result<(CorpusTree, String), CliError> {
        let path = self
            .corpus
            .as_ref()
            .ok_or_else(|| CliError::config("--corpus is required"))?;
        Ok((load_corpus(path)?, path.display().to_string()))
    }

    fn oracle(&self) -> Result<OracleHandle, CliError> {
        let spec = self
            .oracle
            .as_deref()
            .ok_or_else(|| CliError::config("--oracle is required"))?;
        Ok(connect(spec, self.oracle_config.clone())?)
    }

    fn search_config(&self, t: &CorpusTree) -> Result<SearchConfig, CliError> {
        let mut cfg = self.search.clone();
        cfg.expansion.suite = self.suite.unwrap_or_else(|| Suite::for_shape(t.sample_shape()));
        cfg.validate()?;
        if cfg.expansion.suite == Suite::FullGeometric && Suite::for_shape(t.sample_shape()) != Suite::FullGeometric {
            return Err(CliError::config(format!(
                "full-geometric expansion needs image samples, corpus shape is {:?}",
                t.sample_shape()
            )));
        }
        Ok(cfg)
    }
}

fn cmd_search(args: SearchArgs, file: &FileConfig) -> Result<(), CliError> {
    let started = Instant::now();
    let r = resolve(&args.common, file);
    let out = args
        .out
        .or_else(|| file.out.clone())
        .ok_or_else(|| CliError::config("--out is required"))?;
    let (corpus, corpus_path) = r.corpus()?;
    let cfg = r.search_config(&corpus)?;
    let oracle = r.oracle()?;
    log::info!(
        "searching {} classes over {} leaves",
        oracle.num_classes(),
        corpus.leaf_count()
    );
    let classes = search_model(&oracle, &corpus, &cfg).map_err(|f| {
        for c in &f.completed {
            log::info!("class {} completed before the failure", c.class_index);
        }
        CliError::from(f.error)
    })?;
    let mut report = RunReport::new(
        cfg,
        OracleInfo::of(&oracle),
        CorpusInfo::of(&corpus, corpus_path),
        classes,
        oracle.query_count(),
    )?;
    if args.record_time || file.record_time == Some(true) {
        report.wall_time_ms = Some(started.elapsed().as_millis() as u64);
    }
    report.write(&out)?;
    for c in &report.classes {
        match &c.score_card {
            Some(card) => println!(
                "class {}: found nodes {:?} samples {} functional {:.4} semantic {:.4}",
                c.class_index, c.chosen_nodes, c.post_filter_count, card.functional, card.semantic
            ),
            None => println!("class {}: not found", c.class_index),
        }
    }
    println!("queries {}  report {}", report.query_count, out.display());
    Ok(())
}

fn cmd_score(args: ScoreArgs, file: &FileConfig) -> Result<(), CliError> {
    let r = resolve(&args.common, file);
    let (corpus, _) = r.corpus()?;
    let cfg = r.search_config(&corpus)?;
    let oracle = r.oracle()?;
    let score = score_leaf(&oracle, &corpus, args.class, args.node, &cfg)?;
    println!("{score:.4}");
    Ok(())
}

fn report_corpus(report: &RunReport, flag: Option<PathBuf>) -> Result<CorpusTree, CliError> {
    let path = flag.unwrap_or_else(|| PathBuf::from(&report.corpus.path));
    Ok(load_corpus(path)?)
}

fn cmd_export(args: ExportArgs, file: &FileConfig) -> Result<(), CliError> {
    let report = RunReport::load(&args.report)?;
    let corpus = report_corpus(&report, args.corpus.or_else(|| file.corpus.clone()))?;
    let out = args
        .out
        .or_else(|| file.out.clone())
        .ok_or_else(|| CliError::config("--out is required"))?;
    let manifest = export_dataset(&report, &corpus, &out)?;
    for c in &manifest.classes {
        println!("class {}: {} samples -> {}", c.class_index, c.count, c.samples_file);
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut report = RunReport::load(&args.report)?;
    let corpus = report_corpus(&report, args.corpus.or_else(|| file.corpus.clone()))?;
    let table = EmbeddingTable::load(&args.embeddings)?;
    let mut checks = Vec::new();
    for h in &args.hypotheses {
        let (class, name) = h
            .split_once('=')
            .and_then(|(c, n)| Some((c.trim().parse::<usize>().ok()?, n.trim())))
            .ok_or_else(|| CliError::config(format!("--hypothesis expects CLASS=NAME, got {h:?}")))?;
        let c = report
            .classes
            .get(class)
            .ok_or_else(|| CliError::config(format!("class {class} is not in the report")))?;
        let summary = verify_report(&table, &corpus, c, name)?;
        match summary.mean {
            Some(m) => println!("class {class} vs {name:?}: mean similarity {m:.4}"),
            None => println!("class {class} vs {name:?}: no node label in vocabulary"),
        }
        for n in &summary.nodes {
            match n.similarity {
                Some(s) => println!("  {} {:?} {s:.4}", n.node, n.label),
                None => println!("  {} {:?} out of vocabulary", n.node, n.label),
            }
        }
        checks.push(summary);
    }
    if let Some(out) = args.out {
        report.label_checks = checks;
        report.write(out)?;
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let mut spec = PlantSpec {
        depth: args.depth,
        arity: args.arity,
        dim: args.dim,
        samples_per_leaf: args.samples_per_leaf,
        noise_rate: args.noise,
        seed: args.seed,
        ..PlantSpec::default()
    };
    spec.classes = spec.random_sibling_groups(args.classes, args.seed);
    if spec.classes.len() < args.classes {
        return Err(CliError::config(format!(
            "tree has room for only {} sibling groups",
            spec.classes.len()
        )));
    }
    let planted = generate_to_dir(&spec, &args.out)?;
    println!(
        "corpus {} ({} nodes, {} leaves)",
        args.out.display(),
        planted.corpus.len(),
        planted.corpus.leaf_count()
    );
    for (i, leaves) in planted.truth.iter().enumerate() {
        println!("class {i}: leaves {leaves:?}");
    }
    println!("oracle mock:planted:{}", args.out.join(PLANT_FILE).display());
    Ok(())
}

fn cmd_info(args: InfoArgs, file: &FileConfig) -> Result<(), CliError> {
    let oracle = args.oracle.or_else(|| file.oracle.clone());
    let corpus = args.corpus.or_else(|| file.corpus.clone());
    if oracle.is_none() && corpus.is_none() {
        return Err(CliError::config("info needs --oracle and/or --corpus"));
    }
    if let Some(spec) = oracle {
        let o = connect(&spec, OracleConfig::default())?;
        println!("oracle {}", o.describe());
        println!("num_classes {}", o.num_classes());
    }
    if let Some(path) = corpus {
        let t = load_corpus(&path)?;
        println!("corpus {}", path.display());
        println!("nodes {}", t.len());
        println!("leaves {}", t.leaf_count());
        println!("depth {}", t.depth());
        println!("samples {}", t.total_samples());
        println!("sample_shape {:?}", t.sample_shape());
    }
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::locate(cli.config.as_deref())?;
    match cli.command {
        Command::Search(a) => cmd_search(a, &file),
        Command::Score(a) => cmd_score(a, &file),
        Command::Export(a) => cmd_export(a, &file),
        Command::VerifyLabels(a) => cmd_verify(a, &file),
        Command::GenSynthetic(a) => cmd_gen(a),
        Command::Info(a) => cmd_info(a, &file),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str("theta = 0.7\nalpha = 0.3\nseed = 9\nworkers = 2\n").unwrap();
        let flags = CommonArgs {
            theta: Some(0.6),
            ..CommonArgs::default()
        };
        let r = resolve(&flags, &file);
        assert_eq!(r.search.theta, 0.6);
        assert_eq!(r.search.alpha, 0.3);
        assert_eq!(r.search.seed, 9);
        assert_eq!(r.search.expansion.seed, 9);
        assert_eq!(r.oracle_config.workers, 2);
        assert_eq!(r.oracle_config.batch_size, 64);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("thetta = 0.7\n").is_err());
    }

    #[test]
    fn parses_every_subcommand() {
        for argv in [
            vec!["domain-scope", "search", "--oracle", "mock:mean:n=3", "--corpus", "c", "--out", "r.json", "--k", "2"],
            vec!["domain-scope", "score", "--class", "1", "--node", "4"],
            vec!["domain-scope", "export", "--report", "r.json", "--out", "d"],
            vec!["domain-scope", "verify-labels", "--report", "r", "--embeddings", "e", "--hypothesis", "0=cat"],
            vec!["domain-scope", "gen-synthetic", "--out", "x"],
            vec!["domain-scope", "info", "--oracle", "mock:mean:n=3"],
        ] {
            assert!(Cli::try_parse_from(&argv).is_ok(), "{argv:?}");
        }
        assert!(Cli::try_parse_from(["domain-scope", "search", "--suite", "blur"]).is_err());
    }

    #[test]
    fn bad_flags_exit_with_config_code() {
        assert_eq!(run(["domain-scope", "search", "--theta", "abc"]), EXIT_CONFIG);
        assert_eq!(run(["domain-scope", "info"]), EXIT_CONFIG);
        assert_eq!(run(["domain-scope", "info", "--oracle", "mock:nope"]), EXIT_CONFIG);
    }
}
