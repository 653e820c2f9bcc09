//! Hard-label access to the target model.
//!
//! A [`Classifier`] backend answers "which class?" for a batch of samples and
//! nothing else. [`OracleHandle`] wraps a backend with a digest-keyed label
//! cache, batch splitting across a bounded worker pool, an optional query
//! budget, and range checks on every returned label.
//!
//! Backends:
//! - [`MockRule`]: deterministic in-process rules used in tests and examples.
//! - [`RemoteClassifier`]: the HTTP wire protocol described in [`protocol`].

mod mock;
pub mod protocol;
mod remote;
mod server;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

use crate::sample::SampleSet;
use crate::seed;

pub use mock::{parse_mock_spec, MockRule, MockSpecError};
pub use remote::{RemoteClassifier, RetryPolicy};
pub use server::MockServer;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("oracle returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed oracle response: {0}")]
    Malformed(String),
    #[error("oracle protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("query budget exhausted: {used} of {budget} used, {requested} more requested")]
    BudgetExhausted {
        budget: u64,
        used: u64,
        requested: u64,
    },
    #[error("oracle rejected input: {0}")]
    Rejected(String),
}

impl OracleError {
    /// Transport failures worth retrying: connection problems and 5xx.
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Unreachable(_) => true,
            Self::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// A model observable only through its predicted class indices.
///
/// Implementations must be safe to call from several threads at once.
pub trait Classifier: Send + Sync {
    fn num_classes(&self) -> Result<usize, OracleError>;

    /// One raw label per row, positionally. The handle range-checks labels,
    /// so backends may pass through whatever the model produced.
    fn classify(&self, shape: &[usize], rows: &[&[f32]]) -> Result<Vec<i64>, OracleError>;

    /// Short human-readable description for reports.
    fn describe(&self) -> String;
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn num_classes(&self) -> Result<usize, OracleError> {
        (**self).num_classes()
    }
    fn classify(&self, shape: &[usize], rows: &[&[f32]]) -> Result<Vec<i64>, OracleError> {
        (**self).classify(shape, rows)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<C: Classifier + ?Sized> Classifier for std::sync::Arc<C> {
    fn num_classes(&self) -> Result<usize, OracleError> {
        (**self).num_classes()
    }
    fn classify(&self, shape: &[usize], rows: &[&[f32]]) -> Result<Vec<i64>, OracleError> {
        (**self).classify(shape, rows)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Rows per backend request.
    pub batch_size: usize,
    /// Maximum concurrent in-flight batches.
    pub workers: usize,
    /// Maximum distinct samples sent to the backend.
    pub budget: Option<u64>,
    pub cache: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            workers: 4,
            budget: None,
            cache: true,
        }
    }
}

const DIGEST_KEY: u64 = 0x6f72_6163_6c65;

pub struct OracleHandle {
    backend: Box<dyn Classifier>,
    num_classes: usize,
    config: OracleConfig,
    cache: Mutex<HashMap<u64, usize>>,
    // Serializes cache-miss dispatch so concurrent callers never send the
    // same sample twice and the query count is schedule-independent.
    dispatch: Mutex<()>,
    queries: AtomicU64,
    requests: AtomicU64,
}

impl std::fmt::Debug for OracleHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleHandle")
            .field("backend", &self.backend.describe())
            .field("num_classes", &self.num_classes)
            .field("config", &self.config)
            .field("queries", &self.query_count())
            .finish()
    }
}

impl OracleHandle {
    /// Connects to `backend`, fetching its class count once for the session.
    pub fn new(backend: impl Classifier + 'static, config: OracleConfig) -> Result<Self, OracleError> {
        let num_classes = backend.num_classes()?;
        if num_classes == 0 {
            return Err(OracleError::ProtocolViolation(
                "oracle reports zero classes".into(),
            ));
        }
        Ok(Self {
            backend: Box::new(backend),
            num_classes,
            config: OracleConfig {
                batch_size: config.batch_size.max(1),
                ..config
            },
            cache: Mutex::new(HashMap::new()),
            dispatch: Mutex::new(()),
            queries: AtomicU64::new(0),
            requests: AtomicU64::new(0),
        })
    }

    /// Number of classes `n`; constant for the session.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn describe(&self) -> String {
        self.backend.describe()
    }

    /// Distinct samples sent to the backend so far.
    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::SeqCst)
    }

    /// Backend batch requests issued so far.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn classify_batch(&self, batch: &SampleSet) -> Result<Vec<usize>, OracleError> {
        let rows: Vec<&[f32]> = batch.iter().collect();
        self.classify_rows(batch.shape(), &rows)
    }

    /// Labels for `rows`, positionally. Each row must have `product(shape)`
    /// values.
    pub fn classify_rows(&self, shape: &[usize], rows: &[&[f32]]) -> Result<Vec<usize>, OracleError> {
        let sample_len: usize = shape.iter().product();
        if let Some(bad) = rows.iter().position(|r| r.len() != sample_len) {
            return Err(OracleError::Rejected(format!(
                "row {bad} has {} values, shape {shape:?} needs {sample_len}",
                rows[bad].len()
            )));
        }
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        if !self.config.cache {
            self.reserve(rows.len() as u64)?;
            let labels = self.dispatch_rows(shape, rows)?;
            self.queries.fetch_add(rows.len() as u64, Ordering::SeqCst);
            return Ok(labels);
        }

        let digests: Vec<u64> = rows
            .iter()
            .map(|r| seed::digest_f32(DIGEST_KEY, r))
            .collect();
        if let Some(labels) = self.lookup_all(&digests) {
            return Ok(labels);
        }

        let _guard = self.dispatch.lock().unwrap_or_else(|e| e.into_inner());
        let missing: Vec<(u64, &[f32])> = {
            let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
            let mut seen = std::collections::HashSet::new();
            digests
                .iter()
                .zip(rows)
                .filter(|(d, _)| !cache.contains_key(d) && seen.insert(**d))
                .map(|(d, r)| (*d, *r))
                .collect()
        };
        if !missing.is_empty() {
            self.reserve(missing.len() as u64)?;
            let miss_rows: Vec<&[f32]> = missing.iter().map(|(_, r)| *r).collect();
            let labels = self.dispatch_rows(shape, &miss_rows)?;
            let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
            for ((d, _), label) in missing.iter().zip(labels) {
                cache.insert(*d, label);
            }
            self.queries
                .fetch_add(missing.len() as u64, Ordering::SeqCst);
        }
        Ok(self
            .lookup_all(&digests)
            .expect("every digest was just resolved"))
    }

    fn lookup_all(&self, digests: &[u64]) -> Option<Vec<usize>> {
        let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        digests.iter().map(|d| cache.get(d).copied()).collect()
    }

    fn reserve(&self, requested: u64) -> Result<(), OracleError> {
        if let Some(budget) = self.config.budget {
            let used = self.query_count();
            if used + requested > budget {
                return Err(OracleError::BudgetExhausted {
                    budget,
                    used,
                    requested,
                });
            }
        }
        Ok(())
    }

    // Scoped threads, not rayon: this runs under the dispatch lock.
    fn dispatch_rows(&self, shape: &[usize], rows: &[&[f32]]) -> Result<Vec<usize>, OracleError> {
        let chunks: Vec<&[&[f32]]> = rows.chunks(self.config.batch_size).collect();
        let run = |chunk: &[&[f32]]| {
            self.requests.fetch_add(1, Ordering::SeqCst);
            let raw = self.backend.classify(shape, chunk)?;
            self.check_labels(chunk.len(), raw)
        };
        let workers = self.config.workers.max(1).min(chunks.len());
        type Slot = Option<Result<Vec<usize>, OracleError>>;
        let results: Vec<Result<Vec<usize>, OracleError>> = if workers <= 1 {
            chunks.iter().map(|c| run(c)).collect()
        } else {
            let next = AtomicUsize::new(0);
            let slots: Vec<Mutex<Slot>> =
                chunks.iter().map(|_| Mutex::new(None)).collect();
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        let Some(chunk) = chunks.get(i) else { break };
                        *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(run(chunk));
                    });
                }
            });
            slots
                .into_iter()
                .map(|s| {
                    s.into_inner()
                        .unwrap_or_else(|e| e.into_inner())
                        .expect("every chunk ran")
                })
                .collect()
        };
        let mut out = Vec::with_capacity(rows.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }

    fn check_labels(&self, expected: usize, raw: Vec<i64>) -> Result<Vec<usize>, OracleError> {
        if raw.len() != expected {
            return Err(OracleError::ProtocolViolation(format!(
                "expected {expected} labels, got {}",
                raw.len()
            )));
        }
        raw.into_iter()
            .map(|l| {
                usize::try_from(l)
                    .ok()
                    .filter(|&l| l < self.num_classes)
                    .ok_or_else(|| {
                        OracleError::ProtocolViolation(format!(
                            "label {l} outside [0, {})",
                            self.num_classes
                        ))
                    })
            })
            .collect()
    }
}

/// Builds an oracle from a command-line style spec: an `http://` or
/// `https://` base URL, or `mock:<rule>` (see [`parse_mock_spec`]).
pub fn connect(spec: &str, config: OracleConfig) -> Result<OracleHandle, ConnectError> {
    if spec.starts_with("http://") || spec.starts_with("https://") {
        let remote = RemoteClassifier::new(spec, RetryPolicy::default(), Duration::from_secs(30));
        Ok(OracleHandle::new(remote, config)?)
    } else if let Some(rest) = spec.strip_prefix("mock:") {
        let rule = parse_mock_spec(rest)?;
        Ok(OracleHandle::new(rule, config)?)
    } else {
        Err(ConnectError::Spec(MockSpecError::Syntax(format!(
            "oracle must be an http(s) URL or mock:<rule>, got {spec:?}"
        ))))
    }
}

#[derive(Debug, Error)]
pub enum ConnectError {
    #[error(transparent)]
    Spec(#[from] MockSpecError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}
