use std::thread;
use std::time::Duration;

use ureq::Agent;

use super::protocol::{ClassifyRequestRef, ClassifyResponse, InfoResponse, CLASSIFY_PATH, INFO_PATH};
use super::{Classifier, OracleError};

/// Exponential backoff for transport errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

impl RetryPolicy {
    fn run<T>(&self, mut op: impl FnMut() -> Result<T, OracleError>) -> Result<T, OracleError> {
        let mut delay = self.base_delay;
        let mut attempt = 1;
        loop {
            match op() {
                Err(e) if e.is_retryable() && attempt < self.attempts.max(1) => {
                    log::warn!("oracle attempt {attempt} failed ({e}); retrying in {delay:?}");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// An oracle reached over the HTTP classification protocol.
pub struct RemoteClassifier {
    base_url: String,
    agent: Agent,
    retry: RetryPolicy,
}

impl RemoteClassifier {
    pub fn new(base_url: &str, retry: RetryPolicy, timeout: Duration) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
            retry,
        }
    }

    fn read_body(
        &self,
        result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<String, OracleError> {
        let mut resp = result.map_err(|e| OracleError::Unreachable(format!("{}: {e}", self.base_url)))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| OracleError::Unreachable(e.to_string()))?;
        if status != 200 {
            return Err(OracleError::Http { status, body });
        }
        Ok(body)
    }
}

impl Classifier for RemoteClassifier {
    fn num_classes(&self) -> Result<usize, OracleError> {
        let url = format!("{}{INFO_PATH}", self.base_url);
        let body = self
            .retry
            .run(|| self.read_body(self.agent.get(&url).call()))?;
        let info: InfoResponse =
            serde_json::from_str(&body).map_err(|e| OracleError::Malformed(e.to_string()))?;
        usize::try_from(info.num_classes)
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                OracleError::ProtocolViolation(format!("num_classes must be positive, got {}", info.num_classes))
            })
    }

    fn classify(&self, shape: &[usize], rows: &[&[f32]]) -> Result<Vec<i64>, OracleError> {
        let url = format!("{}{CLASSIFY_PATH}", self.base_url);
        let request = ClassifyRequestRef {
            shape,
            samples: rows,
        };
        let body = self
            .retry
            .run(|| self.read_body(self.agent.post(&url).send_json(&request)))?;
        let resp: ClassifyResponse =
            serde_json::from_str(&body).map_err(|e| OracleError::Malformed(e.to_string()))?;
        Ok(resp.labels)
    }

    fn describe(&self) -> String {
        self.base_url.clone()
    }
}
