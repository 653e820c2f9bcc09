//! Classification wire protocol.
//!
//! - `GET /v1/info` returns `{"num_classes": <int>}`.
//! - `POST /v1/classify` takes `{"shape": [...], "samples": [[f32, ...], ...]}`
//!   and returns `{"labels": [<int>, ...]}`, one label per sample, positionally.
//!
//! Responses carry hard labels only. Any extra field (such as scores or
//! probabilities), a non-integer label, or a non-200 status is an error on the
//! client side. `f32` values are written in shortest round-trip form, so a
//! sample survives the JSON encoding bit for bit.

use serde::{Deserialize, Serialize};

pub const INFO_PATH: &str = "/v1/info";
pub const CLASSIFY_PATH: &str = "/v1/classify";

/// Borrowing form of a classify request, for sending.
#[derive(Debug, Serialize)]
pub struct ClassifyRequestRef<'a> {
    pub shape: &'a [usize],
    pub samples: &'a [&'a [f32]],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    pub shape: Vec<usize>,
    pub samples: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyResponse {
    pub labels: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoResponse {
    pub num_classes: i64,
}
