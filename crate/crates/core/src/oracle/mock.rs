use std::path::Path;

use thiserror::Error;

use super::{Classifier, OracleError};
use crate::seed;
use crate::synthetic::{PlantSpec, PlantedRule};

/// Deterministic in-process oracle rules.
///
/// Every rule is a pure function of `(parameters, seed, sample bytes)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MockRule {
    /// `floor(mean(x) * n)`, clamped to `[0, n)`.
    MeanThreshold { num_classes: usize },
    /// Always `label`.
    Constant { num_classes: usize, label: usize },
    /// A hash of the sample bytes, uniform over `[0, n)`.
    UniformRandom { num_classes: usize, seed: u64 },
    /// Labels by lattice-cell membership of planted leaves.
    Planted(PlantedRule),
}

impl MockRule {
    pub fn num_classes(&self) -> usize {
        match self {
            Self::MeanThreshold { num_classes }
            | Self::Constant { num_classes, .. }
            | Self::UniformRandom { num_classes, .. } => *num_classes,
            Self::Planted(rule) => rule.num_classes(),
        }
    }

    pub fn label(&self, x: &[f32]) -> usize {
        match self {
            Self::MeanThreshold { num_classes } => {
                let mean = x.iter().map(|&v| f64::from(v)).sum::<f64>() / x.len().max(1) as f64;
                let bin = (mean * *num_classes as f64).floor();
                if bin <= 0.0 {
                    0
                } else {
                    (bin as usize).min(num_classes - 1)
                }
            }
            Self::Constant { label, .. } => *label,
            Self::UniformRandom { num_classes, seed } => {
                (seed::digest_f32(*seed, x) % *num_classes as u64) as usize
            }
            Self::Planted(rule) => rule.label(x),
        }
    }
}

impl Classifier for MockRule {
    fn num_classes(&self) -> Result<usize, OracleError> {
        Ok(MockRule::num_classes(self))
    }

    fn classify(&self, shape: &[usize], rows: &[&[f32]]) -> Result<Vec<i64>, OracleError> {
        if let Self::Planted(rule) = self {
            let len: usize = shape.iter().product();
            if len != rule.dim() {
                return Err(OracleError::Rejected(format!(
                    "planted rule expects {} values per sample, shape {shape:?} has {len}",
                    rule.dim()
                )));
            }
        }
        Ok(rows.iter().map(|r| self.label(r) as i64).collect())
    }

    fn describe(&self) -> String {
        match self {
            Self::MeanThreshold { num_classes } => format!("mock:mean:n={num_classes}"),
            Self::Constant { num_classes, label } => {
                format!("mock:constant:n={num_classes},label={label}")
            }
            Self::UniformRandom { num_classes, seed } => {
                format!("mock:uniform:n={num_classes},seed={seed}")
            }
            Self::Planted(rule) => format!("mock:planted(n={})", rule.num_classes()),
        }
    }
}

#[derive(Debug, Error)]
pub enum MockSpecError {
    #[error("invalid oracle spec: {0}")]
    Syntax(String),
    #[error("cannot load plant file {path}: {reason}")]
    Plant { path: String, reason: String },
}

/// Parses the part after `mock:`.
///
/// | spec | rule |
/// |---|---|
/// | `mean:n=10` | [`MockRule::MeanThreshold`] |
/// | `constant:n=10,label=3` | [`MockRule::Constant`] |
/// | `uniform:n=10,seed=7` | [`MockRule::UniformRandom`] (seed defaults to 0) |
/// | `planted:<path/to/plant.json>` | [`MockRule::Planted`] |
pub fn parse_mock_spec(spec: &str) -> Result<MockRule, MockSpecError> {
    let (kind, args) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "planted" | "leaf-affinity" => {
            let path = Path::new(args);
            let plant_err = |reason: String| MockSpecError::Plant {
                path: args.to_string(),
                reason,
            };
            let text = std::fs::read_to_string(path).map_err(|e| plant_err(e.to_string()))?;
            let spec: PlantSpec =
                serde_json::from_str(&text).map_err(|e| plant_err(e.to_string()))?;
            let rule = PlantedRule::from_spec(&spec).map_err(|e| plant_err(e.to_string()))?;
            Ok(MockRule::Planted(rule))
        }
        "mean" | "region-threshold" | "constant" | "uniform" | "uniform-random" => {
            let mut n = None;
            let mut label = None;
            let mut seed = 0u64;
            for pair in args.split(',').filter(|p| !p.is_empty()) {
                let (key, value) = pair
                    .split_once('=')
                    .ok_or_else(|| MockSpecError::Syntax(format!("expected key=value, got {pair:?}")))?;
                let parsed: u64 = value
                    .parse()
                    .map_err(|_| MockSpecError::Syntax(format!("{key}: not an integer: {value:?}")))?;
                match key {
                    "n" => n = Some(parsed as usize),
                    "label" => label = Some(parsed as usize),
                    "seed" => seed = parsed,
                    _ => return Err(MockSpecError::Syntax(format!("unknown key {key:?}"))),
                }
            }
            let num_classes = n
                .filter(|&n| n > 0)
                .ok_or_else(|| MockSpecError::Syntax("n must be a positive integer".into()))?;
            match kind {
                "constant" => {
                    let label = label
                        .filter(|&l| l < num_classes)
                        .ok_or_else(|| MockSpecError::Syntax("label must be in [0, n)".into()))?;
                    Ok(MockRule::Constant { num_classes, label })
                }
                "mean" | "region-threshold" => Ok(MockRule::MeanThreshold { num_classes }),
                _ => Ok(MockRule::UniformRandom { num_classes, seed }),
            }
        }
        other => Err(MockSpecError::Syntax(format!("unknown mock rule {other:?}"))),
    }
}
