//! Sample-set expansion: seeded perturbation and geometric transforms.
//!
//! `expand` keeps each original sample and appends `variants_per_sample`
//! transformed copies. Variant `v` applies exactly one transform family,
//! cycling through the suite in order, with parameters drawn from a seed
//! derived from `(config seed, sample index, variant index)`. Output is
//! therefore identical for any thread count.
//!
//! Geometric transforms treat a sample of shape `[H, W, C]` as an image.
//! Resampling is bilinear with zero fill outside the source; every output
//! value is clamped to `[0, 1]`.

use std::str::FromStr;

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::{image_dims, SampleError, SampleSet};
use crate::seed;

pub const DEFAULT_EPSILON: f64 = 0.03;

#[derive(Debug, Error, PartialEq)]
pub enum ExpandError {
    #[error("geometric transforms need an [H, W, C] image shape, got {0:?}")]
    NotAnImage(Vec<usize>),
    #[error("invalid expansion config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sample(#[from] SampleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Perturb, translate, rotate, perspective, round-robin.
    FullGeometric,
    PerturbOnly,
}

impl Suite {
    pub fn families(self) -> &'static [TransformKind] {
        match self {
            Suite::FullGeometric => &[
                TransformKind::Perturb,
                TransformKind::Translate,
                TransformKind::Rotate,
                TransformKind::Perspective,
            ],
            Suite::PerturbOnly => &[TransformKind::Perturb],
        }
    }

    /// Geometric for image shapes, perturb-only otherwise.
    pub fn for_shape(shape: &[usize]) -> Suite {
        if image_dims(shape).is_some() {
            Suite::FullGeometric
        } else {
            Suite::PerturbOnly
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full-geometric" => Ok(Suite::FullGeometric),
            "perturb-only" => Ok(Suite::PerturbOnly),
            other => Err(format!(
                "unknown suite {other:?} (expected full-geometric or perturb-only)"
            )),
        }
    }
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Suite::FullGeometric => "full-geometric",
            Suite::PerturbOnly => "perturb-only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    /// Transformed copies per sample (`t`).
    pub variants_per_sample: usize,
    /// Half-width of the uniform additive noise.
    pub epsilon: f64,
    /// Largest shift, as a fraction of the image side.
    pub max_translate: f64,
    pub max_rotate_deg: f64,
    /// Largest corner displacement, as a fraction of the image side.
    pub max_perspective_jitter: f64,
    pub seed: u64,
    pub suite: Suite,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            variants_per_sample: 8,
            epsilon: DEFAULT_EPSILON,
            max_translate: 0.10,
            max_rotate_deg: 15.0,
            max_perspective_jitter: 0.10,
            seed: 0,
            suite: Suite::FullGeometric,
        }
    }
}

impl ExpansionConfig {
    pub fn perturb_only() -> Self {
        Self {
            suite: Suite::PerturbOnly,
            ..Self::default()
        }
    }

    /// Same settings with every magnitude set to zero.
    pub fn zero_magnitude(&self) -> Self {
        Self {
            epsilon: 0.0,
            max_translate: 0.0,
            max_rotate_deg: 0.0,
            max_perspective_jitter: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ExpandError> {
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("max_translate", self.max_translate),
            ("max_rotate_deg", self.max_rotate_deg),
            ("max_perspective_jitter", self.max_perspective_jitter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ExpandError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Number of samples `expand` produces from `count` inputs.
    pub fn expanded_len(&self, count: usize) -> usize {
        count * (1 + self.variants_per_sample)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Perturb,
    Translate,
    Rotate,
    Perspective,
}

/// A concrete transform with its parameters fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// I.i.d. uniform noise in `[-epsilon, epsilon]` per value.
    Perturb { epsilon: f64 },
    /// Shift by whole pixels; `dx` to the right, `dy` down.
    Translate { dx: i64, dy: i64 },
    /// Rotation about the image center. Positive angles turn the content
    /// clockwise as displayed (y axis pointing down).
    Rotate { degrees: f64 },
    /// Displacement `[dx, dy]` of the top-left, top-right, bottom-right and
    /// bottom-left corners; the interior follows the induced homography.
    Perspective { offsets: [[f64; 2]; 4] },
}

impl TransformKind {
    /// Draws parameters within the bounds of `cfg`.
    pub fn sample<R: Rng>(
        self,
        cfg: &ExpansionConfig,
        shape: &[usize],
        rng: &mut R,
    ) -> Result<Transform, ExpandError> {
        if self == TransformKind::Perturb {
            return Ok(Transform::Perturb {
                epsilon: cfg.epsilon,
            });
        }
        let (h, w, _) = image_dims(shape).ok_or_else(|| ExpandError::NotAnImage(shape.to_vec()))?;
        let symmetric = |rng: &mut R, bound: f64| {
            if bound > 0.0 {
                rng.random_range(-bound..=bound)
            } else {
                0.0
            }
        };
        Ok(match self {
            TransformKind::Perturb => unreachable!(),
            TransformKind::Translate => {
                let mx = (cfg.max_translate * w as f64).round() as i64;
                let my = (cfg.max_translate * h as f64).round() as i64;
                Transform::Translate {
                    dx: rng.random_range(-mx..=mx),
                    dy: rng.random_range(-my..=my),
                }
            }
            TransformKind::Rotate => Transform::Rotate {
                degrees: symmetric(rng, cfg.max_rotate_deg),
            },
            TransformKind::Perspective => {
                let jx = cfg.max_perspective_jitter * w as f64;
                let jy = cfg.max_perspective_jitter * h as f64;
                let mut offsets = [[0.0; 2]; 4];
                for corner in &mut offsets {
                    corner[0] = symmetric(rng, jx);
                    corner[1] = symmetric(rng, jy);
                }
                Transform::Perspective { offsets }
            }
        })
    }
}

impl Transform {
    pub fn kind(&self) -> TransformKind {
        match self {
            Transform::Perturb { .. } => TransformKind::Perturb,
            Transform::Translate { .. } => TransformKind::Translate,
            Transform::Rotate { .. } => TransformKind::Rotate,
            Transform::Perspective { .. } => TransformKind::Perspective,
        }
    }

    /// Applies the transform to one sample. `seed` drives the perturbation
    /// noise and is ignored by the geometric transforms.
    pub fn apply(&self, x: &[f32], shape: &[usize], seed: u64) -> Result<Vec<f32>, ExpandError> {
        let len: usize = shape.iter().product();
        if x.len() != len {
            return Err(SampleError::LengthMismatch {
                shape: shape.to_vec(),
                found: x.len(),
            }
            .into());
        }
        if let Transform::Perturb { epsilon } = *self {
            return Ok(perturb(x, epsilon, seed));
        }
        let (h, w, c) = image_dims(shape).ok_or_else(|| ExpandError::NotAnImage(shape.to_vec()))?;
        let img = Image { data: x, h, w, c };
        Ok(match *self {
            Transform::Perturb { .. } => unreachable!(),
            Transform::Translate { dx, dy } => img.translate(dx, dy),
            Transform::Rotate { degrees } => img.rotate(degrees),
            Transform::Perspective { offsets } => img.perspective(&offsets),
        })
    }
}

/// Draws a `kind` transform from `seed` within the bounds of `cfg` and
/// applies it to `x`.
pub fn transform_one(
    x: &[f32],
    shape: &[usize],
    kind: TransformKind,
    cfg: &ExpansionConfig,
    seed: u64,
) -> Result<Vec<f32>, ExpandError> {
    let mut rng = seed::rng(seed);
    let t = kind.sample(cfg, shape, &mut rng)?;
    t.apply(x, shape, rng.random())
}

/// Originals plus `t` variants each, grouped per source sample:
/// `[x0, x0', x0'', .., x1, x1', ..]`.
pub fn expand(s: &SampleSet, cfg: &ExpansionConfig) -> Result<SampleSet, ExpandError> {
    cfg.validate()?;
    let families = cfg.suite.families();
    if cfg.suite == Suite::FullGeometric && s.image_dims().is_none() {
        return Err(ExpandError::NotAnImage(s.shape().to_vec()));
    }
    let shape = s.shape();
    let t = cfg.variants_per_sample;
    let blocks: Vec<Result<Vec<f32>, ExpandError>> = (0..s.len())
        .into_par_iter()
        .map(|i| {
            let x = s.sample(i);
            let mut out = Vec::with_capacity((1 + t) * x.len());
            out.extend(x.iter().map(|v| v.clamp(0.0, 1.0)));
            for v in 0..t {
                let kind = families[v % families.len()];
                let seed = seed::derive(cfg.seed, &[i as u64, v as u64]);
                out.extend(transform_one(x, shape, kind, cfg, seed)?);
            }
            Ok(out)
        })
        .collect();
    let mut data = Vec::with_capacity(cfg.expanded_len(s.len()) * s.sample_len());
    for block in blocks {
        data.extend(block?);
    }
    Ok(SampleSet::new(shape.to_vec(), data)?)
}

fn perturb(x: &[f32], epsilon: f64, seed: u64) -> Vec<f32> {
    if epsilon == 0.0 {
        return x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    }
    let mut rng = seed::rng(seed);
    x.iter()
        .map(|&v| {
            let noisy = f64::from(v) + rng.random_range(-epsilon..=epsilon);
            noisy.clamp(0.0, 1.0) as f32
        })
        .collect()
}

struct Image<'a> {
    data: &'a [f32],
    h: usize,
    w: usize,
    c: usize,
}

impl Image<'_> {
    fn px(&self, x: i64, y: i64, ch: usize) -> f64 {
        if x < 0 || y < 0 || x >= self.w as i64 || y >= self.h as i64 {
            return 0.0;
        }
        f64::from(self.data[(y as usize * self.w + x as usize) * self.c + ch])
    }

    fn translate(&self, dx: i64, dy: i64) -> Vec<f32> {
        let mut out = vec![0.0f32; self.data.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                let (sx, sy) = (x as i64 - dx, y as i64 - dy);
                for ch in 0..self.c {
                    out[(y * self.w + x) * self.c + ch] = self.px(sx, sy, ch).clamp(0.0, 1.0) as f32;
                }
            }
        }
        out
    }

    fn rotate(&self, degrees: f64) -> Vec<f32> {
        let (sin, cos) = degrees.to_radians().sin_cos();
        let cx = (self.w as f64 - 1.0) / 2.0;
        let cy = (self.h as f64 - 1.0) / 2.0;
        self.resample(|x, y| {
            let (dx, dy) = (x - cx, y - cy);
            Some((cx + cos * dx + sin * dy, cy - sin * dx + cos * dy))
        })
    }

    fn perspective(&self, offsets: &[[f64; 2]; 4]) -> Vec<f32> {
        if offsets.iter().flatten().all(|&o| o == 0.0) {
            return self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        }
        let (w, h) = (self.w as f64 - 1.0, self.h as f64 - 1.0);
        let src = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
        let mut dst = src;
        for (d, o) in dst.iter_mut().zip(offsets) {
            d[0] += o[0];
            d[1] += o[1];
        }
        // Output pixels live in the displaced frame; map them back.
        match homography(&dst, &src) {
            Some(m) => self.resample(|x, y| {
                let z = m[6] * x + m[7] * y + 1.0;
                if z.abs() < 1e-12 {
                    return None;
                }
                Some((
                    (m[0] * x + m[1] * y + m[2]) / z,
                    (m[3] * x + m[4] * y + m[5]) / z,
                ))
            }),
            // Collapsed corners (1-pixel sides or extreme jitter): leave as is.
            None => self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// Fills each output pixel by bilinear sampling the source at
    /// `source_of(x, y)`; `None` yields zeros.
    fn resample(&self, source_of: impl Fn(f64, f64) -> Option<(f64, f64)>) -> Vec<f32> {
        let mut out = vec![0.0f32; self.data.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                let Some((sx, sy)) = source_of(x as f64, y as f64) else {
                    continue;
                };
                if !(sx.is_finite() && sy.is_finite()) {
                    continue;
                }
                let (sx, sy) = (snap(sx), snap(sy));
                let (x0, y0) = (sx.floor(), sy.floor());
                let (fx, fy) = (sx - x0, sy - y0);
                let (x0, y0) = (x0 as i64, y0 as i64);
                for ch in 0..self.c {
                    let v = self.px(x0, y0, ch) * (1.0 - fx) * (1.0 - fy)
                        + self.px(x0 + 1, y0, ch) * fx * (1.0 - fy)
                        + self.px(x0, y0 + 1, ch) * (1.0 - fx) * fy
                        + self.px(x0 + 1, y0 + 1, ch) * fx * fy;
                    out[(y * self.w + x) * self.c + ch] = v.clamp(0.0, 1.0) as f32;
                }
            }
        }
        out
    }
}

/// Rounds coordinates that are integral up to floating-point noise, so
/// right-angle rotations land exactly on pixel centers.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Projective map sending each `from[i]` to `to[i]`, as the first eight
/// entries of a row-major 3x3 matrix with the last entry fixed to 1.
fn homography(from: &[[f64; 2]; 4], to: &[[f64; 2]; 4]) -> Option<[f64; 8]> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (i, (p, q)) in from.iter().zip(to).enumerate() {
        let (x, y, u, v) = (p[0], p[1], q[0], q[1]);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    h.iter().all(|v| v.is_finite()).then(|| {
        let mut out = [0.0; 8];
        out.copy_from_slice(h.as_slice());
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(h: usize, w: usize, c: usize) -> Vec<f32> {
        let n = h * w * c;
        (0..n).map(|i| i as f32 / n as f32).collect()
    }

    #[test]
    fn zero_variants_is_identity() {
        let s = SampleSet::new(vec![4, 4, 1], ramp(4, 4, 2)).unwrap();
        let cfg = ExpansionConfig {
            variants_per_sample: 0,
            ..ExpansionConfig::default()
        };
        assert_eq!(expand(&s, &cfg).unwrap(), s);
    }

    #[test]
    fn count_law() {
        let s = SampleSet::new(vec![3], vec![0.5; 150]).unwrap();
        let out = expand(&s, &ExpansionConfig::perturb_only()).unwrap();
        assert_eq!(s.len(), 50);
        assert_eq!(out.len(), 450);
    }

    #[test]
    fn perturbation_stays_within_epsilon() {
        let s = SampleSet::new(vec![8], vec![0.5; 8 * 20]).unwrap();
        let out = expand(&s, &ExpansionConfig::perturb_only()).unwrap();
        assert!(out.data().iter().all(|&v| (0.47f32..=0.53f32).contains(&v)));
        assert!(out.data().iter().any(|&v| v != 0.5));
    }

    #[test]
    fn rotate_zero_is_exact() {
        let x = ramp(5, 7, 3);
        let out = Transform::Rotate { degrees: 0.0 }.apply(&x, &[5, 7, 3], 0).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn full_shift_is_blank() {
        let x = ramp(4, 6, 1);
        let out = Transform::Translate { dx: 6, dy: 0 }.apply(&x, &[4, 6, 1], 0).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        let out = Transform::Translate { dx: 0, dy: -4 }.apply(&x, &[4, 6, 1], 0).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn translate_moves_content() {
        let x = ramp(3, 3, 1);
        let out = Transform::Translate { dx: 1, dy: 1 }.apply(&x, &[3, 3, 1], 0).unwrap();
        assert_eq!(out[4], x[0]);
        assert_eq!(out[8], x[4]);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn quarter_turn_matches_index_permutation() {
        let (n, c) = (6, 2);
        let x = ramp(n, n, c);
        let out = Transform::Rotate { degrees: 90.0 }.apply(&x, &[n, n, c], 0).unwrap();
        // Clockwise quarter turn: out[row][col] = in[n-1-col][row].
        for row in 0..n {
            for col in 0..n {
                for ch in 0..c {
                    let src = ((n - 1 - col) * n + row) * c + ch;
                    assert_eq!(out[(row * n + col) * c + ch], x[src], "({row},{col},{ch})");
                }
            }
        }
    }

    #[test]
    fn homography_recovers_identity_and_shift() {
        let sq = [[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]];
        let id = homography(&sq, &sq).unwrap();
        for (got, want) in id.iter().zip([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let shifted = sq.map(|[x, y]| [x + 1.0, y - 2.0]);
        let m = homography(&sq, &shifted).unwrap();
        assert!((m[2] - 1.0).abs() < 1e-12 && (m[5] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn perspective_keeps_values_in_range() {
        let x = ramp(8, 8, 3);
        let offsets = [[0.8, -0.5], [-0.6, 0.7], [0.3, 0.4], [-0.2, -0.9]];
        let out = Transform::Perspective { offsets }.apply(&x, &[8, 8, 3], 0).unwrap();
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(out, x);
        let same = Transform::Perspective {
            offsets: [[0.0; 2]; 4],
        }
        .apply(&x, &[8, 8, 3], 0)
        .unwrap();
        assert_eq!(same, x);
    }

    #[test]
    fn geometric_suite_rejects_flat_samples() {
        let s = SampleSet::new(vec![16], vec![0.5; 16]).unwrap();
        assert_eq!(
            expand(&s, &ExpansionConfig::default()),
            Err(ExpandError::NotAnImage(vec![16]))
        );
        assert!(transform_one(&[0.5; 16], &[16], TransformKind::Rotate, &ExpansionConfig::default(), 1).is_err());
    }

    #[test]
    fn rejects_negative_magnitudes() {
        let cfg = ExpansionConfig {
            epsilon: -0.1,
            ..ExpansionConfig::perturb_only()
        };
        assert!(matches!(cfg.validate(), Err(ExpandError::InvalidConfig(_))));
    }

    fn image_set() -> impl Strategy<Value = SampleSet> {
        (1usize..7, 1usize..7, 1usize..3, 0usize..4).prop_flat_map(|(h, w, c, n)| {
            proptest::collection::vec(0.0f32..=1.0, h * w * c * n)
                .prop_map(move |data| SampleSet::new(vec![h, w, c], data).unwrap())
        })
    }

    fn config() -> impl Strategy<Value = ExpansionConfig> {
        (0usize..6, 0.0f64..0.5, 0.0f64..0.5, 0.0f64..90.0, 0.0f64..0.5, any::<u64>()).prop_map(
            |(t, eps, tr, rot, persp, seed)| ExpansionConfig {
                variants_per_sample: t,
                epsilon: eps,
                max_translate: tr,
                max_rotate_deg: rot,
                max_perspective_jitter: persp,
                seed,
                suite: Suite::FullGeometric,
            },
        )
    }

    proptest! {
        #[test]
        fn expansion_laws(s in image_set(), cfg in config()) {
            let e = expand(&s, &cfg).unwrap();
            prop_assert_eq!(e.len(), s.len() * (1 + cfg.variants_per_sample));
            prop_assert!(e.data().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(&expand(&s, &cfg).unwrap(), &e);
            let z = expand(&s, &cfg.zero_magnitude()).unwrap();
            for (i, row) in z.iter().enumerate() {
                prop_assert_eq!(row, s.sample(i / (1 + cfg.variants_per_sample)));
            }
        }

        #[test]
        fn same_result_on_any_thread_count(s in image_set(), cfg in config()) {
            let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            let many = rayon::ThreadPoolBuilder::new().num_threads(5).build().unwrap();
            let a = one.install(|| expand(&s, &cfg)).unwrap();
            let b = many.install(|| expand(&s, &cfg)).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn suite_parsing() {
        assert_eq!("perturb-only".parse::<Suite>(), Ok(Suite::PerturbOnly));
        assert_eq!(Suite::FullGeometric.to_string().parse::<Suite>(), Ok(Suite::FullGeometric));
        assert!("blur".parse::<Suite>().is_err());
        assert_eq!(Suite::for_shape(&[4, 4, 3]), Suite::FullGeometric);
        assert_eq!(Suite::for_shape(&[16]), Suite::PerturbOnly);
    }
}
