//! Dense sample blocks.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("sample shape must be non-empty with positive dimensions, got {0:?}")]
    BadShape(Vec<usize>),
    #[error("data length {len} is not a multiple of the sample size {sample_len}")]
    RaggedData { len: usize, sample_len: usize },
    #[error("sample length {found} does not match shape {shape:?}")]
    LengthMismatch { shape: Vec<usize>, found: usize },
    #[error("value {value} at sample {sample}, offset {offset} is outside [0, 1]")]
    OutOfRange {
        sample: usize,
        offset: usize,
        value: f32,
    },
}

/// A block of samples sharing one shape, stored row-major as `f32`.
///
/// An image sample has shape `[H, W, C]` with index `(y * W + x) * C + c`; a
/// flat vector has shape `[D]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl SampleSet {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, SampleError> {
        let sample_len = checked_sample_len(&shape)?;
        if !data.len().is_multiple_of(sample_len) {
            return Err(SampleError::RaggedData {
                len: data.len(),
                sample_len,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn empty(shape: Vec<usize>) -> Result<Self, SampleError> {
        Self::new(shape, Vec::new())
    }

    /// Builds a set from borrowed rows, each of which must match `shape`.
    pub fn from_rows<'a, I>(shape: Vec<usize>, rows: I) -> Result<Self, SampleError>
    where
        I: IntoIterator<Item = &'a [f32]>,
    {
        let mut set = Self::empty(shape)?;
        for row in rows {
            set.push(row)?;
        }
        Ok(set)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of scalars per sample.
    pub fn sample_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.sample_len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Panics if `index >= self.len()`.
    pub fn sample(&self, index: usize) -> &[f32] {
        let n = self.sample_len();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn get(&self, index: usize) -> Option<&[f32]> {
        (index < self.len()).then(|| self.sample(index))
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.sample_len())
    }

    pub fn push(&mut self, row: &[f32]) -> Result<(), SampleError> {
        if row.len() != self.sample_len() {
            return Err(SampleError::LengthMismatch {
                shape: self.shape.clone(),
                found: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    /// Appends every sample of `other`; shapes must agree.
    pub fn extend_from(&mut self, other: &SampleSet) -> Result<(), SampleError> {
        if other.shape != self.shape {
            return Err(SampleError::LengthMismatch {
                shape: self.shape.clone(),
                found: other.sample_len(),
            });
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    /// Copies the samples at `indices`, in that order. Panics on an
    /// out-of-range index.
    pub fn select(&self, indices: &[usize]) -> SampleSet {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        SampleSet {
            shape: self.shape.clone(),
            data,
        }
    }

    /// `(height, width, channels)` when the shape is a 3-d image.
    pub fn image_dims(&self) -> Option<(usize, usize, usize)> {
        image_dims(&self.shape)
    }

    pub fn check_unit_range(&self) -> Result<(), SampleError> {
        let n = self.sample_len();
        match self
            .data
            .iter()
            .position(|v| !(0.0..=1.0).contains(v))
        {
            Some(pos) => Err(SampleError::OutOfRange {
                sample: pos / n,
                offset: pos % n,
                value: self.data[pos],
            }),
            None => Ok(()),
        }
    }

    /// Writes the raw little-endian `f32` block.
    pub fn write_block(&self, path: &Path) -> io::Result<()> {
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes)
    }

    /// Reads a raw little-endian `f32` block of exactly `count` samples.
    pub fn read_block(path: &Path, shape: Vec<usize>, count: usize) -> io::Result<Self> {
        let bytes = fs::read(path)?;
        let sample_len = checked_sample_len(&shape)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let expected = count * sample_len * 4;
        if bytes.len() != expected {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!(
                    "{}: expected {expected} bytes for {count} samples of shape {shape:?}, found {}",
                    path.display(),
                    bytes.len()
                ),
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self { shape, data })
    }
}

pub(crate) fn image_dims(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match *shape {
        [h, w, c] => Some((h, w, c)),
        _ => None,
    }
}

fn checked_sample_len(shape: &[usize]) -> Result<usize, SampleError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(SampleError::BadShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}
