//! Channel frequency response (CFR) containers, a synthetic multipath
//! generator, and dataset persistence.

mod generate;
mod io;

pub use generate::{generate_cfr, ChannelGenParams, MultipathProfile, PathComponent};
pub use io::{load_dataset, save_dataset};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex channel matrix `H` of shape `[n_f, n_r]`, stored row-major
/// (one row per subcarrier).
#[derive(Debug, Clone, PartialEq)]
pub struct CfrMatrix {
    n_f: usize,
    n_r: usize,
    values: Vec<Complex64>,
}

impl CfrMatrix {
    pub fn new(n_f: usize, n_r: usize, values: Vec<Complex64>) -> Result<Self> {
        if n_f < 2 || n_r < 1 {
            return Err(Error::param(format!(
                "CFR shape must satisfy n_f >= 2 and n_r >= 1, got ({n_f}, {n_r})"
            )));
        }
        if values.len() != n_f * n_r {
            return Err(Error::param(format!(
                "CFR has {} values, expected {}",
                values.len(),
                n_f * n_r
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::param(format!("CFR entry {i} is not finite")));
        }
        Ok(Self { n_f, n_r, values })
    }

    pub fn zeros(n_f: usize, n_r: usize) -> Result<Self> {
        Self::new(n_f, n_r, vec![Complex64::new(0.0, 0.0); n_f * n_r])
    }

    pub fn from_fn(n_f: usize, n_r: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let values = (0..n_f)
            .flat_map(|i| (0..n_r).map(move |a| (i, a)))
            .map(|(i, a)| f(i, a))
            .collect();
        Self::new(n_f, n_r, values)
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_f, self.n_r)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn get(&self, f: usize, a: usize) -> Complex64 {
        self.values[f * self.n_r + a]
    }

    pub fn set(&mut self, f: usize, a: usize, v: Complex64) {
        self.values[f * self.n_r + a] = v;
    }

    pub fn row(&self, f: usize) -> &[Complex64] {
        &self.values[f * self.n_r..(f + 1) * self.n_r]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            n_f: self.n_f,
            n_r: self.n_r,
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    /// Real/imaginary split as a `[2, n_f, n_r]` planar buffer.
    pub fn to_planar(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.values.len());
        out.extend(self.values.iter().map(|v| v.re));
        out.extend(self.values.iter().map(|v| v.im));
        out
    }

    /// Inverse of [`CfrMatrix::to_planar`].
    pub fn from_planar(n_f: usize, n_r: usize, planar: &[f64]) -> Result<Self> {
        let n = n_f * n_r;
        if planar.len() != 2 * n {
            return Err(Error::param(format!(
                "planar buffer has {} values, expected {}",
                planar.len(),
                2 * n
            )));
        }
        let values = (0..n)
            .map(|i| Complex64::new(planar[i], planar[n + i]))
            .collect();
        Self::new(n_f, n_r, values)
    }

    /// Rounds every component to `f32` precision (the on-disk precision).
    pub fn quantize_f32(&mut self) {
        for v in &mut self.values {
            *v = Complex64::new(v.re as f32 as f64, v.im as f32 as f64);
        }
    }
}

/// Provenance record stored alongside a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetMeta {
    /// Present for generated datasets; absent for imported ones.
    pub generator: Option<ChannelGenParams>,
    pub split: String,
}

/// A collection of equally shaped channel samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<CfrMatrix>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(samples: Vec<CfrMatrix>, meta: DatasetMeta) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::param("dataset must contain at least one sample"));
        };
        let shape = first.shape();
        if let Some(i) = samples.iter().position(|s| s.shape() != shape) {
            return Err(Error::param(format!(
                "sample {i} has shape {:?}, expected {shape:?}",
                samples[i].shape()
            )));
        }
        Ok(Self { samples, meta })
    }

    pub fn samples(&self) -> &[CfrMatrix] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.samples[0].shape()
    }

    /// Splits off the trailing `count` samples into a second dataset.
    pub fn split_tail(mut self, count: usize, tail_split: &str) -> Result<(Dataset, Dataset)> {
        if count == 0 || count >= self.samples.len() {
            return Err(Error::param(format!(
                "cannot split {count} of {} samples",
                self.samples.len()
            )));
        }
        let tail = self.samples.split_off(self.samples.len() - count);
        let tail_meta = DatasetMeta {
            generator: self.meta.generator.clone(),
            split: tail_split.to_string(),
        };
        Ok((self, Dataset::new(tail, tail_meta)?))
    }
}
