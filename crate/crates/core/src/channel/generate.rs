use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CfrMatrix, Dataset, DatasetMeta};
use crate::error::{Error, Result};

/// Parameters of the clustered sum-of-paths channel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelGenParams {
    pub n_f: usize,
    pub n_r: usize,
    pub num_paths: usize,
    /// Hz.
    pub subcarrier_spacing: f64,
    /// Seconds. Path delays are uniform on `[0, max_delay]`.
    pub max_delay: f64,
    /// Seconds. Path powers decay as `exp(-delay / delay_spread)`.
    pub delay_spread: f64,
    /// Element spacing of the uniform linear array, in wavelengths.
    pub antenna_spacing: f64,
    pub seed: u64,
}

impl Default for ChannelGenParams {
    fn default() -> Self {
        let n_f = 64;
        let subcarrier_spacing = 15e3;
        // Delays expressed in units of the inverse bandwidth 1 / (n_f * df).
        let sample = 1.0 / (n_f as f64 * subcarrier_spacing);
        Self {
            n_f,
            n_r: 8,
            num_paths: 8,
            subcarrier_spacing,
            max_delay: 4.0 * sample,
            delay_spread: 1.5 * sample,
            antenna_spacing: 0.5,
            seed: 0,
        }
    }
}

impl ChannelGenParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_f < 2 || self.n_r < 1 {
            return Err(Error::param(format!(
                "need n_f >= 2 and n_r >= 1, got ({}, {})",
                self.n_f, self.n_r
            )));
        }
        if self.num_paths < 1 {
            return Err(Error::param("num_paths must be at least 1"));
        }
        for (name, v) in [
            ("subcarrier_spacing", self.subcarrier_spacing),
            ("max_delay", self.max_delay),
            ("delay_spread", self.delay_spread),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.antenna_spacing.is_finite() {
            return Err(Error::param("antenna_spacing must be finite"));
        }
        Ok(())
    }
}

/// One propagation path: complex gain, delay in seconds and angle of arrival
/// in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: Complex64,
    pub delay: f64,
    pub angle: f64,
}

/// A concrete set of paths; evaluating it yields the CFR.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathProfile {
    pub paths: Vec<PathComponent>,
}

impl MultipathProfile {
    /// Draws delays, angles and exponentially weighted CN gains whose powers
    /// sum to one.
    pub fn sample<R: Rng + ?Sized>(params: &ChannelGenParams, rng: &mut R) -> Self {
        let l = params.num_paths;
        let delays: Vec<f64> = (0..l)
            .map(|_| rng.random::<f64>() * params.max_delay)
            .collect();
        let angles: Vec<f64> = (0..l)
            .map(|_| (rng.random::<f64>() - 0.5) * PI)
            .collect();
        let weights: Vec<f64> = delays
            .iter()
            .map(|d| (-d / params.delay_spread).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let paths = delays
            .into_iter()
            .zip(angles)
            .zip(weights)
            .map(|((delay, angle), w)| {
                let p = w / total;
                // CN(0, p): each component N(0, p/2).
                let std = (p / 2.0).sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                PathComponent {
                    gain: Complex64::new(re * std, im * std),
                    delay,
                    angle,
                }
            })
            .collect();
        Self { paths }
    }

    pub fn frequency_response(&self, params: &ChannelGenParams) -> Result<CfrMatrix> {
        let df = params.subcarrier_spacing;
        let spacing = params.antenna_spacing;
        CfrMatrix::from_fn(params.n_f, params.n_r, |f, a| {
            self.paths
                .iter()
                .map(|p| {
                    let phase = -2.0 * PI * (f as f64 * df * p.delay + spacing * a as f64 * p.angle.sin());
                    p.gain * Complex64::from_polar(1.0, phase)
                })
                .sum()
        })
    }
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Generates `count` channel samples. Sample `i` draws from its own stream
/// derived from `(params.seed, i)`, so results do not depend on evaluation
/// order. Values are rounded to `f32` so persistence is lossless.
pub fn generate_cfr(params: &ChannelGenParams, count: usize) -> Result<Dataset> {
    params.validate()?;
    if count < 1 {
        return Err(Error::param("count must be at least 1"));
    }
    let samples = (0..count)
        .map(|i| {
            let mut rng = sample_rng(params.seed, i);
            let mut h = MultipathProfile::sample(params, &mut rng).frequency_response(params)?;
            h.quantize_f32();
            Ok(h)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        samples,
        DatasetMeta {
            generator: Some(params.clone()),
            split: "generated".into(),
        },
    )
}
