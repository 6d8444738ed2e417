//! Variance schedule, closed-form forward process and the eta-parameterised
//! reverse sampler covering both DDPM (`eta = 1`) and DDIM (`eta = 0`).
//!
//! Timesteps are 1-based: `t = 1..=T`, with the boundary convention
//! `alpha_bar(0) = 1`.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compact description of a schedule, stored inside checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Linear,
            timesteps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        match self.kind {
            ScheduleKind::Linear => linear_schedule(self.timesteps, self.beta_start, self.beta_end),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    spec: ScheduleSpec,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    posterior_betas: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn spec(&self) -> ScheduleSpec {
        self.spec
    }

    pub fn timesteps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// `alpha_bar(0)` is 1 by convention.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn posterior_beta(&self, t: usize) -> f64 {
        self.posterior_betas[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn posterior_betas(&self) -> &[f64] {
        &self.posterior_betas
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.timesteps() {
            return Err(Error::param(format!(
                "timestep {t} outside [1, {}]",
                self.timesteps()
            )));
        }
        Ok(())
    }
}

/// `beta_t` linear from `beta_start` at `t = 1` to `beta_end` at `t = T`.
pub fn linear_schedule(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<DiffusionSchedule> {
    if timesteps < 2 {
        return Err(Error::param(format!("need at least 2 timesteps, got {timesteps}")));
    }
    if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
        return Err(Error::param(format!(
            "need 0 < beta_start < beta_end < 1, got ({beta_start}, {beta_end})"
        )));
    }
    let span = (timesteps - 1) as f64;
    let betas: Vec<f64> = (0..timesteps)
        .map(|i| beta_start + i as f64 / span * (beta_end - beta_start))
        .collect();
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let alpha_bars: Vec<f64> = alphas
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    let posterior_betas = (0..timesteps)
        .map(|i| {
            let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
            (1.0 - prev) / (1.0 - alpha_bars[i]) * betas[i]
        })
        .collect();
    Ok(DiffusionSchedule {
        spec: ScheduleSpec {
            kind: ScheduleKind::Linear,
            timesteps,
            beta_start,
            beta_end,
        },
        betas,
        alphas,
        alpha_bars,
        posterior_betas,
    })
}

/// `H_t = sqrt(alpha_bar_t) H_0 + sqrt(1 - alpha_bar_t) eps`.
pub fn forward_sample(h0: &Tensor, t: usize, eps: &Tensor, sched: &DiffusionSchedule) -> Result<Tensor> {
    sched.check_t(t)?;
    if h0.shape() != eps.shape() {
        return Err(Error::param(format!(
            "noise shape {:?} differs from sample shape {:?}",
            eps.dims(),
            h0.dims()
        )));
    }
    let ab = sched.alpha_bar(t);
    Ok((h0.affine(ab.sqrt(), 0.0)? + eps.affine((1.0 - ab).sqrt(), 0.0)?)?)
}

/// Rule for picking the inference subsequence of timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    /// Evenly spaced, including both `1` and `T`.
    Linspace,
    /// `1 + k * floor(T / S)`.
    Leading,
}

impl std::str::FromStr for Spacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linspace" => Ok(Spacing::Linspace),
            "leading" => Ok(Spacing::Leading),
            other => Err(Error::param(format!("unknown spacing `{other}`"))),
        }
    }
}

/// Inference sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub steps: usize,
    pub spacing: Spacing,
    pub eta: f64,
    pub guidance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::ddpm(10)
    }
}

impl SamplerConfig {
    /// Stochastic sampler with linspace timesteps.
    pub fn ddpm(steps: usize) -> Self {
        Self {
            steps,
            spacing: Spacing::Linspace,
            eta: 1.0,
            guidance: 1.0,
        }
    }

    /// Deterministic sampler with leading timesteps.
    pub fn ddim(steps: usize) -> Self {
        Self {
            steps,
            spacing: Spacing::Leading,
            eta: 0.0,
            guidance: 1.0,
        }
    }

    pub fn validate(&self, timesteps: usize) -> Result<()> {
        if self.steps < 2 || self.steps > timesteps {
            return Err(Error::param(format!(
                "sampling steps must lie in [2, {timesteps}], got {}",
                self.steps
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::param(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if !(self.guidance >= 0.0 && self.guidance.is_finite()) {
            return Err(Error::param(format!(
                "guidance must be non-negative, got {}",
                self.guidance
            )));
        }
        Ok(())
    }
}

/// Increasing subsequence `tau_1 < ... < tau_S` of `1..=T`.
pub fn select_timesteps(timesteps: usize, steps: usize, spacing: Spacing) -> Result<Vec<usize>> {
    if steps < 2 || steps > timesteps {
        return Err(Error::param(format!(
            "need 2 <= S <= T, got S = {steps}, T = {timesteps}"
        )));
    }
    let taus: Vec<usize> = match spacing {
        Spacing::Linspace => {
            let stride = (timesteps - 1) as f64 / (steps - 1) as f64;
            // Round half up.
            (0..steps)
                .map(|s| (1.0 + s as f64 * stride + 0.5).floor() as usize)
                .collect()
        }
        Spacing::Leading => {
            let stride = timesteps / steps;
            (0..steps).map(|s| 1 + s * stride).collect()
        }
    };
    debug_assert!(taus.windows(2).all(|w| w[0] < w[1]));
    Ok(taus)
}

/// `sigma_{tau_s}(eta)`; `tau_prev = 0` uses `alpha_bar(0) = 1` and gives 0.
pub fn ddim_sigma(sched: &DiffusionSchedule, tau_s: usize, tau_prev: usize, eta: f64) -> Result<f64> {
    sched.check_t(tau_s)?;
    if tau_prev >= tau_s {
        return Err(Error::param(format!(
            "previous timestep {tau_prev} must precede {tau_s}"
        )));
    }
    let ab_s = sched.alpha_bar(tau_s);
    let ab_p = sched.alpha_bar(tau_prev);
    Ok(eta * ((1.0 - ab_p) / (1.0 - ab_s)).sqrt() * (1.0 - ab_s / ab_p).sqrt())
}

/// The reverse update written as
/// `H_prev = sample * H + eps * eps_hat + noise * z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub sample: f64,
    pub eps: f64,
    pub noise: f64,
}

impl StepCoefficients {
    pub fn new(sched: &DiffusionSchedule, tau_s: usize, tau_prev: usize, eta: f64) -> Result<Self> {
        let sigma = ddim_sigma(sched, tau_s, tau_prev, eta)?;
        let ab_s = sched.alpha_bar(tau_s);
        let ab_p = sched.alpha_bar(tau_prev);
        let mut dir = 1.0 - ab_p - sigma * sigma;
        if dir < 0.0 {
            // Rounding at the boundary can push an exact zero slightly negative.
            if dir > -1e-12 {
                dir = 0.0;
            } else {
                return Err(Error::Domain(format!(
                    "1 - alpha_bar(prev) - sigma^2 = {dir} < 0 at tau = {tau_s}, eta = {eta}"
                )));
            }
        }
        let ratio = (ab_p / ab_s).sqrt();
        Ok(Self {
            sample: ratio,
            eps: -ratio * (1.0 - ab_s).sqrt() + dir.sqrt(),
            noise: sigma,
        })
    }
}

/// One reverse step from `tau_s` to `tau_prev`. `noise` must be `None` for
/// the final step (`tau_prev = 0`).
pub fn sampler_step(
    h_tau: &Tensor,
    eps_pred: &Tensor,
    tau_s: usize,
    tau_prev: usize,
    eta: f64,
    noise: Option<&Tensor>,
    sched: &DiffusionSchedule,
) -> Result<Tensor> {
    if h_tau.shape() != eps_pred.shape() {
        return Err(Error::param(format!(
            "prediction shape {:?} differs from sample shape {:?}",
            eps_pred.dims(),
            h_tau.dims()
        )));
    }
    if tau_prev == 0 && noise.is_some() {
        return Err(Error::param("the final step must not inject noise"));
    }
    let c = StepCoefficients::new(sched, tau_s, tau_prev, eta)?;
    let mut out = (h_tau.affine(c.sample, 0.0)? + eps_pred.affine(c.eps, 0.0)?)?;
    if let Some(z) = noise {
        if z.shape() != h_tau.shape() {
            return Err(Error::param("noise shape differs from sample shape"));
        }
        if c.noise != 0.0 {
            out = (out + z.affine(c.noise, 0.0)?)?;
        }
    }
    Ok(out)
}
