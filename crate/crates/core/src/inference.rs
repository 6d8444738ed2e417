//! Conditional generation of the channel from a raw pilot estimate: power
//! rescaling, classifier-free guidance and the eta-parameterised reverse
//! process.

use candle_core::{DType, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::CfrMatrix;
use crate::diffusion::{sampler_step, select_timesteps, DiffusionSchedule, SamplerConfig};
use crate::error::{Error, Result};
use crate::model::{Cdit, ConditionBatch, ConditionBundle};
use crate::pilot::{estimate_signal_power, RawEstimate};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRequest {
    pub raw: RawEstimate,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl EstimationRequest {
    pub fn new(raw: RawEstimate, sampler: SamplerConfig, seed: u64) -> Self {
        Self { raw, sampler, seed }
    }

    pub fn validate(&self, timesteps: usize) -> Result<()> {
        if !(self.raw.snr_r > 0.0) {
            return Err(Error::param(format!("SNR must be positive, got {}", self.raw.snr_r)));
        }
        self.sampler.validate(timesteps)
    }
}

/// `eps(x, null) + gamma * (eps(x, c) - eps(x, null))`. With `gamma = 1`
/// only the conditional pass runs.
pub fn cfg_epsilon(model: &Cdit, h_t: &Tensor, t: &[usize], cond: &ConditionBatch, gamma: f64) -> Result<Tensor> {
    let null = model.config().null_class();
    if cond.class_ids.iter().any(|&c| c >= null) {
        return Err(Error::param("guided conditions must carry a pilot-interval class"));
    }
    if gamma == 1.0 {
        return model.forward(h_t, t, cond);
    }
    let conditional = model.forward(h_t, t, cond)?;
    let unconditional = model.forward(h_t, t, &cond.with_class(null))?;
    Ok((&unconditional + ((conditional - &unconditional)? * gamma)?)?)
}

/// Per-request quantities of the power normalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerScaling {
    /// `||H~||_F^2 / ||M||_1`.
    pub p_signal: f64,
    pub snr: f64,
}

impl PowerScaling {
    pub fn of(raw: &RawEstimate) -> Result<Self> {
        let p_signal = estimate_signal_power(raw)?;
        if !(p_signal > 0.0) {
            return Err(Error::Degenerate("raw estimate has zero power on the pilots".into()));
        }
        Ok(Self { p_signal, snr: raw.snr_r })
    }

    /// `sqrt((r + 1) / r) / sqrt(P_signal)`; tends to `1 / sqrt(P_signal)`
    /// for a noiseless observation.
    pub fn pre(&self) -> f64 {
        snr_factor(self.snr).recip() / self.p_signal.sqrt()
    }

    /// `sqrt(P_signal) * sqrt(r / (r + 1))`.
    pub fn post(&self) -> f64 {
        self.p_signal.sqrt() * snr_factor(self.snr)
    }

    /// Noise variance seen by the network after rescaling.
    pub fn sigma_n_sq(&self) -> f64 {
        1.0 / self.snr
    }
}

// sqrt(r / (r + 1)), equal to 1 at r = inf.
fn snr_factor(r: f64) -> f64 {
    if r.is_infinite() {
        1.0
    } else {
        (r / (r + 1.0)).sqrt()
    }
}

/// Estimates one channel.
pub fn estimate_channel(model: &Cdit, sched: &DiffusionSchedule, req: &EstimationRequest) -> Result<CfrMatrix> {
    Ok(estimate_batch(model, sched, std::slice::from_ref(req))?.remove(0))
}

/// Estimates several channels in one batched reverse process. Every request
/// keeps its own random stream, so the result for each equals estimating it
/// alone. All requests must share one sampler configuration.
pub fn estimate_batch(model: &Cdit, sched: &DiffusionSchedule, reqs: &[EstimationRequest]) -> Result<Vec<CfrMatrix>> {
    let first = reqs.first().ok_or_else(|| Error::param("no estimation requests"))?;
    let sampler = first.sampler;
    let cfg = model.config();
    let (n_f, n_r) = (cfg.n_f, cfg.n_r);
    let mut scalings = Vec::with_capacity(reqs.len());
    let mut bundles = Vec::with_capacity(reqs.len());
    for req in reqs {
        req.validate(sched.timesteps())?;
        if req.sampler != sampler {
            return Err(Error::param("batched requests must share a sampler configuration"));
        }
        if req.raw.h_tilde.shape() != (n_f, n_r) {
            return Err(Error::param(format!(
                "observation shape {:?} does not match the model ({n_f}, {n_r})",
                req.raw.h_tilde.shape()
            )));
        }
        let scaling = PowerScaling::of(&req.raw)?;
        let normalized = req.raw.h_tilde.scale(scaling.pre());
        let l1 = req.raw.pattern.mask_l1(n_r) as f64;
        log::debug!(
            "noise variance: 1/r = {:.6e}, from the rescaled observation {:.6e}",
            scaling.sigma_n_sq(),
            normalized.frobenius_sq() / l1 - 1.0
        );
        let class_id = cfg.class_of(req.raw.pattern.interval()).ok_or_else(|| {
            Error::param(format!(
                "pilot interval {} is not one the model was trained on ({:?})",
                req.raw.pattern.interval(),
                cfg.intervals
            ))
        })?;
        bundles.push(ConditionBundle {
            h_tilde: normalized.to_planar(),
            mask: req.raw.mask(),
            sigma_n_sq: scaling.sigma_n_sq(),
            class_id,
        });
        scalings.push(scaling);
    }

    let (dtype, device) = (model.dtype(), model.device());
    let b = reqs.len();
    let n = 2 * n_f * n_r;
    let mut rngs: Vec<ChaCha8Rng> = reqs.iter().map(|r| ChaCha8Rng::seed_from_u64(r.seed)).collect();
    let gaussian = |rngs: &mut [ChaCha8Rng]| -> Result<Tensor> {
        let mut v = Vec::with_capacity(b * n);
        for rng in rngs.iter_mut() {
            v.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
        Ok(Tensor::from_vec(v, (b, 2, n_f, n_r), device)?.to_dtype(dtype)?)
    };

    let cond = ConditionBatch::from_bundles(&bundles, cfg, dtype, device)?;
    let taus = select_timesteps(sched.timesteps(), sampler.steps, sampler.spacing)?;
    let mut h = gaussian(&mut rngs)?;
    for s in (0..taus.len()).rev() {
        let tau = taus[s];
        let tau_prev = if s == 0 { 0 } else { taus[s - 1] };
        let eps = cfg_epsilon(model, &h, &vec![tau; b], &cond, sampler.guidance)?;
        let noise = if tau_prev > 0 { Some(gaussian(&mut rngs)?) } else { None };
        h = sampler_step(&h, &eps, tau, tau_prev, sampler.eta, noise.as_ref(), sched)?;
        let bad = h.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?.iter().any(|v| !v.is_finite());
        if bad {
            return Err(Error::SamplerDivergence { timestep: tau });
        }
    }

    let flat = h.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    flat.chunks_exact(n)
        .zip(&scalings)
        .map(|(planar, sc)| Ok(CfrMatrix::from_planar(n_f, n_r, planar)?.scale(sc.post())))
        .collect()
}
