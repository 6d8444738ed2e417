//! Evaluation of estimators on held-out channels, and sweeps over SNR, pilot
//! interval, sampling steps and eta.
//!
//! Observations depend only on `(seed, sample index)`, so every method in a
//! sweep sees the same pilot patterns and noise.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{linear_interp_estimate, lmmse_estimate, LmmseModel};
use crate::channel::{CfrMatrix, Dataset};
use crate::diffusion::{DiffusionSchedule, SamplerConfig, Spacing};
use crate::error::{Error, Result};
use crate::inference::{estimate_batch, EstimationRequest};
use crate::metrics::{cosine_corr, nmse, to_db};
use crate::model::Cdit;
use crate::pilot::{make_pilot_pattern, normalize_power, observe_at_snr_db, RawEstimate};
use crate::plot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cdit,
    Linear,
    Lmmse,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cdit => "cdit",
            Method::Linear => "linear",
            Method::Lmmse => "lmmse",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cdit" => Ok(Method::Cdit),
            "linear" => Ok(Method::Linear),
            "lmmse" => Ok(Method::Lmmse),
            other => Err(Error::param(format!("unknown method `{other}` (cdit, linear, lmmse)"))),
        }
    }
}

/// Sampler used for a given eta: linspace timesteps when stochastic, leading
/// timesteps for the deterministic sampler.
pub fn sampler_for(steps: usize, eta: f64, guidance: f64) -> SamplerConfig {
    SamplerConfig {
        steps,
        spacing: if eta == 0.0 { Spacing::Leading } else { Spacing::Linspace },
        eta,
        guidance,
    }
}

/// One point of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub method: Method,
    pub interval: usize,
    /// Fixed first pilot, or `None` for a uniformly random offset per sample.
    pub pilot_start: Option<usize>,
    pub snr_db: f64,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub cell: EvalCell,
    /// Linear NMSE of each test sample.
    pub nmse_linear: Vec<f64>,
    /// Mean linear NMSE in dB.
    pub nmse_db: f64,
    /// Mean cosine correlation over samples.
    pub rho: f64,
    pub skipped_rows: usize,
    pub wall_seconds: f64,
}

/// Estimators available to an evaluation.
#[derive(Clone, Copy, Default)]
pub struct Estimators<'a> {
    pub cdit: Option<(&'a Cdit, &'a DiffusionSchedule)>,
    pub lmmse: Option<&'a LmmseModel>,
    /// Requests per batched reverse process.
    pub batch: usize,
}

/// Power-normalised ground truth and its observation for every test sample.
pub fn observations(test: &Dataset, interval: usize, pilot_start: Option<usize>, snr_db: f64, seed: u64) -> Result<Vec<(CfrMatrix, RawEstimate)>> {
    let (n_f, _) = test.shape();
    test.samples()
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let (h0, _) = normalize_power(h)?;
            let start = match pilot_start {
                Some(s) => s,
                None => rng.random_range(0..interval.max(1)),
            };
            let pattern = make_pilot_pattern(n_f, interval, start)?;
            let raw = observe_at_snr_db(&h0, &pattern, snr_db, &mut rng)?;
            Ok((h0, raw))
        })
        .collect()
}

/// Seed of the reverse process for test sample `k`.
pub fn sampler_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (k as u64).wrapping_add(0x632B_E59B_D9B4_E019)
}

/// Runs the method of `cell` on every observation.
pub fn estimate_all(obs: &[(CfrMatrix, RawEstimate)], cell: &EvalCell, est: &Estimators) -> Result<Vec<CfrMatrix>> {
    match cell.method {
        Method::Linear => obs.iter().map(|(_, raw)| linear_interp_estimate(raw)).collect(),
        Method::Lmmse => {
            let model = est.lmmse.ok_or_else(|| Error::Config("LMMSE evaluation needs fitted covariances".into()))?;
            obs.iter().map(|(_, raw)| lmmse_estimate(raw, model)).collect()
        }
        Method::Cdit => {
            let (model, sched) = est.cdit.ok_or_else(|| Error::Config("CDiT evaluation needs a checkpoint".into()))?;
            let reqs: Vec<EstimationRequest> = obs
                .iter()
                .enumerate()
                .map(|(k, (_, raw))| EstimationRequest::new(raw.clone(), cell.sampler, sampler_seed(cell.seed, k)))
                .collect();
            let mut out = Vec::with_capacity(reqs.len());
            for chunk in reqs.chunks(est.batch.max(1)) {
                out.extend(estimate_batch(model, sched, chunk)?);
            }
            Ok(out)
        }
    }
}

/// Scores `estimates` against the ground truth of `obs`.
pub fn score(cell: &EvalCell, obs: &[(CfrMatrix, RawEstimate)], estimates: &[CfrMatrix], wall_seconds: f64) -> Result<EvalResult> {
    if obs.len() != estimates.len() || obs.is_empty() {
        return Err(Error::param(format!("{} observations but {} estimates", obs.len(), estimates.len())));
    }
    let mut nmse_linear = Vec::with_capacity(obs.len());
    let mut rho = 0.0;
    let mut skipped_rows = 0;
    for ((h0, _), h_hat) in obs.iter().zip(estimates) {
        nmse_linear.push(nmse(h0, h_hat)?);
        let c = cosine_corr(h0, h_hat)?;
        rho += c.rho;
        skipped_rows += c.skipped_rows;
    }
    let mean = nmse_linear.iter().sum::<f64>() / nmse_linear.len() as f64;
    Ok(EvalResult {
        cell: *cell,
        nmse_db: to_db(mean),
        rho: rho / obs.len() as f64,
        skipped_rows,
        nmse_linear,
        wall_seconds,
    })
}

pub fn evaluate(test: &Dataset, cell: &EvalCell, est: &Estimators) -> Result<EvalResult> {
    let start = Instant::now();
    let obs = observations(test, cell.interval, cell.pilot_start, cell.snr_db, cell.seed)?;
    let estimates = estimate_all(&obs, cell, est)?;
    score(cell, &obs, &estimates, start.elapsed().as_secs_f64())
}

/// Axes of a sweep; every combination becomes one evaluated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub snr_db: Vec<f64>,
    pub intervals: Vec<usize>,
    pub steps: Vec<usize>,
    pub etas: Vec<f64>,
    pub guidance: f64,
    pub pilot_start: Option<usize>,
    pub seed: u64,
    /// Evaluate only the first this many test samples.
    pub max_samples: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Cdit, Method::Linear, Method::Lmmse],
            snr_db: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            intervals: vec![8],
            steps: vec![10],
            etas: vec![1.0],
            guidance: 1.0,
            pilot_start: None,
            seed: 0,
            max_samples: None,
        }
    }
}

impl SweepConfig {
    pub fn cells(&self) -> Vec<EvalCell> {
        let mut cells = Vec::new();
        for &method in &self.methods {
            for &interval in &self.intervals {
                for &snr_db in &self.snr_db {
                    for &steps in &self.steps {
                        for &eta in &self.etas {
                            cells.push(EvalCell {
                                method,
                                interval,
                                pilot_start: self.pilot_start,
                                snr_db,
                                sampler: sampler_for(steps, eta, self.guidance),
                                seed: self.seed,
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("methods", self.methods.len()),
            ("snr_db", self.snr_db.len()),
            ("intervals", self.intervals.len()),
            ("steps", self.steps.len()),
            ("etas", self.etas.len()),
        ];
        if let Some((name, _)) = axes.iter().find(|(_, n)| *n == 0) {
            return Err(Error::Config(format!("sweep axis `{name}` is empty")));
        }
        Ok(())
    }
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub interval: usize,
    /// First pilot index, or `random`.
    pub pilot_start: String,
    pub snr_db: f64,
    pub steps: usize,
    pub eta: f64,
    pub guidance: f64,
    pub seed: u64,
    pub samples: usize,
    pub nmse_db: f64,
    pub rho: f64,
    pub skipped_rows: usize,
    pub wall_seconds: f64,
}

/// One row of `samples.csv`: the NMSE of a single test channel in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub method: Method,
    pub interval: usize,
    pub snr_db: f64,
    pub steps: usize,
    pub eta: f64,
    pub sample: usize,
    pub nmse: f64,
}

impl From<&EvalResult> for SweepRow {
    fn from(r: &EvalResult) -> Self {
        Self {
            method: r.cell.method,
            interval: r.cell.interval,
            pilot_start: r.cell.pilot_start.map_or_else(|| "random".to_string(), |s| s.to_string()),
            snr_db: r.cell.snr_db,
            steps: r.cell.sampler.steps,
            eta: r.cell.sampler.eta,
            guidance: r.cell.sampler.guidance,
            seed: r.cell.seed,
            samples: r.nmse_linear.len(),
            nmse_db: r.nmse_db,
            rho: r.rho,
            skipped_rows: r.skipped_rows,
            wall_seconds: r.wall_seconds,
        }
    }
}

pub fn sample_rows(r: &EvalResult) -> Vec<SampleRow> {
    r.nmse_linear
        .iter()
        .enumerate()
        .map(|(sample, &nmse)| SampleRow {
            method: r.cell.method,
            interval: r.cell.interval,
            snr_db: r.cell.snr_db,
            steps: r.cell.sampler.steps,
            eta: r.cell.sampler.eta,
            sample,
            nmse,
        })
        .collect()
}

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SAMPLES_CSV: &str = "samples.csv";

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let fmt_err = |e: csv::Error| Error::format(path.display().to_string(), e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(fmt_err)?;
    for row in rows {
        w.serialize(row).map_err(fmt_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let fmt_err = |e: csv::Error| Error::format(path.display().to_string(), e.to_string());
    let mut r = csv::Reader::from_path(path).map_err(fmt_err)?;
    r.deserialize().map(|row| row.map_err(fmt_err)).collect()
}

/// Evaluates every cell of `cfg`. With `out`, writes `sweep.csv`,
/// `samples.csv` and the SVG plots there.
pub fn run_sweep(cfg: &SweepConfig, test: &Dataset, est: &Estimators, out: Option<&Path>) -> Result<Vec<EvalResult>> {
    cfg.validate()?;
    if cfg.methods.contains(&Method::Cdit) && est.cdit.is_none() {
        return Err(Error::Config("sweep includes cdit but no checkpoint was loaded".into()));
    }
    if cfg.methods.contains(&Method::Lmmse) && est.lmmse.is_none() {
        return Err(Error::Config("sweep includes lmmse but no covariance fit data was given".into()));
    }
    let test = match cfg.max_samples {
        Some(n) if n < test.len() => Dataset::new(test.samples()[..n].to_vec(), test.meta.clone())?,
        _ => test.clone(),
    };
    let cells = cfg.cells();
    let mut results = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let r = evaluate(&test, cell, est)?;
        log::info!(
            "[{}/{}] {} P={} snr={} dB S={} eta={}: NMSE {:.2} dB, rho {:.6}",
            i + 1,
            cells.len(),
            cell.method,
            cell.interval,
            cell.snr_db,
            cell.sampler.steps,
            cell.sampler.eta,
            r.nmse_db,
            r.rho
        );
        results.push(r);
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let rows: Vec<SweepRow> = results.iter().map(SweepRow::from).collect();
        let samples: Vec<SampleRow> = results.iter().flat_map(sample_rows).collect();
        write_csv(&dir.join(SWEEP_CSV), &rows)?;
        write_csv(&dir.join(SAMPLES_CSV), &samples)?;
        plot::write_all(dir, &rows, &samples)?;
    }
    Ok(results)
}
