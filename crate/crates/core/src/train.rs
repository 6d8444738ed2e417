//! Mixed training: every sample in a minibatch draws its own timestep, noise,
//! pilot pattern and SNR, and its class is dropped to the null class with
//! probability `p_uncond`.

use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{CfrMatrix, Dataset};
use crate::checkpoint::{save_checkpoint, TrainingMeta};
use crate::diffusion::{DiffusionSchedule, ScheduleSpec};
use crate::error::{Error, Result};
use crate::model::{Cdit, ConditionBatch, ConditionBundle, ModelConfig};
use crate::optim::{AdamW, AdamWConfig, WarmupCosine};
use crate::pilot::{normalize_power, observe, sample_pilot_pattern, sample_snr, PilotPattern};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Network shape; its `intervals` are the pilot intervals trained on.
    pub model: ModelConfig,
    pub schedule: ScheduleSpec,
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub warmup_steps: usize,
    /// Training SNR range in dB, sampled uniformly in dB.
    pub snr_db: (f64, f64),
    pub p_uncond: f64,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    /// Write an intermediate checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// The desk-scale run: 64 x 8 channels, three blocks of width 128.
    pub fn desk() -> Self {
        Self {
            model: ModelConfig::desk(),
            schedule: ScheduleSpec::default(),
            batch_size: 16,
            epochs: 30,
            base_lr: 2e-3,
            warmup_steps: 200,
            snr_db: (5.0, 35.0),
            p_uncond: 0.1,
            seed: 0,
            optimizer: AdamWConfig::default(),
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be positive"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::param(format!("base learning rate must be positive, got {}", self.base_lr)));
        }
        if !(self.snr_db.0 < self.snr_db.1) {
            return Err(Error::param(format!(
                "SNR range must satisfy min < max, got {:?}",
                self.snr_db
            )));
        }
        if !(0.0..=1.0).contains(&self.p_uncond) {
            return Err(Error::param(format!("p_uncond must lie in [0, 1], got {}", self.p_uncond)));
        }
        Ok(())
    }
}

/// The tensors and draws for one minibatch.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    /// Power-normalised clean channels, `[B, 2, n_f, n_r]`.
    pub h0: Tensor,
    pub eps: Tensor,
    pub h_t: Tensor,
    pub t: Vec<usize>,
    pub cond: ConditionBatch,
    pub patterns: Vec<PilotPattern>,
    /// Whether each sample's class was replaced by the null class.
    pub dropped: Vec<bool>,
    /// Linear SNR per sample.
    pub snr: Vec<f64>,
}

/// Draws every random quantity of one training step.
pub fn prepare_batch<R: Rng + ?Sized>(
    batch: &[CfrMatrix],
    rng: &mut R,
    cfg: &TrainConfig,
    sched: &DiffusionSchedule,
    dtype: DType,
    device: &Device,
) -> Result<PreparedBatch> {
    if batch.is_empty() {
        return Err(Error::param("training batch is empty"));
    }
    let m = &cfg.model;
    let n = 2 * m.n_f * m.n_r;
    let b = batch.len();
    let (mut h0s, mut epss, mut hts) = (Vec::with_capacity(b * n), Vec::with_capacity(b * n), Vec::with_capacity(b * n));
    let (mut t, mut bundles, mut patterns, mut dropped, mut snr) = (vec![], vec![], vec![], vec![], vec![]);
    for h in batch {
        if h.shape() != (m.n_f, m.n_r) {
            return Err(Error::param(format!(
                "sample shape {:?} does not match the model ({}, {})",
                h.shape(),
                m.n_f,
                m.n_r
            )));
        }
        let (h0, _) = normalize_power(h)?;
        let ti = rng.random_range(1..=sched.timesteps());
        let ab = sched.alpha_bar(ti);
        let planar = h0.to_planar();
        for &x in &planar {
            let e: f64 = rng.sample(StandardNormal);
            epss.push(e);
            hts.push(ab.sqrt() * x + (1.0 - ab).sqrt() * e);
        }
        h0s.extend_from_slice(&planar);
        let pattern = sample_pilot_pattern(rng, m.n_f, &m.intervals)?;
        let drop = rng.random::<f64>() < cfg.p_uncond;
        let r = sample_snr(rng, cfg.snr_db.0, cfg.snr_db.1);
        let sigma = 1.0 / r;
        let raw = observe(&h0, &pattern, sigma, rng)?;
        let class_id = if drop {
            m.null_class()
        } else {
            m.class_of(pattern.interval()).expect("pattern drawn from the model's intervals")
        };
        bundles.push(ConditionBundle {
            h_tilde: raw.h_tilde.to_planar(),
            mask: raw.mask(),
            sigma_n_sq: sigma,
            class_id,
        });
        t.push(ti);
        patterns.push(pattern);
        dropped.push(drop);
        snr.push(r);
    }
    let shape = (b, 2, m.n_f, m.n_r);
    let tensor = |v: Vec<f64>| -> Result<Tensor> { Ok(Tensor::from_vec(v, shape, device)?.to_dtype(dtype)?) };
    Ok(PreparedBatch {
        h0: tensor(h0s)?,
        eps: tensor(epss)?,
        h_t: tensor(hts)?,
        t,
        cond: ConditionBatch::from_bundles(&bundles, m, dtype, device)?,
        patterns,
        dropped,
        snr,
    })
}

/// Mean squared error between the injected and predicted noise.
pub fn noise_loss(eps: &Tensor, eps_pred: &Tensor) -> Result<Tensor> {
    Ok((eps - eps_pred)?.sqr()?.mean_all()?)
}

pub fn batch_loss(model: &Cdit, batch: &PreparedBatch) -> Result<Tensor> {
    let pred = model.forward(&batch.h_t, &batch.t, &batch.cond)?;
    noise_loss(&batch.eps, &pred)
}

/// Parameters exempt from weight decay: biases and the class table.
pub fn decays(name: &str) -> bool {
    !(name.ends_with(".bias") || name == "class_table")
}

/// Model, optimiser and learning-rate schedule for a run.
pub struct Trainer {
    pub model: Cdit,
    cfg: TrainConfig,
    sched: DiffusionSchedule,
    opt: AdamW,
    lr: WarmupCosine,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    /// `total_steps` sets the length of the cosine decay.
    pub fn new(model: Cdit, cfg: TrainConfig, total_steps: usize) -> Result<Self> {
        cfg.validate()?;
        if model.config() != &cfg.model {
            return Err(Error::param("model does not match the training config"));
        }
        let sched = cfg.schedule.build()?;
        let opt = AdamW::new(model.params().vars(), cfg.optimizer, decays)?;
        let lr = WarmupCosine {
            base_lr: cfg.base_lr,
            warmup: cfg.warmup_steps,
            total: total_steps,
        };
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            model,
            cfg,
            sched,
            opt,
            lr,
            rng,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> usize {
        self.opt.steps_taken()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// One optimiser update on `batch`; returns the loss and learning rate.
    pub fn training_step(&mut self, batch: &[CfrMatrix]) -> Result<(f64, f64)> {
        let prepared = prepare_batch(batch, &mut self.rng, &self.cfg, &self.sched, self.model.dtype(), self.model.device())?;
        let loss = batch_loss(&self.model, &prepared)?;
        let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        if !value.is_finite() {
            return Err(Error::TrainingDivergence {
                step: self.opt.steps_taken(),
                epoch: self.epoch,
                loss: value,
            });
        }
        let lr = self.lr.lr(self.opt.steps_taken());
        self.opt.step(&loss.backward()?, lr)?;
        Ok((value, lr))
    }

    /// One pass over `data` in a freshly shuffled order.
    pub fn run_epoch(&mut self, data: &[CfrMatrix], log: &mut Vec<LossRecord>) -> Result<f64> {
        self.epoch += 1;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut count = 0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<CfrMatrix> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, lr) = self.training_step(&batch)?;
            log.push(LossRecord {
                step: self.opt.steps_taken(),
                epoch: self.epoch,
                loss,
                lr,
            });
            total += loss;
            count += 1;
        }
        Ok(total / count as f64)
    }

    pub fn meta(&self) -> TrainingMeta {
        TrainingMeta {
            epoch: self.epoch,
            step: self.opt.steps_taken(),
            seed: self.cfg.seed,
        }
    }
}

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

pub struct TrainOutcome {
    pub model: Cdit,
    pub log: Vec<LossRecord>,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Path of the final checkpoint when an output directory was given.
    pub checkpoint: Option<PathBuf>,
}

pub const FINAL_CHECKPOINT: &str = "checkpoint.safetensors";
pub const LOSS_LOG: &str = "loss.csv";

pub fn write_loss_log(path: &Path, log: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    for rec in log {
        w.serialize(rec).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Trains a fresh network on `dataset` for `cfg.epochs` epochs. With `out`,
/// writes `checkpoint.safetensors`, optional per-epoch checkpoints and
/// `loss.csv` there.
pub fn train(dataset: &Dataset, cfg: &TrainConfig, dtype: DType, device: &Device, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::param("training dataset is empty"));
    }
    if dataset.shape() != (cfg.model.n_f, cfg.model.n_r) {
        return Err(Error::param(format!(
            "dataset shape {:?} does not match the model ({}, {})",
            dataset.shape(),
            cfg.model.n_f,
            cfg.model.n_r
        )));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let steps_per_epoch = dataset.len().div_ceil(cfg.batch_size);
    let model = Cdit::new(cfg.model.clone(), cfg.seed, dtype, device)?;
    let mut trainer = Trainer::new(model, cfg.clone(), steps_per_epoch * cfg.epochs)?;
    let mut log = Vec::new();
    let mut epoch_losses = Vec::new();
    for epoch in 1..=cfg.epochs {
        let mean = trainer.run_epoch(dataset.samples(), &mut log)?;
        log::info!("epoch {epoch}/{}: mean loss {mean:.5}", cfg.epochs);
        epoch_losses.push(mean);
        if let Some(dir) = out {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                save_checkpoint(dir.join(format!("epoch-{epoch:04}.safetensors")), &trainer.model, &cfg.schedule, &trainer.meta())?;
            }
        }
    }
    let checkpoint = match out {
        Some(dir) => {
            let path = dir.join(FINAL_CHECKPOINT);
            save_checkpoint(&path, &trainer.model, &cfg.schedule, &trainer.meta())?;
            write_loss_log(&dir.join(LOSS_LOG), &log)?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainOutcome {
        model: trainer.model,
        log,
        epoch_losses,
        checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_cfr, ChannelGenParams};
    use crate::checkpoint::load_checkpoint;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                n_f: 8,
                n_r: 4,
                patch_f: 4,
                patch_r: 2,
                depth: 1,
                width: 16,
                heads: 2,
                intervals: vec![2, 4],
                freq_dim: 16,
                mlp_ratio: 2,
            },
            batch_size: 8,
            epochs: 2,
            base_lr: 1e-3,
            warmup_steps: 2,
            ..TrainConfig::desk()
        }
    }

    fn tiny_data(count: usize) -> Dataset {
        let params = ChannelGenParams {
            n_f: 8,
            n_r: 4,
            ..ChannelGenParams::default()
        };
        generate_cfr(&params, count).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(tiny_cfg().validate().is_ok());
        assert!(TrainConfig { snr_db: (10.0, 10.0), ..tiny_cfg() }.validate().is_err());
        assert!(TrainConfig { p_uncond: -0.1, ..tiny_cfg() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..tiny_cfg() }.validate().is_err());
    }

    #[test]
    fn decay_groups() {
        assert!(decays("blocks.0.mlp.up.weight"));
        assert!(!decays("blocks.0.mlp.up.bias"));
        assert!(!decays("class_table"));
    }

    #[test]
    fn prepared_batch_draws_per_sample() {
        let cfg = tiny_cfg();
        let sched = cfg.schedule.build().unwrap();
        let data = tiny_data(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = prepare_batch(data.samples(), &mut rng, &cfg, &sched, DType::F64, &Device::Cpu).unwrap();
        assert!(b.t.iter().any(|&t| t != b.t[0]));
        assert!(b.t.iter().all(|&t| (1..=1000).contains(&t)));
        assert!(b.snr.iter().all(|&r| (db_bounds(5.0)..=db_bounds(35.0)).contains(&r)));
        for (k, (p, &d)) in b.patterns.iter().zip(&b.dropped).enumerate() {
            let want = if d { 2 } else { cfg.model.class_of(p.interval()).unwrap() };
            assert_eq!(b.cond.class_ids[k], want);
            assert!((b.cond.sigma_n_sq[k] - 1.0 / b.snr[k]).abs() < 1e-15);
        }
        // h_t is the closed-form forward sample of h0 with the drawn noise.
        let h0 = b.h0.to_vec3_flat();
        let eps = b.eps.to_vec3_flat();
        let ht = b.h_t.to_vec3_flat();
        let n = 2 * 8 * 4;
        for k in 0..16 {
            let ab = sched.alpha_bar(b.t[k]);
            for i in 0..n {
                let j = k * n + i;
                assert!((ht[j] - (ab.sqrt() * h0[j] + (1.0 - ab).sqrt() * eps[j])).abs() < 1e-12);
            }
        }
    }

    fn db_bounds(db: f64) -> f64 {
        10f64.powf(db / 10.0)
    }

    trait Flat {
        fn to_vec3_flat(&self) -> Vec<f64>;
    }

    impl Flat for Tensor {
        fn to_vec3_flat(&self) -> Vec<f64> {
            self.flatten_all().unwrap().to_vec1::<f64>().unwrap()
        }
    }

    #[test]
    fn oracle_prediction_has_zero_loss() {
        let cfg = tiny_cfg();
        let sched = cfg.schedule.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = prepare_batch(tiny_data(4).samples(), &mut rng, &cfg, &sched, DType::F64, &Device::Cpu).unwrap();
        let l = noise_loss(&b.eps, &b.eps).unwrap().to_scalar::<f64>().unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { epochs: 0, ..tiny_cfg() };
        let out = train(&tiny_data(8), &cfg, DType::F32, &Device::Cpu, Some(dir.path())).unwrap();
        assert!(out.log.is_empty());
        let init = Cdit::new(cfg.model.clone(), cfg.seed, DType::F32, &Device::Cpu).unwrap();
        let ck = load_checkpoint(out.checkpoint.unwrap(), &Device::Cpu).unwrap();
        for (name, var) in init.params().vars() {
            let a = var.as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
            let b = ck.model.params().get(name).unwrap().as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let data = tiny_data(16);
        let a = train(&data, &tiny_cfg(), DType::F32, &Device::Cpu, None).unwrap();
        let b = train(&data, &tiny_cfg(), DType::F32, &Device::Cpu, None).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), 4);
        assert!(a.log.iter().all(|r| r.loss >= 0.0));
    }

    #[test]
    fn loss_log_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&tiny_data(8), &tiny_cfg(), DType::F32, &Device::Cpu, Some(dir.path())).unwrap();
        let text = std::fs::read_to_string(dir.path().join(LOSS_LOG)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "step,epoch,loss,lr");
        assert_eq!(lines.count(), out.log.len());
    }

    #[test]
    fn null_only_training_leaves_interval_rows_untouched() {
        let cfg = TrainConfig { p_uncond: 1.0, epochs: 4, ..tiny_cfg() };
        let init = Cdit::new(cfg.model.clone(), cfg.seed, DType::F32, &Device::Cpu).unwrap();
        let before = init.params().get("class_table").unwrap().as_tensor().to_vec2::<f32>().unwrap();
        let out = train(&tiny_data(16), &cfg, DType::F32, &Device::Cpu, None).unwrap();
        let after = out.model.params().get("class_table").unwrap().as_tensor().to_vec2::<f32>().unwrap();
        assert_eq!(before[0], after[0]);
        assert_eq!(before[1], after[1]);
        assert_ne!(before[2], after[2]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let data = generate_cfr(&ChannelGenParams { n_f: 16, n_r: 4, ..ChannelGenParams::default() }, 4).unwrap();
        assert!(train(&data, &tiny_cfg(), DType::F32, &Device::Cpu, None).is_err());
    }
}
