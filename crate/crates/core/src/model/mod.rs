//! Conditional diffusion transformer (CDiT) predicting the injected noise
//! from a noised channel, the timestep and the pilot observation.
//!
//! Layout conventions: channel tensors are `[B, 2, n_f, n_r]` (real and
//! imaginary planes); token sequences are `[B, s, d]` with token `k` covering
//! patch `(k / (n_r / p_r), k % (n_r / p_r))`.

pub mod block;
pub mod layers;
pub mod params;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pilot::RawEstimate;
use block::CditBlock;
use layers::{layer_norm, modulate, Dense, EmbedMlp};
pub use layers::sinusoidal_embed;
use params::{Init, ParamStore};

/// Network shape and conditioning vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_f: usize,
    pub n_r: usize,
    pub patch_f: usize,
    pub patch_r: usize,
    /// Number of transformer blocks.
    pub depth: usize,
    /// Token width `d`.
    pub width: usize,
    pub heads: usize,
    /// Supported pilot intervals, ascending; interval `intervals[k]` is class
    /// `k` and class `intervals.len()` is the null class.
    pub intervals: Vec<usize>,
    /// Width of the sinusoidal encodings of `t` and the noise variance.
    pub freq_dim: usize,
    pub mlp_ratio: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Desk-scale network: 64 x 8 channels, patch (16, 2), three blocks of
    /// width 128.
    pub fn desk() -> Self {
        Self {
            n_f: 64,
            n_r: 8,
            patch_f: 16,
            patch_r: 2,
            depth: 3,
            width: 128,
            heads: 2,
            intervals: vec![4, 8, 16],
            freq_dim: 256,
            mlp_ratio: 4,
        }
    }

    /// Full-size network: 1024 x 32 channels, patch (64, 2), nine blocks of
    /// width 768.
    pub fn full_scale() -> Self {
        Self {
            n_f: 1024,
            n_r: 32,
            patch_f: 64,
            patch_r: 2,
            depth: 9,
            width: 768,
            heads: 12,
            intervals: vec![2, 4, 8, 16, 32],
            freq_dim: 256,
            mlp_ratio: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_f == 0 || self.patch_r == 0 || self.n_f % self.patch_f != 0 || self.n_r % self.patch_r != 0 {
            return Err(Error::param(format!(
                "patch ({}, {}) must divide channel shape ({}, {})",
                self.patch_f, self.patch_r, self.n_f, self.n_r
            )));
        }
        if self.width == 0 || self.width % 2 != 0 {
            return Err(Error::param(format!("width must be even, got {}", self.width)));
        }
        if self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::param(format!(
                "width {} not divisible by {} heads",
                self.width, self.heads
            )));
        }
        if self.freq_dim == 0 || self.freq_dim % 2 != 0 {
            return Err(Error::param("freq_dim must be even"));
        }
        if self.intervals.is_empty() || self.intervals.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param(format!(
                "pilot intervals must be non-empty and strictly ascending, got {:?}",
                self.intervals
            )));
        }
        Ok(())
    }

    pub fn patches_f(&self) -> usize {
        self.n_f / self.patch_f
    }

    pub fn patches_r(&self) -> usize {
        self.n_r / self.patch_r
    }

    /// Sequence length `s`.
    pub fn seq_len(&self) -> usize {
        self.patches_f() * self.patches_r()
    }

    pub fn num_classes(&self) -> usize {
        self.intervals.len()
    }

    pub fn null_class(&self) -> u32 {
        self.intervals.len() as u32
    }

    pub fn class_of(&self, interval: usize) -> Option<u32> {
        self.intervals.iter().position(|&p| p == interval).map(|k| k as u32)
    }

    /// Closed-form number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let d = self.width;
        let pp = self.patch_f * self.patch_r;
        let hidden = self.mlp_ratio * d;
        let dense = |i: usize, o: usize| i * o + o;
        let patches = dense(2 * pp, d) + dense(3 * pp, d);
        let fusion = dense(3, 2);
        let classes = (self.num_classes() + 1) * d;
        let embeds = 2 * (dense(self.freq_dim, d) + dense(d, d));
        let block = dense(d, 9 * d) + 8 * dense(d, d) + dense(d, hidden) + dense(hidden, d);
        let head = dense(d, 2 * d) + dense(d, 2 * pp);
        patches + fusion + classes + embeds + self.depth * block + head
    }
}

/// Conditioning information for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBundle {
    /// `[2, n_f, n_r]` planar raw estimate, zero off the pilot rows.
    pub h_tilde: Vec<f64>,
    /// `[n_f, n_r]` pilot mask.
    pub mask: Vec<f64>,
    pub sigma_n_sq: f64,
    /// Pilot interval class, or the null class.
    pub class_id: u32,
}

impl ConditionBundle {
    /// Bundle for an observation already in the network's normalised domain.
    pub fn from_raw(raw: &RawEstimate, sigma_n_sq: f64, cfg: &ModelConfig) -> Result<Self> {
        let class_id = cfg.class_of(raw.pattern.interval()).ok_or_else(|| {
            Error::param(format!(
                "pilot interval {} is not one of the model classes {:?}",
                raw.pattern.interval(),
                cfg.intervals
            ))
        })?;
        Ok(Self {
            h_tilde: raw.h_tilde.to_planar(),
            mask: raw.mask(),
            sigma_n_sq,
            class_id,
        })
    }
}

/// A batch of conditions materialised as tensors.
#[derive(Debug, Clone)]
pub struct ConditionBatch {
    /// `[B, 2, n_f, n_r]`.
    pub h_tilde: Tensor,
    /// `[B, 1, n_f, n_r]`.
    pub mask: Tensor,
    pub sigma_n_sq: Vec<f64>,
    pub class_ids: Vec<u32>,
}

impl ConditionBatch {
    pub fn from_bundles(bundles: &[ConditionBundle], cfg: &ModelConfig, dtype: DType, device: &Device) -> Result<Self> {
        let (n_f, n_r) = (cfg.n_f, cfg.n_r);
        let b = bundles.len();
        if b == 0 {
            return Err(Error::param("empty condition batch"));
        }
        let mut h = Vec::with_capacity(b * 2 * n_f * n_r);
        let mut m = Vec::with_capacity(b * n_f * n_r);
        for c in bundles {
            if c.h_tilde.len() != 2 * n_f * n_r || c.mask.len() != n_f * n_r {
                return Err(Error::param(format!(
                    "condition shape does not match the model's ({n_f}, {n_r})"
                )));
            }
            if c.class_id > cfg.null_class() {
                return Err(Error::param(format!(
                    "class id {} exceeds the null class {}",
                    c.class_id,
                    cfg.null_class()
                )));
            }
            h.extend_from_slice(&c.h_tilde);
            m.extend_from_slice(&c.mask);
        }
        Ok(Self {
            h_tilde: Tensor::from_vec(h, (b, 2, n_f, n_r), device)?.to_dtype(dtype)?,
            mask: Tensor::from_vec(m, (b, 1, n_f, n_r), device)?.to_dtype(dtype)?,
            sigma_n_sq: bundles.iter().map(|c| c.sigma_n_sq).collect(),
            class_ids: bundles.iter().map(|c| c.class_id).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    /// Same batch with every class id replaced by `class_id`.
    pub fn with_class(&self, class_id: u32) -> Self {
        Self {
            class_ids: vec![class_id; self.class_ids.len()],
            ..self.clone()
        }
    }
}

/// The network and its parameters.
pub struct Cdit {
    cfg: ModelConfig,
    store: ParamStore,
    patch_noised: Dense,
    patch_cond: Dense,
    fusion: Dense,
    class_table: Tensor,
    t_embed: EmbedMlp,
    sigma_embed: EmbedMlp,
    blocks: Vec<CditBlock>,
    final_adaln: Dense,
    final_proj: Dense,
    pos: Tensor,
}

// 1x1 fusion conv: passes the two raw-estimate planes through and ignores the
// weighted mask until trained.
const FUSION_INIT: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

impl Cdit {
    pub fn new(cfg: ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new(seed, dtype, device.clone());
        let d = cfg.width;
        let pp = cfg.patch_f * cfg.patch_r;
        let patch_noised = Dense::xavier(&mut store, "patch_noised", 2 * pp, d)?;
        let patch_cond = Dense::xavier(&mut store, "patch_cond", 3 * pp, d)?;
        let fusion = Dense::new(&mut store, "fusion", 3, 2, Init::Values(&FUSION_INIT), true)?;
        let class_table = store.var("class_table", &[cfg.num_classes() + 1, d], Init::Normal(0.02))?;
        let t_embed = EmbedMlp::new(&mut store, "t_embed", cfg.freq_dim, d)?;
        let sigma_embed = EmbedMlp::new(&mut store, "sigma_embed", cfg.freq_dim, d)?;
        let blocks = (0..cfg.depth)
            .map(|k| CditBlock::new(&mut store, &format!("blocks.{k}"), d, cfg.heads, cfg.mlp_ratio * d))
            .collect::<Result<Vec<_>>>()?;
        let final_adaln = Dense::zeros(&mut store, "final.adaln", d, 2 * d)?;
        let final_proj = Dense::zeros(&mut store, "final.proj", d, 2 * pp)?;

        let s = cfg.seq_len();
        let mut table = Vec::with_capacity(s * d);
        for pos in 0..s {
            table.extend(sinusoidal_embed(pos as f64, d)?);
        }
        let pos = Tensor::from_vec(table, (1, s, d), device)?.to_dtype(dtype)?;

        Ok(Self {
            cfg,
            store,
            patch_noised,
            patch_cond,
            fusion,
            class_table,
            t_embed,
            sigma_embed,
            blocks,
            final_adaln,
            final_proj,
            pos,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }

    pub fn parameter_count(&self) -> usize {
        self.store.parameter_count()
    }

    pub fn blocks(&self) -> &[CditBlock] {
        &self.blocks
    }

    /// Strided non-overlapping patch embedding plus the shared positional
    /// table. `x`: `[B, C, n_f, n_r]` -> `[B, s, d]`.
    fn patchify(&self, x: &Tensor, proj: &Dense) -> Result<Tensor> {
        let (b, c, n_f, n_r) = x.dims4()?;
        let (pf, pr) = (self.cfg.patch_f, self.cfg.patch_r);
        if n_f != self.cfg.n_f || n_r != self.cfg.n_r {
            return Err(Error::param(format!(
                "input ({n_f}, {n_r}) does not match the model ({}, {})",
                self.cfg.n_f, self.cfg.n_r
            )));
        }
        let (gf, gr) = (n_f / pf, n_r / pr);
        let patches = x
            .reshape(vec![b, c, gf, pf, gr, pr])?
            .permute(vec![0, 2, 4, 1, 3, 5])?
            .contiguous()?
            .reshape((b, gf * gr, c * pf * pr))?;
        Ok(proj.forward(&patches)?.broadcast_add(&self.pos)?)
    }

    /// Inverse token layout: `[B, s, 2 p_f p_r]` -> `[B, 2, n_f, n_r]`.
    fn unpatchify(&self, y: &Tensor) -> Result<Tensor> {
        let b = y.dim(0)?;
        let (pf, pr) = (self.cfg.patch_f, self.cfg.patch_r);
        let (gf, gr) = (self.cfg.patches_f(), self.cfg.patches_r());
        Ok(y
            .reshape(vec![b, gf, gr, 2, pf, pr])?
            .permute(vec![0, 3, 1, 4, 2, 5])?
            .contiguous()?
            .reshape((b, 2, self.cfg.n_f, self.cfg.n_r))?)
    }

    /// Token embedding of a `[B, C, n_f, n_r]` tensor through the noised-channel
    /// (`C = 2`) or condition (`C = 3`) stream.
    pub fn patchify_stream(&self, x: &Tensor) -> Result<Tensor> {
        match x.dim(1)? {
            2 => self.patchify(x, &self.patch_noised),
            3 => self.patchify(x, &self.patch_cond),
            c => Err(Error::param(format!("no patchify stream takes {c} channels"))),
        }
    }

    /// `concat(conv1x1(concat(H~, sigma^2 (1 - M))), M)`: `[B, 3, n_f, n_r]`.
    pub fn build_condition_tensor(&self, c: &ConditionBatch) -> Result<Tensor> {
        let b = c.len();
        let sigma = Tensor::from_vec(c.sigma_n_sq.clone(), (b, 1, 1, 1), self.device())?.to_dtype(self.dtype())?;
        let weighted = c.mask.affine(-1.0, 1.0)?.broadcast_mul(&sigma)?;
        let stacked = Tensor::cat(&[&c.h_tilde, &weighted], 1)?;
        let fused = self
            .fusion
            .forward(&stacked.permute((0, 2, 3, 1))?)?
            .permute((0, 3, 1, 2))?;
        Ok(Tensor::cat(&[&fused, &c.mask], 1)?)
    }

    /// `MLP_t(PE(t)) + MLP_sigma(PE(sigma^2)) + class_table[class]`: `[B, d]`.
    pub fn condition_embedding(&self, t: &[usize], sigma_n_sq: &[f64], class_ids: &[u32]) -> Result<Tensor> {
        let b = t.len();
        if sigma_n_sq.len() != b || class_ids.len() != b {
            return Err(Error::param("condition embedding inputs differ in batch size"));
        }
        if let Some(&bad) = class_ids.iter().find(|&&c| c > self.cfg.null_class()) {
            return Err(Error::param(format!(
                "class id {bad} outside [0, {}]",
                self.cfg.null_class()
            )));
        }
        let fd = self.cfg.freq_dim;
        let encode = |xs: &mut dyn Iterator<Item = f64>| -> Result<Tensor> {
            let mut v = Vec::with_capacity(b * fd);
            for x in xs {
                v.extend(sinusoidal_embed(x, fd)?);
            }
            Ok(Tensor::from_vec(v, (b, fd), self.device())?.to_dtype(self.dtype())?)
        };
        let te = encode(&mut t.iter().map(|&t| t as f64))?;
        let se = encode(&mut sigma_n_sq.iter().copied())?;
        let ids = Tensor::from_vec(class_ids.to_vec(), b, self.device())?;
        let ce = self.class_table.index_select(&ids, 0)?;
        Ok(((self.t_embed.forward(&te)? + self.sigma_embed.forward(&se)?)? + ce)?)
    }

    /// Predicted noise for `h_t` (`[B, 2, n_f, n_r]`) at per-sample timesteps.
    pub fn forward(&self, h_t: &Tensor, t: &[usize], c: &ConditionBatch) -> Result<Tensor> {
        let b = h_t.dim(0)?;
        if t.len() != b || c.len() != b {
            return Err(Error::param(format!(
                "batch sizes differ: sample {b}, timesteps {}, conditions {}",
                t.len(),
                c.len()
            )));
        }
        if h_t.dim(1)? != 2 {
            return Err(Error::param("noised channel must have 2 planes"));
        }
        let mut z = self.patchify(h_t, &self.patch_noised)?;
        let z_cond = self.patchify(&self.build_condition_tensor(c)?, &self.patch_cond)?;
        let e = self.condition_embedding(t, &c.sigma_n_sq, &c.class_ids)?;
        for block in &self.blocks {
            z = block.forward(&z, &z_cond, &e)?;
        }
        let m = self.final_adaln.forward(&e.silu()?)?.chunk(2, 1)?;
        let y = self.final_proj.forward(&modulate(&layer_norm(&z)?, &m[0], &m[1])?)?;
        self.unpatchify(&y)
    }
}
