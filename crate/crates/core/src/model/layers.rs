use candle_core::{Tensor, D};

use super::params::{Init, ParamStore};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-6;

/// Sinusoidal encoding: entry `2j` is `sin(pos / 10000^(2j/dim))`, entry
/// `2j+1` the matching cosine.
pub fn sinusoidal_embed(pos: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::param(format!("embedding width must be even, got {dim}")));
    }
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim / 2 {
        let freq = 10000f64.powf(2.0 * j as f64 / dim as f64);
        let arg = pos / freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    Ok(out)
}

/// Affine map `x W^T + b` acting on the last dimension.
pub struct Dense {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        weight_init: Init,
        bias: bool,
    ) -> Result<Self> {
        let weight = store.var(&format!("{name}.weight"), &[fan_out, fan_in], weight_init)?;
        let bias = if bias {
            Some(store.var(&format!("{name}.bias"), &[fan_out], Init::Zeros)?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    pub fn xavier(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        Self::new(store, name, fan_in, fan_out, Init::XavierUniform { fan_in, fan_out }, true)
    }

    pub fn zeros(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        Self::new(store, name, fan_in, fan_out, Init::Zeros, true)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let (lead, fan_in) = dims.split_at(dims.len() - 1);
        let rows: usize = lead.iter().product();
        let y = x.contiguous()?.reshape((rows, fan_in[0]))?.matmul(&self.weight.t()?)?;
        let mut out_shape = lead.to_vec();
        out_shape.push(self.weight.dim(0)?);
        let y = y.reshape(out_shape)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        })
    }
}

/// Layer normalisation over the last dimension, no learned affine.
pub fn layer_norm(x: &Tensor) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    Ok(centered.broadcast_div(&(var + LN_EPS)?.sqrt()?)?)
}

/// `x * (1 + scale) + shift` with `[B, d]` modulation over `[B, s, d]` tokens.
pub fn modulate(x: &Tensor, shift: &Tensor, scale: &Tensor) -> Result<Tensor> {
    let scale = (scale.unsqueeze(1)? + 1.0)?;
    Ok(x.broadcast_mul(&scale)?.broadcast_add(&shift.unsqueeze(1)?)?)
}

pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let sum = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&sum)?)
}

/// Multi-head scaled dot-product attention with separate query and
/// key/value sources.
pub struct Attention {
    q: Dense,
    k: Dense,
    v: Dense,
    out: Dense,
    heads: usize,
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, heads: usize) -> Result<Self> {
        if heads == 0 || width % heads != 0 {
            return Err(Error::param(format!(
                "width {width} not divisible into {heads} heads"
            )));
        }
        Ok(Self {
            q: Dense::xavier(store, &format!("{name}.q"), width, width)?,
            k: Dense::xavier(store, &format!("{name}.k"), width, width)?,
            v: Dense::xavier(store, &format!("{name}.v"), width, width)?,
            out: Dense::xavier(store, &format!("{name}.out"), width, width)?,
            heads,
        })
    }

    /// `query_src`: `[B, s_q, d]`; `kv_src`: `[B, s_kv, d]`.
    pub fn forward(&self, query_src: &Tensor, kv_src: &Tensor) -> Result<Tensor> {
        let (b, s_q, d) = query_src.dims3()?;
        let s_kv = kv_src.dim(1)?;
        let hd = d / self.heads;
        let split = |x: Tensor, s: usize| -> Result<Tensor> {
            Ok(x.reshape((b, s, self.heads, hd))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.q.forward(query_src)?, s_q)?;
        let k = split(self.k.forward(kv_src)?, s_kv)?;
        let v = split(self.v.forward(kv_src)?, s_kv)?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (hd as f64).sqrt()))?;
        let attn = softmax_last(&scores)?;
        let ctx = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, s_q, d))?;
        self.out.forward(&ctx)
    }
}

/// Position-wise feedforward with exact (erf) GELU.
pub struct FeedForward {
    up: Dense,
    down: Dense,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            up: Dense::xavier(store, &format!("{name}.up"), width, hidden)?,
            down: Dense::xavier(store, &format!("{name}.down"), hidden, width)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&gelu(&self.up.forward(x)?)?)
    }
}

/// `x Phi(x)` built from `erf`, whose gradient is exact; the fused op's
/// backward pass rounds `1/sqrt(2 pi)` to six digits.
pub fn gelu(x: &Tensor) -> Result<Tensor> {
    let cdf = (x.affine(std::f64::consts::FRAC_1_SQRT_2, 0.0)?.erf()? + 1.0)?;
    Ok((x * cdf)?.affine(0.5, 0.0)?)
}

/// Two-layer SiLU MLP projecting a sinusoidal encoding to the model width.
pub struct EmbedMlp {
    first: Dense,
    second: Dense,
}

impl EmbedMlp {
    pub fn new(store: &mut ParamStore, name: &str, freq_dim: usize, width: usize) -> Result<Self> {
        Ok(Self {
            first: Dense::new(store, &format!("{name}.0"), freq_dim, width, Init::Normal(0.02), true)?,
            second: Dense::new(store, &format!("{name}.2"), width, width, Init::Normal(0.02), true)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.second.forward(&self.first.forward(x)?.silu()?)
    }
}
