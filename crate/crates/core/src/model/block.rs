use candle_core::Tensor;

use super::layers::{layer_norm, modulate, Attention, Dense, FeedForward};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Transformer block with three adaLN-modulated, gated residual sublayers:
/// self-attention over the channel tokens, cross-attention whose queries are
/// the condition tokens, and a feedforward.
pub struct CditBlock {
    modulation: Dense,
    self_attn: Attention,
    cross_attn: Attention,
    mlp: FeedForward,
}

impl CditBlock {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, heads: usize, mlp_hidden: usize) -> Result<Self> {
        Ok(Self {
            // shift, scale and gate for each of the three sublayers; all zero
            // at init so the block starts as the identity.
            modulation: Dense::zeros(store, &format!("{name}.adaln"), width, 9 * width)?,
            self_attn: Attention::new(store, &format!("{name}.self_attn"), width, heads)?,
            cross_attn: Attention::new(store, &format!("{name}.cross_attn"), width, heads)?,
            mlp: FeedForward::new(store, &format!("{name}.mlp"), width, mlp_hidden)?,
        })
    }

    /// `z`, `z_cond`: `[B, s, d]`; `e`: `[B, d]`.
    pub fn forward(&self, z: &Tensor, z_cond: &Tensor, e: &Tensor) -> Result<Tensor> {
        if z.dims() != z_cond.dims() {
            return Err(Error::param(format!(
                "token sequences differ in shape: {:?} vs {:?}",
                z.dims(),
                z_cond.dims()
            )));
        }
        let m = self.modulation.forward(&e.silu()?)?.chunk(9, 1)?;
        let gate = |g: &Tensor, x: Tensor| -> Result<Tensor> { Ok(x.broadcast_mul(&g.unsqueeze(1)?)?) };

        let x = modulate(&layer_norm(z)?, &m[0], &m[1])?;
        let z = (z + gate(&m[2], self.self_attn.forward(&x, &x)?)?)?;

        let kv = modulate(&layer_norm(&z)?, &m[3], &m[4])?;
        let q = layer_norm(z_cond)?;
        let z = (&z + gate(&m[5], self.cross_attn.forward(&q, &kv)?)?)?;

        let x = modulate(&layer_norm(&z)?, &m[6], &m[7])?;
        Ok((&z + gate(&m[8], self.mlp.forward(&x)?)?)?)
    }
}
