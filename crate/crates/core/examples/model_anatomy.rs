//! Parameter counts of the desk and full-size networks, and the zero output
//! of a freshly initialised network.
//!
//! cargo run --release --example model_anatomy

use candle_core::{DType, Device};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cdit_channel::channel::{generate_cfr, ChannelGenParams};
use cdit_channel::model::{Cdit, ModelConfig};
use cdit_channel::train::{batch_loss, prepare_batch, TrainConfig};

fn main() -> cdit_channel::Result<()> {
    let full = ModelConfig::full_scale();
    println!(
        "full size: {} blocks of width {}, {} tokens, {:.2} M parameters",
        full.depth,
        full.width,
        full.seq_len(),
        full.parameter_count() as f64 / 1e6
    );

    let cfg = TrainConfig::desk();
    let model = Cdit::new(cfg.model.clone(), 0, DType::F32, &Device::Cpu)?;
    println!(
        "desk: {} blocks of width {}, {} tokens, {} parameters",
        cfg.model.depth,
        cfg.model.width,
        cfg.model.seq_len(),
        model.parameter_count()
    );
    for (name, var) in model.params().vars().iter().filter(|(n, _)| !n.starts_with("blocks.") || n.starts_with("blocks.0.")) {
        println!("  {name:<32} {:?}", var.dims());
    }

    let data = generate_cfr(&ChannelGenParams::default(), 64)?;
    let sched = cfg.schedule.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = prepare_batch(data.samples(), &mut rng, &cfg, &sched, DType::F32, &Device::Cpu)?;
    let eps_hat = model.forward(&batch.h_t, &batch.t, &batch.cond)?;
    let peak = eps_hat.abs()?.max_all()?.to_scalar::<f32>()?;
    let loss = batch_loss(&model, &batch)?.to_scalar::<f32>()?;
    println!("at initialisation: output {:?}, max |eps_hat| = {peak}, loss {loss:.4}", eps_hat.dims());
    Ok(())
}
