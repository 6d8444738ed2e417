//! Trains the desk-scale network on freshly generated channels.
//!
//! cargo run --release --example train_desk -- [epochs] [out_dir]

use std::path::PathBuf;

use candle_core::{DType, Device};

use cdit_channel::channel::{generate_cfr, ChannelGenParams};
use cdit_channel::train::{train, TrainConfig};

fn main() -> cdit_channel::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(30, |s| s.parse().expect("epochs must be an integer"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/desk-run".into()));

    let cfg = TrainConfig { epochs, ..TrainConfig::desk() };
    let data = generate_cfr(&ChannelGenParams::default(), 2000)?;
    let started = std::time::Instant::now();
    let outcome = train(&data, &cfg, DType::F32, &Device::Cpu, Some(&out))?;

    for (k, loss) in outcome.epoch_losses.iter().enumerate() {
        println!("epoch {:>3}: {loss:.5}", k + 1);
    }
    if let (Some(first), Some(last)) = (outcome.epoch_losses.first(), outcome.epoch_losses.last()) {
        println!("final / first epoch loss = {:.3}", last / first);
    }
    println!(
        "{} steps in {:.0} s; checkpoint and loss.csv in {}",
        outcome.log.len(),
        started.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}
