//! Runs an evaluation sweep and writes `sweep.csv`, `samples.csv` and the
//! plots. Without a checkpoint only the baselines are swept.
//!
//! cargo run --release --example snr_sweep -- [out_dir] [checkpoint]

use std::path::PathBuf;

use candle_core::Device;

use cdit_channel::baselines::fit_lmmse;
use cdit_channel::channel::{generate_cfr, ChannelGenParams};
use cdit_channel::checkpoint::load_checkpoint;
use cdit_channel::eval::{run_sweep, Estimators, Method, SweepConfig};

fn main() -> cdit_channel::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/sweep".into()));
    let ckpt = args.next().map(|p| load_checkpoint(p, &Device::Cpu)).transpose()?;

    let params = ChannelGenParams::default();
    let lmmse = fit_lmmse(&generate_cfr(&params, 2000)?)?;
    let test = generate_cfr(&ChannelGenParams { seed: 1, ..params }, 200)?;
    let sched = match &ckpt {
        Some(c) => Some(c.schedule.build()?),
        None => None,
    };

    let mut cfg = SweepConfig { intervals: vec![4, 8, 16], steps: vec![5, 10], ..SweepConfig::default() };
    if ckpt.is_none() {
        cfg.methods.retain(|m| *m != Method::Cdit);
    }
    let est = Estimators {
        cdit: ckpt.as_ref().zip(sched.as_ref()).map(|(c, s)| (&c.model, s)),
        lmmse: Some(&lmmse),
        batch: 100,
    };
    let results = run_sweep(&cfg, &test, &est, Some(&out))?;
    for r in &results {
        println!(
            "{:<7} P={:<2} SNR={:>4} S={:<2} {:>8.2} dB  rho {:.4}",
            r.cell.method.to_string(),
            r.cell.interval,
            r.cell.snr_db,
            r.cell.sampler.steps,
            r.nmse_db,
            r.rho
        );
    }
    println!("results written to {}", out.display());
    Ok(())
}
