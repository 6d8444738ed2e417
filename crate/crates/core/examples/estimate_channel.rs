//! Reconstructs channels from pilots with a trained checkpoint, comparing
//! samplers, step counts and guidance scales against the baselines.
//!
//! cargo run --release --example train_desk
//! cargo run --release --example estimate_channel -- target/desk-run/checkpoint.safetensors

use candle_core::Device;

use cdit_channel::baselines::linear_interp_estimate;
use cdit_channel::channel::{generate_cfr, ChannelGenParams};
use cdit_channel::checkpoint::load_checkpoint;
use cdit_channel::diffusion::SamplerConfig;
use cdit_channel::eval::{observations, sampler_for, sampler_seed};
use cdit_channel::inference::{estimate_batch, EstimationRequest};
use cdit_channel::metrics::{cosine_corr, nmse, to_db};

fn main() -> cdit_channel::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "target/desk-run/checkpoint.safetensors".into());
    let ckpt = load_checkpoint(&path, &Device::Cpu)?;
    let sched = ckpt.schedule.build()?;
    let cfg = ckpt.model.config();
    let params = ChannelGenParams { n_f: cfg.n_f, n_r: cfg.n_r, seed: 1, ..ChannelGenParams::default() };
    let test = generate_cfr(&params, 32)?;
    let obs = observations(&test, 8, None, 20.0, 7)?;

    let mean_db = |est: &[cdit_channel::channel::CfrMatrix]| -> cdit_channel::Result<(f64, f64)> {
        let mut err = 0.0;
        let mut rho = 0.0;
        for ((h, _), e) in obs.iter().zip(est) {
            err += nmse(h, e)?;
            rho += cosine_corr(h, e)?.rho;
        }
        Ok((to_db(err / obs.len() as f64), rho / obs.len() as f64))
    };

    let linear: Vec<_> = obs.iter().map(|(_, raw)| linear_interp_estimate(raw)).collect::<Result<_, _>>()?;
    let (db, rho) = mean_db(&linear)?;
    println!("{:<28} {db:>8.2} dB  rho {rho:.4}", "linear interpolation");

    let samplers = [
        ("eta=1 S=10", sampler_for(10, 1.0, 1.0)),
        ("eta=1 S=5", sampler_for(5, 1.0, 1.0)),
        ("eta=0 S=10", SamplerConfig::ddim(10)),
        ("eta=1 S=10 gamma=2", sampler_for(10, 1.0, 2.0)),
    ];
    for (label, sampler) in samplers {
        let reqs: Vec<_> = obs
            .iter()
            .enumerate()
            .map(|(k, (_, raw))| EstimationRequest::new(raw.clone(), sampler, sampler_seed(7, k)))
            .collect();
        let est = estimate_batch(&ckpt.model, &sched, &reqs)?;
        let (db, rho) = mean_db(&est)?;
        println!("{:<28} {db:>8.2} dB  rho {rho:.4}", format!("diffusion {label}"));
    }
    Ok(())
}
