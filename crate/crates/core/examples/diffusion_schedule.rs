//! The linear noise schedule, the forward process and the coefficients of
//! the eta-family reverse sampler.
//!
//! cargo run --example diffusion_schedule

use candle_core::{Device, Tensor};

use cdit_channel::diffusion::{ddim_sigma, forward_sample, linear_schedule, select_timesteps, Spacing, StepCoefficients};

fn main() -> cdit_channel::Result<()> {
    let s = linear_schedule(1000, 1e-4, 0.02)?;
    println!("{:>5} {:>9} {:>9} {:>10}", "t", "beta", "alpha_bar", "beta~");
    for t in [1, 10, 100, 250, 500, 750, 1000] {
        println!("{t:>5} {:>9.2e} {:>9.5} {:>10.3e}", s.beta(t), s.alpha_bar(t), s.posterior_beta(t));
    }

    let x0 = Tensor::ones(4096, candle_core::DType::F64, &Device::Cpu)?;
    let eps = Tensor::randn(0.0, 1.0, 4096, &Device::Cpu)?;
    for t in [10, 500, 1000] {
        let xt = forward_sample(&x0, t, &eps, &s)?;
        let mean = xt.mean_all()?.to_scalar::<f64>()?;
        println!("H_t at t = {t}: sample mean {mean:.3}, sqrt(alpha_bar) {:.3}", s.alpha_bar(t).sqrt());
    }

    for spacing in [Spacing::Linspace, Spacing::Leading] {
        println!("{spacing:?} S=10: {:?}", select_timesteps(1000, 10, spacing)?);
    }
    let taus = select_timesteps(1000, 10, Spacing::Linspace)?;
    println!("step coefficients from tau = {} to {}:", taus[taus.len() - 1], taus[taus.len() - 2]);
    for eta in [0.0, 0.5, 1.0] {
        let (hi, lo) = (taus[taus.len() - 1], taus[taus.len() - 2]);
        let c = StepCoefficients::new(&s, hi, lo, eta)?;
        println!(
            "  eta = {eta}: sample {:.4}, eps {:.4}, noise {:.4} (sigma {:.4})",
            c.sample,
            c.eps,
            c.noise,
            ddim_sigma(&s, hi, lo, eta)?
        );
    }
    Ok(())
}
