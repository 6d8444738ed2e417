//! Generates synthetic multipath channels, round-trips them through the
//! dataset file format and prints their second-order structure.
//!
//! cargo run --release --example generate_channels -- [count] [out.safetensors]

use cdit_channel::baselines::fit_lmmse;
use cdit_channel::channel::{generate_cfr, load_dataset, save_dataset, ChannelGenParams};

fn main() -> cdit_channel::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map_or(500, |s| s.parse().expect("count must be an integer"));
    let out = args.next().unwrap_or_else(|| "target/channels.safetensors".into());

    let params = ChannelGenParams::default();
    let data = generate_cfr(&params, count)?;
    save_dataset(&data, &out)?;
    let back = load_dataset(&out)?;
    assert_eq!(back, data);

    let (n_f, n_r) = data.shape();
    let mean_power = data.samples().iter().map(|h| h.frobenius_sq()).sum::<f64>() / (count * n_f * n_r) as f64;
    println!("{count} channels of shape {n_f} x {n_r} written to {out}");
    println!("mean element power {mean_power:.4}");

    // Correlation between subcarrier 0 and its neighbours, and between
    // antenna 0 and the others.
    let model = fit_lmmse(&data)?;
    let (r_f, r_r) = (model.r_f(), model.r_r());
    let lags = [1, 2, 4, 8, 16, 32];
    let f_corr: Vec<String> = lags.iter().map(|&k| format!("{k}:{:.2}", r_f[(0, k)].norm() / r_f[(0, 0)].norm())).collect();
    let a_corr: Vec<String> = (1..n_r).map(|k| format!("{k}:{:.2}", r_r[(0, k)].norm() / r_r[(0, 0)].norm())).collect();
    println!("|R_f[0, k]| / R_f[0, 0]  {}", f_corr.join("  "));
    println!("|R_r[0, k]| / R_r[0, 0]  {}", a_corr.join("  "));
    Ok(())
}
