//! Linear interpolation and the two-stage LMMSE estimator across SNR.
//!
//! cargo run --release --example baselines -- [interval]

use cdit_channel::baselines::fit_lmmse;
use cdit_channel::channel::{generate_cfr, ChannelGenParams};
use cdit_channel::eval::{evaluate, sampler_for, EvalCell, Estimators, Method};

fn main() -> cdit_channel::Result<()> {
    let interval: usize = std::env::args().nth(1).map_or(8, |s| s.parse().expect("interval must be an integer"));
    let params = ChannelGenParams::default();
    let fit = generate_cfr(&params, 2000)?;
    let test = generate_cfr(&ChannelGenParams { seed: 1, ..params }, 200)?;
    let lmmse = fit_lmmse(&fit)?;
    let est = Estimators { cdit: None, lmmse: Some(&lmmse), batch: 1 };

    println!("P = {interval}, 200 held-out channels, random pilot offsets");
    println!("{:>6} {:>12} {:>12}", "SNR", "linear dB", "LMMSE dB");
    for snr_db in [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0] {
        let run = |method| {
            let cell = EvalCell { method, interval, pilot_start: None, snr_db, sampler: sampler_for(10, 1.0, 1.0), seed: 7 };
            evaluate(&test, &cell, &est).map(|r| r.nmse_db)
        };
        println!("{snr_db:>6} {:>12.2} {:>12.2}", run(Method::Linear)?, run(Method::Lmmse)?);
    }
    Ok(())
}
