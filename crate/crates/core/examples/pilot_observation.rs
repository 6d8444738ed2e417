//! Builds comb pilot patterns and noisy masked observations of one channel.
//!
//! cargo run --example pilot_observation -- [interval] [snr_db]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cdit_channel::channel::{generate_cfr, ChannelGenParams};
use cdit_channel::metrics::nmse_db;
use cdit_channel::pilot::{db_to_linear, estimate_signal_power, make_pilot_pattern, normalize_power, observe_at_snr_db};

fn main() -> cdit_channel::Result<()> {
    let mut args = std::env::args().skip(1);
    let interval: usize = args.next().map_or(8, |s| s.parse().expect("interval must be an integer"));
    let snr_db: f64 = args.next().map_or(20.0, |s| s.parse().expect("snr must be a number"));

    let data = generate_cfr(&ChannelGenParams::default(), 1)?;
    let (h0, power) = normalize_power(&data.samples()[0])?;
    println!("raw channel power {power:.4}, normalised to 1");

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for start in 0..interval.min(3) {
        let pattern = make_pilot_pattern(h0.n_f(), interval, start)?;
        let raw = observe_at_snr_db(&h0, &pattern, snr_db, &mut rng)?;
        let on_pilots = raw.pattern.apply(&h0);
        println!("P = {interval}, start = {start}: pilots {:?}", pattern.indices());
        println!(
            "  sigma_n^2 = {:.2e}, measured signal power {:.4} (expected {:.4}), pilot-row error {:.2} dB",
            raw.sigma_n_sq,
            estimate_signal_power(&raw)?,
            1.0 + raw.sigma_n_sq,
            nmse_db(&on_pilots, &raw.h_tilde)?
        );
    }
    println!("observation SNR {snr_db} dB = {:.1} linear", db_to_linear(snr_db));
    Ok(())
}
