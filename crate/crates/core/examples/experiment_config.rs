//! Loads an experiment configuration with dotted-path overrides and prints
//! the resolved TOML, the same file format the `cdit --config` flag reads.
//!
//! cargo run --example experiment_config -- train.epochs=5 "sweep.snr_db=[10, 20]"

use cdit_channel::config::ExperimentConfig;

fn main() -> cdit_channel::Result<()> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let cfg = ExperimentConfig::load(None, &overrides)?;
    print!("{}", cfg.to_toml()?);
    println!("# {} sweep cells", cfg.sweep.cells().len());
    Ok(())
}
