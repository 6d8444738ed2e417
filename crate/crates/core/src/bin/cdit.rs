use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use candle_core::{DType, Device};
use clap::{Args, Parser, Subcommand};

use cdit_channel::baselines::{fit_lmmse, LmmseModel};
use cdit_channel::channel::{generate_cfr, load_dataset, save_dataset, Dataset, DatasetMeta};
use cdit_channel::checkpoint::{load_checkpoint, Checkpoint};
use cdit_channel::config::ExperimentConfig;
use cdit_channel::diffusion::DiffusionSchedule;
use cdit_channel::eval::{
    estimate_all, observations, read_csv, run_sweep, sampler_for, score, EvalCell, Estimators, Method, SampleRow,
    SweepConfig, SweepRow, SAMPLES_CSV, SWEEP_CSV,
};
use cdit_channel::{plot, train, Error, Result};

/// Diffusion-transformer channel estimation: data generation, training,
/// estimation, baselines and evaluation sweeps.
#[derive(Parser)]
#[command(name = "cdit", version)]
struct Cli {
    /// Experiment config (TOML with `data`, `train` and `sweep` sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multipath CFR dataset.
    GenData {
        #[arg(long)]
        n_f: Option<usize>,
        #[arg(long)]
        n_r: Option<usize>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a CDiT and write `checkpoint.safetensors` and `loss.csv`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate channels with a trained CDiT.
    Estimate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        obs: ObsArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        /// Dataset of estimates (of the power-normalised channels).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate channels with linear interpolation or LMMSE.
    Baseline {
        #[arg(long)]
        method: Method,
        /// Training channels for the LMMSE covariances.
        #[arg(long)]
        fit_data: Option<PathBuf>,
        #[arg(long)]
        test_data: PathBuf,
        #[command(flatten)]
        obs: ObsArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one method at one operating point; writes the sweep CSVs.
    Evaluate {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        fit_data: Option<PathBuf>,
        #[arg(long)]
        test_data: PathBuf,
        #[command(flatten)]
        obs: ObsArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the cross-product of the `sweep` config section.
    Sweep {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        fit_data: Option<PathBuf>,
        #[arg(long)]
        test_data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Redraw the plots from `sweep.csv` and `samples.csv`.
    Plot {
        /// Directory holding the sweep CSVs.
        #[arg(long)]
        input: PathBuf,
        /// Defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ObsArgs {
    #[arg(long, default_value_t = 8)]
    pilot_interval: usize,
    /// First pilot subcarrier; random per sample when omitted.
    #[arg(long)]
    pilot_start: Option<usize>,
    #[arg(long, default_value_t = 20.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SamplerArgs {
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Requests per batched reverse process.
    #[arg(long, default_value_t = 32)]
    batch: usize,
}

impl ObsArgs {
    fn cell(&self, method: Method, sampler: Option<&SamplerArgs>) -> EvalCell {
        let s = sampler.map_or(sampler_for(10, 1.0, 1.0), |s| sampler_for(s.steps, s.eta, s.gamma));
        EvalCell {
            method,
            interval: self.pilot_interval,
            pilot_start: self.pilot_start,
            snr_db: self.snr_db,
            sampler: s,
            seed: self.seed,
        }
    }
}

struct Loaded {
    model: Option<(Checkpoint, DiffusionSchedule)>,
    lmmse: Option<LmmseModel>,
}

impl Loaded {
    fn new(ckpt: Option<&Path>, fit_data: Option<&Path>) -> Result<Self> {
        let model = match ckpt {
            Some(p) => {
                let c = load_checkpoint(p, &Device::Cpu)?;
                let sched = c.schedule.build()?;
                Some((c, sched))
            }
            None => None,
        };
        let lmmse = match fit_data {
            Some(p) => Some(fit_lmmse(&load_dataset(p)?)?),
            None => None,
        };
        Ok(Self { model, lmmse })
    }

    fn estimators(&self, batch: usize) -> Estimators<'_> {
        Estimators {
            cdit: self.model.as_ref().map(|(c, s)| (&c.model, s)),
            lmmse: self.lmmse.as_ref(),
            batch,
        }
    }
}

fn estimate_and_report(test: &Dataset, cell: &EvalCell, est: &Estimators, out: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let obs = observations(test, cell.interval, cell.pilot_start, cell.snr_db, cell.seed)?;
    let estimates = estimate_all(&obs, cell, est)?;
    let r = score(cell, &obs, &estimates, start.elapsed().as_secs_f64())?;
    if let Some(path) = out {
        let meta = DatasetMeta {
            generator: None,
            split: format!("{}-estimate", cell.method),
        };
        save_dataset(&Dataset::new(estimates, meta)?, path)?;
    }
    println!(
        "{} P={} SNR={} dB: NMSE {:.3} dB, rho {:.6} over {} samples ({:.1} s)",
        cell.method,
        cell.interval,
        cell.snr_db,
        r.nmse_db,
        r.rho,
        r.nmse_linear.len(),
        r.wall_seconds
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::GenData { n_f, n_r, paths, count, seed, out } => {
            let mut g = cfg.data.generator.clone();
            g.n_f = n_f.unwrap_or(g.n_f);
            g.n_r = n_r.unwrap_or(g.n_r);
            g.num_paths = paths.unwrap_or(g.num_paths);
            g.seed = seed.unwrap_or(g.seed);
            let ds = generate_cfr(&g, count.unwrap_or(cfg.data.train_count))?;
            save_dataset(&ds, &out)?;
            println!("wrote {} channels of shape {:?} to {}", ds.len(), ds.shape(), out.display());
        }
        Command::Train { data, out } => {
            let ds = load_dataset(&data)?;
            let outcome = train::train(&ds, &cfg.train, DType::F32, &Device::Cpu, Some(&out))?;
            if let (Some(first), Some(last)) = (outcome.epoch_losses.first(), outcome.epoch_losses.last()) {
                println!("epoch loss {first:.5} -> {last:.5}; checkpoint in {}", out.display());
            }
        }
        Command::Estimate { ckpt, data, obs, sampler, out } => {
            let loaded = Loaded::new(Some(&ckpt), None)?;
            let cell = obs.cell(Method::Cdit, Some(&sampler));
            estimate_and_report(&load_dataset(&data)?, &cell, &loaded.estimators(sampler.batch), out.as_deref())?;
        }
        Command::Baseline { method, fit_data, test_data, obs, out } => {
            if method == Method::Cdit {
                return Err(Error::Config("use `estimate` for the diffusion model".into()));
            }
            let loaded = Loaded::new(None, fit_data.as_deref())?;
            let cell = obs.cell(method, None);
            estimate_and_report(&load_dataset(&test_data)?, &cell, &loaded.estimators(1), out.as_deref())?;
        }
        Command::Evaluate { method, ckpt, fit_data, test_data, obs, sampler, out } => {
            let sweep = SweepConfig {
                methods: vec![method],
                snr_db: vec![obs.snr_db],
                intervals: vec![obs.pilot_interval],
                steps: vec![sampler.steps],
                etas: vec![sampler.eta],
                guidance: sampler.gamma,
                pilot_start: obs.pilot_start,
                seed: obs.seed,
                max_samples: cfg.sweep.max_samples,
            };
            let loaded = Loaded::new(ckpt.as_deref(), fit_data.as_deref())?;
            let r = run_sweep(&sweep, &load_dataset(&test_data)?, &loaded.estimators(sampler.batch), Some(&out))?;
            println!("NMSE {:.3} dB, rho {:.6}; results in {}", r[0].nmse_db, r[0].rho, out.display());
        }
        Command::Sweep { ckpt, fit_data, test_data, out } => {
            let needs_ckpt = cfg.sweep.methods.contains(&Method::Cdit);
            if needs_ckpt && ckpt.is_none() {
                return Err(Error::Config("sweep includes cdit; pass --ckpt".into()));
            }
            let loaded = Loaded::new(ckpt.as_deref().filter(|_| needs_ckpt), fit_data.as_deref())?;
            let results = run_sweep(&cfg.sweep, &load_dataset(&test_data)?, &loaded.estimators(32), Some(&out))?;
            println!("{} cells; results in {}", results.len(), out.display());
        }
        Command::Plot { input, out } => {
            let out = out.unwrap_or_else(|| input.clone());
            std::fs::create_dir_all(&out)?;
            let rows: Vec<SweepRow> = read_csv(&input.join(SWEEP_CSV))?;
            let samples: Vec<SampleRow> = read_csv(&input.join(SAMPLES_CSV))?;
            plot::write_all(&out, &rows, &samples)?;
            println!("plots in {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
