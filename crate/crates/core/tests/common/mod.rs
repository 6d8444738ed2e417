#![allow(dead_code)]

use candle_core::{DType, Device, Tensor, Var};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use cdit_channel::channel::{CfrMatrix, ChannelGenParams};
use cdit_channel::model::{Cdit, ConditionBatch, ConditionBundle, ModelConfig};
use cdit_channel::pilot::{make_pilot_pattern, normalize_power, observe_at_snr_db, RawEstimate};

/// The small network used for gradient checks: 8 x 4 channels, patch (4, 2),
/// two blocks of width 16.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        n_f: 8,
        n_r: 4,
        patch_f: 4,
        patch_r: 2,
        depth: 2,
        width: 16,
        heads: 2,
        intervals: vec![2, 4],
        freq_dim: 16,
        mlp_ratio: 2,
    }
}

/// A tiny f64 network whose zero-initialised parameters are redrawn, so that
/// every path through it is live.
pub fn live_model(seed: u64) -> Cdit {
    let m = Cdit::new(tiny_config(), seed, DType::F64, &Device::Cpu).unwrap();
    m.params().randomize_zero_vars(0.1, seed + 1).unwrap();
    m
}

pub fn tiny_generator(seed: u64) -> ChannelGenParams {
    ChannelGenParams {
        n_f: 8,
        n_r: 4,
        seed,
        ..ChannelGenParams::default()
    }
}

pub fn random_cfr(rng: &mut impl Rng, n_f: usize, n_r: usize) -> CfrMatrix {
    CfrMatrix::from_fn(n_f, n_r, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
    .unwrap()
}

/// Observation of a random unit-power channel.
pub fn random_observation(seed: u64, interval: usize, start: usize, snr_db: f64) -> RawEstimate {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, _) = normalize_power(&random_cfr(&mut rng, cfg.n_f, cfg.n_r)).unwrap();
    let p = make_pilot_pattern(cfg.n_f, interval, start).unwrap();
    observe_at_snr_db(&h, &p, snr_db, &mut rng).unwrap()
}

pub fn gaussian(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

/// A conditioned batch of `b` observations for the tiny network.
pub fn tiny_condition(b: usize, seed: u64) -> ConditionBatch {
    let cfg = tiny_config();
    let bundles: Vec<ConditionBundle> = (0..b)
        .map(|i| {
            let interval = cfg.intervals[i % cfg.intervals.len()];
            let raw = random_observation(seed + i as u64, interval, i % interval, 15.0);
            ConditionBundle::from_raw(&raw, 1.0 / raw.snr_r, &cfg).unwrap()
        })
        .collect();
    ConditionBatch::from_bundles(&bundles, &cfg, DType::F64, &Device::Cpu).unwrap()
}

pub fn to_vec(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Outcome of comparing reverse-mode gradients with central differences.
pub struct GradientReport {
    pub checked: usize,
    pub worst: f64,
    /// Parameter and relative error of the worst element.
    pub worst_at: String,
    /// Sampled gradients larger than the comparison floor.
    pub nonzero: usize,
}

fn set_element(var: &Var, index: usize, value: f64) {
    let mut v = to_vec(var.as_tensor());
    v[index] = value;
    var.set(&Tensor::from_vec(v, var.dims(), var.device()).unwrap()).unwrap();
}

/// Checks `checks` randomly chosen parameters of the tiny network on the
/// objective `sum(forward * W)`. Relative errors use `floor` as the smallest
/// denominator.
pub fn gradient_check(checks: usize, step: f64, floor: f64) -> GradientReport {
    let model = live_model(11);
    let cfg = tiny_config();
    let b = 2;
    let shape = [b, 2, cfg.n_f, cfg.n_r];
    let h_t = gaussian(&shape, 1);
    let weights = gaussian(&shape, 2);
    let cond = tiny_condition(b, 3);
    let t = [17, 640];
    let objective = || -> Tensor { (model.forward(&h_t, &t, &cond).unwrap() * &weights).unwrap().sum_all().unwrap() };

    let grads = objective().backward().unwrap();
    let vars: Vec<(&String, &Var)> = model.params().vars().iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut report = GradientReport { checked: checks, worst: 0.0, worst_at: String::new(), nonzero: 0 };
    for _ in 0..checks {
        let (name, var) = vars[rng.random_range(0..vars.len())];
        let index = rng.random_range(0..var.elem_count());
        let analytic = grads.get(var.as_tensor()).map_or(0.0, |g| to_vec(g)[index]);
        let original = to_vec(var.as_tensor())[index];
        set_element(var, index, original + step);
        let up = objective().to_scalar::<f64>().unwrap();
        set_element(var, index, original - step);
        let down = objective().to_scalar::<f64>().unwrap();
        set_element(var, index, original);
        let numeric = (up - down) / (2.0 * step);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        if err >= report.worst {
            report.worst = err;
            report.worst_at = format!("{name}[{index}]: analytic {analytic:e}, numeric {numeric:e}");
        }
        report.nonzero += usize::from(analytic.abs() > floor);
    }
    report
}
