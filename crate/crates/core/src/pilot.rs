//! Comb pilot patterns, the masked noisy observation model and power
//! normalisation.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::CfrMatrix;
use crate::error::{Error, Result};

/// Equally spaced pilot subcarriers. The mask is striped: a row is all ones
/// when its subcarrier carries a pilot and all zeros otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PatternSpec", into = "PatternSpec")]
pub struct PilotPattern {
    interval: usize,
    start: usize,
    n_f: usize,
    indices: Vec<usize>,
}

/// Serialized form: `(interval, start, n_f)`.
#[derive(Serialize, Deserialize)]
struct PatternSpec {
    interval: usize,
    start: usize,
    n_f: usize,
}

impl TryFrom<PatternSpec> for PilotPattern {
    type Error = Error;

    fn try_from(s: PatternSpec) -> Result<Self> {
        PilotPattern::new(s.n_f, s.interval, s.start)
    }
}

impl From<PilotPattern> for PatternSpec {
    fn from(p: PilotPattern) -> Self {
        PatternSpec {
            interval: p.interval,
            start: p.start,
            n_f: p.n_f,
        }
    }
}

impl PilotPattern {
    pub fn new(n_f: usize, interval: usize, start: usize) -> Result<Self> {
        if interval < 1 || interval > n_f {
            return Err(Error::param(format!(
                "pilot interval must lie in [1, {n_f}], got {interval}"
            )));
        }
        if start >= interval {
            return Err(Error::param(format!(
                "pilot start {start} must be smaller than the interval {interval}"
            )));
        }
        let indices: Vec<usize> = (0..n_f / interval)
            .map(|k| start + k * interval)
            .filter(|&i| i < n_f)
            .collect();
        if indices.is_empty() {
            return Err(Error::param("pilot pattern selects no subcarrier"));
        }
        Ok(Self {
            interval,
            start,
            n_f,
            indices,
        })
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    /// Sorted pilot subcarrier indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn is_pilot(&self, f: usize) -> bool {
        self.indices.binary_search(&f).is_ok()
    }

    /// Per-subcarrier mask (1.0 on pilot rows).
    pub fn row_mask(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_f];
        for &i in &self.indices {
            m[i] = 1.0;
        }
        m
    }

    /// Full `[n_f, n_r]` mask, row-major.
    pub fn mask(&self, n_r: usize) -> Vec<f64> {
        self.row_mask()
            .into_iter()
            .flat_map(|v| std::iter::repeat_n(v, n_r))
            .collect()
    }

    /// Element-wise l1 norm of the `[n_f, n_r]` mask.
    pub fn mask_l1(&self, n_r: usize) -> usize {
        self.indices.len() * n_r
    }

    /// Zeroes every non-pilot row of `h`.
    pub fn apply(&self, h: &CfrMatrix) -> CfrMatrix {
        let mut out = h.clone();
        for f in 0..h.n_f() {
            if !self.is_pilot(f) {
                for a in 0..h.n_r() {
                    out.set(f, a, Complex64::new(0.0, 0.0));
                }
            }
        }
        out
    }
}

pub fn make_pilot_pattern(n_f: usize, interval: usize, start: usize) -> Result<PilotPattern> {
    PilotPattern::new(n_f, interval, start)
}

/// Interval uniform over `intervals`, start uniform over `[0, interval)`.
pub fn sample_pilot_pattern<R: Rng + ?Sized>(
    rng: &mut R,
    n_f: usize,
    intervals: &[usize],
) -> Result<PilotPattern> {
    if intervals.is_empty() {
        return Err(Error::param("pilot interval set is empty"));
    }
    if let Some(&bad) = intervals.iter().find(|&&p| p < 1 || p > n_f) {
        return Err(Error::param(format!("pilot interval {bad} invalid for n_f = {n_f}")));
    }
    let interval = intervals[rng.random_range(0..intervals.len())];
    let start = rng.random_range(0..interval);
    PilotPattern::new(n_f, interval, start)
}

/// Noisy masked observation `(H + N) * M` together with its noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEstimate {
    pub h_tilde: CfrMatrix,
    pub pattern: PilotPattern,
    /// Noise variance of the complex observation noise.
    pub sigma_n_sq: f64,
    /// Linear SNR.
    pub snr_r: f64,
}

impl RawEstimate {
    pub fn n_f(&self) -> usize {
        self.h_tilde.n_f()
    }

    pub fn n_r(&self) -> usize {
        self.h_tilde.n_r()
    }

    pub fn mask(&self) -> Vec<f64> {
        self.pattern.mask(self.n_r())
    }

    /// Same observation with `h_tilde` multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            h_tilde: self.h_tilde.scale(k),
            sigma_n_sq: self.sigma_n_sq * k * k,
            ..self.clone()
        }
    }
}

/// Mean per-element power `||H||_F^2 / (n_f n_r)`.
pub fn mean_power(h: &CfrMatrix) -> f64 {
    h.frobenius_sq() / (h.n_f() * h.n_r()) as f64
}

/// Returns `(H / sqrt(p), p)` with `p` the mean per-element power.
pub fn normalize_power(h: &CfrMatrix) -> Result<(CfrMatrix, f64)> {
    let p = mean_power(h);
    if p <= 0.0 {
        return Err(Error::Degenerate("cannot normalise an all-zero channel".into()));
    }
    Ok((h.scale(1.0 / p.sqrt()), p))
}

/// Draws `N ~ CN(0, sigma_n_sq I)` on the pilot rows and returns
/// `(H + N) * M`. The stored SNR is the mean power of `h` over `sigma_n_sq`
/// (infinite when noiseless).
pub fn observe<R: Rng + ?Sized>(
    h: &CfrMatrix,
    pattern: &PilotPattern,
    sigma_n_sq: f64,
    rng: &mut R,
) -> Result<RawEstimate> {
    if !(sigma_n_sq >= 0.0 && sigma_n_sq.is_finite()) {
        return Err(Error::param(format!(
            "noise variance must be non-negative, got {sigma_n_sq}"
        )));
    }
    if pattern.n_f() != h.n_f() {
        return Err(Error::param(format!(
            "pattern built for n_f = {}, channel has n_f = {}",
            pattern.n_f(),
            h.n_f()
        )));
    }
    let std = (sigma_n_sq / 2.0).sqrt();
    let mut h_tilde = CfrMatrix::zeros(h.n_f(), h.n_r())?;
    for &f in pattern.indices() {
        for a in 0..h.n_r() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            h_tilde.set(f, a, h.get(f, a) + Complex64::new(re * std, im * std));
        }
    }
    let snr_r = if sigma_n_sq > 0.0 {
        mean_power(h) / sigma_n_sq
    } else {
        f64::INFINITY
    };
    Ok(RawEstimate {
        h_tilde,
        pattern: pattern.clone(),
        sigma_n_sq,
        snr_r,
    })
}

/// Observes `h` at the given SNR in dB; the noise variance is the mean power
/// of `h` divided by the linear SNR.
pub fn observe_at_snr_db<R: Rng + ?Sized>(
    h: &CfrMatrix,
    pattern: &PilotPattern,
    snr_db: f64,
    rng: &mut R,
) -> Result<RawEstimate> {
    let r = db_to_linear(snr_db);
    let sigma = snr_to_sigma(r, mean_power(h))?;
    let mut raw = observe(h, pattern, sigma, rng)?;
    raw.snr_r = r;
    Ok(raw)
}

/// `||H~||_F^2 / ||M||_1`: power of the raw estimate per observed element.
pub fn estimate_signal_power(raw: &RawEstimate) -> Result<f64> {
    let l1 = raw.pattern.mask_l1(raw.n_r());
    if l1 == 0 {
        return Err(Error::param("pilot set is empty"));
    }
    Ok(raw.h_tilde.frobenius_sq() / l1 as f64)
}

pub fn snr_to_sigma(r_linear: f64, p_signal: f64) -> Result<f64> {
    if !(r_linear > 0.0) {
        return Err(Error::param(format!("SNR must be positive, got {r_linear}")));
    }
    Ok(p_signal / r_linear)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// SNR drawn uniformly in dB over `[min_db, max_db]`, returned linear.
pub fn sample_snr<R: Rng + ?Sized>(rng: &mut R, min_db: f64, max_db: f64) -> f64 {
    let db = min_db + (max_db - min_db) * rng.random::<f64>();
    db_to_linear(db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cfr(rng: &mut ChaCha8Rng, n_f: usize, n_r: usize) -> CfrMatrix {
        CfrMatrix::from_fn(n_f, n_r, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
        .unwrap()
    }

    #[test]
    fn pattern_index_formula() {
        assert_eq!(make_pilot_pattern(8, 4, 1).unwrap().indices(), &[1, 5]);
        let dense = make_pilot_pattern(8, 1, 0).unwrap();
        assert!(dense.mask(3).iter().all(|&m| m == 1.0));
        let sparse = make_pilot_pattern(64, 32, 31).unwrap();
        assert_eq!(sparse.indices(), &[31, 63]);
    }

    #[test]
    fn pattern_rejects_bad_arguments() {
        assert!(make_pilot_pattern(8, 4, 4).is_err());
        assert!(make_pilot_pattern(8, 9, 0).is_err());
        assert!(make_pilot_pattern(8, 0, 0).is_err());
    }

    #[test]
    fn mask_is_striped_and_idempotent() {
        let p = make_pilot_pattern(16, 4, 2).unwrap();
        let m = p.mask(3);
        for f in 0..16 {
            let row = &m[f * 3..f * 3 + 3];
            let want = if p.indices().contains(&f) { 1.0 } else { 0.0 };
            assert!(row.iter().all(|&v| v == want));
        }
        assert!(m.iter().all(|&v| v * v == v));
    }

    #[test]
    fn fixed_interval_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = sample_pilot_pattern(&mut rng, 64, &[16]).unwrap();
            assert_eq!(p.interval(), 16);
            assert!(p.start() < 16);
        }
        assert!(sample_pilot_pattern(&mut rng, 64, &[]).is_err());
        let a = sample_pilot_pattern(&mut ChaCha8Rng::seed_from_u64(9), 64, &[2, 4, 8]).unwrap();
        let b = sample_pilot_pattern(&mut ChaCha8Rng::seed_from_u64(9), 64, &[2, 4, 8]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interval_frequencies_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let intervals = [2, 4, 8, 16, 32];
        let mut counts = [0usize; 5];
        let n = 100_000;
        for _ in 0..n {
            let p = sample_pilot_pattern(&mut rng, 64, &intervals).unwrap();
            counts[intervals.iter().position(|&i| i == p.interval()).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn normalization_examples() {
        let unit = CfrMatrix::from_fn(4, 2, |f, a| Complex64::from_polar(1.0, (f + 3 * a) as f64)).unwrap();
        let (out, p) = normalize_power(&unit).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        for (x, y) in out.values().iter().zip(unit.values()) {
            assert!((x - y).norm() < 1e-15);
        }

        let (out2, p2) = normalize_power(&unit.scale(2.0)).unwrap();
        assert!((p2 - 4.0).abs() < 1e-12);
        for (x, y) in out2.values().iter().zip(unit.values()) {
            assert!((x - y).norm() < 1e-12);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_cfr(&mut rng, 16, 4);
        let (out3, _) = normalize_power(&h).unwrap();
        assert!((out3.frobenius_sq() / 64.0 - 1.0).abs() < 1e-10);

        assert!(matches!(
            normalize_power(&CfrMatrix::zeros(4, 2).unwrap()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn noiseless_dense_observation_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_cfr(&mut rng, 8, 3);
        let p = make_pilot_pattern(8, 1, 0).unwrap();
        let raw = observe(&h, &p, 0.0, &mut rng).unwrap();
        assert_eq!(raw.h_tilde, h);
    }

    #[test]
    fn observation_zeroes_non_pilot_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_cfr(&mut rng, 8, 3);
        let p = make_pilot_pattern(8, 2, 0).unwrap();
        let raw = observe(&h, &p, 0.3, &mut rng).unwrap();
        for f in (1..8).step_by(2) {
            assert!(raw.h_tilde.row(f).iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        }
        // Re-applying the mask changes nothing.
        assert_eq!(p.apply(&raw.h_tilde), raw.h_tilde);
    }

    #[test]
    fn observation_noise_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_cfr(&mut rng, 4, 1);
        let p = make_pilot_pattern(4, 4, 0).unwrap();
        let sigma = 0.1;
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let raw = observe(&h, &p, sigma, &mut rng).unwrap();
                (raw.h_tilde.get(0, 0) - h.get(0, 0)).norm_sqr()
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - sigma).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn signal_power_examples() {
        let h = CfrMatrix::from_fn(8, 2, |f, a| Complex64::from_polar(1.0, (f * a) as f64)).unwrap();
        let p = make_pilot_pattern(8, 2, 1).unwrap();
        let raw = observe(&h, &p, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let p1 = estimate_signal_power(&raw).unwrap();
        assert!((p1 - 1.0).abs() < 1e-12);
        let p9 = estimate_signal_power(&raw.scaled(3.0)).unwrap();
        assert!((p9 - 9.0 * p1).abs() < 1e-12);
    }

    #[test]
    fn pattern_serializes_as_triple() {
        let p = make_pilot_pattern(64, 8, 3).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"interval":8,"start":3,"n_f":64}"#);
        let back: PilotPattern = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<PilotPattern>(r#"{"interval":8,"start":9,"n_f":64}"#).is_err());
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_to_sigma(1.0, 1.0).unwrap(), 1.0);
        assert!((snr_to_sigma(db_to_linear(15.0), 1.0).unwrap() - 0.031623).abs() < 1e-6);
        assert_eq!(snr_to_sigma(2.0, 4.0).unwrap(), 2.0);
        assert!(snr_to_sigma(0.0, 1.0).is_err());
        assert!(snr_to_sigma(-3.0, 1.0).is_err());
    }
}
