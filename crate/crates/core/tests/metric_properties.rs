mod common;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cdit_channel::baselines::{from_matrix, to_matrix};
use cdit_channel::channel::CfrMatrix;
use cdit_channel::metrics::{cdf_at, cosine_corr, error_cdf, nmse};
use common::random_cfr;

fn random_unitary(rng: &mut impl Rng, n: usize) -> DMatrix<Complex64> {
    let a = to_matrix(&random_cfr(rng, n, n));
    a.qr().q()
}

fn nonzero_complex(rng: &mut impl Rng) -> Complex64 {
    let c = Complex64::from_polar(rng.random_range(0.05..20.0), rng.random_range(-3.2..3.2));
    assert!(c.norm() > 0.0);
    c
}

#[test]
fn worked_examples() {
    let c = Complex64::new;
    let h = CfrMatrix::new(2, 2, vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(2.0, 0.0)]).unwrap();
    assert_eq!(nmse(&h, &CfrMatrix::zeros(2, 2).unwrap()).unwrap(), 1.0);
    // Two copies of the row h = [1, 0] against h_hat = [1, 1] / sqrt(2).
    let row = CfrMatrix::new(2, 2, vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
    let s = 0.5f64.sqrt();
    let tilted = CfrMatrix::new(2, 2, vec![c(s, 0.0), c(s, 0.0), c(s, 0.0), c(s, 0.0)]).unwrap();
    assert!((cosine_corr(&row, &tilted).unwrap().rho - 0.5f64.sqrt()).abs() < 1e-12);
    let (x, _) = error_cdf(&[1.0, 2.0, 3.0]).unwrap();
    assert!((cdf_at(&x, 2.0) - 2.0 / 3.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nmse_is_invariant_to_a_shared_unitary(seed in 0u64..100_000, n_f in 2usize..10, n_r in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_cfr(&mut rng, n_f, n_r), random_cfr(&mut rng, n_f, n_r));
        let u = random_unitary(&mut rng, n_f);
        let ua = from_matrix(&(&u * to_matrix(&a))).unwrap();
        let ub = from_matrix(&(&u * to_matrix(&b))).unwrap();
        let (plain, rotated) = (nmse(&a, &b).unwrap(), nmse(&ua, &ub).unwrap());
        prop_assert!((plain - rotated).abs() <= 1e-9 * plain.max(1.0));
    }

    #[test]
    fn cosine_is_invariant_to_row_scaling(seed in 0u64..100_000, n_f in 2usize..10, n_r in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, g) = (random_cfr(&mut rng, n_f, n_r), random_cfr(&mut rng, n_f, n_r));
        let scales: Vec<Complex64> = (0..n_f).map(|_| nonzero_complex(&mut rng)).collect();
        let scaled = CfrMatrix::from_fn(n_f, n_r, |f, r| scales[f] * g.get(f, r)).unwrap();
        let before = cosine_corr(&h, &g).unwrap().rho;
        prop_assert!((before - cosine_corr(&h, &scaled).unwrap().rho).abs() <= 1e-9);
        prop_assert!((before - cosine_corr(&scaled, &h).unwrap().rho).abs() <= 1e-9);
        prop_assert!((cosine_corr(&h, &CfrMatrix::from_fn(n_f, n_r, |f, r| scales[f] * h.get(f, r)).unwrap()).unwrap().rho - 1.0).abs() <= 1e-9);
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&before));
    }

    #[test]
    fn nmse_of_self_and_double(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_cfr(&mut rng, 6, 3);
        prop_assert_eq!(nmse(&h, &h).unwrap(), 0.0);
        prop_assert!((nmse(&h, &h.scale(2.0)).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn error_cdf_is_monotone_in_unit_interval(values in prop::collection::vec(-50.0f64..10.0, 1..200)) {
        let (x, y) = error_cdf(&values).unwrap();
        prop_assert!(x.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(y.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(y.iter().all(|&p| p > 0.0 && p <= 1.0));
        prop_assert_eq!(*y.last().unwrap(), 1.0);
        for &v in &values {
            prop_assert!(cdf_at(&x, v) > 0.0);
        }
    }
}
