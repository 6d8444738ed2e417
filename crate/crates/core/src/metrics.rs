use crate::channel::CfrMatrix;
use crate::error::{Error, Result};

/// Value reported in dB for an exact (zero-error) estimate.
pub const DB_FLOOR: f64 = -120.0;

fn check_shapes(a: &CfrMatrix, b: &CfrMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::param(format!("shapes differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `||H0 - H||_F^2 / ||H0||_F^2`.
pub fn nmse(h0: &CfrMatrix, h_hat: &CfrMatrix) -> Result<f64> {
    check_shapes(h0, h_hat)?;
    let energy = h0.frobenius_sq();
    if energy == 0.0 {
        return Err(Error::Degenerate("NMSE of an all-zero ground truth".into()));
    }
    let err: f64 = h0.values().iter().zip(h_hat.values()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(err / energy)
}

/// `10 log10(x)`, floored at [`DB_FLOOR`].
pub fn to_db(x: f64) -> f64 {
    if x <= 0.0 {
        DB_FLOOR
    } else {
        (10.0 * x.log10()).max(DB_FLOOR)
    }
}

pub fn nmse_db(h0: &CfrMatrix, h_hat: &CfrMatrix) -> Result<f64> {
    Ok(to_db(nmse(h0, h_hat)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineCorr {
    /// Mean over the subcarriers that were evaluated.
    pub rho: f64,
    /// Subcarriers skipped because a row had zero norm.
    pub skipped_rows: usize,
}

/// Mean over subcarriers of `|h_hat_i^H h_i| / (||h_hat_i|| ||h_i||)`. Rows
/// where either matrix is zero are skipped and counted.
pub fn cosine_corr(h0: &CfrMatrix, h_hat: &CfrMatrix) -> Result<CosineCorr> {
    check_shapes(h0, h_hat)?;
    let mut total = 0.0;
    let mut used = 0;
    for f in 0..h0.n_f() {
        let (a, b) = (h0.row(f), h_hat.row(f));
        let na = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let inner: num_complex::Complex64 = a.iter().zip(b).map(|(x, y)| y.conj() * x).sum();
        total += inner.norm() / (na * nb);
        used += 1;
    }
    let skipped_rows = h0.n_f() - used;
    if used == 0 {
        return Err(Error::Degenerate("every subcarrier row is zero".into()));
    }
    Ok(CosineCorr {
        rho: total / used as f64,
        skipped_rows,
    })
}

/// Empirical CDF: sorted values and `k / n` at the `k`-th.
pub fn error_cdf(values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.is_empty() {
        return Err(Error::param("empirical CDF of no samples"));
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let y = (1..=x.len()).map(|k| k as f64 / n).collect();
    Ok((x, y))
}

/// Evaluates a right-continuous empirical CDF at `v`.
pub fn cdf_at(sorted: &[f64], v: f64) -> f64 {
    sorted.partition_point(|&x| x <= v) as f64 / sorted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn nmse_examples() {
        let h = CfrMatrix::new(2, 2, vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(2.0, 0.0)]).unwrap();
        assert_eq!(nmse(&h, &h).unwrap(), 0.0);
        assert_eq!(nmse_db(&h, &h).unwrap(), DB_FLOOR);
        assert_eq!(nmse(&h, &h.scale(2.0)).unwrap(), 1.0);
        assert_eq!(nmse(&h, &CfrMatrix::zeros(2, 2).unwrap()).unwrap(), 1.0);
        assert!(matches!(nmse(&CfrMatrix::zeros(2, 2).unwrap(), &h), Err(Error::Degenerate(_))));
    }

    #[test]
    fn cosine_examples() {
        let h = CfrMatrix::new(2, 2, vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let orth = CfrMatrix::new(2, 2, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(cosine_corr(&h, &orth).unwrap().rho, 0.0);
        let s = 0.5f64.sqrt();
        let diag = CfrMatrix::new(2, 2, vec![c(s, 0.0), c(s, 0.0), c(s, 0.0), c(s, 0.0)]).unwrap();
        assert!((cosine_corr(&h, &diag).unwrap().rho - s).abs() < 1e-12);
    }

    #[test]
    fn zero_rows_are_skipped() {
        let h = CfrMatrix::new(2, 1, vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let r = cosine_corr(&h, &h).unwrap();
        assert_eq!(r.skipped_rows, 1);
        assert_eq!(r.rho, 1.0);
    }

    #[test]
    fn cdf_examples() {
        let (x, y) = error_cdf(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
        assert!((cdf_at(&x, 2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(y.last(), Some(&1.0));
        let (x, _) = error_cdf(&[0.5; 4]).unwrap();
        assert_eq!(cdf_at(&x, 0.49), 0.0);
        assert_eq!(cdf_at(&x, 0.5), 1.0);
        assert!(error_cdf(&[]).is_err());
    }
}
