use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::channel::{CfrMatrix, Dataset};
use crate::error::{Error, Result};
use crate::pilot::{normalize_power, RawEstimate};

type CMatrix = DMatrix<Complex64>;

const EIGEN_FLOOR: f64 = 1e-10;
const PSD_TOLERANCE: f64 = 1e-8;

/// Frequency and antenna covariances estimated from training channels.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseModel {
    r_f: CMatrix,
    r_r: CMatrix,
    fit_count: usize,
}

impl LmmseModel {
    /// Checks that both covariances are square, Hermitian and positive
    /// semidefinite up to a `1e-8` eigenvalue tolerance.
    pub fn new(r_f: CMatrix, r_r: CMatrix, fit_count: usize) -> Result<Self> {
        check_covariance("R_f", &r_f)?;
        check_covariance("R_r", &r_r)?;
        Ok(Self { r_f, r_r, fit_count })
    }

    pub fn r_f(&self) -> &CMatrix {
        &self.r_f
    }

    pub fn r_r(&self) -> &CMatrix {
        &self.r_r
    }

    pub fn fit_count(&self) -> usize {
        self.fit_count
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.r_f.nrows(), self.r_r.nrows())
    }
}

fn check_covariance(name: &str, r: &CMatrix) -> Result<()> {
    if !r.is_square() || r.nrows() == 0 {
        return Err(Error::param(format!("{name} must be square and non-empty")));
    }
    let scale = r.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let asym = (r - r.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
    if asym > PSD_TOLERANCE * scale {
        return Err(Error::param(format!("{name} is not Hermitian (deviation {asym:.3e})")));
    }
    let min = hermitian_part(r).symmetric_eigenvalues().min();
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::param(format!("{name} has negative eigenvalue {min:.3e}")));
    }
    Ok(())
}

fn hermitian_part(r: &CMatrix) -> CMatrix {
    (r + r.adjoint()) * Complex64::from(0.5)
}

pub fn to_matrix(h: &CfrMatrix) -> CMatrix {
    CMatrix::from_row_slice(h.n_f(), h.n_r(), h.values())
}

pub fn from_matrix(m: &CMatrix) -> Result<CfrMatrix> {
    CfrMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Sample covariances over power-normalised training channels:
/// `R_f = sum H H^H / (B n_r)` and `R_r = sum H^H H / (B n_f)`.
pub fn fit_lmmse(training: &Dataset) -> Result<LmmseModel> {
    if training.is_empty() {
        return Err(Error::param("cannot fit covariances to an empty dataset"));
    }
    let (n_f, n_r) = training.shape();
    let mut r_f = CMatrix::zeros(n_f, n_f);
    let mut r_r = CMatrix::zeros(n_r, n_r);
    for h in training.samples() {
        let (h, _) = normalize_power(h)?;
        let m = to_matrix(&h);
        r_f += &m * m.adjoint();
        r_r += m.adjoint() * &m;
    }
    let b = training.len() as f64;
    r_f /= Complex64::from(b * n_r as f64);
    r_r /= Complex64::from(b * n_f as f64);
    LmmseModel::new(r_f, r_r, training.len())
}

/// Inverse of a Hermitian matrix: Cholesky when positive definite, otherwise
/// an eigendecomposition with eigenvalues floored at `1e-10`.
fn hermitian_inverse(a: &CMatrix) -> CMatrix {
    if let Some(ch) = a.clone().cholesky() {
        return ch.inverse();
    }
    log::warn!(
        "singular {}x{} system in the LMMSE filter; regularising with eigenvalue floor {EIGEN_FLOOR:e}",
        a.nrows(),
        a.ncols()
    );
    let eig = SymmetricEigen::new(hermitian_part(a));
    let inv = eig.eigenvalues.map(|l| Complex64::from(1.0 / l.max(EIGEN_FLOOR)));
    &eig.eigenvectors * CMatrix::from_diagonal(&inv) * eig.eigenvectors.adjoint()
}

/// Frequency-domain LMMSE over the pilot rows:
/// `R_f[:,P] (R_f[P,P] + sigma^2 I)^{-1} H~[P,:]`. Also returns the diagonal
/// of the posterior error covariance, one variance per subcarrier.
pub fn frequency_stage(r_f: &CMatrix, pilots: &[usize], h_tilde: &CMatrix, sigma_n_sq: f64) -> Result<(CMatrix, Vec<f64>)> {
    let n_f = r_f.nrows();
    if pilots.is_empty() {
        return Err(Error::param("LMMSE needs at least one pilot"));
    }
    if h_tilde.nrows() != n_f || pilots.iter().any(|&p| p >= n_f) {
        return Err(Error::param("observation does not match the frequency covariance"));
    }
    if !(sigma_n_sq >= 0.0) {
        return Err(Error::param(format!("noise variance must be non-negative, got {sigma_n_sq}")));
    }
    let k = pilots.len();
    let cross = CMatrix::from_fn(n_f, k, |i, j| r_f[(i, pilots[j])]);
    let pp = CMatrix::from_fn(k, k, |i, j| r_f[(pilots[i], pilots[j])]) + CMatrix::identity(k, k) * Complex64::from(sigma_n_sq);
    let y = CMatrix::from_fn(k, h_tilde.ncols(), |i, j| h_tilde[(pilots[i], j)]);
    let gain = &cross * hermitian_inverse(&pp);
    let estimate = &gain * y;
    let explained = &gain * cross.adjoint();
    let sigma_i = (0..n_f).map(|i| (r_f[(i, i)] - explained[(i, i)]).re.max(0.0)).collect();
    Ok((estimate, sigma_i))
}

/// Antenna-domain refinement: row `i` becomes `h_i (R_r + sigma_i I)^{-1} R_r`.
pub fn antenna_stage(r_r: &CMatrix, h: &CMatrix, sigma_i: &[f64]) -> Result<CMatrix> {
    let n_r = r_r.nrows();
    if h.ncols() != n_r || sigma_i.len() != h.nrows() {
        return Err(Error::param("estimate does not match the antenna covariance"));
    }
    let eig = SymmetricEigen::new(hermitian_part(r_r));
    let u = &eig.eigenvectors;
    let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let mut out = h.clone();
    for (i, &s) in sigma_i.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let shrink = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n_r,
            lambdas.iter().map(|&l| Complex64::from(l / (l + s))),
        ));
        let filter = u * shrink * u.adjoint();
        let row = h.row(i) * filter;
        out.set_row(i, &row);
    }
    Ok(out)
}

/// Two-stage LMMSE: frequency interpolation from the pilots, then antenna
/// smoothing weighted by each subcarrier's residual error variance.
pub fn lmmse_estimate(raw: &RawEstimate, model: &LmmseModel) -> Result<CfrMatrix> {
    if model.shape() != raw.h_tilde.shape() {
        return Err(Error::param(format!(
            "observation shape {:?} does not match the fitted model {:?}",
            raw.h_tilde.shape(),
            model.shape()
        )));
    }
    let (stage1, sigma_i) = frequency_stage(&model.r_f, raw.pattern.indices(), &to_matrix(&raw.h_tilde), raw.sigma_n_sq)?;
    from_matrix(&antenna_stage(&model.r_r, &stage1, &sigma_i)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::DatasetMeta;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_frequency_stage_is_the_wiener_filter() {
        let r_f = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let y = CMatrix::from_element(1, 1, c(0.8, -0.6));
        let (est, sigma) = frequency_stage(&r_f, &[0], &y, 1.0).unwrap();
        assert_abs_diff_eq!(est[(0, 0)].re, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(est[(0, 0)].im, -0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn scalar_two_stage_shrinks_twice() {
        let r = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let y = CMatrix::from_element(1, 1, c(0.9, 0.3));
        let (s1, sigma) = frequency_stage(&r, &[0], &y, 1.0).unwrap();
        let s2 = antenna_stage(&r, &s1, &sigma).unwrap();
        assert_abs_diff_eq!(s2[(0, 0)].re, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(s2[(0, 0)].im, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn single_sample_fit_matches_direct_formula() {
        let h = CfrMatrix::from_fn(3, 2, |f, a| c((f + a) as f64, f as f64 - a as f64)).unwrap();
        let ds = Dataset::new(vec![h.clone()], DatasetMeta::default()).unwrap();
        let model = fit_lmmse(&ds).unwrap();
        let (hn, _) = normalize_power(&h).unwrap();
        let m = to_matrix(&hn);
        let want = &m * m.adjoint() / c(2.0, 0.0);
        assert!((model.r_f() - want).iter().all(|v| v.norm() < 1e-12));
        assert!((model.r_f() - model.r_f().adjoint()).iter().all(|v| v.norm() < 1e-12));
        assert_eq!(model.fit_count(), 1);
    }

    #[test]
    fn noiseless_dense_pilots_reproduce_the_observation() {
        let r_f = CMatrix::from_fn(4, 4, |i, j| c(0.5f64.powi((i as i32 - j as i32).abs()), 0.0));
        let r_r = CMatrix::identity(2, 2);
        let model = LmmseModel::new(r_f, r_r, 1).unwrap();
        let h = CfrMatrix::from_fn(4, 2, |f, a| c(f as f64 - 1.5, a as f64 + 0.5)).unwrap();
        let raw = RawEstimate {
            h_tilde: h.clone(),
            pattern: crate::pilot::make_pilot_pattern(4, 1, 0).unwrap(),
            sigma_n_sq: 0.0,
            snr_r: f64::INFINITY,
        };
        let est = lmmse_estimate(&raw, &model).unwrap();
        for (a, b) in est.values().iter().zip(h.values()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn huge_noise_shrinks_to_zero() {
        let r_f = CMatrix::identity(4, 4);
        let y = CMatrix::from_element(4, 1, c(1.0, 1.0));
        let (est, _) = frequency_stage(&r_f, &[0, 2], &y, 1e12).unwrap();
        assert!(est.iter().all(|v| v.norm() < 1e-10));
    }

    #[test]
    fn singular_system_is_regularised() {
        // Rank-one covariance with noiseless observations.
        let v = CMatrix::from_column_slice(3, 1, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let r_f = &v * v.adjoint();
        let y = CMatrix::from_column_slice(3, 1, &[c(2.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let (est, _) = frequency_stage(&r_f, &[0, 2], &y, 0.0).unwrap();
        assert!(est.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        assert_abs_diff_eq!(est[(1, 0)].re, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn rejects_non_hermitian_and_indefinite() {
        let bad = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(LmmseModel::new(bad, CMatrix::identity(1, 1), 1).is_err());
        let indefinite = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(LmmseModel::new(indefinite, CMatrix::identity(1, 1), 1).is_err());
    }
}
