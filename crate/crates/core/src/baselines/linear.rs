use num_complex::Complex64;

use crate::channel::CfrMatrix;
use crate::error::{Error, Result};
use crate::pilot::RawEstimate;

/// Per antenna, interpolates real and imaginary parts linearly in subcarrier
/// index between neighbouring pilots and holds the edge pilots constant
/// outside the pilot span.
pub fn linear_interp_estimate(raw: &RawEstimate) -> Result<CfrMatrix> {
    let pilots = raw.pattern.indices();
    let (Some(&first), Some(&last)) = (pilots.first(), pilots.last()) else {
        return Err(Error::param("linear interpolation needs at least one pilot"));
    };
    let h = &raw.h_tilde;
    let mut out = h.clone();
    for f in 0..h.n_f() {
        if f <= first {
            copy_row(&mut out, h, first, f);
        } else if f >= last {
            copy_row(&mut out, h, last, f);
        } else {
            let k = pilots.partition_point(|&p| p <= f);
            let (lo, hi) = (pilots[k - 1], pilots[k]);
            if lo == f {
                continue;
            }
            let w = (f - lo) as f64 / (hi - lo) as f64;
            for a in 0..h.n_r() {
                let v = h.get(lo, a) * Complex64::from(1.0 - w) + h.get(hi, a) * Complex64::from(w);
                out.set(f, a, v);
            }
        }
    }
    Ok(out)
}

fn copy_row(out: &mut CfrMatrix, h: &CfrMatrix, from: usize, to: usize) {
    for a in 0..h.n_r() {
        out.set(to, a, h.get(from, a));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilot::make_pilot_pattern;

    fn raw_from(values: &[f64], interval: usize, start: usize) -> RawEstimate {
        let n_f = values.len();
        let p = make_pilot_pattern(n_f, interval, start).unwrap();
        let h = CfrMatrix::from_fn(n_f, 1, |f, _| if p.is_pilot(f) { Complex64::new(values[f], -values[f]) } else { Complex64::new(0.0, 0.0) }).unwrap();
        RawEstimate {
            h_tilde: h,
            pattern: p,
            sigma_n_sq: 0.0,
            snr_r: f64::INFINITY,
        }
    }

    #[test]
    fn midpoint_between_pilots() {
        let r = raw_from(&[0.0, 9.0, 9.0, 9.0, 4.0, 9.0, 9.0, 9.0], 4, 0);
        let out = linear_interp_estimate(&r).unwrap();
        assert_eq!(out.get(2, 0), Complex64::new(2.0, -2.0));
        assert_eq!(out.get(1, 0), Complex64::new(1.0, -1.0));
        // Flat beyond the last pilot.
        assert_eq!(out.get(7, 0), Complex64::new(4.0, -4.0));
    }

    #[test]
    fn dense_pilots_pass_through() {
        let r = raw_from(&[1.0, -2.0, 3.5, 0.25], 1, 0);
        assert_eq!(linear_interp_estimate(&r).unwrap(), r.h_tilde);
    }

    #[test]
    fn single_pilot_is_held_everywhere() {
        let r = raw_from(&[0.0, 0.0, 5.0, 0.0], 4, 2);
        let out = linear_interp_estimate(&r).unwrap();
        for f in 0..4 {
            assert_eq!(out.get(f, 0), Complex64::new(5.0, -5.0));
        }
    }

    #[test]
    fn leading_rows_take_the_first_pilot() {
        let r = raw_from(&[9.0, 9.0, 2.0, 9.0, 9.0, 6.0], 3, 2);
        let out = linear_interp_estimate(&r).unwrap();
        assert_eq!(out.get(0, 0), Complex64::new(2.0, -2.0));
        assert!((out.get(3, 0).re - (2.0 + 4.0 / 3.0)).abs() < 1e-12);
    }
}
