//! SVG line plots derived from the sweep CSVs.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{SampleRow, SweepRow};
use crate::metrics::{error_cdf, to_db};

pub const NMSE_VS_SNR: &str = "nmse_vs_snr.svg";
pub const NMSE_VS_STEPS: &str = "nmse_vs_steps.svg";
pub const NMSE_CDF: &str = "nmse_cdf.svg";
pub const PLOT_FILES: [&str; 3] = [NMSE_VS_SNR, NMSE_VS_STEPS, NMSE_CDF];

type Series = BTreeMap<String, Vec<(f64, f64)>>;

pub fn write_all(dir: &Path, rows: &[SweepRow], samples: &[SampleRow]) -> Result<()> {
    nmse_vs_snr(&dir.join(NMSE_VS_SNR), rows)?;
    nmse_vs_steps(&dir.join(NMSE_VS_STEPS), rows)?;
    nmse_cdf(&dir.join(NMSE_CDF), samples)
}

fn sampler_label(method: crate::eval::Method, steps: usize, eta: f64) -> String {
    match method {
        crate::eval::Method::Cdit => format!("{method} S={steps} eta={eta}"),
        _ => method.to_string(),
    }
}

/// One line per (method, interval, sampler).
pub fn nmse_vs_snr(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut series = Series::new();
    for r in rows {
        let key = format!("{} P={}", sampler_label(r.method, r.steps, r.eta), r.interval);
        series.entry(key).or_default().push((r.snr_db, r.nmse_db));
    }
    line_chart(path, "NMSE versus SNR", "SNR (dB)", "NMSE (dB)", series)
}

/// One line per (interval, SNR, eta) over the diffusion rows.
pub fn nmse_vs_steps(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut series = Series::new();
    for r in rows.iter().filter(|r| r.method == crate::eval::Method::Cdit) {
        let key = format!("P={} SNR={} dB eta={}", r.interval, r.snr_db, r.eta);
        series.entry(key).or_default().push((r.steps as f64, r.nmse_db));
    }
    line_chart(path, "NMSE versus inference steps", "steps S", "NMSE (dB)", series)
}

/// Empirical CDF of per-sample NMSE (dB), one curve per cell.
pub fn nmse_cdf(path: &Path, samples: &[SampleRow]) -> Result<()> {
    let mut cells: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in samples {
        let key = format!("{} P={} SNR={}", sampler_label(s.method, s.steps, s.eta), s.interval, s.snr_db);
        cells.entry(key).or_default().push(to_db(s.nmse));
    }
    let mut series = Series::new();
    for (key, values) in cells {
        let (x, y) = error_cdf(&values)?;
        series.insert(key, x.into_iter().zip(y).collect());
    }
    line_chart(path, "CDF of per-sample NMSE", "NMSE (dB)", "cumulative probability", series)
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn line_chart(path: &Path, title: &str, x_desc: &str, y_desc: &str, mut series: Series) -> Result<()> {
    let err = |e: &dyn std::fmt::Display| Error::format(path.display().to_string(), e.to_string());
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let all = series.values().flatten();
    let (x0, x1) = padded(
        all.clone().map(|p| p.0).fold(f64::INFINITY, f64::min),
        all.clone().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = padded(
        all.clone().map(|p| p.1).fold(f64::INFINITY, f64::min),
        all.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );

    let root = SVGBackend::new(path, (860, 580)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(14)
        .x_label_area_size(44)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(y_desc)
        .draw()
        .map_err(|e| err(&e))?;
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| err(&e))?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(|e| err(&e))?;
    }
    if !series.is_empty() {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(|e| err(&e))?;
    }
    root.present().map_err(|e| err(&e))?;
    Ok(())
}
