use std::collections::HashMap;
use std::path::Path;

use num_complex::Complex64;

use super::{CfrMatrix, Dataset, DatasetMeta};
use crate::container::{self, Container, NamedArray};
use crate::error::{Error, Result};

pub(crate) const REAL: &str = "real";
pub(crate) const IMAG: &str = "imag";
const META_KEY: &str = "dataset";
const FORMAT_KEY: &str = "format";
const FORMAT_TAG: &str = "cdit-channel/dataset/v1";

/// Writes `ds` as two `f32` arrays `real` and `imag` shaped
/// `[count, n_f, n_r]` plus a JSON metadata record.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let (n_f, n_r) = ds.shape();
    let shape = vec![ds.len(), n_f, n_r];
    let re: Vec<f32> = ds
        .samples()
        .iter()
        .flat_map(|s| s.values().iter().map(|v| v.re as f32))
        .collect();
    let im: Vec<f32> = ds
        .samples()
        .iter()
        .flat_map(|s| s.values().iter().map(|v| v.im as f32))
        .collect();
    let meta_json =
        serde_json::to_string(&ds.meta).map_err(|e| Error::format(META_KEY, e.to_string()))?;
    let meta = HashMap::from([
        (FORMAT_KEY.to_string(), FORMAT_TAG.to_string()),
        (META_KEY.to_string(), meta_json),
    ]);
    container::write(
        path.as_ref(),
        &[
            NamedArray::f32(REAL, shape.clone(), &re),
            NamedArray::f32(IMAG, shape, &im),
        ],
        meta,
    )
}

/// Loads a dataset. Any container holding `real`/`imag` arrays of equal
/// rank-3 shape is accepted; the metadata record is optional so externally
/// produced files import cleanly.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let c = Container::open(path.as_ref())?;
    let (shape_re, re) = c.array_f64(REAL)?;
    let (shape_im, im) = c.array_f64(IMAG)?;
    if shape_re.len() != 3 {
        return Err(Error::format(
            REAL,
            format!("expected shape [count, n_f, n_r], found {shape_re:?}"),
        ));
    }
    if shape_im != shape_re {
        return Err(Error::format(
            IMAG,
            format!("shape {shape_im:?} differs from `real` shape {shape_re:?}"),
        ));
    }
    let (count, n_f, n_r) = (shape_re[0], shape_re[1], shape_re[2]);
    if count == 0 {
        return Err(Error::format(REAL, "dataset holds no samples"));
    }
    let per = n_f * n_r;
    let samples = (0..count)
        .map(|k| {
            let values = (0..per)
                .map(|i| Complex64::new(re[k * per + i], im[k * per + i]))
                .collect();
            CfrMatrix::new(n_f, n_r, values)
                .map_err(|e| Error::format(REAL, format!("sample {k}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = match c.meta()?.get(META_KEY) {
        Some(json) => {
            serde_json::from_str(json).map_err(|e| Error::format(META_KEY, e.to_string()))?
        }
        None => DatasetMeta {
            generator: None,
            split: "imported".into(),
        },
    };
    Dataset::new(samples, meta)
}
