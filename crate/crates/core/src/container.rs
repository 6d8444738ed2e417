//! Self-describing array container (safetensors layout): named little-endian
//! arrays plus a string-keyed metadata record. Datasets and checkpoints both
//! use it.

use std::collections::HashMap;
use std::path::Path;

use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};

use crate::error::{Error, Result};

/// A named array held in memory before writing.
pub struct NamedArray {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub bytes: Vec<u8>,
}

impl NamedArray {
    pub fn f32(name: impl Into<String>, shape: Vec<usize>, data: &[f32]) -> Self {
        Self {
            name: name.into(),
            dtype: Dtype::F32,
            shape,
            bytes: data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    pub fn f64(name: impl Into<String>, shape: Vec<usize>, data: &[f64]) -> Self {
        Self {
            name: name.into(),
            dtype: Dtype::F64,
            shape,
            bytes: data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }
}

pub fn write(path: &Path, arrays: &[NamedArray], meta: HashMap<String, String>) -> Result<()> {
    let views = arrays
        .iter()
        .map(|a| {
            TensorView::new(a.dtype, a.shape.clone(), &a.bytes)
                .map(|v| (a.name.clone(), v))
                .map_err(|e| Error::format(&a.name, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    safetensors::serialize_to_file(views, Some(meta), path)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

/// A container read fully into memory.
pub struct Container {
    bytes: Vec<u8>,
}

impl Container {
    pub fn open(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let c = Self { bytes };
        // Validate the header eagerly so callers get a format error up front.
        c.parsed()?;
        Ok(c)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let c = Self { bytes };
        c.parsed()?;
        Ok(c)
    }

    fn parsed(&self) -> Result<SafeTensors<'_>> {
        SafeTensors::deserialize(&self.bytes).map_err(|e| Error::format("header", e.to_string()))
    }

    pub fn names(&self) -> Result<Vec<String>> {
        Ok(self.parsed()?.names().into_iter().map(String::from).collect())
    }

    pub fn meta(&self) -> Result<HashMap<String, String>> {
        let (_, m) = SafeTensors::read_metadata(&self.bytes)
            .map_err(|e| Error::format("header", e.to_string()))?;
        Ok(m.metadata().clone().unwrap_or_default())
    }

    pub fn meta_field(&self, key: &str) -> Result<String> {
        self.meta()?
            .remove(key)
            .ok_or_else(|| Error::format(key, "missing metadata entry"))
    }

    pub fn shape(&self, name: &str) -> Result<Vec<usize>> {
        let st = self.parsed()?;
        let view = st.tensor(name).map_err(|e| Error::format(name, e.to_string()))?;
        Ok(view.shape().to_vec())
    }

    pub fn dtype(&self, name: &str) -> Result<Dtype> {
        let st = self.parsed()?;
        let view = st.tensor(name).map_err(|e| Error::format(name, e.to_string()))?;
        Ok(view.dtype())
    }

    /// Reads an F32 or F64 array as `f64` values.
    pub fn array_f64(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let st = self.parsed()?;
        let view = st.tensor(name).map_err(|e| Error::format(name, e.to_string()))?;
        let data = view.data();
        let values = match view.dtype() {
            Dtype::F32 => data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            Dtype::F64 => data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect(),
            other => {
                return Err(Error::format(
                    name,
                    format!("expected F32 or F64, found {other:?}"),
                ))
            }
        };
        Ok((view.shape().to_vec(), values))
    }
}
