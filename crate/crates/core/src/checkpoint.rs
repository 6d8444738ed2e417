//! Model checkpoints: every parameter as a named array, with the network
//! config, schedule descriptor and training metadata in the container header.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::Dtype;
use serde::{Deserialize, Serialize};

use crate::container::{self, Container, NamedArray};
use crate::diffusion::ScheduleSpec;
use crate::error::{Error, Result};
use crate::model::{Cdit, ModelConfig};

const FORMAT_TAG: &str = "cdit-channel/checkpoint/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epoch: usize,
    pub step: usize,
    pub seed: u64,
}

/// A loaded checkpoint.
pub struct Checkpoint {
    pub model: Cdit,
    pub schedule: ScheduleSpec,
    pub training: TrainingMeta,
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Cdit, schedule: &ScheduleSpec, training: &TrainingMeta) -> Result<()> {
    let mut arrays = Vec::new();
    for (name, var) in model.params().vars() {
        let t = var.as_tensor();
        let shape = t.dims().to_vec();
        let flat = t.flatten_all()?;
        arrays.push(match t.dtype() {
            DType::F64 => NamedArray::f64(name.clone(), shape, &flat.to_vec1::<f64>()?),
            _ => NamedArray::f32(name.clone(), shape, &flat.to_dtype(DType::F32)?.to_vec1::<f32>()?),
        });
    }
    let meta = HashMap::from([
        ("format".to_string(), FORMAT_TAG.to_string()),
        ("model".to_string(), json("model", model.config())?),
        ("schedule".to_string(), json("schedule", schedule)?),
        ("training".to_string(), json("training", training)?),
    ]);
    container::write(path.as_ref(), &arrays, meta)
}

fn json<T: Serialize>(key: &str, v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::format(key, e.to_string()))
}

fn parse<T: for<'de> Deserialize<'de>>(c: &Container, key: &str) -> Result<T> {
    serde_json::from_str(&c.meta_field(key)?).map_err(|e| Error::format(key, e.to_string()))
}

/// Loads a checkpoint onto `device`; parameters keep the stored precision.
pub fn load_checkpoint(path: impl AsRef<Path>, device: &Device) -> Result<Checkpoint> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::Config(format!("checkpoint {} does not exist", path.display())));
    }
    let c = Container::open(path)?;
    let tag = c.meta_field("format")?;
    if tag != FORMAT_TAG {
        return Err(Error::format("format", format!("expected {FORMAT_TAG}, found {tag}")));
    }
    let cfg: ModelConfig = parse(&c, "model")?;
    let schedule: ScheduleSpec = parse(&c, "schedule")?;
    let training: TrainingMeta = parse(&c, "training")?;
    let first = c.names()?.into_iter().next().ok_or_else(|| Error::format("header", "no parameter arrays"))?;
    let dtype = match c.dtype(&first)? {
        Dtype::F64 => DType::F64,
        _ => DType::F32,
    };
    let model = Cdit::new(cfg, 0, dtype, device)?;
    let expected = model.params().vars().len();
    let stored = c.names()?.len();
    if stored != expected {
        return Err(Error::format(
            "header",
            format!("{stored} parameter arrays, model expects {expected}"),
        ));
    }
    model.params().load_from(|name| {
        let (shape, values) = c.array_f64(name)?;
        Ok(Tensor::from_vec(values, shape, device)?)
    })?;
    Ok(Checkpoint { model, schedule, training })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            n_f: 8,
            n_r: 4,
            patch_f: 4,
            patch_r: 2,
            depth: 1,
            width: 16,
            heads: 2,
            intervals: vec![2, 4],
            freq_dim: 16,
            mlp_ratio: 4,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.safetensors");
        for dtype in [DType::F32, DType::F64] {
            let m = Cdit::new(tiny(), 7, dtype, &Device::Cpu).unwrap();
            m.params().randomize_zero_vars(0.1, 1).unwrap();
            let meta = TrainingMeta { epoch: 3, step: 40, seed: 7 };
            save_checkpoint(&path, &m, &ScheduleSpec::default(), &meta).unwrap();
            let ck = load_checkpoint(&path, &Device::Cpu).unwrap();
            assert_eq!(ck.training, meta);
            assert_eq!(ck.schedule, ScheduleSpec::default());
            assert_eq!(ck.model.config(), m.config());
            assert_eq!(ck.model.dtype(), dtype);
            for (name, var) in m.params().vars() {
                let a = var.as_tensor().flatten_all().unwrap().to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap();
                let b = ck.model.params().get(name).unwrap().as_tensor().flatten_all().unwrap().to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap();
                assert_eq!(a, b, "{name}");
            }
        }
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let err = load_checkpoint("/nonexistent/ckpt.safetensors", &Device::Cpu).err().unwrap();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn dataset_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.safetensors");
        let ds = crate::channel::generate_cfr(&crate::channel::ChannelGenParams::default(), 2).unwrap();
        crate::channel::save_dataset(&ds, &path).unwrap();
        let err = load_checkpoint(&path, &Device::Cpu).err().unwrap();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }
}
