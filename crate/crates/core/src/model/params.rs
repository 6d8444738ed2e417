use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// How a parameter is initialised.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Normal(f64),
    /// Xavier/Glorot uniform over `fan_in`, `fan_out`.
    XavierUniform { fan_in: usize, fan_out: usize },
    /// Explicit values (row-major), used for the identity-initialised fusion
    /// convolution.
    Values(&'static [f64]),
}

/// Named trainable variables in a deterministic (sorted) order.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: Device) -> Self {
        Self {
            vars: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            dtype,
            device,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Creates variable `name` and returns a tensor tracking it.
    pub fn var(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::param(format!("duplicate parameter `{name}`")));
        }
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Normal(std) => (0..n)
                .map(|_| std * self.rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Init::XavierUniform { fan_in, fan_out } => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n)
                    .map(|_| self.rng.random_range(-bound..bound))
                    .collect()
            }
            Init::Values(v) => {
                if v.len() != n {
                    return Err(Error::param(format!(
                        "`{name}`: {} initial values for {n} elements",
                        v.len()
                    )));
                }
                v.to_vec()
            }
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn parameter_count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Overwrites every variable from `source`, which must provide the same
    /// names and shapes.
    pub fn load_from(&self, mut source: impl FnMut(&str) -> Result<Tensor>) -> Result<()> {
        for (name, var) in &self.vars {
            let t = source(name)?;
            if t.dims() != var.dims() {
                return Err(Error::format(
                    name.clone(),
                    format!("shape {:?}, expected {:?}", t.dims(), var.dims()),
                ));
            }
            var.set(&t.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        }
        Ok(())
    }

    /// Redraws every all-zero variable from `N(0, std^2)`. The adaLN-zero and
    /// zero-projection initialisations make most gradients vanish at
    /// construction; this makes a network non-degenerate for gradient checks
    /// and sensitivity probes.
    pub fn randomize_zero_vars(&self, std: f64, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for var in self.vars.values() {
            let all_zero = var
                .as_tensor()
                .abs()?
                .max_all()?
                .to_dtype(DType::F64)?
                .to_scalar::<f64>()?
                == 0.0;
            if all_zero {
                let values: Vec<f64> = (0..var.elem_count())
                    .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let t = Tensor::from_vec(values, var.dims(), &self.device)?.to_dtype(self.dtype)?;
                var.set(&t)?;
            }
        }
        Ok(())
    }
}
