use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, Result, TensorError};
use crate::{Rng, Scalar, Tensor};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub trainable: bool,
}

/// Named, ordered collection of model parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

/// Initialization schemes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    KaimingUniform { fan_in: usize },
    Normal { std: f64 },
    Uniform { bound: f64 },
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn init(&mut self, name: impl Into<String>, shape: Vec<usize>, init: Init, rng: &mut Rng) -> ParamId {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
            Init::KaimingUniform { fan_in } => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                rng.uniform_vec(n, -bound, bound)
            }
            Init::Normal { std } => rng.normal_vec(n, std),
            Init::Uniform { bound } => rng.uniform_vec(n, -bound, bound),
        };
        self.add(name, Tensor::new(shape, data).expect("init shape"))
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Writes the checkpoint format: magic `GCK1`, u32 tensor count, then per
    /// tensor a u32-length-prefixed UTF-8 name, u32 rank, u32 dims and the
    /// values as little-endian f32.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"GCK1")?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for p in &self.params {
            let name = p.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(p.value.shape().len() as u32).to_le_bytes())?;
            for d in p.value.shape() {
                w.write_all(&(*d as u32).to_le_bytes())?;
            }
            for v in p.value.data() {
                w.write_all(&(v.f64() as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Overwrites parameter values from a checkpoint. Every stored parameter
    /// must be present with the same shape.
    pub fn load_values(&mut self, tensors: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
        for p in &mut self.params {
            let t = tensors
                .get(&p.name)
                .ok_or_else(|| TensorError::Checkpoint(format!("missing tensor `{}`", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(TensorError::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.cast();
        }
        Ok(())
    }
}

/// Reads a checkpoint written by [`ParamStore::write_to`].
pub fn read_checkpoint(r: &mut impl Read) -> Result<BTreeMap<String, Tensor<f32>>> {
    fn u32_of(r: &mut impl Read) -> Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|e| TensorError::Checkpoint(format!("truncated: {e}")))?;
        Ok(u32::from_le_bytes(b))
    }
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| TensorError::Checkpoint(format!("truncated: {e}")))?;
    if &magic != b"GCK1" {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let count = u32_of(r)?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = u32_of(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| TensorError::Checkpoint(format!("truncated: {e}")))?;
        let name = String::from_utf8(name).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        let rank = u32_of(r)? as usize;
        let shape = (0..rank).map(|_| u32_of(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)
            .map_err(|e| TensorError::Checkpoint(format!("truncated: {e}")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if out.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
            return Err(invalid("checkpoint", format!("duplicate tensor `{name}`")));
        }
    }
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<BTreeMap<String, Tensor<f32>>> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

/// Gradients indexed like a [`ParamStore`]; `None` for parameters that did
/// not take part in the loss.
#[derive(Clone, Debug)]
pub struct ParamGrads<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            grads: vec![None; store.len()],
        }
    }

    pub fn accumulate(&mut self, id: ParamId, g: &[T]) {
        let slot = self.grads[id.0].get_or_insert_with(|| vec![T::zero(); g.len()]);
        slot.iter_mut().zip(g).for_each(|(s, g)| *s += *g);
    }

    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.grads.get(id.0)?.as_deref()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.iter().all(|v| v.is_finite()))
    }
}
