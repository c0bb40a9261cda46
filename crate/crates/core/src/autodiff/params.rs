use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng as _;

use super::graph::Gradients;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed::Rng;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"BLNN1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named learnable tensors with matching gradient buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
}

/// Glorot / Xavier uniform bound.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.id(&name).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate parameter {name}")));
        }
        if !value.all_finite() {
            return Err(Error::NonFiniteInput("parameter"));
        }
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn uniform(&mut self, name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut Rng) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name).ok_or_else(|| Error::CheckpointMissing(format!("parameter {name}")))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    /// Adds `scale * grads` into the gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for id in self.ids() {
            if let Some(g) = grads.param(id) {
                for (acc, v) in self.grads[id.0].data_mut().iter_mut().zip(g.data()) {
                    *acc += scale * v;
                }
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Copies values of every parameter in `other` with a matching name.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        for id in self.ids() {
            let src = other.require(&self.names[id.0])?;
            let v = other.value(src);
            if v.shape() != self.values[id.0].shape() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {}: {:?} vs {:?}",
                    self.names[id.0],
                    v.shape(),
                    self.values[id.0].shape()
                )));
            }
            self.values[id.0] = v.clone();
        }
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W, descriptor: &str) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        write_u32(&mut w, descriptor.len())?;
        w.write_all(descriptor.as_bytes())?;
        write_u32(&mut w, self.len())?;
        for (name, value) in self.names.iter().zip(&self.values) {
            write_u32(&mut w, name.len())?;
            w.write_all(name.as_bytes())?;
            write_u32(&mut w, value.shape().len())?;
            for &d in value.shape() {
                write_u32(&mut w, d)?;
            }
            for v in value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Returns the embedded descriptor and the parameters.
    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(String, ParamSet)> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a BLNN1 checkpoint".into()));
        }
        let descriptor = read_string(&mut r)?;
        let n = read_u32(&mut r)?;
        let mut set = ParamSet::new();
        for _ in 0..n {
            let name = read_string(&mut r)?;
            let ndims = read_u32(&mut r)?;
            if ndims > 8 {
                return Err(Error::Format(format!("parameter {name} has {ndims} dims")));
            }
            let shape = (0..ndims).map(|_| read_u32(&mut r)).collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let mut bytes = vec![0u8; count * 8];
            r.read_exact(&mut bytes).map_err(|_| Error::Format("truncated checkpoint".into()))?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            set.insert(name, Tensor::new(shape, data)?)?;
        }
        Ok((descriptor, set))
    }

    pub fn save(&self, path: &Path, descriptor: &str) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_checkpoint(&mut w, descriptor)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(String, ParamSet)> {
        let f = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::CheckpointMissing(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        Self::read_checkpoint(BufReader::new(f))
    }
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format("length exceeds u32".into()))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated checkpoint".into()))?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)?;
    if len > 1 << 24 {
        return Err(Error::Format("string length out of range".into()));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated checkpoint".into()))?;
    String::from_utf8(b).map_err(|_| Error::Format("invalid utf-8".into()))
}
