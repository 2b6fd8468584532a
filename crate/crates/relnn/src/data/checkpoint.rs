//! Length-prefixed binary checkpoints for model parameters.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "RNNK"
//! version u32
//! kind    4 bytes  "BASE" | "GNET" | "FNET"
//! meta    epochs u32, seed u64, config_hash u64
//! dropout f64
//! layers  u32 count, then per layer: activation u8, out u32, in u32
//! params  per layer: weights f64 * (out*in), bias f64 * out
//! ```
//!
//! Write -> read -> write is byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, MlpModel};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"RNNK";

/// Which trained model a checkpoint holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// The fc head over concatenated context features.
    Base,
    /// The reference-aggregation network g.
    GNet,
    /// The relation-scoring network f.
    FNet,
}

impl ModelKind {
    fn tag(self) -> &'static [u8; 4] {
        match self {
            ModelKind::Base => b"BASE",
            ModelKind::GNet => b"GNET",
            ModelKind::FNet => b"FNET",
        }
    }

    fn from_tag(tag: &[u8; 4]) -> Option<Self> {
        match tag {
            b"BASE" => Some(ModelKind::Base),
            b"GNET" => Some(ModelKind::GNet),
            b"FNET" => Some(ModelKind::FNet),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Base => "BASE",
            ModelKind::GNet => "GNET",
            ModelKind::FNet => "FNET",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub epochs: u32,
    pub seed: u64,
    pub config_hash: u64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub meta: CheckpointMeta,
    pub model: MlpModel,
}

impl Checkpoint {
    /// Unwraps the model, rejecting checkpoints of the wrong kind.
    pub fn expect_kind(self, expected: ModelKind, path: &Path) -> Result<MlpModel> {
        if self.kind != expected {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                message: format!(
                    "kind tag mismatch: file holds {}, expected {}",
                    self.kind.name(),
                    expected.name()
                ),
            });
        }
        Ok(self.model)
    }
}

pub fn write_checkpoint(
    model: &MlpModel,
    kind: ModelKind,
    meta: CheckpointMeta,
    path: &Path,
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(kind.tag());
    buf.extend_from_slice(&meta.epochs.to_le_bytes());
    buf.extend_from_slice(&meta.seed.to_le_bytes());
    buf.extend_from_slice(&meta.config_hash.to_le_bytes());
    buf.extend_from_slice(&model.dropout_rate.to_le_bytes());
    buf.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for layer in &model.layers {
        buf.push(layer.activation.tag());
        buf.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
    }
    for layer in &model.layers {
        for v in layer.weights.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.bias.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct CheckpointReader<'a> {
    path: &'a Path,
    file: std::io::BufReader<std::fs::File>,
}

impl<'a> CheckpointReader<'a> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Checkpoint {
            path: self.path.to_path_buf(),
            message: message.into(),
        }
    }

    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.file
            .read_exact(&mut buf)
            .map_err(|_| self.fail(format!("truncated file while reading {what}")))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes::<8>(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes::<8>(what)?))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = CheckpointReader {
        path,
        file: std::io::BufReader::new(file),
    };

    let magic = r.bytes::<4>("magic")?;
    if &magic != MAGIC {
        return Err(r.fail(format!("bad magic bytes {magic:02x?}")));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(r.fail(format!(
            "version skew: file is v{version}, reader supports v{CHECKPOINT_VERSION}"
        )));
    }
    let kind_tag = r.bytes::<4>("kind tag")?;
    let kind = ModelKind::from_tag(&kind_tag)
        .ok_or_else(|| r.fail(format!("unknown kind tag {kind_tag:02x?}")))?;
    let meta = CheckpointMeta {
        epochs: r.u32("epochs")?,
        seed: r.u64("seed")?,
        config_hash: r.u64("config hash")?,
    };
    let dropout = r.f64("dropout rate")?;
    if !(0.0..1.0).contains(&dropout) {
        return Err(r.fail(format!("dropout rate {dropout} outside [0,1)")));
    }

    let n_layers = r.u32("layer count")? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(r.fail(format!("implausible layer count {n_layers}")));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for idx in 0..n_layers {
        let act = Activation::from_tag(r.bytes::<1>("activation")?[0])
            .ok_or_else(|| r.fail(format!("unknown activation tag at layer {idx}")))?;
        let out = r.u32("out dim")? as usize;
        let inp = r.u32("in dim")? as usize;
        if out == 0 || inp == 0 {
            return Err(r.fail(format!("zero dimension at layer {idx}")));
        }
        shapes.push((act, out, inp));
    }
    for (idx, pair) in shapes.windows(2).enumerate() {
        if pair[0].1 != pair[1].2 {
            return Err(r.fail(format!(
                "shape table inconsistent: layer {idx} outputs {} but layer {} expects {}",
                pair[0].1,
                idx + 1,
                pair[1].2
            )));
        }
    }

    let mut layers = Vec::with_capacity(n_layers);
    for (idx, &(act, out, inp)) in shapes.iter().enumerate() {
        let mut weights = Vec::with_capacity(out * inp);
        for _ in 0..out * inp {
            weights.push(r.f64("weights")?);
        }
        let mut bias = Vec::with_capacity(out);
        for _ in 0..out {
            bias.push(r.f64("bias")?);
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(r.fail(format!("non-finite parameter at layer {idx}")));
        }
        layers.push(
            DenseLayer::new(
                Tensor::matrix(out, inp, weights).expect("consistent by construction"),
                Tensor::vector(bias),
                act,
            )
            .expect("validated shapes"),
        );
    }

    let mut trailing = [0u8; 1];
    if r.file.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(r.fail("trailing bytes after parameter payload"));
    }

    let model = MlpModel::from_layers(layers, dropout)
        .map_err(|e| r.fail(format!("invalid model: {e}")))?;
    Ok(Checkpoint { kind, meta, model })
}
