//! Fixed binary checkpoint format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "FGWK" | version u16
//! variant: len u16 + utf8
//! epoch u32 | seed u64 | final_train_loss f32 | final_val_loss f32 | best_val_accuracy f32
//! config snapshot: len u32 + utf8 (the full RunConfig as TOML)
//! param_count u32, then per parameter:
//!   name len u16 + utf8 | ndim u8 | dims u32 each | values f32 each
//! ```
//!
//! Save followed by load reproduces parameters bit for bit.

use crate::config::RunConfig;
use crate::ensemble::VariantId;
use crate::error::{Error, Result};
use crate::model::FgvrModel;
use crate::numerics::Tensor;
use crate::train::model_init_seed;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"FGWK";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub variant: String,
    pub epoch: u32,
    pub seed: u64,
    pub final_train_loss: f32,
    pub final_val_loss: f32,
    pub best_val_accuracy: f32,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub config_text: String,
    pub params: Vec<(String, Vec<usize>, Vec<f32>)>,
}

pub fn save_checkpoint(
    path: &Path,
    meta: &CheckpointMeta,
    config_text: &str,
    params: &[(String, Tensor)],
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());

    let vbytes = meta.variant.as_bytes();
    buf.extend_from_slice(&(vbytes.len() as u16).to_le_bytes());
    buf.extend_from_slice(vbytes);
    buf.extend_from_slice(&meta.epoch.to_le_bytes());
    buf.extend_from_slice(&meta.seed.to_le_bytes());
    buf.extend_from_slice(&meta.final_train_loss.to_le_bytes());
    buf.extend_from_slice(&meta.final_val_loss.to_le_bytes());
    buf.extend_from_slice(&meta.best_val_accuracy.to_le_bytes());

    let cbytes = config_text.as_bytes();
    buf.extend_from_slice(&(cbytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(cbytes);

    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params {
        let nbytes = name.as_bytes();
        buf.extend_from_slice(&(nbytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(nbytes);
        let shape = tensor.shape();
        buf.push(shape.len() as u8);
        for &d in &shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in tensor.to_vec() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => Err(Error::Format(format!("checkpoint: truncated at {field}"))),
        }
    }

    fn u16(&mut self, field: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn f32(&mut self, field: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize, field: &str) -> Result<String> {
        String::from_utf8(self.take(len, field)?.to_vec())
            .map_err(|_| Error::Format(format!("checkpoint: {field}: not utf8")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("checkpoint: magic: not an FGWK file".into()));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "checkpoint: version: expected {VERSION}, got {version}"
        )));
    }
    let vlen = r.u16("variant")? as usize;
    let variant = r.string(vlen, "variant")?;
    let meta = CheckpointMeta {
        variant,
        epoch: r.u32("epoch")?,
        seed: r.u64("seed")?,
        final_train_loss: r.f32("final_train_loss")?,
        final_val_loss: r.f32("final_val_loss")?,
        best_val_accuracy: r.f32("best_val_accuracy")?,
    };
    let clen = r.u32("config")? as usize;
    let config_text = r.string(clen, "config")?;

    let count = r.u32("param_count")? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = r.u16("param name")? as usize;
        let name = r.string(nlen, "param name")?;
        let ndim = r.take(1, "ndim")?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("dim")? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(r.f32("param data")?);
        }
        params.push((name, shape, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "checkpoint: trailing bytes after parameters ({} extra)",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        meta,
        config_text,
        params,
    })
}

impl Checkpoint {
    pub fn run_config(&self) -> Result<RunConfig> {
        RunConfig::from_str(&self.config_text)
    }

    pub fn variant(&self) -> Result<VariantId> {
        VariantId::parse(&self.meta.variant)
    }

    /// Rebuilds the model this checkpoint was saved from and loads every
    /// parameter bit-exactly.
    pub fn build_model(&self) -> Result<FgvrModel> {
        let config = self.run_config()?;
        let variant = self.variant()?;
        let resolved = config.resolve(variant)?;
        let model = FgvrModel::init(
            resolved.model,
            model_init_seed(self.meta.seed, variant),
        )?;
        let live = model.params();
        if live.len() != self.params.len() {
            return Err(Error::Format(format!(
                "checkpoint: param_count: model has {}, file has {}",
                live.len(),
                self.params.len()
            )));
        }
        for ((live_name, tensor), (name, shape, data)) in live.iter().zip(&self.params) {
            if live_name != name {
                return Err(Error::Format(format!(
                    "checkpoint: parameter order: expected {live_name}, found {name}"
                )));
            }
            if &tensor.shape() != shape {
                return Err(Error::Format(format!(
                    "checkpoint: {name}: shape {:?} does not match model {:?}",
                    shape,
                    tensor.shape()
                )));
            }
            tensor.set_data(data)?;
        }
        Ok(model)
    }
}
