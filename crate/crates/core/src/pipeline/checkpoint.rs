//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"CRVAE"            magic
//! u32                 format version
//! u64 + bytes         JSON header: config, dims, phase, scaler, loss history
//! u32                 tensor count
//! per tensor:
//!   u32 + bytes       UTF-8 name
//!   u32               rank
//!   u64 * rank        extents
//!   f64 * product     row-major values
//! ```
//!
//! The prune mask is stored as the tensor `mask` with entries 0 or 1.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::train::{EpochRecord, Phase};
use crate::datagen::Scaler;
use crate::numcore::Tensor;
use crate::recnet::{CrvaeModel, ModelDims};
use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"CRVAE";
pub const FORMAT_VERSION: u32 = 1;
const MASK: &str = "mask";

/// Everything persisted about a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: CrvaeModel,
    pub phase: Phase,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    dims: ModelDims,
    phase: Phase,
    scaler: Option<Scaler>,
    history: Vec<EpochRecord>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.shape().len() as u32);
    for &d in t.shape() {
        put_u64(out, d as u64);
    }
    for &x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.clone(),
            dims: *self.model.dims(),
            phase: self.phase,
            scaler: self.model.scaler().cloned(),
            history: self.history.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Malformed(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u64(&mut out, json.len() as u64);
        out.extend_from_slice(&json);
        let params = self.model.params();
        put_u32(&mut out, params.len() as u32 + 1);
        for (_, p) in params.iter() {
            put_tensor(&mut out, &p.name, &p.value);
        }
        let m = self.model.dims().series;
        let mask: Vec<f64> = self.model.mask().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        put_tensor(&mut out, MASK, &Tensor::matrix(m, m, mask)?);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Malformed(String::from("missing CRVAE magic")));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let hlen = r.len_u64()?;
        let header: Header =
            serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::Malformed(format!("header: {e}")))?;
        let mut model = CrvaeModel::new(header.dims, 0)
            .map_err(|e| Error::Malformed(format!("dims: {e}")))?;
        let count = r.u32()? as usize;
        let mut seen = alloc::vec![false; model.params().len()];
        let mut mask = None;
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = core::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::Malformed(String::from("tensor name is not UTF-8")))?
                .to_string();
            let rank = r.u32()? as usize;
            if rank == 0 || rank > 8 {
                return Err(Error::Malformed(format!("tensor {name}: rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.len_u64()?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Malformed(format!("tensor {name}: extents overflow")))?;
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| Error::Malformed(String::from("size overflow")))?)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(&shape, data).map_err(|e| Error::Malformed(format!("tensor {name}: {e}")))?;
            if name == MASK {
                mask = Some(t);
                continue;
            }
            let id = model
                .params()
                .find(&name)
                .ok_or_else(|| Error::Malformed(format!("unknown tensor {name}")))?;
            let slot = model.params_mut().get_mut(id);
            if slot.shape() != t.shape() {
                return Err(Error::Malformed(format!(
                    "tensor {name}: shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
            seen[id.0] = true;
        }
        if r.pos != bytes.len() {
            return Err(Error::Malformed(String::from("trailing bytes after last tensor")));
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            let name = &model.params().iter().nth(i).expect("in range").1.name;
            return Err(Error::Malformed(format!("missing tensor {name}")));
        }
        let mask = mask.ok_or_else(|| Error::Malformed(String::from("missing mask")))?;
        let m = header.dims.series;
        if mask.numel() != m * m {
            return Err(Error::Malformed(String::from("mask has the wrong size")));
        }
        model.set_mask(mask.data().iter().map(|&x| x != 0.0).collect())?;
        model.set_scaler(header.scaler);
        Ok(Checkpoint {
            config: header.config,
            model,
            phase: header.phase,
            history: header.history,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Malformed(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn len_u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Malformed(format!("length {v} does not fit in memory")))
    }
}
