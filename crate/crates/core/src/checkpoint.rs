//! Binary model checkpoints.
//!
//! Layout (all integers u64 and all reals f64, little-endian): the magic
//! `DDSLM1`, the four model dimensions, the five model blocks in
//! `TinyLmParams::blocks` order, a head flag byte followed by the head width
//! and `w1, b1, w2, b2`, and a calibration flag byte followed by
//! `s_mean, t0`.

use std::path::Path;

use crate::error::{DdsError, Result};
use crate::head::RegressionHeadParams;
use crate::mapping::MappingCalibration;
use crate::tinylm::{LmDims, TinyLmParams};

const MAGIC: &[u8; 6] = b"DDSLM1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub lm: TinyLmParams,
    pub head: Option<RegressionHeadParams>,
    pub calibration: Option<MappingCalibration>,
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_reals(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(DdsError::Checkpoint(format!("truncated at byte {}", self.pos))),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        usize::try_from(u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .map_err(|_| DdsError::Checkpoint("dimension overflows usize".into()))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| DdsError::Checkpoint("block size overflows".into()))?;
        let b = self.take(len)?;
        Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(DdsError::Checkpoint(format!("bad flag byte {b}"))),
        }
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        let d = self.lm.dims;
        for v in [d.vocab_size, d.embed_dim, d.window, d.hidden_dim] {
            put_u64(&mut out, v);
        }
        for b in self.lm.blocks() {
            put_reals(&mut out, b);
        }
        match &self.head {
            Some(h) => {
                out.push(1);
                put_u64(&mut out, h.dim);
                put_reals(&mut out, &h.w1);
                put_reals(&mut out, &h.b1);
                put_reals(&mut out, &h.w2);
                put_reals(&mut out, &[h.b2]);
            }
            None => out.push(0),
        }
        match &self.calibration {
            Some(c) => {
                out.push(1);
                put_reals(&mut out, &[c.s_mean, c.t0]);
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
            return Err(DdsError::Checkpoint("not a model checkpoint".into()));
        }
        let dims = LmDims {
            vocab_size: r.u64()?,
            embed_dim: r.u64()?,
            window: r.u64()?,
            hidden_dim: r.u64()?,
        };
        dims.validate().map_err(|e| DdsError::Checkpoint(e.to_string()))?;
        let mut lm = TinyLmParams::zeros(dims);
        for block in lm.blocks_mut() {
            let n = block.len();
            *block = r.reals(n)?;
        }
        let head = if r.flag()? {
            let dim = r.u64()?;
            if dim != dims.hidden_dim {
                return Err(DdsError::Checkpoint(format!("head width {dim} does not match hidden size {}", dims.hidden_dim)));
            }
            Some(RegressionHeadParams {
                dim,
                w1: r.reals(dim * dim)?,
                b1: r.reals(dim)?,
                w2: r.reals(dim)?,
                b2: r.reals(1)?[0],
            })
        } else {
            None
        };
        let calibration = if r.flag()? {
            let v = r.reals(2)?;
            Some(MappingCalibration { s_mean: v[0], t0: v[1] })
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(DdsError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { lm, head, calibration })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
