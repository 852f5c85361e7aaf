//! Binary checkpoint format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic     8 bytes  "LEMONCKP"
//! version   u32
//! config    u32 length + UTF-8 JSON of the EncoderConfig
//! seed      u64
//! step      u64      optimizer steps taken so far
//! epochs    u64      completed epochs
//! params    u32 count, then per parameter:
//!             u32 name length, name bytes, u32 rank, u64 extent × rank,
//!             f64 × product(extents) row-major
//! adam      u8 flag; when 1: f64 lr, β1, β2, ε, u64 step, then first and
//!             second moments of every parameter (shapes as above, data only)
//! ```

use std::fs;
use std::path::Path;

use crate::encoder::{DualHelixParams, EncoderConfig};
use crate::tensor::{AdamConfig, AdamState, Tensor};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"LEMONCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: DualHelixParams,
    pub step: u64,
    pub epochs_done: u64,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let cfg = serde_json::to_vec(self.params.config()).expect("config serializes");
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        out.extend_from_slice(&self.params.seed().to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.epochs_done.to_le_bytes());
        out.extend_from_slice(&(self.params.names().len() as u32).to_le_bytes());
        for (name, t) in self.params.names().iter().zip(self.params.tensors()) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            put_f64s(&mut out, t.data());
        }
        match &self.adam {
            None => out.push(0),
            Some(st) => {
                out.push(1);
                let c = st.config;
                put_f64s(&mut out, &[c.learning_rate, c.beta1, c.beta2, c.eps]);
                out.extend_from_slice(&st.step.to_le_bytes());
                for m in st.first_moment.iter().chain(&st.second_moment) {
                    put_f64s(&mut out, m.data());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let cfg_len = r.u32()? as usize;
        let config: EncoderConfig = serde_json::from_slice(r.take(cfg_len)?)
            .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let seed = r.u64()?;
        let step = r.u64()?;
        let epochs_done = r.u64()?;
        let count = r.u32()? as usize;
        let mut parts = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|e| e as usize))
                .collect::<Result<Vec<_>>>()?;
            let data = r.f64s(shape.iter().product())?;
            parts.push((name, Tensor::new(shape, data)?));
        }
        let params = DualHelixParams::from_parts(config, seed, parts)?;
        let adam = match r.take(1)?[0] {
            0 => None,
            1 => {
                let c = r.f64s(4)?;
                let config = AdamConfig {
                    learning_rate: c[0],
                    beta1: c[1],
                    beta2: c[2],
                    eps: c[3],
                };
                let step = r.u64()?;
                let moment = |r: &mut Reader| {
                    params
                        .tensors()
                        .iter()
                        .map(|p| Ok(Tensor::new(p.shape().to_vec(), r.f64s(p.len())?)?))
                        .collect::<Result<Vec<_>>>()
                };
                let first_moment = moment(&mut r)?;
                let second_moment = moment(&mut r)?;
                Some(AdamState {
                    config,
                    step,
                    first_moment,
                    second_moment,
                })
            }
            f => return Err(Error::Checkpoint(format!("bad optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            params,
            step,
            epochs_done,
            adam,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
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
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EncoderConfig {
        EncoderConfig {
            depth: 2,
            hidden: 4,
            ..EncoderConfig::desk()
        }
    }

    #[test]
    fn byte_identical_round_trip() {
        let params = DualHelixParams::init(small(), 9).unwrap();
        let adam = AdamState::new(AdamConfig::default(), params.tensors());
        let ck = Checkpoint {
            params,
            step: 12,
            epochs_done: 3,
            adam: Some(adam),
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_input_rejected() {
        let ck = Checkpoint {
            params: DualHelixParams::init(small(), 1).unwrap(),
            step: 0,
            epochs_done: 0,
            adam: None,
        };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
