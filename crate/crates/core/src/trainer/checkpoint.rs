//! Binary checkpoint format.
//!
//! ```text
//! "MNEC"            4 bytes
//! version           u16
//! config length     u32, then that many bytes of JSON (TrainConfig)
//! input dim         u32
//! embedding dim     u32
//! diff dim          u32
//! encoder kind      u8   (0 identity, 1 mlp)
//! hidden dim        u32
//! rounds            u32
//! classes           u32
//! parameters        f64 blocks in ModelParams::blocks order
//! ```
//!
//! All integers and floats are little-endian. Nothing may follow the last block.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::model::{Encoder, EncoderKind, ModelParams};
use super::TrainConfig;
use crate::asa::AsaParams;
use crate::error::{MneError, Result};
use crate::losses::Classifier;
use crate::numeric::{AffineMap, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MNEC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, params: ModelParams) -> Self {
        Checkpoint { config, params }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let p = &self.params;
        let json = serde_json::to_vec(&self.config).map_err(std::io::Error::other)?;
        let diff_dim = p.asa.first().map_or(p.dim(), AsaParams::diff_dim);
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&u32_of(json.len())?.to_le_bytes());
        out.extend_from_slice(&json);
        for v in [p.encoder.in_dim(), p.dim(), diff_dim] {
            out.extend_from_slice(&u32_of(v)?.to_le_bytes());
        }
        out.push(match p.encoder.kind() {
            EncoderKind::Identity => 0,
            EncoderKind::Mlp => 1,
        });
        for v in [
            p.encoder.hidden_dim(),
            p.depth(),
            p.classifier.num_classes(),
        ] {
            out.extend_from_slice(&u32_of(v)?.to_le_bytes());
        }
        for block in p.blocks() {
            for x in block {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(MneError::format(0, "bad magic, expected \"MNEC\""));
        }
        let at = r.pos;
        let version = u16::from_le_bytes(r.array()?);
        if version != CHECKPOINT_VERSION {
            return Err(MneError::format(
                at as u64,
                format!("unsupported version {version}"),
            ));
        }
        let len = r.u32()? as usize;
        let at = r.pos;
        let config: TrainConfig = serde_json::from_slice(r.take(len)?)
            .map_err(|e| MneError::format(at as u64, format!("config: {e}")))?;
        let in_dim = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let diff_dim = r.u32()? as usize;
        let at = r.pos;
        let kind = match r.take(1)?[0] {
            0 => EncoderKind::Identity,
            1 => EncoderKind::Mlp,
            k => {
                return Err(MneError::format(
                    at as u64,
                    format!("unknown encoder kind {k}"),
                ))
            }
        };
        let hidden = r.u32()? as usize;
        let rounds = r.u32()? as usize;
        let at = r.pos;
        let classes = r.u32()? as usize;

        let encoder = match kind {
            EncoderKind::Identity => {
                if in_dim != dim {
                    return Err(MneError::format(
                        at as u64,
                        "identity encoder with differing dimensions",
                    ));
                }
                Encoder::identity(dim)
            }
            EncoderKind::Mlp => Encoder::Mlp {
                hidden: AffineMap::zeros(hidden, in_dim),
                output: AffineMap::zeros(dim, hidden),
            },
        };
        let classifier = Classifier::new(Matrix::zeros(classes, dim))
            .map_err(|e| MneError::format(at as u64, e.to_string()))?;
        let mut params = ModelParams {
            encoder,
            asa: (0..rounds)
                .map(|_| AsaParams::zeros(dim, diff_dim))
                .collect(),
            classifier,
        };
        let expected: usize = params.block_sizes().iter().sum::<usize>() * 8;
        if r.remaining() != expected {
            return Err(MneError::format(
                r.pos as u64,
                format!(
                    "expected {expected} bytes of parameters, found {}",
                    r.remaining()
                ),
            ));
        }
        for block in params.blocks_mut() {
            for x in block.iter_mut() {
                let at = r.pos;
                let v = f64::from_le_bytes(r.array()?);
                if !v.is_finite() {
                    return Err(MneError::format(at as u64, "non-finite parameter"));
                }
                *x = v;
            }
        }
        Ok(Checkpoint { config, params })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }

    /// Loads and checks that the embedding dimension is `dim`.
    pub fn load_expecting(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let c = Checkpoint::load(path)?;
        if c.params.dim() != dim {
            return Err(MneError::shape(format!(
                "checkpoint embedding dimension: expected {dim}, found {}",
                c.params.dim()
            )));
        }
        Ok(c)
    }
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| MneError::shape(format!("{v} does not fit in 32 bits")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(MneError::format(
                self.pos as u64,
                format!("truncated: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}
