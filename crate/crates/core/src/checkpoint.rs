//! Versioned binary checkpoint: a magic tag, a format version, a JSON header
//! (model kind, config echo, array names and shapes, optimizer step, run
//! metadata) and little-endian `f64` payloads for weights and, optionally,
//! Adam moments.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MatteError, Result};
use crate::nn::{AdamState, ParamStore};

const MAGIC: &[u8; 8] = b"MGMATTE\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Prn,
    Color,
}

#[derive(Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: ModelKind,
    model_config: serde_json::Value,
    arrays: Vec<ArrayHeader>,
    optimizer_step: Option<u64>,
    meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub model_config: serde_json::Value,
    pub params: ParamStore,
    pub optimizer: Option<AdamState>,
    /// Free-form run metadata (training config echo, iteration, RNG state).
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            kind: self.kind,
            model_config: self.model_config.clone(),
            arrays: self
                .params
                .entries()
                .iter()
                .map(|e| ArrayHeader {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                })
                .collect(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(json.len() + 8 * self.params.num_scalars() * 3 + 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        for e in self.params.entries() {
            put(&e.data);
        }
        if let Some(opt) = &self.optimizer {
            for m in &opt.m {
                put(m);
            }
            for v in &opt.v {
                put(v);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| MatteError::Checkpoint(msg.to_string());
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b).map_err(|_| bad("truncated header"))?;
        let version = u32::from_le_bytes(u32b);
        if version != CHECKPOINT_VERSION {
            return Err(MatteError::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b).map_err(|_| bad("truncated header"))?;
        let len = u64::from_le_bytes(u64b) as usize;
        if r.len() < len {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&r[..len]).map_err(|e| MatteError::Checkpoint(format!("header: {e}")))?;
        r = &r[len..];
        let mut take = |n: usize| -> Result<Vec<f64>> {
            if r.len() < 8 * n {
                return Err(bad("truncated weight payload"));
            }
            let (head, rest) = r.split_at(8 * n);
            r = rest;
            Ok(head
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let mut params = ParamStore::new();
        for a in &header.arrays {
            let n = a.shape.iter().product();
            params.add(a.name.clone(), a.shape.clone(), take(n)?);
        }
        let optimizer = match header.optimizer_step {
            Some(step) => {
                let sizes: Vec<usize> = header.arrays.iter().map(|a| a.shape.iter().product()).collect();
                let m = sizes.iter().map(|&n| take(n)).collect::<Result<Vec<_>>>()?;
                let v = sizes.iter().map(|&n| take(n)).collect::<Result<Vec<_>>>()?;
                Some(AdamState { step, m, v })
            }
            None => None,
        };
        if !r.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            kind: header.kind,
            model_config: header.model_config,
            params,
            optimizer,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            fs::read(path).map_err(|e| MatteError::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
