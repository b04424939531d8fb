//! Versioned binary checkpoints: a JSON header (config + seed) followed
//! by named parameter tensors as little-endian f64s. Writing the same
//! parameters twice produces byte-identical files.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::PositionalKind;
use crate::error::{Error, Result};
use crate::model::{FusionStrategy, ModelConfig, ModelParams, Param, Propagation};

const MAGIC: &[u8; 8] = b"SEQLRECC";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    d: usize,
    layers: usize,
    max_order: usize,
    n_users: usize,
    n_items: usize,
    fusion: String,
    positional: String,
    propagation: String,
    seed: u64,
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, seed: u64) -> Result<()> {
    let cfg = &params.cfg;
    let header = Header {
        version: VERSION,
        d: cfg.d,
        layers: cfg.layers,
        max_order: cfg.max_order,
        n_users: cfg.n_users,
        n_items: cfg.n_items,
        fusion: cfg.fusion.as_str().to_string(),
        positional: cfg.positional.as_str().to_string(),
        propagation: cfg.propagation.as_str().to_string(),
        seed,
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");

    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header_json);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params.iter() {
        buf.extend_from_slice(&(p.name.len() as u64).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.extend_from_slice(&(p.shape.len() as u64).to_le_bytes());
        for &d in &p.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &p.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Data(format!(
                "truncated checkpoint {}",
                self.path.display()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        let bytes = self.take(8)?;
        Ok(u64::from_le_bytes(bytes.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, u64)> {
    let mut raw = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &raw, pos: 0, path };

    if r.take(8)? != MAGIC {
        return Err(Error::Data(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let header_len = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::Data(format!("bad checkpoint header: {e}")))?;
    if header.version != VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    let cfg = ModelConfig {
        d: header.d,
        layers: header.layers,
        max_order: header.max_order,
        n_users: header.n_users,
        n_items: header.n_items,
        fusion: FusionStrategy::parse(&header.fusion)?,
        positional: PositionalKind::parse(&header.positional)?,
        propagation: Propagation::parse(&header.propagation)?,
    };

    let n_params = r.u64()? as usize;
    let mut parts = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name_len = r.u64()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Data("non-utf8 parameter name".into()))?;
        let ndim = r.u64()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let bytes = r.take(numel * 8)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        parts.push(Param { name, shape, values });
    }
    Ok((ModelParams::from_parts(cfg, parts)?, header.seed))
}
