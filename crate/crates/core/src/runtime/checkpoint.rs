//! Checkpoint files:
//!
//! ```text
//! "RWKVASR1" | u32 LE header length | UTF-8 header | tensor payloads
//! ```
//!
//! The header holds `version=…`, the model configuration as `key=value` lines,
//! then one `tensor <name> <dtype> <d0>x<d1>…` line per parameter in store
//! order. Payloads are little-endian, row-major, in declaration order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{DType, Scalar, Tensor};
use crate::rng::run_rng;
use crate::runtime::config::ModelConfig;
use crate::runtime::model::Model;

pub const MAGIC: &[u8; 8] = b"RWKVASR1";
pub const FORMAT_VERSION: u32 = 1;

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn checkpoint_bytes<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let mut header = format!("version={FORMAT_VERSION}\n");
    header.push_str(&model.config.to_text());
    for p in model.store.iter() {
        let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(header, "tensor {} {} {}", p.name, T::DTYPE.name(), dims.join("x"));
    }
    let mut out = Vec::with_capacity(12 + header.len() + model.store.num_scalars() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for p in model.store.iter() {
        for &x in p.value.data() {
            x.write_le(&mut out);
        }
    }
    out
}

struct Decl {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
}

fn parse_decl(line: &str) -> Result<Decl> {
    let parts: Vec<&str> = line.split(' ').collect();
    let [_, name, dtype, dims] = parts[..] else {
        return Err(ckpt_err(format!("malformed tensor line {line:?}")));
    };
    let dtype = DType::parse(dtype).ok_or_else(|| ckpt_err(format!("unknown dtype {dtype}")))?;
    let shape = if dims.is_empty() {
        Vec::new()
    } else {
        dims.split('x')
            .map(|d| d.parse().map_err(|_| ckpt_err(format!("bad shape {dims:?}"))))
            .collect::<Result<Vec<usize>>>()?
    };
    Ok(Decl {
        name: name.to_string(),
        dtype,
        shape,
    })
}

fn read_values<T: Scalar, S: Scalar>(bytes: &[u8]) -> Vec<T> {
    bytes
        .chunks_exact(S::DTYPE.size())
        .map(|c| T::from_f64c(S::read_le(c).to_f64().expect("float")))
        .collect()
}

/// Parses a checkpoint; stored tensors are converted to `T` if needed.
pub fn checkpoint_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Model<T>> {
    if bytes.len() < 12 {
        return Err(ckpt_err("truncated: missing magic or header length"));
    }
    if &bytes[..8] != MAGIC {
        return Err(ckpt_err("bad magic"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let header = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| ckpt_err("truncated header"))?;
    let header = std::str::from_utf8(header).map_err(|_| ckpt_err("header is not UTF-8"))?;

    let mut version = None;
    let mut config = ModelConfig::default();
    let mut decls = Vec::new();
    for line in header.lines().filter(|l| !l.is_empty()) {
        if line.starts_with("tensor ") {
            decls.push(parse_decl(line)?);
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ckpt_err(format!("malformed header line {line:?}")))?;
        if k == "version" {
            version = Some(v.parse::<u32>().map_err(|_| ckpt_err("bad version"))?);
        } else if !config.set(k, v).map_err(|e| ckpt_err(e.to_string()))? {
            return Err(ckpt_err(format!("unknown header key {k}")));
        }
    }
    match version {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(ckpt_err(format!("version mismatch: file {v}, supported {FORMAT_VERSION}"))),
        None => return Err(ckpt_err("missing version")),
    }
    config.validate().map_err(|e| ckpt_err(e.to_string()))?;

    let mut model = Model::<T>::new(config, &mut run_rng(0))?;
    if decls.len() != model.store.len() {
        return Err(ckpt_err(format!(
            "tensor table lists {} tensors, configuration needs {}",
            decls.len(),
            model.store.len()
        )));
    }
    let mut pos = 12 + header_len;
    let ids: Vec<_> = model.store.ids().collect();
    for (decl, id) in decls.iter().zip(ids) {
        let expected = &model.store.iter().nth(id.index()).expect("id in range").name;
        if &decl.name != expected {
            return Err(ckpt_err(format!("unexpected tensor {} (expected {expected})", decl.name)));
        }
        if decl.shape != model.store.get(id).shape() {
            return Err(ckpt_err(format!(
                "tensor {} has shape {:?}, configuration needs {:?}",
                decl.name,
                decl.shape,
                model.store.get(id).shape()
            )));
        }
        let n: usize = decl.shape.iter().product();
        let len = n * decl.dtype.size();
        let payload = bytes
            .get(pos..pos + len)
            .ok_or_else(|| ckpt_err(format!("truncated payload in tensor {}", decl.name)))?;
        pos += len;
        let data = match decl.dtype {
            DType::F32 => read_values::<T, f32>(payload),
            DType::F64 => read_values::<T, f64>(payload),
        };
        model.store.set(id, Tensor::new(decl.shape.clone(), data)?)?;
    }
    if pos != bytes.len() {
        return Err(ckpt_err(format!("{} trailing bytes after payload", bytes.len() - pos)));
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>> {
    checkpoint_from_bytes(&fs::read(path)?)
}
