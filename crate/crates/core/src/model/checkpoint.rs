//! Checkpoint layout:
//!
//! ```text
//! b"MDCLCKPT"            8 bytes
//! header length          u64, little endian
//! header                 UTF-8 JSON: model config + [{name, rows, cols}]
//! values                 every tensor's f64s, little endian, row-major,
//!                        in header order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, SpModel};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const MAGIC: &[u8; 8] = b"MDCLCKPT";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

pub fn save_checkpoint(model: &SpModel, path: impl AsRef<Path>) -> Result<()> {
    let header = Header {
        config: model.config().clone(),
        tensors: model
            .params()
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for p in model.params() {
        for v in p.value.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SpModel> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len =
        usize::try_from(u64::from_le_bytes(len)).map_err(|_| Error::Checkpoint("header length overflows".into()))?;
    let mut header = vec![0u8; len];
    input.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;

    let mut model = SpModel::new(header.config)?;
    if header.tensors.len() != model.params().len() {
        return Err(Error::Checkpoint(format!(
            "header lists {} tensors, model has {}",
            header.tensors.len(),
            model.params().len()
        )));
    }
    let mut values = Vec::with_capacity(header.tensors.len());
    for (entry, param) in header.tensors.iter().zip(model.params()) {
        if entry.name != param.name || (entry.rows, entry.cols) != param.value.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {} ({}x{}) does not match model tensor {} {:?}",
                entry.name,
                entry.rows,
                entry.cols,
                param.name,
                param.value.shape()
            )));
        }
        let mut data = Vec::with_capacity(entry.rows * entry.cols);
        let mut buf = [0u8; 8];
        for _ in 0..entry.rows * entry.cols {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        values.push(Matrix::from_vec(entry.rows, entry.cols, data)?);
    }
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Checkpoint("trailing bytes after tensor data".into()));
    }
    model.set_values(values)?;
    Ok(model)
}
