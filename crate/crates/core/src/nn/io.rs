//! Parameter blobs and trace files.
//!
//! A parameter file is `u64 LE header length | JSON header | f32 LE data`. The header
//! holds the model spec and, per array, its shape and byte offset into the data section.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::{Dense, ModelSpec, Params};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    spec: ModelSpec,
    arrays: Vec<ArrayEntry>,
}

pub fn encode_params(spec: &ModelSpec, params: &Params) -> Result<Vec<u8>> {
    params.check_shape(spec)?;
    let mut arrays = Vec::new();
    let mut data: Vec<u8> = Vec::with_capacity(params.num_scalars() * 4);
    for (i, l) in params.layers.iter().enumerate() {
        arrays.push(ArrayEntry { name: format!("layer{i}.w"), shape: vec![l.w.nrows(), l.w.ncols()], offset: data.len() });
        data.extend(l.w.iter().flat_map(|&v| (v as f32).to_le_bytes()));
        arrays.push(ArrayEntry { name: format!("layer{i}.b"), shape: vec![l.b.len()], offset: data.len() });
        data.extend(l.b.iter().flat_map(|&v| (v as f32).to_le_bytes()));
    }
    let header = serde_json::to_vec(&Header { dtype: "f32le".into(), spec: spec.clone(), arrays })?;
    let mut out = Vec::with_capacity(8 + header.len() + data.len());
    out.extend((header.len() as u64).to_le_bytes());
    out.extend(header);
    out.extend(data);
    Ok(out)
}

pub fn decode_params(bytes: &[u8]) -> Result<(ModelSpec, Params)> {
    let bad = |m: &str| Error::config(format!("parameter blob: {m}"));
    if bytes.len() < 8 {
        return Err(bad("truncated"));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let body = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.dtype != "f32le" {
        return Err(bad("unsupported dtype"));
    }
    let data = &bytes[8 + hlen..];
    let read = |entry: &ArrayEntry| -> Result<Vec<f64>> {
        let n: usize = entry.shape.iter().product();
        let raw = data.get(entry.offset..entry.offset + 4 * n).ok_or_else(|| bad("array out of bounds"))?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())
    };
    let mut layers = Vec::new();
    for pair in header.arrays.chunks(2) {
        let [w, b] = pair else { return Err(bad("unpaired array")) };
        if w.shape.len() != 2 || b.shape.len() != 1 {
            return Err(bad("bad array rank"));
        }
        let wv = Array2::from_shape_vec((w.shape[0], w.shape[1]), read(w)?).map_err(|_| bad("bad shape"))?;
        layers.push(Dense { w: wv, b: Array1::from_vec(read(b)?) });
    }
    let params = Params { layers };
    params.check_shape(&header.spec)?;
    Ok((header.spec, params))
}

pub fn write_params(path: &Path, spec: &ModelSpec, params: &Params) -> Result<()> {
    write_atomic(path, &encode_params(spec, params)?)
}

pub fn read_params(path: &Path) -> Result<(ModelSpec, Params)> {
    decode_params(&fs::read(path)?)
}

/// One JSON array of N probabilities per line, one line per epoch.
pub fn encode_trace(trace: &[Vec<f32>]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for row in trace {
        serde_json::to_writer(&mut out, row)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn decode_trace(bytes: &[u8]) -> Result<Vec<Vec<f32>>> {
    bytes
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).map_err(Error::from))
        .collect()
}
