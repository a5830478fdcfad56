//! Checkpoint file format.
//!
//! Layout: 8 magic bytes `SEGF0001`, a little-endian u64 header length, a
//! JSON header listing every buffer (name, shape, role) plus run metadata,
//! then the raw scalar buffers concatenated little-endian in header order.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::{AdamHyper, AdamState, Params};
use crate::num::{Dtype, Real};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SEGF0001";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BufferEntry {
    name: String,
    shape: Vec<usize>,
    role: String, // "param" | "adam_m" | "adam_v"
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    dtype: String,
    train_step: u64,
    seed: u64,
    adam_step: u64,
    adam: AdamHyper,
    entries: Vec<BufferEntry>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Run metadata stored alongside the parameter buffers.
#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub train_step: u64,
    pub seed: u64,
    pub adam: AdamHyper,
    pub extra: serde_json::Value,
}

#[derive(Debug)]
pub enum CheckpointError {
    Io(std::io::Error),
    BadMagic,
    BadHeader(String),
    DtypeMismatch { file: String, expected: String },
    Truncated { need: usize, have: usize },
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io(e) => write!(f, "checkpoint io: {e}"),
            CheckpointError::BadMagic => write!(f, "not a checkpoint: bad magic bytes"),
            CheckpointError::BadHeader(m) => write!(f, "bad checkpoint header: {m}"),
            CheckpointError::DtypeMismatch { file, expected } => {
                write!(f, "checkpoint dtype {file} does not match expected {expected}")
            }
            CheckpointError::Truncated { need, have } => {
                write!(f, "checkpoint truncated: need {need} bytes, have {have}")
            }
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<std::io::Error> for CheckpointError {
    fn from(e: std::io::Error) -> Self {
        CheckpointError::Io(e)
    }
}

pub fn save_checkpoint<F: Real>(
    path: &Path,
    params: &Params<F>,
    adam: Option<&AdamState<F>>,
    meta: &CheckpointMeta,
) -> Result<(), CheckpointError> {
    let mut entries = Vec::new();
    for (name, value) in params.iter() {
        entries.push(BufferEntry {
            name: name.to_string(),
            shape: value.shape().to_vec(),
            role: "param".to_string(),
        });
    }
    if let Some(state) = adam {
        for (role, bufs) in [("adam_m", &state.m), ("adam_v", &state.v)] {
            for ((name, _), buf) in params.iter().zip(bufs.iter()) {
                entries.push(BufferEntry {
                    name: name.to_string(),
                    shape: buf.shape().to_vec(),
                    role: role.to_string(),
                });
            }
        }
    }
    let header = Header {
        dtype: F::DTYPE.name().to_string(),
        train_step: meta.train_step,
        seed: meta.seed,
        adam_step: adam.map(|s| s.step).unwrap_or(0),
        adam: meta.adam,
        entries,
        extra: meta.extra.clone(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| CheckpointError::BadHeader(e.to_string()))?;

    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_all(CHECKPOINT_MAGIC)?;
    writer.write_all(&(header_json.len() as u64).to_le_bytes())?;
    writer.write_all(&header_json)?;

    let mut buf = Vec::new();
    let write_arr = |arr: &ArrayD<F>, buf: &mut Vec<u8>| {
        buf.clear();
        buf.reserve(arr.len() * F::DTYPE.size_bytes());
        for &x in arr.as_standard_layout().iter() {
            x.write_le(buf);
        }
    };
    for (_, value) in params.iter() {
        write_arr(value, &mut buf);
        writer.write_all(&buf)?;
    }
    if let Some(state) = adam {
        for bufs in [&state.m, &state.v] {
            for arr in bufs.iter() {
                write_arr(arr, &mut buf);
                writer.write_all(&buf)?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn load_checkpoint<F: Real>(
    path: &Path,
) -> Result<(Params<F>, Option<AdamState<F>>, CheckpointMeta), CheckpointError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len_bytes = [0u8; 8];
    reader.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    reader.read_exact(&mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
    let file_dtype = Dtype::from_name(&header.dtype)
        .ok_or_else(|| CheckpointError::BadHeader(format!("unknown dtype {}", header.dtype)))?;
    if file_dtype != F::DTYPE {
        return Err(CheckpointError::DtypeMismatch {
            file: header.dtype.clone(),
            expected: F::DTYPE.name().to_string(),
        });
    }

    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    let scalar = F::DTYPE.size_bytes();
    let need: usize = header
        .entries
        .iter()
        .map(|e| e.shape.iter().product::<usize>() * scalar)
        .sum();
    if rest.len() < need {
        return Err(CheckpointError::Truncated {
            need,
            have: rest.len(),
        });
    }

    let mut offset = 0usize;
    let read_arr = |shape: &[usize], offset: &mut usize| {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            data.push(F::read_le(&rest[*offset + i * scalar..]));
        }
        *offset += n * scalar;
        ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape/product consistent")
    };

    let mut params = Params::new();
    let mut m = Vec::new();
    let mut v = Vec::new();
    for entry in &header.entries {
        let arr = read_arr(&entry.shape, &mut offset);
        match entry.role.as_str() {
            "param" => {
                params.add(entry.name.clone(), arr);
            }
            "adam_m" => m.push(arr),
            "adam_v" => v.push(arr),
            other => {
                return Err(CheckpointError::BadHeader(format!(
                    "unknown buffer role `{other}`"
                )))
            }
        }
    }
    let adam = if m.is_empty() && v.is_empty() {
        None
    } else {
        if m.len() != params.len() || v.len() != params.len() {
            return Err(CheckpointError::BadHeader(
                "optimizer buffers misaligned with params".to_string(),
            ));
        }
        Some(AdamState {
            step: header.adam_step,
            m,
            v,
        })
    };
    let meta = CheckpointMeta {
        train_step: header.train_step,
        seed: header.seed,
        adam: header.adam,
        extra: header.extra,
    };
    Ok((params, adam, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn round_trip_is_bitwise_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.segf");
        let mut params = Params::<f32>::new();
        params.add("layer.w", arr2(&[[1.0f32, -2.5], [3.25, 0.1]]).into_dyn());
        params.add("layer.b", ndarray::arr1(&[0.5f32, -0.5]).into_dyn());
        let mut state = AdamState::new(&params);
        state.step = 7;
        state.m[0][[0, 1]] = 0.125;
        state.v[1][[0]] = 42.0;
        let meta = CheckpointMeta {
            train_step: 99,
            seed: 1234,
            adam: AdamHyper::default(),
            extra: serde_json::json!({"note": "test"}),
        };
        save_checkpoint(&path, &params, Some(&state), &meta).unwrap();
        let (p2, s2, m2) = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(m2.train_step, 99);
        assert_eq!(m2.seed, 1234);
        let s2 = s2.unwrap();
        assert_eq!(s2.step, 7);
        for (a, b) in params.iter().zip(p2.iter()) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
        }
        assert_eq!(state.m[0], s2.m[0]);
        assert_eq!(state.v[1], s2.v[1]);
        // byte-level: saving again produces identical bytes
        let path2 = dir.path().join("ckpt2.segf");
        save_checkpoint(&path2, &p2, Some(&s2), &m2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn magic_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"NOTMAGIC________").unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&path),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn dtype_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.segf");
        let mut params = Params::<f64>::new();
        params.add("w", ndarray::arr1(&[1.0f64]).into_dyn());
        let meta = CheckpointMeta {
            train_step: 0,
            seed: 0,
            adam: AdamHyper::default(),
            extra: serde_json::Value::Null,
        };
        save_checkpoint(&path, &params, None, &meta).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&path),
            Err(CheckpointError::DtypeMismatch { .. })
        ));
    }
}
