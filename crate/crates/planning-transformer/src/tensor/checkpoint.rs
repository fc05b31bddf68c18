//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"PTCK"
//! version  u32            (currently 1)
//! dtype    u8             element width in bytes: 4 (f32) or 8 (f64)
//! count    u32            number of tensors
//! per tensor:
//!   name_len u32, name utf-8 bytes,
//!   rank u32, dims u64 x rank,
//!   payload  raw little-endian floats (row-major)
//! trailer  UTF-8 JSON configuration blob, to end of file
//! ```

use super::{Float, Tensor};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"PTCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on checkpoint: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint float width {found} does not match this build ({expected})")]
    DtypeMismatch { found: u8, expected: u8 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

pub fn save<P: AsRef<Path>>(
    path: P,
    tensors: &[(&str, &Tensor)],
    config_json: &str,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[std::mem::size_of::<Float>() as u8])?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.write_all(config_json.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load<P: AsRef<Path>>(path: P) -> Result<(Vec<(String, Tensor)>, String), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype)?;
    let expected = std::mem::size_of::<Float>() as u8;
    if dtype[0] != expected {
        return Err(CheckpointError::DtypeMismatch {
            found: dtype[0],
            expected,
        });
    }
    let count = read_u32(&mut r)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|e| CheckpointError::Corrupt(format!("tensor name not utf-8: {e}")))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; std::mem::size_of::<Float>()];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            data.push(Float::from_le_bytes(buf));
        }
        let t = Tensor::new(shape, data)
            .map_err(|e| CheckpointError::Corrupt(format!("tensor `{name}`: {e}")))?;
        tensors.push((name, t));
    }
    let mut config_json = String::new();
    r.read_to_string(&mut config_json)?;
    Ok((tensors, config_json))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_tensors_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ptck");
        let a = Tensor::from_rows(&[vec![1.0, 2.5], vec![-3.0, 0.0]]);
        let b = Tensor::from_vec(vec![0.125, -0.25, 7.0]);
        save(&path, &[("w", &a), ("bias", &b)], r#"{"d_model":8}"#).unwrap();
        let (tensors, cfg) = load(&path).unwrap();
        assert_eq!(tensors.len(), 2);
        assert_eq!(tensors[0].0, "w");
        assert_eq!(tensors[0].1, a);
        assert_eq!(tensors[1].0, "bias");
        assert_eq!(tensors[1].1, b);
        assert_eq!(cfg, r#"{"d_model":8}"#);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ptck");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(load(&path), Err(CheckpointError::BadMagic)));
    }
}
