//! Binary container of named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "GIGTENS\n"
//! version  u32
//! count    u64
//! entries  count x { name_len u32, name utf-8, rank u32, dims u64 x rank, values f64 x prod(dims) }
//! ```

use std::io::{Read, Write};

use super::{Tensor, TensorError};

pub const CONTAINER_MAGIC: &[u8; 8] = b"GIGTENS\n";
pub const CONTAINER_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> TensorError {
    TensorError::Container(e.to_string())
}

pub fn write_container<W: Write>(mut w: W, entries: &[(String, Tensor)]) -> Result<(), TensorError> {
    w.write_all(CONTAINER_MAGIC).map_err(io_err)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(entries.len() as u64).to_le_bytes()).map_err(io_err)?;
    for (name, t) in entries {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(bytes).map_err(io_err)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes()).map_err(io_err)?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io_err)?;
        }
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TensorError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, TensorError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_container<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>, TensorError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CONTAINER_MAGIC {
        return Err(TensorError::Container("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CONTAINER_VERSION {
        return Err(TensorError::Container(format!(
            "unsupported version {version}"
        )));
    }
    let count = read_u64(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|e| TensorError::Container(e.to_string()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw).map_err(io_err)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}
