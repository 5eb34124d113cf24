//! Binary parameter files.
//!
//! Layout, all integers little-endian `u32`:
//! `"DQNAV"`, version, tensor count, then per tensor: name length, UTF-8 name,
//! rank, dims, and `f32` little-endian payload.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::{NetworkParams, NnError, ParamTensor, Result};

pub const MAGIC: &[u8; 5] = b"DQNAV";
pub const FORMAT_VERSION: u32 = 1;

const MAX_NAME_LEN: usize = 4096;
const MAX_RANK: usize = 8;

pub fn write_params<W: Write>(mut w: W, tensors: &[ParamTensor<f32>]) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(t.data.len() * 4);
        for v in &t.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&payload)?;
    }
    w.flush()
}

fn truncated(e: io::Error) -> NnError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        NnError::Format("file is truncated".into())
    } else {
        NnError::Io(e)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_params<R: Read>(mut r: R) -> Result<Vec<ParamTensor<f32>>> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(NnError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > MAX_NAME_LEN {
            return Err(NnError::Format(format!("tensor name length {name_len} too large")));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| NnError::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > MAX_RANK {
            return Err(NnError::Format(format!("tensor {name} has rank {rank}")));
        }
        let shape = (0..rank).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4).map(|_| n))
            .ok_or_else(|| NnError::Format(format!("tensor {name} shape {shape:?} overflows")))?;
        let mut payload = Vec::new();
        (&mut r).take(len as u64 * 4).read_to_end(&mut payload)?;
        if payload.len() != len * 4 {
            return Err(NnError::Format("file is truncated".into()));
        }
        let data = payload.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        tensors.push(ParamTensor { name, shape, data });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(NnError::Format("trailing bytes after last tensor".into()));
    }
    Ok(tensors)
}

pub fn save_params(params: &NetworkParams<f32>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_params(&mut buf, params.tensors())?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<NetworkParams<f32>> {
    let bytes = fs::read(path)?;
    NetworkParams::new(read_params(bytes.as_slice())?)
}
