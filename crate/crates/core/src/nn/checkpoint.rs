//! Flat binary checkpoints: named tensors, f32 little-endian payload.

use super::param::{export_params, import_params, Params};
use crate::error::{Error, Result};
use ndarray::{ArrayD, IxDyn};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"TRWLCKPT";

pub fn save_checkpoint(path: &Path, model: &mut dyn Params) -> Result<()> {
    let mut tensors = export_params(model);
    tensors.sort_by(|a, b| a.0.cmp(&b.0));
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<HashMap<String, ArrayD<f64>>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let fail = |what: &str| Error::Data(format!("{}: {what}", path.display()));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(fail("not a checkpoint file"));
    }
    let mut off = 8usize;
    let take_u32 = |off: &mut usize| -> Result<u32> {
        if *off + 4 > bytes.len() {
            return Err(fail("truncated checkpoint"));
        }
        let v = u32::from_le_bytes(bytes[*off..*off + 4].try_into().unwrap());
        *off += 4;
        Ok(v)
    };
    let count = take_u32(&mut off)? as usize;
    let mut out = HashMap::new();
    for _ in 0..count {
        let name_len = take_u32(&mut off)? as usize;
        if off + name_len > bytes.len() {
            return Err(fail("truncated checkpoint"));
        }
        let name = String::from_utf8(bytes[off..off + name_len].to_vec())
            .map_err(|_| fail("tensor name is not utf-8"))?;
        off += name_len;
        let ndim = take_u32(&mut off)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(take_u32(&mut off)? as usize);
        }
        let n: usize = shape.iter().product();
        if off + 4 * n > bytes.len() {
            return Err(fail("truncated checkpoint"));
        }
        let mut data = Vec::with_capacity(n);
        for k in 0..n {
            let v = f32::from_le_bytes(bytes[off + 4 * k..off + 4 * k + 4].try_into().unwrap());
            data.push(v as f64);
        }
        off += 4 * n;
        let arr = ArrayD::from_shape_vec(IxDyn(&shape), data)
            .map_err(|_| fail("tensor shape/data mismatch"))?;
        out.insert(name, arr);
    }
    Ok(out)
}

pub fn load_checkpoint(path: &Path, model: &mut dyn Params) -> Result<usize> {
    let tensors = read_checkpoint(path)?;
    import_params(model, &tensors, true)
}
