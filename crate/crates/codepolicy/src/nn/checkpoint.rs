//! Checkpoint files: a flat container of named f32 tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"CPK1"
//! u32    tensor count
//! repeat per tensor:
//!   u32        name length, then that many UTF-8 bytes
//!   u32        ndim, then ndim x u32 dims
//!   f32 x n    row-major data (n = product of dims)
//! ```
//!
//! Every parameter stores its value plus `.__ema`, `.__m`, `.__v` companions
//! and the optimizer step under `__step`, so save/load round-trips the full
//! training state bit-exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::optim::ParamSet;
use super::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CPK1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint is missing tensor {0}")]
    Missing(String),
}

pub fn write_tensors<W: Write>(
    w: &mut W,
    tensors: &[(String, &Tensor)],
) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_tensors<R: Read>(r: &mut R) -> Result<BTreeMap<String, Tensor>, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let count = read_u32(r)? as usize;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| CheckpointError::Malformed("non-utf8 tensor name".into()))?;
        let ndim = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = vec![0f32; n];
        let mut buf = [0u8; 4];
        for v in &mut data {
            r.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        out.insert(name, Tensor::new(shape, data));
    }
    Ok(out)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn save_params(path: &Path, ps: &ParamSet) -> Result<(), CheckpointError> {
    let step = Tensor::new(vec![2], [
        (ps.step & 0xffff_ffff) as u32 as f32,
        (ps.step >> 32) as u32 as f32,
    ].to_vec());
    let mut tensors: Vec<(String, &Tensor)> = Vec::new();
    for p in &ps.params {
        tensors.push((p.name.clone(), &p.value));
        tensors.push((format!("{}.__ema", p.name), &p.ema));
        tensors.push((format!("{}.__m", p.name), &p.m));
        tensors.push((format!("{}.__v", p.name), &p.v));
    }
    tensors.push(("__step".into(), &step));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensors(&mut f, &tensors)?;
    f.flush()?;
    Ok(())
}

/// Load into an already-constructed ParamSet (shapes must match).
pub fn load_params(path: &Path, ps: &mut ParamSet) -> Result<(), CheckpointError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let tensors = read_tensors(&mut f)?;
    for p in &mut ps.params {
        let val = tensors.get(&p.name).ok_or_else(|| CheckpointError::Missing(p.name.clone()))?;
        if val.shape != p.value.shape {
            return Err(CheckpointError::Malformed(format!(
                "tensor {} has shape {:?}, expected {:?}",
                p.name, val.shape, p.value.shape
            )));
        }
        p.value = val.clone();
        p.ema = tensors
            .get(&format!("{}.__ema", p.name))
            .ok_or_else(|| CheckpointError::Missing(format!("{}.__ema", p.name)))?
            .clone();
        p.m = tensors
            .get(&format!("{}.__m", p.name))
            .ok_or_else(|| CheckpointError::Missing(format!("{}.__m", p.name)))?
            .clone();
        p.v = tensors
            .get(&format!("{}.__v", p.name))
            .ok_or_else(|| CheckpointError::Missing(format!("{}.__v", p.name)))?
            .clone();
    }
    if let Some(step) = tensors.get("__step") {
        ps.step = (step.data[0] as u64) | ((step.data[1] as u64) << 32);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ps = ParamSet::new();
        ps.add_uniform("layer.w", &[7, 5], 7, &mut rng);
        ps.add_uniform("layer.b", &[5], 5, &mut rng);
        ps.step = 12345;
        // make ema/m/v distinct from value
        ps.params[0].m.data[3] = 0.25;
        ps.params[1].ema.data[0] = -1.5;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.cpk");
        save_params(&path, &ps).unwrap();

        let mut rng2 = ChaCha8Rng::seed_from_u64(999);
        let mut loaded = ParamSet::new();
        loaded.add_uniform("layer.w", &[7, 5], 7, &mut rng2);
        loaded.add_uniform("layer.b", &[5], 5, &mut rng2);
        load_params(&path, &mut loaded).unwrap();

        assert_eq!(loaded.step, 12345);
        for (a, b) in ps.params.iter().zip(&loaded.params) {
            assert_eq!(a.value.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                       b.value.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            assert_eq!(a.ema.data, b.ema.data);
            assert_eq!(a.m.data, b.m.data);
            assert_eq!(a.v.data, b.v.data);
        }
    }

    #[test]
    fn missing_tensor_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::new();
        ps.add_uniform("a", &[2], 2, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.cpk");
        save_params(&path, &ps).unwrap();

        let mut other = ParamSet::new();
        other.add_uniform("b", &[2], 2, &mut rng);
        assert!(matches!(load_params(&path, &mut other), Err(CheckpointError::Missing(_))));
    }
}
