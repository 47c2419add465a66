//! Versioned binary parameter container.
//!
//! Layout (little-endian): magic "GLNN", format version u32, entry count
//! u32, then per entry (name length u32, name bytes, rank u32, dims u32...,
//! values f32...), then optimizer state: step u64 followed by Adam moments
//! (m then v) for each entry in the same order. Round-trips bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use super::params::{ParamEntry, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GLNN";
const VERSION: u32 = 1;

pub fn save(ps: &ParamSet, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(ps.entries.len() as u32).to_le_bytes())?;
    for (name, entry) in &ps.entries {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        write_tensor(&mut w, &entry.value, true)?;
    }
    w.write_all(&ps.step.to_le_bytes())?;
    for entry in ps.entries.values() {
        write_tensor(&mut w, &entry.m, false)?;
        write_tensor(&mut w, &entry.v, false)?;
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamSet> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut ps = ParamSet::new();
    let mut names = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("non-utf8 parameter name".into()))?;
        let value = read_tensor(&mut r, None)?;
        ps.insert(&name, value);
        names.push(name);
    }
    let mut step = [0u8; 8];
    r.read_exact(&mut step)?;
    ps.step = u64::from_le_bytes(step);
    for name in &names {
        let shape = ps.get(name).shape().to_vec();
        let m = read_tensor(&mut r, Some(&shape))?;
        let v = read_tensor(&mut r, Some(&shape))?;
        let entry: &mut ParamEntry = ps.entries.get_mut(name).expect("just inserted");
        entry.m = m;
        entry.v = v;
    }
    Ok(ps)
}

fn write_tensor<W: Write>(w: &mut W, t: &Tensor, with_shape: bool) -> Result<()> {
    if with_shape {
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R, known_shape: Option<&[usize]>) -> Result<Tensor> {
    let shape = match known_shape {
        Some(s) => s.to_vec(),
        None => {
            let rank = read_u32(r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u32(r)? as usize);
            }
            shape
        }
    };
    let n: usize = shape.iter().product();
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(shape, data)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
