//! Parameter checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! u32 param_count
//! param_count x { u32 name_len | name (UTF-8) | u32 rank | rank x u32 dim }
//! f32 values of every parameter, in header order
//! ```

use std::fs;
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

pub fn encode_checkpoint<F: Real>(store: &ParamStore<F>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        let name = p.name().as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(p.value().rank() as u32).to_le_bytes());
        for &d in p.value().shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for (_, p) in store.iter() {
        for v in p.value().data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::format_at_offset(format!("truncated {what}"), self.pos as u64))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parsed checkpoint entries `(name, tensor)` in file order.
pub fn decode_checkpoint<F: Real>(bytes: &[u8]) -> Result<Vec<(String, Tensor<F>)>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let count = cur.u32("parameter count")? as usize;
    let mut headers = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = cur.u32("name length")? as usize;
        let at = cur.pos;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|_| Error::format_at_offset("name is not UTF-8", at as u64))?
            .to_string();
        let rank = cur.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(cur.u32("dimension")? as usize);
        }
        headers.push((name, shape));
    }
    let mut out = Vec::with_capacity(headers.len());
    for (name, shape) in headers {
        let n: usize = shape.iter().product();
        let raw = cur.take(n * 4, "values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| F::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        out.push((name, Tensor::new(&shape, data)?));
    }
    if cur.pos != bytes.len() {
        return Err(Error::format_at_offset("trailing bytes", cur.pos as u64));
    }
    Ok(out)
}

pub fn save_checkpoint<F: Real>(store: &ParamStore<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(store)).map_err(|e| Error::io(path, e))
}

/// Overwrites the values of `store` from a checkpoint. Names and shapes must
/// match exactly.
pub fn load_checkpoint_into<F: Real>(store: &mut ParamStore<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    restore_checkpoint(store, &bytes)
}

pub fn restore_checkpoint<F: Real>(store: &mut ParamStore<F>, bytes: &[u8]) -> Result<()> {
    let entries = decode_checkpoint::<F>(bytes)?;
    if entries.len() != store.len() {
        return Err(Error::arg(format!(
            "checkpoint has {} parameters, model has {}",
            entries.len(),
            store.len()
        )));
    }
    for ((name, tensor), p) in entries.into_iter().zip(store.iter_mut()) {
        if name != p.name() || tensor.shape() != p.value().shape() {
            return Err(Error::arg(format!(
                "checkpoint entry {name} {:?} does not match parameter {} {:?}",
                tensor.shape(),
                p.name(),
                p.value().shape()
            )));
        }
        *p.value_mut() = tensor;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut s = ParamStore::<f32>::new();
        s.add("a.weight", Tensor::from_fn(&[2, 3], |i| i as f32 * 0.25));
        s.add("b", Tensor::scalar(-1.5));
        let bytes = encode_checkpoint(&s);
        assert_eq!(&bytes[..4], &2u32.to_le_bytes());
        let mut t = s.clone();
        t.iter_mut().for_each(|p| p.value_mut().data_mut().fill(0.0));
        restore_checkpoint(&mut t, &bytes).unwrap();
        assert_eq!(t, s);
    }

    #[test]
    fn mismatch_and_truncation() {
        let mut s = ParamStore::<f32>::new();
        s.add("w", Tensor::zeros(&[4]));
        let bytes = encode_checkpoint(&s);
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut other = ParamStore::<f32>::new();
        other.add("w", Tensor::zeros(&[2, 2]));
        assert!(restore_checkpoint(&mut other, &bytes).is_err());
    }
}
