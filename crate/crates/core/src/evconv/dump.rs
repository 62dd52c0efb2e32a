//! Flat debug dumps for diffing against other implementations.
//!
//! Header is four little-endian `u16`: `C | H | W | K`, followed by 32-bit
//! little-endian values in row-major order. Count maps store `u32` counts in
//! their `C x (H*K) x (W*K)` grid. Response maps store `f32` values and write
//! `K = 0`.

use super::{CountMap, ResponseMap};
use crate::error::{Error, Result};
use crate::real::Real;

fn header(c: usize, h: usize, w: usize, k: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(8);
    for v in [c, h, w, k] {
        let v = u16::try_from(v).map_err(|_| Error::arg(format!("dimension {v} exceeds u16")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

fn parse_header(bytes: &[u8]) -> Result<[usize; 4]> {
    if bytes.len() < 8 {
        return Err(Error::format_at_offset("truncated dump header", bytes.len() as u64));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = u16::from_le_bytes([bytes[2 * i], bytes[2 * i + 1]]) as usize;
    }
    Ok(dims)
}

fn words(bytes: &[u8], expected: usize) -> Result<impl Iterator<Item = [u8; 4]> + '_> {
    let body = &bytes[8..];
    if body.len() != expected * 4 {
        return Err(Error::format_at_offset(
            format!("expected {expected} values, found {} bytes", body.len()),
            8,
        ));
    }
    Ok(body.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]))
}

pub fn write_count_map_dump(map: &CountMap) -> Result<Vec<u8>> {
    let mut buf = header(map.channels(), map.height(), map.width(), map.kernel_size())?;
    for &c in map.counts() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    Ok(buf)
}

pub fn read_count_map_dump(bytes: &[u8]) -> Result<CountMap> {
    let [c, h, w, k] = parse_header(bytes)?;
    if k == 0 {
        return Err(Error::format_at_offset("K = 0 marks a response dump", 6));
    }
    let counts = words(bytes, c * h * k * w * k)?.map(u32::from_le_bytes).collect();
    CountMap::from_counts(c, h, w, k, counts)
}

pub fn write_response_dump<F: Real>(map: &ResponseMap<F>) -> Result<Vec<u8>> {
    let mut buf = header(map.channels(), map.height(), map.width(), 0)?;
    for v in map.values() {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(buf)
}

pub fn read_response_dump(bytes: &[u8]) -> Result<ResponseMap<f32>> {
    let [c, h, w, k] = parse_header(bytes)?;
    if k != 0 {
        return Err(Error::format_at_offset("nonzero K marks a count map dump", 6));
    }
    let values = words(bytes, c * h * w)?.map(f32::from_le_bytes).collect();
    Ok(ResponseMap::from_values(c, h, w, values).expect("length checked"))
}
