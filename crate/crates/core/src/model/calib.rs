//! Raw tensor sets: `TCAL`, version byte, `count, channels, height, width`
//! as little-endian `u32`, then `count * channels * height * width`
//! little-endian `i32` values.

use super::spec::Shape;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TCAL";
const VERSION: u8 = 1;

pub fn encode_tensors(shape: Shape, tensors: &[Vec<i64>]) -> Result<Vec<u8>> {
    let mut w = Writer::with_capacity(21 + tensors.len() * shape.len() * 4);
    w.bytes(MAGIC);
    w.u8(VERSION);
    w.u32(tensors.len() as u32);
    for d in [shape.channels, shape.height, shape.width] {
        w.u32(d as u32);
    }
    for t in tensors {
        if t.len() != shape.len() {
            return Err(Error::Mismatch(format!("tensor of {} values in a set of shape {shape:?}", t.len())));
        }
        for &v in t {
            let v = i32::try_from(v).map_err(|_| Error::OutOfRange(format!("value {v} exceeds i32")))?;
            w.u32(v as u32);
        }
    }
    Ok(w.into_bytes())
}

pub fn decode_tensors(bytes: &[u8]) -> Result<(Shape, Vec<Vec<i64>>)> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Decode("not a tensor set (bad magic)".into()));
    }
    let v = r.u8()?;
    if v != VERSION {
        return Err(Error::Decode(format!("tensor set version {v}")));
    }
    let count = r.u32()? as usize;
    let shape = Shape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let need = count
        .checked_mul(shape.len())
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Decode("tensor set size overflow".into()))?;
    if r.remaining() != need {
        return Err(Error::Decode(format!("tensor set holds {} bytes, header needs {need}", r.remaining())));
    }
    let tensors = (0..count)
        .map(|_| (0..shape.len()).map(|_| r.u32().map(|v| v as i32 as i64)).collect())
        .collect::<Result<Vec<Vec<i64>>>>()?;
    Ok((shape, tensors))
}

pub fn read_tensors(path: &std::path::Path) -> Result<(Shape, Vec<Vec<i64>>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Document(format!("{}: {e}", path.display())))?;
    decode_tensors(&bytes)
}

pub fn write_tensors(path: &std::path::Path, shape: Shape, tensors: &[Vec<i64>]) -> Result<()> {
    std::fs::write(path, encode_tensors(shape, tensors)?).map_err(|e| Error::Document(format!("{}: {e}", path.display())))
}
