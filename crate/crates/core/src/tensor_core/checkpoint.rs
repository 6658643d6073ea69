//! Binary parameter snapshots: `FSCK`, u32 version, u32 header length,
//! JSON header `[{name, shape, dtype, trainable}, ..]`, then little-endian payloads in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use super::tensor::{DType, Scalar, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FSCK";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    shape: Vec<usize>,
    dtype: DType,
    #[serde(default = "trainable_default")]
    trainable: bool,
}

fn trainable_default() -> bool {
    true
}

pub fn write_checkpoint<T: Scalar, W: Write>(store: &ParameterStore<T>, mut w: W) -> Result<()> {
    let header: Vec<HeaderEntry> = store
        .iter()
        .map(|(name, e)| HeaderEntry {
            name: name.to_string(),
            shape: e.value.shape().to_vec(),
            dtype: T::DTYPE,
            trainable: e.trainable,
        })
        .collect();
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&u32::try_from(json.len()).map_err(|_| Error::Format("header too large".into()))?.to_le_bytes())?;
    w.write_all(&json)?;
    for (_, e) in store.iter() {
        for &v in e.value.data() {
            match T::DTYPE {
                DType::F32 => w.write_all(&(v.as_f64() as f32).to_le_bytes())?,
                DType::F64 => w.write_all(&v.as_f64().to_le_bytes())?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint, converting stored payloads to `T`.
pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<ParameterStore<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = read_u32(&mut r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(truncated)?;
    let header: Vec<HeaderEntry> = serde_json::from_slice(&json)?;
    let mut store = ParameterStore::new();
    for h in header {
        let n: usize = h.shape.iter().product();
        let mut raw = vec![0u8; n * h.dtype.size()];
        r.read_exact(&mut raw).map_err(truncated)?;
        let data: Vec<T> = match h.dtype {
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
                .collect(),
            DType::F64 => raw
                .chunks_exact(8)
                .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
                .collect(),
        };
        store.insert(&h.name, Tensor::new(h.shape, data)?, h.trainable)?;
    }
    Ok(store)
}

pub fn save_checkpoint<T: Scalar>(store: &ParameterStore<T>, path: &Path) -> Result<()> {
    write_checkpoint(store, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ParameterStore<T>> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated checkpoint".into())
    } else {
        Error::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParameterStore<f32> {
        let mut s = ParameterStore::new();
        s.insert(
            "a.weight",
            Tensor::matrix(2, 2, vec![1.5, -0.0, f32::MIN_POSITIVE / 4.0, 3.0]).unwrap(),
            true,
        )
        .unwrap();
        s.insert("a.bias", Tensor::vector(vec![0.25, -7.0]).unwrap(), true)
            .unwrap();
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let mut buf = Vec::new();
        write_checkpoint(&s, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"FSCK");
        let back: ParameterStore<f32> = read_checkpoint(buf.as_slice()).unwrap();
        let names: Vec<_> = back.names().collect();
        assert_eq!(names, ["a.weight", "a.bias"]);
        for ((_, x), (_, y)) in s.iter().zip(back.iter()) {
            let xb: Vec<u32> = x.value.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut buf = Vec::new();
        write_checkpoint(&sample(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_checkpoint::<f32, _>(bad.as_slice()),
            Err(Error::Format(_))
        ));
        buf.truncate(buf.len() - 1);
        assert!(matches!(
            read_checkpoint::<f32, _>(buf.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
