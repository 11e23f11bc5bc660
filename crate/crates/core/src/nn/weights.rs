//! Flat binary weight file.
//!
//! Layout: the 8-byte magic `FIGSEP01`, then one record per tensor until end
//! of file. A record is the name length (u32), the UTF-8 name, the rank
//! (u32), each dimension (u32), and the values as f32. All integers and
//! floats are little-endian.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"FIGSEP01";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic, not a weight file")]
    BadMagic,
    #[error("truncated record for tensor {0:?}")]
    Truncated(String),
    #[error("tensor name is not UTF-8")]
    BadName,
    #[error("dimension {dim} of tensor {name:?} does not fit in u32")]
    TooLarge { name: String, dim: usize },
}

/// A named f32 tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

pub fn write_weights<W: Write>(mut out: W, tensors: &[NamedTensor]) -> Result<(), WeightsError> {
    out.write_all(MAGIC)?;
    let u32_of = |name: &str, dim: usize| {
        u32::try_from(dim).map_err(|_| WeightsError::TooLarge {
            name: name.to_string(),
            dim,
        })
    };
    for t in tensors {
        assert_eq!(t.dims.iter().product::<usize>(), t.values.len());
        out.write_all(&u32_of(&t.name, t.name.len())?.to_le_bytes())?;
        out.write_all(t.name.as_bytes())?;
        out.write_all(&u32_of(&t.name, t.dims.len())?.to_le_bytes())?;
        for &d in &t.dims {
            out.write_all(&u32_of(&t.name, d)?.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.values.len() * 4);
        for v in &t.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32(bytes: &[u8], pos: &mut usize, name: &str) -> Result<u32, WeightsError> {
    let end = *pos + 4;
    let b = bytes
        .get(*pos..end)
        .ok_or_else(|| WeightsError::Truncated(name.to_string()))?;
    *pos = end;
    Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
}

pub fn read_weights<R: Read>(mut input: R) -> Result<Vec<NamedTensor>, WeightsError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let mut pos = MAGIC.len();
    let mut out = Vec::new();
    while pos < bytes.len() {
        let name_len = read_u32(&bytes, &mut pos, "")? as usize;
        let name_bytes = bytes
            .get(pos..pos + name_len)
            .ok_or_else(|| WeightsError::Truncated(String::new()))?;
        let name = String::from_utf8(name_bytes.to_vec()).map_err(|_| WeightsError::BadName)?;
        pos += name_len;
        let rank = read_u32(&bytes, &mut pos, &name)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&bytes, &mut pos, &name)? as usize);
        }
        let count: usize = dims.iter().product();
        let raw = bytes
            .get(pos..pos + count * 4)
            .ok_or_else(|| WeightsError::Truncated(name.clone()))?;
        pos += count * 4;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        out.push(NamedTensor { name, dims, values });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_exact() {
        let t = NamedTensor {
            name: "ab".into(),
            dims: vec![2],
            values: vec![1.0, -0.5],
        };
        let mut buf = Vec::new();
        write_weights(&mut buf, &[t]).unwrap();
        let mut want = b"FIGSEP01".to_vec();
        want.extend_from_slice(&2u32.to_le_bytes());
        want.extend_from_slice(b"ab");
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u32.to_le_bytes());
        want.extend_from_slice(&1.0f32.to_le_bytes());
        want.extend_from_slice(&(-0.5f32).to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(
            read_weights(&b"FIGSEP02"[..]),
            Err(WeightsError::BadMagic)
        ));
        let t = NamedTensor {
            name: "w".into(),
            dims: vec![3],
            values: vec![1.0, 2.0, 3.0],
        };
        let mut buf = Vec::new();
        write_weights(&mut buf, &[t]).unwrap();
        buf.pop();
        assert!(matches!(
            read_weights(&buf[..]),
            Err(WeightsError::Truncated(_))
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            specs in proptest::collection::vec(
                ("[a-z.0-9]{1,12}", proptest::collection::vec(1usize..4, 1..4)),
                0..4,
            ),
            seed in any::<u32>(),
        ) {
            let tensors: Vec<NamedTensor> = specs
                .into_iter()
                .enumerate()
                .map(|(i, (name, dims))| {
                    let n: usize = dims.iter().product();
                    let values = (0..n)
                        .map(|j| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add((i * 31 + j) as u32) & 0xbf7f_ffff))
                        .collect();
                    NamedTensor { name, dims, values }
                })
                .collect();
            let mut buf = Vec::new();
            write_weights(&mut buf, &tensors).unwrap();
            let back = read_weights(&buf[..]).unwrap();
            prop_assert_eq!(back.len(), tensors.len());
            for (a, b) in back.iter().zip(&tensors) {
                prop_assert_eq!(&a.name, &b.name);
                prop_assert_eq!(&a.dims, &b.dims);
                let ab: Vec<u32> = a.values.iter().map(|v| v.to_bits()).collect();
                let bb: Vec<u32> = b.values.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(ab, bb);
            }
        }
    }
}
