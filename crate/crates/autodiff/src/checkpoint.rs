//! `TNSR` archives: little-endian, magic `TNSR`, `u32` tensor count, then per
//! tensor a `u16` name length, the UTF-8 name, a `u8` rank, `u32` dims and
//! `f32` data.

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"TNSR";

pub type NamedTensor<T> = (String, Tensor<T>);

pub fn write_tensors_to<W: Write, T: Scalar>(
    w: &mut W,
    tensors: &[(&str, &Tensor<T>)],
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        let name_len = u16::try_from(name.len())
            .map_err(|_| TensorError::InvalidArgument(format!("tensor name too long: {name}")))?;
        let rank = u8::try_from(t.rank())
            .map_err(|_| TensorError::InvalidArgument(format!("rank too large for {name}")))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[rank])?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.numel() * 4);
        for &x in t.data() {
            buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn write_tensors<T: Scalar>(tensors: &[(&str, &Tensor<T>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_tensors_to(&mut out, tensors)?;
    Ok(out)
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_tensors_from<R: Read, T: Scalar>(r: &mut R) -> Result<Vec<NamedTensor<T>>> {
    let magic: [u8; 4] = read_exact(r)?;
    if &magic != MAGIC {
        return Err(TensorError::Format {
            expected: "magic TNSR".into(),
            found: format!("{:?}", String::from_utf8_lossy(&magic)),
        });
    }
    let count = u32::from_le_bytes(read_exact(r)?);
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(read_exact(r)?) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| TensorError::Format {
            expected: "UTF-8 tensor name".into(),
            found: e.to_string(),
        })?;
        let [rank] = read_exact::<_, 1>(r)?;
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(read_exact(r)?) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut raw = vec![0u8; numel * 4];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::cast(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        out.push((name, Tensor::from_vec(shape, data)?));
    }
    Ok(out)
}

pub fn read_tensors<T: Scalar>(bytes: &[u8]) -> Result<Vec<NamedTensor<T>>> {
    let mut cursor = bytes;
    let out = read_tensors_from(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(TensorError::Format {
            expected: "end of archive".into(),
            found: format!("{} trailing bytes", cursor.len()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_wrong_magic() {
        let err = read_tensors::<f32>(b"PHV1\0\0\0\0").unwrap_err();
        assert!(err.to_string().contains("TNSR"), "{err}");
    }

    #[test]
    fn layout_is_little_endian() {
        let t = Tensor::<f32>::from_vec(vec![1], vec![1.0]).unwrap();
        let bytes = write_tensors(&[("w", &t)]).unwrap();
        let mut expected = b"TNSR".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u16.to_le_bytes());
        expected.push(b'w');
        expected.push(1);
        expected.extend(1u32.to_le_bytes());
        expected.extend(1.0f32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            entries in proptest::collection::vec(
                ("[a-z/._0-9]{1,12}", proptest::collection::vec(1usize..4, 1..4)),
                0..5,
            ),
            seed in any::<u32>(),
        ) {
            let tensors: Vec<(String, Tensor<f32>)> = entries
                .into_iter()
                .enumerate()
                .map(|(i, (name, shape))| {
                    let n: usize = shape.iter().product();
                    let data = (0..n)
                        .map(|j| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add((i * 31 + j) as u32) & 0x7f7f_ffff))
                        .collect();
                    (name, Tensor::from_vec(shape, data).unwrap())
                })
                .collect();
            let refs: Vec<(&str, &Tensor<f32>)> = tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
            let bytes = write_tensors(&refs).unwrap();
            let back = read_tensors::<f32>(&bytes).unwrap();
            prop_assert_eq!(&back, &tensors);
            let back_refs: Vec<(&str, &Tensor<f32>)> = back.iter().map(|(n, t)| (n.as_str(), t)).collect();
            prop_assert_eq!(write_tensors(&back_refs).unwrap(), bytes);
        }
    }
}
