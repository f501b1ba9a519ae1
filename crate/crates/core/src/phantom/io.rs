use std::io::{Read, Write};

use super::{Bundle, PhantomVolume};
use crate::error::{Error, Result};

pub const PHANTOM_MAGIC: &[u8; 4] = b"PHV1";

pub fn write_phantom_to<W: Write>(w: &mut W, v: &PhantomVolume) -> Result<()> {
    w.write_all(PHANTOM_MAGIC)?;
    for d in v.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&(v.voxel_size() as f32).to_le_bytes())?;
    for x in v.wm().values() {
        w.write_all(&(x[0] as f32).to_le_bytes())?;
    }
    w.write_all(&[v.k() as u8])?;
    for &x in v.peak_values() {
        w.write_all(&(x as f32).to_le_bytes())?;
    }
    for &l in v.roi_labels() {
        w.write_all(&l.to_le_bytes())?;
    }
    w.write_all(&(v.bundles().len() as u16).to_le_bytes())?;
    for b in v.bundles() {
        w.write_all(&b.labels[0].to_le_bytes())?;
        w.write_all(&b.labels[1].to_le_bytes())?;
        let mut bits = vec![0u8; b.mask.len().div_ceil(8)];
        for (i, _) in b.mask.iter().enumerate().filter(|(_, &m)| m) {
            bits[i / 8] |= 1 << (i % 8);
        }
        w.write_all(&bits)?;
    }
    Ok(())
}

pub fn write_phantom(v: &PhantomVolume) -> Vec<u8> {
    let mut out = Vec::new();
    write_phantom_to(&mut out, v).expect("writing to a Vec cannot fail");
    out
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format {
            expected: "complete PHV1 volume".into(),
            found: "truncated file".into(),
        }
    } else {
        Error::Io(e)
    }
}

fn f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

pub fn read_phantom_from<R: Read>(r: &mut R) -> Result<PhantomVolume> {
    let magic = take::<4, _>(r)?;
    if &magic != PHANTOM_MAGIC {
        return Err(Error::Format {
            expected: "magic PHV1".into(),
            found: format!("magic {:?}", String::from_utf8_lossy(&magic)),
        });
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = u32::from_le_bytes(take(r)?) as usize;
    }
    let n: usize = dims.iter().product();
    let voxel_size = f32::from_le_bytes(take(r)?) as f64;
    let wm = f32s(r, n)?;
    let [k] = take::<1, _>(r)?;
    let k = k as usize;
    let peaks = f32s(r, n * 4 * k)?;
    let mut raw = vec![0u8; n * 2];
    r.read_exact(&mut raw).map_err(truncated)?;
    let roi = raw
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    let nb = u16::from_le_bytes(take(r)?) as usize;
    let mut bundles = Vec::with_capacity(nb);
    for _ in 0..nb {
        let a = u16::from_le_bytes(take(r)?);
        let b = u16::from_le_bytes(take(r)?);
        let mut bits = vec![0u8; n.div_ceil(8)];
        r.read_exact(&mut bits).map_err(truncated)?;
        let mask = (0..n).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        bundles.push(Bundle {
            labels: [a, b],
            mask,
        });
    }
    PhantomVolume::new(dims, voxel_size, k, wm, peaks, roi, bundles)
}

pub fn read_phantom(bytes: &[u8]) -> Result<PhantomVolume> {
    let mut cursor = bytes;
    let v = read_phantom_from(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(Error::Format {
            expected: "end of PHV1 volume".into(),
            found: format!("{} trailing bytes", cursor.len()),
        });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::super::{generate_phantom, presets};
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let v = generate_phantom(&presets::two_arcs_one_crossing(), 42).unwrap();
        let bytes = write_phantom(&v);
        let back = read_phantom(&bytes).unwrap();
        assert_eq!(back, v);
        assert_eq!(write_phantom(&back), bytes);
    }

    #[test]
    fn generation_is_byte_deterministic() {
        let spec = presets::two_arcs_one_crossing();
        let a = write_phantom(&generate_phantom(&spec, 42).unwrap());
        let b = write_phantom(&generate_phantom(&spec, 42).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn header_layout() {
        let v = generate_phantom(&presets::straight_tube(), 0).unwrap();
        let bytes = write_phantom(&v);
        assert_eq!(&bytes[..4], b"PHV1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 16);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 48);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1.0);
        let n = 16 * 16 * 48;
        assert_eq!(bytes[20 + 4 * n], 3);
        let expected = 20 + 4 * n + 1 + 4 * n * 12 + 2 * n + 2 + (4 + n / 8);
        assert_eq!(bytes.len(), expected);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let v = generate_phantom(&presets::straight_tube(), 0).unwrap();
        let mut bytes = write_phantom(&v);
        let err = read_phantom(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        bytes[0] = b'X';
        let err = read_phantom(&bytes).unwrap_err();
        assert!(err.to_string().contains("PHV1") && err.to_string().contains("XHV1"));
    }
}
