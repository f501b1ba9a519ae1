//! Streamline collections and their files: TSF1 binary, a scores sidecar
//! and a one-way VTK export.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Streamline, Vec3};

pub const TRACTOGRAM_MAGIC: &[u8; 4] = b"TSF1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tractogram {
    pub streamlines: Vec<Streamline>,
}

impl Tractogram {
    pub fn new(streamlines: Vec<Streamline>) -> Self {
        Self { streamlines }
    }

    pub fn len(&self) -> usize {
        self.streamlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streamlines.is_empty()
    }

    pub fn mean_length(&self) -> f64 {
        if self.streamlines.is_empty() {
            return 0.0;
        }
        self.streamlines
            .iter()
            .map(Streamline::arc_length)
            .sum::<f64>()
            / self.len() as f64
    }

    /// Every coordinate rounded through `f32`, as a file round trip would.
    pub fn to_f32_precision(&self) -> Self {
        Self::new(
            self.streamlines
                .iter()
                .map(|s| s.points().iter().map(|p| p.to_f32_precision()).collect())
                .collect(),
        )
    }
}

pub fn write_tractogram_to<W: Write>(w: &mut W, t: &Tractogram) -> Result<()> {
    let count =
        u32::try_from(t.len()).map_err(|_| Error::InvalidInput("too many streamlines".into()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(TRACTOGRAM_MAGIC);
    buf.extend_from_slice(&count.to_le_bytes());
    for s in &t.streamlines {
        let n = u32::try_from(s.len())
            .map_err(|_| Error::InvalidInput("streamline too long".into()))?;
        buf.extend_from_slice(&n.to_le_bytes());
        for p in s.points() {
            for c in p.to_array() {
                buf.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn tractogram_to_bytes(t: &Tractogram) -> Vec<u8> {
    let mut out = Vec::new();
    write_tractogram_to(&mut out, t).expect("writing to a Vec cannot fail");
    out
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format {
        expected: what.into(),
        found: "end of file".into(),
    })?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tractogram_from<R: Read>(r: &mut R) -> Result<Tractogram> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format {
        expected: "magic TSF1".into(),
        found: "end of file".into(),
    })?;
    if &magic != TRACTOGRAM_MAGIC {
        return Err(Error::Format {
            expected: "magic TSF1".into(),
            found: format!("magic {:?}", String::from_utf8_lossy(&magic)),
        });
    }
    let count = read_u32(r, "streamline count")?;
    let mut streamlines = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let n = read_u32(r, "point count")? as usize;
        let mut raw = vec![0u8; n * 12];
        r.read_exact(&mut raw).map_err(|_| Error::Format {
            expected: format!("{n} points"),
            found: "end of file".into(),
        })?;
        let pts = raw
            .chunks_exact(12)
            .map(|c| {
                let f =
                    |i: usize| f32::from_le_bytes(c[i..i + 4].try_into().expect("4 bytes")) as f64;
                Vec3::new(f(0), f(4), f(8))
            })
            .collect();
        streamlines.push(Streamline::new(pts)?);
    }
    Ok(Tractogram::new(streamlines))
}

pub fn tractogram_from_bytes(bytes: &[u8]) -> Result<Tractogram> {
    let mut cursor = bytes;
    let t = read_tractogram_from(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(Error::Format {
            expected: "end of tractogram".into(),
            found: format!("{} trailing bytes", cursor.len()),
        });
    }
    Ok(t)
}

pub fn read_tractogram(path: &Path) -> Result<Tractogram> {
    tractogram_from_bytes(&std::fs::read(path)?)
}

/// One score per line, six decimals.
pub fn scores_to_text(scores: &[f64]) -> String {
    scores.iter().map(|s| format!("{s:.6}\n")).collect()
}

pub fn scores_from_text(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim().parse::<f64>().map_err(|_| Error::Format {
                expected: "one score per line".into(),
                found: l.to_string(),
            })
        })
        .collect()
}

/// Legacy ASCII VTK polydata, readable by common tract viewers.
pub fn to_vtk(t: &Tractogram) -> String {
    let n_points: usize = t.streamlines.iter().map(Streamline::len).sum();
    let mut out = String::from("# vtk DataFile Version 3.0\ntractogram\nASCII\nDATASET POLYDATA\n");
    out += &format!("POINTS {n_points} float\n");
    for s in &t.streamlines {
        for p in s.points() {
            out += &format!("{} {} {}\n", p.x as f32, p.y as f32, p.z as f32);
        }
    }
    out += &format!("LINES {} {}\n", t.len(), n_points + t.len());
    let mut next = 0;
    for s in &t.streamlines {
        out += &s.len().to_string();
        for i in next..next + s.len() {
            out += &format!(" {i}");
        }
        out.push('\n');
        next += s.len();
    }
    out
}
