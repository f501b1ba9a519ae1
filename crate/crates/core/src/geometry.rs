//! Numerical kernels shared by every stage: vectors, streamlines,
//! resampling, trilinear sampling and segment angles.
//!
//! Coordinates are continuous voxel coordinates with voxel `(i, j, k)`
//! centred at the integer point `(i, j, k)`. Grids are stored with `x`
//! varying fastest: linear index `x + dx * (y + dy * z)`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction; `None` for a zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Nearest voxel centre, without bounds checks.
    pub fn round(self) -> [i64; 3] {
        [
            self.x.round() as i64,
            self.y.round() as i64,
            self.z.round() as i64,
        ]
    }

    /// Rounds every component through `f32`, the precision of the on-disk
    /// formats.
    pub fn to_f32_precision(self) -> Vec3 {
        Vec3::new(
            self.x as f32 as f64,
            self.y as f32 as f64,
            self.z as f32 as f64,
        )
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Ordered polyline in voxel coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Streamline {
    points: Vec<Vec3>,
}

impl Streamline {
    /// Wraps a point sequence; rejects non-finite coordinates.
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite streamline point {p:?}"
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Option<Vec3> {
        self.points.first().copied()
    }

    pub fn last(&self) -> Option<Vec3> {
        self.points.last().copied()
    }

    pub fn push(&mut self, p: Vec3) {
        debug_assert!(p.is_finite());
        self.points.push(p);
    }

    pub fn reversed(&self) -> Streamline {
        let mut points = self.points.clone();
        points.reverse();
        Self { points }
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }
}

impl FromIterator<Vec3> for Streamline {
    fn from_iter<I: IntoIterator<Item = Vec3>>(iter: I) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}

/// Consecutive point differences of a streamline (`n - 1` of them).
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSequence {
    pub directions: Vec<Vec3>,
}

impl DirectionSequence {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

pub fn to_directions(s: &Streamline) -> Result<DirectionSequence> {
    if s.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 points for directions, got {}",
            s.len()
        )));
    }
    Ok(DirectionSequence {
        directions: s.points.windows(2).map(|w| w[1] - w[0]).collect(),
    })
}

/// Resamples `s` to `n` points equidistant in arc length along the input
/// polyline, interpolating linearly inside segments. Endpoints are kept
/// exactly.
pub fn resample(s: &Streamline, n: usize) -> Result<Streamline> {
    if s.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "resampling needs at least 2 points, got {}",
            s.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "cannot resample to {n} points"
        )));
    }
    let pts = s.points();
    let mut cumulative = Vec::with_capacity(pts.len());
    cumulative.push(0.0);
    for w in pts.windows(2) {
        cumulative.push(cumulative.last().unwrap() + w[0].distance(w[1]));
    }
    let total = *cumulative.last().unwrap();
    if total <= 0.0 {
        return Err(Error::Degenerate("streamline has zero arc length".into()));
    }
    let mut out = Vec::with_capacity(n);
    out.push(pts[0]);
    let mut seg = 0;
    for k in 1..n - 1 {
        let target = total * k as f64 / (n - 1) as f64;
        while seg + 2 < cumulative.len() && cumulative[seg + 1] < target {
            seg += 1;
        }
        let len = cumulative[seg + 1] - cumulative[seg];
        let t = if len > 0.0 {
            ((target - cumulative[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(pts[seg] + (pts[seg + 1] - pts[seg]) * t);
    }
    out.push(*pts.last().unwrap());
    Ok(Streamline { points: out })
}

/// Angle between two vectors in degrees, in `[0, 180]`.
pub fn segment_angle(u: Vec3, v: Vec3) -> Result<f64> {
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidInput(
            "angle with a zero-length vector".into(),
        ));
    }
    // atan2 form of the clamped arccos; stays accurate near 0 and 180
    Ok(u.cross(v).norm().atan2(u.dot(v)).to_degrees())
}

/// Dense 3D grid holding `W` values per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct Field3D<const W: usize> {
    dims: [usize; 3],
    data: Vec<[f64; W]>,
}

/// One value per voxel (WM mask, ROI indicator).
pub type ScalarField3D = Field3D<1>;
/// A fixed-width vector per voxel.
pub type VectorField3D<const W: usize> = Field3D<W>;

impl<const W: usize> Field3D<W> {
    pub fn new(dims: [usize; 3], data: Vec<[f64; W]>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "grid dims must be positive, got {dims:?}"
            )));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidInput(format!(
                "grid {dims:?} needs {} voxels, got {}",
                dims.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: [usize; 3], value: [f64; W]) -> Self {
        assert!(!dims.contains(&0));
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut([usize; 3]) -> [f64; W]) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f([x, y, z]));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[[f64; W]] {
        &self.data
    }

    pub fn index(&self, v: [usize; 3]) -> usize {
        linear_index(self.dims, v)
    }

    pub fn get(&self, v: [usize; 3]) -> [f64; W] {
        self.data[self.index(v)]
    }

    pub fn set(&mut self, v: [usize; 3], value: [f64; W]) {
        let i = self.index(v);
        self.data[i] = value;
    }

    /// Trilinear interpolation between the eight surrounding voxel centres.
    ///
    /// Positions outside `[0, dim - 1]` on any axis are an
    /// [`Error::OutOfBounds`].
    pub fn trilinear(&self, p: Vec3) -> Result<[f64; W]> {
        let c = p.to_array();
        let mut lo = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let max = (self.dims[a] - 1) as f64;
            if !(c[a] >= 0.0 && c[a] <= max) {
                return Err(Error::OutOfBounds(c));
            }
            if self.dims[a] == 1 {
                continue;
            }
            let i = (c[a].floor() as usize).min(self.dims[a] - 2);
            lo[a] = i;
            frac[a] = c[a] - i as f64;
        }
        let mut out = [0.0; W];
        for corner in 0..8 {
            let mut w = 1.0;
            let mut v = lo;
            for a in 0..3 {
                let up = (corner >> a) & 1 == 1;
                if up {
                    if self.dims[a] == 1 {
                        w = 0.0;
                        break;
                    }
                    v[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let val = self.get(v);
            for (o, x) in out.iter_mut().zip(val) {
                *o += w * x;
            }
        }
        Ok(out)
    }
}

impl Field3D<1> {
    pub fn sample(&self, p: Vec3) -> Result<f64> {
        self.trilinear(p).map(|v| v[0])
    }

    pub fn scalar_at(&self, v: [usize; 3]) -> f64 {
        self.get(v)[0]
    }
}

pub fn linear_index(dims: [usize; 3], v: [usize; 3]) -> usize {
    debug_assert!(v[0] < dims[0] && v[1] < dims[1] && v[2] < dims[2]);
    v[0] + dims[0] * (v[1] + dims[1] * v[2])
}

pub fn voxel_of_index(dims: [usize; 3], i: usize) -> [usize; 3] {
    [
        i % dims[0],
        (i / dims[0]) % dims[1],
        i / (dims[0] * dims[1]),
    ]
}

/// Integer voxel inside the grid, or `None`.
pub fn checked_voxel(dims: [usize; 3], v: [i64; 3]) -> Option<[usize; 3]> {
    let ok = (0..3).all(|a| v[a] >= 0 && (v[a] as usize) < dims[a]);
    ok.then(|| [v[0] as usize, v[1] as usize, v[2] as usize])
}
