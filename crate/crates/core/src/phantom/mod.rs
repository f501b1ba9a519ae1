//! Synthetic phantoms: tube-shaped bundles rasterised into a WM mask, a
//! per-voxel peak field, ROI labels and ground-truth bundle masks.

mod io;
pub mod presets;
mod seeds;
mod synth;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{linear_index, ScalarField3D, Vec3};

pub use io::{read_phantom, read_phantom_from, write_phantom, write_phantom_to, PHANTOM_MAGIC};
pub use seeds::{interface_seeds, interface_seeds_with, interface_voxels};
pub use synth::{
    synthesize_labeled_set, synthesize_labeled_set_with, LabeledStreamlineSet, SampleKind,
    SynthOptions,
};

/// Spacing of the densified centreline, in voxels.
const DENSE_STEP: f64 = 0.05;
/// ROI disks extend this far past each bundle endpoint.
const ROI_DEPTH: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Centerline {
    Polyline {
        points: Vec<[f64; 3]>,
    },
    /// Circular arc through three points.
    Arc {
        start: [f64; 3],
        mid: [f64; 3],
        end: [f64; 3],
    },
    /// Bezier curve of any degree.
    Bezier {
        control: Vec<[f64; 3]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSpec {
    pub name: String,
    pub centerline: Centerline,
    pub radius: f64,
    /// ROI labels at the start and end of the centreline.
    pub labels: [u16; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub name: String,
    pub dims: [usize; 3],
    #[serde(default = "default_voxel_size")]
    pub voxel_size: f64,
    #[serde(default = "default_max_peaks")]
    pub max_peaks: usize,
    /// Standard deviation of the amplitude perturbation; 0 keeps every
    /// amplitude at exactly 1.
    #[serde(default)]
    pub amplitude_noise: f64,
    pub bundles: Vec<BundleSpec>,
}

fn default_voxel_size() -> f64 {
    1.0
}

fn default_max_peaks() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub dir: Vec3,
    pub amplitude: f64,
}

/// Up to `K` unit directions with amplitudes, strongest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
}

impl PeakSet {
    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    /// Fixed-width descriptor `(x, y, z, amplitude)` per peak, zero padded to
    /// `k` peaks.
    pub fn descriptor(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; 4 * k];
        for (slot, p) in out.chunks_mut(4).zip(&self.peaks) {
            slot.copy_from_slice(&[p.dir.x, p.dir.y, p.dir.z, p.amplitude]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub labels: [u16; 2],
    /// One flag per voxel, linear index order.
    pub mask: Vec<bool>,
}

impl Bundle {
    pub fn connects(&self, a: u16, b: u16) -> bool {
        (self.labels[0] == a && self.labels[1] == b) || (self.labels[0] == b && self.labels[1] == a)
    }

    pub fn voxel_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomVolume {
    dims: [usize; 3],
    voxel_size: f64,
    k: usize,
    wm: ScalarField3D,
    /// `4k` values per voxel: unit direction then amplitude, per peak.
    peaks: Vec<f64>,
    roi: Vec<u16>,
    bundles: Vec<Bundle>,
}

impl PhantomVolume {
    pub fn new(
        dims: [usize; 3],
        voxel_size: f64,
        k: usize,
        wm: Vec<f64>,
        peaks: Vec<f64>,
        roi: Vec<u16>,
        bundles: Vec<Bundle>,
    ) -> Result<Self> {
        let n: usize = dims.iter().product();
        let bad = |what: &str| {
            Err(Error::InvalidInput(format!(
                "{what} does not match grid {dims:?}"
            )))
        };
        if peaks.len() != n * 4 * k {
            return bad("peak field");
        }
        if roi.len() != n {
            return bad("ROI map");
        }
        if bundles.iter().any(|b| b.mask.len() != n) {
            return bad("bundle mask");
        }
        if k == 0 {
            return Err(Error::InvalidInput("peak count K must be positive".into()));
        }
        let wm = ScalarField3D::new(dims, wm.into_iter().map(|w| [w]).collect())?;
        Ok(Self {
            dims,
            voxel_size,
            k,
            wm,
            peaks,
            roi,
            bundles,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_count(&self) -> usize {
        self.roi.len()
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    /// Maximum number of peaks per voxel.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn wm(&self) -> &ScalarField3D {
        &self.wm
    }

    /// Trilinear WM value, 0 outside the grid.
    pub fn wm_at(&self, p: Vec3) -> f64 {
        self.wm.sample(p).unwrap_or(0.0)
    }

    pub fn roi_labels(&self) -> &[u16] {
        &self.roi
    }

    pub fn roi_at(&self, v: [usize; 3]) -> u16 {
        self.roi[linear_index(self.dims, v)]
    }

    pub fn bundles(&self) -> &[Bundle] {
        &self.bundles
    }

    /// Raw `4K`-wide descriptor of voxel `v`.
    pub fn descriptor(&self, v: [usize; 3]) -> &[f64] {
        let w = 4 * self.k;
        let i = linear_index(self.dims, v) * w;
        &self.peaks[i..i + w]
    }

    pub fn peak_values(&self) -> &[f64] {
        &self.peaks
    }

    pub fn peak_set(&self, v: [usize; 3]) -> PeakSet {
        let peaks = self
            .descriptor(v)
            .chunks(4)
            .filter(|c| c[3] > 0.0)
            .map(|c| Peak {
                dir: Vec3::new(c[0], c[1], c[2]),
                amplitude: c[3],
            })
            .collect();
        PeakSet { peaks }
    }

    /// Peaks of the voxel nearest to `p`; empty outside the grid.
    pub fn peaks_near(&self, p: Vec3) -> PeakSet {
        match crate::geometry::checked_voxel(self.dims, p.round()) {
            Some(v) => self.peak_set(v),
            None => PeakSet::default(),
        }
    }

    /// Bundle index for an unordered ROI pair.
    pub fn valid_pair(&self, a: u16, b: u16) -> Option<usize> {
        self.bundles.iter().position(|bd| bd.connects(a, b))
    }

    /// Centroid of the voxels carrying `label`.
    pub fn roi_centroid(&self, label: u16) -> Option<Vec3> {
        let mut sum = Vec3::ZERO;
        let mut n = 0usize;
        for (i, &l) in self.roi.iter().enumerate() {
            if l == label {
                let v = crate::geometry::voxel_of_index(self.dims, i);
                sum += Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64);
                n += 1;
            }
        }
        (n > 0).then(|| sum * (1.0 / n as f64))
    }
}

/// Densified centreline with unit tangents per segment.
#[derive(Debug, Clone)]
pub(crate) struct DenseCurve {
    pub points: Vec<Vec3>,
}

impl DenseCurve {
    pub fn tangent(&self, seg: usize) -> Vec3 {
        (self.points[seg + 1] - self.points[seg])
            .normalized()
            .unwrap_or(Vec3::ZERO)
    }

    /// Radial and axial distance of `p` from the tube around this curve, and
    /// the index of the closest segment. The tube has flat caps: `axial` is
    /// the distance past an endpoint, 0 alongside the curve.
    pub fn locate(&self, p: Vec3) -> (f64, f64, usize) {
        let last = self.points.len() - 2;
        let mut best = (f64::INFINITY, 0.0, 0usize, 0.0);
        for (i, w) in self.points.windows(2).enumerate() {
            let seg = w[1] - w[0];
            let len2 = seg.dot(seg);
            let t = (p - w[0]).dot(seg) / len2;
            let d = p.distance(w[0] + seg * t.clamp(0.0, 1.0));
            if d < best.0 {
                best = (d, t, i, len2.sqrt());
            }
        }
        let (d, t, i, len) = best;
        let w0 = self.points[i];
        let seg = self.points[i + 1] - w0;
        if i == 0 && t < 0.0 {
            ((p - (w0 + seg * t)).norm(), -t * len, i)
        } else if i == last && t > 1.0 {
            ((p - (w0 + seg * t)).norm(), (t - 1.0) * len, i)
        } else {
            (d, 0.0, i)
        }
    }
}

impl Centerline {
    pub(crate) fn densify(&self) -> Result<DenseCurve> {
        let points = match self {
            Centerline::Polyline { points } => {
                if points.len() < 2 {
                    return Err(Error::Spec("polyline centreline needs 2 points".into()));
                }
                let pts: Vec<Vec3> = points.iter().map(|&p| Vec3::from_array(p)).collect();
                let mut out = vec![pts[0]];
                for w in pts.windows(2) {
                    let n = ((w[0].distance(w[1]) / DENSE_STEP).ceil() as usize).max(1);
                    out.extend((1..=n).map(|k| w[0] + (w[1] - w[0]) * (k as f64 / n as f64)));
                }
                out
            }
            Centerline::Arc { start, mid, end } => arc_points(
                Vec3::from_array(*start),
                Vec3::from_array(*mid),
                Vec3::from_array(*end),
            )?,
            Centerline::Bezier { control } => {
                if control.len() < 2 {
                    return Err(Error::Spec(
                        "bezier centreline needs 2 control points".into(),
                    ));
                }
                let ctrl: Vec<Vec3> = control.iter().map(|&p| Vec3::from_array(p)).collect();
                let rough: f64 = ctrl.windows(2).map(|w| w[0].distance(w[1])).sum();
                let n = ((rough / DENSE_STEP).ceil() as usize).max(1);
                (0..=n)
                    .map(|k| de_casteljau(&ctrl, k as f64 / n as f64))
                    .collect()
            }
        };
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Spec("centreline has non-finite points".into()));
        }
        let mut dedup: Vec<Vec3> = Vec::with_capacity(points.len());
        for p in points {
            if dedup.last().is_none_or(|q: &Vec3| q.distance(p) > 1e-9) {
                dedup.push(p);
            }
        }
        if dedup.len() < 2 {
            return Err(Error::Spec("centreline has zero length".into()));
        }
        Ok(DenseCurve { points: dedup })
    }
}

fn de_casteljau(ctrl: &[Vec3], t: f64) -> Vec3 {
    let mut pts = ctrl.to_vec();
    for level in (1..pts.len()).rev() {
        for i in 0..level {
            pts[i] = pts[i] * (1.0 - t) + pts[i + 1] * t;
        }
    }
    pts[0]
}

fn arc_points(a: Vec3, b: Vec3, c: Vec3) -> Result<Vec<Vec3>> {
    // circumcentre of the triangle abc
    let (ab, ac) = (b - a, c - a);
    let n = ab.cross(ac);
    let n2 = n.dot(n);
    if n2 < 1e-12 {
        return Err(Error::Spec("arc control points are collinear".into()));
    }
    let centre = a + (n.cross(ab) * ac.dot(ac) + ac.cross(n) * ab.dot(ab)) * (0.5 / n2);
    let r = centre.distance(a);
    let e1 = (a - centre).normalized().unwrap();
    let e2 = n.cross(e1).normalized().unwrap();
    let angle_of = |p: Vec3| {
        let d = p - centre;
        let th = d.dot(e2).atan2(d.dot(e1));
        if th < 0.0 {
            th + std::f64::consts::TAU
        } else {
            th
        }
    };
    // b lies between a and c when walking in the e2 direction, by
    // construction of the normal
    let sweep = angle_of(c);
    let n_steps = ((r * sweep / DENSE_STEP).ceil() as usize).max(2);
    Ok((0..=n_steps)
        .map(|k| {
            let th = sweep * k as f64 / n_steps as f64;
            centre + e1 * (r * th.cos()) + e2 * (r * th.sin())
        })
        .collect())
}

struct Prepared {
    curve: DenseCurve,
    radius: f64,
    labels: [u16; 2],
    lo: [i64; 3],
    hi: [i64; 3],
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bundles.is_empty() {
            return Err(Error::Spec("at least one bundle is required".into()));
        }
        if self.dims.iter().any(|&d| d < 16) {
            return Err(Error::Spec(format!(
                "every dimension must be >= 16, got {:?}",
                self.dims
            )));
        }
        if !(self.max_peaks >= 1 && self.max_peaks <= 255) {
            return Err(Error::Spec("max_peaks must be in 1..=255".into()));
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::Spec("voxel_size must be positive".into()));
        }
        if !(self.amplitude_noise >= 0.0 && self.amplitude_noise.is_finite()) {
            return Err(Error::Spec("amplitude_noise must be non-negative".into()));
        }
        let mut seen = Vec::new();
        for b in &self.bundles {
            if !(b.radius >= 1.0 && b.radius.is_finite()) {
                return Err(Error::Spec(format!(
                    "bundle {} radius must be >= 1",
                    b.name
                )));
            }
            for l in b.labels {
                if l == 0 {
                    return Err(Error::Spec(format!(
                        "bundle {} uses reserved label 0",
                        b.name
                    )));
                }
                if seen.contains(&l) {
                    return Err(Error::Spec(format!(
                        "ROI label {l} is used by more than one endpoint"
                    )));
                }
                seen.push(l);
            }
        }
        Ok(())
    }
}

/// Rasterises `spec` into a volume. Only `amplitude_noise` consumes the RNG,
/// so noise-free specs give the same volume for every seed.
pub fn generate_phantom(spec: &PhantomSpec, rng_seed: u64) -> Result<PhantomVolume> {
    spec.validate()?;
    let dims = spec.dims;
    let k = spec.max_peaks;
    let margin = |r: f64| r + ROI_DEPTH + 2.0;
    let mut prepared = Vec::new();
    for b in &spec.bundles {
        let curve = b.centerline.densify()?;
        for p in &curve.points {
            if (0..3).any(|a| p.to_array()[a] < 0.0 || p.to_array()[a] > (dims[a] - 1) as f64) {
                return Err(Error::Spec(format!(
                    "bundle {} leaves the grid at {p:?}",
                    b.name
                )));
            }
        }
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for p in &curve.points {
            let c = p.to_array();
            for a in 0..3 {
                lo[a] = lo[a].min((c[a] - margin(b.radius)).floor() as i64);
                hi[a] = hi[a].max((c[a] + margin(b.radius)).ceil() as i64);
            }
        }
        prepared.push(Prepared {
            curve,
            radius: b.radius,
            labels: b.labels,
            lo,
            hi,
        });
    }

    let n: usize = dims.iter().product();
    let mut wm = vec![0.0f64; n];
    let mut roi = vec![0u16; n];
    let mut masks = vec![vec![false; n]; prepared.len()];
    let mut tangents: Vec<Vec<Vec3>> = vec![Vec::new(); n];

    for (bi, b) in prepared.iter().enumerate() {
        for z in b.lo[2]..=b.hi[2] {
            for y in b.lo[1]..=b.hi[1] {
                for x in b.lo[0]..=b.hi[0] {
                    let p = Vec3::new(x as f64, y as f64, z as f64);
                    let (radial, axial, seg) = b.curve.locate(p);
                    let inside = radial <= b.radius && axial == 0.0;
                    let roi_label = if axial > 0.0 && axial <= ROI_DEPTH && radial <= b.radius + 1.0
                    {
                        Some(if seg == 0 { b.labels[0] } else { b.labels[1] })
                    } else {
                        None
                    };
                    let w = (1.0 - ((radial - b.radius).max(0.0).powi(2) + axial * axial).sqrt())
                        .clamp(0.0, 1.0);
                    let in_grid =
                        (0..3).all(|a| [x, y, z][a] >= 0 && ([x, y, z][a] as usize) < dims[a]);
                    if !in_grid {
                        if inside || roi_label.is_some() {
                            return Err(Error::Spec(format!(
                                "bundle {} or its ROI extends outside the grid near {:?}",
                                spec.bundles[bi].name,
                                [x, y, z]
                            )));
                        }
                        continue;
                    }
                    let i = linear_index(dims, [x as usize, y as usize, z as usize]);
                    wm[i] = f64::max(wm[i], w);
                    if inside {
                        masks[bi][i] = true;
                        tangents[i].push(b.curve.tangent(seg));
                    }
                    if let Some(l) = roi_label {
                        if roi[i] != 0 && roi[i] != l {
                            return Err(Error::Spec(format!(
                                "ROI disks {} and {l} overlap at {:?}",
                                roi[i],
                                [x, y, z]
                            )));
                        }
                        roi[i] = l;
                    }
                }
            }
        }
    }
    // tube interiors win over ROI disks of other bundles
    for i in 0..n {
        if !tangents[i].is_empty() {
            roi[i] = 0;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise =
        (spec.amplitude_noise > 0.0).then(|| Normal::new(0.0, spec.amplitude_noise).unwrap());
    let mut peaks = vec![0.0; n * 4 * k];
    for (i, ts) in tangents.iter().enumerate() {
        let mut set: Vec<Peak> = ts
            .iter()
            .map(|&t| {
                let amplitude = match &noise {
                    Some(d) => (1.0 - d.sample(&mut rng).abs()).clamp(0.05, 1.0),
                    None => 1.0,
                };
                Peak {
                    dir: t.to_f32_precision(),
                    amplitude: amplitude as f32 as f64,
                }
            })
            .collect();
        set.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
        set.truncate(k);
        let d = PeakSet { peaks: set }.descriptor(k);
        peaks[i * 4 * k..(i + 1) * 4 * k].copy_from_slice(&d);
    }

    let bundles = prepared
        .iter()
        .zip(masks)
        .map(|(b, mask)| Bundle {
            labels: b.labels,
            mask,
        })
        .collect();
    let wm = wm.into_iter().map(|w| w as f32 as f64).collect();
    PhantomVolume::new(dims, spec.voxel_size, k, wm, peaks, roi, bundles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{segment_angle, voxel_of_index};

    #[test]
    fn straight_tube_peaks_point_along_z() {
        let v = generate_phantom(&presets::straight_tube(), 0).unwrap();
        assert_eq!(v.dims(), [16, 16, 48]);
        let mask = &v.bundles()[0].mask;
        let mut n = 0;
        for (i, &m) in mask.iter().enumerate() {
            let ps = v.peak_set(voxel_of_index(v.dims(), i));
            if m {
                n += 1;
                assert_eq!(
                    ps.peaks,
                    vec![Peak {
                        dir: Vec3::new(0.0, 0.0, 1.0),
                        amplitude: 1.0
                    }]
                );
            } else {
                assert!(ps.is_empty());
            }
        }
        assert!(n > 0);
    }

    #[test]
    fn right_angle_crossing_has_two_peaks_in_the_overlap() {
        let v = generate_phantom(&presets::right_angle_crossing(), 0).unwrap();
        let [a, b] = [&v.bundles()[0].mask, &v.bundles()[1].mask];
        let mut overlap = 0;
        for i in 0..v.voxel_count() {
            let ps = v.peak_set(voxel_of_index(v.dims(), i));
            if a[i] && b[i] {
                overlap += 1;
                let dirs: Vec<Vec3> = ps.peaks.iter().map(|p| p.dir).collect();
                assert_eq!(ps.len(), 2);
                assert!(dirs.contains(&Vec3::new(0.0, 0.0, 1.0)));
                assert!(dirs.contains(&Vec3::new(0.0, 1.0, 0.0)));
            }
        }
        assert!(overlap > 0);
    }

    #[test]
    fn arc_peaks_are_tangent() {
        let spec = PhantomSpec {
            name: "arc".into(),
            dims: [16, 40, 40],
            voxel_size: 1.0,
            max_peaks: 3,
            amplitude_noise: 0.0,
            bundles: vec![BundleSpec {
                name: "a".into(),
                centerline: Centerline::Arc {
                    start: [7.5, 6.0, 5.0],
                    mid: [7.5, 19.5, 18.0],
                    end: [7.5, 33.0, 5.0],
                },
                radius: 2.0,
                labels: [1, 2],
            }],
        };
        let v = generate_phantom(&spec, 0).unwrap();
        // analytic circle through the three control points
        let (a, b, c) = ((6.0f64, 5.0f64), (19.5f64, 18.0f64), (33.0f64, 5.0f64));
        let cy = 19.5;
        let cz =
            ((a.0 - cy).powi(2) + a.1 * a.1 - (b.0 - cy).powi(2) - b.1 * b.1) / (2.0 * (a.1 - b.1));
        assert!(
            ((c.0 - cy).powi(2) + (c.1 - cz).powi(2) - (a.0 - cy).powi(2) - (a.1 - cz).powi(2))
                .abs()
                < 1e-9
        );
        let mut checked = 0;
        for (i, &m) in v.bundles()[0].mask.iter().enumerate() {
            if !m {
                continue;
            }
            let p = voxel_of_index(v.dims(), i);
            let radial = Vec3::new(0.0, p[1] as f64 - cy, p[2] as f64 - cz);
            let tangent = Vec3::new(0.0, -radial.z, radial.y);
            let ang = segment_angle(v.peak_set(p).peaks[0].dir, tangent).unwrap();
            assert!(ang.min(180.0 - ang) < 5.0, "voxel {p:?}: {ang}");
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn wm_is_one_inside_and_bounded() {
        let v = generate_phantom(&presets::two_arcs_one_crossing(), 42).unwrap();
        for (i, w) in v.wm().values().iter().enumerate() {
            assert!((0.0..=1.0).contains(&w[0]));
            if v.bundles().iter().any(|b| b.mask[i]) {
                assert_eq!(w[0], 1.0);
            }
            let pv = voxel_of_index(v.dims(), i);
            if !v.peak_set(pv).is_empty() {
                assert!(w[0] > 0.0);
            }
        }
        for (a, b) in [(1, 2), (3, 4)] {
            assert!(v.valid_pair(a, b).is_some());
            assert!(v.roi_labels().contains(&a) && v.roi_labels().contains(&b));
        }
    }

    #[test]
    fn peaks_are_unit_and_sorted() {
        let mut spec = presets::four_bundles();
        spec.amplitude_noise = 0.2;
        let v = generate_phantom(&spec, 7).unwrap();
        for i in 0..v.voxel_count() {
            let ps = v.peak_set(voxel_of_index(v.dims(), i));
            for p in &ps.peaks {
                assert!((p.dir.norm() - 1.0).abs() < 1e-6);
                assert!((0.0..=1.0).contains(&p.amplitude));
            }
            assert!(ps
                .peaks
                .windows(2)
                .all(|w| w[0].amplitude >= w[1].amplitude));
        }
    }

    #[test]
    fn spec_errors() {
        let mut s = presets::straight_tube();
        s.bundles[0].centerline = Centerline::Polyline {
            points: vec![[7.5, 7.5, 0.5], [7.5, 7.5, 30.0]],
        };
        assert!(matches!(generate_phantom(&s, 0), Err(Error::Spec(_))));

        let mut s = presets::right_angle_crossing();
        s.bundles[1].labels = [2, 5];
        assert!(matches!(generate_phantom(&s, 0), Err(Error::Spec(_))));

        let mut s = presets::straight_tube();
        s.dims = [15, 16, 48];
        assert!(generate_phantom(&s, 0).is_err());

        let mut s = presets::straight_tube();
        s.bundles[0].radius = 0.5;
        assert!(generate_phantom(&s, 0).is_err());
    }

    #[test]
    fn spec_parses_from_toml() {
        let text = r#"
            name = "t"
            dims = [16, 16, 48]
            [[bundles]]
            name = "z"
            radius = 3.0
            labels = [1, 2]
            centerline = { kind = "polyline", points = [[7.5, 7.5, 3.0], [7.5, 7.5, 44.0]] }
        "#;
        let spec: PhantomSpec = toml::from_str(text).unwrap();
        assert_eq!(spec, presets::straight_tube_named("t", "z"));
    }
}
