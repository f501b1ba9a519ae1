//! Tractometer-style scoring of a tractogram against phantom ground truth.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::{checked_voxel, linear_index, voxel_of_index, Streamline, Vec3};
use crate::phantom::PhantomVolume;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Fraction of points that must lie in the dilated bundle mask for a
    /// valid connection.
    pub vc_path_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            vc_path_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Connection {
    Valid {
        bundle: usize,
    },
    /// Unordered ROI pair, smaller label first.
    Invalid {
        pair: (u16, u16),
    },
    NoConnection,
}

/// Label of the voxel nearest to `p`, or failing that of the closest
/// labelled voxel in its 3x3x3 neighbourhood; 0 when none is found.
pub fn endpoint_label(v: &PhantomVolume, p: Vec3) -> u16 {
    let dims = v.dims();
    let c = p.round();
    if let Some(q) = checked_voxel(dims, c) {
        let l = v.roi_at(q);
        if l != 0 {
            return l;
        }
    }
    let mut best: Option<(f64, usize, u16)> = None;
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let Some(q) = checked_voxel(dims, [c[0] + dx, c[1] + dy, c[2] + dz]) else {
                    continue;
                };
                let l = v.roi_at(q);
                if l == 0 {
                    continue;
                }
                let d = p.distance(Vec3::new(q[0] as f64, q[1] as f64, q[2] as f64));
                let key = (d, linear_index(dims, q), l);
                if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                    best = Some(key);
                }
            }
        }
    }
    best.map_or(0, |b| b.2)
}

/// Bundle masks grown by one voxel in all 26 directions.
pub struct DilatedMasks {
    dims: [usize; 3],
    masks: Vec<Vec<bool>>,
}

impl DilatedMasks {
    pub fn new(v: &PhantomVolume) -> Self {
        let dims = v.dims();
        let masks = v
            .bundles()
            .iter()
            .map(|b| {
                let mut out = vec![false; b.mask.len()];
                for (i, _) in b.mask.iter().enumerate().filter(|(_, &m)| m) {
                    let p = voxel_of_index(dims, i);
                    for dz in -1..=1 {
                        for dy in -1..=1 {
                            for dx in -1..=1 {
                                let q = [p[0] as i64 + dx, p[1] as i64 + dy, p[2] as i64 + dz];
                                if let Some(q) = checked_voxel(dims, q) {
                                    out[linear_index(dims, q)] = true;
                                }
                            }
                        }
                    }
                }
                out
            })
            .collect();
        Self { dims, masks }
    }

    pub fn contains(&self, bundle: usize, p: Vec3) -> bool {
        checked_voxel(self.dims, p.round())
            .is_some_and(|q| self.masks[bundle][linear_index(self.dims, q)])
    }
}

pub fn classify(
    v: &PhantomVolume,
    masks: &DilatedMasks,
    s: &Streamline,
    cfg: &EvalConfig,
) -> Connection {
    let (Some(first), Some(last)) = (s.first(), s.last()) else {
        return Connection::NoConnection;
    };
    let (a, b) = (endpoint_label(v, first), endpoint_label(v, last));
    if a == 0 || b == 0 || a == b {
        return Connection::NoConnection;
    }
    let pair = (a.min(b), a.max(b));
    match v.valid_pair(a, b) {
        Some(bundle) => {
            let inside = s
                .points()
                .iter()
                .filter(|&&p| masks.contains(bundle, p))
                .count();
            if inside as f64 >= cfg.vc_path_fraction * s.len() as f64 {
                Connection::Valid { bundle }
            } else {
                Connection::Invalid { pair }
            }
        }
        None => Connection::Invalid { pair },
    }
}

pub fn segment(v: &PhantomVolume, streamlines: &[Streamline]) -> Vec<Connection> {
    segment_with(v, streamlines, &EvalConfig::default())
}

pub fn segment_with(
    v: &PhantomVolume,
    streamlines: &[Streamline],
    cfg: &EvalConfig,
) -> Vec<Connection> {
    if streamlines.is_empty() {
        return Vec::new();
    }
    let masks = DilatedMasks::new(v);
    streamlines
        .iter()
        .map(|s| classify(v, &masks, s, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleScore {
    pub bundle: usize,
    pub labels: [u16; 2],
    pub streamlines: usize,
    pub ol_pct: f64,
    pub or_pct: f64,
    pub f1_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TractometerReport {
    pub n_streamlines: usize,
    pub empty: bool,
    pub vc_pct: f64,
    pub ic_pct: f64,
    pub nc_pct: f64,
    pub vb: usize,
    pub ib: usize,
    pub n_bundles: usize,
    /// Recovered bundles only.
    pub bundles: Vec<BundleScore>,
    pub mean_ol_pct: f64,
    pub mean_or_pct: f64,
    pub mean_f1_pct: f64,
}

pub fn report(v: &PhantomVolume, streamlines: &[Streamline]) -> TractometerReport {
    report_with(v, streamlines, &EvalConfig::default())
}

pub fn report_with(
    v: &PhantomVolume,
    streamlines: &[Streamline],
    cfg: &EvalConfig,
) -> TractometerReport {
    let classes = segment_with(v, streamlines, cfg);
    let n = classes.len();
    let mut rep = TractometerReport {
        n_streamlines: n,
        empty: n == 0,
        vc_pct: 0.0,
        ic_pct: 0.0,
        nc_pct: 0.0,
        vb: 0,
        ib: 0,
        n_bundles: v.bundles().len(),
        bundles: Vec::new(),
        mean_ol_pct: 0.0,
        mean_or_pct: 0.0,
        mean_f1_pct: 0.0,
    };
    if n == 0 {
        return rep;
    }
    let count = |f: fn(&Connection) -> bool| classes.iter().filter(|c| f(c)).count();
    let vc = count(|c| matches!(c, Connection::Valid { .. }));
    let ic = count(|c| matches!(c, Connection::Invalid { .. }));
    let nc = n - vc - ic;
    rep.vc_pct = 100.0 * vc as f64 / n as f64;
    rep.ic_pct = 100.0 * ic as f64 / n as f64;
    rep.nc_pct = 100.0 * nc as f64 / n as f64;
    rep.ib = classes
        .iter()
        .filter_map(|c| match c {
            Connection::Invalid { pair } => Some(*pair),
            _ => None,
        })
        .collect::<BTreeSet<_>>()
        .len();

    let dims = v.dims();
    for (bi, bundle) in v.bundles().iter().enumerate() {
        let members: Vec<&Streamline> = streamlines
            .iter()
            .zip(&classes)
            .filter(|(_, c)| **c == Connection::Valid { bundle: bi })
            .map(|(s, _)| s)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut traversed = BTreeSet::new();
        for s in &members {
            for p in s.points() {
                if let Some(q) = checked_voxel(dims, p.round()) {
                    traversed.insert(linear_index(dims, q));
                }
            }
        }
        let size = bundle.voxel_count() as f64;
        let hit = traversed.iter().filter(|&&i| bundle.mask[i]).count() as f64;
        let extra = traversed.len() as f64 - hit;
        let ol = hit / size;
        let or = extra / size;
        rep.bundles.push(BundleScore {
            bundle: bi,
            labels: bundle.labels,
            streamlines: members.len(),
            ol_pct: 100.0 * ol,
            or_pct: 100.0 * or,
            f1_pct: 100.0 * 2.0 * hit / (traversed.len() as f64 + size),
        });
    }
    rep.vb = rep.bundles.len();
    if rep.vb > 0 {
        let mean =
            |f: fn(&BundleScore) -> f64| rep.bundles.iter().map(f).sum::<f64>() / rep.vb as f64;
        rep.mean_ol_pct = mean(|b| b.ol_pct);
        rep.mean_or_pct = mean(|b| b.or_pct);
        rep.mean_f1_pct = mean(|b| b.f1_pct);
    }
    rep
}

impl TractometerReport {
    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "streamlines: {}", self.n_streamlines);
        let _ = writeln!(s, "empty: {}", self.empty);
        let _ = writeln!(s, "vc_pct: {:.6}", self.vc_pct);
        let _ = writeln!(s, "ic_pct: {:.6}", self.ic_pct);
        let _ = writeln!(s, "nc_pct: {:.6}", self.nc_pct);
        let _ = writeln!(s, "vb: {}", self.vb);
        let _ = writeln!(s, "ib: {}", self.ib);
        let _ = writeln!(s, "bundles: {}", self.n_bundles);
        let _ = writeln!(s, "mean_ol_pct: {:.6}", self.mean_ol_pct);
        let _ = writeln!(s, "mean_or_pct: {:.6}", self.mean_or_pct);
        let _ = writeln!(s, "mean_f1_pct: {:.6}", self.mean_f1_pct);
        s
    }

    /// One row per recovered bundle.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bundle,label_a,label_b,streamlines,ol_pct,or_pct,f1_pct\n");
        for b in &self.bundles {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                b.bundle, b.labels[0], b.labels[1], b.streamlines, b.ol_pct, b.or_pct, b.f1_pct
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, presets};

    fn line(from: [f64; 3], to: [f64; 3], n: usize) -> Streamline {
        let (a, b) = (Vec3::from_array(from), Vec3::from_array(to));
        Streamline::new(
            (0..n)
                .map(|i| a + (b - a) * (i as f64 / (n - 1) as f64))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn hand_enumerated_case() {
        let v = generate_phantom(&presets::right_angle_crossing(), 0).unwrap();
        // ROI 1 at z=2, ROI 2 at z=37 around (7.5, 19.5); ROI 3/4 at y=2/37 around z=19.5
        let vc = |dx: f64| line([7.5 + dx, 19.5, 2.0], [7.5 + dx, 19.5, 37.0], 71);
        let t = vec![
            vc(0.0),
            vc(1.0),
            vc(-1.0),
            line([7.5, 19.5, 2.0], [7.5, 2.0, 19.5], 40),
            line([7.5, 19.5, 5.0], [7.5, 19.5, 20.0], 30),
        ];
        let classes = segment(&v, &t);
        assert_eq!(classes[..3], [Connection::Valid { bundle: 0 }; 3]);
        assert_eq!(classes[3], Connection::Invalid { pair: (1, 3) });
        assert_eq!(classes[4], Connection::NoConnection);
        let r = report(&v, &t);
        assert_eq!((r.vc_pct, r.ic_pct, r.nc_pct), (60.0, 20.0, 20.0));
        assert_eq!((r.vb, r.ib), (1, 1));
    }

    #[test]
    fn perfect_trace_gives_full_overlap() {
        let v = generate_phantom(&presets::straight_tube(), 0).unwrap();
        // one streamline per voxel column of the tube; endpoints in the first
        // and last tube slices pick up the ROI labels through dilation
        let t: Vec<Streamline> = v.bundles()[0]
            .mask
            .iter()
            .enumerate()
            .filter(|(i, &m)| m && voxel_of_index(v.dims(), *i)[2] == 3)
            .map(|(i, _)| {
                let p = voxel_of_index(v.dims(), i);
                line(
                    [p[0] as f64, p[1] as f64, 3.0],
                    [p[0] as f64, p[1] as f64, 44.0],
                    42,
                )
            })
            .collect();
        let r = report(&v, &t);
        assert_eq!(r.vc_pct, 100.0);
        let b = &r.bundles[0];
        assert_eq!((b.ol_pct, b.or_pct, b.f1_pct), (100.0, 0.0, 100.0));
    }

    #[test]
    fn empty_tractogram() {
        let v = generate_phantom(&presets::straight_tube(), 0).unwrap();
        let r = report(&v, &[]);
        assert!(r.empty);
        assert_eq!(
            (r.vc_pct, r.ic_pct, r.nc_pct, r.vb, r.ib),
            (0.0, 0.0, 0.0, 0, 0)
        );
        assert!(segment(&v, &[]).is_empty());
        assert!(r.to_text().contains("empty: true"));
    }

    #[test]
    fn same_roi_at_both_ends_is_no_connection() {
        let v = generate_phantom(&presets::straight_tube(), 0).unwrap();
        let s = line([7.5, 7.5, 2.0], [8.5, 7.5, 2.0], 3);
        assert_eq!(segment(&v, &[s]), vec![Connection::NoConnection]);
    }

    #[test]
    fn endpoint_dilation() {
        let v = generate_phantom(&presets::straight_tube(), 0).unwrap();
        assert_eq!(endpoint_label(&v, Vec3::new(7.5, 7.5, 2.0)), 1);
        assert_eq!(endpoint_label(&v, Vec3::new(7.5, 7.5, 3.2)), 1);
        assert_eq!(endpoint_label(&v, Vec3::new(7.5, 7.5, 20.0)), 0);
        assert_eq!(endpoint_label(&v, Vec3::new(-5.0, 7.5, 2.0)), 0);
    }

    #[test]
    fn adding_ic_cannot_raise_vc() {
        let v = generate_phantom(&presets::right_angle_crossing(), 0).unwrap();
        let mut t = vec![line([7.5, 19.5, 2.0], [7.5, 19.5, 37.0], 71)];
        let before = report(&v, &t).vc_pct;
        t.push(line([7.5, 19.5, 2.0], [7.5, 2.0, 19.5], 40));
        assert!(report(&v, &t).vc_pct <= before);
    }
}
