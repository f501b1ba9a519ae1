//! Labelled plausible / implausible streamlines built from a phantom.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::seeds::FACE_NEIGHBOURS;
use super::{interface_voxels, PhantomVolume};
use crate::error::{Error, Result};
use crate::evaluator::{classify, Connection, DilatedMasks, EvalConfig};
use crate::geometry::{checked_voxel, segment_angle, Streamline, Vec3};

const MAX_ATTEMPTS: usize = 200;
/// Early-stop negatives are never longer than this many voxels.
const EARLY_STOP_CAP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SampleKind {
    Positive,
    EarlyStop,
    WrongPair,
    Loop,
    WmExit,
}

impl SampleKind {
    pub const NEGATIVES: [SampleKind; 4] = [
        SampleKind::EarlyStop,
        SampleKind::WrongPair,
        SampleKind::Loop,
        SampleKind::WmExit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SampleKind::Positive => "positive",
            SampleKind::EarlyStop => "early-stop",
            SampleKind::WrongPair => "wrong-pair",
            SampleKind::Loop => "loop",
            SampleKind::WmExit => "wm-exit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [SampleKind::Positive]
            .into_iter()
            .chain(Self::NEGATIVES)
            .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledStreamlineSet {
    pub streamlines: Vec<Streamline>,
    pub targets: Vec<f64>,
    pub kinds: Vec<SampleKind>,
}

impl LabeledStreamlineSet {
    pub fn len(&self) -> usize {
        self.streamlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streamlines.is_empty()
    }

    pub fn push(&mut self, s: Streamline, kind: SampleKind) {
        self.targets.push(if kind == SampleKind::Positive {
            1.0
        } else {
            0.0
        });
        self.streamlines.push(s);
        self.kinds.push(kind);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    /// Spacing between consecutive points, in voxels.
    pub step: f64,
    /// Per-step direction perturbation (standard deviation of the added
    /// vector, relative to a unit direction).
    pub wobble: f64,
    /// Negative modes to draw from, cycled in order.
    pub negatives: Vec<SampleKind>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            step: 0.5,
            wobble: 0.05,
            negatives: SampleKind::NEGATIVES.to_vec(),
        }
    }
}

pub fn synthesize_labeled_set(
    v: &PhantomVolume,
    n_pos: usize,
    n_neg: usize,
    rng_seed: u64,
) -> Result<LabeledStreamlineSet> {
    synthesize_labeled_set_with(v, n_pos, n_neg, rng_seed, &SynthOptions::default())
}

/// Positives first, then negatives; shuffle downstream if needed.
pub fn synthesize_labeled_set_with(
    v: &PhantomVolume,
    n_pos: usize,
    n_neg: usize,
    rng_seed: u64,
    opts: &SynthOptions,
) -> Result<LabeledStreamlineSet> {
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput(
            "need at least one positive and one negative".into(),
        ));
    }
    let mut negatives = opts.negatives.clone();
    if v.bundles().len() < 2 {
        negatives.retain(|k| *k != SampleKind::WrongPair);
    }
    negatives.retain(|k| *k != SampleKind::Positive);
    if negatives.is_empty() {
        return Err(Error::InvalidInput("no usable negative modes".into()));
    }
    let synth = Synth::new(v, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut set = LabeledStreamlineSet::default();
    for i in 0..n_pos {
        let s = synth.retry(|| synth.positive(i % v.bundles().len(), &mut rng))?;
        set.push(s, SampleKind::Positive);
    }
    for i in 0..n_neg {
        let kind = negatives[i % negatives.len()];
        let bundle = (i / negatives.len()) % v.bundles().len();
        let s = synth.retry(|| synth.negative(kind, bundle, &mut rng))?;
        set.push(s, kind);
    }
    Ok(set)
}

struct Synth<'a> {
    v: &'a PhantomVolume,
    masks: DilatedMasks,
    eval: EvalConfig,
    step: f64,
    wobble: f64,
    /// Interface voxels per bundle, with the label of the touching ROI.
    starts: Vec<Vec<([usize; 3], u16)>>,
}

impl<'a> Synth<'a> {
    fn new(v: &'a PhantomVolume, opts: &SynthOptions) -> Result<Self> {
        let dims = v.dims();
        let mut starts = vec![Vec::new(); v.bundles().len()];
        for p in interface_voxels(v) {
            for d in FACE_NEIGHBOURS {
                let q = [p[0] as i64 + d[0], p[1] as i64 + d[1], p[2] as i64 + d[2]];
                let Some(q) = checked_voxel(dims, q) else {
                    continue;
                };
                let l = v.roi_at(q);
                if l == 0 {
                    continue;
                }
                if let Some(b) = v.bundles().iter().position(|b| b.labels.contains(&l)) {
                    let i = crate::geometry::linear_index(dims, p);
                    if v.bundles()[b].mask[i] && !starts[b].contains(&(p, l)) {
                        starts[b].push((p, l));
                    }
                }
                break;
            }
        }
        if let Some(b) = starts.iter().position(Vec::is_empty) {
            return Err(Error::Degenerate(format!(
                "bundle {b} has no interface voxels"
            )));
        }
        Ok(Self {
            v,
            masks: DilatedMasks::new(v),
            eval: EvalConfig::default(),
            step: opts.step,
            wobble: opts.wobble,
            starts,
        })
    }

    fn retry(&self, mut f: impl FnMut() -> Option<Streamline>) -> Result<Streamline> {
        (0..MAX_ATTEMPTS).find_map(|_| f()).ok_or_else(|| {
            Error::Degenerate("could not synthesise a streamline of the requested kind".into())
        })
    }

    fn class(&self, s: &Streamline) -> Connection {
        classify(self.v, &self.masks, s, &self.eval)
    }

    /// Peak-following walk from a jittered interface seed of `bundle` until
    /// the WM mask drops below 0.1.
    fn walk(&self, bundle: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Vec3>> {
        let &(voxel, label) = self.starts[bundle].choose(rng)?;
        let centre = Vec3::new(voxel[0] as f64, voxel[1] as f64, voxel[2] as f64);
        let jitter = Vec3::new(
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.4..0.4),
        );
        let start = centre + jitter;
        let away = centre - self.v.roi_centroid(label)?;
        let first = self.v.peak_set(voxel).peaks.first()?.dir;
        let mut dir = if first.dot(away) >= 0.0 {
            first
        } else {
            -first
        };
        let mut p = start;
        let mut points = vec![p];
        for _ in 0..2000 {
            if let Some(m) = self
                .v
                .peaks_near(p)
                .peaks
                .iter()
                .map(|pk| pk.dir)
                .max_by(|a, b| a.dot(dir).abs().total_cmp(&b.dot(dir).abs()))
            {
                dir = if m.dot(dir) >= 0.0 { m } else { -m };
            }
            let noise = gaussian3(rng) * self.wobble;
            dir = (dir + noise).normalized()?;
            p += dir * self.step;
            points.push(p);
            if self.v.wm_at(p) < 0.1 {
                return Some(points);
            }
        }
        None
    }

    fn positive(&self, bundle: usize, rng: &mut ChaCha8Rng) -> Option<Streamline> {
        let s = Streamline::new(self.walk(bundle, rng)?).ok()?;
        (self.class(&s) == Connection::Valid { bundle }).then_some(s)
    }

    fn negative(
        &self,
        kind: SampleKind,
        bundle: usize,
        rng: &mut ChaCha8Rng,
    ) -> Option<Streamline> {
        let full = self.walk(bundle, rng)?;
        let length = (full.len() - 1) as f64 * self.step;
        let s = match kind {
            SampleKind::EarlyStop => {
                let hi = EARLY_STOP_CAP.min(0.45 * length);
                if hi <= 2.0 {
                    return None;
                }
                let keep = rng.random_range(2.0..hi);
                let n = (keep / self.step).round() as usize + 1;
                let s = Streamline::new(full[..n].to_vec()).ok()?;
                (self.class(&s) == Connection::NoConnection).then_some(s)?
            }
            SampleKind::WrongPair => self.wrong_pair(&full, bundle, rng)?,
            SampleKind::Loop => self.looped(&full, rng)?,
            SampleKind::WmExit => {
                let cut = prefix_len(&full, rng);
                let mut pts = full[..cut].to_vec();
                let dir = (pts[cut - 1] - pts[cut - 2]).normalized()?;
                let turned = rotate_away(dir, rng.random_range(55f64..90.0).to_radians(), rng);
                let mut p = pts[cut - 1];
                for _ in 0..400 {
                    p += turned * self.step;
                    pts.push(p);
                    if self.v.wm_at(p) < 0.1 {
                        break;
                    }
                }
                let s = Streamline::new(pts).ok()?;
                (self.class(&s) == Connection::NoConnection).then_some(s)?
            }
            SampleKind::Positive => return None,
        };
        Some(s)
    }

    fn wrong_pair(&self, full: &[Vec3], bundle: usize, rng: &mut ChaCha8Rng) -> Option<Streamline> {
        let cut = prefix_len(full, rng);
        let mut pts = full[..cut].to_vec();
        let start_label = crate::evaluator::endpoint_label(self.v, pts[0]);
        let own = self.v.bundles()[bundle].labels;
        let targets: Vec<u16> = self
            .v
            .bundles()
            .iter()
            .flat_map(|b| b.labels)
            .filter(|l| !own.contains(l))
            .collect();
        let target = self.v.roi_centroid(*targets.choose(rng)?)?;
        let dims = self.v.dims();
        let mut waypoints = Vec::new();
        for _ in 0..rng.random_range(1..=2) {
            let w: [f64; 3] = std::array::from_fn(|a| rng.random_range(3.0..(dims[a] - 4) as f64));
            waypoints.push(Vec3::from_array(w));
        }
        waypoints.push(target);
        let mut p = *pts.last()?;
        for w in waypoints {
            let d = w - p;
            let n = (d.norm() / self.step).ceil().max(1.0) as usize;
            for k in 1..=n {
                pts.push(p + d * (k as f64 / n as f64));
            }
            p = w;
        }
        let s = Streamline::new(pts).ok()?;
        let end_label = crate::evaluator::endpoint_label(self.v, p);
        (start_label != 0
            && matches!(self.class(&s), Connection::Invalid { .. })
            && end_label != start_label)
            .then_some(s)
    }

    fn looped(&self, full: &[Vec3], rng: &mut ChaCha8Rng) -> Option<Streamline> {
        let cut = prefix_len(full, rng);
        let mut pts = full[..cut].to_vec();
        let anchor = pts[cut - 1];
        let dir = (anchor - pts[cut - 2]).normalized()?;
        let side = any_perpendicular(dir, rng);
        let sides = rng.random_range(3..=5usize);
        let radius = rng.random_range(1.5..3.0);
        // regular polygon through `anchor`, tangent to the current direction
        let centre = anchor + side * radius;
        let vertices: Vec<Vec3> = (0..=sides)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / sides as f64;
                centre - side * (radius * th.cos()) + dir * (radius * th.sin())
            })
            .collect();
        for w in vertices.windows(2) {
            let d = w[1] - w[0];
            let n = (d.norm() / self.step).ceil().max(1.0) as usize;
            pts.extend((1..=n).map(|k| w[0] + d * (k as f64 / n as f64)));
        }
        pts.extend_from_slice(&full[cut..]);
        let s = Streamline::new(pts).ok()?;
        has_sharp_turn(&s, 60.0).then_some(s)
    }
}

/// Index at which a corrupted walk leaves the clean path, between 20% and
/// 80% of its points.
fn prefix_len(full: &[Vec3], rng: &mut ChaCha8Rng) -> usize {
    let n = full.len();
    rng.random_range((n / 5).max(2)..=(4 * n / 5).max(2))
}

fn gaussian3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}

fn any_perpendicular(dir: Vec3, rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let r = gaussian3(rng);
        if let Some(p) = (r - dir * r.dot(dir)).normalized() {
            return p;
        }
    }
}

fn rotate_away(dir: Vec3, angle: f64, rng: &mut ChaCha8Rng) -> Vec3 {
    dir * angle.cos() + any_perpendicular(dir, rng) * angle.sin()
}

pub(crate) fn has_sharp_turn(s: &Streamline, degrees: f64) -> bool {
    s.points()
        .windows(3)
        .any(|w| segment_angle(w[1] - w[0], w[2] - w[1]).is_ok_and(|a| a > degrees))
}
