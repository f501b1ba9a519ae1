use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PhantomVolume;
use crate::error::{Error, Result};
use crate::geometry::{checked_voxel, linear_index, voxel_of_index, Vec3};

pub(crate) const FACE_NEIGHBOURS: [[i64; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// Bundle voxels without a label that share a face with an ROI voxel, in
/// linear index order.
pub fn interface_voxels(v: &PhantomVolume) -> Vec<[usize; 3]> {
    let dims = v.dims();
    let mut out = Vec::new();
    for i in 0..v.voxel_count() {
        if v.roi_labels()[i] != 0 || !v.bundles().iter().any(|b| b.mask[i]) {
            continue;
        }
        let p = voxel_of_index(dims, i);
        let touches_roi = FACE_NEIGHBOURS.iter().any(|d| {
            let q = [p[0] as i64 + d[0], p[1] as i64 + d[1], p[2] as i64 + d[2]];
            checked_voxel(dims, q).is_some_and(|q| v.roi_labels()[linear_index(dims, q)] != 0)
        });
        if touches_roi {
            out.push(p);
        }
    }
    out
}

/// `per_voxel` positions uniformly jittered inside every interface voxel.
pub fn interface_seeds(v: &PhantomVolume, per_voxel: usize, rng_seed: u64) -> Result<Vec<Vec3>> {
    interface_seeds_with(v, per_voxel, rng_seed, true)
}

/// As [`interface_seeds`]; without jitter every seed sits on its voxel
/// centre.
pub fn interface_seeds_with(
    v: &PhantomVolume,
    per_voxel: usize,
    rng_seed: u64,
    jitter: bool,
) -> Result<Vec<Vec3>> {
    if per_voxel == 0 {
        return Err(Error::InvalidInput("per_voxel must be positive".into()));
    }
    let voxels = interface_voxels(v);
    if voxels.is_empty() {
        return Err(Error::EmptyInterface);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seeds = Vec::with_capacity(voxels.len() * per_voxel);
    for p in voxels {
        let centre = Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64);
        for _ in 0..per_voxel {
            let offset = if jitter {
                Vec3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                )
            } else {
                Vec3::ZERO
            };
            seeds.push(centre + offset);
        }
    }
    Ok(seeds)
}
