//! Built-in phantom specs.

use super::{BundleSpec, Centerline, PhantomSpec};

pub const NAMES: &[&str] = &[
    "straight-tube",
    "right-angle-crossing",
    "two-arcs-one-crossing",
    "four-bundles",
    "shortcut-crossing",
];

pub fn by_name(name: &str) -> Option<PhantomSpec> {
    Some(match name {
        "straight-tube" => straight_tube(),
        "right-angle-crossing" => right_angle_crossing(),
        "two-arcs-one-crossing" => two_arcs_one_crossing(),
        "four-bundles" => four_bundles(),
        "shortcut-crossing" => shortcut_crossing(),
        _ => return None,
    })
}

fn spec(name: &str, dims: [usize; 3], bundles: Vec<BundleSpec>) -> PhantomSpec {
    PhantomSpec {
        name: name.into(),
        dims,
        voxel_size: 1.0,
        max_peaks: 3,
        amplitude_noise: 0.0,
        bundles,
    }
}

fn polyline(name: &str, points: &[[f64; 3]], radius: f64, labels: [u16; 2]) -> BundleSpec {
    BundleSpec {
        name: name.into(),
        centerline: Centerline::Polyline {
            points: points.to_vec(),
        },
        radius,
        labels,
    }
}

fn arc(name: &str, start: [f64; 3], mid: [f64; 3], end: [f64; 3], labels: [u16; 2]) -> BundleSpec {
    BundleSpec {
        name: name.into(),
        centerline: Centerline::Arc { start, mid, end },
        radius: 3.0,
        labels,
    }
}

/// One straight bundle along z; 64 interface voxels.
pub fn straight_tube() -> PhantomSpec {
    straight_tube_named("straight-tube", "tube")
}

pub(crate) fn straight_tube_named(name: &str, bundle: &str) -> PhantomSpec {
    spec(
        name,
        [16, 16, 48],
        vec![polyline(
            bundle,
            &[[7.5, 7.5, 3.0], [7.5, 7.5, 44.0]],
            3.0,
            [1, 2],
        )],
    )
}

/// Two straight bundles crossing at 90 degrees.
pub fn right_angle_crossing() -> PhantomSpec {
    spec(
        "right-angle-crossing",
        [16, 40, 40],
        vec![
            polyline(
                "vertical",
                &[[7.5, 19.5, 3.0], [7.5, 19.5, 36.0]],
                3.0,
                [1, 2],
            ),
            polyline(
                "horizontal",
                &[[7.5, 3.0, 19.5], [7.5, 36.0, 19.5]],
                3.0,
                [3, 4],
            ),
        ],
    )
}

/// Two arcs in one plane crossing once in the middle.
pub fn two_arcs_one_crossing() -> PhantomSpec {
    spec(
        "two-arcs-one-crossing",
        [16, 40, 40],
        two_arcs(7.5, [1, 2], [3, 4]),
    )
}

fn two_arcs(x: f64, la: [u16; 2], lb: [u16; 2]) -> Vec<BundleSpec> {
    vec![
        arc("arc-a", [x, 6.0, 5.0], [x, 22.5, 17.0], [x, 33.0, 34.0], la),
        arc("arc-b", [x, 33.0, 5.0], [x, 16.5, 17.0], [x, 6.0, 34.0], lb),
    ]
}

/// Two crossing arcs, a straight bundle and an arch.
pub fn four_bundles() -> PhantomSpec {
    let mut bundles = two_arcs(7.5, [1, 2], [3, 4]);
    bundles.push(polyline(
        "straight",
        &[[18.5, 4.0, 28.0], [18.5, 35.0, 28.0]],
        3.0,
        [5, 6],
    ));
    bundles.push(arc(
        "arch",
        [18.5, 6.0, 6.0],
        [18.5, 19.5, 14.0],
        [18.5, 33.0, 6.0],
        [7, 8],
    ));
    spec("four-bundles", [26, 40, 40], bundles)
}

/// A short bundle crossing a long one near its end. Local peak alignment
/// alone rewards turning onto the long bundle, which ends in the wrong ROI.
pub fn shortcut_crossing() -> PhantomSpec {
    spec(
        "shortcut-crossing",
        [16, 48, 40],
        vec![
            polyline("short", &[[7.5, 23.5, 3.0], [7.5, 23.5, 30.0]], 3.0, [1, 2]),
            polyline("long", &[[7.5, 3.0, 24.5], [7.5, 44.0, 24.5]], 3.0, [3, 4]),
        ],
    )
}
