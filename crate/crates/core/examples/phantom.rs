//! Builds each bundled phantom and prints what a tracker will see: bundle
//! sizes, ROI labels, interface voxels and the peaks at a crossing.
//!
//! ```sh
//! cargo run --release --example phantom -- /tmp/crossing.phv
//! ```

use tractoracle::geometry::Vec3;
use tractoracle::phantom::{
    generate_phantom, interface_voxels, presets, read_phantom, write_phantom,
};

fn main() -> tractoracle::Result<()> {
    for name in presets::NAMES {
        let spec = presets::by_name(name).unwrap();
        let v = generate_phantom(&spec, 0)?;
        let sizes: Vec<String> = v
            .bundles()
            .iter()
            .map(|b| {
                format!(
                    "{}-{}: {} voxels",
                    b.labels[0],
                    b.labels[1],
                    b.voxel_count()
                )
            })
            .collect();
        println!(
            "{name:22} dims {:?}, {} interface voxels, bundles [{}]",
            v.dims(),
            interface_voxels(&v).len(),
            sizes.join(", ")
        );
    }

    let v = generate_phantom(&presets::right_angle_crossing(), 0)?;
    let centre = Vec3::new(7.0, 19.0, 19.0);
    println!("\npeaks at the crossing centre {centre:?}:");
    for p in &v.peaks_near(centre).peaks {
        println!("  dir {:?} amplitude {:.2}", p.dir, p.amplitude);
    }
    println!(
        "wm at the centre {:.2}, two voxels outside {:.2}",
        v.wm_at(centre),
        v.wm_at(Vec3::new(1.0, 19.0, 19.0))
    );

    if let Some(path) = std::env::args().nth(1) {
        let bytes = write_phantom(&v);
        std::fs::write(&path, &bytes)?;
        assert_eq!(read_phantom(&std::fs::read(&path)?)?, v);
        println!("wrote {path} ({} bytes)", bytes.len());
    }
    Ok(())
}
