//! Peak-following baseline on every bundled phantom, scored with the
//! Tractometer-style evaluator. Optionally writes the crossing tractogram
//! as TSF1 and legacy VTK.
//!
//! ```sh
//! cargo run --release --example baseline -- /tmp/crossing
//! ```

use tractoracle::evaluator::report;
use tractoracle::phantom::{generate_phantom, presets};
use tractoracle::tracker::{track_baseline, TrackConfig};
use tractoracle::tractogram::{to_vtk, tractogram_to_bytes};

fn main() -> tractoracle::Result<()> {
    let tc = TrackConfig {
        seeds_per_voxel: 4,
        ..TrackConfig::default()
    };
    for name in presets::NAMES {
        let v = generate_phantom(&presets::by_name(name).unwrap(), 0)?;
        let r = track_baseline(&v, 0.5, 30.0, &tc, 0)?;
        let rep = report(&v, &r.tractogram.streamlines);
        println!(
            "{name:22} {:5} streamlines  VC {:6.2}%  IC {:6.2}%  NC {:6.2}%  VB {}/{}  F1 {:5.1}%",
            rep.n_streamlines,
            rep.vc_pct,
            rep.ic_pct,
            rep.nc_pct,
            rep.vb,
            rep.n_bundles,
            rep.mean_f1_pct
        );
        if name == &"two-arcs-one-crossing" {
            if let Some(stem) = std::env::args().nth(1) {
                std::fs::write(format!("{stem}.tsf"), tractogram_to_bytes(&r.tractogram))?;
                std::fs::write(format!("{stem}.vtk"), to_vtk(&r.tractogram))?;
                println!("wrote {stem}.tsf and {stem}.vtk");
            }
        }
    }
    Ok(())
}
