//! Scores a hand-made tractogram on the right-angle crossing: three valid
//! streamlines, one invalid connection and one that never reaches an ROI.
//!
//! ```sh
//! cargo run --release --example evaluate
//! ```

use tractoracle::evaluator::{report, segment};
use tractoracle::geometry::{Streamline, Vec3};
use tractoracle::phantom::{generate_phantom, presets};

fn line(from: [f64; 3], to: [f64; 3], n: usize) -> Streamline {
    let (a, b) = (Vec3::from_array(from), Vec3::from_array(to));
    Streamline::new(
        (0..n)
            .map(|i| a + (b - a) * (i as f64 / (n - 1) as f64))
            .collect(),
    )
    .unwrap()
}

fn main() -> tractoracle::Result<()> {
    let v = generate_phantom(&presets::right_angle_crossing(), 0)?;
    let t = vec![
        line([7.5, 19.5, 2.0], [7.5, 19.5, 37.0], 71),
        line([8.5, 19.5, 2.0], [8.5, 19.5, 37.0], 71),
        line([6.5, 19.5, 2.0], [6.5, 19.5, 37.0], 71),
        // vertical ROI to horizontal ROI
        line([7.5, 19.5, 2.0], [7.5, 2.0, 19.5], 40),
        // stops in the middle of the bundle
        line([7.5, 19.5, 5.0], [7.5, 19.5, 20.0], 30),
    ];
    for (i, c) in segment(&v, &t).iter().enumerate() {
        println!("streamline {i}: {c:?}");
    }
    let r = report(&v, &t);
    print!("\n{}", r.to_text());
    print!("\n{}", r.to_csv());
    Ok(())
}
