//! Steps the batched tracking environment by hand: a few episodes on the
//! straight tube driven by fixed actions, showing rewards and why each
//! one stopped.
//!
//! ```sh
//! cargo run --release --example tracking_env
//! ```

use tractoracle::env::{EnvConfig, TrackingEnv};
use tractoracle::geometry::Vec3;
use tractoracle::phantom::{generate_phantom, presets};

fn main() -> tractoracle::Result<()> {
    let v = generate_phantom(&presets::straight_tube(), 0)?;
    let cfg = EnvConfig {
        alpha: 0.0,
        oracle_stop: false,
        ..EnvConfig::default()
    };
    let seeds = vec![Vec3::new(7.5, 7.5, 4.0); 3];
    let mut env = TrackingEnv::reset(&v, None, cfg, &seeds)?;
    println!("state width {}", env.state_width());

    let along = Vec3::new(0.0, 0.0, 1.0);
    let sideways = Vec3::new(1.0, 0.0, 0.0);
    let wobble = Vec3::new(0.3, 0.0, 1.0);
    let mut t = 0;
    while !env.all_done() {
        let actions: Vec<(usize, Vec3)> = env
            .active()
            .into_iter()
            .map(|i| match i {
                0 => (i, along),
                1 if t < 5 => (i, along),
                1 => (i, sideways),
                _ => (i, if t % 2 == 0 { wobble } else { along }),
            })
            .collect();
        for (tr, &(i, _)) in env.step(&actions)?.iter().zip(&actions) {
            if tr.done {
                println!(
                    "episode {i} stopped at step {} ({}), reward {:.3}",
                    t + 1,
                    tr.reason.unwrap(),
                    tr.reward
                );
            }
        }
        t += 1;
    }
    for i in 0..env.len() {
        println!(
            "episode {i}: {} points, return {:.2}",
            env.streamline(i).len(),
            env.episode_return(i)
        );
    }
    Ok(())
}
