//! Trains a soft actor-critic agent on the straight tube without an
//! oracle, then compares tracking with the untrained and trained policies.
//! Takes a few minutes.
//!
//! ```sh
//! cargo run --release --example train_agent -- 150 agent.tnsr
//! ```

use tractoracle::env::{state_width, EnvConfig};
use tractoracle::evaluator::report;
use tractoracle::phantom::{generate_phantom, presets};
use tractoracle::sac::{train_agent, Agent, SacConfig};
use tractoracle::tracker::{track_policy, TrackConfig};

fn main() -> tractoracle::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(150, |a| a.parse().expect("epochs"));
    let out = args.next();

    let v = generate_phantom(&presets::straight_tube(), 0)?;
    let env = EnvConfig {
        alpha: 0.0,
        oracle_stop: false,
        ..EnvConfig::default()
    };
    let cfg = SacConfig {
        epochs,
        hidden_width: 128,
        hidden_layers: 2,
        batch_size: 64,
        episodes_per_epoch: 8,
        replay_capacity: 50_000,
        ..SacConfig::default()
    };
    let tc = TrackConfig {
        seeds_per_voxel: 2,
        ..TrackConfig::default()
    };
    let untrained = Agent::new(cfg.clone(), state_width(v.k()))?;
    let before = report(
        &v,
        &track_policy(&untrained, None, &v, &env, &tc, 1)?
            .tractogram
            .streamlines,
    );

    let trained = train_agent(&v, None, &env, &cfg, |t, _| {
        if t.epoch % 10 == 0 {
            println!(
                "epoch {:4}  return {:7.2}  length {:6.1}  entropy coef {:.4}",
                t.epoch, t.mean_return, t.mean_length, t.losses.entropy_coef
            );
        }
        Ok(())
    })?;
    let after = report(
        &v,
        &track_policy(&trained.agent, None, &v, &env, &tc, 1)?
            .tractogram
            .streamlines,
    );
    println!(
        "VC untrained {:.1}%, trained {:.1}%",
        before.vc_pct, after.vc_pct
    );
    if let Some(path) = out {
        std::fs::write(&path, trained.agent.to_bytes())?;
        println!("wrote {path}");
    }
    Ok(())
}
