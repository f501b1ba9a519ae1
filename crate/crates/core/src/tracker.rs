//! Tractogram generation from interface seeds: a trained agent or a
//! deterministic peak-following baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{DoneReason, EnvConfig, Harvest, TrackingEnv};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::oracle::OracleModel;
use crate::phantom::{interface_seeds, PhantomVolume};
use crate::sac::{rollout, Agent};
use crate::tractogram::Tractogram;

/// Seeds per independent rollout; fixed so results do not depend on the
/// worker count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    pub seeds_per_voxel: usize,
    /// Sample the policy instead of taking its mean.
    pub stochastic: bool,
    pub workers: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            seeds_per_voxel: 20,
            stochastic: false,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackResult {
    pub tractogram: Tractogram,
    pub reasons: Vec<DoneReason>,
    pub short: Vec<bool>,
    pub seeds: Vec<Vec3>,
}

impl TrackResult {
    fn from_parts(seeds: Vec<Vec3>, parts: Vec<Harvest>) -> Self {
        let mut out = TrackResult {
            seeds,
            ..Default::default()
        };
        for h in parts {
            out.tractogram.streamlines.extend(h.streamlines);
            out.reasons.extend(h.reasons);
            out.short.extend(h.short);
        }
        out
    }

    pub fn reason_counts(&self) -> Vec<(DoneReason, usize)> {
        DoneReason::ALL
            .iter()
            .map(|&r| (r, self.reasons.iter().filter(|&&x| x == r).count()))
            .collect()
    }
}

/// Runs `f` over fixed-size seed chunks on up to `workers` threads and
/// returns the results in chunk order.
fn chunked<F>(seeds: &[Vec3], workers: usize, f: F) -> Result<Vec<Harvest>>
where
    F: Fn(usize, &[Vec3]) -> Result<Harvest> + Sync,
{
    let chunks: Vec<(usize, &[Vec3])> = seeds.chunks(CHUNK).enumerate().collect();
    let workers = workers.clamp(1, chunks.len().max(1));
    if workers == 1 {
        return chunks.iter().map(|&(i, c)| f(i, c)).collect();
    }
    let mut results: Vec<Option<Result<Harvest>>> = (0..chunks.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (f, chunks) = (&f, &chunks);
                scope.spawn(move || {
                    chunks
                        .iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|&(i, c)| (i, f(i, c)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("tracking worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every chunk ran"))
        .collect()
}

/// Agent rollouts from jittered interface seeds under the full stopping
/// rules. Streamlines come back in seed order.
pub fn track_policy(
    agent: &Agent,
    oracle: Option<&OracleModel<f32>>,
    v: &PhantomVolume,
    env_cfg: &EnvConfig,
    cfg: &TrackConfig,
    rng_seed: u64,
) -> Result<TrackResult> {
    env_cfg.validate()?;
    if agent.state_width() != crate::env::state_width(v.k()) {
        return Err(Error::Config(format!(
            "agent expects states of width {}, phantom gives {}",
            agent.state_width(),
            crate::env::state_width(v.k())
        )));
    }
    if oracle.is_none() && env_cfg.uses_oracle() {
        return Err(Error::Config(
            "env uses the oracle but none was given".into(),
        ));
    }
    let seeds = interface_seeds(v, cfg.seeds_per_voxel, rng_seed)?;
    let parts = chunked(&seeds, cfg.workers, |i, chunk| {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(i as u64 + 1);
        let env = rollout(agent, v, oracle, env_cfg, chunk, !cfg.stochastic, &mut rng)?;
        Ok(env.harvest())
    })?;
    Ok(TrackResult::from_parts(seeds, parts))
}

/// Strongest-peak following. The first step takes the largest peak, signed
/// towards higher white matter one step ahead; later steps take the peak
/// most aligned with the previous direction. No oracle.
pub fn track_baseline(
    v: &PhantomVolume,
    step_size: f64,
    max_angle: f64,
    cfg: &TrackConfig,
    rng_seed: u64,
) -> Result<TrackResult> {
    let env_cfg = baseline_env(step_size, max_angle);
    env_cfg.validate()?;
    let seeds = interface_seeds(v, cfg.seeds_per_voxel, rng_seed)?;
    let parts = chunked(&seeds, cfg.workers, |_, chunk| {
        let mut env = TrackingEnv::reset(v, None, env_cfg.clone(), chunk)?;
        while !env.all_done() {
            let actions: Vec<(usize, Vec3)> = env
                .active()
                .into_iter()
                .map(|i| {
                    (
                        i,
                        baseline_direction(v, env.position(i), env.last_direction(i), step_size),
                    )
                })
                .collect();
            env.step(&actions)?;
        }
        Ok(env.harvest())
    })?;
    Ok(TrackResult::from_parts(seeds, parts))
}

pub fn baseline_env(step_size: f64, max_angle: f64) -> EnvConfig {
    EnvConfig {
        step_size,
        max_angle,
        alpha: 0.0,
        oracle_stop: false,
        ..EnvConfig::default()
    }
}

/// Direction chosen by the baseline at `p`; zero when no peak exists.
pub fn baseline_direction(v: &PhantomVolume, p: Vec3, prev: Option<Vec3>, step_size: f64) -> Vec3 {
    let peaks = v.peaks_near(p);
    match prev {
        Some(u) => peaks
            .peaks
            .iter()
            .map(|m| if m.dir.dot(u) < 0.0 { -m.dir } else { m.dir })
            .fold(None, |best: Option<Vec3>, d| match best {
                Some(b) if b.dot(u) >= d.dot(u) => Some(b),
                _ => Some(d),
            })
            .unwrap_or(Vec3::ZERO),
        None => match peaks.peaks.first() {
            Some(m) => {
                let ahead = |d: Vec3| v.wm_at(p + d * (3.0 * step_size));
                if ahead(-m.dir) > ahead(m.dir) {
                    -m.dir
                } else {
                    m.dir
                }
            }
            None => Vec3::ZERO,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::report;
    use crate::phantom::{generate_phantom, interface_voxels, presets};
    use crate::sac::SacConfig;
    use crate::tractogram::tractogram_to_bytes;

    #[test]
    fn baseline_connects_the_straight_tube() {
        let v = generate_phantom(&presets::straight_tube(), 0).unwrap();
        let cfg = TrackConfig {
            seeds_per_voxel: 2,
            ..TrackConfig::default()
        };
        let r = track_baseline(&v, 0.5, 30.0, &cfg, 1).unwrap();
        assert_eq!(r.tractogram.len(), interface_voxels(&v).len() * 2);
        let rep = report(&v, &r.tractogram.streamlines);
        assert_eq!(rep.vc_pct, 100.0);
        for s in &r.tractogram.streamlines {
            for w in s.points().windows(2) {
                assert!((w[0].distance(w[1]) - 0.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn baseline_goes_straight_through_a_crossing() {
        let v = generate_phantom(&presets::right_angle_crossing(), 0).unwrap();
        // centre voxel of the overlap holds both peaks
        let c = Vec3::new(7.0, 19.0, 19.0);
        assert_eq!(v.peaks_near(c).len(), 2);
        let z = Vec3::new(0.0, 0.0, 1.0);
        let y = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(baseline_direction(&v, c, Some(z), 0.5), z);
        assert_eq!(baseline_direction(&v, c, Some(-z), 0.5), -z);
        assert_eq!(baseline_direction(&v, c, Some(y), 0.5), y);
        let tilted = (z + y * 0.9).normalized().unwrap();
        assert_eq!(baseline_direction(&v, c, Some(tilted), 0.5), z);
    }

    #[test]
    fn zero_angle_budget_never_turns() {
        let v = generate_phantom(&presets::two_arcs_one_crossing(), 0).unwrap();
        let cfg = TrackConfig {
            seeds_per_voxel: 1,
            ..TrackConfig::default()
        };
        let r = track_baseline(&v, 0.5, 0.0, &cfg, 0).unwrap();
        // the step that triggers the stop is kept, so only the last pair may turn
        for (s, reason) in r.tractogram.streamlines.iter().zip(&r.reasons) {
            let d = crate::geometry::to_directions(s).unwrap().directions;
            let turns: Vec<usize> = (1..d.len())
                .filter(|&i| crate::geometry::segment_angle(d[i - 1], d[i]).unwrap() > 1e-6)
                .collect();
            match turns.as_slice() {
                [] => {}
                [i] => assert!(*i == d.len() - 1 && *reason == DoneReason::Angle),
                _ => panic!("turned at {turns:?}"),
            }
        }
        assert!(r.reasons.contains(&DoneReason::Angle));
    }

    #[test]
    fn policy_tracking_is_deterministic_and_worker_independent() {
        let v = generate_phantom(&presets::straight_tube(), 0).unwrap();
        let agent = Agent::new(
            SacConfig {
                hidden_width: 16,
                hidden_layers: 2,
                ..SacConfig::default()
            },
            crate::env::state_width(v.k()),
        )
        .unwrap();
        let env_cfg = baseline_env(0.5, 30.0);
        let cfg = TrackConfig {
            seeds_per_voxel: 5,
            ..TrackConfig::default()
        };
        let a = track_policy(&agent, None, &v, &env_cfg, &cfg, 3).unwrap();
        assert_eq!(a.tractogram.len(), 320);
        let b = track_policy(
            &agent,
            None,
            &v,
            &env_cfg,
            &TrackConfig {
                workers: 3,
                ..cfg.clone()
            },
            3,
        )
        .unwrap();
        assert_eq!(
            tractogram_to_bytes(&a.tractogram),
            tractogram_to_bytes(&b.tractogram)
        );
        let s = TrackConfig {
            stochastic: true,
            ..cfg.clone()
        };
        let c1 = track_policy(&agent, None, &v, &env_cfg, &s, 3).unwrap();
        let c2 = track_policy(
            &agent,
            None,
            &v,
            &env_cfg,
            &TrackConfig { workers: 2, ..s },
            3,
        )
        .unwrap();
        assert_eq!(c1, c2);
        assert!(track_policy(&agent, None, &v, &EnvConfig::default(), &cfg, 3).is_err());
    }
}
