//! Batched tracking episodes: propagation, state assembly, reward and
//! stopping.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{checked_voxel, segment_angle, Streamline, Vec3};
use crate::oracle::OracleModel;
use crate::phantom::{PeakSet, PhantomVolume};

/// Previous directions carried in the state.
pub const PREV_DIRS: usize = 100;

const NEIGHBOURS: [Vec3; 6] = [
    Vec3::new(1.0, 0.0, 0.0),
    Vec3::new(-1.0, 0.0, 0.0),
    Vec3::new(0.0, 1.0, 0.0),
    Vec3::new(0.0, -1.0, 0.0),
    Vec3::new(0.0, 0.0, 1.0),
    Vec3::new(0.0, 0.0, -1.0),
];

pub fn state_width(k: usize) -> usize {
    7 * 4 * k + 3 * PREV_DIRS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoneReason {
    OracleStop,
    WmExit,
    Angle,
    MaxSteps,
}

impl DoneReason {
    pub const ALL: [DoneReason; 4] = [Self::OracleStop, Self::WmExit, Self::Angle, Self::MaxSteps];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::OracleStop => "oracle-stop",
            Self::WmExit => "wm-exit",
            Self::Angle => "angle",
            Self::MaxSteps => "max-steps",
        }
    }
}

impl fmt::Display for DoneReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub step_size: f64,
    pub alpha: f64,
    pub t_min: usize,
    /// Degrees.
    pub max_angle: f64,
    pub wm_threshold: f64,
    pub max_steps: usize,
    pub oracle_threshold: f64,
    pub oracle_stop: bool,
    /// Oracle stopping is checked every `oracle_stride` steps past `t_min`.
    pub oracle_stride: usize,
    /// Harvested streamlines with fewer steps are flagged short.
    pub min_steps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            alpha: 10.0,
            t_min: 20,
            max_angle: 30.0,
            wm_threshold: 0.1,
            max_steps: 200,
            oracle_threshold: 0.5,
            oracle_stop: true,
            oracle_stride: 1,
            min_steps: 10,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("env.step_size must be positive");
        }
        if !(self.oracle_threshold > 0.0 && self.oracle_threshold < 1.0) {
            return bad("env.oracle_threshold must be in (0, 1)");
        }
        if self.t_min >= self.max_steps {
            return bad("env.t_min must be smaller than env.max_steps");
        }
        if self.oracle_stride == 0 {
            return bad("env.oracle_stride must be at least 1");
        }
        if !(self.max_angle >= 0.0) || !self.alpha.is_finite() {
            return bad("env.max_angle must be non-negative and env.alpha finite");
        }
        Ok(())
    }

    /// Whether the terminal bonus or oracle stopping needs scores.
    pub fn uses_oracle(&self) -> bool {
        self.oracle_stop || self.alpha != 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f32>,
    /// Unit tracking direction actually taken; zero for a zero action.
    pub action: [f32; 3],
    pub reward: f64,
    pub next_state: Vec<f32>,
    pub done: bool,
    pub reason: Option<DoneReason>,
}

/// Alignment with the best-matching peak times continuity with the previous
/// direction; `prev = None` at the first step counts as full continuity.
pub fn local_reward(peaks: &PeakSet, u: Vec3, prev: Option<Vec3>) -> f64 {
    let align = peaks
        .peaks
        .iter()
        .map(|m| m.dir.dot(u).abs())
        .fold(0.0, f64::max);
    align * prev.map_or(1.0, |p| u.dot(p))
}

/// Full step reward. `terminal_score` is the oracle score of the finished
/// streamline, `Some` only on a terminal step.
pub fn reward(
    v: &PhantomVolume,
    at: Vec3,
    u: Vec3,
    prev: Option<Vec3>,
    terminal_score: Option<f64>,
    cfg: &EnvConfig,
) -> f64 {
    let local = local_reward(&v.peaks_near(at), u, prev);
    let bonus = match terminal_score {
        Some(s) if s >= cfg.oracle_threshold => cfg.alpha,
        _ => 0.0,
    };
    local + bonus
}

/// State vector at `p`: the descriptors of the nearest voxel and its six
/// face neighbours, then the last [`PREV_DIRS`] directions, oldest first,
/// zero-padded in front.
pub fn assemble_state(v: &PhantomVolume, p: Vec3, dirs: &[Vec3]) -> Vec<f32> {
    let k4 = 4 * v.k();
    let mut out = Vec::with_capacity(state_width(v.k()));
    let mut push_descriptor = |q: Vec3| match checked_voxel(v.dims(), q.round()) {
        Some(vox) => out.extend(v.descriptor(vox).iter().map(|&x| x as f32)),
        None => out.extend(std::iter::repeat_n(0.0, k4)),
    };
    push_descriptor(p);
    for d in NEIGHBOURS {
        push_descriptor(p + d);
    }
    let recent = &dirs[dirs.len().saturating_sub(PREV_DIRS)..];
    out.extend(std::iter::repeat_n(0.0, 3 * (PREV_DIRS - recent.len())));
    for d in recent {
        out.extend([d.x as f32, d.y as f32, d.z as f32]);
    }
    out
}

#[derive(Debug, Clone)]
struct Episode {
    points: Vec<Vec3>,
    dirs: Vec<Vec3>,
    reason: Option<DoneReason>,
    ret: f64,
}

/// Streamlines of finished episodes, in seed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Harvest {
    pub seeds: Vec<usize>,
    pub streamlines: Vec<Streamline>,
    pub reasons: Vec<DoneReason>,
    pub short: Vec<bool>,
}

impl Harvest {
    pub fn len(&self) -> usize {
        self.streamlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streamlines.is_empty()
    }
}

pub struct TrackingEnv<'a> {
    volume: &'a PhantomVolume,
    oracle: Option<&'a OracleModel<f32>>,
    cfg: EnvConfig,
    episodes: Vec<Episode>,
}

impl<'a> TrackingEnv<'a> {
    /// One episode per seed. Without an oracle neither oracle stopping nor
    /// the terminal bonus applies.
    pub fn reset(
        volume: &'a PhantomVolume,
        oracle: Option<&'a OracleModel<f32>>,
        cfg: EnvConfig,
        seeds: &[Vec3],
    ) -> Result<Self> {
        cfg.validate()?;
        if seeds.is_empty() {
            return Err(Error::InvalidInput("no seeds".into()));
        }
        let dims = volume.dims();
        for s in seeds {
            let inside = s
                .to_array()
                .iter()
                .zip(dims)
                .all(|(&c, d)| c >= 0.0 && c <= (d - 1) as f64);
            if !inside {
                return Err(Error::OutOfBounds(s.to_array()));
            }
        }
        let episodes = seeds
            .iter()
            .map(|&p| Episode {
                points: vec![p],
                dirs: Vec::new(),
                reason: None,
                ret: 0.0,
            })
            .collect();
        Ok(Self {
            volume,
            oracle,
            cfg,
            episodes,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn state_width(&self) -> usize {
        state_width(self.volume.k())
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.episodes[i].reason.is_none()
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.episodes.len())
            .filter(|&i| self.is_active(i))
            .collect()
    }

    pub fn all_done(&self) -> bool {
        self.episodes.iter().all(|e| e.reason.is_some())
    }

    pub fn state(&self, i: usize) -> Vec<f32> {
        let e = &self.episodes[i];
        assemble_state(
            self.volume,
            *e.points.last().expect("episodes start with a seed"),
            &e.dirs,
        )
    }

    pub fn position(&self, i: usize) -> Vec3 {
        *self.episodes[i]
            .points
            .last()
            .expect("episodes start with a seed")
    }

    /// Unit direction of the last step.
    pub fn last_direction(&self, i: usize) -> Option<Vec3> {
        self.episodes[i].dirs.last().copied()
    }

    pub fn steps(&self, i: usize) -> usize {
        self.episodes[i].dirs.len()
    }

    pub fn reason(&self, i: usize) -> Option<DoneReason> {
        self.episodes[i].reason
    }

    pub fn episode_return(&self, i: usize) -> f64 {
        self.episodes[i].ret
    }

    pub fn streamline(&self, i: usize) -> Streamline {
        Streamline::new(self.episodes[i].points.clone()).expect("finite points")
    }

    fn scores(&self, idx: &[usize]) -> Result<Vec<f64>> {
        match self.oracle {
            Some(o) if !idx.is_empty() => {
                o.score_batch(&idx.iter().map(|&i| self.streamline(i)).collect::<Vec<_>>())
            }
            _ => Ok(vec![0.0; idx.len()]),
        }
    }

    /// Advances the listed episodes by one step each. Actions are raw 3D
    /// vectors, rescaled to the step size.
    pub fn step(&mut self, actions: &[(usize, Vec3)]) -> Result<Vec<Transition>> {
        let cfg = self.cfg.clone();
        let mut seen = vec![false; self.episodes.len()];
        for &(i, _) in actions {
            if i >= self.episodes.len() || seen[i] || !self.is_active(i) {
                return Err(Error::Contract(format!(
                    "episode {i} is finished, unknown or stepped twice"
                )));
            }
            seen[i] = true;
        }
        let states: Vec<Vec<f32>> = actions.iter().map(|&(i, _)| self.state(i)).collect();
        let mut units = Vec::with_capacity(actions.len());
        let mut locals = Vec::with_capacity(actions.len());

        for &(i, a) in actions {
            let at = self.position(i);
            let prev = self.last_direction(i);
            let ep = &mut self.episodes[i];
            let Some(u) = a.normalized().filter(|u| u.is_finite()) else {
                ep.reason = Some(DoneReason::Angle);
                units.push(Vec3::ZERO);
                locals.push(0.0);
                continue;
            };
            let next = at + u * cfg.step_size;
            ep.points.push(next);
            ep.dirs.push(u);
            units.push(u);
            locals.push(local_reward(&self.volume.peaks_near(at), u, prev));
            let t = ep.dirs.len();
            if self.volume.wm_at(next) < cfg.wm_threshold {
                ep.reason = Some(DoneReason::WmExit);
            } else if prev.is_some_and(|p| segment_angle(u, p).is_ok_and(|a| a > cfg.max_angle)) {
                ep.reason = Some(DoneReason::Angle);
            } else if t == cfg.max_steps {
                ep.reason = Some(DoneReason::MaxSteps);
            }
        }

        let with_oracle = self.oracle.is_some();
        let mut score: Vec<Option<f64>> = vec![None; actions.len()];
        if with_oracle && cfg.oracle_stop {
            // max-steps is the last criterion: an oracle stop on the final
            // step takes precedence
            let check: Vec<usize> = (0..actions.len())
                .filter(|&j| {
                    let e = &self.episodes[actions[j].0];
                    let t = e.dirs.len();
                    matches!(e.reason, None | Some(DoneReason::MaxSteps))
                        && t > cfg.t_min
                        && (t - cfg.t_min - 1) % cfg.oracle_stride == 0
                })
                .collect();
            let idx: Vec<usize> = check.iter().map(|&j| actions[j].0).collect();
            for (&j, s) in check.iter().zip(self.scores(&idx)?) {
                score[j] = Some(s);
                if s < cfg.oracle_threshold {
                    self.episodes[actions[j].0].reason = Some(DoneReason::OracleStop);
                }
            }
        }
        if with_oracle && cfg.alpha != 0.0 {
            let need: Vec<usize> = (0..actions.len())
                .filter(|&j| {
                    score[j].is_none()
                        && self.episodes[actions[j].0].reason.is_some()
                        && self.episodes[actions[j].0].points.len() >= 2
                })
                .collect();
            let idx: Vec<usize> = need.iter().map(|&j| actions[j].0).collect();
            for (&j, s) in need.iter().zip(self.scores(&idx)?) {
                score[j] = Some(s);
            }
        }

        let mut out = Vec::with_capacity(actions.len());
        for (j, (&(i, _), state)) in actions.iter().zip(states).enumerate() {
            let reason = self.episodes[i].reason;
            let bonus = match (reason, score[j]) {
                (Some(_), Some(s)) if with_oracle && s >= cfg.oracle_threshold => cfg.alpha,
                _ => 0.0,
            };
            let r = locals[j] + bonus;
            if !r.is_finite() {
                return Err(Error::Numerical(format!("reward {r} in episode {i}")));
            }
            self.episodes[i].ret += r;
            let u = units[j];
            out.push(Transition {
                state,
                action: [u.x as f32, u.y as f32, u.z as f32],
                reward: r,
                next_state: self.state(i),
                done: reason.is_some(),
                reason,
            });
        }
        Ok(out)
    }

    /// Finished episodes in seed order.
    pub fn harvest(&self) -> Harvest {
        let mut h = Harvest::default();
        for (i, e) in self.episodes.iter().enumerate() {
            if let Some(r) = e.reason {
                h.seeds.push(i);
                h.streamlines.push(self.streamline(i));
                h.reasons.push(r);
                h.short.push(e.dirs.len() < self.cfg.min_steps);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleConfig;
    use crate::phantom::{generate_phantom, presets, Peak};

    fn tube() -> PhantomVolume {
        generate_phantom(&presets::straight_tube(), 0).unwrap()
    }

    fn no_oracle() -> EnvConfig {
        EnvConfig {
            alpha: 0.0,
            oracle_stop: false,
            ..EnvConfig::default()
        }
    }

    const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[test]
    fn reset_states() {
        let v = tube();
        let seeds = vec![Vec3::new(7.0, 7.0, 10.0); 800];
        let env = TrackingEnv::reset(&v, None, no_oracle(), &seeds).unwrap();
        assert_eq!(env.len(), 800);
        let s = env.state(0);
        assert_eq!(s.len(), state_width(3));
        assert_eq!(s.len(), 384);
        assert!(s[84..].iter().all(|&x| x == 0.0));
        assert_eq!(
            s[..12],
            [0.0, 0.0, 1.0, 1.0, 0., 0., 0., 0., 0., 0., 0., 0.]
        );
        assert_eq!(env.state(0), env.state(799));
        assert!(TrackingEnv::reset(&v, None, no_oracle(), &[]).is_err());
        assert!(matches!(
            TrackingEnv::reset(&v, None, no_oracle(), &[Vec3::new(-1.0, 0.0, 0.0)]),
            Err(Error::OutOfBounds(_))
        ));
    }

    #[test]
    fn action_is_rescaled() {
        let v = tube();
        let mut env =
            TrackingEnv::reset(&v, None, no_oracle(), &[Vec3::new(7.0, 7.0, 10.0)]).unwrap();
        let tr = env.step(&[(0, Vec3::new(0.0, 0.0, 5.0))]).unwrap();
        assert_eq!(env.position(0), Vec3::new(7.0, 7.0, 10.5));
        assert_eq!(tr[0].action, [0.0, 0.0, 1.0]);
        assert_eq!(tr[0].reward, 1.0);
        assert!(!tr[0].done);
        let s = &tr[0].next_state;
        assert_eq!(s[s.len() - 3..], [0.0, 0.0, 1.0]);
        assert!(s[84..s.len() - 3].iter().all(|&x| x == 0.0));
    }

    /// wm = 1 - 0.19 y, which trilinear interpolation reproduces exactly.
    fn ramp() -> PhantomVolume {
        let dims = [8, 8, 8];
        let n = 512;
        let wm = (0..n).map(|i| 1.0 - 0.19 * ((i / 8) % 8) as f64).collect();
        PhantomVolume::new(dims, 1.0, 1, wm, vec![0.0; 4 * n], vec![0; n], vec![]).unwrap()
    }

    #[test]
    fn wm_exit_fires_below_threshold() {
        let v = ramp();
        let y = Vec3::new(0.0, 1.0, 0.0);
        let mut env =
            TrackingEnv::reset(&v, None, no_oracle(), &[Vec3::new(3.0, 4.0, 3.0)]).unwrap();
        let tr = env.step(&[(0, y)]).unwrap();
        assert!((v.wm_at(env.position(0)) - 0.145).abs() < 1e-12);
        assert!(!tr[0].done);
        let tr = env.step(&[(0, y)]).unwrap();
        assert!((v.wm_at(env.position(0)) - 0.05).abs() < 1e-12);
        assert_eq!(tr[0].reason, Some(DoneReason::WmExit));
        assert!(env.step(&[(0, y)]).is_err());
    }

    fn turn(deg: f64) -> Vec3 {
        let r = deg.to_radians();
        Vec3::new(0.0, r.sin(), r.cos())
    }

    #[test]
    fn angle_fires_above_threshold() {
        let v = tube();
        for (deg, stops) in [(45.0, true), (30.5, true), (29.5, false), (30.0, false)] {
            let mut env =
                TrackingEnv::reset(&v, None, no_oracle(), &[Vec3::new(7.5, 7.5, 10.0)]).unwrap();
            env.step(&[(0, Z)]).unwrap();
            let tr = env.step(&[(0, turn(deg))]).unwrap();
            assert_eq!(tr[0].reason == Some(DoneReason::Angle), stops, "{deg}");
        }
        let mut env =
            TrackingEnv::reset(&v, None, no_oracle(), &[Vec3::new(7.5, 7.5, 10.0)]).unwrap();
        let tr = env.step(&[(0, Vec3::ZERO)]).unwrap();
        assert_eq!(tr[0].reason, Some(DoneReason::Angle));
        assert_eq!(env.streamline(0).len(), 1);
    }

    #[test]
    fn max_steps_caps_length() {
        let v = tube();
        let cfg = EnvConfig {
            max_steps: 30,
            ..no_oracle()
        };
        let mut env = TrackingEnv::reset(&v, None, cfg, &[Vec3::new(7.5, 7.5, 10.0)]).unwrap();
        let mut last = None;
        while !env.all_done() {
            last = env.step(&[(0, Z)]).unwrap().pop();
        }
        assert_eq!(last.unwrap().reason, Some(DoneReason::MaxSteps));
        let h = env.harvest();
        assert_eq!(h.streamlines[0].len(), 31);
        for w in h.streamlines[0].points().windows(2) {
            assert!((w[0].distance(w[1]) - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn reward_by_hand() {
        let peaks = PeakSet {
            peaks: vec![
                Peak {
                    dir: Z,
                    amplitude: 1.0,
                },
                Peak {
                    dir: Vec3::new(1.0, 0.0, 0.0),
                    amplitude: 0.5,
                },
            ],
        };
        assert_eq!(local_reward(&peaks, Z, Some(Z)), 1.0);
        assert_eq!(local_reward(&peaks, -Z, None), 1.0);
        assert_eq!(local_reward(&peaks, Z, Some(Vec3::new(0.0, 1.0, 0.0))), 0.0);
        let d = turn(60.0);
        let expected = 60f64.to_radians().cos() * 60f64.to_radians().cos();
        assert!((local_reward(&peaks, d, Some(Z)) - expected).abs() < 1e-12);
        assert_eq!(local_reward(&PeakSet::default(), Z, Some(Z)), 0.0);

        let v = tube();
        let cfg = EnvConfig::default();
        let at = Vec3::new(7.0, 7.0, 20.0);
        assert_eq!(reward(&v, at, Z, Some(Z), Some(0.7), &cfg), 11.0);
        assert_eq!(reward(&v, at, Z, Some(Z), Some(0.3), &cfg), 1.0);
        assert_eq!(reward(&v, at, Z, Some(Z), None, &cfg), 1.0);
    }

    fn oracle_cfg() -> OracleConfig {
        OracleConfig {
            n_points: 8,
            embed_dim: 4,
            n_blocks: 1,
            n_heads: 1,
            ffn_dim: 4,
            threshold: 0.5,
        }
    }

    /// Untrained model whose output is pinned through the head bias.
    fn constant_oracle(score: f64) -> OracleModel<f32> {
        let mut m = OracleModel::<f32>::new(oracle_cfg(), 0).unwrap();
        let w = m.params().find("head.w").unwrap();
        let b = m.params().find("head.b").unwrap();
        m.params_mut().get_mut(w).data_mut().fill(0.0);
        m.params_mut().get_mut(b).data_mut()[0] = (score / (1.0 - score)).ln() as f32;
        m
    }

    #[test]
    fn oracle_stop_only_after_t_min() {
        let v = tube();
        let low = constant_oracle(0.3);
        let cfg = EnvConfig::default();
        let mut env =
            TrackingEnv::reset(&v, Some(&low), cfg.clone(), &[Vec3::new(7.5, 7.5, 10.0)]).unwrap();
        let mut rewards = Vec::new();
        while !env.all_done() {
            let tr = env.step(&[(0, Z)]).unwrap();
            rewards.push(tr[0].reward);
            if env.steps(0) <= 20 {
                assert!(!tr[0].done);
            }
        }
        assert_eq!(env.reason(0), Some(DoneReason::OracleStop));
        assert_eq!(env.steps(0), 21);
        assert_eq!(env.harvest().streamlines[0].len(), 22);
        assert!(rewards.iter().all(|&r| r == 1.0));

        let high = constant_oracle(0.7);
        let mut env =
            TrackingEnv::reset(&v, Some(&high), cfg.clone(), &[Vec3::new(7.5, 7.5, 10.0)]).unwrap();
        let mut last = 0.0;
        while !env.all_done() {
            last = env.step(&[(0, Z)]).unwrap()[0].reward;
        }
        assert_eq!(env.reason(0), Some(DoneReason::WmExit));
        // the final step starts on an unlabelled cap voxel or the ROI
        assert!(last == 11.0 || last == 10.0, "{last}");
    }

    #[test]
    fn oracle_stop_at_the_threshold() {
        let v = tube();
        for (s, stops) in [(0.49, true), (0.51, false)] {
            let o = constant_oracle(s);
            let cfg = EnvConfig {
                t_min: 2,
                ..EnvConfig::default()
            };
            let mut env =
                TrackingEnv::reset(&v, Some(&o), cfg, &[Vec3::new(7.5, 7.5, 10.0)]).unwrap();
            for _ in 0..3 {
                env.step(&[(0, Z)]).unwrap();
            }
            assert_eq!(env.reason(0) == Some(DoneReason::OracleStop), stops);
        }
    }

    #[test]
    fn stride_skips_checks() {
        let v = tube();
        let low = constant_oracle(0.3);
        let cfg = EnvConfig {
            t_min: 5,
            oracle_stride: 4,
            ..EnvConfig::default()
        };
        let mut env =
            TrackingEnv::reset(&v, Some(&low), cfg, &[Vec3::new(7.5, 7.5, 10.0)]).unwrap();
        while !env.all_done() {
            env.step(&[(0, Z)]).unwrap();
        }
        assert_eq!(env.steps(0), 6);
    }

    #[test]
    fn ablation_reduces_to_local_term() {
        let v = tube();
        let o = constant_oracle(0.9);
        let actions: Vec<Vec3> = (0..60)
            .map(|i| turn(5.0 * ((i as f64) * 0.7).sin()))
            .collect();
        let run = |oracle: Option<&OracleModel<f32>>, cfg: EnvConfig| {
            let mut env = TrackingEnv::reset(&v, oracle, cfg, &[Vec3::new(7.5, 7.5, 5.0)]).unwrap();
            let mut out = Vec::new();
            for a in &actions {
                if env.all_done() {
                    break;
                }
                out.push(env.step(&[(0, *a)]).unwrap().remove(0));
            }
            out
        };
        let ablated = run(Some(&o), no_oracle());
        let reference = run(None, EnvConfig::default());
        assert_eq!(ablated.len(), reference.len());
        let mut prev = None;
        let mut at = Vec3::new(7.5, 7.5, 5.0);
        for (a, b) in ablated.iter().zip(&reference) {
            assert_eq!(a.reward, b.reward);
            let u = Vec3::new(a.action[0] as f64, a.action[1] as f64, a.action[2] as f64);
            let u = u.normalized().unwrap();
            assert!((a.reward - local_reward(&v.peaks_near(at), u, prev)).abs() < 1e-6);
            at = at + u * 0.5;
            prev = Some(u);
        }
    }

    #[test]
    fn reward_is_scale_invariant() {
        let v = tube();
        let run = |k: f64| {
            let mut env =
                TrackingEnv::reset(&v, None, no_oracle(), &[Vec3::new(7.5, 7.5, 10.0)]).unwrap();
            env.step(&[(0, Z * k)]).unwrap();
            env.step(&[(0, turn(20.0) * k)]).unwrap()[0].reward
        };
        assert_eq!(run(1.0), run(37.5));
        assert_eq!(run(1.0), run(0.01));
    }

    #[test]
    fn harvest_only_finished() {
        let v = tube();
        let seeds = vec![Vec3::new(7.5, 7.5, 10.0), Vec3::new(7.5, 7.5, 12.0)];
        let mut env = TrackingEnv::reset(&v, None, no_oracle(), &seeds).unwrap();
        assert!(env.harvest().is_empty());
        env.step(&[(0, Vec3::ZERO), (1, Z)]).unwrap();
        let h = env.harvest();
        assert_eq!(h.len(), 1);
        assert_eq!(h.seeds, vec![0]);
        assert_eq!(h.short, vec![true]);
        assert!(env.step(&[(1, Z), (1, Z)]).is_err());
    }
}
