//! Soft actor-critic: Gaussian actor, twin critics with polyak targets,
//! automatic entropy tuning and a uniform replay buffer.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use autodiff::{
    read_tensors_from, write_tensors_to, Adam, AdamState, Graph, ParamId, ParamStore, Tensor, Var,
    LOG_STD_MAX,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{state_width, DoneReason, EnvConfig, TrackingEnv, Transition};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::oracle::OracleModel;
use crate::phantom::{interface_seeds, PhantomVolume};
use crate::record;

pub const ACTION_DIM: usize = 3;
const CONFIG_RECORD: &str = "config/sac.json";
const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8;
const ACTOR_LOG_STD_MIN: f64 = -5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub replay_capacity: usize,
    pub target_entropy: f64,
    pub initial_entropy_coef: f64,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    /// Seeds drawn per interface voxel for the training seed pool.
    pub seeds_per_voxel: usize,
    pub rng_seed: u64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            gamma: 0.95,
            tau: 0.005,
            batch_size: 256,
            hidden_width: 1024,
            hidden_layers: 3,
            replay_capacity: 100_000,
            target_entropy: -(ACTION_DIM as f64),
            initial_entropy_coef: 0.01,
            epochs: 1000,
            episodes_per_epoch: 64,
            seeds_per_voxel: 20,
            rng_seed: 0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("sac.gamma must be in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("sac.tau must be in (0, 1]");
        }
        if self.batch_size == 0 || self.hidden_width == 0 || self.hidden_layers == 0 {
            return bad("sac.batch_size, sac.hidden_width and sac.hidden_layers must be positive");
        }
        if self.replay_capacity < self.batch_size {
            return bad("sac.replay_capacity must hold at least one batch");
        }
        if !(self.lr > 0.0) || !(self.initial_entropy_coef > 0.0) {
            return bad("sac.lr and sac.initial_entropy_coef must be positive");
        }
        if self.episodes_per_epoch == 0 || self.seeds_per_voxel == 0 {
            return bad("sac.episodes_per_epoch and sac.seeds_per_voxel must be positive");
        }
        Ok(())
    }
}

/// Fully connected ReLU stack; the last layer is linear.
#[derive(Debug, Clone)]
struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    fn new(
        store: &mut ParamStore<f32>,
        prefix: &str,
        sizes: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, io)| {
                let bound = 1.0 / (io[0] as f64).sqrt();
                let w: Vec<f32> = (0..io[0] * io[1])
                    .map(|_| rng.random_range(-bound..bound) as f32)
                    .collect();
                let w = store.add(
                    format!("{prefix}.{i}.w"),
                    Tensor::from_vec(vec![io[0], io[1]], w).expect("shape"),
                );
                let b = store.add(format!("{prefix}.{i}.b"), Tensor::zeros(&[io[1]]));
                (w, b)
            })
            .collect();
        Self { layers }
    }

    fn forward(&self, g: &mut Graph<f32>, store: &ParamStore<f32>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let (wv, bv) = (g.param(store, w), g.param(store, b));
            h = g.affine(h, wv, bv)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
struct Networks {
    actor: ParamStore<f32>,
    actor_body: Mlp,
    mean_head: (ParamId, ParamId),
    log_std_head: (ParamId, ParamId),
    critics: [ParamStore<f32>; 2],
    targets: [ParamStore<f32>; 2],
    critic_net: Mlp,
    log_alpha: ParamStore<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
    pub entropy_coef: f64,
}

/// A minibatch in row-major tensors.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Tensor<f32>,
    pub actions: Tensor<f32>,
    pub rewards: Vec<f64>,
    pub next_states: Tensor<f32>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Result<Self> {
        let w = ts.first().map_or(0, |t| t.state.len());
        let b = ts.len();
        let mut states = Vec::with_capacity(b * w);
        let mut next = Vec::with_capacity(b * w);
        let mut actions = Vec::with_capacity(b * ACTION_DIM);
        for t in ts {
            if t.state.len() != w || t.next_state.len() != w {
                return Err(Error::Contract(
                    "transitions with mixed state widths".into(),
                ));
            }
            states.extend_from_slice(&t.state);
            next.extend_from_slice(&t.next_state);
            actions.extend_from_slice(&t.action);
        }
        Ok(Self {
            states: Tensor::from_vec(vec![b, w], states)?,
            actions: Tensor::from_vec(vec![b, ACTION_DIM], actions)?,
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states: Tensor::from_vec(vec![b, w], next)?,
            dones: ts.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Ring buffer of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::new(),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items[self.head..]
            .iter()
            .chain(&self.items[..self.head])
    }

    /// `None` until the buffer holds `n` transitions.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if self.items.len() < n || n == 0 {
            return None;
        }
        Some(
            (0..n)
                .map(|_| &self.items[rng.random_range(0..self.items.len())])
                .collect(),
        )
    }
}

/// Actor, twin critics, target critics, optimizer state and entropy
/// coefficient.
#[derive(Debug, Clone)]
pub struct Agent {
    config: SacConfig,
    state_width: usize,
    nets: Networks,
    actor_opt: AdamState<f32>,
    critic_opt: [AdamState<f32>; 2],
    alpha_opt: AdamState<f32>,
}

impl PartialEq for Agent {
    fn eq(&self, o: &Self) -> bool {
        self.config == o.config
            && self.state_width == o.state_width
            && self.nets.actor == o.nets.actor
            && self.nets.critics == o.nets.critics
            && self.nets.targets == o.nets.targets
            && self.nets.log_alpha == o.nets.log_alpha
            && self.actor_opt == o.actor_opt
            && self.critic_opt == o.critic_opt
            && self.alpha_opt == o.alpha_opt
    }
}

fn standard_normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect()
}

fn column(t: &Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&x| x as f64).collect()
}

impl Agent {
    pub fn new(config: SacConfig, state_width: usize) -> Result<Self> {
        config.validate()?;
        if state_width == 0 {
            return Err(Error::Config("state width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x5ac0_a9e7);
        let (w, l) = (config.hidden_width, config.hidden_layers);

        let mut actor = ParamStore::new();
        let mut sizes = vec![state_width];
        sizes.extend(std::iter::repeat_n(w, l));
        let actor_body = Mlp::new(&mut actor, "actor", &sizes, &mut rng);
        let head = |store: &mut ParamStore<f32>, name: &str, rng: &mut ChaCha8Rng| {
            let m = Mlp::new(store, name, &[w, ACTION_DIM], rng);
            m.layers[0]
        };
        let mean_head = head(&mut actor, "actor.mean", &mut rng);
        let log_std_head = head(&mut actor, "actor.log_std", &mut rng);

        let mut csizes = vec![state_width + ACTION_DIM];
        csizes.extend(std::iter::repeat_n(w, l));
        csizes.push(1);
        let mut c1 = ParamStore::new();
        let critic_net = Mlp::new(&mut c1, "critic", &csizes, &mut rng);
        let mut c2 = ParamStore::new();
        Mlp::new(&mut c2, "critic", &csizes, &mut rng);

        let mut log_alpha = ParamStore::new();
        log_alpha.add(
            "log_alpha",
            Tensor::from_vec(vec![1], vec![config.initial_entropy_coef.ln() as f32])?,
        );

        let nets = Networks {
            targets: [c1.clone(), c2.clone()],
            critics: [c1, c2],
            actor,
            actor_body,
            mean_head,
            log_std_head,
            critic_net,
            log_alpha,
        };
        Ok(Self {
            actor_opt: AdamState::new(&nets.actor),
            critic_opt: [
                AdamState::new(&nets.critics[0]),
                AdamState::new(&nets.critics[1]),
            ],
            alpha_opt: AdamState::new(&nets.log_alpha),
            config,
            state_width,
            nets,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn state_width(&self) -> usize {
        self.state_width
    }

    pub fn entropy_coef(&self) -> f64 {
        (self
            .nets
            .log_alpha
            .get(self.nets.log_alpha.ids().next().expect("one entry"))
            .item() as f64)
            .exp()
    }

    pub fn actor_params(&self) -> &ParamStore<f32> {
        &self.nets.actor
    }

    pub fn critic_params(&self, i: usize) -> &ParamStore<f32> {
        &self.nets.critics[i]
    }

    pub fn critic_params_mut(&mut self, i: usize) -> &mut ParamStore<f32> {
        &mut self.nets.critics[i]
    }

    pub fn target_params(&self, i: usize) -> &ParamStore<f32> {
        &self.nets.targets[i]
    }

    fn check_states(&self, states: &Tensor<f32>) -> Result<usize> {
        match states.shape() {
            [b, w] if *w == self.state_width => Ok(*b),
            s => Err(Error::Tensor(autodiff::TensorError::ShapeMismatch {
                op: "actor input",
                left: s.to_vec(),
                right: vec![0, self.state_width],
            })),
        }
    }

    /// Records the actor: returns `(mean, clamped log_std)`, both `[B, 3]`.
    fn actor_graph(&self, g: &mut Graph<f32>, states: Var) -> Result<(Var, Var)> {
        let n = &self.nets;
        let h = n.actor_body.forward(g, &n.actor, states)?;
        let h = g.relu(h);
        let (mw, mb) = (
            g.param(&n.actor, n.mean_head.0),
            g.param(&n.actor, n.mean_head.1),
        );
        let mean = g.affine(h, mw, mb)?;
        // a unit mean keeps the spread meaningful as an angle; otherwise the
        // entropy bonus inflates both the mean and the std without bound
        let mean = unit_rows(g, mean)?;
        let (sw, sb) = (
            g.param(&n.actor, n.log_std_head.0),
            g.param(&n.actor, n.log_std_head.1),
        );
        let ls = g.affine(h, sw, sb)?;
        // smooth squash into [ACTOR_LOG_STD_MIN, LOG_STD_MAX]; a hard clamp
        // has zero gradient once the entropy bonus pushes past the bound
        let ls = g.tanh(ls);
        let half = 0.5 * (LOG_STD_MAX - ACTOR_LOG_STD_MIN);
        let ls = g.scale(ls, half);
        let ls = g.add_scalar(ls, ACTOR_LOG_STD_MIN + half);
        Ok((mean, ls))
    }

    /// Reparameterised sample and its log-density, `[B, 3]` and `[B, 1]`.
    fn sample_graph(
        &self,
        g: &mut Graph<f32>,
        mean: Var,
        log_std: Var,
        noise: &[f32],
    ) -> Result<(Var, Var)> {
        let a = g.gaussian_sample(mean, log_std, noise)?;
        let b = noise.len() / ACTION_DIM;
        let quad: Vec<f32> = noise
            .chunks(ACTION_DIM)
            .map(|e| {
                (-0.5 * e.iter().map(|x| (x * x) as f64).sum::<f64>()
                    - ACTION_DIM as f64 * HALF_LN_TAU) as f32
            })
            .collect();
        let quad = g.constant(Tensor::from_vec(vec![b, 1], quad)?);
        let s = g.sum_axis(log_std, 1)?;
        let s = g.reshape(s, &[b, 1])?;
        let logp = g.sub(quad, s)?;
        Ok((a, logp))
    }

    /// Critics see the action as the environment does: rescaled to unit
    /// length.
    fn q_graph(
        &self,
        g: &mut Graph<f32>,
        store: &ParamStore<f32>,
        states: Var,
        actions: Var,
    ) -> Result<Var> {
        let unit = unit_rows(g, actions)?;
        let x = g.concat(&[states, unit], 1)?;
        self.nets.critic_net.forward(g, store, x)
    }

    /// Actor mean and clamped log-std for each state row.
    pub fn policy(&self, states: &Tensor<f32>) -> Result<(Tensor<f32>, Tensor<f32>)> {
        self.check_states(states)?;
        let mut g = Graph::new();
        let s = g.constant(states.clone());
        let (m, ls) = self.actor_graph(&mut g, s)?;
        Ok((g.value(m).clone(), g.value(ls).clone()))
    }

    /// Actions for `[B, W]` states with their log-densities. Stochastic mode
    /// draws one standard-normal triple per row from `rng`.
    pub fn act(
        &self,
        states: &Tensor<f32>,
        deterministic: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<Vec3>, Vec<f64>)> {
        let b = self.check_states(states)?;
        let noise = if deterministic {
            vec![0.0; b * ACTION_DIM]
        } else {
            standard_normal(rng, b * ACTION_DIM)
        };
        self.act_with_noise(states, &noise)
    }

    pub fn act_with_noise(
        &self,
        states: &Tensor<f32>,
        noise: &[f32],
    ) -> Result<(Vec<Vec3>, Vec<f64>)> {
        self.check_states(states)?;
        let mut g = Graph::new();
        let s = g.constant(states.clone());
        let (m, ls) = self.actor_graph(&mut g, s)?;
        let (a, logp) = self.sample_graph(&mut g, m, ls, noise)?;
        let actions = g
            .value(a)
            .data()
            .chunks(ACTION_DIM)
            .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
            .collect();
        Ok((actions, column(g.value(logp))))
    }

    /// `Q_i(s, a)`, from the target copy when `target` is set.
    pub fn q_values(
        &self,
        i: usize,
        target: bool,
        states: &Tensor<f32>,
        actions: &Tensor<f32>,
    ) -> Result<Vec<f64>> {
        let store = if target {
            &self.nets.targets[i]
        } else {
            &self.nets.critics[i]
        };
        let mut g = Graph::new();
        let (s, a) = (g.constant(states.clone()), g.constant(actions.clone()));
        let q = self.q_graph(&mut g, store, s, a)?;
        Ok(column(g.value(q)))
    }

    /// Bootstrapped critic targets using next-state actions drawn with
    /// `noise`.
    pub fn critic_targets(&self, batch: &Batch, noise: &[f32]) -> Result<Vec<f64>> {
        let (next_a, next_logp) = self.act_with_noise(&batch.next_states, noise)?;
        let flat: Vec<f32> = next_a
            .iter()
            .flat_map(|a| [a.x as f32, a.y as f32, a.z as f32])
            .collect();
        let next_a = Tensor::from_vec(vec![batch.len(), ACTION_DIM], flat)?;
        let q1 = self.q_values(0, true, &batch.next_states, &next_a)?;
        let q2 = self.q_values(1, true, &batch.next_states, &next_a)?;
        let alpha = self.entropy_coef();
        let gamma = self.config.gamma;
        Ok((0..batch.len())
            .map(|i| {
                let boot = if batch.dones[i] { 0.0 } else { 1.0 };
                batch.rewards[i] + gamma * boot * (q1[i].min(q2[i]) - alpha * next_logp[i])
            })
            .collect())
    }

    /// Mean over the batch of `alpha * log pi(a|s) - min(Q1, Q2)(s, a)` for
    /// actions drawn with `noise`; also returns the mean log-density.
    pub fn actor_loss(&self, states: &Tensor<f32>, noise: &[f32]) -> Result<(f64, f64)> {
        let mut g = Graph::new();
        let (loss, logp) = self.actor_loss_graph(&mut g, states, noise)?;
        Ok((g.value(loss).item() as f64, logp))
    }

    fn actor_loss_graph(
        &self,
        g: &mut Graph<f32>,
        states: &Tensor<f32>,
        noise: &[f32],
    ) -> Result<(Var, f64)> {
        let s = g.constant(states.clone());
        let (m, ls) = self.actor_graph(g, s)?;
        let (a, logp) = self.sample_graph(g, m, ls, noise)?;
        let q1 = self.q_graph(g, &self.nets.critics[0], s, a)?;
        let q2 = self.q_graph(g, &self.nets.critics[1], s, a)?;
        let q = g.minimum(q1, q2)?;
        let ent = g.scale(logp, self.entropy_coef());
        let diff = g.sub(ent, q)?;
        let mean_logp =
            g.value(logp).data().iter().map(|&x| x as f64).sum::<f64>() / states.shape()[0] as f64;
        Ok((g.mean(diff), mean_logp))
    }

    /// One gradient step on both critics, the actor and the entropy
    /// coefficient, followed by the polyak target update.
    pub fn update(&mut self, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<LossReport> {
        let b = self.check_states(&batch.states)?;
        let adam = Adam::new(self.config.lr);
        let next_noise = standard_normal(rng, b * ACTION_DIM);
        let y = self.critic_targets(batch, &next_noise)?;
        let y = Tensor::from_vec(vec![b, 1], y.iter().map(|&v| v as f32).collect())?;

        let mut critic_losses = [0.0; 2];
        for (i, slot) in critic_losses.iter_mut().enumerate() {
            let mut g = Graph::new();
            let (s, a) = (
                g.constant(batch.states.clone()),
                g.constant(batch.actions.clone()),
            );
            let q = self.q_graph(&mut g, &self.nets.critics[i], s, a)?;
            let t = g.constant(y.clone());
            let d = g.sub(q, t)?;
            let sq = g.mul(d, d)?;
            let loss = g.mean(sq);
            *slot = g.value(loss).item() as f64;
            let grads = g.backward(loss)?.param_grads(&self.nets.critics[i]);
            adam.step(&mut self.nets.critics[i], &grads, &mut self.critic_opt[i])?;
        }

        let noise = standard_normal(rng, b * ACTION_DIM);
        let mut g = Graph::new();
        let (loss, mean_logp) = self.actor_loss_graph(&mut g, &batch.states, &noise)?;
        let actor_loss = g.value(loss).item() as f64;
        let grads = g.backward(loss)?.param_grads(&self.nets.actor);
        adam.step(&mut self.nets.actor, &grads, &mut self.actor_opt)?;

        // d/d(log_alpha) of -log_alpha * (log pi + target_entropy)
        let ga = -(mean_logp + self.config.target_entropy) as f32;
        adam.step(
            &mut self.nets.log_alpha,
            &[Some(Tensor::from_vec(vec![1], vec![ga])?)],
            &mut self.alpha_opt,
        )?;

        let tau = self.config.tau as f32;
        for i in 0..2 {
            self.nets.targets[i].polyak_update(&self.nets.critics[i], tau)?;
        }
        let report = LossReport {
            critic1: critic_losses[0],
            critic2: critic_losses[1],
            actor: actor_loss,
            entropy_coef: self.entropy_coef(),
        };
        if ![
            report.critic1,
            report.critic2,
            report.actor,
            report.entropy_coef,
        ]
        .iter()
        .all(|x| x.is_finite())
        {
            return Err(Error::Numerical(format!("non-finite SAC loss {report:?}")));
        }
        Ok(report)
    }

    fn groups(&self) -> Vec<(String, &ParamStore<f32>)> {
        vec![
            ("actor".into(), &self.nets.actor),
            ("critic1".into(), &self.nets.critics[0]),
            ("critic2".into(), &self.nets.critics[1]),
            ("target1".into(), &self.nets.targets[0]),
            ("target2".into(), &self.nets.targets[1]),
            ("entropy".into(), &self.nets.log_alpha),
        ]
    }

    fn optimizers(&self) -> Vec<(&str, &ParamStore<f32>, &AdamState<f32>)> {
        vec![
            ("actor", &self.nets.actor, &self.actor_opt),
            ("critic1", &self.nets.critics[0], &self.critic_opt[0]),
            ("critic2", &self.nets.critics[1], &self.critic_opt[1]),
            ("entropy", &self.nets.log_alpha, &self.alpha_opt),
        ]
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        #[derive(Serialize)]
        struct Preamble<'a> {
            sac: &'a SacConfig,
            state_width: usize,
        }
        let pre = record::encode::<f32, _>(&Preamble {
            sac: &self.config,
            state_width: self.state_width,
        });
        let mut owned: Vec<(String, Tensor<f32>)> = Vec::new();
        for (group, store) in self.groups() {
            for (name, t) in store.iter() {
                owned.push((format!("{group}/{name}"), t.clone()));
            }
        }
        for (group, store, st) in self.optimizers() {
            owned.push((
                format!("adam/{group}/step"),
                Tensor::from_vec(vec![1], vec![st.step as f32])?,
            ));
            for (((name, _), m), v) in store.iter().zip(&st.m).zip(&st.v) {
                owned.push((format!("adam/{group}/m/{name}"), m.clone()));
                owned.push((format!("adam/{group}/v/{name}"), v.clone()));
            }
        }
        let mut named: Vec<(&str, &Tensor<f32>)> = vec![(CONFIG_RECORD, &pre)];
        named.extend(owned.iter().map(|(n, t)| (n.as_str(), t)));
        write_tensors_to(w, &named)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Preamble {
            sac: SacConfig,
            state_width: usize,
        }
        let tensors = read_tensors_from::<_, f32>(r)?;
        let (pre, rest) = record::split(CONFIG_RECORD, &tensors)?;
        let pre: Preamble = record::decode(CONFIG_RECORD, pre)?;
        let mut agent = Self::new(pre.sac, pre.state_width)?;
        let find = |name: &str| -> Result<&Tensor<f32>> {
            rest.iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Format {
                    expected: format!("tensor {name}"),
                    found: "nothing".into(),
                })
        };
        let load = |store: &mut ParamStore<f32>, group: &str| -> Result<()> {
            let prefix = format!("{group}/");
            let named: Vec<(String, Tensor<f32>)> = rest
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(&prefix).map(|n| (n.to_string(), t.clone())))
                .collect();
            store.load_named(&named)?;
            Ok(())
        };
        let n = &mut agent.nets;
        load(&mut n.actor, "actor")?;
        load(&mut n.critics[0], "critic1")?;
        load(&mut n.critics[1], "critic2")?;
        load(&mut n.targets[0], "target1")?;
        load(&mut n.targets[1], "target2")?;
        load(&mut n.log_alpha, "entropy")?;
        let stores = [
            ("actor", agent.nets.actor.clone()),
            ("critic1", agent.nets.critics[0].clone()),
            ("critic2", agent.nets.critics[1].clone()),
            ("entropy", agent.nets.log_alpha.clone()),
        ];
        for (group, store) in stores {
            let mut st = AdamState::new(&store);
            st.step = find(&format!("adam/{group}/step"))?.item() as u64;
            for (i, (name, _)) in store.iter().enumerate() {
                st.m[i] = find(&format!("adam/{group}/m/{name}"))?.clone();
                st.v[i] = find(&format!("adam/{group}/v/{name}"))?.clone();
            }
            match group {
                "actor" => agent.actor_opt = st,
                "critic1" => agent.critic_opt[0] = st,
                "critic2" => agent.critic_opt[1] = st,
                _ => agent.alpha_opt = st,
            }
        }
        Ok(agent)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let a = Self::read_from(&mut cursor)?;
        record::no_trailing("agent checkpoint", cursor)?;
        Ok(a)
    }
}

/// Stacks per-episode states into a `[B, W]` tensor.
pub fn stack_states(states: &[Vec<f32>]) -> Result<Tensor<f32>> {
    let w = states.first().map_or(0, Vec::len);
    let data: Vec<f32> = states.iter().flat_map(|s| s.iter().copied()).collect();
    Ok(Tensor::from_vec(vec![states.len(), w], data)?)
}

/// Rows of a `[B, 3]` tensor scaled to unit length.
fn unit_rows(g: &mut Graph<f32>, x: Var) -> Result<Var> {
    let b = g.shape(x)[0];
    let sq = g.mul(x, x)?;
    let n2 = g.sum_axis(sq, 1)?;
    let n2 = g.reshape(n2, &[b, 1])?;
    let ln = g.log(n2);
    let ln = g.scale(ln, -0.5);
    let inv = g.exp(ln);
    let ones = g.constant(Tensor::from_vec(
        vec![1, ACTION_DIM],
        vec![1.0; ACTION_DIM],
    )?);
    let inv = g.matmul(inv, ones)?;
    Ok(g.mul(x, inv)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub mean_return: f64,
    pub mean_length: f64,
    pub reasons: BTreeMap<DoneReason, usize>,
    pub updates: usize,
    pub losses: LossReport,
}

#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub agent: Agent,
    pub trace: Vec<EpochTrace>,
}

/// Episodes from `seeds` rolled out with the agent until all finish.
pub fn rollout<'a>(
    agent: &Agent,
    v: &'a PhantomVolume,
    oracle: Option<&'a OracleModel<f32>>,
    env_cfg: &EnvConfig,
    seeds: &[Vec3],
    deterministic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<TrackingEnv<'a>> {
    let mut env = TrackingEnv::reset(v, oracle, env_cfg.clone(), seeds)?;
    while !env.all_done() {
        let active = env.active();
        let states: Vec<Vec<f32>> = active.iter().map(|&i| env.state(i)).collect();
        let (actions, _) = agent.act(&stack_states(&states)?, deterministic, rng)?;
        let batch: Vec<(usize, Vec3)> = active.into_iter().zip(actions).collect();
        env.step(&batch)?;
    }
    Ok(env)
}

/// Off-policy training: each epoch rolls out `episodes_per_epoch` seeds
/// drawn from the interface pool with the stochastic actor and performs one
/// update per batched environment step once the buffer holds a batch.
pub fn train_agent(
    v: &PhantomVolume,
    oracle: Option<&OracleModel<f32>>,
    env_cfg: &EnvConfig,
    cfg: &SacConfig,
    mut on_epoch: impl FnMut(&EpochTrace, &Agent) -> Result<()>,
) -> Result<TrainedAgent> {
    cfg.validate()?;
    env_cfg.validate()?;
    if oracle.is_none() && env_cfg.uses_oracle() {
        return Err(Error::Config(
            "env uses the oracle (alpha != 0 or oracle_stop) but none was given".into(),
        ));
    }
    let mut agent = Agent::new(cfg.clone(), state_width(v.k()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let pool = interface_seeds(v, cfg.seeds_per_voxel, rng.random())?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let seeds: Vec<Vec3> = (0..cfg.episodes_per_epoch)
            .map(|_| pool[rng.random_range(0..pool.len())])
            .collect();
        let mut env = TrackingEnv::reset(v, oracle, env_cfg.clone(), &seeds)?;
        let mut updates = 0;
        let mut loss_sum = LossReport::default();
        while !env.all_done() {
            let active = env.active();
            let states: Vec<Vec<f32>> = active.iter().map(|&i| env.state(i)).collect();
            let (actions, _) = agent.act(&stack_states(&states)?, false, &mut rng)?;
            let batch: Vec<(usize, Vec3)> = active.into_iter().zip(actions).collect();
            // one gradient step per transition collected
            for t in env.step(&batch)? {
                buffer.push(t);
                let Some(sample) = buffer.sample(cfg.batch_size, &mut rng) else {
                    continue;
                };
                let b = Batch::from_transitions(&sample)?;
                let r = agent.update(&b, &mut rng)?;
                updates += 1;
                loss_sum.critic1 += r.critic1;
                loss_sum.critic2 += r.critic2;
                loss_sum.actor += r.actor;
                loss_sum.entropy_coef = r.entropy_coef;
            }
        }
        let n = env.len() as f64;
        let mut reasons = BTreeMap::new();
        for i in 0..env.len() {
            if let Some(r) = env.reason(i) {
                *reasons.entry(r).or_insert(0) += 1;
            }
        }
        let k = updates.max(1) as f64;
        let t = EpochTrace {
            epoch,
            mean_return: (0..env.len()).map(|i| env.episode_return(i)).sum::<f64>() / n,
            mean_length: (0..env.len()).map(|i| env.steps(i) as f64).sum::<f64>() / n,
            reasons,
            updates,
            losses: LossReport {
                critic1: loss_sum.critic1 / k,
                critic2: loss_sum.critic2 / k,
                actor: loss_sum.actor / k,
                entropy_coef: loss_sum.entropy_coef,
            },
        };
        log::info!(
            "agent epoch {epoch}: return {:.3}, length {:.1}, updates {updates}",
            t.mean_return,
            t.mean_length
        );
        on_epoch(&t, &agent)?;
        trace.push(t);
    }
    Ok(TrainedAgent { agent, trace })
}
