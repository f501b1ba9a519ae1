//! Transformer regressor scoring streamline plausibility in `[0, 1]`.
//!
//! A streamline is resampled to `n_points`, turned into `n_points - 1`
//! displacement vectors, projected to `embed_dim`, prefixed with a learned
//! SCORE token, offset by a sinusoidal positional encoding and run through
//! post-norm encoder blocks. The SCORE position goes through a linear layer
//! and a sigmoid.

use std::io::{Read, Write};

use autodiff::{
    read_tensors_from, write_tensors_to, Adam, AdamState, Graph, ParamId, ParamStore, Scalar,
    Tensor, Var,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{resample, to_directions, DirectionSequence, Streamline, Vec3};
use crate::record;

const LN_EPS: f64 = 1e-5;
const MASKED: f64 = -1e9;
const CONFIG_RECORD: &str = "config/oracle.json";
/// Streamlines per forward pass during inference; bounds peak memory.
const INFERENCE_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub n_points: usize,
    pub embed_dim: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub threshold: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_points: 128,
            embed_dim: 32,
            n_blocks: 4,
            n_heads: 4,
            ffn_dim: 2048,
            threshold: 0.5,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_points < 2 {
            return bad(format!("n_points must be >= 2, got {}", self.n_points));
        }
        if self.embed_dim == 0 || self.n_heads == 0 || self.ffn_dim == 0 || self.n_blocks == 0 {
            return bad("embed_dim, n_heads, ffn_dim and n_blocks must be positive".into());
        }
        if self.embed_dim % self.n_heads != 0 {
            return bad(format!(
                "embed_dim {} is not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            ));
        }
        Ok(())
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        let (e, f) = (self.embed_dim, self.ffn_dim);
        let block = 4 * (e * e + e) + 2 * e * f + f + e + 2 * 2 * e;
        self.n_blocks * block + (3 * e + e) + e + (e + 1)
    }

    /// Tokens per streamline: directions plus the SCORE token.
    pub fn tokens(&self) -> usize {
        self.n_points
    }
}

#[derive(Debug, Clone)]
struct BlockIds {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_g: ParamId,
    ln1_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
}

#[derive(Debug, Clone)]
struct Ids {
    w_in: ParamId,
    b_in: ParamId,
    score: ParamId,
    blocks: Vec<BlockIds>,
    w_out: ParamId,
    b_out: ParamId,
}

#[derive(Debug, Clone)]
pub struct OracleModel<T: Scalar = f32> {
    config: OracleConfig,
    params: ParamStore<T>,
    ids: Ids,
}

impl<T: Scalar> PartialEq for OracleModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::cast(rng.random_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape.to_vec(), data).expect("valid shape")
}

impl<T: Scalar> OracleModel<T> {
    /// Fresh model; linear weights are `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// except the input projection, biases 0, layer-norm gains 1.
    pub fn new(config: OracleConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (e, f) = (config.embed_dim, config.ffn_dim);
        let mut p = ParamStore::new();
        let linear = |p: &mut ParamStore<T>,
                      rng: &mut ChaCha8Rng,
                      name: &str,
                      fan_in: usize,
                      fan_out: usize| {
            let w = p.add(
                format!("{name}.w"),
                uniform(rng, &[fan_in, fan_out], 1.0 / (fan_in as f64).sqrt()),
            );
            let b = p.add(format!("{name}.b"), Tensor::zeros(&[fan_out]));
            (w, b)
        };
        let (w_in, b_in) = linear(&mut p, &mut rng, "input", 3, e);
        // resampled steps are about length / (n_points - 1) voxels; widen the
        // input init so a 16-voxel streamline's steps project to unit scale
        let widen = (config.n_points - 1) as f64 / 16.0;
        let t = p.get_mut(w_in);
        *t = t.map(|x| x * T::cast(widen));
        let score = p.add("score_token", uniform(&mut rng, &[e], 0.1));
        let mut blocks = Vec::new();
        for i in 0..config.n_blocks {
            let n = |s: &str| format!("block{i}.{s}");
            let (wq, bq) = linear(&mut p, &mut rng, &n("q"), e, e);
            let (wk, bk) = linear(&mut p, &mut rng, &n("k"), e, e);
            let (wv, bv) = linear(&mut p, &mut rng, &n("v"), e, e);
            let (wo, bo) = linear(&mut p, &mut rng, &n("o"), e, e);
            let ln1_g = p.add(n("ln1.g"), Tensor::full(&[e], T::one()));
            let ln1_b = p.add(n("ln1.b"), Tensor::zeros(&[e]));
            let (w1, b1) = linear(&mut p, &mut rng, &n("ffn1"), e, f);
            let (w2, b2) = linear(&mut p, &mut rng, &n("ffn2"), f, e);
            let ln2_g = p.add(n("ln2.g"), Tensor::full(&[e], T::one()));
            let ln2_b = p.add(n("ln2.b"), Tensor::zeros(&[e]));
            blocks.push(BlockIds {
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                ln1_g,
                ln1_b,
                w1,
                b1,
                w2,
                b2,
                ln2_g,
                ln2_b,
            });
        }
        let (w_out, b_out) = linear(&mut p, &mut rng, "head", e, 1);
        Ok(Self {
            config,
            params: p,
            ids: Ids {
                w_in,
                b_in,
                score,
                blocks,
                w_out,
                b_out,
            },
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    pub fn cast<U: Scalar>(&self) -> OracleModel<U> {
        let mut out =
            OracleModel::<U>::new(self.config.clone(), 0).expect("config already validated");
        for (id, (_, t)) in out
            .params
            .ids()
            .collect::<Vec<_>>()
            .into_iter()
            .zip(self.params.iter())
        {
            *out.params.get_mut(id) = t.cast();
        }
        out
    }

    /// Records the forward pass for a batch of direction sequences of any
    /// lengths up to `n_points - 1`; shorter sequences are padded and masked
    /// out of attention. Returns the `[B, 1]` scores.
    pub fn forward(&self, g: &mut Graph<T>, batch: &[DirectionSequence]) -> Result<Var> {
        self.forward_with(&self.params, g, batch)
    }

    /// [`Self::forward`] reading weights from `params`, which must share this
    /// model's layout.
    pub fn forward_with(
        &self,
        params: &ParamStore<T>,
        g: &mut Graph<T>,
        batch: &[DirectionSequence],
    ) -> Result<Var> {
        let cfg = &self.config;
        let (e, heads) = (cfg.embed_dim, cfg.n_heads);
        let hd = e / heads;
        let b = batch.len();
        if b == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let max_len = batch.iter().map(DirectionSequence::len).max().unwrap_or(0);
        if max_len == 0 || max_len > cfg.n_points - 1 {
            return Err(Error::InvalidInput(format!(
                "direction sequences must have 1..={} entries, got {max_len}",
                cfg.n_points - 1
            )));
        }
        if let Some(s) = batch.iter().find(|s| s.is_empty()) {
            return Err(Error::InvalidInput(format!(
                "empty direction sequence in batch ({} entries)",
                s.len()
            )));
        }
        let t = max_len + 1;
        let mut dirs = vec![T::zero(); b * max_len * 3];
        for (i, s) in batch.iter().enumerate() {
            for (j, d) in s.directions.iter().enumerate() {
                let o = (i * max_len + j) * 3;
                dirs[o] = T::cast(d.x);
                dirs[o + 1] = T::cast(d.y);
                dirs[o + 2] = T::cast(d.z);
            }
        }
        let padded = batch.iter().any(|s| s.len() < max_len);

        let x = g.constant(Tensor::from_vec(vec![b, max_len, 3], dirs)?);
        let (w_in, b_in) = (
            g.param(params, self.ids.w_in),
            g.param(params, self.ids.b_in),
        );
        let x = g.affine(x, w_in, b_in)?;
        let ones = g.constant(Tensor::full(&[b, 1, e], T::one()));
        let tok = g.param(params, self.ids.score);
        let tok = g.mul(ones, tok)?;
        let h = g.concat(&[tok, x], 1)?;
        let pe = g.constant(positional_encoding(t, e));
        let mut h = g.add(h, pe)?;

        let mask = padded.then(|| {
            let mut m = vec![T::zero(); b * t * t];
            for (i, s) in batch.iter().enumerate() {
                for q in 0..t {
                    for k in s.len() + 1..t {
                        m[(i * t + q) * t + k] = T::cast(MASKED);
                    }
                }
            }
            Tensor::from_vec(vec![b, t, t], m).expect("mask shape")
        });
        let mask = mask.map(|m| g.constant(m));
        let scale = 1.0 / (hd as f64).sqrt();

        for blk in &self.ids.blocks {
            let p = |g: &mut Graph<T>, id| g.param(params, id);
            let (wq, bq, wk, bk, wv, bv) = (
                p(g, blk.wq),
                p(g, blk.bq),
                p(g, blk.wk),
                p(g, blk.bk),
                p(g, blk.wv),
                p(g, blk.bv),
            );
            let q = g.affine(h, wq, bq)?;
            let k = g.affine(h, wk, bk)?;
            let v = g.affine(h, wv, bv)?;
            let mut outs = Vec::with_capacity(heads);
            for i in 0..heads {
                let qh = g.slice(q, 2, i * hd, hd)?;
                let kh = g.slice(k, 2, i * hd, hd)?;
                let vh = g.slice(v, 2, i * hd, hd)?;
                let kt = g.transpose(kh)?;
                let s = g.matmul(qh, kt)?;
                let mut s = g.scale(s, scale);
                if let Some(m) = mask {
                    s = g.add(s, m)?;
                }
                let a = g.softmax(s, 2)?;
                outs.push(g.matmul(a, vh)?);
            }
            let cat = if heads == 1 {
                outs[0]
            } else {
                g.concat(&outs, 2)?
            };
            let (wo, bo) = (p(g, blk.wo), p(g, blk.bo));
            let o = g.affine(cat, wo, bo)?;
            let r = g.add(h, o)?;
            h = norm(params, g, r, blk.ln1_g, blk.ln1_b)?;

            let (w1, b1, w2, b2) = (p(g, blk.w1), p(g, blk.b1), p(g, blk.w2), p(g, blk.b2));
            let f = g.affine(h, w1, b1)?;
            let f = g.relu(f);
            let f = g.affine(f, w2, b2)?;
            let r = g.add(h, f)?;
            h = norm(params, g, r, blk.ln2_g, blk.ln2_b)?;
        }

        let s = g.slice(h, 1, 0, 1)?;
        let s = g.reshape(s, &[b, e])?;
        let (w_out, b_out) = (
            g.param(params, self.ids.w_out),
            g.param(params, self.ids.b_out),
        );
        let logit = g.affine(s, w_out, b_out)?;
        Ok(g.sigmoid(logit))
    }

    /// Directions of `s` after resampling to `n_points`.
    pub fn prepare(&self, s: &Streamline) -> Result<DirectionSequence> {
        to_directions(&resample(s, self.config.n_points)?)
    }

    pub fn score(&self, s: &Streamline) -> Result<f64> {
        Ok(self.score_batch(std::slice::from_ref(s))?[0])
    }

    pub fn score_batch(&self, batch: &[Streamline]) -> Result<Vec<f64>> {
        let dirs = batch
            .iter()
            .map(|s| self.prepare(s))
            .collect::<Result<Vec<_>>>()?;
        self.score_directions(&dirs)
    }

    /// Scores raw direction sequences, padding shorter ones within each
    /// chunk.
    pub fn score_directions(&self, batch: &[DirectionSequence]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(INFERENCE_CHUNK) {
            let mut g = Graph::new();
            let y = self.forward(&mut g, chunk)?;
            out.extend(g.value(y).data().iter().map(|v| v.as_f64()));
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let record = record::encode::<T, _>(&self.config);
        let mut named: Vec<(&str, &Tensor<T>)> = vec![(CONFIG_RECORD, &record)];
        named.extend(self.params.iter());
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
        let tensors = read_tensors_from::<_, T>(r)?;
        let (rec, params) = record::split(CONFIG_RECORD, &tensors)?;
        let config: OracleConfig = record::decode(CONFIG_RECORD, rec)?;
        let mut model = Self::new(config, 0)?;
        model.params.load_named(params)?;
        Ok(model)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let m = Self::read_from(&mut cursor)?;
        record::no_trailing("oracle checkpoint", cursor)?;
        Ok(m)
    }
}

fn norm<T: Scalar>(
    params: &ParamStore<T>,
    g: &mut Graph<T>,
    x: Var,
    gain: ParamId,
    bias: ParamId,
) -> Result<Var> {
    let n = g.layer_norm(x, LN_EPS);
    let (gn, bs) = (g.param(params, gain), g.param(params, bias));
    let y = g.mul(n, gn)?;
    Ok(g.add(y, bs)?)
}

pub fn positional_encoding<T: Scalar>(tokens: usize, dim: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(tokens * dim);
    for pos in 0..tokens {
        for i in 0..dim {
            let freq = 10000f64.powf(-((i / 2 * 2) as f64) / dim as f64);
            let a = pos as f64 * freq;
            data.push(T::cast(if i % 2 == 0 { a.sin() } else { a.cos() }));
        }
    }
    Tensor::from_vec(vec![tokens, dim], data).expect("valid shape")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub flip_p: f64,
    pub cut_p: f64,
    /// Smallest fraction of points a cut keeps.
    pub min_keep: f64,
    pub noise_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_p: 0.5,
            cut_p: 0.3,
            min_keep: 0.5,
            noise_sigma: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            flip_p: 0.0,
            cut_p: 0.0,
            min_keep: 1.0,
            noise_sigma: 0.0,
        }
    }
}

/// Random flip, cut (then resample to `n_points`) and point-wise Gaussian
/// noise. The target passes through unchanged.
pub fn augment<R: Rng>(
    s: &Streamline,
    target: f64,
    n_points: usize,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(Streamline, f64)> {
    if s.len() < 2 {
        return Err(Error::InvalidInput(
            "augment needs at least 2 points".into(),
        ));
    }
    let mut out = if rng.random_bool(cfg.flip_p.clamp(0.0, 1.0)) {
        s.reversed()
    } else {
        s.clone()
    };
    if rng.random_bool(cfg.cut_p.clamp(0.0, 1.0)) {
        let n = out.len();
        let min = ((cfg.min_keep * n as f64).ceil() as usize).clamp(2, n);
        let keep = rng.random_range(min..=n);
        let pts = out.points();
        let part = if rng.random_bool(0.5) {
            pts[..keep].to_vec()
        } else {
            pts[n - keep..].to_vec()
        };
        let cut = Streamline::new(part)?;
        out = if cut.arc_length() > 0.0 {
            resample(&cut, n_points)?
        } else {
            cut
        };
    }
    if cfg.noise_sigma > 0.0 {
        let d = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        let pts = out
            .points()
            .iter()
            .map(|p| *p + Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng)))
            .collect();
        out = Streamline::new(pts)?;
    }
    Ok((out, target))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub val_fraction: f64,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr: 5e-4,
            seed: 0,
            val_fraction: 0.1,
            augment: AugmentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn compute(scores: &[f64], targets: &[f64], threshold: f64) -> Self {
        let n = scores.len().max(1) as f64;
        let (mut tp, mut tn, mut fp, mut fneg) = (0.0, 0.0, 0.0, 0.0);
        let mut loss = 0.0;
        for (&s, &t) in scores.iter().zip(targets) {
            loss += (s - t) * (s - t);
            match (s >= threshold, t >= 0.5) {
                (true, true) => tp += 1.0,
                (false, false) => tn += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
            }
        }
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let sensitivity = ratio(tp, tp + fneg);
        let precision = ratio(tp, tp + fp);
        Self {
            loss: loss / n,
            accuracy: (tp + tn) / n,
            sensitivity,
            precision,
            f1: ratio(2.0 * precision * sensitivity, precision + sensitivity),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainedOracle {
    pub model: OracleModel<f32>,
    pub trace: Vec<EpochStats>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
}

/// Stratified split: `fraction` of each class (at least one when the class
/// has two or more members) goes to validation.
pub fn stratified_split(
    targets: &[f64],
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [0.0, 1.0] {
        let mut idx: Vec<usize> = (0..targets.len())
            .filter(|&i| targets[i] == class)
            .collect();
        idx.shuffle(rng);
        let mut n_val = (fraction * idx.len() as f64).round() as usize;
        if fraction > 0.0 && n_val == 0 && idx.len() >= 2 {
            n_val = 1;
        }
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Adam on the mean squared error between scores and `{0, 1}` targets,
/// with augmentation on the training split only.
pub fn train_oracle(
    streamlines: &[Streamline],
    targets: &[f64],
    cfg: &OracleConfig,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainedOracle> {
    cfg.validate()?;
    if streamlines.len() != targets.len() {
        return Err(Error::TrainingData(
            "streamline and target counts differ".into(),
        ));
    }
    if targets.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::TrainingData("targets must be 0 or 1".into()));
    }
    if !(targets.contains(&0.0) && targets.contains(&1.0)) {
        return Err(Error::TrainingData("both classes must be present".into()));
    }
    if tc.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut model = OracleModel::<f32>::new(cfg.clone(), rng.random())?;
    let prepared = streamlines
        .iter()
        .map(|s| resample(s, cfg.n_points))
        .collect::<Result<Vec<_>>>()?;
    let (train_idx, val_idx) = stratified_split(targets, tc.val_fraction, &mut rng);
    let val_dirs = val_idx
        .iter()
        .map(|&i| to_directions(&prepared[i]))
        .collect::<Result<Vec<_>>>()?;
    let val_targets: Vec<f64> = val_idx.iter().map(|&i| targets[i]).collect();

    let adam = Adam::new(tc.lr);
    let mut state = AdamState::new(model.params());
    let mut order = train_idx.clone();
    let mut trace = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let mut dirs = Vec::with_capacity(batch.len());
            let mut ys = Vec::with_capacity(batch.len());
            for &i in batch {
                let (s, y) = augment(
                    &streamlines[i],
                    targets[i],
                    cfg.n_points,
                    &tc.augment,
                    &mut rng,
                )?;
                dirs.push(model.prepare(&s)?);
                ys.push(y as f32);
            }
            let mut g = Graph::new();
            let out = model.forward(&mut g, &dirs)?;
            let y = g.constant(Tensor::from_vec(vec![batch.len(), 1], ys)?);
            let diff = g.sub(out, y)?;
            let sq = g.mul(diff, diff)?;
            let loss = g.mean(sq);
            let l = g.value(loss).item().as_f64();
            if !l.is_finite() {
                return Err(Error::Numerical(format!(
                    "oracle loss became {l} in epoch {epoch}"
                )));
            }
            total += l * batch.len() as f64;
            let grads = g.backward(loss)?.param_grads(model.params());
            adam.step(model.params_mut(), &grads, &mut state)?;
        }
        let validation = if val_dirs.is_empty() {
            Metrics::default()
        } else {
            Metrics::compute(
                &model.score_directions(&val_dirs)?,
                &val_targets,
                cfg.threshold,
            )
        };
        let stats = EpochStats {
            epoch,
            train_loss: total / order.len().max(1) as f64,
            validation,
        };
        log::info!(
            "oracle epoch {epoch}: train mse {:.4}, val acc {:.3}, f1 {:.3}",
            stats.train_loss,
            validation.accuracy,
            validation.f1
        );
        on_epoch(&stats);
        trace.push(stats);
    }
    Ok(TrainedOracle {
        model,
        trace,
        train_idx,
        val_idx,
    })
}
