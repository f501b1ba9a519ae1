//! Configuration files, artifact manifests and the stages behind the
//! command-line tool.
//!
//! Every stage draws its seed from one top-level `run.seed`, split into
//! named streams, so a whole experiment is reproduced from a config file
//! and a single number.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{DoneReason, EnvConfig};
use crate::error::{Error, Result};
use crate::evaluator::{report_with, EvalConfig, TractometerReport};
use crate::oracle::{
    train_oracle, EpochStats, OracleConfig, OracleModel, TrainConfig, TrainedOracle,
};
use crate::phantom::{
    generate_phantom, presets, read_phantom, synthesize_labeled_set_with, write_phantom,
    LabeledStreamlineSet, PhantomSpec, PhantomVolume, SampleKind, SynthOptions,
};
use crate::sac::{train_agent, Agent, EpochTrace, SacConfig};
use crate::tracker::{track_baseline, track_policy, TrackConfig, TrackResult};
use crate::tractogram::{scores_to_text, to_vtk, tractogram_to_bytes, Tractogram};

pub const STAGES: [&str; 5] = ["phantom", "data", "oracle", "agent", "track"];

/// Keys that may be absent from the serialized default but are accepted.
const OPTIONAL_KEYS: &[&str] = &["phantom.spec"];

/// Per-stage seeds come from `run.seed`; these are refused in files.
const SEED_KEYS: &[&str] = &["oracle_train.seed", "sac.rng_seed"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Write an intermediate agent checkpoint every this many epochs; 0
    /// keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSection {
    pub preset: String,
    /// Inline spec; takes precedence over `preset`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<PhantomSpec>,
}

impl Default for PhantomSection {
    fn default() -> Self {
        Self {
            preset: "two-arcs-one-crossing".into(),
            spec: None,
        }
    }
}

impl PhantomSection {
    pub fn resolve(&self) -> Result<PhantomSpec> {
        match &self.spec {
            Some(s) => Ok(s.clone()),
            None => presets::by_name(&self.preset).ok_or_else(|| {
                Error::Config(format!(
                    "unknown phantom preset {:?}; known: {}",
                    self.preset,
                    presets::NAMES.join(", ")
                ))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n_pos: usize,
    pub n_neg: usize,
    pub step: f64,
    pub wobble: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            n_pos: 1000,
            n_neg: 1000,
            step: 0.5,
            wobble: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub run: RunSection,
    pub phantom: PhantomSection,
    pub data: DataSection,
    pub oracle: OracleConfig,
    pub oracle_train: TrainConfig,
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub track: TrackConfig,
    pub eval: EvalConfig,
}

impl Config {
    /// Parses a TOML config. Unknown keys are reported all at once.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let default =
            toml::Table::try_from(Config::default()).map_err(|e| Error::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys("", &user, &default, &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::UnknownKeys(unknown));
        }
        for key in SEED_KEYS {
            if lookup(&user, key).is_some() {
                return Err(Error::Config(format!(
                    "{key} is derived from run.seed and cannot be set"
                )));
            }
        }
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// TOML accepted by [`Config::from_toml`]; derived seed keys are left
    /// out.
    pub fn to_toml(&self) -> String {
        let mut t = toml::Table::try_from(self).expect("config serializes");
        for key in SEED_KEYS {
            let (section, field) = key.split_once('.').expect("dotted key");
            if let Some(toml::Value::Table(s)) = t.get_mut(section) {
                s.remove(field);
            }
        }
        toml::to_string(&t).expect("table serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.resolve()?.validate()?;
        if self.data.n_pos == 0 || self.data.n_neg == 0 {
            return Err(Error::Config(
                "data.n_pos and data.n_neg must be positive".into(),
            ));
        }
        if !(self.data.step > 0.0) || !(self.data.wobble >= 0.0) {
            return Err(Error::Config(
                "data.step must be positive and data.wobble non-negative".into(),
            ));
        }
        self.oracle.validate()?;
        self.env.validate()?;
        self.sac.validate()?;
        if self.track.seeds_per_voxel == 0 || self.track.workers == 0 {
            return Err(Error::Config(
                "track.seeds_per_voxel and track.workers must be positive".into(),
            ));
        }
        if !(self.eval.vc_path_fraction > 0.0 && self.eval.vc_path_fraction <= 1.0) {
            return Err(Error::Config(
                "eval.vc_path_fraction must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn seed(&self, stage: &str) -> u64 {
        stage_seed(self.run.seed, stage)
    }

    pub fn seeds(&self) -> BTreeMap<String, u64> {
        STAGES
            .iter()
            .map(|s| (s.to_string(), self.seed(s)))
            .collect()
    }
}

fn unknown_keys(prefix: &str, user: &toml::Table, default: &toml::Table, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (v, default.get(k)) {
            (toml::Value::Table(u), Some(toml::Value::Table(d))) => unknown_keys(&path, u, d, out),
            (_, Some(_)) => {}
            (_, None) if OPTIONAL_KEYS.contains(&path.as_str()) => {}
            (_, None) => out.push(path),
        }
    }
}

fn lookup<'a>(t: &'a toml::Table, dotted: &str) -> Option<&'a toml::Value> {
    let mut parts = dotted.split('.');
    let mut v = t.get(parts.next()?)?;
    for p in parts {
        v = v.as_table()?.get(p)?;
    }
    Some(v)
}

/// Seed of a named stream: the first eight bytes of
/// `sha256(top seed || name)`.
pub fn stage_seed(top: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(top.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact: String,
    pub sha256: String,
    pub bytes: usize,
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub config: Config,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputRecord>,
    /// Stage-specific summary, e.g. training traces.
    pub summary: serde_json::Value,
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

/// One invocation: the resolved config plus the inputs read so far, which
/// every manifest written afterwards records.
#[derive(Debug, Clone)]
pub struct Session {
    pub config: Config,
    pub command: String,
    pub workers: Option<usize>,
    inputs: Vec<InputRecord>,
}

impl Session {
    pub fn new(config: Config, command: &str) -> Self {
        Self {
            config,
            command: command.into(),
            workers: None,
            inputs: Vec::new(),
        }
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    /// Reads an input file and records its checksum.
    pub fn read_input(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        self.inputs.push(InputRecord {
            role: role.into(),
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn manifest(&self, artifact: &Path, bytes: &[u8], summary: serde_json::Value) -> Manifest {
        Manifest {
            artifact: artifact.display().to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: self.config.hash(),
            config: self.config.clone(),
            seeds: self.config.seeds(),
            inputs: self.inputs.clone(),
            summary,
        }
    }

    /// Writes an artifact and its manifest, both atomically.
    pub fn emit(&self, path: &Path, bytes: &[u8], summary: serde_json::Value) -> Result<()> {
        write_atomic(path, bytes)?;
        let m = serde_json::to_vec_pretty(&self.manifest(path, bytes, summary))
            .expect("manifest serializes");
        write_atomic(&manifest_path(path), &m)?;
        log::info!("wrote {} ({} bytes)", path.display(), bytes.len());
        Ok(())
    }

    pub fn track_config(&self) -> TrackConfig {
        let mut t = self.config.track.clone();
        if let Some(w) = self.workers {
            t.workers = w.max(1);
        }
        t
    }
}

pub fn build_phantom(cfg: &Config) -> Result<PhantomVolume> {
    generate_phantom(&cfg.phantom.resolve()?, cfg.seed("phantom"))
}

pub fn build_dataset(cfg: &Config, v: &PhantomVolume) -> Result<LabeledStreamlineSet> {
    let opts = SynthOptions {
        step: cfg.data.step,
        wobble: cfg.data.wobble,
        ..SynthOptions::default()
    };
    synthesize_labeled_set_with(v, cfg.data.n_pos, cfg.data.n_neg, cfg.seed("data"), &opts)
}

/// One `target kind` pair per line.
pub fn labels_to_text(set: &LabeledStreamlineSet) -> String {
    set.targets
        .iter()
        .zip(&set.kinds)
        .map(|(t, k)| format!("{t} {}\n", k.as_str()))
        .collect()
}

pub fn labels_from_text(text: &str) -> Result<(Vec<f64>, Vec<SampleKind>)> {
    let mut targets = Vec::new();
    let mut kinds = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let bad = || Error::Format {
            expected: "`<target> <kind>` per line".into(),
            found: line.to_string(),
        };
        let mut it = line.split_whitespace();
        let t: f64 = it.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        let k = it.next().and_then(SampleKind::parse).ok_or_else(bad)?;
        if it.next().is_some() {
            return Err(bad());
        }
        targets.push(t);
        kinds.push(k);
    }
    Ok((targets, kinds))
}

pub fn dataset_from_parts(t: Tractogram, labels: &str) -> Result<LabeledStreamlineSet> {
    let (targets, kinds) = labels_from_text(labels)?;
    if targets.len() != t.len() {
        return Err(Error::InvalidInput(format!(
            "{} streamlines but {} labels",
            t.len(),
            targets.len()
        )));
    }
    Ok(LabeledStreamlineSet {
        streamlines: t.streamlines,
        targets,
        kinds,
    })
}

pub fn fit_oracle(
    cfg: &Config,
    set: &LabeledStreamlineSet,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainedOracle> {
    let tc = TrainConfig {
        seed: cfg.seed("oracle"),
        ..cfg.oracle_train.clone()
    };
    train_oracle(&set.streamlines, &set.targets, &cfg.oracle, &tc, on_epoch)
}

pub fn sac_config(cfg: &Config) -> SacConfig {
    SacConfig {
        rng_seed: cfg.seed("agent"),
        ..cfg.sac.clone()
    }
}

pub fn track(
    cfg: &Config,
    tc: &TrackConfig,
    v: &PhantomVolume,
    agent: Option<&Agent>,
    oracle: Option<&OracleModel<f32>>,
) -> Result<TrackResult> {
    match agent {
        Some(a) => track_policy(a, oracle, v, &cfg.env, tc, cfg.seed("track")),
        None => track_baseline(
            v,
            cfg.env.step_size,
            cfg.env.max_angle,
            tc,
            cfg.seed("track"),
        ),
    }
}

fn track_summary(r: &TrackResult) -> serde_json::Value {
    let reasons: BTreeMap<DoneReason, usize> = r.reason_counts().into_iter().collect();
    serde_json::json!({
        "streamlines": r.tractogram.len(),
        "short": r.short.iter().filter(|&&s| s).count(),
        "mean_length": r.tractogram.mean_length(),
        "reasons": reasons,
    })
}

fn oracle_summary(t: &TrainedOracle) -> serde_json::Value {
    serde_json::json!({
        "train": t.train_idx.len(),
        "validation": t.val_idx.len(),
        "trace": t.trace,
    })
}

fn agent_summary(trace: &[EpochTrace]) -> serde_json::Value {
    serde_json::json!({ "trace": trace })
}

fn load_oracle(s: &mut Session, path: Option<&Path>) -> Result<Option<OracleModel<f32>>> {
    match path {
        Some(p) => Ok(Some(OracleModel::from_bytes(&s.read_input("oracle", p)?)?)),
        None if s.config.env.uses_oracle() => Err(Error::Config(
            "env uses the oracle (alpha != 0 or oracle_stop); pass an oracle checkpoint".into(),
        )),
        None => Ok(None),
    }
}

fn load_phantom(s: &mut Session, path: &Path) -> Result<PhantomVolume> {
    read_phantom(&s.read_input("phantom", path)?)
}

pub fn phantom_gen(s: &Session, out: &Path) -> Result<PhantomVolume> {
    let v = build_phantom(&s.config)?;
    s.emit(
        out,
        &write_phantom(&v),
        serde_json::json!({ "dims": v.dims(), "bundles": v.bundles().len() }),
    )?;
    Ok(v)
}

/// Writes the streamlines to `out` and the labels to `labels`.
pub fn oracle_data(
    s: &mut Session,
    phantom: &Path,
    out: &Path,
    labels: &Path,
) -> Result<LabeledStreamlineSet> {
    let v = load_phantom(s, phantom)?;
    let set = build_dataset(&s.config, &v)?;
    let counts: BTreeMap<&str, usize> = set.kinds.iter().fold(BTreeMap::new(), |mut m, k| {
        *m.entry(k.as_str()).or_insert(0) += 1;
        m
    });
    let summary = serde_json::json!({ "streamlines": set.len(), "kinds": counts });
    s.emit(
        out,
        &tractogram_to_bytes(&Tractogram::new(set.streamlines.clone())),
        summary.clone(),
    )?;
    s.emit(labels, labels_to_text(&set).as_bytes(), summary)?;
    Ok(set)
}

pub fn oracle_train(
    s: &mut Session,
    data: &Path,
    labels: &Path,
    out: &Path,
) -> Result<TrainedOracle> {
    let t = crate::tractogram::tractogram_from_bytes(&s.read_input("data", data)?)?;
    let text = String::from_utf8(s.read_input("labels", labels)?).map_err(|_| Error::Format {
        expected: "UTF-8 labels".into(),
        found: "binary data".into(),
    })?;
    let set = dataset_from_parts(t, &text)?;
    let trained = fit_oracle(&s.config, &set, |_| {})?;
    s.emit(out, &trained.model.to_bytes(), oracle_summary(&trained))?;
    Ok(trained)
}

/// Scores every streamline of `input`; returns the text written.
pub fn oracle_score(
    s: &mut Session,
    oracle: &Path,
    input: &Path,
    out: Option<&Path>,
) -> Result<String> {
    let model = OracleModel::<f32>::from_bytes(&s.read_input("oracle", oracle)?)?;
    let t = crate::tractogram::tractogram_from_bytes(&s.read_input("input", input)?)?;
    let scores = model.score_batch(&t.streamlines)?;
    let text = scores_to_text(&scores);
    if let Some(p) = out {
        s.emit(
            p,
            text.as_bytes(),
            serde_json::json!({ "streamlines": t.len() }),
        )?;
    }
    Ok(text)
}

pub fn agent_train(
    s: &mut Session,
    phantom: &Path,
    oracle: Option<&Path>,
    out: &Path,
) -> Result<Agent> {
    let v = load_phantom(s, phantom)?;
    let model = load_oracle(s, oracle)?;
    let sac = sac_config(&s.config);
    let every = s.config.run.checkpoint_every;
    let mut trace_so_far = Vec::new();
    let trained = train_agent(&v, model.as_ref(), &s.config.env, &sac, |t, agent| {
        trace_so_far.push(t.clone());
        if every > 0 && (t.epoch + 1) % every == 0 && t.epoch + 1 < sac.epochs {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(format!(".epoch{}", t.epoch + 1));
            s.emit(
                &out.with_file_name(name),
                &agent.to_bytes(),
                agent_summary(&trace_so_far),
            )?;
        }
        Ok(())
    })?;
    s.emit(
        out,
        &trained.agent.to_bytes(),
        agent_summary(&trained.trace),
    )?;
    Ok(trained.agent)
}

/// Tracks with the agent, or with the peak-following baseline when no
/// agent is given. `vtk` additionally exports the streamlines.
pub fn track_cmd(
    s: &mut Session,
    phantom: &Path,
    agent: Option<&Path>,
    oracle: Option<&Path>,
    out: &Path,
    vtk: Option<&Path>,
) -> Result<TrackResult> {
    let v = load_phantom(s, phantom)?;
    let (agent, model) = match agent {
        Some(p) => {
            let a = Agent::from_bytes(&s.read_input("agent", p)?)?;
            (Some(a), load_oracle(s, oracle)?)
        }
        None => (None, None),
    };
    let r = track(
        &s.config,
        &s.track_config(),
        &v,
        agent.as_ref(),
        model.as_ref(),
    )?;
    s.emit(out, &tractogram_to_bytes(&r.tractogram), track_summary(&r))?;
    if let Some(p) = vtk {
        write_atomic(p, to_vtk(&r.tractogram).as_bytes())?;
    }
    Ok(r)
}

pub fn evaluate_cmd(
    s: &mut Session,
    phantom: &Path,
    input: &Path,
    out: Option<&Path>,
) -> Result<TractometerReport> {
    let v = load_phantom(s, phantom)?;
    let t = crate::tractogram::tractogram_from_bytes(&s.read_input("input", input)?)?;
    let rep = report_with(&v, &t.streamlines, &s.config.eval);
    if let Some(p) = out {
        let json = serde_json::to_vec_pretty(&rep).expect("report serializes");
        s.emit(p, &json, serde_json::Value::Null)?;
    }
    Ok(rep)
}

/// File names the pipeline writes inside its output directory.
pub mod files {
    pub const PHANTOM: &str = "phantom.phv";
    pub const DATA: &str = "data.tsf";
    pub const LABELS: &str = "data.labels";
    pub const ORACLE: &str = "oracle.tnsr";
    pub const AGENT: &str = "agent.tnsr";
    pub const TRACTOGRAM: &str = "tractogram.tsf";
    pub const REPORT: &str = "report.json";
}

/// All stages on one phantom, each reading the previous stage's files
/// back from `dir`.
pub fn run_pipeline(
    config: &Config,
    workers: Option<usize>,
    dir: &Path,
) -> Result<TractometerReport> {
    std::fs::create_dir_all(dir)?;
    let p = |f: &str| dir.join(f);
    let session = |cmd: &str| Session::new(config.clone(), cmd).with_workers(workers);
    phantom_gen(&session("phantom-gen"), &p(files::PHANTOM))?;
    oracle_data(
        &mut session("oracle-data"),
        &p(files::PHANTOM),
        &p(files::DATA),
        &p(files::LABELS),
    )?;
    oracle_train(
        &mut session("oracle-train"),
        &p(files::DATA),
        &p(files::LABELS),
        &p(files::ORACLE),
    )?;
    let oracle = config.env.uses_oracle().then(|| p(files::ORACLE));
    agent_train(
        &mut session("agent-train"),
        &p(files::PHANTOM),
        oracle.as_deref(),
        &p(files::AGENT),
    )?;
    track_cmd(
        &mut session("track"),
        &p(files::PHANTOM),
        Some(&p(files::AGENT)),
        oracle.as_deref(),
        &p(files::TRACTOGRAM),
        None,
    )?;
    evaluate_cmd(
        &mut session("evaluate"),
        &p(files::PHANTOM),
        &p(files::TRACTOGRAM),
        Some(&p(files::REPORT)),
    )
}
